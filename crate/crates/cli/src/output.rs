//! Key/value reports printed as aligned text or as one JSON object.

use serde_json::{Map, Value};

#[derive(Default)]
pub struct Report {
    entries: Vec<(String, String, Value)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        let value = value.into();
        self.entries.push((key.into(), value.clone(), Value::String(value)));
        self
    }

    pub fn num(&mut self, key: &str, value: f64, decimals: usize) -> &mut Self {
        self.entries
            .push((key.into(), format!("{value:.decimals$}"), serde_json::json!(value)));
        self
    }

    pub fn int(&mut self, key: &str, value: usize) -> &mut Self {
        self.entries.push((key.into(), value.to_string(), serde_json::json!(value)));
        self
    }

    pub fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        self.entries.push((key.into(), value.to_string(), Value::Bool(value)));
        self
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (key, _, value) in &self.entries {
            map.insert(key.clone(), value.clone());
        }
        Value::Object(map)
    }

    pub fn print(&self, json: bool) {
        if json {
            println!("{}", serde_json::to_string_pretty(&self.to_json()).expect("JSON values serialize"));
            return;
        }
        let width = self.entries.iter().map(|e| e.0.len()).max().unwrap_or(0);
        for (key, text, _) in &self.entries {
            println!("{key:<width$} = {text}");
        }
    }
}
