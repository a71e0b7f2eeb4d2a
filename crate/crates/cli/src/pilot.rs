//! Pilot data files: `subject_id,group,marker1,marker2` with one subject per row.

use std::collections::HashSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use optratio::PairedSample;

pub const HEADER: &str = "subject_id,group,marker1,marker2";

pub fn read(path: &Path) -> Result<PairedSample> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("{}", path.display()))
}

pub fn parse(text: &str) -> Result<PairedSample> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let first = text.lines().next().unwrap_or("").trim_end_matches('\r');
    if first != HEADER {
        bail!("line 1: expected header '{HEADER}', found '{first}'");
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut cases = Vec::new();
    let mut controls = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| anyhow!("malformed CSV: {e}"))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 4 {
            bail!("line {line}: expected 4 fields, found {}", record.len());
        }
        let id = record[0].trim();
        if id.is_empty() {
            bail!("line {line}: empty subject_id");
        }
        if !seen.insert(id.to_string()) {
            bail!("line {line}: duplicate subject_id '{id}'");
        }
        let marker = |k: usize| -> Result<f64> {
            let raw = record[k].trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| anyhow!("line {line}: marker{k} '{raw}' is not a finite number", k = k - 1))
        };
        let values = [marker(2)?, marker(3)?];
        match record[1].trim() {
            "case" => cases.push(values),
            "control" => controls.push(values),
            other => bail!("line {line}: group must be 'case' or 'control', found '{other}'"),
        }
    }
    if cases.is_empty() {
        bail!("no case rows");
    }
    if controls.is_empty() {
        bail!("no control rows");
    }
    Ok(PairedSample::new(cases, controls)?)
}
