use crate::error::{Error, Result};

/// Which of the two paired markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    First,
    Second,
}

impl Marker {
    pub const BOTH: [Marker; 2] = [Marker::First, Marker::Second];

    pub fn index(self) -> usize {
        match self {
            Marker::First => 0,
            Marker::Second => 1,
        }
    }
}

/// Paired two-marker measurements on cases (diseased) and controls (non-diseased).
///
/// Each case and each control carries one value per marker. Values are finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSample {
    cases: Vec<[f64; 2]>,
    controls: Vec<[f64; 2]>,
}

impl PairedSample {
    pub fn new(cases: Vec<[f64; 2]>, controls: Vec<[f64; 2]>) -> Result<Self> {
        for (arm, rows) in [("case", &cases), ("control", &controls)] {
            if let Some(i) = rows.iter().position(|r| !(r[0].is_finite() && r[1].is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "{arm} {i} has a non-finite marker value"
                )));
            }
        }
        Ok(Self { cases, controls })
    }

    /// Builds a sample from per-marker columns.
    pub fn from_columns(
        case_m1: &[f64],
        case_m2: &[f64],
        control_m1: &[f64],
        control_m2: &[f64],
    ) -> Result<Self> {
        if case_m1.len() != case_m2.len() || control_m1.len() != control_m2.len() {
            return Err(Error::InvalidParameter(
                "marker columns within an arm must have equal length".into(),
            ));
        }
        Self::new(
            case_m1.iter().zip(case_m2).map(|(&a, &b)| [a, b]).collect(),
            control_m1.iter().zip(control_m2).map(|(&a, &b)| [a, b]).collect(),
        )
    }

    pub fn cases(&self) -> &[[f64; 2]] {
        &self.cases
    }

    pub fn controls(&self) -> &[[f64; 2]] {
        &self.controls
    }

    /// Number of cases, m.
    pub fn m(&self) -> usize {
        self.cases.len()
    }

    /// Number of controls, n.
    pub fn n(&self) -> usize {
        self.controls.len()
    }

    pub fn total(&self) -> usize {
        self.m() + self.n()
    }

    pub fn case_values(&self, marker: Marker) -> Vec<f64> {
        self.cases.iter().map(|r| r[marker.index()]).collect()
    }

    pub fn control_values(&self, marker: Marker) -> Vec<f64> {
        self.controls.iter().map(|r| r[marker.index()]).collect()
    }

    /// Appends another sample's subjects (stage-2 accruals onto stage 1).
    pub fn extend(&mut self, other: &PairedSample) {
        self.cases.extend_from_slice(&other.cases);
        self.controls.extend_from_slice(&other.controls);
    }

    /// Cases and controls swapped.
    pub fn swap_arms(&self) -> Self {
        Self {
            cases: self.controls.clone(),
            controls: self.cases.clone(),
        }
    }

    /// Applies `f` to every value of `marker` in both arms.
    pub fn map_marker(&self, marker: Marker, f: impl Fn(f64) -> f64) -> Self {
        let k = marker.index();
        let apply = |rows: &[[f64; 2]]| {
            rows.iter()
                .map(|r| {
                    let mut r = *r;
                    r[k] = f(r[k]);
                    r
                })
                .collect()
        };
        Self {
            cases: apply(&self.cases),
            controls: apply(&self.controls),
        }
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.m() == 0 || self.n() == 0 {
            return Err(Error::InsufficientData(format!(
                "need at least one case and one control, got m = {}, n = {}",
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_variance_sizes(&self) -> Result<()> {
        if self.m() < 2 || self.n() < 2 {
            return Err(Error::InsufficientForVariance {
                m: self.m(),
                n: self.n(),
            });
        }
        Ok(())
    }
}
