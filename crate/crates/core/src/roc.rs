//! Empirical ROC summaries for paired two-marker samples.
//!
//! Two families of statistics live here: the tie-corrected (DeLong) AUC built
//! on the kernel ψ, and the plug-in weighted AUC ∫ R̂(u) dW(u), whose difference
//! across markers is the Δ-statistic.
//!
//! The empirical inverse of the control survival function is right-continuous:
//! Ŝ_d̄⁻¹(u) is the smallest threshold c whose false positive rate #{Y > c}/n
//! does not exceed u. With the controls sorted in decreasing order
//! d_0 ≥ d_1 ≥ … ≥ d_{n-1}, this is d_k for k = ⌊n u⌋, and −∞ for u = 1.
//! The plug-in ROC is therefore constant on each FPR cell [k/n, (k+1)/n).

use crate::error::{Error, Result};
use crate::sample::{Marker, PairedSample};

/// Slack used when locating u on the FPR grid, so that n·u = 3 - 1e-15 lands in cell 3.
const GRID_SLACK: f64 = 1e-9;

/// DeLong's kernel: 1 if x > y, 1/2 on a tie, 0 otherwise.
pub fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// Probability measure W(u) on the false positive rate axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMeasure {
    /// W(u) = u on (0, 1): the AUC.
    FullAuc,
    /// Uniform on (lo, hi): the partial AUC over an FPR band.
    Partial { lo: f64, hi: f64 },
    /// Point mass at an FPR: sensitivity at that FPR.
    PointMass(f64),
}

impl WeightMeasure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightMeasure::FullAuc => Ok(()),
            WeightMeasure::Partial { lo, hi } => {
                if (0.0..1.0).contains(&lo) && hi > lo && hi <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "partial FPR range requires 0 <= lo < hi <= 1, got ({lo}, {hi})"
                    )))
                }
            }
            WeightMeasure::PointMass(u0) => {
                if u0 > 0.0 && u0 < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "point-mass FPR requires 0 < u0 < 1, got {u0}"
                    )))
                }
            }
        }
    }

    /// Factor between the normalized wAUC and the reporting scale.
    ///
    /// Partial AUCs are reported as unnormalized areas (a pAUC of 0.30 over
    /// FPR (0, 0.6) is 0.30, not 0.5), so every difference, variance component
    /// and design quantity for a `Partial` weight is on the area scale. The
    /// factor is `hi - lo` for `Partial` and 1 otherwise.
    pub fn mass(&self) -> f64 {
        match *self {
            WeightMeasure::Partial { lo, hi } => hi - lo,
            _ => 1.0,
        }
    }

    /// Decomposes the (area-scale) measure into pieces over the empirical FPR grid
    /// of `n` controls. Piece `k` covers the cell [k/n, (k+1)/n) where the plug-in
    /// threshold is the (k+1)-th largest control value.
    pub(crate) fn grid_pieces(&self, n: usize) -> Vec<GridPiece> {
        let nf = n as f64;
        match *self {
            WeightMeasure::PointMass(u0) => {
                let k = ((nf * u0 + GRID_SLACK).floor() as usize).min(n - 1);
                vec![GridPiece {
                    rank: k,
                    length: 1.0,
                    moment: u0,
                }]
            }
            WeightMeasure::FullAuc | WeightMeasure::Partial { .. } => {
                let (lo, hi) = match *self {
                    WeightMeasure::Partial { lo, hi } => (lo, hi),
                    _ => (0.0, 1.0),
                };
                let first = ((nf * lo + GRID_SLACK).floor() as usize).min(n - 1);
                let mut pieces = Vec::with_capacity(n - first);
                for k in first..n {
                    let a = (k as f64 / nf).max(lo);
                    let b = ((k + 1) as f64 / nf).min(hi);
                    if b <= a {
                        if k as f64 / nf >= hi {
                            break;
                        }
                        continue;
                    }
                    pieces.push(GridPiece {
                        rank: k,
                        length: b - a,
                        moment: 0.5 * (b * b - a * a),
                    });
                }
                pieces
            }
        }
    }
}

/// One cell of the empirical FPR grid carrying weight.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GridPiece {
    /// k: the threshold is the (k+1)-th largest control value.
    pub rank: usize,
    /// ∫ dW over the cell.
    pub length: f64,
    /// ∫ u dW(u) over the cell.
    pub moment: f64,
}

/// Step-function view of one marker's case and control survival functions.
#[derive(Debug, Clone)]
pub struct EmpiricalRoc {
    marker: Marker,
    cases: Vec<f64>,
    controls: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of `sorted` strictly greater than `c`.
fn survival(sorted: &[f64], c: f64) -> f64 {
    let above = sorted.len() - sorted.partition_point(|&v| v <= c);
    above as f64 / sorted.len() as f64
}

impl EmpiricalRoc {
    pub fn new(sample: &PairedSample, marker: Marker) -> Result<Self> {
        sample.require_nonempty()?;
        Ok(Self {
            marker,
            cases: sorted(sample.case_values(marker)),
            controls: sorted(sample.control_values(marker)),
        })
    }

    pub fn marker(&self) -> Marker {
        self.marker
    }

    /// Case values, ascending.
    pub fn sorted_cases(&self) -> &[f64] {
        &self.cases
    }

    /// Control values, ascending.
    pub fn sorted_controls(&self) -> &[f64] {
        &self.controls
    }

    /// Ŝ_d(c): empirical sensitivity at threshold c.
    pub fn case_survival(&self, c: f64) -> f64 {
        survival(&self.cases, c)
    }

    /// Ŝ_d̄(c): empirical false positive rate at threshold c.
    pub fn control_survival(&self, c: f64) -> f64 {
        survival(&self.controls, c)
    }

    /// Ŝ_d̄⁻¹(u), right-continuous. Returns −∞ for u = 1 (every control exceeds it).
    pub fn control_inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidProbability(u));
        }
        let n = self.controls.len();
        let k = (n as f64 * u + GRID_SLACK).floor() as usize;
        Ok(if k >= n {
            f64::NEG_INFINITY
        } else {
            self.threshold(k)
        })
    }

    /// R̂(u) = Ŝ_d(Ŝ_d̄⁻¹(u)).
    pub fn sensitivity_at(&self, u: f64) -> Result<f64> {
        Ok(self.case_survival(self.control_inverse(u)?))
    }

    /// The (k+1)-th largest control value.
    pub(crate) fn threshold(&self, k: usize) -> f64 {
        self.controls[self.controls.len() - 1 - k]
    }

    /// Distinct thresholds in increasing order with (Ŝ_d, Ŝ_d̄) evaluated at each.
    pub fn steps(&self) -> Vec<(f64, f64, f64)> {
        let mut all: Vec<f64> = self.cases.iter().chain(&self.controls).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all.into_iter()
            .map(|c| (c, self.case_survival(c), self.control_survival(c)))
            .collect()
    }

    /// ∫ R̂(u) dW(u) on the reporting scale (unnormalized for partial weights).
    pub fn weighted_area(&self, weight: &WeightMeasure) -> Result<f64> {
        weight.validate()?;
        if let WeightMeasure::FullAuc = weight {
            let count: usize = self
                .controls
                .iter()
                .map(|&y| self.cases.len() - self.cases.partition_point(|&x| x <= y))
                .sum();
            return Ok(count as f64 / (self.cases.len() as f64 * self.controls.len() as f64));
        }
        Ok(weight
            .grid_pieces(self.controls.len())
            .iter()
            .map(|p| p.length * self.case_survival(self.threshold(p.rank)))
            .sum())
    }

    /// True if any value is shared between arms or repeated within the controls.
    pub fn has_ties(&self) -> bool {
        let dup = |v: &[f64]| v.windows(2).any(|w| w[0] == w[1]);
        if dup(&self.controls) {
            return true;
        }
        self.cases
            .iter()
            .any(|&x| self.controls.binary_search_by(|y| y.total_cmp(&x)).is_ok())
    }
}

/// Tie-corrected AUC: (1/mn) ΣΣ ψ(x_i, y_j) for one marker.
pub fn auc_tie_corrected(sample: &PairedSample, marker: Marker) -> Result<f64> {
    sample.require_nonempty()?;
    let controls = sorted(sample.control_values(marker));
    let total: f64 = sample
        .case_values(marker)
        .iter()
        .map(|&x| placement_count(&controls, x))
        .sum();
    Ok(total / (sample.m() as f64 * sample.n() as f64))
}

/// Σ_j ψ(x, y_j) over ascending `controls`: #{y < x} + #{y = x}/2.
pub(crate) fn placement_count(controls: &[f64], x: f64) -> f64 {
    let below = controls.partition_point(|&y| y < x);
    let not_above = controls.partition_point(|&y| y <= x);
    below as f64 + 0.5 * (not_above - below) as f64
}

/// DeLong's paired difference of tie-corrected AUCs, marker 1 minus marker 2.
pub fn delong_difference(sample: &PairedSample) -> Result<f64> {
    Ok(auc_tie_corrected(sample, Marker::First)? - auc_tie_corrected(sample, Marker::Second)?)
}

/// Empirical ROC step representation for one marker.
pub fn empirical_roc(sample: &PairedSample, marker: Marker) -> Result<EmpiricalRoc> {
    EmpiricalRoc::new(sample, marker)
}

/// Plug-in weighted AUC for a marker, normalized so that W is a probability measure.
///
/// `FullAuc` equals the strict pairwise count (1/mn) ΣΣ I(x_i > y_j);
/// `Partial` is the area over (lo, hi) divided by hi - lo;
/// `PointMass` is the empirical sensitivity at the empirical threshold.
pub fn wauc(sample: &PairedSample, weight: &WeightMeasure, marker: Marker) -> Result<f64> {
    let roc = EmpiricalRoc::new(sample, marker)?;
    Ok(roc.weighted_area(weight)? / weight.mass())
}

/// The summary Ω̂ on the reporting scale: the partial area for `Partial`, the wAUC otherwise.
pub fn weighted_summary(sample: &PairedSample, weight: &WeightMeasure, marker: Marker) -> Result<f64> {
    EmpiricalRoc::new(sample, marker)?.weighted_area(weight)
}

/// Δ̂ = Ω̂_1 - Ω̂_2 on the reporting scale.
///
/// The plug-in statistic assumes continuous markers. Ties are logged and the
/// step functions are used as they stand.
pub fn delta_statistic(sample: &PairedSample, weight: &WeightMeasure) -> Result<f64> {
    let first = EmpiricalRoc::new(sample, Marker::First)?;
    let second = EmpiricalRoc::new(sample, Marker::Second)?;
    if first.has_ties() || second.has_ties() {
        log::warn!("tied marker values: the plug-in Δ-statistic assumes continuous data");
    }
    Ok(first.weighted_area(weight)? - second.weighted_area(weight)?)
}
