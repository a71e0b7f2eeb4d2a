//! Gaussian kernel density estimates used for ROC-derivative plug-ins.

use crate::error::{Error, Result};
use crate::normal;

/// Kernels further than this many bandwidths away contribute below 1e-17.
const KERNEL_REACH: f64 = 9.0;

/// Bandwidth policy for the ROC-derivative estimate R̂'(u) = f̂_d(c)/f̂_d̄(c).
///
/// The kernel is always Gaussian. Without an override, each arm of each marker
/// gets its own Silverman rule-of-thumb bandwidth on the pooled normal-score scale.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmoothingSpec {
    pub bandwidth: Option<f64>,
}

impl SmoothingSpec {
    pub fn silverman() -> Self {
        Self { bandwidth: None }
    }

    pub fn fixed(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            bandwidth: Some(bandwidth),
        })
    }

    pub(crate) fn kde(&self, values: &[f64]) -> Result<GaussianKde> {
        match self.bandwidth {
            Some(h) => GaussianKde::with_bandwidth(values, h),
            None => GaussianKde::silverman(values),
        }
    }
}

/// Linear-interpolation sample quantile of ascending data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb: 0.9 · min(sd, IQR/1.34) · n^(-1/5).
///
/// Falls back to the standard deviation when the IQR collapses.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "bandwidth needs at least two values, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateDistribution(
            "all values in an arm are equal".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Pooled normal scores Φ⁻¹(midrank / (N + 1)) of one marker.
#[derive(Debug, Clone)]
pub struct NormalScores {
    pooled: Vec<f64>,
}

impl NormalScores {
    pub fn new(cases: &[f64], controls: &[f64]) -> Self {
        let mut pooled: Vec<f64> = cases.iter().chain(controls).copied().collect();
        pooled.sort_by(f64::total_cmp);
        Self { pooled }
    }

    pub fn score(&self, v: f64) -> Result<f64> {
        let below = self.pooled.partition_point(|&p| p < v);
        let not_above = self.pooled.partition_point(|&p| p <= v);
        let midrank = 0.5 * (below + not_above + 1) as f64;
        normal::quantile(midrank / (self.pooled.len() + 1) as f64)
    }

    pub fn scores(&self, values: &[f64]) -> Result<Vec<f64>> {
        values.iter().map(|&v| self.score(v)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianKde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    pub fn silverman(values: &[f64]) -> Result<Self> {
        let h = silverman_bandwidth(values)?;
        Self::with_bandwidth(values, h)
    }

    pub fn with_bandwidth(values: &[f64], bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("density estimate of an empty arm".into()));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < x - KERNEL_REACH * h);
        let hi = self.sorted.partition_point(|&v| v <= x + KERNEL_REACH * h);
        let sum: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&v| normal::pdf((x - v) / h))
            .sum();
        sum / (self.sorted.len() as f64 * h)
    }
}
