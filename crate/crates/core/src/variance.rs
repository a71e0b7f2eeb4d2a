//! Nonparametric estimators of the variance components (v_x, v_y) in
//! var(θ̂) = v_x/m + v_y/n.

use crate::error::{Error, Result};
use crate::kde::{GaussianKde, NormalScores, SmoothingSpec};
use crate::roc::{self, EmpiricalRoc, GridPiece, WeightMeasure};
use crate::sample::{Marker, PairedSample};

/// Case-side and control-side variance components.
///
/// `sizes` holds the (m, n) used by an empirical estimator, and is `None` for
/// components derived from a parametric model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub v_x: f64,
    pub v_y: f64,
    pub sizes: Option<(usize, usize)>,
    /// Set when a slightly negative estimate was clamped to zero.
    pub clamped: bool,
}

impl VarianceComponents {
    /// Population-level components. Negative values are clamped to zero.
    pub fn new(v_x: f64, v_y: f64) -> Self {
        Self::clamp(v_x, v_y, None)
    }

    pub fn estimated(v_x: f64, v_y: f64, m: usize, n: usize) -> Self {
        Self::clamp(v_x, v_y, Some((m, n)))
    }

    fn clamp(v_x: f64, v_y: f64, sizes: Option<(usize, usize)>) -> Self {
        let clamped = v_x < 0.0 || v_y < 0.0;
        if clamped {
            log::debug!("clamping negative variance components ({v_x:e}, {v_y:e}) at zero");
        }
        Self {
            v_x: v_x.max(0.0),
            v_y: v_y.max(0.0),
            sizes,
            clamped,
        }
    }

    /// v_x/m + v_y/n at the sizes the components were estimated with.
    pub fn implied_variance(&self) -> Option<f64> {
        self.sizes
            .map(|(m, n)| self.v_x / m as f64 + self.v_y / n as f64)
    }

    /// v_x/m + v_y/n at arbitrary arm sizes.
    pub fn variance_at(&self, m: usize, n: usize) -> f64 {
        self.v_x / m as f64 + self.v_y / n as f64
    }

    /// Component-wise mean of several estimates (sizes dropped).
    pub fn average(all: &[VarianceComponents]) -> Option<Self> {
        if all.is_empty() {
            return None;
        }
        let k = all.len() as f64;
        let v_x = all.iter().map(|c| c.v_x).sum::<f64>() / k;
        let v_y = all.iter().map(|c| c.v_y).sum::<f64>() / k;
        Some(Self {
            v_x,
            v_y,
            sizes: None,
            clamped: all.iter().any(|c| c.clamped),
        })
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// DeLong's structural-component estimator for the paired difference of AUCs.
///
/// With V10_ℓi = (1/n) Σ_j ψ(x_ℓi, y_ℓj) and V01_ℓj = (1/m) Σ_i ψ(x_ℓi, y_ℓj),
/// v_x is the (m - 1)-divisor variance of V10_1i - V10_2i and v_y the
/// (n - 1)-divisor variance of V01_1j - V01_2j.
pub fn delong_components(sample: &PairedSample) -> Result<VarianceComponents> {
    sample.require_variance_sizes()?;
    let (m, n) = (sample.m(), sample.n());
    let mut case_diff = vec![0.0; m];
    let mut control_diff = vec![0.0; n];
    for (marker, sign) in [(Marker::First, 1.0), (Marker::Second, -1.0)] {
        let xs = sample.case_values(marker);
        let ys = sample.control_values(marker);
        let sorted_x = sorted(xs.clone());
        let sorted_y = sorted(ys.clone());
        for (d, &x) in case_diff.iter_mut().zip(&xs) {
            *d += sign * roc::placement_count(&sorted_y, x) / n as f64;
        }
        for (d, &y) in control_diff.iter_mut().zip(&ys) {
            // Σ_i ψ(x_i, y) = m - Σ_i ψ(y, x_i)
            *d += sign * (m as f64 - roc::placement_count(&sorted_x, y)) / m as f64;
        }
    }
    Ok(VarianceComponents::estimated(
        sample_variance(&case_diff),
        sample_variance(&control_diff),
        m,
        n,
    ))
}

/// Plug-in estimates of the moment forms of v_x and v_y for the AUC difference.
///
/// Pair-concordance moments use strict inequalities and distinct partners:
/// E[I(X_i > Y_j) I(X_i > Y_l)] with j ≠ l for v_x, and
/// E[I(X_i > Y_j) I(X_k > Y_j)] with i ≠ k for v_y. Means are squared plug-in AUCs.
pub fn auc_moment_components(sample: &PairedSample) -> Result<VarianceComponents> {
    sample.require_variance_sizes()?;
    let (m, n) = (sample.m(), sample.n());
    let cases = sample.cases();
    let controls = sample.controls();

    // below[i][ℓ] = #{j : y_ℓj < x_ℓi}, both[i] = #{j : both markers concordant}
    let mut below = vec![[0u64; 2]; m];
    let mut both_case = vec![0u64; m];
    let mut above = vec![[0u64; 2]; n];
    let mut both_control = vec![0u64; n];
    for (i, x) in cases.iter().enumerate() {
        for (j, y) in controls.iter().enumerate() {
            let c1 = x[0] > y[0];
            let c2 = x[1] > y[1];
            below[i][0] += c1 as u64;
            below[i][1] += c2 as u64;
            above[j][0] += c1 as u64;
            above[j][1] += c2 as u64;
            if c1 && c2 {
                both_case[i] += 1;
                both_control[j] += 1;
            }
        }
    }

    let mn = (m * n) as f64;
    let theta = [0, 1].map(|l| below.iter().map(|c| c[l]).sum::<u64>() as f64 / mn);

    let pairs_x = (n * (n - 1)) as f64;
    let pairs_y = (m * (m - 1)) as f64;
    let moment = |counts: &[[u64; 2]], joint: &[u64], pairs: f64, l: Option<usize>| -> f64 {
        let total: u64 = counts
            .iter()
            .zip(joint)
            .map(|(c, &b)| match l {
                Some(l) => c[l] * c[l] - c[l],
                None => c[0] * c[1] - b,
            })
            .sum();
        total as f64 / (pairs * counts.len() as f64)
    };

    let v_x = (moment(&below, &both_case, pairs_x, Some(0)) - theta[0] * theta[0])
        + (moment(&below, &both_case, pairs_x, Some(1)) - theta[1] * theta[1])
        - 2.0 * (moment(&below, &both_case, pairs_x, None) - theta[0] * theta[1]);
    let v_y = (moment(&above, &both_control, pairs_y, Some(0)) - theta[0] * theta[0])
        + (moment(&above, &both_control, pairs_y, Some(1)) - theta[1] * theta[1])
        - 2.0 * (moment(&above, &both_control, pairs_y, None) - theta[0] * theta[1]);
    Ok(VarianceComponents::estimated(v_x, v_y, m, n))
}

fn require_spread(values: &[f64], what: &str) -> Result<()> {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateDistribution(format!(
            "all {what} values are equal"
        )));
    }
    Ok(())
}

/// Per-marker ingredients of the plug-in influence values.
struct MarkerPlugin {
    roc: EmpiricalRoc,
    pieces: Vec<GridPiece>,
    /// suffix[p] = Σ_{q ≥ p} length_q
    length_suffix: Vec<f64>,
    /// prefix[p] = Σ_{q < p} R̂'_q length_q
    slope_prefix: Vec<f64>,
    /// Σ_q R̂'_q moment_q
    slope_moment: f64,
}

impl MarkerPlugin {
    fn build(
        sample: &PairedSample,
        marker: Marker,
        weight: &WeightMeasure,
        smoothing: &SmoothingSpec,
        need_slopes: bool,
    ) -> Result<Self> {
        let roc = EmpiricalRoc::new(sample, marker)?;
        require_spread(roc.sorted_cases(), "case")?;
        require_spread(roc.sorted_controls(), "control")?;
        let pieces = weight.grid_pieces(roc.sorted_controls().len());

        let mut length_suffix = vec![0.0; pieces.len() + 1];
        for p in (0..pieces.len()).rev() {
            length_suffix[p] = length_suffix[p + 1] + pieces[p].length;
        }

        let mut slope_prefix = vec![0.0; pieces.len() + 1];
        let mut slope_moment = 0.0;
        if need_slopes {
            let scale = NormalScores::new(roc.sorted_cases(), roc.sorted_controls());
            let case_kde = smoothing.kde(&scale.scores(roc.sorted_cases())?)?;
            let control_kde = smoothing.kde(&scale.scores(roc.sorted_controls())?)?;
            for (p, piece) in pieces.iter().enumerate() {
                let slope = roc_slope(&case_kde, &control_kde, scale.score(roc.threshold(piece.rank))?)?;
                slope_prefix[p + 1] = slope_prefix[p] + slope * piece.length;
                slope_moment += slope * piece.moment;
            }
        }
        Ok(Self {
            roc,
            pieces,
            length_suffix,
            slope_prefix,
            slope_moment,
        })
    }

    /// Number of controls ≥ v: the thresholds d_k ≥ v are exactly ranks k < this.
    fn controls_at_or_above(&self, v: f64) -> usize {
        let c = self.roc.sorted_controls();
        c.len() - c.partition_point(|&y| y < v)
    }

    /// First piece whose rank is at least `rank`.
    fn piece_from_rank(&self, rank: usize) -> usize {
        self.pieces.partition_point(|p| p.rank < rank)
    }

    /// ∫ I(x > Ŝ_d̄⁻¹(u)) dW(u).
    fn case_influence(&self, x: f64) -> f64 {
        self.length_suffix[self.piece_from_rank(self.controls_at_or_above(x))]
    }

    /// ∫ R̂'(u) [I(y ≤ Ŝ_d̄⁻¹(u)) - u] dW(u).
    fn control_influence(&self, y: f64) -> f64 {
        self.slope_prefix[self.piece_from_rank(self.controls_at_or_above(y))] - self.slope_moment
    }
}

fn roc_slope(case_kde: &GaussianKde, control_kde: &GaussianKde, threshold: f64) -> Result<f64> {
    let denom = control_kde.density(threshold);
    if denom < 1e-12 {
        return Err(Error::UnstableDerivative {
            threshold,
            density: denom,
        });
    }
    Ok(case_kde.density(threshold) / denom)
}

/// Plug-in variance components of the Δ-statistic for a weight measure.
///
/// v_x is the sample variance of w_i = ∫ [I(x_1i > ĉ_1(u)) - I(x_2i > ĉ_2(u))] dW(u)
/// and v_y that of v_j = ∫ {R̂'_1(u)[I(y_1j ≤ ĉ_1(u)) - u] - R̂'_2(u)[I(y_2j ≤ ĉ_2(u)) - u]} dW(u),
/// with ĉ_ℓ = Ŝ_d̄,ℓ⁻¹ and R̂'_ℓ a ratio of Gaussian kernel densities at ĉ_ℓ(u),
/// both estimated on the pooled normal-score scale of marker ℓ.
/// The integrands are constant on each empirical FPR cell, so the integrals are
/// exact sums over the grid. Centring constants of w_i drop out of the variance.
pub fn delta_components(
    sample: &PairedSample,
    weight: &WeightMeasure,
    smoothing: &SmoothingSpec,
) -> Result<VarianceComponents> {
    weight.validate()?;
    sample.require_variance_sizes()?;
    let first = MarkerPlugin::build(sample, Marker::First, weight, smoothing, true)?;
    let second = MarkerPlugin::build(sample, Marker::Second, weight, smoothing, true)?;
    let w: Vec<f64> = sample
        .cases()
        .iter()
        .map(|x| first.case_influence(x[0]) - second.case_influence(x[1]))
        .collect();
    let v: Vec<f64> = sample
        .controls()
        .iter()
        .map(|y| first.control_influence(y[0]) - second.control_influence(y[1]))
        .collect();
    Ok(VarianceComponents::estimated(
        sample_variance(&w),
        sample_variance(&v),
        sample.m(),
        sample.n(),
    ))
}

/// Variance components for a single marker's summary.
///
/// `FullAuc` uses placement values: v_x = Var̂(Ŝ_d̄(X_i)), v_y = Var̂(Ŝ_d(Y_j)).
/// `PointMass(u0)` uses v_x = R̂(u0)(1 - R̂(u0)) and v_y = R̂'(u0)² u0 (1 - u0).
/// `Partial` uses the one-marker plug-in influence values.
pub fn single_marker_components(
    sample: &PairedSample,
    marker: Marker,
    weight: &WeightMeasure,
    smoothing: &SmoothingSpec,
) -> Result<VarianceComponents> {
    weight.validate()?;
    sample.require_variance_sizes()?;
    let (m, n) = (sample.m(), sample.n());
    match *weight {
        WeightMeasure::FullAuc => {
            let roc = EmpiricalRoc::new(sample, marker)?;
            require_spread(roc.sorted_cases(), "case")?;
            require_spread(roc.sorted_controls(), "control")?;
            let case_placements: Vec<f64> = sample
                .case_values(marker)
                .iter()
                .map(|&x| roc.control_survival(x))
                .collect();
            let control_placements: Vec<f64> = sample
                .control_values(marker)
                .iter()
                .map(|&y| roc.case_survival(y))
                .collect();
            Ok(VarianceComponents::estimated(
                sample_variance(&case_placements),
                sample_variance(&control_placements),
                m,
                n,
            ))
        }
        WeightMeasure::PointMass(u0) => {
            let plugin = MarkerPlugin::build(sample, marker, weight, smoothing, true)?;
            let threshold = plugin.roc.threshold(plugin.pieces[0].rank);
            let sens = plugin.roc.case_survival(threshold);
            let slope = plugin.slope_prefix[1];
            Ok(VarianceComponents::estimated(
                sens * (1.0 - sens),
                slope * slope * u0 * (1.0 - u0),
                m,
                n,
            ))
        }
        WeightMeasure::Partial { .. } => {
            let plugin = MarkerPlugin::build(sample, marker, weight, smoothing, true)?;
            let w: Vec<f64> = sample
                .case_values(marker)
                .iter()
                .map(|&x| plugin.case_influence(x))
                .collect();
            let v: Vec<f64> = sample
                .control_values(marker)
                .iter()
                .map(|&y| plugin.control_influence(y))
                .collect();
            Ok(VarianceComponents::estimated(
                sample_variance(&w),
                sample_variance(&v),
                m,
                n,
            ))
        }
    }
}

/// Which paired comparison the trial analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Difference of tie-corrected AUCs with DeLong's variance.
    DeLong,
    /// Plug-in Δ-statistic for a weight measure.
    Delta(WeightMeasure),
}

impl Estimator {
    pub fn statistic(&self, sample: &PairedSample) -> Result<f64> {
        match self {
            Estimator::DeLong => roc::delong_difference(sample),
            Estimator::Delta(w) => roc::delta_statistic(sample, w),
        }
    }

    pub fn components(
        &self,
        sample: &PairedSample,
        smoothing: &SmoothingSpec,
    ) -> Result<VarianceComponents> {
        match self {
            Estimator::DeLong => delong_components(sample),
            Estimator::Delta(w) => delta_components(sample, w, smoothing),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::DeLong => "delong",
            Estimator::Delta(_) => "delta",
        }
    }
}
