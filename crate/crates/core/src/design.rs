//! Optimal ratios, sample sizes, power and the final Z-test.

use crate::error::{Error, Result};
use crate::kde::SmoothingSpec;
use crate::normal;
use crate::sample::PairedSample;
use crate::variance::{Estimator, VarianceComponents};

/// Significance level, target power, alternative and optional budget or costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    /// Significance level; two-sided unless `one_sided` is set.
    pub alpha: f64,
    /// Target power 1 - β, needed when solving for sample size.
    pub power: Option<f64>,
    /// Difference Δ1 to detect.
    pub delta1: f64,
    pub total_n: Option<usize>,
    /// (cost per case, cost per control).
    pub costs: Option<(f64, f64)>,
    pub one_sided: bool,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            power: Some(0.80),
            delta1: 0.05,
            total_n: None,
            costs: None,
            one_sided: false,
        }
    }
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidProbability(self.alpha));
        }
        if let Some(p) = self.power {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidProbability(p));
            }
            if self.alpha + (1.0 - p) >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha {} with power {p} leaves no room for a test",
                    self.alpha
                )));
            }
        }
        if !self.delta1.is_finite() {
            return Err(Error::InvalidParameter("delta1 must be finite".into()));
        }
        if let Some(n) = self.total_n {
            if n < 4 {
                return Err(Error::InvalidParameter(format!("total N must be at least 4, got {n}")));
            }
        }
        if let Some((c1, c2)) = self.costs {
            check_costs(c1, c2)?;
        }
        Ok(())
    }

    /// z_{α/2}, or z_α for a one-sided design.
    pub fn critical_value(&self) -> Result<f64> {
        if self.one_sided {
            normal::quantile(1.0 - self.alpha)
        } else {
            normal::two_sided_critical(self.alpha)
        }
    }
}

fn check_costs(c1: f64, c2: f64) -> Result<()> {
    if !(c1 > 0.0 && c1.is_finite() && c2 > 0.0 && c2.is_finite()) {
        return Err(Error::InvalidCost(format!(
            "unit costs must be positive, got case {c1}, control {c2}"
        )));
    }
    Ok(())
}

/// Case:control ratio r* = √(v_x/v_y) minimizing the total size at fixed variance.
pub fn optimal_ratio(comp: &VarianceComponents) -> Result<f64> {
    if !(comp.v_y > 0.0) {
        return Err(Error::ControlVarianceZero);
    }
    if comp.v_x == 0.0 {
        log::warn!("case-side variance is zero; optimal ratio is 0");
    }
    Ok((comp.v_x / comp.v_y).sqrt())
}

/// Ratio r_c* = √(c2·v_x / (c1·v_y)) minimizing total cost c1·m + c2·n.
pub fn cost_optimal_ratio(comp: &VarianceComponents, c1: f64, c2: f64) -> Result<f64> {
    check_costs(c1, c2)?;
    Ok(optimal_ratio(comp)? * (c2 / c1).sqrt())
}

/// Sample sizes solved from the target power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizePlan {
    pub cases: usize,
    pub controls: usize,
    pub total: usize,
    /// Unrounded m0 = (z_{α/2} + z_β)²(v_x + r v_y)/Δ1².
    pub cases_exact: f64,
    /// Unrounded n0 = m0/r.
    pub controls_exact: f64,
}

impl SizePlan {
    pub fn total_exact(&self) -> f64 {
        self.cases_exact + self.controls_exact
    }
}

/// Splits a total into cases = round(N·r/(1+r)) and controls = N - cases.
pub fn split_total(total: usize, ratio: f64) -> (usize, usize) {
    let cases = (total as f64 * ratio / (1.0 + ratio)).round() as usize;
    let cases = cases.min(total);
    (cases, total - cases)
}

/// Sizes achieving the target power at case:control ratio `ratio`.
///
/// The total is the ceiling of m0 + n0 and is split by `split_total`.
pub fn required_sizes(comp: &VarianceComponents, ratio: f64, params: &DesignParams) -> Result<SizePlan> {
    params.validate()?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("ratio must be positive, got {ratio}")));
    }
    if params.delta1 == 0.0 {
        return Err(Error::NoAlternative);
    }
    let power = params
        .power
        .ok_or_else(|| Error::InvalidParameter("target power required for sample size".into()))?;
    let spread = comp.v_x + ratio * comp.v_y;
    if !(spread > 0.0) {
        return Err(Error::VarianceZero);
    }
    let z = params.critical_value()? + normal::quantile(power)?;
    let cases_exact = z * z * spread / (params.delta1 * params.delta1);
    let controls_exact = cases_exact / ratio;
    // guard against 292.0000000001-style float noise before taking the ceiling
    let total = ((cases_exact + controls_exact) * (1.0 - 1e-12)).ceil() as usize;
    let (cases, controls) = split_total(total, ratio);
    Ok(SizePlan {
        cases,
        controls,
        total,
        cases_exact,
        controls_exact,
    })
}

/// Power Φ(|Δ1|·√(N r / ((1+r)(v_x + v_y r))) - z) at total size N.
pub fn power_at(comp: &VarianceComponents, ratio: f64, total: usize, params: &DesignParams) -> Result<f64> {
    if total < 2 {
        return Err(Error::InvalidParameter(format!("total N must be at least 2, got {total}")));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("ratio must be positive, got {ratio}")));
    }
    let spread = comp.v_x + comp.v_y * ratio;
    if !(spread > 0.0) {
        return Err(Error::VarianceZero);
    }
    let n = total as f64;
    let shift = params.delta1.abs() * (n * ratio / ((1.0 + ratio) * spread)).sqrt();
    Ok(normal::cdf(shift - params.critical_value()?))
}

/// Outcome of the end-of-trial test on the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalTest {
    pub reject: bool,
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub statistic: f64,
    pub components: VarianceComponents,
    /// The estimated variance was zero with a zero statistic; reported as non-rejection.
    pub degenerate: bool,
}

/// Z = Δ̂ / √(v̂_x/m + v̂_y/n) on all data, rejecting when |Z| ≥ z_{α/2}.
pub fn final_test(
    sample: &PairedSample,
    estimator: &Estimator,
    smoothing: &SmoothingSpec,
    alpha: f64,
) -> Result<FinalTest> {
    let critical = normal::two_sided_critical(alpha)?;
    let statistic = estimator.statistic(sample)?;
    let components = estimator.components(sample, smoothing)?;
    let variance = components.variance_at(sample.m(), sample.n());
    if !(variance > 0.0) {
        if statistic == 0.0 {
            return Ok(FinalTest {
                reject: false,
                z: 0.0,
                p: 1.0,
                statistic,
                components,
                degenerate: true,
            });
        }
        return Err(Error::CannotStandardize(format!(
            "zero estimated variance with statistic {statistic}"
        )));
    }
    let z = statistic / variance.sqrt();
    Ok(FinalTest {
        reject: z.abs() >= critical,
        z,
        p: 2.0 * normal::sf(z.abs()),
        statistic,
        components,
        degenerate: false,
    })
}
