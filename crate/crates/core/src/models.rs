//! Parametric two-marker models: binormal, bilognormal and the
//! Farlie–Gumbel–Morgenstern bivariate exponential.
//!
//! Theoretical variance components are evaluated in threshold space. With
//! u = S̄(c), dW(u) = du becomes f̄(c) dc and R'(u) du becomes f(c) dc, so every
//! integrand is bounded and smooth and no ROC derivative has to be handled
//! near its singular end points.

use std::cell::RefCell;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::normal;
use crate::numeric;
use crate::roc::WeightMeasure;
use crate::sample::PairedSample;
use crate::variance::VarianceComponents;

const OUTER_TOL: f64 = 1e-10;
const INNER_TOL: f64 = 1e-12;
const CALIBRATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Bivariate normal cases N((μ1, μ2), Σ) and controls N((0, 0), Σ), unit variances.
    Binormal,
    /// exp() of the binormal pairs.
    Bilognormal,
    /// Exponential margins joined by an FGM copula with θ = 4ρ.
    #[serde(alias = "biexp")]
    BiExponential,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Binormal => "BN",
            Family::Bilognormal => "LN",
            Family::BiExponential => "BE",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binormal" | "bn" => Ok(Family::Binormal),
            "bilognormal" | "ln" => Ok(Family::Bilognormal),
            "biexponential" | "biexp" | "be" => Ok(Family::BiExponential),
            other => Err(Error::InvalidParameter(format!("unknown model family '{other}'"))),
        }
    }
}

/// A fully parameterized generative model.
///
/// For the normal families `case_params` are the case means and
/// `control_params` the control means (zero in the standard setup). For the
/// exponential family they are the exponential rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub case_params: [f64; 2],
    pub control_params: [f64; 2],
    pub rho: f64,
}

/// One-dimensional marginal law on the threshold axis.
#[derive(Debug, Clone, Copy)]
enum Law {
    Normal { mean: f64 },
    Exponential { rate: f64 },
}

impl Law {
    fn survival(&self, c: f64) -> f64 {
        match *self {
            Law::Normal { mean } => normal::sf(c - mean),
            Law::Exponential { rate } => {
                if c <= 0.0 {
                    1.0
                } else {
                    (-rate * c).exp()
                }
            }
        }
    }

    fn density(&self, c: f64) -> f64 {
        match *self {
            Law::Normal { mean } => normal::pdf(c - mean),
            Law::Exponential { rate } => {
                if c < 0.0 {
                    0.0
                } else {
                    rate * (-rate * c).exp()
                }
            }
        }
    }

    /// Threshold with survival u; infinite at the ends.
    fn inverse_survival(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::INFINITY;
        }
        if u >= 1.0 {
            return match *self {
                Law::Normal { .. } => f64::NEG_INFINITY,
                Law::Exponential { .. } => 0.0,
            };
        }
        match *self {
            Law::Normal { mean } => mean - normal::quantile(u).expect("u in (0, 1)"),
            Law::Exponential { rate } => -u.ln() / rate,
        }
    }

    /// Interval outside which the law has negligible mass (< 1e-17).
    fn effective_support(&self) -> (f64, f64) {
        match *self {
            Law::Normal { mean } => (mean - 9.0, mean + 9.0),
            Law::Exponential { rate } => (0.0, 40.0 / rate),
        }
    }
}

impl ModelSpec {
    pub fn binormal(case_means: [f64; 2], rho: f64) -> Result<Self> {
        Self::new(Family::Binormal, case_means, [0.0, 0.0], rho)
    }

    pub fn bilognormal(case_means: [f64; 2], rho: f64) -> Result<Self> {
        Self::new(Family::Bilognormal, case_means, [0.0, 0.0], rho)
    }

    /// FGM bivariate exponential with unit case rates, as in the standard setup.
    pub fn biexponential(control_rates: [f64; 2], rho: f64) -> Result<Self> {
        Self::new(Family::BiExponential, [1.0, 1.0], control_rates, rho)
    }

    pub fn new(family: Family, case_params: [f64; 2], control_params: [f64; 2], rho: f64) -> Result<Self> {
        let spec = Self {
            family,
            case_params,
            control_params,
            rho,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .case_params
            .iter()
            .chain(&self.control_params)
            .all(|v| v.is_finite());
        if !finite || !self.rho.is_finite() {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        match self.family {
            Family::Binormal | Family::Bilognormal => {
                if !(self.rho > -1.0 && self.rho < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "normal-family correlation must lie in (-1, 1), got {}",
                        self.rho
                    )));
                }
            }
            Family::BiExponential => {
                if self.rho.abs() > 0.25 {
                    return Err(Error::InvalidParameter(format!(
                        "FGM exponential correlation must lie in [-0.25, 0.25], got {}",
                        self.rho
                    )));
                }
                if self.case_params.iter().chain(&self.control_params).any(|&r| r <= 0.0) {
                    return Err(Error::InvalidParameter("exponential rates must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.family, self.case_params, self.control_params, rho)
    }

    fn case_law(&self, marker: usize) -> Law {
        match self.family {
            Family::Binormal | Family::Bilognormal => Law::Normal {
                mean: self.case_params[marker],
            },
            Family::BiExponential => Law::Exponential {
                rate: self.case_params[marker],
            },
        }
    }

    fn control_law(&self, marker: usize) -> Law {
        match self.family {
            Family::Binormal | Family::Bilognormal => Law::Normal {
                mean: self.control_params[marker],
            },
            Family::BiExponential => Law::Exponential {
                rate: self.control_params[marker],
            },
        }
    }

    fn joint_survival(&self, laws: [Law; 2], c1: f64, c2: f64) -> f64 {
        match (laws[0], laws[1]) {
            (Law::Normal { mean: m1 }, Law::Normal { mean: m2 }) => {
                normal::bvn_upper(c1 - m1, c2 - m2, self.rho)
            }
            _ => {
                // FGM is radially symmetric, so the copula applies to survival values
                let s1 = laws[0].survival(c1);
                let s2 = laws[1].survival(c2);
                s1 * s2 * (1.0 + 4.0 * self.rho * (1.0 - s1) * (1.0 - s2))
            }
        }
    }

    /// P(X_1 > c1, X_2 > c2) for a case.
    pub fn case_joint_survival(&self, c1: f64, c2: f64) -> f64 {
        self.joint_survival([self.case_law(0), self.case_law(1)], c1, c2)
    }

    /// P(Y_1 > c1, Y_2 > c2) for a control.
    pub fn control_joint_survival(&self, c1: f64, c2: f64) -> f64 {
        self.joint_survival([self.control_law(0), self.control_law(1)], c1, c2)
    }

    /// R_ℓ(u) = S_d,ℓ(S_d̄,ℓ⁻¹(u)) on the threshold scale of the normal or exponential margins.
    pub fn roc(&self, marker: usize, u: f64) -> f64 {
        let c = self.control_law(marker).inverse_survival(u);
        self.case_law(marker).survival(c)
    }

    /// R'_ℓ(u) = f_d,ℓ(c) / f_d̄,ℓ(c) at c = S_d̄,ℓ⁻¹(u).
    pub fn roc_slope(&self, marker: usize, u: f64) -> f64 {
        let c = self.control_law(marker).inverse_survival(u);
        self.case_law(marker).density(c) / self.control_law(marker).density(c)
    }

    /// Threshold interval [a, b] carrying the weight for one marker, clipped to
    /// where the case and control laws have mass.
    fn threshold_range(&self, marker: usize, lo: f64, hi: f64) -> (f64, f64) {
        let control = self.control_law(marker);
        let (s1, e1) = control.effective_support();
        let (s2, e2) = self.case_law(marker).effective_support();
        let a = control.inverse_survival(hi).max(s1.min(s2));
        let b = control.inverse_survival(lo).min(e1.max(e2));
        (a, b.max(a))
    }

    /// Population summary Ω_ℓ on the reporting scale (area for partial weights).
    pub fn summary(&self, weight: &WeightMeasure, marker: usize) -> Result<f64> {
        weight.validate()?;
        match *weight {
            WeightMeasure::PointMass(u0) => Ok(self.roc(marker, u0)),
            WeightMeasure::FullAuc | WeightMeasure::Partial { .. } => {
                let (lo, hi) = band(weight);
                let (a, b) = self.threshold_range(marker, lo, hi);
                let case = self.case_law(marker);
                let control = self.control_law(marker);
                numeric::integrate(|c| case.survival(c) * control.density(c), a, b, INNER_TOL)
            }
        }
    }

    /// Draws `m` case pairs.
    pub fn sample_cases<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..m).map(|_| self.draw(self.case_params, rng)).collect()
    }

    /// Draws `n` control pairs.
    pub fn sample_controls<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..n).map(|_| self.draw(self.control_params, rng)).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, params: [f64; 2], rng: &mut R) -> [f64; 2] {
        match self.family {
            Family::Binormal | Family::Bilognormal => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let x1 = params[0] + z1;
                let x2 = params[1] + self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2;
                if self.family == Family::Bilognormal {
                    [x1.exp(), x2.exp()]
                } else {
                    [x1, x2]
                }
            }
            Family::BiExponential => {
                let theta = 4.0 * self.rho;
                // uniforms on (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let w = 1.0 - rng.random::<f64>();
                // solve v[1 + θ(1-v)(1-2u)] = w on [0, 1]: a v² - b v + w = 0 with
                // a = θ(1-2u), b = 1 + a. The root (b - √(b² - 4aw))/(2a) is written in
                // its conjugate form, which is continuous at a = 0 (where it equals w).
                let a = theta * (1.0 - 2.0 * u);
                let b = 1.0 + a;
                let v = if a.abs() < 1e-10 {
                    w
                } else {
                    2.0 * w / (b + (b * b - 4.0 * a * w).max(0.0).sqrt())
                };
                [-u.ln() / params[0], -v.ln() / params[1]]
            }
        }
    }
}

fn band(weight: &WeightMeasure) -> (f64, f64) {
    match *weight {
        WeightMeasure::Partial { lo, hi } => (lo, hi),
        _ => (0.0, 1.0),
    }
}

/// Draws an i.i.d. paired sample: `m` cases, then `n` controls from the same stream.
pub fn sample<R: Rng + ?Sized>(model: &ModelSpec, m: usize, n: usize, rng: &mut R) -> PairedSample {
    let cases = model.sample_cases(m, rng);
    let controls = model.sample_controls(n, rng);
    PairedSample::new(cases, controls).expect("model draws are finite")
}

/// Nested adaptive integration of g(c1, c2) over a rectangle.
fn integrate_2d<G: Fn(f64, f64) -> f64>(g: G, (a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let outer = numeric::integrate(
        |c1| match numeric::integrate(|c2| g(c1, c2), a2, b2, INNER_TOL) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        a1,
        b1,
        OUTER_TOL,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    outer
}

/// Population variance components (v_x, v_y) of the Δ-statistic under a model,
/// on the reporting scale of `weight`.
///
/// v_x = Σ_ℓ ∫∫ [R_ℓ(s∧t) - R_ℓ(s)R_ℓ(t)] dW dW - 2 ∫∫ [S_d(c_1(s), c_2(t)) - R_1(s)R_2(t)] dW dW
/// v_y = Σ_ℓ ∫∫ R'_ℓ(s)R'_ℓ(t)[s∧t - st] dW dW - 2 ∫∫ R'_1(s)R'_2(t)[S_d̄(c_1(s), c_2(t)) - st] dW dW
///
/// For `FullAuc` these equal the moment forms of DeLong's components.
/// Bilognormal components coincide with binormal ones.
pub fn theoretical_components(model: &ModelSpec, weight: &WeightMeasure) -> Result<VarianceComponents> {
    model.validate()?;
    weight.validate()?;
    let case = [model.case_law(0), model.case_law(1)];
    let control = [model.control_law(0), model.control_law(1)];

    if let WeightMeasure::PointMass(u0) = *weight {
        let c = [0, 1].map(|l| control[l].inverse_survival(u0));
        let r = [0, 1].map(|l| case[l].survival(c[l]));
        let slope = [0, 1].map(|l| case[l].density(c[l]) / control[l].density(c[l]));
        let a = model.case_joint_survival(c[0], c[1]) - r[0] * r[1];
        let b = slope[0] * slope[1] * (model.control_joint_survival(c[0], c[1]) - u0 * u0);
        let v_x = r.iter().map(|r| r * (1.0 - r)).sum::<f64>() - 2.0 * a;
        let v_y = slope.iter().map(|s| s * s * u0 * (1.0 - u0)).sum::<f64>() - 2.0 * b;
        return Ok(VarianceComponents::new(v_x, v_y));
    }

    let (lo, hi) = band(weight);
    let ranges = [0, 1].map(|l| model.threshold_range(l, lo, hi));

    let mut v_x = 0.0;
    let mut v_y = 0.0;
    for l in 0..2 {
        let (a, b) = ranges[l];
        let (case, control) = (case[l], control[l]);
        let mass_control = control.survival(a);
        let mass_case = case.survival(a);
        let area = numeric::integrate(|c| case.survival(c) * control.density(c), a, b, INNER_TOL)?;
        let nested = 2.0
            * numeric::integrate(
                |c| case.survival(c) * control.density(c) * (mass_control - control.survival(c)),
                a,
                b,
                INNER_TOL,
            )?;
        v_x += nested - area * area;

        let moment = numeric::integrate(|c| case.density(c) * control.survival(c), a, b, INNER_TOL)?;
        let nested = 2.0
            * numeric::integrate(
                |c| case.density(c) * control.survival(c) * (mass_case - case.survival(c)),
                a,
                b,
                INNER_TOL,
            )?;
        v_y += nested - moment * moment;
    }

    if model.rho != 0.0 {
        let cross_x = integrate_2d(
            |c1, c2| {
                (model.case_joint_survival(c1, c2) - case[0].survival(c1) * case[1].survival(c2))
                    * control[0].density(c1)
                    * control[1].density(c2)
            },
            ranges[0],
            ranges[1],
        )?;
        let cross_y = integrate_2d(
            |c1, c2| {
                (model.control_joint_survival(c1, c2)
                    - control[0].survival(c1) * control[1].survival(c2))
                    * case[0].density(c1)
                    * case[1].density(c2)
            },
            ranges[0],
            ranges[1],
        )?;
        v_x -= 2.0 * cross_x;
        v_y -= 2.0 * cross_y;
    }
    Ok(VarianceComponents::new(v_x, v_y))
}

/// Target accuracy summaries for the two markers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSummary {
    /// `FullAuc`, `Partial` (targets are areas) or `PointMass` (targets are sensitivities).
    pub statistic: WeightMeasure,
    pub values: [f64; 2],
}

impl TargetSummary {
    pub fn new(statistic: WeightMeasure, values: [f64; 2]) -> Result<Self> {
        statistic.validate()?;
        let upper = statistic.mass();
        for &v in &values {
            if !(v > 0.0 && v < upper) {
                return Err(Error::CalibrationInfeasible(format!(
                    "target {v} outside (0, {upper}) for {statistic:?}"
                )));
            }
        }
        Ok(Self { statistic, values })
    }

    pub fn auc(values: [f64; 2]) -> Result<Self> {
        Self::new(WeightMeasure::FullAuc, values)
    }

    pub fn pauc(lo: f64, hi: f64, values: [f64; 2]) -> Result<Self> {
        Self::new(WeightMeasure::Partial { lo, hi }, values)
    }

    /// Difference between the marker targets, marker 2 minus marker 1.
    pub fn difference(&self) -> f64 {
        self.values[1] - self.values[0]
    }
}

fn solve_monotone(
    what: &str,
    target: f64,
    bracket: (f64, f64),
    f: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let eval = |x: f64| match f(x) {
        Ok(v) => v - target,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let root = numeric::brent(eval, bracket.0, bracket.1, 1e-14);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let root = root.ok_or_else(|| {
        Error::CalibrationInfeasible(format!("{what} target {target} not bracketed by {bracket:?}"))
    })?;
    let achieved = f(root)?;
    if (achieved - target).abs() > CALIBRATION_TOL {
        return Err(Error::CalibrationInfeasible(format!(
            "{what} target {target}: best parameter {root} reaches {achieved}"
        )));
    }
    Ok(root)
}

/// Binormal case means (μ1, μ2) reproducing the target summaries, with controls at 0.
pub fn calibrate_binormal(target: &TargetSummary) -> Result<[f64; 2]> {
    let mut means = [0.0; 2];
    for (l, &value) in target.values.iter().enumerate() {
        means[l] = match target.statistic {
            WeightMeasure::FullAuc => std::f64::consts::SQRT_2 * normal::quantile(value)?,
            WeightMeasure::PointMass(u0) => normal::quantile(value)? - normal::quantile(u0)?,
            WeightMeasure::Partial { .. } => solve_monotone("binormal pAUC", value, (-30.0, 30.0), |mu| {
                ModelSpec::binormal([mu, mu], 0.0)?.summary(&target.statistic, 0)
            })?,
        };
    }
    Ok(means)
}

/// Control rates (β_12, β_22) of the FGM exponential model with unit case rates.
///
/// AUC a gives β = a/(1 - a); pAUC p over (0, u1) solves u1^(1+1/β)/(1+1/β) = p;
/// sensitivity s at FPR u0 gives β = ln u0 / ln s.
pub fn calibrate_biexponential(target: &TargetSummary) -> Result<[f64; 2]> {
    let mut rates = [0.0; 2];
    for (l, &value) in target.values.iter().enumerate() {
        rates[l] = match target.statistic {
            WeightMeasure::FullAuc => value / (1.0 - value),
            WeightMeasure::PointMass(u0) => u0.ln() / value.ln(),
            WeightMeasure::Partial { lo, hi } => {
                let area = move |beta: f64| {
                    let k = 1.0 + 1.0 / beta;
                    (hi.powf(k) - lo.powf(k)) / k
                };
                // area is increasing in β; solve in log β for a well-scaled bracket
                let log_beta = solve_monotone("exponential pAUC", value, (-30.0, 30.0), |lb| {
                    Ok(area(lb.exp()))
                })?;
                log_beta.exp()
            }
        };
        if !(rates[l] > 0.0 && rates[l].is_finite()) {
            return Err(Error::CalibrationInfeasible(format!(
                "no positive control rate for target {value}"
            )));
        }
    }
    Ok(rates)
}

/// Builds the model of `family` whose marker summaries equal `target` at correlation `rho`.
pub fn calibrated_model(family: Family, target: &TargetSummary, rho: f64) -> Result<ModelSpec> {
    match family {
        Family::Binormal => ModelSpec::binormal(calibrate_binormal(target)?, rho),
        // rank statistics are unchanged by exp(), so the normal-scale means carry over
        Family::Bilognormal => ModelSpec::bilognormal(calibrate_binormal(target)?, rho),
        Family::BiExponential => ModelSpec::biexponential(calibrate_biexponential(target)?, rho),
    }
}

/// Optimal ratio r* = √(v_x/v_y) from theoretical components across a correlation grid.
pub fn ratio_sweep(
    family: Family,
    target: &TargetSummary,
    rhos: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let base = calibrated_model(family, target, 0.0)?;
    rhos.iter()
        .map(|&rho| {
            let model = base.with_rho(rho)?;
            let comp = theoretical_components(&model, &target.statistic)?;
            Ok((rho, crate::design::optimal_ratio(&comp)?))
        })
        .collect()
}
