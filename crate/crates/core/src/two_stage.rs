//! Two-stage internal-pilot design.
//!
//! A trial is planned under assumed variance components, accrues a first stage,
//! re-estimates the optimal ratio from those data, and spends the rest of the
//! fixed budget N so that the final case:control split follows the new ratio.
//! States are immutable values; every transition returns a new state.

use std::fmt;
use std::str::FromStr;

use crate::design::{self, DesignParams};
use crate::error::{Error, Result};
use crate::kde::SmoothingSpec;
use crate::sample::PairedSample;
use crate::variance::{Estimator, VarianceComponents};

pub const STATE_FORMAT: &str = "optratio-two-stage/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Planned,
    Stage1Accruing,
    Recalculated,
    Complete,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Planned => "planned",
            Phase::Stage1Accruing => "stage1-accruing",
            Phase::Recalculated => "recalculated",
            Phase::Complete => "complete",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planned" => Ok(Phase::Planned),
            "stage1-accruing" => Ok(Phase::Stage1Accruing),
            "recalculated" => Ok(Phase::Recalculated),
            "complete" => Ok(Phase::Complete),
            other => Err(Error::StateFormat(format!("unknown phase '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageState {
    pub phase: Phase,
    pub alpha: f64,
    pub power: Option<f64>,
    pub delta1: f64,
    /// Assumed (v_x0, v_y0) from the planning model.
    pub assumed: VarianceComponents,
    /// r0* from the assumed components.
    pub initial_ratio: f64,
    /// Fixed total budget N.
    pub total: usize,
    /// Initial split (m0, n0) with m0 + n0 = N.
    pub initial_sizes: (usize, usize),
    /// First-stage accruals (m1, n1).
    pub stage1: Option<(usize, usize)>,
    /// Re-estimated (v̂_x1, v̂_y1).
    pub estimated: Option<VarianceComponents>,
    /// r̂*.
    pub updated_ratio: Option<f64>,
    /// Second-stage targets (M2, N2).
    pub stage2: Option<(usize, usize)>,
}

/// Plans a trial: the initial ratio from assumed components and the initial sizes.
///
/// With `params.total_n` set the budget is split at r0*; otherwise N comes from
/// the target power.
pub fn plan_initial(assumed: &VarianceComponents, params: &DesignParams) -> Result<TwoStageState> {
    params.validate()?;
    let ratio = design::optimal_ratio(assumed)?;
    let (total, initial_sizes) = match params.total_n {
        Some(total) => (total, design::split_total(total, ratio)),
        None => {
            let plan = design::required_sizes(assumed, ratio, params)?;
            (plan.total, (plan.cases, plan.controls))
        }
    };
    Ok(TwoStageState {
        phase: Phase::Planned,
        alpha: params.alpha,
        power: params.power,
        delta1: params.delta1,
        assumed: *assumed,
        initial_ratio: ratio,
        total,
        initial_sizes,
        stage1: None,
        estimated: None,
        updated_ratio: None,
        stage2: None,
    })
}

/// Default first-stage accrual m1 = n1 = ⌊N/4⌋.
pub fn default_stage1(total: usize) -> (usize, usize) {
    (total / 4, total / 4)
}

/// Second-stage targets (M2, N2) so that the pooled split follows `ratio`.
///
/// Negative targets are clamped at zero and the shortfall goes to the other
/// arm, keeping m1 + M2 + n1 + N2 = N.
pub fn second_stage_sizes(total: usize, ratio: f64, stage1: (usize, usize)) -> Result<(usize, usize)> {
    let (m1, n1) = stage1;
    if m1 + n1 > total {
        return Err(Error::StageOneExceedsBudget {
            accrued: m1 + n1,
            total,
        });
    }
    let remaining = total - m1 - n1;
    let (cases, controls) = design::split_total(total, ratio);
    let extra_cases = cases as i64 - m1 as i64;
    let extra_controls = controls as i64 - n1 as i64;
    Ok(if extra_controls < 0 {
        (remaining, 0)
    } else if extra_cases < 0 {
        (0, remaining)
    } else {
        (extra_cases as usize, extra_controls as usize)
    })
}

impl TwoStageState {
    fn expect_phase(&self, allowed: &[Phase], expected: &'static str) -> Result<()> {
        if self.phase == Phase::Complete {
            return Err(Error::TrialComplete);
        }
        if !allowed.contains(&self.phase) {
            return Err(Error::InvalidPhase {
                expected,
                found: self.phase.to_string(),
            });
        }
        Ok(())
    }

    /// Starts stage-1 recruitment of (m1, n1) subjects.
    pub fn begin_stage1(&self, m1: usize, n1: usize) -> Result<Self> {
        self.expect_phase(&[Phase::Planned, Phase::Stage1Accruing], "planned")?;
        if m1 + n1 > self.total {
            return Err(Error::StageOneExceedsBudget {
                accrued: m1 + n1,
                total: self.total,
            });
        }
        Ok(Self {
            phase: Phase::Stage1Accruing,
            stage1: Some((m1, n1)),
            ..self.clone()
        })
    }

    /// Recalculates the ratio and second-stage sizes from estimated stage-1 components.
    pub fn update_with_components(&self, estimated: &VarianceComponents, stage1: (usize, usize)) -> Result<Self> {
        self.expect_phase(&[Phase::Planned, Phase::Stage1Accruing], "planned or stage1-accruing")?;
        let ratio = design::optimal_ratio(estimated)?;
        self.update_with_ratio(estimated, ratio, stage1)
    }

    /// Recalculates second-stage sizes with an announced ratio, e.g. r̂* reported to two decimals.
    pub fn update_with_ratio(
        &self,
        estimated: &VarianceComponents,
        ratio: f64,
        stage1: (usize, usize),
    ) -> Result<Self> {
        self.expect_phase(&[Phase::Planned, Phase::Stage1Accruing], "planned or stage1-accruing")?;
        if !(ratio >= 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("ratio must be nonnegative, got {ratio}")));
        }
        let stage2 = second_stage_sizes(self.total, ratio, stage1)?;
        Ok(Self {
            phase: Phase::Recalculated,
            stage1: Some(stage1),
            estimated: Some(*estimated),
            updated_ratio: Some(ratio),
            stage2: Some(stage2),
            ..self.clone()
        })
    }

    /// Marks the trial as finished after stage-2 recruitment.
    pub fn complete(&self) -> Result<Self> {
        self.expect_phase(&[Phase::Recalculated], "recalculated")?;
        Ok(Self {
            phase: Phase::Complete,
            ..self.clone()
        })
    }

    /// Pooled case and control totals once recalculated.
    pub fn final_sizes(&self) -> Option<(usize, usize)> {
        let (m1, n1) = self.stage1?;
        let (m2, n2) = self.stage2?;
        Some((m1 + m2, n1 + n2))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        put("format", STATE_FORMAT.into());
        put("phase", self.phase.to_string());
        put("alpha", self.alpha.to_string());
        if let Some(p) = self.power {
            put("power", p.to_string());
        }
        put("delta1", self.delta1.to_string());
        put("assumed_v_x", self.assumed.v_x.to_string());
        put("assumed_v_y", self.assumed.v_y.to_string());
        put("initial_ratio", self.initial_ratio.to_string());
        put("total_n", self.total.to_string());
        put("initial_cases", self.initial_sizes.0.to_string());
        put("initial_controls", self.initial_sizes.1.to_string());
        if let Some((m1, n1)) = self.stage1 {
            put("stage1_cases", m1.to_string());
            put("stage1_controls", n1.to_string());
        }
        if let Some(c) = self.estimated {
            put("estimated_v_x", c.v_x.to_string());
            put("estimated_v_y", c.v_y.to_string());
        }
        if let Some(r) = self.updated_ratio {
            put("updated_ratio", r.to_string());
        }
        if let Some((m2, n2)) = self.stage2 {
            put("stage2_cases", m2.to_string());
            put("stage2_controls", n2.to_string());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::StateFormat(format!("line {}: expected 'key = value'", lineno + 1)))?;
            if fields.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(Error::StateFormat(format!("line {}: duplicate key '{}'", lineno + 1, key.trim())));
            }
        }
        match fields.remove("format").as_deref() {
            Some(STATE_FORMAT) => {}
            Some(other) => return Err(Error::StateFormat(format!("unsupported format '{other}'"))),
            None => return Err(Error::StateFormat("missing format line".into())),
        }

        fn parse<T: FromStr>(fields: &mut std::collections::BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
            fields
                .remove(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|_| Error::StateFormat(format!("bad value '{v}' for '{key}'")))
                })
                .transpose()
        }
        fn required<T: FromStr>(fields: &mut std::collections::BTreeMap<String, String>, key: &str) -> Result<T> {
            parse(fields, key)?.ok_or_else(|| Error::StateFormat(format!("missing '{key}'")))
        }
        fn pair<T: FromStr>(
            fields: &mut std::collections::BTreeMap<String, String>,
            a: &str,
            b: &str,
        ) -> Result<Option<(T, T)>> {
            match (parse(fields, a)?, parse(fields, b)?) {
                (Some(x), Some(y)) => Ok(Some((x, y))),
                (None, None) => Ok(None),
                _ => Err(Error::StateFormat(format!("'{a}' and '{b}' must appear together"))),
            }
        }

        let phase: Phase = required::<String>(&mut fields, "phase")?.parse()?;
        let state = TwoStageState {
            phase,
            alpha: required(&mut fields, "alpha")?,
            power: parse(&mut fields, "power")?,
            delta1: required(&mut fields, "delta1")?,
            assumed: VarianceComponents::new(
                required(&mut fields, "assumed_v_x")?,
                required(&mut fields, "assumed_v_y")?,
            ),
            initial_ratio: required(&mut fields, "initial_ratio")?,
            total: required(&mut fields, "total_n")?,
            initial_sizes: (
                required(&mut fields, "initial_cases")?,
                required(&mut fields, "initial_controls")?,
            ),
            stage1: pair(&mut fields, "stage1_cases", "stage1_controls")?,
            estimated: pair(&mut fields, "estimated_v_x", "estimated_v_y")?
                .map(|(x, y)| VarianceComponents::new(x, y)),
            updated_ratio: parse(&mut fields, "updated_ratio")?,
            stage2: pair(&mut fields, "stage2_cases", "stage2_controls")?,
        };
        if let Some(key) = fields.keys().next() {
            return Err(Error::StateFormat(format!("unknown key '{key}'")));
        }
        let recalculated = matches!(state.phase, Phase::Recalculated | Phase::Complete);
        if recalculated && (state.stage2.is_none() || state.updated_ratio.is_none() || state.stage1.is_none()) {
            return Err(Error::StateFormat(format!(
                "phase {} requires stage-1 sizes, updated ratio and stage-2 targets",
                state.phase
            )));
        }
        if let Some((m, n)) = state.final_sizes() {
            if m + n != state.total {
                return Err(Error::StateFormat(format!(
                    "recruitment targets sum to {} but total_n is {}",
                    m + n,
                    state.total
                )));
            }
        }
        Ok(state)
    }
}

/// Re-estimates the components from stage-1 data and sets (M2, N2).
pub fn two_stage_update(
    state: &TwoStageState,
    stage1: &PairedSample,
    estimator: &Estimator,
    smoothing: &SmoothingSpec,
) -> Result<TwoStageState> {
    state.expect_phase(&[Phase::Planned, Phase::Stage1Accruing], "planned or stage1-accruing")?;
    let sizes = (stage1.m(), stage1.n());
    if sizes.0 + sizes.1 > state.total {
        return Err(Error::StageOneExceedsBudget {
            accrued: sizes.0 + sizes.1,
            total: state.total,
        });
    }
    let estimated = estimator.components(stage1, smoothing)?;
    state.update_with_components(&estimated, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(total: usize) -> DesignParams {
        DesignParams {
            total_n: Some(total),
            ..Default::default()
        }
    }

    #[test]
    fn cancer_second_stage() {
        let assumed = VarianceComponents::new(0.05, 0.05);
        let state = plan_initial(&assumed, &fixed(353)).unwrap();
        let estimated = VarianceComponents::new(0.082, 0.035);
        let exact = state.update_with_components(&estimated, (60, 60)).unwrap();
        // r̂* = 1.5306 puts 213.51 cases in the pooled target
        assert_eq!(exact.stage2, Some((154, 79)));
        let state = state.update_with_ratio(&estimated, 1.53, (60, 60)).unwrap();
        assert_eq!(state.stage2, Some((153, 80)));
        assert_eq!(state.phase, Phase::Recalculated);
    }

    #[test]
    fn balanced_plan_and_continuation() {
        let state = plan_initial(&VarianceComponents::new(0.1, 0.1), &fixed(201)).unwrap();
        assert_eq!(state.initial_ratio, 1.0);
        assert_eq!(state.initial_sizes, (101, 100));
        assert_eq!(second_stage_sizes(200, 1.0, (50, 50)).unwrap(), (50, 50));
    }

    #[test]
    fn clamping_conserves_total() {
        assert_eq!(second_stage_sizes(200, 50.0, (50, 50)).unwrap(), (100, 0));
        assert_eq!(second_stage_sizes(200, 0.01, (50, 50)).unwrap(), (0, 100));
        assert!(matches!(
            second_stage_sizes(100, 1.0, (60, 50)),
            Err(Error::StageOneExceedsBudget { accrued: 110, total: 100 })
        ));
    }

    #[test]
    fn phase_rules() {
        let state = plan_initial(&VarianceComponents::new(0.1, 0.1), &fixed(100)).unwrap();
        assert!(state.complete().is_err());
        let done = state
            .update_with_components(&VarianceComponents::new(0.1, 0.2), (20, 20))
            .unwrap()
            .complete()
            .unwrap();
        assert!(matches!(
            done.update_with_components(&VarianceComponents::new(0.1, 0.2), (20, 20)),
            Err(Error::TrialComplete)
        ));
    }

    #[test]
    fn text_round_trip() {
        let state = plan_initial(&VarianceComponents::new(0.113394, 0.113394), &DesignParams::default())
            .unwrap()
            .begin_stage1(60, 60)
            .unwrap()
            .update_with_components(&VarianceComponents::new(0.082, 0.035), (60, 60))
            .unwrap();
        let text = state.to_text();
        assert!(text.starts_with("format = optratio-two-stage/1\n"));
        assert_eq!(TwoStageState::from_text(&text).unwrap(), state);
    }

    #[test]
    fn corrupt_text_is_rejected() {
        let text = plan_initial(&VarianceComponents::new(0.1, 0.1), &fixed(100))
            .unwrap()
            .to_text();
        assert!(TwoStageState::from_text(&text.replace("/1", "/9")).is_err());
        assert!(TwoStageState::from_text(&text.replace("alpha", "alhpa")).is_err());
        assert!(TwoStageState::from_text(&format!("{text}stage1_cases = 3\n")).is_err());
        assert!(TwoStageState::from_text("").is_err());
    }
}
