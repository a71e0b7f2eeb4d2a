//! Study configuration read from TOML.

use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::error::{Error, Result};
use crate::models::{Family, TargetSummary};
use crate::roc::WeightMeasure;
use crate::variance::Estimator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Power,
    Type1,
    Sensitivity,
    Independence,
    Sweep,
}

/// How the budget N is split between cases and controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    /// Re-estimate the ratio from the first stage.
    TwoStage,
    /// Fixed case:control ratio for the whole trial.
    Fixed(f64),
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::TwoStage => "two-stage".into(),
            Policy::Fixed(r) => format!("fixed:{r}"),
        }
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> Self {
        p.label()
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-stage" | "two_stage" => Ok(Policy::TwoStage),
            "equal" => Ok(Policy::Fixed(1.0)),
            other => {
                let r = other
                    .strip_prefix("fixed:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r > 0.0 && r.is_finite())
                    .ok_or_else(|| {
                        Error::Config(format!("policy '{other}': expected two-stage, equal or fixed:<ratio>"))
                    })?;
                Ok(Policy::Fixed(r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Auc,
    Pauc,
    Sensitivity,
}

/// Which accuracy summary is compared, with its FPR range or point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticSpec {
    pub kind: StatisticKind,
    pub fpr: Option<[f64; 2]>,
    pub u0: Option<f64>,
}

impl StatisticSpec {
    pub fn weight(&self) -> Result<WeightMeasure> {
        let w = match self.kind {
            StatisticKind::Auc => WeightMeasure::FullAuc,
            StatisticKind::Pauc => {
                let [lo, hi] = self
                    .fpr
                    .ok_or_else(|| Error::Config("pauc needs fpr = [lo, hi]".into()))?;
                WeightMeasure::Partial { lo, hi }
            }
            StatisticKind::Sensitivity => {
                WeightMeasure::PointMass(self.u0.ok_or_else(|| Error::Config("sensitivity needs u0".into()))?)
            }
        };
        w.validate()?;
        Ok(w)
    }

    /// DeLong for AUC comparisons, the Δ-statistic otherwise.
    pub fn estimator(&self) -> Result<Estimator> {
        Ok(match self.weight()? {
            WeightMeasure::FullAuc => Estimator::DeLong,
            w => Estimator::Delta(w),
        })
    }

    pub fn label(&self) -> String {
        match self.kind {
            StatisticKind::Auc => "auc".into(),
            StatisticKind::Pauc => {
                let [lo, hi] = self.fpr.unwrap_or([0.0, 1.0]);
                format!("pauc({lo},{hi})")
            }
            StatisticKind::Sensitivity => format!("sens@{}", self.u0.unwrap_or(f64::NAN)),
        }
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub family: Family,
    pub statistic: StatisticKind,
    #[serde(default)]
    pub fpr: Option<[f64; 2]>,
    #[serde(default)]
    pub u0: Option<f64>,
    pub targets: [f64; 2],
    pub rho: f64,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    /// Total budget N; planned from binormal-assumed components when absent.
    #[serde(default)]
    pub total_n: Option<usize>,
    /// Accepted range for the rejection rate.
    #[serde(default)]
    pub rate_band: Option<[f64; 2]>,
    /// Accepted range for the average realized ratio.
    #[serde(default)]
    pub ar_band: Option<[f64; 2]>,
}

fn default_policy() -> Policy {
    Policy::TwoStage
}

impl CellSpec {
    pub fn statistic(&self) -> StatisticSpec {
        StatisticSpec {
            kind: self.statistic,
            fpr: self.fpr,
            u0: self.u0,
        }
    }

    pub fn target(&self) -> Result<TargetSummary> {
        let w = self.statistic().weight()?;
        let upper = w.mass();
        if self.targets.iter().any(|&v| !(v > 0.0 && v < upper)) {
            return Err(Error::Config(format!("targets {:?} outside (0, {upper})", self.targets)));
        }
        Ok(TargetSummary {
            statistic: w,
            values: self.targets,
        })
    }
}

/// Cartesian product of cell settings sharing one set of bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub families: Vec<Family>,
    pub statistic: StatisticKind,
    #[serde(default)]
    pub fpr: Option<[f64; 2]>,
    #[serde(default)]
    pub u0: Option<f64>,
    pub targets: Vec<[f64; 2]>,
    pub rhos: Vec<f64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub totals: Vec<usize>,
    #[serde(default)]
    pub rate_band: Option<[f64; 2]>,
    #[serde(default)]
    pub ar_band: Option<[f64; 2]>,
}

fn default_policies() -> Vec<Policy> {
    vec![Policy::TwoStage]
}

impl GridSpec {
    pub fn expand(&self) -> Vec<CellSpec> {
        let totals: Vec<Option<usize>> = if self.totals.is_empty() {
            vec![None]
        } else {
            self.totals.iter().map(|&n| Some(n)).collect()
        };
        let mut cells = Vec::new();
        for &rho in &self.rhos {
            for &family in &self.families {
                for &targets in &self.targets {
                    for &policy in &self.policies {
                        for &total_n in &totals {
                            cells.push(CellSpec {
                                family,
                                statistic: self.statistic,
                                fpr: self.fpr,
                                u0: self.u0,
                                targets,
                                rho,
                                policy,
                                total_n,
                                rate_band: self.rate_band,
                                ar_band: self.ar_band,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub study: StudyKind,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Target power used when N is planned.
    #[serde(default = "default_power")]
    pub power: f64,
    /// Alternative difference used when N is planned; the cell's target difference when absent.
    #[serde(default)]
    pub delta1: Option<f64>,
    /// First-stage accrual per arm as a fraction of N, rounded down.
    #[serde(default = "default_fraction")]
    pub stage1_fraction: f64,
    /// Fixed KDE bandwidth for Δ-statistic slopes; Silverman when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub grid: Vec<GridSpec>,
    /// Sensitivity study: first-stage sizes m0 = n0.
    #[serde(default)]
    pub initial_sizes: Vec<usize>,
    /// Sensitivity study: number K of first-stage sets averaged.
    #[serde(default)]
    pub averaging: Vec<usize>,
    /// Independence check: first-stage size m1 = n1.
    #[serde(default)]
    pub stage1_size: Option<usize>,
    /// Sweep: correlation grid.
    #[serde(default)]
    pub rhos: Vec<f64>,
}

fn default_reps() -> usize {
    1000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.80
}
fn default_fraction() -> f64 {
    0.25
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Explicit cells followed by the expanded grids.
    pub fn all_cells(&self) -> Vec<CellSpec> {
        let mut cells = self.cells.clone();
        for grid in &self.grid {
            cells.extend(grid.expand());
        }
        cells
    }

    pub fn design_params(&self) -> DesignParams {
        let defaults = DesignParams::default();
        DesignParams {
            alpha: self.alpha,
            power: Some(self.power),
            delta1: self.delta1.unwrap_or(defaults.delta1),
            ..defaults
        }
    }

    /// Planning parameters for one cell.
    pub fn cell_design_params(&self, cell: &CellSpec) -> Result<DesignParams> {
        let mut params = self.design_params();
        if self.delta1.is_none() {
            let t = cell.target()?;
            params.delta1 = (t.values[1] - t.values[0]).abs();
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.stage1_fraction > 0.0 && self.stage1_fraction < 1.0) {
            return Err(Error::Config(format!(
                "stage1_fraction must lie in (0, 1), got {}",
                self.stage1_fraction
            )));
        }
        self.design_params().validate()?;
        if let Some(h) = self.bandwidth {
            crate::kde::SmoothingSpec::fixed(h)?;
        }
        let cells = self.all_cells();
        if cells.is_empty() {
            return Err(Error::Config("no cells configured".into()));
        }
        for cell in &cells {
            cell.target()?;
            crate::models::calibrated_model(cell.family, &cell.target()?, cell.rho)?;
            if let Some(n) = cell.total_n {
                if n < 8 {
                    return Err(Error::Config(format!("total_n {n} is too small")));
                }
                let m1 = (n as f64 * self.stage1_fraction).floor() as usize;
                if cell.policy == Policy::TwoStage && (m1 < 2 || 2 * m1 > n) {
                    return Err(Error::Config(format!(
                        "stage-1 accrual {m1} per arm does not fit N = {n}"
                    )));
                }
            }
            let equal = cell.targets[0] == cell.targets[1];
            match self.study {
                StudyKind::Power if equal => {
                    log::warn!("power cell with equal targets {:?} runs under the null", cell.targets)
                }
                StudyKind::Type1 | StudyKind::Independence if !equal => {
                    return Err(Error::Config(format!(
                        "{:?} study needs equal targets, got {:?}",
                        self.study, cell.targets
                    )))
                }
                StudyKind::Type1 | StudyKind::Independence | StudyKind::Sensitivity if cell.total_n.is_none() => {
                    return Err(Error::Config(format!("{:?} study needs total_n", self.study)))
                }
                _ => {}
            }
        }
        match self.study {
            StudyKind::Sensitivity => {
                if self.initial_sizes.is_empty() || self.averaging.is_empty() {
                    return Err(Error::Config("sensitivity study needs initial_sizes and averaging".into()));
                }
                if self.averaging.contains(&0) || self.initial_sizes.iter().any(|&m| m < 2) {
                    return Err(Error::Config("averaging K >= 1 and initial sizes >= 2 required".into()));
                }
                for cell in &cells {
                    let n = cell.total_n.unwrap_or(0);
                    if let Some(&m0) = self.initial_sizes.iter().find(|&&m0| 2 * m0 > n) {
                        return Err(Error::Config(format!("initial size {m0} per arm exceeds N = {n}")));
                    }
                }
            }
            StudyKind::Independence => {
                let m1 = self
                    .stage1_size
                    .ok_or_else(|| Error::Config("independence check needs stage1_size".into()))?;
                for cell in &cells {
                    if m1 < 2 || 2 * m1 > cell.total_n.unwrap_or(0) {
                        return Err(Error::Config(format!("stage1_size {m1} does not fit the budget")));
                    }
                }
            }
            StudyKind::Sweep => {
                if self.rhos.is_empty() {
                    return Err(Error::Config("sweep needs rhos".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
