//! Where variance components come from: pilot data, known values or a model.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use optratio::models::{self, Family, TargetSummary};
use optratio::{Estimator, PairedSample, SmoothingSpec, VarianceComponents, WeightMeasure};

use crate::output::Report;
use crate::{pilot, usage, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticChoice {
    Auc,
    Pauc,
    Sens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    Delong,
    Delta,
}

/// Summary and estimator used on pilot data.
#[derive(Args, Debug, Clone)]
pub struct AnalysisArgs {
    /// Summary compared between markers [default: auc]
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticChoice>,
    /// FPR interval for pAUC
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub fpr: Option<Vec<f64>>,
    /// FPR at which sensitivity is compared
    #[arg(long)]
    pub u0: Option<f64>,
    /// Variance estimator [default: delong for auc, delta otherwise]
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    /// Fixed kernel bandwidth for ROC slopes (normal-score scale)
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

/// Exactly one of pilot data, known components or a parametric model.
#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Pilot data CSV (subject_id,group,marker1,marker2)
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Known variance components
    #[arg(long, num_args = 2, value_names = ["VX", "VY"])]
    pub components: Option<Vec<f64>>,
    /// Model family: binormal, bilognormal or biexponential
    #[arg(long)]
    pub model: Option<Family>,
    /// Model target AUCs
    #[arg(long, num_args = 2, value_names = ["A1", "A2"])]
    pub auc: Option<Vec<f64>>,
    /// Model target partial AUCs over --fpr
    #[arg(long, num_args = 2, value_names = ["P1", "P2"])]
    pub pauc: Option<Vec<f64>>,
    /// Model target sensitivities at --u0
    #[arg(long, num_args = 2, value_names = ["S1", "S2"])]
    pub sens: Option<Vec<f64>>,
    /// Within-arm correlation between the markers
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

pub struct Resolved {
    pub components: VarianceComponents,
    /// Target difference when the source is a model.
    pub target_difference: Option<f64>,
    pub sizes: Option<(usize, usize)>,
    describe: Vec<(&'static str, String)>,
}

impl Resolved {
    pub fn echo(&self, report: &mut Report) {
        for (key, value) in &self.describe {
            report.text(key, value.clone());
        }
        if let Some((m, n)) = self.sizes {
            report.int("m1", m).int("n1", n);
        }
        report.num("v_x", self.components.v_x, 6).num("v_y", self.components.v_y, 6);
    }
}

impl AnalysisArgs {
    pub fn weight(&self) -> Result<WeightMeasure, Failure> {
        weight_for(self.statistic.unwrap_or(StatisticChoice::Auc), self.fpr.as_deref(), self.u0)
    }

    pub fn estimator(&self) -> Result<Estimator, Failure> {
        let weight = self.weight()?;
        match (self.estimator, weight) {
            (Some(EstimatorChoice::Delong) | None, WeightMeasure::FullAuc) => Ok(Estimator::DeLong),
            (Some(EstimatorChoice::Delong), _) => Err(usage("--estimator delong applies to --statistic auc only")),
            (_, w) => Ok(Estimator::Delta(w)),
        }
    }

    pub fn smoothing(&self) -> Result<SmoothingSpec, Failure> {
        Ok(match self.bandwidth {
            Some(h) => SmoothingSpec::fixed(h)?,
            None => SmoothingSpec::silverman(),
        })
    }

    fn is_default(&self) -> bool {
        self.statistic.is_none() && self.estimator.is_none() && self.bandwidth.is_none()
    }

    pub fn label(&self) -> String {
        match self.statistic.unwrap_or(StatisticChoice::Auc) {
            StatisticChoice::Auc => "auc".into(),
            StatisticChoice::Pauc => "pauc".into(),
            StatisticChoice::Sens => "sens".into(),
        }
    }
}

fn weight_for(kind: StatisticChoice, fpr: Option<&[f64]>, u0: Option<f64>) -> Result<WeightMeasure, Failure> {
    let w = match kind {
        StatisticChoice::Auc => WeightMeasure::FullAuc,
        StatisticChoice::Pauc => {
            let fpr = fpr.ok_or_else(|| usage("pAUC needs --fpr LO HI"))?;
            WeightMeasure::Partial { lo: fpr[0], hi: fpr[1] }
        }
        StatisticChoice::Sens => WeightMeasure::PointMass(u0.ok_or_else(|| usage("sensitivity needs --u0"))?),
    };
    w.validate().map_err(|e| usage(e.to_string()))?;
    Ok(w)
}

pub fn estimate(sample: &PairedSample, analysis: &AnalysisArgs) -> Result<VarianceComponents, Failure> {
    let estimator = analysis.estimator()?;
    Ok(estimator.components(sample, &analysis.smoothing()?)?)
}

impl SourceArgs {
    fn target(&self) -> Result<Option<TargetSummary>, Failure> {
        let given: Vec<(StatisticChoice, &Vec<f64>)> = [
            (StatisticChoice::Auc, &self.auc),
            (StatisticChoice::Pauc, &self.pauc),
            (StatisticChoice::Sens, &self.sens),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect();
        match given.as_slice() {
            [] => Ok(None),
            [(kind, values)] => {
                let weight = weight_for(*kind, self.analysis.fpr.as_deref(), self.analysis.u0)?;
                Ok(Some(TargetSummary::new(weight, [values[0], values[1]])?))
            }
            _ => Err(usage("give only one of --auc, --pauc and --sens")),
        }
    }

    /// Model-based components, also used to plan a trial.
    pub fn model_components(&self) -> Result<Resolved, Failure> {
        let family = self.model.ok_or_else(|| usage("a model source needs --model"))?;
        let target = self
            .target()?
            .ok_or_else(|| usage("--model needs target values via --auc, --pauc or --sens"))?;
        if !self.analysis.is_default() {
            return Err(usage("--statistic, --estimator and --bandwidth apply to pilot data only"));
        }
        let rho = self.rho.unwrap_or(0.0);
        let model = models::calibrated_model(family, &target, rho)?;
        let components = models::theoretical_components(&model, &target.statistic)?;
        Ok(Resolved {
            components,
            target_difference: Some(((target.values[1] - target.values[0]).abs() * 1e12).round() / 1e12),
            sizes: None,
            describe: vec![
                ("source", format!("model {}", family_name(family))),
                ("statistic", statistic_name(&target.statistic)),
                ("targets", format!("{} {}", target.values[0], target.values[1])),
                ("rho", rho.to_string()),
            ],
        })
    }

    pub fn resolve(&self) -> Result<Resolved, Failure> {
        let chosen = [self.data.is_some(), self.components.is_some(), self.model.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if chosen != 1 {
            return Err(usage("give exactly one of --data, --components and --model"));
        }
        if self.model.is_some() {
            return self.model_components();
        }
        if self.target()?.is_some() || self.rho.is_some() {
            return Err(usage("--auc, --pauc, --sens and --rho describe a --model source"));
        }
        if let Some(v) = &self.components {
            if !self.analysis.is_default() {
                return Err(usage("--statistic, --estimator and --bandwidth apply to pilot data only"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(usage("--components must be nonnegative"));
            }
            return Ok(Resolved {
                components: VarianceComponents::new(v[0], v[1]),
                target_difference: None,
                sizes: None,
                describe: vec![("source", "components".into())],
            });
        }
        let path = self.data.as_ref().expect("one source is set");
        let sample = pilot::read(path).map_err(Failure::Data)?;
        let estimator = self.analysis.estimator()?;
        let components = estimate(&sample, &self.analysis)?;
        Ok(Resolved {
            components,
            target_difference: None,
            sizes: Some((sample.m(), sample.n())),
            describe: vec![
                ("source", format!("data {}", path.display())),
                ("statistic", self.analysis.label()),
                ("estimator", estimator.name().into()),
            ],
        })
    }
}

pub fn family_name(family: Family) -> &'static str {
    match family {
        Family::Binormal => "binormal",
        Family::Bilognormal => "bilognormal",
        Family::BiExponential => "biexponential",
    }
}

fn statistic_name(w: &WeightMeasure) -> String {
    match *w {
        WeightMeasure::FullAuc => "auc".into(),
        WeightMeasure::Partial { lo, hi } => format!("pauc({lo}, {hi})"),
        WeightMeasure::PointMass(u0) => format!("sens@{u0}"),
    }
}
