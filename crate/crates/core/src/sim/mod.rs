//! Seeded Monte Carlo studies of the two-stage design.
//!
//! Replication `i` of a study with master seed `s` draws cases from the
//! ChaCha8 stream `(i << 2) | 0` of seed `s`, controls from stream
//! `(i << 2) | 1`, and auxiliary first-stage sets from stream `(i << 2) | 2`.
//! Streams never depend on the worker that runs the replication, and results
//! are reduced in replication order, so a table is bit-identical for any
//! worker count. Cells of one study share the master seed, which makes their
//! comparisons use common random numbers.

pub mod config;

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{CellSpec, GridSpec, Policy, StatisticKind, StatisticSpec, StudyConfig, StudyKind};

use crate::design::{self, DesignParams};
use crate::error::{Error, Result};
use crate::kde::SmoothingSpec;
use crate::models::{self, Family, ModelSpec};
use crate::normal;
use crate::sample::PairedSample;
use crate::two_stage;
use crate::variance::{Estimator, VarianceComponents};

const CASES: u64 = 0;
const CONTROLS: u64 = 1;
const AUXILIARY: u64 = 2;

/// Random stream for one replication and channel.
pub fn replication_rng(seed: u64, rep: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << 2) | channel);
    rng
}

/// Everything a replication needs, resolved once per cell.
#[derive(Debug, Clone)]
pub struct Trial {
    pub model: ModelSpec,
    pub estimator: Estimator,
    pub smoothing: SmoothingSpec,
    pub alpha: f64,
    pub policy: Policy,
    pub total: usize,
    /// First-stage accrual (m1, n1) for the two-stage policy.
    pub stage1: (usize, usize),
    /// Number K of first-stage sets whose component estimates are averaged.
    pub averaging: usize,
}

/// Result of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub reject: bool,
    pub cases: usize,
    pub controls: usize,
    /// Δ̂ on the pooled sample.
    pub statistic: f64,
    /// First-stage estimate from the trial's own stage-1 data.
    pub stage1_components: Option<VarianceComponents>,
    pub ratio_estimate: Option<f64>,
}

impl Trial {
    pub fn run(&self, seed: u64, rep: u64) -> Result<TrialOutcome> {
        let mut case_rng = replication_rng(seed, rep, CASES);
        let mut control_rng = replication_rng(seed, rep, CONTROLS);
        let (sample, stage1_components, ratio_estimate) = match self.policy {
            Policy::Fixed(r) => {
                let (m, n) = design::split_total(self.total, r);
                let sample = PairedSample::new(
                    self.model.sample_cases(m, &mut case_rng),
                    self.model.sample_controls(n, &mut control_rng),
                )?;
                (sample, None, None)
            }
            Policy::TwoStage => {
                let (m1, n1) = self.stage1;
                let mut sample = PairedSample::new(
                    self.model.sample_cases(m1, &mut case_rng),
                    self.model.sample_controls(n1, &mut control_rng),
                )?;
                let own = self.estimator.components(&sample, &self.smoothing)?;
                let pooled = if self.averaging > 1 {
                    let mut aux_rng = replication_rng(seed, rep, AUXILIARY);
                    let mut all = vec![own];
                    for _ in 1..self.averaging {
                        let extra = models::sample(&self.model, m1, n1, &mut aux_rng);
                        all.push(self.estimator.components(&extra, &self.smoothing)?);
                    }
                    VarianceComponents::average(&all).expect("nonempty")
                } else {
                    own
                };
                let ratio = design::optimal_ratio(&pooled)?;
                let (m2, n2) = two_stage::second_stage_sizes(self.total, ratio, (m1, n1))?;
                sample.extend(&PairedSample::new(
                    self.model.sample_cases(m2, &mut case_rng),
                    self.model.sample_controls(n2, &mut control_rng),
                )?);
                (sample, Some(own), Some(ratio))
            }
        };
        let test = design::final_test(&sample, &self.estimator, &self.smoothing, self.alpha)?;
        Ok(TrialOutcome {
            reject: test.reject,
            cases: sample.m(),
            controls: sample.n(),
            statistic: test.statistic,
            stage1_components,
            ratio_estimate,
        })
    }
}

/// Runs `reps` replications in parallel and returns them in replication order.
pub fn run_replications(trial: &Trial, seed: u64, reps: usize) -> Vec<Result<TrialOutcome>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| trial.run(seed, rep))
        .collect()
}

/// One output row of a power, type I or sensitivity study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub study: String,
    pub model: String,
    pub statistic: String,
    pub target1: f64,
    pub target2: f64,
    pub rho: f64,
    pub policy: String,
    pub n_total: usize,
    pub stage1: Option<usize>,
    pub k_sets: Option<usize>,
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    pub mc_se: f64,
    /// Mean realized case:control ratio.
    pub ar: f64,
    pub failures: usize,
    pub seed: u64,
}

/// Correlations between first-stage estimates and the final statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub model: String,
    pub statistic: String,
    pub rho: f64,
    pub n_total: usize,
    pub stage1: usize,
    pub reps: usize,
    pub corr_vx: Option<f64>,
    pub vx_lo: Option<f64>,
    pub vx_hi: Option<f64>,
    pub corr_vy: Option<f64>,
    pub vy_lo: Option<f64>,
    pub vy_hi: Option<f64>,
    pub failures: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub statistic: String,
    pub target1: f64,
    pub target2: f64,
    pub rho: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub ratio: f64,
}

/// A configured band and whether the observed value fell inside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub cell: String,
    pub quantity: &'static str,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub name: String,
    pub study: StudyKind,
    pub rows: Vec<CellResult>,
    pub correlations: Vec<CorrelationRow>,
    pub sweep: Vec<SweepRow>,
    pub bands: Vec<BandCheck>,
    /// Wall-clock seconds; not part of the deterministic tables.
    pub elapsed_secs: f64,
}

impl StudyReport {
    pub fn violations(&self) -> impl Iterator<Item = &BandCheck> {
        self.bands.iter().filter(|b| !b.pass)
    }

    /// Writes the study table as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self.study {
            StudyKind::Sweep => self.sweep.iter().try_for_each(|r| w.serialize(r))?,
            StudyKind::Independence => self.correlations.iter().try_for_each(|r| w.serialize(r))?,
            _ => self.rows.iter().try_for_each(|r| w.serialize(r))?,
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:+.4}"))
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "study {} ({:?}), {:.1}s", self.name, self.study, self.elapsed_secs)?;
        for r in &self.rows {
            let extra = match (r.stage1, r.k_sets) {
                (Some(m0), Some(k)) => format!(" m0={m0} K={k}"),
                _ => String::new(),
            };
            writeln!(
                f,
                "  {} {} ({}, {}) rho={} {} N={}{}: rate {:.1}% (se {:.2}) AR {:.3}{}",
                r.model,
                r.statistic,
                r.target1,
                r.target2,
                r.rho,
                r.policy,
                r.n_total,
                extra,
                100.0 * r.rate,
                100.0 * r.mc_se,
                r.ar,
                if r.failures > 0 { format!(" [{} failed]", r.failures) } else { String::new() }
            )?;
        }
        for c in &self.correlations {
            writeln!(
                f,
                "  {} {} rho={} N={} m1=n1={}: corr(v_x1, Δ) {} [{}, {}], corr(v_y1, Δ) {} [{}, {}]",
                c.model,
                c.statistic,
                c.rho,
                c.n_total,
                c.stage1,
                fmt_opt(c.corr_vx),
                fmt_opt(c.vx_lo),
                fmt_opt(c.vx_hi),
                fmt_opt(c.corr_vy),
                fmt_opt(c.vy_lo),
                fmt_opt(c.vy_hi)
            )?;
        }
        for s in &self.sweep {
            writeln!(f, "  {} {} rho={:+.2}: r* = {:.4}", s.model, s.statistic, s.rho, s.ratio)?;
        }
        for b in &self.bands {
            writeln!(
                f,
                "  {} {} {}: {:.4} in [{}, {}]",
                if b.pass { "PASS" } else { "FAIL" },
                b.cell,
                b.quantity,
                b.value,
                b.lo,
                b.hi
            )?;
        }
        Ok(())
    }
}

/// Total N for a cell: configured, or planned under the binormal assumption.
pub fn planned_total(cell: &CellSpec, params: &DesignParams) -> Result<usize> {
    if let Some(n) = cell.total_n {
        return Ok(n);
    }
    let target = cell.target()?;
    let assumed = models::calibrated_model(Family::Binormal, &target, cell.rho)?;
    let comp = models::theoretical_components(&assumed, &target.statistic)?;
    let ratio = design::optimal_ratio(&comp)?;
    Ok(design::required_sizes(&comp, ratio, params)?.total)
}

fn smoothing(config: &StudyConfig) -> Result<SmoothingSpec> {
    config.bandwidth.map_or(Ok(SmoothingSpec::silverman()), SmoothingSpec::fixed)
}

fn build_trial(config: &StudyConfig, cell: &CellSpec) -> Result<Trial> {
    let target = cell.target()?;
    let total = planned_total(cell, &config.cell_design_params(cell)?)?;
    let m1 = (total as f64 * config.stage1_fraction).floor() as usize;
    Ok(Trial {
        model: models::calibrated_model(cell.family, &target, cell.rho)?,
        estimator: cell.statistic().estimator()?,
        smoothing: smoothing(config)?,
        alpha: config.alpha,
        policy: cell.policy,
        total,
        stage1: (m1, m1),
        averaging: 1,
    })
}

fn cell_label(cell: &CellSpec, total: usize) -> String {
    format!(
        "{} {} ({}, {}) rho={} {} N={}",
        cell.family.label(),
        cell.statistic().label(),
        cell.targets[0],
        cell.targets[1],
        cell.rho,
        cell.policy.label(),
        total
    )
}

fn summarize(
    config: &StudyConfig,
    cell: &CellSpec,
    trial: &Trial,
    outcomes: &[Result<TrialOutcome>],
    sensitivity: bool,
) -> CellResult {
    let reps = outcomes.len();
    let mut rejections = 0;
    let mut failures = 0;
    let mut ratio_sum = 0.0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                rejections += o.reject as usize;
                ratio_sum += o.cases as f64 / o.controls as f64;
            }
            Err(e) => {
                if failures == 0 {
                    log::warn!("replication failed and counts as non-rejection: {e}");
                }
                failures += 1;
            }
        }
    }
    let rate = rejections as f64 / reps as f64;
    let succeeded = reps - failures;
    CellResult {
        study: config.name.clone(),
        model: cell.family.label().into(),
        statistic: cell.statistic().label(),
        target1: cell.targets[0],
        target2: cell.targets[1],
        rho: cell.rho,
        policy: cell.policy.label(),
        n_total: trial.total,
        stage1: sensitivity.then_some(trial.stage1.0),
        k_sets: sensitivity.then_some(trial.averaging),
        reps,
        rejections,
        rate,
        mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        ar: if succeeded > 0 { ratio_sum / succeeded as f64 } else { f64::NAN },
        failures,
        seed: config.seed,
    }
}

fn check_bands(cell: &CellSpec, row: &CellResult, label: &str, bands: &mut Vec<BandCheck>) {
    for (quantity, band, value) in [("rate", cell.rate_band, row.rate), ("AR", cell.ar_band, row.ar)] {
        if let Some([lo, hi]) = band {
            bands.push(BandCheck {
                cell: label.to_string(),
                quantity,
                value,
                lo,
                hi,
                pass: value >= lo && value <= hi,
            });
        }
    }
}

/// Power of each configured cell.
pub fn run_power_study(config: &StudyConfig) -> Result<StudyReport> {
    run_rate_study(config, StudyKind::Power)
}

/// Rejection rates under equal targets.
pub fn run_type1_study(config: &StudyConfig) -> Result<StudyReport> {
    run_rate_study(config, StudyKind::Type1)
}

fn expect_kind(config: &StudyConfig, kind: StudyKind) -> Result<()> {
    config.validate()?;
    if config.study != kind {
        return Err(Error::Config(format!("expected a {kind:?} study, got {:?}", config.study)));
    }
    Ok(())
}

fn run_rate_study(config: &StudyConfig, kind: StudyKind) -> Result<StudyReport> {
    expect_kind(config, kind)?;
    let start = Instant::now();
    let cells = config.all_cells();
    let trials = cells.iter().map(|c| build_trial(config, c)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut bands = Vec::new();
    for (cell, trial) in cells.iter().zip(&trials) {
        let outcomes = run_replications(trial, config.seed, config.replications);
        let row = summarize(config, cell, trial, &outcomes, false);
        check_bands(cell, &row, &cell_label(cell, trial.total), &mut bands);
        rows.push(row);
    }
    Ok(StudyReport {
        name: config.name.clone(),
        study: kind,
        rows,
        correlations: Vec::new(),
        sweep: Vec::new(),
        bands,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Power and realized ratio across first-stage sizes m0 and averaging counts K.
pub fn run_sensitivity_study(config: &StudyConfig) -> Result<StudyReport> {
    expect_kind(config, StudyKind::Sensitivity)?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut bands = Vec::new();
    for cell in config.all_cells() {
        let base = build_trial(config, &cell)?;
        let base = Trial {
            policy: Policy::TwoStage,
            ..base
        };
        for &k in &config.averaging {
            for &m0 in &config.initial_sizes {
                let trial = Trial {
                    stage1: (m0, m0),
                    averaging: k,
                    ..base.clone()
                };
                let outcomes = run_replications(&trial, config.seed, config.replications);
                let row = summarize(config, &cell, &trial, &outcomes, true);
                let label = format!("{} m0={m0} K={k}", cell_label(&cell, trial.total));
                check_bands(&cell, &row, &label, &mut bands);
                rows.push(row);
            }
        }
    }
    Ok(StudyReport {
        name: config.name.clone(),
        study: StudyKind::Sensitivity,
        rows,
        correlations: Vec::new(),
        sweep: Vec::new(),
        bands,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Pearson correlation with a Fisher-z 95% interval; `None` when either series is constant.
pub fn correlation_with_ci(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 4 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let z = r.clamp(-0.999_999_999, 0.999_999_999).atanh();
    let half = normal::two_sided_critical(0.05).expect("valid alpha") / ((n - 3) as f64).sqrt();
    Some((r, (z - half).tanh(), (z + half).tanh()))
}

/// Correlation of first-stage variance estimates with the final Δ̂.
pub fn run_independence_check(config: &StudyConfig) -> Result<StudyReport> {
    expect_kind(config, StudyKind::Independence)?;
    let start = Instant::now();
    let m1 = config.stage1_size.expect("validated");
    let mut correlations = Vec::new();
    for cell in config.all_cells() {
        let trial = Trial {
            policy: Policy::TwoStage,
            stage1: (m1, m1),
            ..build_trial(config, &cell)?
        };
        let outcomes = run_replications(&trial, config.seed, config.replications);
        let mut vx = Vec::new();
        let mut vy = Vec::new();
        let mut delta = Vec::new();
        let mut failures = 0;
        for o in &outcomes {
            match o {
                Ok(TrialOutcome {
                    stage1_components: Some(c),
                    statistic,
                    ..
                }) => {
                    vx.push(c.v_x);
                    vy.push(c.v_y);
                    delta.push(*statistic);
                }
                _ => failures += 1,
            }
        }
        let cx = correlation_with_ci(&vx, &delta);
        let cy = correlation_with_ci(&vy, &delta);
        if cx.is_none() || cy.is_none() {
            log::warn!("correlation undefined for {}: a series is constant", cell_label(&cell, trial.total));
        }
        correlations.push(CorrelationRow {
            model: cell.family.label().into(),
            statistic: cell.statistic().label(),
            rho: cell.rho,
            n_total: trial.total,
            stage1: m1,
            reps: config.replications,
            corr_vx: cx.map(|c| c.0),
            vx_lo: cx.map(|c| c.1),
            vx_hi: cx.map(|c| c.2),
            corr_vy: cy.map(|c| c.0),
            vy_lo: cy.map(|c| c.1),
            vy_hi: cy.map(|c| c.2),
            failures,
            seed: config.seed,
        });
    }
    Ok(StudyReport {
        name: config.name.clone(),
        study: StudyKind::Independence,
        rows: Vec::new(),
        correlations,
        sweep: Vec::new(),
        bands: Vec::new(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Theoretical optimal ratio across the configured correlation grid.
pub fn run_sweep(config: &StudyConfig) -> Result<StudyReport> {
    expect_kind(config, StudyKind::Sweep)?;
    let start = Instant::now();
    let mut sweep = Vec::new();
    let mut bands = Vec::new();
    for cell in config.all_cells() {
        let target = cell.target()?;
        let base = models::calibrated_model(cell.family, &target, 0.0)?;
        for &rho in &config.rhos {
            let comp = models::theoretical_components(&base.with_rho(rho)?, &target.statistic)?;
            let ratio = design::optimal_ratio(&comp)?;
            if let Some([lo, hi]) = cell.rate_band {
                bands.push(BandCheck {
                    cell: format!("{} {} rho={rho}", cell.family.label(), cell.statistic().label()),
                    quantity: "ratio",
                    value: ratio,
                    lo,
                    hi,
                    pass: ratio >= lo && ratio <= hi,
                });
            }
            sweep.push(SweepRow {
                model: cell.family.label().into(),
                statistic: cell.statistic().label(),
                target1: cell.targets[0],
                target2: cell.targets[1],
                rho,
                v_x: comp.v_x,
                v_y: comp.v_y,
                ratio,
            });
        }
    }
    Ok(StudyReport {
        name: config.name.clone(),
        study: StudyKind::Sweep,
        rows: Vec::new(),
        correlations: Vec::new(),
        sweep,
        bands,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Dispatches on the configured study kind.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    match config.study {
        StudyKind::Power => run_power_study(config),
        StudyKind::Type1 => run_type1_study(config),
        StudyKind::Sensitivity => run_sensitivity_study(config),
        StudyKind::Independence => run_independence_check(config),
        StudyKind::Sweep => run_sweep(config),
    }
}

/// Runs a study on a dedicated pool of `workers` threads.
pub fn run_study_with_workers(config: &StudyConfig, workers: usize) -> Result<StudyReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_study(config))
}
