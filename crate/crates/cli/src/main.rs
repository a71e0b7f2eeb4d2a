mod output;
mod pilot;
mod source;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use optratio::design::{self, cost_optimal_ratio, optimal_ratio, power_at, required_sizes};
use optratio::models::Family;
use optratio::sim::{self, CellSpec, Policy, StatisticKind, StudyConfig, StudyKind};
use optratio::two_stage::{default_stage1, plan_initial};
use optratio::{DesignParams, Phase, TwoStageState};

use output::Report;
use source::{AnalysisArgs, SourceArgs};

/// Optimal case:control ratios and two-stage designs for comparing two diagnostic markers.
#[derive(Parser, Debug)]
#[command(name = "optratio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal case:control ratio from pilot data, known components or a model
    Ratio(RatioArgs),
    /// Cases and controls needed for a target power
    Size(DesignCmd),
    /// Power of a design with a fixed total
    Power(DesignCmd),
    /// Plan a two-stage trial and write its state file
    Plan(PlanArgs),
    /// Re-estimate the ratio from stage-1 data, or run the final test
    Update(UpdateArgs),
    /// Run a simulation study from a config file
    Simulate(SimulateArgs),
    /// Theoretical optimal ratio across within-arm correlations
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct RatioArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Cost of recruiting one case
    #[arg(long, requires = "cost_control")]
    cost_case: Option<f64>,
    /// Cost of recruiting one control
    #[arg(long, requires = "cost_case")]
    cost_control: Option<f64>,
    /// Decimals of the announced ratio
    #[arg(long, default_value_t = 2)]
    ratio_decimals: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Clone)]
struct DesignFlags {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Target power
    #[arg(long)]
    power: Option<f64>,
    /// Total number of subjects N
    #[arg(long)]
    total_n: Option<usize>,
    /// Difference to detect [default: model target difference, else 0.05]
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long)]
    one_sided: bool,
}

#[derive(Args, Debug)]
struct DesignCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    design: DesignFlags,
    /// Case:control ratio to evaluate [default: announced optimal ratio]
    #[arg(long)]
    ratio: Option<f64>,
    /// Decimals of the announced ratio
    #[arg(long, default_value_t = 2)]
    ratio_decimals: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// State file to create
    #[arg(long)]
    state: PathBuf,
    /// Overwrite an existing state file
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    design: DesignFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct UpdateArgs {
    /// State file written by `plan`
    #[arg(long)]
    state: PathBuf,
    /// Stage-1 data, or all data with --final
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Decimals of the announced ratio used for stage 2
    #[arg(long, default_value_t = 2)]
    ratio_decimals: usize,
    /// Run the final test on the pooled data and close the trial
    #[arg(long = "final")]
    final_test: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Study config (TOML)
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per cell
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    workers: Option<usize>,
    /// Results CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep config (TOML); replaces the model flags
    #[arg(long, conflicts_with_all = ["model", "auc", "pauc", "sens"])]
    config: Option<PathBuf>,
    #[arg(long, default_value = "binormal")]
    model: Family,
    #[arg(long, num_args = 2, value_names = ["A1", "A2"])]
    auc: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["P1", "P2"])]
    pauc: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["S1", "S2"])]
    sens: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    fpr: Option<Vec<f64>>,
    #[arg(long)]
    u0: Option<f64>,
    /// Smallest correlation [default: -0.9, or -0.25 for biexponential]
    #[arg(long, allow_negative_numbers = true)]
    rho_min: Option<f64>,
    /// Largest correlation [default: 0.9, or 0.25 for biexponential]
    #[arg(long, allow_negative_numbers = true)]
    rho_max: Option<f64>,
    #[arg(long)]
    rho_step: Option<f64>,
    /// Results CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Failure classes mapped to exit codes 1, 2 and 3.
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Bands(usize),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ratio(a) => cmd_ratio(a),
        Command::Size(a) => cmd_size(a),
        Command::Power(a) => cmd_power(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Update(a) => cmd_update(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Bands(count)) => {
            eprintln!("error: {count} result(s) outside their configured bands");
            ExitCode::from(3)
        }
    }
}

fn announce(ratio: f64, decimals: usize) -> f64 {
    let scale = 10f64.powi(decimals.min(15) as i32);
    (ratio * scale).round() / scale
}

fn cmd_ratio(a: RatioArgs) -> Result<(), Failure> {
    let resolved = a.source.resolve()?;
    let exact = optimal_ratio(&resolved.components)?;
    let mut report = Report::new();
    resolved.echo(&mut report);
    report
        .num("r*", announce(exact, a.ratio_decimals), a.ratio_decimals)
        .num("r*_exact", exact, 6);
    if let (Some(c1), Some(c2)) = (a.cost_case, a.cost_control) {
        let costed = cost_optimal_ratio(&resolved.components, c1, c2)?;
        report
            .num("cost_case", c1, 4)
            .num("cost_control", c2, 4)
            .num("r_c*", announce(costed, a.ratio_decimals), a.ratio_decimals)
            .num("r_c*_exact", costed, 6);
    }
    report.print(a.json);
    Ok(())
}

impl DesignFlags {
    fn params(&self, resolved: &source::Resolved) -> DesignParams {
        let defaults = DesignParams::default();
        DesignParams {
            alpha: self.alpha,
            power: self.power.or(defaults.power),
            delta1: self.delta.or(resolved.target_difference).unwrap_or(defaults.delta1),
            total_n: self.total_n,
            costs: None,
            one_sided: self.one_sided,
        }
    }

    fn echo(&self, params: &DesignParams, report: &mut Report) {
        report.num("alpha", params.alpha, 4);
        if self.one_sided {
            report.flag("one_sided", true);
        }
        report.num("delta", params.delta1, 4);
    }
}

fn design_ratio(cmd: &DesignCmd, resolved: &source::Resolved) -> Result<f64, Failure> {
    match cmd.ratio {
        Some(r) if r > 0.0 && r.is_finite() => Ok(r),
        Some(r) => Err(usage(format!("--ratio must be positive, got {r}"))),
        None => Ok(announce(optimal_ratio(&resolved.components)?, cmd.ratio_decimals)),
    }
}

fn cmd_size(cmd: DesignCmd) -> Result<(), Failure> {
    if cmd.design.total_n.is_some() {
        return Err(usage("size solves for N; use `power` to evaluate a fixed --total-n"));
    }
    if cmd.design.power.is_none() {
        return Err(usage("size needs --power"));
    }
    let resolved = cmd.source.resolve()?;
    let params = cmd.design.params(&resolved);
    params.validate().map_err(|e| usage(e.to_string()))?;
    let ratio = design_ratio(&cmd, &resolved)?;
    let plan = required_sizes(&resolved.components, ratio, &params)?;
    let mut report = Report::new();
    resolved.echo(&mut report);
    cmd.design.echo(&params, &mut report);
    report
        .num("power", params.power.unwrap_or_default(), 4)
        .num("ratio", ratio, 4)
        .int("m", plan.cases)
        .int("n", plan.controls)
        .int("N", plan.total)
        .num("m_exact", plan.cases_exact, 2)
        .num("n_exact", plan.controls_exact, 2);
    report.print(cmd.json);
    Ok(())
}

fn cmd_power(cmd: DesignCmd) -> Result<(), Failure> {
    if cmd.design.power.is_some() {
        return Err(usage("power solves for power; use `size` to find N for a target --power"));
    }
    let total = cmd.design.total_n.ok_or_else(|| usage("power needs --total-n"))?;
    let resolved = cmd.source.resolve()?;
    let params = cmd.design.params(&resolved);
    params.validate().map_err(|e| usage(e.to_string()))?;
    let ratio = design_ratio(&cmd, &resolved)?;
    let power = power_at(&resolved.components, ratio, total, &params)?;
    let (m, n) = design::split_total(total, ratio);
    let mut report = Report::new();
    resolved.echo(&mut report);
    cmd.design.echo(&params, &mut report);
    report
        .int("N", total)
        .num("ratio", ratio, 4)
        .int("m", m)
        .int("n", n)
        .num("power", power, 6)
        .num("power_pct", 100.0 * power, 2);
    report.print(cmd.json);
    Ok(())
}

fn write_state(path: &Path, state: &TwoStageState) -> Result<(), Failure> {
    std::fs::write(path, state.to_text()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_state(path: &Path) -> Result<TwoStageState, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TwoStageState::from_text(&text).with_context(|| format!("{}", path.display()))?)
}

fn state_report(state: &TwoStageState, report: &mut Report) {
    report
        .text("phase", state.phase.to_string())
        .int("N", state.total)
        .num("r0*", state.initial_ratio, 4)
        .int("m0", state.initial_sizes.0)
        .int("n0", state.initial_sizes.1);
}

fn cmd_plan(a: PlanArgs) -> Result<(), Failure> {
    if a.source.data.is_some() {
        return Err(usage("plan uses an assumed model: give --model or --components, not --data"));
    }
    if a.design.power.is_some() && a.design.total_n.is_some() {
        return Err(usage("give either --power or --total-n, not both"));
    }
    if a.state.exists() && !a.force {
        return Err(usage(format!("{} exists; pass --force to overwrite", a.state.display())));
    }
    let resolved = a.source.resolve()?;
    let params = a.design.params(&resolved);
    params.validate().map_err(|e| usage(e.to_string()))?;
    let state = plan_initial(&resolved.components, &params)?;
    write_state(&a.state, &state)?;
    let (m1, n1) = default_stage1(state.total);
    let mut report = Report::new();
    resolved.echo(&mut report);
    a.design.echo(&params, &mut report);
    state_report(&state, &mut report);
    report
        .int("suggested_m1", m1)
        .int("suggested_n1", n1)
        .text("state", a.state.display().to_string());
    report.print(a.json);
    Ok(())
}

fn cmd_update(a: UpdateArgs) -> Result<(), Failure> {
    let state = read_state(&a.state)?;
    if state.phase == Phase::Complete {
        return Err(optratio::Error::TrialComplete.into());
    }
    let sample = pilot::read(&a.data).map_err(Failure::Data)?;
    let mut report = Report::new();
    if a.final_test {
        if state.phase != Phase::Recalculated {
            return Err(optratio::Error::InvalidPhase {
                expected: "recalculated",
                found: state.phase.to_string(),
            }
            .into());
        }
        if let Some((m, n)) = state.final_sizes() {
            if (m, n) != (sample.m(), sample.n()) {
                log::warn!("final data has ({}, {}) subjects; the plan called for ({m}, {n})", sample.m(), sample.n());
            }
        }
        let estimator = a.analysis.estimator()?;
        let test = design::final_test(&sample, &estimator, &a.analysis.smoothing()?, state.alpha)?;
        let done = state.complete()?;
        write_state(&a.state, &done)?;
        report
            .text("statistic", a.analysis.label())
            .text("estimator", estimator.name())
            .int("m", sample.m())
            .int("n", sample.n())
            .num("delta_hat", test.statistic, 6)
            .num("v_x", test.components.v_x, 6)
            .num("v_y", test.components.v_y, 6)
            .num("z", test.z, 4)
            .num("p", test.p, 4)
            .flag("reject", test.reject)
            .text("phase", done.phase.to_string());
        report.print(a.json);
        return Ok(());
    }
    if let Some(planned) = state.stage1 {
        if planned != (sample.m(), sample.n()) {
            log::warn!(
                "stage-1 data has ({}, {}) subjects; the state recorded {planned:?}",
                sample.m(),
                sample.n()
            );
        }
    }
    let estimated = source::estimate(&sample, &a.analysis)?;
    let exact = optimal_ratio(&estimated)?;
    let announced = announce(exact, a.ratio_decimals);
    let updated = state.update_with_ratio(&estimated, announced, (sample.m(), sample.n()))?;
    write_state(&a.state, &updated)?;
    let (m2, n2) = updated.stage2.expect("recalculated state has stage-2 sizes");
    let (cases, controls) = updated.final_sizes().expect("recalculated state has final sizes");
    report
        .text("statistic", a.analysis.label())
        .text("estimator", a.analysis.estimator()?.name())
        .int("m1", sample.m())
        .int("n1", sample.n())
        .num("v_x", estimated.v_x, 6)
        .num("v_y", estimated.v_y, 6)
        .num("r*", announced, a.ratio_decimals)
        .num("r*_exact", exact, 6)
        .int("M2", m2)
        .int("N2", n2)
        .int("cases", cases)
        .int("controls", controls)
        .text("phase", updated.phase.to_string());
    report.print(a.json);
    Ok(())
}

fn run_config(mut config: StudyConfig, workers: Option<usize>, out: Option<&Path>, json: bool) -> Result<(), Failure> {
    config.validate().map_err(|e| usage(e.to_string()))?;
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    config.replications = config.replications.max(1);
    let report = sim::run_study_with_workers(&config, workers)?;
    if let Some(path) = out {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    let violations = report.violations().count();
    if json {
        let value = serde_json::json!({
            "name": report.name,
            "study": format!("{:?}", report.study).to_lowercase(),
            "replications": config.replications,
            "seed": config.seed,
            "mc_se_bound": 0.5 / (config.replications as f64).sqrt(),
            "rows": report.rows,
            "correlations": report.correlations,
            "sweep": report.sweep,
            "bands": report.bands,
            "violations": violations,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        print!("{report}");
        if config.study != StudyKind::Sweep {
            println!(
                "{} replications per cell, seed {}: Monte Carlo SE at most {:.1}pp",
                config.replications,
                config.seed,
                50.0 / (config.replications as f64).sqrt()
            );
        }
        if let Some(path) = out {
            println!("results written to {}", path.display());
        }
    }
    if violations > 0 {
        return Err(Failure::Bands(violations));
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut config = StudyConfig::from_path(&a.config).with_context(|| format!("{}", a.config.display()))?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(reps) = a.reps {
        if reps == 0 {
            return Err(usage("--reps must be at least 1"));
        }
        config.replications = reps;
    }
    run_config(config, a.workers, a.out.as_deref(), a.json)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    if let Some(path) = &a.config {
        let config = StudyConfig::from_path(path).with_context(|| format!("{}", path.display()))?;
        if config.study != StudyKind::Sweep {
            return Err(usage(format!("{} is not a sweep config", path.display())));
        }
        return run_config(config, Some(1), a.out.as_deref(), a.json);
    }
    let (statistic, targets) = match (&a.auc, &a.pauc, &a.sens) {
        (Some(t), None, None) => (StatisticKind::Auc, t),
        (None, Some(t), None) => (StatisticKind::Pauc, t),
        (None, None, Some(t)) => (StatisticKind::Sensitivity, t),
        _ => return Err(usage("give exactly one of --auc, --pauc and --sens, or --config")),
    };
    let limit = if a.model == Family::BiExponential { 0.25 } else { 0.9 };
    let lo = a.rho_min.unwrap_or(-limit);
    let hi = a.rho_max.unwrap_or(limit);
    let step = a.rho_step.unwrap_or(if a.model == Family::BiExponential { 0.05 } else { 0.1 });
    if !(step > 0.0 && lo <= hi) {
        return Err(usage("need --rho-min <= --rho-max and a positive --rho-step"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    let rhos = (0..=count).map(|k| lo + k as f64 * step).map(|r| (r * 1e10).round() / 1e10).collect();
    let config = StudyConfig {
        name: "sweep".into(),
        study: StudyKind::Sweep,
        replications: 1,
        seed: 0,
        alpha: 0.05,
        power: 0.8,
        delta1: None,
        stage1_fraction: 0.25,
        bandwidth: None,
        cells: vec![CellSpec {
            family: a.model,
            statistic,
            fpr: a.fpr.as_ref().map(|f| [f[0], f[1]]),
            u0: a.u0,
            targets: [targets[0], targets[1]],
            rho: 0.0,
            policy: Policy::TwoStage,
            total_n: None,
            rate_band: None,
            ar_band: None,
        }],
        grid: Vec::new(),
        initial_sizes: Vec::new(),
        averaging: Vec::new(),
        stage1_size: None,
        rhos,
    };
    run_config(config, Some(1), a.out.as_deref(), a.json)
}
