//! Command-line driver: one experiment per invocation, CSV artifacts out.
//!
//! Outputs are written to `<name>.csv.partial` and renamed on completion, so
//! a file without the `.partial` suffix is always a finished artifact.

use clap::{Args, Parser, Subcommand, ValueEnum};
use scapeopt::bo::{bo_loop, random_search, BoHistory};
use scapeopt::config::ExperimentConfig;
use scapeopt::error::{Error, Result};
use scapeopt::gp::FitConfig;
use scapeopt::metrics::ObjectiveKind;
use scapeopt::runner::{
    evaluate_objective, evaluate_objectives, policy_bounds, policy_from_vec,
    sensitivity_experiment, SensitivityExperiment,
};
use scapeopt::sim::{run_simulation, PolicyVector, SimResult};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable supplying the default worker count.
const WORKERS_ENV: &str = "SCAPEOPT_WORKERS";

#[derive(Parser)]
#[command(name = "scapeopt", version, about = "Sugarscape policy optimization toolkit")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replicates per design point, overriding the configuration.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker thread count (default: SCAPEOPT_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Shrink to the fast preset: 25x25 grid, 100 agents, 200 steps,
    /// 20 replicates.
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation (or an ensemble) and write per-step traces.
    Simulate,
    /// Run the likelihood-ratio additivity test of policy sensitivity.
    Sensitivity {
        /// Restrict to one objective; default tests all three.
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
    },
    /// Bayesian-optimize the policy vector against one objective.
    Optimize {
        #[arg(long, value_enum, default_value = "welfare")]
        objective: ObjectiveArg,
        /// Also run a matched random-search baseline.
        #[arg(long, value_enum, default_value = "none")]
        baseline: BaselineArg,
    },
    /// Run BO and random search on matched budgets and emit aligned
    /// convergence columns.
    Compare {
        #[arg(long, value_enum, default_value = "welfare")]
        objective: ObjectiveArg,
        /// Sequential iterations after the initial design.
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        /// Replace the simulation with a deterministic 2-D synthetic
        /// objective (CI hook).
        #[arg(long)]
        synthetic: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Welfare,
    Survival,
    Gini,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(a: ObjectiveArg) -> Self {
        match a {
            ObjectiveArg::Welfare => ObjectiveKind::MeanWelfare,
            ObjectiveArg::Survival => ObjectiveKind::SurvivalRate,
            ObjectiveArg::Gini => ObjectiveKind::GiniCoefficient,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineArg {
    None,
    Random,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    init_workers(cli.common.workers)?;
    let cfg = load_config(&cli.common)?;
    std::fs::create_dir_all(&cli.common.out)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &cli.common),
        Command::Sensitivity { objective } => cmd_sensitivity(&cfg, &cli.common, objective),
        Command::Optimize { objective, baseline } => {
            cmd_optimize(&cfg, &cli.common, objective.into(), baseline)
        }
        Command::Compare {
            objective,
            iterations,
            synthetic,
        } => cmd_compare(&cfg, &cli.common, objective.into(), iterations, synthetic),
    }
}

fn init_workers(flag: Option<usize>) -> Result<()> {
    let n = flag.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.desk_scale {
        cfg.apply_desk_scale();
        cfg.optimization.replicates = 20;
        cfg.sensitivity.replicates = 20;
    }
    if let Some(r) = common.replicates {
        cfg.optimization.replicates = r;
        cfg.sensitivity.replicates = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A CSV artifact that exists as `<path>.partial` until finished.
struct CsvArtifact {
    final_path: PathBuf,
    partial_path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvArtifact {
    fn create(dir: &Path, name: &str) -> Result<Self> {
        let final_path = dir.join(name);
        let partial_path = dir.join(format!("{name}.partial"));
        let writer = csv::Writer::from_writer(File::create(&partial_path)?);
        Ok(CsvArtifact {
            final_path,
            partial_path,
            writer,
        })
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        drop(self.writer);
        std::fs::rename(&self.partial_path, &self.final_path)?;
        Ok(self.final_path)
    }
}

/// Shortest round-trip decimal representation (exact for f64).
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_trace(result: &SimResult, dir: &Path, name: &str) -> Result<PathBuf> {
    let mut artifact = CsvArtifact::create(dir, name)?;
    artifact.writer.write_record([
        "step",
        "n_alive",
        "mean_welfare",
        "median_welfare",
        "gini",
        "log_sugar_component",
        "log_spice_component",
        "total_pollution",
    ])?;
    for rec in &result.steps {
        artifact.writer.write_record([
            rec.step.to_string(),
            rec.n_alive.to_string(),
            fmt(rec.mean_welfare),
            fmt(rec.median_welfare),
            rec.gini.map(fmt).unwrap_or_default(),
            fmt(rec.log_sugar_component),
            fmt(rec.log_spice_component),
            fmt(rec.total_pollution),
        ])?;
    }
    artifact.finish()
}

fn cmd_simulate(cfg: &ExperimentConfig, common: &CommonArgs) -> Result<()> {
    let policy = cfg.policy()?;
    let state = cfg.state_vector();
    let params = cfg.sim_params();
    let runs = common.replicates.unwrap_or(1).max(1);

    let mut results = Vec::with_capacity(runs);
    for i in 0..runs {
        let result = run_simulation(&policy, &state, &params, cfg.seed + i as u64)?;
        let name = if runs == 1 {
            "trace.csv".to_string()
        } else {
            format!("trace_run_{i}.csv")
        };
        let path = write_trace(&result, &common.out, &name)?;
        println!("wrote {}", path.display());
        results.push(result);
    }

    if runs > 1 {
        write_aggregate_trace(&results, &common.out)?;
    }

    let last = results.last().expect("at least one run");
    let sr = scapeopt::metrics::survival_rate(last);
    let final_step = last.steps.last().expect("step 0 always recorded");
    println!(
        "final state (run {}): survival {} mean welfare {} gini {}",
        runs - 1,
        fmt(sr),
        fmt(final_step.mean_welfare),
        final_step.gini.map(fmt).unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

/// Per-step median across an ensemble of runs.
fn write_aggregate_trace(results: &[SimResult], dir: &Path) -> Result<()> {
    let n_steps = results.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let mut artifact = CsvArtifact::create(dir, "trace_aggregate.csv")?;
    artifact.writer.write_record([
        "step",
        "n_runs",
        "median_n_alive",
        "median_mean_welfare",
        "median_median_welfare",
        "median_gini",
        "median_log_sugar_component",
        "median_log_spice_component",
        "median_total_pollution",
    ])?;
    let median = |mut v: Vec<f64>| -> Option<f64> {
        v.retain(|x| x.is_finite());
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        })
    };
    for step in 0..n_steps {
        let rows: Vec<_> = results.iter().filter_map(|r| r.steps.get(step)).collect();
        let col = |f: &dyn Fn(&scapeopt::sim::StepRecord) -> f64| {
            median(rows.iter().map(|r| f(r)).collect())
                .map(fmt)
                .unwrap_or_default()
        };
        artifact.writer.write_record([
            step.to_string(),
            rows.len().to_string(),
            col(&|r| r.n_alive as f64),
            col(&|r| r.mean_welfare),
            col(&|r| r.median_welfare),
            median(rows.iter().filter_map(|r| r.gini).collect())
                .map(fmt)
                .unwrap_or_default(),
            col(&|r| r.log_sugar_component),
            col(&|r| r.log_spice_component),
            col(&|r| r.total_pollution),
        ])?;
    }
    let path = artifact.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sensitivity(
    cfg: &ExperimentConfig,
    common: &CommonArgs,
    objective: Option<ObjectiveArg>,
) -> Result<()> {
    let objectives = match objective {
        Some(o) => vec![o.into()],
        None => vec![
            ObjectiveKind::SurvivalRate,
            ObjectiveKind::MeanWelfare,
            ObjectiveKind::GiniCoefficient,
        ],
    };
    let exp = SensitivityExperiment {
        objectives,
        state_variable: cfg.sensitivity.state_variable,
        n_points: cfg.sensitivity.n_points,
        replicates: cfg.sensitivity.replicates,
        alpha: cfg.sensitivity.alpha,
        psi: cfg.optimization.psi,
        reinvestment: cfg.policy.reinvestment,
    };
    let outcomes = sensitivity_experiment(
        &exp,
        &cfg.state_vector(),
        &cfg.sim_params(),
        &FitConfig::default(),
        cfg.seed,
    )?;

    let mut artifact = CsvArtifact::create(&common.out, "sensitivity.csv")?;
    artifact.writer.write_record([
        "objective",
        "state_variable",
        "n",
        "lambda",
        "nu",
        "p_value",
        "reject",
    ])?;
    for o in &outcomes {
        artifact.writer.write_record([
            o.objective.name().to_string(),
            o.state_variable.name().to_string(),
            o.report.n.to_string(),
            fmt(o.report.lambda),
            o.report.nu.to_string(),
            fmt(o.report.p_value),
            o.report.reject.to_string(),
        ])?;
        println!(
            "{} vs {}: Lambda = {:.3}, nu = {}, p = {:.4}, reject = {}",
            o.objective.name(),
            o.state_variable.name(),
            o.report.lambda,
            o.report.nu,
            o.report.p_value,
            o.report.reject
        );
    }
    let path = artifact.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Wrap the replicate-ensemble objective for the minimization loop, logging
/// wall time per evaluation.
struct SimObjective<'a> {
    cfg: &'a ExperimentConfig,
    kind: ObjectiveKind,
    started: Instant,
    /// (x, seconds since start at completion), in call order.
    log: Vec<(Vec<f64>, f64)>,
    next_point: u64,
}

impl<'a> SimObjective<'a> {
    fn new(cfg: &'a ExperimentConfig, kind: ObjectiveKind) -> Self {
        SimObjective {
            cfg,
            kind,
            started: Instant::now(),
            log: Vec::new(),
            next_point: 0,
        }
    }

    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        let policy = policy_from_vec(x, self.cfg.policy.reinvestment).ok()?;
        let seed_base = self.cfg.seed
            + self.next_point * scapeopt::runner::DESIGN_POINT_SEED_STRIDE;
        self.next_point += 1;
        let rec = evaluate_objective(
            &policy,
            &self.cfg.state_vector(),
            &self.cfg.sim_params(),
            self.kind,
            self.cfg.optimization.psi,
            self.cfg.optimization.replicates,
            seed_base,
        )
        .ok()?;
        let value = rec.psi_minimized();
        self.log
            .push((x.to_vec(), self.started.elapsed().as_secs_f64()));
        value
    }

    fn wall_time_for(&self, x: &[f64]) -> Option<f64> {
        self.log.iter().find(|(lx, _)| lx == x).map(|&(_, t)| t)
    }
}

fn write_history(
    history: &BoHistory,
    times: Option<&SimObjective>,
    dir: &Path,
    name: &str,
) -> Result<PathBuf> {
    let mut artifact = CsvArtifact::create(dir, name)?;
    artifact.writer.write_record([
        "iteration",
        "trade_tax",
        "consumption_tax",
        "production_cap",
        "observed",
        "best_so_far",
        "wall_time_seconds",
    ])?;
    for rec in &history.records {
        artifact.writer.write_record([
            rec.iteration.to_string(),
            fmt(rec.x[0]),
            fmt(rec.x[1]),
            fmt(rec.x[2]),
            fmt(rec.value),
            fmt(rec.best_so_far),
            times
                .and_then(|t| t.wall_time_for(&rec.x))
                .map(fmt)
                .unwrap_or_default(),
        ])?;
    }
    artifact.finish()
}

fn cmd_optimize(
    cfg: &ExperimentConfig,
    common: &CommonArgs,
    kind: ObjectiveKind,
    baseline: BaselineArg,
) -> Result<()> {
    let bounds = policy_bounds();
    let m = cfg.optimization.initial_design;
    let iterations = cfg.optimization.budget - m;

    let mut obj = SimObjective::new(cfg, kind);
    let mut f = |x: &[f64]| obj.eval(x);
    let history = bo_loop(&mut f, &bounds, m, iterations, &FitConfig::default(), cfg.seed)?;
    let path = write_history(&history, Some(&obj), &common.out, "bo_history.csv")?;
    println!("wrote {}", path.display());

    if matches!(baseline, BaselineArg::Random) {
        let mut obj = SimObjective::new(cfg, kind);
        let mut f = |x: &[f64]| obj.eval(x);
        let rand_history = random_search(&mut f, &bounds, m, iterations, cfg.seed)?;
        let path = write_history(&rand_history, Some(&obj), &common.out, "random_history.csv")?;
        println!("wrote {}", path.display());
    }

    summarize_best(cfg, kind, &history, &common.out)
}

/// Best-policy summary mirroring the optimal-policy table: the winning
/// lever settings plus all three achieved objectives, with a no-policy
/// reference row at matched seeds.
fn summarize_best(
    cfg: &ExperimentConfig,
    kind: ObjectiveKind,
    history: &BoHistory,
    dir: &Path,
) -> Result<()> {
    let all_kinds = [
        ObjectiveKind::SurvivalRate,
        ObjectiveKind::MeanWelfare,
        ObjectiveKind::GiniCoefficient,
    ];
    let best_policy = policy_from_vec(&history.best_x, cfg.policy.reinvestment)?;
    let achieved = evaluate_objectives(
        &best_policy,
        &cfg.state_vector(),
        &cfg.sim_params(),
        &all_kinds,
        cfg.optimization.psi,
        cfg.optimization.replicates,
        cfg.seed,
    )?;
    let no_policy = evaluate_objectives(
        &PolicyVector::none(),
        &cfg.state_vector(),
        &cfg.sim_params(),
        &all_kinds,
        cfg.optimization.psi,
        cfg.optimization.replicates,
        cfg.seed,
    )?;

    let mut artifact = CsvArtifact::create(dir, "best_policy.csv")?;
    artifact.writer.write_record([
        "row",
        "objective",
        "trade_tax",
        "consumption_tax",
        "production_cap",
        "survival",
        "welfare",
        "gini",
    ])?;
    let psi_col = |recs: &[scapeopt::runner::ExperimentRecord], i: usize| {
        recs[i].psi.map(fmt).unwrap_or_default()
    };
    artifact.writer.write_record([
        "optimized".to_string(),
        kind.name().to_string(),
        fmt(best_policy.trade_tax),
        fmt(best_policy.consumption_tax),
        fmt(best_policy.production_cap),
        psi_col(&achieved, 0),
        psi_col(&achieved, 1),
        psi_col(&achieved, 2),
    ])?;
    artifact.writer.write_record([
        "no_policy".to_string(),
        kind.name().to_string(),
        "0".to_string(),
        "0".to_string(),
        "inf".to_string(),
        psi_col(&no_policy, 0),
        psi_col(&no_policy, 1),
        psi_col(&no_policy, 2),
    ])?;
    let path = artifact.finish()?;
    println!("wrote {}", path.display());
    println!(
        "best {} policy: trade_tax {} consumption_tax {} production_cap {}",
        kind.name(),
        fmt(best_policy.trade_tax),
        fmt(best_policy.consumption_tax),
        fmt(best_policy.production_cap),
    );
    Ok(())
}

/// Deterministic 2-D multimodal synthetic used by `compare --synthetic`.
fn synthetic_objective(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (a - 0.6).powi(2) + (b - 0.3).powi(2) + 0.3 * (8.0 * a).sin() * (7.0 * b).cos() + 0.3
}

fn cmd_compare(
    cfg: &ExperimentConfig,
    common: &CommonArgs,
    kind: ObjectiveKind,
    iterations: usize,
    synthetic: bool,
) -> Result<()> {
    let m = cfg.optimization.initial_design;
    let fit = FitConfig::default();

    let (bo_hist, rand_hist) = if synthetic {
        let bounds = scapeopt::design::Bounds::new(vec![(0.0, 1.0), (0.0, 1.0)])?;
        let mut f1 = |x: &[f64]| Some(synthetic_objective(x));
        let mut f2 = |x: &[f64]| Some(synthetic_objective(x));
        (
            bo_loop(&mut f1, &bounds, m, iterations, &fit, cfg.seed)?,
            random_search(&mut f2, &bounds, m, iterations, cfg.seed)?,
        )
    } else {
        let bounds = policy_bounds();
        let mut obj1 = SimObjective::new(cfg, kind);
        let mut f1 = |x: &[f64]| obj1.eval(x);
        let bo = bo_loop(&mut f1, &bounds, m, iterations, &fit, cfg.seed)?;
        let mut obj2 = SimObjective::new(cfg, kind);
        let mut f2 = |x: &[f64]| obj2.eval(x);
        let rand = random_search(&mut f2, &bounds, m, iterations, cfg.seed)?;
        (bo, rand)
    };

    let mut artifact = CsvArtifact::create(&common.out, "compare.csv")?;
    artifact
        .writer
        .write_record(["iteration", "bo_best_so_far", "random_best_so_far"])?;
    for (b, r) in bo_hist.records.iter().zip(&rand_hist.records) {
        artifact.writer.write_record([
            b.iteration.to_string(),
            fmt(b.best_so_far),
            fmt(r.best_so_far),
        ])?;
    }
    let path = artifact.finish()?;
    println!("wrote {}", path.display());
    println!(
        "final best-so-far: bo {} random {}",
        fmt(bo_hist.best_value),
        fmt(rand_hist.best_value)
    );
    Ok(())
}
