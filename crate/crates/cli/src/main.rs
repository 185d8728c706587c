//! `csbm`: command-line front end.
//!
//! Tabular output is CSV with a header row, single objects are JSON. Exit
//! codes: 0 ok, 1 usage or bad input, 2 domain error or infeasible fit,
//! 3 internal error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csbm_core::cycles::{detection_test_with_budget, poisson_cycle_test, DEFAULT_BUDGET};
use csbm_core::harness::{summary_to_csv, sweep_to_csv, DetectKnobs, Fixed, RecoverKnobs, SweepSpec};
use csbm_core::lr_expansion::{empirical_loglr_terms, limiting_loglr_terms_h0, total};
use csbm_core::recovery::DELTA_PRIME_INIT;
use csbm_core::rng::cell_seed;
use csbm_core::saw::DEFAULT_PATH_BUDGET;
use csbm_core::*;

#[derive(Parser)]
#[command(name = "csbm", version, about = "Contextual stochastic block model toolkit")]
struct Cli {
    /// Seed for sampling, rounding and replications.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (directory for `run`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an instance and write it in the text format.
    Sample(ModelArgs),
    /// One cycle statistic with its theoretical moments.
    Cycles {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Cycle-statistic detection test against an alternative.
    Detect {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[command(flatten)]
        alt: AltArgs,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Pair estimates `P_ij` for all i < j.
    Saw {
        #[command(flatten)]
        walk: WalkArgs,
    },
    /// Pair estimates, correlation fit and rounding.
    Recover {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = DELTA_PRIME_INIT)]
        delta_prime: f64,
    },
    /// Exact likelihood computations for small n.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Truncated log-likelihood-ratio series.
    Lr {
        #[command(subcommand)]
        command: LrCommand,
    },
    /// Run an experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Detection power or recovery overlap over a λ–μ grid.
    Sweep(SweepArgs),
    /// Per-grid-point summary of a result CSV.
    Summarize {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact log-likelihood ratio, as JSON `{log_L, L}`.
    Lr {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        alt: AltArgs,
    },
    /// Posterior `E[σ_i σ_j]` matrix as CSV.
    Posterior {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        alt: AltArgs,
    },
}

#[derive(Subcommand)]
enum LrCommand {
    /// Draws from the limiting null distribution.
    Sample {
        #[arg(long = "K", default_value_t = lr_expansion::DEFAULT_MAX_K)]
        k_max: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Plug-in evaluation on an instance.
    Eval {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long = "K", default_value_t = lr_expansion::DEFAULT_MAX_K)]
        k_max: usize,
        #[command(flatten)]
        alt: AltArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    d: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, conflicts_with = "p", required_unless_present = "p")]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        match (self.gamma, self.p) {
            (_, Some(p)) => ModelParams::with_p(self.lambda, self.mu, self.d, self.n, p),
            (Some(g), None) => ModelParams::with_gamma(self.lambda, self.mu, self.d, self.n, g),
            (None, None) => unreachable!("clap requires gamma or p"),
        }
    }
}

/// Alternative signal; each field defaults to the instance's own value.
#[derive(Args)]
struct AltArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
}

impl AltArgs {
    fn resolve(&self, base: &ModelParams) -> Result<ModelParams> {
        base.with_signal(self.lambda.unwrap_or(base.lambda()), self.mu.unwrap_or(base.mu()))
    }
}

#[derive(Args)]
struct SeriesArgs {
    /// Leave out the (1,1) term.
    #[arg(long)]
    skip_unit_wedge: bool,
    /// Use the null means in the Gaussian block.
    #[arg(long)]
    null_mean_shift: bool,
}

impl SeriesArgs {
    fn truncation(&self, k_max: usize) -> TruncationConfig {
        let mut t = TruncationConfig::new(k_max);
        if self.skip_unit_wedge {
            t = t.skipping_unit_wedge();
        }
        if self.null_mean_shift {
            t.shift = GaussianShift::NullMean;
        }
        t
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Walk,
}

impl From<Method> for WalkMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => WalkMethod::ExactSAW,
            Method::Walk => WalkMethod::WalkMatrix,
        }
    }
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Path length; defaults to ⌈ln n⌉ (walk) or 3 (exact).
    #[arg(long)]
    k: Option<usize>,
    /// Wedge steps; defaults to the channel-matched value.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_enum, default_value_t = Method::Walk)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_PATH_BUDGET)]
    budget: u64,
}

impl WalkArgs {
    fn config(&self, params: &ModelParams) -> Result<WalkConfig> {
        let base = WalkConfig::default_for(params, self.method.into())?;
        let k = self.k.unwrap_or(base.k);
        let l = match self.l {
            Some(l) => l,
            None => saw::matched_wedges(params, k)?,
        };
        WalkConfig::new(k, l, self.method.into(), self.budget)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepTask {
    Detect,
    Recover,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    mus: Vec<f64>,
    #[arg(long)]
    d: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = SweepTask::Detect)]
    task: SweepTask,
    /// Cycle length (detect) or path length (recover).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, value_enum, default_value_t = Method::Walk)]
    method: Method,
}

enum Failure {
    Usage(String),
    Domain(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParams(_)
            | Error::BudgetExceeded { .. }
            | Error::NoSignal(_)
            | Error::Unsupported(_)
            | Error::Domain { .. }
            | Error::Undefined(_)
            | Error::LimitExceeded { .. } => Failure::Domain(msg),
            Error::Parse { .. } | Error::Dimension { .. } | Error::LengthMismatch { .. } | Error::Config(_) => {
                Failure::Usage(msg)
            }
            Error::Io(_) | Error::Csv(_) => Failure::Internal(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Successful outcomes that still map to a non-zero exit.
enum Done {
    Ok,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = std::panic::catch_unwind(|| dispatch(&cli))
        .unwrap_or_else(|_| Err(Failure::Internal("unexpected panic".into())));
    match res {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Infeasible) => ExitCode::from(2),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<Done> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        // ignore the error if the global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Sample(m) => {
            let inst = sample_instance(&m.params()?, seed);
            emit(out, &instance_io::to_string(&inst))?;
        }
        Command::Cycles { instance, k, l, budget } => {
            let inst = load(instance)?;
            let index = CycleIndex::new(*k, *l)?;
            let r = cycle_statistic(&inst, index, *budget)?;
            let m = theoretical_moments(&inst.params, index);
            emit(
                out,
                &format!(
                    "k,l,raw,centered,normalized,null_mean,null_var,alt_mean\n{k},{l},{},{},{},{},{},{}\n",
                    r.raw, r.centered, r.normalized, m.null_mean, m.null_variance, m.alt_mean
                ),
            )?;
        }
        Command::Detect { instance, k, level, alt, budget } => {
            let inst = load(instance)?;
            let alt = alt.resolve(&inst.params)?;
            let json = if alt.mu() == 0.0 {
                serde_json::to_string(&poisson_cycle_test(&inst, &alt, *k)?)
            } else {
                serde_json::to_string(&detection_test_with_budget(&inst, &alt, *k, *level, *budget)?)
            };
            emit_json(out, json)?;
        }
        Command::Saw { walk } => {
            let inst = load(&walk.instance)?;
            let p = pair_estimator(&inst, &walk.config(&inst.params)?)?.p;
            let mut s = String::from("i,j,P_ij\n");
            for i in 0..inst.n() {
                for j in i + 1..inst.n() {
                    writeln!(s, "{i},{j},{}", p[(i, j)]).unwrap();
                }
            }
            emit(out, &s)?;
        }
        Command::Recover { walk, delta_prime } => {
            let inst = load(&walk.instance)?;
            let report = weak_recovery_pipeline(&inst, &walk.config(&inst.params)?, *delta_prime, seed)?;
            emit_json(out, serde_json::to_string(&report))?;
            if !report.feasible {
                eprintln!("fit infeasible at the smallest delta'");
                return Ok(Done::Infeasible);
            }
        }
        Command::Oracle { command } => match command {
            OracleCommand::Lr { instance, alt } => {
                let inst = load(instance)?;
                let log_l = exact_log_likelihood_ratio(&inst, &alt.resolve(&inst.params)?)?;
                emit_json(out, serde_json::to_string(&serde_json::json!({ "log_L": log_l, "L": log_l.exp() })))?;
            }
            OracleCommand::Posterior { instance, alt } => {
                let inst = load(instance)?;
                let m = bayes_pairwise_posterior(&inst, &alt.resolve(&inst.params)?)?;
                let n = m.nrows();
                let mut s = (0..n).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
                s.push('\n');
                for i in 0..n {
                    let row: Vec<String> = (0..n).map(|j| m[(i, j)].to_string()).collect();
                    s.push_str(&row.join(","));
                    s.push('\n');
                }
                emit(out, &s)?;
            }
        },
        Command::Lr { command } => match command {
            LrCommand::Sample { k_max, reps, model, series } => {
                let params = model.params()?;
                let trunc = series.truncation(*k_max).checked(&params)?;
                let mut s = String::from("rep,logLR\n");
                for r in 0..*reps {
                    let v = total(&limiting_loglr_terms_h0(&params, &trunc, cell_seed(seed, 0, r))?);
                    writeln!(s, "{r},{v}").unwrap();
                }
                emit(out, &s)?;
            }
            LrCommand::Eval { instance, k_max, alt, series, budget } => {
                let inst = load(instance)?;
                let alt = alt.resolve(&inst.params)?;
                let trunc = series.truncation(*k_max).checked(&alt)?;
                let v = total(&empirical_loglr_terms(&inst, &alt, &trunc, *budget)?);
                emit(out, &format!("instance,logLR\n{},{v}\n", instance.display()))?;
            }
        },
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
            let opts = RunOptions { threads: cli.threads, output_dir: Some(dir.clone()) };
            let tables = run_experiment(&cfg, &opts)?;
            let files: Vec<serde_json::Value> = tables
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "task": t.task.name(),
                        "path": harness::result_path(&dir, t.task).display().to_string(),
                        "rows": t.rows.len(),
                        "errors": t.rows.iter().filter(|r| r.is_error()).count(),
                    })
                })
                .collect();
            emit_json(None, serde_json::to_string(&serde_json::json!({ "results": files })))?;
        }
        Command::Sweep(a) => {
            let task = match a.task {
                SweepTask::Detect => Task::Detect,
                SweepTask::Recover => Task::Recover,
            };
            let mut detect = DetectKnobs { level: a.level, ..DetectKnobs::default() };
            let mut recover = RecoverKnobs { method: a.method.into(), ..RecoverKnobs::default() };
            if let Some(k) = a.k {
                detect.k = k;
                recover.k = Some(k);
            }
            let spec = SweepSpec {
                lambdas: a.lambdas.clone(),
                mus: a.mus.clone(),
                fixed: Fixed { d: a.d, gamma: a.gamma, n: a.n },
                replications: a.reps,
                task,
                base_seed: seed,
                detect,
                recover,
            };
            emit(out, &sweep_to_csv(&sweep_phase_diagram(&spec, cli.threads)?)?)?;
        }
        Command::Summarize { input } => {
            let table = ResultTable::read(input)?;
            emit(out, &summary_to_csv(&summarize(&table)?)?)?;
        }
    }
    Ok(Done::Ok)
}

fn load(path: &Path) -> CliResult<Instance> {
    load_instance(path).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => harness::write_atomic(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, json: serde_json::Result<String>) -> CliResult<()> {
    let mut s = json.map_err(|e| Failure::Internal(e.to_string()))?;
    s.push('\n');
    emit(out, &s)
}
