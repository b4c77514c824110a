//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algorithms::{self, AlgorithmConfig, AlgorithmKind, Init, StopRule};
use crate::analysis::{self, ComparisonMode};
use crate::error::HarnessError;
use crate::exec::{Execution, WORKERS_ENV};
use crate::harness::experiment::{
    read_csv, run_experiment, write_csv, BudgetRule, ExperimentSpec, TargetKind,
};
use crate::harness::instance::{closed_form_target, generate_instance, InstanceSpec};
use crate::harness::scaling::{scaling_summary, GrowthModel};
use crate::harness::selftest::run_selftest;
use crate::model::ProblemInstance;

#[derive(Debug, Parser)]
#[command(
    name = "ccknap",
    version,
    about = "Chance-constrained knapsack with correlated weights: RLS / (1+1) EA runs, oracles and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trajectory and print its record as JSON.
    Run(RunArgs),
    /// Run a batch of trials and write the results CSV.
    Experiment(ExperimentArgs),
    /// Enumerate all solutions of a small instance.
    Oracle(OracleArgs),
    /// Print the per-level covariance table.
    Levels(InstanceArgs),
    /// Check invariants on randomized small instances.
    Selftest(SelftestArgs),
    /// Fit growth models to a results CSV.
    Summary(SummaryArgs),
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// Instance file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Compare fitness values in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Rls,
    Ea,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Feasible,
    Oracle,
    ClosedForm,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Uniform,
    AllOnes,
    AllZeros,
}

impl From<InitArg> for Init {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Uniform => Init::UniformRandom,
            InitArg::AllOnes => Init::AllOnes,
            InitArg::AllZeros => Init::AllZeros,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Instance file (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "rls")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluation budget: a count or `<mult>*<model>`, e.g. `10*n3logn`.
    #[arg(long, default_value = "1000000")]
    budget: String,
    #[arg(long, value_enum, default_value = "none")]
    target: TargetArg,
    #[arg(long, value_enum, default_value = "uniform")]
    init: InitArg,
    /// Include the improvement trajectory in the output.
    #[arg(long)]
    trajectory: bool,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Worker threads (1 runs sequentially).
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Print a scaling summary to stderr after the run.
    #[arg(long)]
    summary: bool,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    instances: usize,
}

#[derive(Debug, Args)]
struct SummaryArgs {
    /// Results CSV written by `experiment`.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    json: bool,
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn load_instance(path: &Path) -> Result<ProblemInstance, HarnessError> {
    generate_instance(&InstanceSpec::from_json(&read_text(path)?)?)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map_err(|source| HarnessError::Json {
        context: "serializing output".into(),
        source,
    })
}

fn io_err(source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        context: "writing output".into(),
        source,
    }
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), HarnessError> {
    let inst = load_instance(&args.spec)?;
    let kind = match args.algo {
        AlgoArg::Rls => AlgorithmKind::Rls,
        AlgoArg::Ea => AlgorithmKind::OnePlusOneEa,
        AlgoArg::Both => {
            return Err(HarnessError::InvalidSpec(vec![
                "run takes a single algorithm".into(),
            ]))
        }
    };
    let budget: BudgetRule = args.budget.parse()?;
    let mut cfg = AlgorithmConfig::new(kind, args.seed, budget.evaluations(inst.len()))
        .with_init(args.init.into());
    cfg.record_trajectory = args.trajectory;
    let stop = match args.target {
        TargetArg::None => StopRule::Budget,
        TargetArg::Feasible => StopRule::Feasible,
        TargetArg::ClosedForm => StopRule::Target(closed_form_target(&inst)?),
        TargetArg::Oracle => StopRule::Target(
            analysis::brute_force_optimum(&inst, ComparisonMode::Tolerant, Execution::from_env())?
                .optimum_fitness,
        ),
    };
    let rec = algorithms::run_until(&inst, &cfg, stop)?;
    writeln!(out, "{}", to_json(&rec)?).map_err(io_err)
}

fn cmd_experiment(
    args: ExperimentArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), HarnessError> {
    let mut spec = ExperimentSpec::from_json(&read_text(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    match args.algo {
        Some(AlgoArg::Rls) => spec.algorithms = vec![AlgorithmKind::Rls],
        Some(AlgoArg::Ea) => spec.algorithms = vec![AlgorithmKind::OnePlusOneEa],
        Some(AlgoArg::Both) => spec.algorithms = AlgorithmKind::ALL.to_vec(),
        None => {}
    }
    if let Some(b) = &args.budget {
        spec.budget = b.parse()?;
    }
    match args.target {
        Some(TargetArg::Feasible) | Some(TargetArg::None) => spec.target = TargetKind::Feasible,
        Some(TargetArg::Oracle) => spec.target = TargetKind::Oracle,
        Some(TargetArg::ClosedForm) => spec.target = TargetKind::ClosedForm,
        None => {}
    }
    if let Some(init) = args.init {
        spec.init = init.into();
    }
    let rows = run_experiment(&spec, Execution::with_workers(args.workers))?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|source| HarnessError::Io {
                context: format!("creating {}", path.display()),
                source,
            })?;
            write_csv(&rows, std::io::BufWriter::new(file))?;
        }
        None => write_csv(&rows, &mut *out)?,
    }
    if args.summary {
        match scaling_summary(&rows, &GrowthModel::ALL) {
            Ok(report) => write!(err, "{report}").map_err(io_err)?,
            Err(e) => writeln!(err, "no scaling summary: {e}").map_err(io_err)?,
        }
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs, out: &mut dyn Write) -> Result<(), HarnessError> {
    let inst = load_instance(&args.instance.spec)?;
    let mode = if args.exact {
        ComparisonMode::Exact
    } else {
        ComparisonMode::Tolerant
    };
    let res = analysis::brute_force_optimum(&inst, mode, Execution::from_env())?;
    if args.instance.json {
        return writeln!(out, "{}", to_json(&res)?).map_err(io_err);
    }
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err);
    w(
        out,
        format!(
            "n = {} (K = {}, m = {})",
            inst.len(),
            inst.groups(),
            inst.group_size()
        ),
    )?;
    w(out, format!("optimum fitness = {}", res.optimum_fitness))?;
    w(out, format!("maximizers = {}", res.optimum_solutions.len()))?;
    if let Some(first) = res.optimum_solutions.first() {
        w(out, format!("first maximizer = {first}"))?;
    }
    w(
        out,
        format!("max feasible level r = {}", res.max_feasible_level),
    )?;
    write_level_table(out, &res.per_level)
}

fn write_level_table(
    out: &mut dyn Write,
    levels: &[analysis::LevelSummary],
) -> Result<(), HarnessError> {
    writeln!(
        out,
        "{:>5} {:>14} {:>14} {:>16} {:>9}",
        "level", "balanced", "unbalanced", "bound", "feasible"
    )
    .map_err(io_err)?;
    for l in levels {
        let bound = l
            .feasible_covariance_bound
            .map_or_else(|| "-".to_string(), |b| format!("{b:.6}"));
        writeln!(
            out,
            "{:>5} {:>14.6} {:>14.6} {:>16} {:>9}",
            l.level, l.balanced_covariance, l.most_unbalanced_covariance, bound, l.level_feasible
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn cmd_levels(args: InstanceArgs, out: &mut dyn Write) -> Result<(), HarnessError> {
    let inst = load_instance(&args.spec)?;
    let levels = analysis::level_summaries(&inst);
    let r = analysis::max_feasible_level(&inst);
    if args.json {
        #[derive(serde::Serialize)]
        struct Levels<'a> {
            max_feasible_level: usize,
            levels: &'a [analysis::LevelSummary],
        }
        let doc = Levels {
            max_feasible_level: r,
            levels: &levels,
        };
        return writeln!(out, "{}", to_json(&doc)?).map_err(io_err);
    }
    writeln!(out, "r = {r}").map_err(io_err)?;
    write_level_table(out, &levels)
}

fn cmd_selftest(args: SelftestArgs, out: &mut dyn Write) -> Result<bool, HarnessError> {
    let checks = run_selftest(args.seed, args.instances);
    for c in &checks {
        writeln!(
            out,
            "[{}] {} ({} cases, {} violations)",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.violations
        )
        .map_err(io_err)?;
    }
    Ok(checks.iter().all(|c| c.passed()))
}

fn cmd_summary(args: SummaryArgs, out: &mut dyn Write) -> Result<(), HarnessError> {
    let file = fs::File::open(&args.csv).map_err(|source| HarnessError::Io {
        context: format!("opening {}", args.csv.display()),
        source,
    })?;
    let rows = read_csv(file)?;
    let report = scaling_summary(&rows, &GrowthModel::ALL)?;
    if args.json {
        writeln!(out, "{}", to_json(&report)?).map_err(io_err)
    } else {
        write!(out, "{report}").map_err(io_err)
    }
}

/// Parses `args` (program name first) and runs the subcommand, writing to the
/// given streams. Returns the process exit code.
pub fn cli_main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let stream: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(stream, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Experiment(a) => cmd_experiment(a, out, err),
        Command::Oracle(a) => cmd_oracle(a, out),
        Command::Levels(a) => cmd_levels(a, out),
        Command::Selftest(a) => match cmd_selftest(a, out) {
            Ok(true) => Ok(()),
            Ok(false) => {
                let _ = writeln!(err, "error: selftest found violations");
                return 1;
            }
            Err(e) => Err(e),
        },
        Command::Summary(a) => cmd_summary(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// [`cli_main_with`] on the process's stdout and stderr.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(args, &mut stdout.lock(), &mut stderr.lock())
}
