use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use evoagent::benchmarks::{make_instance_with, ProblemKind};
use evoagent::ea::{OperatorConfig, SelectionScheme};
use evoagent::experiment::report::{self, GroupColumn};
use evoagent::experiment::{self, ExperimentConfig, Model, TrialSim};
use evoagent::netsim::LinkSpec;

#[derive(Parser)]
#[command(
    name = "evoagent",
    version,
    about = "Evolvable Agent vs. Island model experiments on a simulated network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated trials of one configuration and write one CSV row per run.
    Run(RunArgs),
    /// Run the same configuration over a range of node counts.
    Sweep(SweepArgs),
    /// Aggregate a run CSV into per-group statistics.
    Summarize(SummarizeArgs),
    /// Benchmark instance utilities.
    Instance {
        #[command(subcommand)]
        action: InstanceCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    BestTwo,
    TwoTournaments,
}

#[derive(Args)]
struct TrialArgs {
    /// key=value file supplying defaults for any flag; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "evag")]
    model: String,
    #[arg(long, default_value = "sphere")]
    problem: String,
    /// Defaults to the problem's standard dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    #[arg(long, default_value_t = experiment::DEFAULT_POPULATION)]
    population: usize,
    #[arg(long, default_value_t = experiment::DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = experiment::DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    migration_freq: u64,
    #[arg(long, default_value_t = 2.0)]
    latency_ms: f64,
    /// Link bandwidth in bytes per second.
    #[arg(long, default_value_t = 125e6)]
    bandwidth: f64,
    /// Simulated CPU time per evaluation, microseconds.
    #[arg(long, default_value_t = 10.0)]
    eval_cost_us: f64,
    #[arg(long, default_value_t = 0.9)]
    pc: f64,
    #[arg(long, default_value_t = 0.01)]
    pm: f64,
    #[arg(long, default_value_t = 2)]
    tournament: usize,
    #[arg(long, value_enum, default_value = "best-two")]
    selection: SelectionArg,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the network event log of the first run here.
    #[arg(long)]
    event_log: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    trial: TrialArgs,
    #[arg(long, default_value_t = 1)]
    nodes: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    trial: TrialArgs,
    #[arg(long, default_value_t = 1)]
    nodes_from: usize,
    #[arg(long, default_value_t = 8)]
    nodes_to: usize,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "model,problem,nodes")]
    group_by: String,
    /// Report Welch's t of every group against this model's matching group.
    #[arg(long)]
    reference_model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum InstanceCommand {
    /// Write a seeded instance as a text file.
    Export {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Identity rotation (Rastrigin only).
        #[arg(long)]
        unrotated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl TrialArgs {
    fn config(&self, nodes: usize) -> Result<ExperimentConfig> {
        let model: Model = self.model.parse()?;
        let problem: ProblemKind = self.problem.parse()?;
        let link = LinkSpec::new(self.latency_ms * 1e-3, self.bandwidth)?;
        let cfg = ExperimentConfig {
            model,
            problem,
            dim: self.dim.unwrap_or(problem.default_dim()),
            instance_seed: self.instance_seed,
            nodes,
            population: self.population,
            budget: self.budget,
            operators: OperatorConfig {
                crossover_prob: self.pc,
                mutation_prob: self.pm,
                tournament_size: self.tournament,
                selection: match self.selection {
                    SelectionArg::BestTwo => SelectionScheme::BestTwoOfK,
                    SelectionArg::TwoTournaments => SelectionScheme::TwoTournaments,
                },
            },
            migration_frequency: self.migration_freq,
            link,
            eval_cost: self.eval_cost_us * 1e-6,
            runs: self.runs,
            base_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_event_log(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut sim = TrialSim::new(cfg, 0)?;
    sim.enable_event_log();
    sim.run_to_end();
    let mut w = open_output(Some(path))?;
    sim.write_event_log(&mut w)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn emit_runs(trial: &TrialArgs, results: &[experiment::RunResult]) -> Result<()> {
    let label = trial
        .out
        .as_ref()
        .map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    let mut w = open_output(trial.out.as_deref())?;
    report::write_runs_csv(&mut w, results).with_context(|| format!("cannot write {label}"))?;
    w.flush().with_context(|| format!("cannot write {label}"))?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.trial.config(args.nodes)?;
            let results = experiment::run_all(&cfg)?;
            if let Some(p) = &args.trial.event_log {
                write_event_log(&cfg, p)?;
            }
            emit_runs(&args.trial, &results)
        }
        Command::Sweep(args) => {
            if args.nodes_from == 0 || args.nodes_from > args.nodes_to {
                bail!("invalid node range {}..={}", args.nodes_from, args.nodes_to);
            }
            let cfg = args.trial.config(args.nodes_from)?;
            for n in args.nodes_from..=args.nodes_to {
                ExperimentConfig {
                    nodes: n,
                    ..cfg.clone()
                }
                .validate()?;
            }
            let results = experiment::sweep(&cfg, args.nodes_from..=args.nodes_to)?;
            emit_runs(&args.trial, &results)
        }
        Command::Summarize(args) => {
            let file = File::open(&args.input)
                .with_context(|| format!("cannot open {}", args.input.display()))?;
            let rows = report::read_runs_csv(file)
                .with_context(|| format!("cannot read {}", args.input.display()))?;
            let columns = GroupColumn::parse_list(&args.group_by)?;
            let summary = report::summarize_rows(&rows, &columns, args.reference_model.as_deref());
            let mut w = open_output(args.out.as_deref())?;
            report::write_summary_csv(&mut w, &columns, &summary)?;
            w.flush()?;
            Ok(())
        }
        Command::Instance {
            action:
                InstanceCommand::Export {
                    problem,
                    dim,
                    seed,
                    unrotated,
                    out,
                },
        } => {
            let kind: ProblemKind = problem.parse()?;
            let rotation = unrotated.then_some(false);
            let inst = make_instance_with(kind, dim.unwrap_or(kind.default_dim()), seed, rotation)?;
            let mut w = open_output(out.as_deref())?;
            w.write_all(inst.export_text().as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

/// Turns `key = value` lines into `--key value` arguments. `#` starts a
/// comment; underscores in keys become dashes.
fn config_args(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key == "config" {
            bail!(
                "{}:{}: nested config files are not supported",
                path.display(),
                i + 1
            );
        }
        out.push(format!("--{key}"));
        out.push(v.trim().to_string());
    }
    Ok(out)
}

/// Splices config-file arguments in right after the subcommand, so any flag
/// given on the command line overrides them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let pos = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => PathBuf::from(p),
        None => match args.get(pos + 1) {
            Some(p) => PathBuf::from(p),
            None => bail!("--config needs a file"),
        },
    };
    let sub = args
        .iter()
        .position(|a| a == "run" || a == "sweep")
        .filter(|s| *s < pos)
        .context("--config is only supported by run and sweep")?;
    let mut out = args[..=sub].to_vec();
    out.extend(config_args(&path)?);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn parse_cli() -> Result<Cli, clap::Error> {
    let args: Vec<String> = std::env::args().collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            return Err(Cli::command().error(clap::error::ErrorKind::Io, format!("{e:#}")));
        }
    };
    let matches = Cli::command()
        .args_override_self(true)
        .try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
