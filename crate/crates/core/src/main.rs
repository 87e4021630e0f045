use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fjmedia::harness::{
    manifest_path, run_experiment, write_outputs, ExperimentConfig, GraphSource, Mode, DEFAULT_INNATE_MU,
    DEFAULT_INNATE_VAR, DEFAULT_REPETITIONS,
};
use fjmedia::numerics::DEFAULT_TOL;
use fjmedia::periods::{DEFAULT_FIXED_POINT_TOL, DEFAULT_MAX_PERIODS};

/// FJ opinion dynamics with stubborn media sources.
#[derive(Debug, Parser)]
#[command(name = "fjmedia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a graph and write it as an edge list.
    Generate(GenerateArgs),
    /// Equilibrium sums with media, plus their bounds.
    Equilibrium(RunArgs),
    /// Multi-period runs where media re-anchor to the current mean.
    Periods(RunArgs),
    /// Single non-stubborn source attached to every node.
    Nonstubborn(RunArgs),
    /// Closed-form bounds and predictions only, no solves.
    Bounds(RunArgs),
    /// Re-run the configuration recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the output path recorded in the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Generator {
    Ba,
    Dreg,
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Edge-list file (`u v [w]` per line).
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    gen: Option<Generator>,
    #[arg(long)]
    n: Option<usize>,
    /// Edges per new node (ba).
    #[arg(long)]
    m: Option<usize>,
    /// Degree (dreg).
    #[arg(long)]
    d: Option<usize>,
}

impl GraphArgs {
    fn source(&self) -> Result<GraphSource> {
        if let Some(path) = &self.graph {
            return Ok(GraphSource::File(path.clone()));
        }
        let n = self.n.context("--n is required with --gen")?;
        match self.gen {
            Some(Generator::Ba) => Ok(GraphSource::BarabasiAlbert { n, m: self.m.context("--m is required for ba")? }),
            Some(Generator::Dreg) => Ok(GraphSource::RandomRegular { n, d: self.d.context("--d is required for dreg")? }),
            None => bail!("either --graph or --gen is required"),
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Fraction of nodes attached to the upper source M.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.025)]
    beta: f64,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_PERIODS)]
    max_periods: usize,
    /// Downward radicalization threshold on the mean; defaults to 10/n.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Stop when no opinion moves more than this in a period; 0 disables.
    #[arg(long, default_value_t = DEFAULT_FIXED_POINT_TOL)]
    fixed_point_tol: f64,
    #[arg(long, default_value_t = DEFAULT_INNATE_MU)]
    innate_mu: f64,
    /// Variance (not standard deviation) of the innate Gaussian.
    #[arg(long, default_value_t = DEFAULT_INNATE_VAR)]
    innate_var: f64,
    /// CSV output; a `.manifest` file is written beside it. Stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, mode: Mode) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(mode, self.graph.source()?);
        cfg.alpha = self.alpha;
        cfg.beta = self.beta;
        cfg.gamma = self.gamma;
        cfg.repetitions = self.reps;
        cfg.base_seed = self.seed;
        cfg.tol = self.tol;
        cfg.max_periods = self.max_periods;
        cfg.epsilon = self.epsilon;
        cfg.fixed_point_tol = self.fixed_point_tol;
        cfg.innate_mu = self.innate_mu;
        cfg.innate_var = self.innate_var;
        cfg.output = self.out.clone();
        Ok(cfg)
    }
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(cfg)?;
    match &cfg.output {
        Some(path) => {
            write_outputs(&out, path)?;
            eprintln!("wrote {} rows to {} (manifest {})", out.rows.len(), path.display(), manifest_path(path).display());
        }
        None => std::io::stdout().lock().write_all(out.rows.to_csv().as_bytes())?,
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let source = args.graph.source()?;
    if matches!(source, GraphSource::File(_)) {
        bail!("generate needs --gen");
    }
    let g = source.build(args.seed)?;
    let header = [format!("generator {source}"), format!("seed {}", args.seed)];
    let text = g.to_edge_list(&header);
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => generate(args),
        Command::Equilibrium(args) => args.config(Mode::Equilibrium).and_then(|c| run(&c)),
        Command::Periods(args) => args.config(Mode::Periods).and_then(|c| run(&c)),
        Command::Nonstubborn(args) => args.config(Mode::NonStubborn).and_then(|c| run(&c)),
        Command::Bounds(args) => args.config(Mode::Bounds).and_then(|c| run(&c)),
        Command::Replay { manifest, out } => fs::read_to_string(manifest)
            .with_context(|| format!("reading {}", manifest.display()))
            .and_then(|text| Ok(ExperimentConfig::from_manifest(&text)?))
            .and_then(|mut cfg| {
                if out.is_some() {
                    cfg.output = out.clone();
                }
                run(&cfg)
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
