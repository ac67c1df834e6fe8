use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use swcluster::config::{ExperimentConfig, Generator, Pipeline};
use swcluster::generate::generate_stream;
use swcluster::{run_experiment, run_verify, Suite};
use swcluster_core::{DistanceMode, Technique};

#[derive(Parser)]
#[command(name = "swcluster", version, about = "Sliding-window k-median and coreset experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the smooth-histogram k-median / k-means pipeline.
    Kmedian(RunArgs),
    /// Run the sliding-window coreset pipeline.
    Coreset(RunArgs),
    /// Write a generated stream as CSV.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the property suites.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV stream; replaces the configured generator.
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mode: Option<DistanceMode>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    technique: Option<Technique>,
    #[arg(long)]
    leaf_capacity: Option<usize>,
    #[arg(long)]
    oracle_every: Option<u64>,
    /// Takes precedence over SWCLUSTER_SEED, which in turn overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record per-step wall-clock times in the report.
    #[arg(long)]
    timings: bool,
}

impl RunArgs {
    fn config(&self, pipeline: Pipeline) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        c.pipeline = pipeline;
        if let Some(p) = &self.stream {
            c.generator = Generator::File { path: p.clone() };
            if self.n.is_none() && self.config.is_none() {
                c.n = u64::MAX;
            }
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(n, d, window, k, beta, gamma, mode, eps, delta, technique, oracle_every);
        if self.leaf_capacity.is_some() {
            c.leaf_capacity = self.leaf_capacity;
        }
        if let Some(s) = resolve_seed(self.seed)? {
            c.seed = s;
        }
        if let Generator::File { path } = &c.generator {
            // the dimension of a file stream is whatever the file holds
            let first = swcluster_core::io::read_points_file::<f64>(path)
                .with_context(|| format!("reading stream {}", path.display()))?;
            if let Some(p) = first.first() {
                c.d = p.len();
            }
            c.n = c.n.min(first.len() as u64).max(1);
        }
        c.validate()?;
        Ok(c)
    }
}

fn resolve_seed(flag: Option<u64>) -> anyhow::Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SWCLUSTER_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("SWCLUSTER_SEED={v:?} is not a u64"))?)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context("reading SWCLUSTER_SEED"),
    }
}

fn emit(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Kmedian(a) => run_pipeline(&a, Pipeline::Kmedian),
        Command::Coreset(a) => run_pipeline(&a, Pipeline::Coreset),
        Command::Gen { run, out } => {
            let c = run.config(Pipeline::Kmedian)?;
            let stream = generate_stream(&c)?;
            let mut text = String::new();
            for p in stream {
                let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            emit(out.as_ref(), &text)?;
            Ok(true)
        }
        Command::Verify {
            suite,
            seed,
            report,
        } => {
            let r = run_verify(suite, resolve_seed(seed)?.unwrap_or(1))?;
            let mut text = serde_json::to_string_pretty(&r)?;
            text.push('\n');
            emit(report.as_ref(), &text)?;
            Ok(r.passed())
        }
    }
}

fn run_pipeline(a: &RunArgs, pipeline: Pipeline) -> anyhow::Result<bool> {
    let c = a.config(pipeline)?;
    let report = run_experiment(&c, a.timings)?;
    emit(a.report.as_ref(), &report.to_json()?)?;
    for v in report.hard_failures() {
        eprintln!("hard failure at N={}: {} ({})", v.n, v.kind, v.detail);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
