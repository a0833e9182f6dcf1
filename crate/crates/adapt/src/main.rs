use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sdlk::pipeline::experiment::run_experiment_with;
use sdlk::pipeline::{generate_synthetic, load_csv, write_csv, SyntheticKind};
use sdlk::types::SplitPolicy;
use sdlk::{AnchorPolicy, DomainPair, ExperimentConfig, KernelSpec, SubspaceMethod};

#[derive(Parser)]
#[command(name = "adapt", version, about = "Domain adaptation with learnable kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated adaptation trials and write a JSON report.
    Run(RunArgs),
    /// Write a synthetic source/target pair as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "tca")]
    method: SubspaceMethod,
    #[arg(long, default_value = "poly:a=0.01,b=0,d=1")]
    kernel_base: KernelSpec,
    #[arg(long, default_value = "rbf:sigma=3")]
    kernel_beta: KernelSpec,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 5e4)]
    mu_kernel: f64,
    /// Subspace regularizer.
    #[arg(long, default_value_t = 10.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the base kernel as is.
    #[arg(long)]
    no_kernel_learning: bool,
    #[arg(long, default_value = "union")]
    anchors: AnchorPolicy,
    /// `fraction:F` or `per-class:K`.
    #[arg(long, default_value = "fraction:0.5")]
    split: SplitPolicy,
    #[arg(long, default_value_t = 1)]
    knn_k: usize,
    #[arg(long, default_value_t = 5)]
    lap_k: usize,
    #[arg(long, default_value_t = 200)]
    max_outer: usize,
    #[arg(long)]
    out: PathBuf,
    /// Trust-region iterations as JSON lines, one object per outer step.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "shifted-gaussians")]
    kind: SyntheticKind,
    /// Samples per class in each domain.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature dimension (ignored for rotated moons).
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long)]
    out_source: PathBuf,
    #[arg(long)]
    out_target: PathBuf,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            method: self.method,
            kernel_base: self.kernel_base,
            kernel_beta: self.kernel_beta,
            eta: self.eta,
            mu_kernel: self.mu_kernel,
            mu_sub: self.mu,
            lambda_sub: self.lambda,
            gamma: self.gamma,
            dim: self.dim,
            tol: self.tol,
            trials: self.trials,
            seed: self.seed,
            knn_k: self.knn_k,
            kernel_learning: !self.no_kernel_learning,
            anchors: self.anchors,
            split: self.split,
            laplacian_k: self.lap_k,
            max_outer: self.max_outer,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.config();
    config.validate()?;
    let source = load_csv(&args.source, true).with_context(|| format!("reading {}", args.source.display()))?;
    let target = load_csv(&args.target, true).with_context(|| format!("reading {}", args.target.display()))?;
    let pair = DomainPair::new(source, target)?;

    let mut trace = args.trace_out.as_deref().map(create).transpose()?;
    let report = run_experiment_with(&config, &pair, |trial, out| {
        if let (Some(w), Some(learned)) = (trace.as_mut(), &out.learned) {
            for record in &learned.diagnostics.records {
                let line = serde_json::json!({ "trial": trial, "record": record });
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    })?;
    if let Some(mut w) = trace {
        w.flush()?;
    }

    let mut out = create(&args.out)?;
    out.write_all(report.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    eprintln!(
        "{} trials, mean accuracy {:.4} (std {:.4})",
        report.trials.len(),
        report.mean_accuracy,
        report.std_accuracy
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let pair = generate_synthetic(args.kind, args.n, args.shift, args.dim, args.seed)?;
    write_csv(&args.out_source, &pair.source, true)?;
    write_csv(&args.out_target, &pair.target, true)?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Synth(args) => synth(args),
    }
}
