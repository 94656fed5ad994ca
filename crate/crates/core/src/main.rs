use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use alpha_vqe::experiments::{emit, parse_list, run, Command, ModeName, RunConfig};
use alpha_vqe::Result;

/// Depth-constrained Bayesian phase and expectation estimation experiments.
#[derive(Parser)]
#[command(name = "alpha-vqe", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form Bayes risk against numerical quadrature.
    RiskSurface(Opts),
    /// Ensemble phase estimation against the analytic precision curve.
    PhaseSim(Opts),
    /// Measurement counts under a depth budget, with and without restarts.
    Tradeoff(Opts),
    /// Two-stage expectation estimates on simulated states.
    Expectation(Opts),
    /// Variational minimisation of a Pauli-sum Hamiltonian.
    Vqe(Opts),
    /// Collapse measurement probabilities against their closed forms.
    CollapseCheck(Opts),
}

#[derive(Args, Default)]
struct Opts {
    /// `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    epsilon: Option<String>,
    /// Comma-separated list of depth budgets (powers of U).
    #[arg(long)]
    dmax: Option<String>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    phases: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    hamiltonian: Option<PathBuf>,
    /// exact, statistical or alpha.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    /// Prefactor of the schedule's power.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Standard deviations the expectation precision should span.
    #[arg(long)]
    coverage: Option<f64>,
    /// Comma-separated true expectation values.
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    /// Comma-separated powers for the risk grid.
    #[arg(long)]
    powers: Option<String>,
    /// Comma-separated prior widths for the risk grid.
    #[arg(long)]
    sigmas: Option<String>,
    /// Comma-separated offsets mu - theta for the risk grid.
    #[arg(long, allow_hyphen_values = true)]
    offsets: Option<String>,
}

fn list(v: &Option<String>) -> Result<Option<Vec<f64>>> {
    v.as_deref().map(parse_list).transpose()
}

impl Opts {
    fn to_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            seed: self.seed,
            out: self.out.clone(),
            alpha: list(&self.alpha)?,
            epsilon: list(&self.epsilon)?,
            dmax: list(&self.dmax)?,
            particles: self.particles,
            phases: self.phases,
            iters: self.iters,
            hamiltonian: self.hamiltonian.clone(),
            mode: self.mode.as_deref().map(str::parse::<ModeName>).transpose()?,
            layers: self.layers,
            scale: self.scale,
            trials: self.trials,
            coverage: self.coverage,
            targets: list(&self.targets)?,
            powers: list(&self.powers)?,
            sigmas: list(&self.sigmas)?,
            offsets: list(&self.offsets)?,
        })
    }
}

fn execute(command: Command, opts: &Opts) -> Result<()> {
    let flags = opts.to_config()?;
    let base = match &opts.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let config = base.overlay(&flags);
    let report = run(command, &config)?;
    if let Some(summary) = &report.summary {
        eprintln!("{summary}");
    }
    emit(&report, &config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Sub::RiskSurface(o) => (Command::RiskSurface, o),
        Sub::PhaseSim(o) => (Command::PhaseSim, o),
        Sub::Tradeoff(o) => (Command::Tradeoff, o),
        Sub::Expectation(o) => (Command::Expectation, o),
        Sub::Vqe(o) => (Command::Vqe, o),
        Sub::CollapseCheck(o) => (Command::CollapseCheck, o),
    };
    match execute(command, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
