//! Seeded experiment harness behind the `alpha-vqe` binary.
//!
//! Every subcommand renders a CSV table preceded by `#` comment lines holding
//! the tool version and the fully resolved configuration. Output contains no
//! timestamps, so the same seed and flags always produce the same bytes.
//! Settings resolve as defaults < config file < command-line flags.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::bayes::{bayes_risk, bayes_risk_quadrature, ExperimentSetting, NormalBelief, DEFAULT_PARTICLES, GRID_HALF_WIDTH, GRID_POINTS};
use crate::error::{Error, Result};
use crate::expectation::{
    collapse_table, random_instance_in, simulated_collapse_table, single_qubit_with_expectation,
    two_stage_estimate, EstimatePath, TwoStageConfig,
};
use crate::optimizer::NelderMeadConfig;
use crate::phase::{ensemble_run, EnsembleConfig};
use crate::rng::substream;
use crate::schedule::{analytic_risk_curve, SchedulePolicy, TradeoffPoint};
use crate::statevector::{build_prop2_operator, prepare, Ansatz};
use crate::stats::{median, quantile};
use crate::vqe::{load_hamiltonian_file, optimize, EstimationMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RiskSurface,
    PhaseSim,
    Tradeoff,
    Expectation,
    Vqe,
    CollapseCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RiskSurface => "risk-surface",
            Command::PhaseSim => "phase-sim",
            Command::Tradeoff => "tradeoff",
            Command::Expectation => "expectation",
            Command::Vqe => "vqe",
            Command::CollapseCheck => "collapse-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeName {
    Exact,
    Statistical,
    Alpha,
}

impl FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ModeName::Exact),
            "statistical" => Ok(ModeName::Statistical),
            "alpha" => Ok(ModeName::Alpha),
            _ => Err(Error::invalid(format!("unknown mode \"{s}\" (expected exact, statistical or alpha)"))),
        }
    }
}

impl ModeName {
    fn as_str(self) -> &'static str {
        match self {
            ModeName::Exact => "exact",
            ModeName::Statistical => "statistical",
            ModeName::Alpha => "alpha",
        }
    }
}

/// User-supplied settings; `None` means "not given at this level".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub alpha: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub dmax: Option<Vec<f64>>,
    pub particles: Option<usize>,
    pub phases: Option<usize>,
    pub iters: Option<usize>,
    pub hamiltonian: Option<PathBuf>,
    pub mode: Option<ModeName>,
    pub layers: Option<usize>,
    /// Power prefactor of the schedule.
    pub scale: Option<f64>,
    pub trials: Option<usize>,
    /// Standard deviations the expectation precision should span.
    pub coverage: Option<f64>,
    /// Fixed true expectation values for `expectation`.
    pub targets: Option<Vec<f64>>,
    pub powers: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    pub offsets: Option<Vec<f64>>,
}

/// Comma-separated reals; the empty string is the empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::invalid(format!("invalid number \"{v}\"")))
        })
        .collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("invalid value \"{value}\" for {key}")))
}

impl RunConfig {
    /// Sets one key from its textual value, as used in config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = Some(parse_num(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "alpha" => self.alpha = Some(parse_list(v)?),
            "epsilon" => self.epsilon = Some(parse_list(v)?),
            "dmax" => self.dmax = Some(parse_list(v)?),
            "particles" => self.particles = Some(parse_num(key, v)?),
            "phases" => self.phases = Some(parse_num(key, v)?),
            "iters" => self.iters = Some(parse_num(key, v)?),
            "hamiltonian" => self.hamiltonian = Some(PathBuf::from(v)),
            "mode" => self.mode = Some(v.parse()?),
            "layers" => self.layers = Some(parse_num(key, v)?),
            "scale" => self.scale = Some(parse_num(key, v)?),
            "trials" => self.trials = Some(parse_num(key, v)?),
            "coverage" => self.coverage = Some(parse_num(key, v)?),
            "targets" => self.targets = Some(parse_list(v)?),
            "powers" => self.powers = Some(parse_list(v)?),
            "sigmas" => self.sigmas = Some(parse_list(v)?),
            "offsets" => self.offsets = Some(parse_list(v)?),
            _ => return Err(Error::invalid(format!("unknown key \"{key}\""))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got \"{line}\""),
            })?;
            config
                .set(key.trim(), value)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// `self` with every value set in `over` replaced.
    pub fn overlay(self, over: &RunConfig) -> RunConfig {
        fn pick<T: Clone>(base: Option<T>, over: &Option<T>) -> Option<T> {
            over.clone().or(base)
        }
        RunConfig {
            seed: pick(self.seed, &over.seed),
            out: pick(self.out, &over.out),
            alpha: pick(self.alpha, &over.alpha),
            epsilon: pick(self.epsilon, &over.epsilon),
            dmax: pick(self.dmax, &over.dmax),
            particles: pick(self.particles, &over.particles),
            phases: pick(self.phases, &over.phases),
            iters: pick(self.iters, &over.iters),
            hamiltonian: pick(self.hamiltonian, &over.hamiltonian),
            mode: pick(self.mode, &over.mode),
            layers: pick(self.layers, &over.layers),
            scale: pick(self.scale, &over.scale),
            trials: pick(self.trials, &over.trials),
            coverage: pick(self.coverage, &over.coverage),
            targets: pick(self.targets, &over.targets),
            powers: pick(self.powers, &over.powers),
            sigmas: pick(self.sigmas, &over.sigmas),
            offsets: pick(self.offsets, &over.offsets),
        }
    }

    fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn first_or(values: &Option<Vec<f64>>, default: f64, key: &str) -> Result<f64> {
    match values {
        None => Ok(default),
        Some(v) => v.first().copied().ok_or_else(|| Error::invalid(format!("{key} list is empty"))),
    }
}

/// A rendered experiment: CSV bytes plus the outcome of its internal checks.
#[derive(Debug)]
pub struct Report {
    pub command: Command,
    pub csv: Vec<u8>,
    /// One-line human summary, when the command has one.
    pub summary: Option<String>,
    /// Description of the first failed check.
    pub failure: Option<String>,
}

struct Table {
    header: Vec<(&'static str, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    footer: Vec<String>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self { header: Vec::new(), columns: columns.to_vec(), rows: Vec::new(), footer: Vec::new() }
    }

    fn meta(&mut self, key: &'static str, value: impl ToString) {
        self.header.push((key, value.to_string()));
    }

    fn render(&self, command: Command) -> Result<Vec<u8>> {
        let mut out = String::new();
        let _ = writeln!(out, "# alpha-vqe {VERSION}");
        let _ = writeln!(out, "# command = {}", command.name());
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let mut w = csv::Writer::from_writer(out.into_bytes());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let mut bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        for line in &self.footer {
            bytes.extend_from_slice(format!("# {line}\n").as_bytes());
        }
        Ok(bytes)
    }
}

fn fmt_opt(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

/// Runs `command` with the merged configuration.
pub fn run(command: Command, config: &RunConfig) -> Result<Report> {
    let (table, summary, failure) = match command {
        Command::RiskSurface => risk_surface(config)?,
        Command::PhaseSim => phase_sim(config)?,
        Command::Tradeoff => tradeoff(config)?,
        Command::Expectation => expectation(config)?,
        Command::Vqe => vqe(config)?,
        Command::CollapseCheck => collapse_check(config)?,
    };
    Ok(Report { command, csv: table.render(command)?, summary, failure })
}

/// Writes the report to `config.out` (or stdout) and turns a failed check into an error.
pub fn emit(report: &Report, config: &RunConfig) -> Result<()> {
    match &config.out {
        Some(path) => std::fs::write(path, &report.csv).map_err(|source| Error::Io { path: path.clone(), source })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&report.csv)
                .and_then(|_| stdout.flush())
                .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })?;
        }
    }
    match &report.failure {
        Some(msg) => Err(Error::CheckFailed(msg.clone())),
        None => Ok(()),
    }
}

type Outcome = (Table, Option<String>, Option<String>);

/// Largest relative error tolerated between the closed-form risk and quadrature.
pub const RISK_TOLERANCE: f64 = 1e-6;

fn risk_surface(config: &RunConfig) -> Result<Outcome> {
    let powers = config.powers.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    let sigmas = config.sigmas.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.25, 0.5, 1.0]);
    let offsets = config
        .offsets
        .clone()
        .unwrap_or_else(|| (0..=8).map(|i| i as f64 * PI / 8.0).collect());
    let mu = 0.3;
    let mut t = Table::new(&["m", "theta_offset", "sigma", "r2_closed_form", "r2_quadrature", "rel_err"]);
    t.meta("powers", join(&powers));
    t.meta("sigmas", join(&sigmas));
    t.meta("offsets", join(&offsets));
    t.meta("mu", mu);
    t.meta("max_m_sigma", 5);
    let mut worst: f64 = 0.0;
    for &m in &powers {
        for &sigma in &sigmas {
            if m * sigma > 5.0 {
                continue;
            }
            for &offset in &offsets {
                let s = ExperimentSetting::new(m, mu - offset);
                let belief = NormalBelief::new(mu, sigma)?;
                let closed = bayes_risk(&s, &belief);
                let quad = bayes_risk_quadrature(&s, &belief, GRID_HALF_WIDTH, GRID_POINTS)?;
                let rel = ((closed - quad) / quad).abs();
                worst = worst.max(rel);
                t.rows.push(vec![m.to_string(), offset.to_string(), sigma.to_string(), closed.to_string(), quad.to_string(), rel.to_string()]);
            }
        }
    }
    t.footer.push(format!("max_rel_err = {worst}"));
    let failure = (worst > RISK_TOLERANCE).then(|| format!("relative error {worst} exceeds {RISK_TOLERANCE}"));
    Ok((t, None, failure))
}

/// Iteration the second analytic curve is anchored at.
pub const CURVE_ANCHOR: usize = 20;

fn phase_sim(config: &RunConfig) -> Result<Outcome> {
    let alphas = config.alpha.clone().unwrap_or_else(|| vec![0.0, 0.5, 0.75, 1.0]);
    let scale = config.scale.unwrap_or(1.0);
    let phases = config.phases.unwrap_or(200);
    let particles = config.particles.unwrap_or(DEFAULT_PARTICLES);
    let iters = config.iters.unwrap_or(60);
    let seed = config.seed_or_default();
    let cap = config.dmax.as_ref().and_then(|d| d.first().copied());
    let mut t = Table::new(&[
        "alpha", "k", "mean_sigma", "median_sigma", "median_error", "variance_ratio", "analytic_prior", "analytic_anchored",
    ]);
    t.meta("seed", seed);
    t.meta("alpha", join(&alphas));
    t.meta("scale", scale);
    t.meta("phases", phases);
    t.meta("particles", particles);
    t.meta("iters", iters);
    t.meta("prior", "N(0, 1)");
    t.meta("dmax", cap.map(|c| c.to_string()).unwrap_or_else(|| "none".into()));
    t.meta("anchor_k", CURVE_ANCHOR);
    let mut failure = None;
    for (ai, &alpha) in alphas.iter().enumerate() {
        let mut policy = SchedulePolicy::alpha_qpe_scaled(alpha, scale)?;
        if let Some(c) = cap {
            policy = policy.with_depth_cap(c)?;
        }
        let ens = ensemble_run(&EnsembleConfig {
            policy,
            prior: NormalBelief::default(),
            n_phases: phases,
            iterations: iters,
            particles,
            seed: crate::rng::derive_seed(seed, "alpha", &[ai as u64]),
        })?;
        let rows = ens.rows();
        let anchor = rows.get(CURVE_ANCHOR).map(|r| r.mean_sigma);
        for r in &rows {
            let prior_curve = analytic_risk_curve(r.k as f64, 0.0, 1.0, alpha, scale)?;
            let anchored = match anchor {
                Some(a) if r.k >= CURVE_ANCHOR => analytic_risk_curve(r.k as f64, CURVE_ANCHOR as f64, a, alpha, scale)?,
                _ => f64::NAN,
            };
            if !r.mean_sigma.is_finite() && failure.is_none() {
                failure = Some(format!("non-finite sigma at alpha {alpha}, k {}", r.k));
            }
            t.rows.push(vec![
                alpha.to_string(),
                r.k.to_string(),
                r.mean_sigma.to_string(),
                r.median_sigma.to_string(),
                r.median_error.to_string(),
                fmt_opt(r.variance_ratio),
                prior_curve.to_string(),
                fmt_opt(anchored),
            ]);
        }
        if iters >= 40 {
            t.footer.push(format!("alpha = {alpha}: mean variance ratio over k in [10, 40] = {}", ens.variance_ratio(10..=40)));
        }
    }
    Ok((t, None, failure))
}

fn tradeoff(config: &RunConfig) -> Result<Outcome> {
    let eps = config.epsilon.clone().unwrap_or_else(|| vec![0.001, 0.005, 0.01, 0.05, 0.1]);
    let dmax = config
        .dmax
        .clone()
        .unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 1000.0]);
    let mut t = Table::new(&["epsilon", "d_max", "alpha_max", "n_min", "n_min_restarts", "ratio"]);
    t.meta("epsilon", join(&eps));
    t.meta("dmax", join(&dmax));
    let mut failure = None;
    for &e in &eps {
        for &d in &dmax {
            let p = TradeoffPoint::new(e, d)?;
            let ratio = p.ratio();
            let strict = d > 1.0 && d < 1.0 / e;
            let bad = ratio > 1.0 + 1e-12 || (strict && ratio >= 1.0);
            if bad && failure.is_none() {
                failure = Some(format!("ratio {ratio} at epsilon {e}, d_max {d}"));
            }
            t.rows.push(vec![
                e.to_string(),
                d.to_string(),
                p.alpha_max.to_string(),
                p.n_measurements.to_string(),
                p.n_measurements_restarts.to_string(),
                ratio.to_string(),
            ]);
        }
    }
    Ok((t, None, failure))
}

fn expectation(config: &RunConfig) -> Result<Outcome> {
    let alpha = first_or(&config.alpha, 0.5, "alpha")?;
    let d_max = first_or(&config.dmax, 32.0, "dmax")?;
    let epsilon = first_or(&config.epsilon, 0.02, "epsilon")?;
    let trials = config.trials.unwrap_or(50);
    let layers = config.layers.unwrap_or(2);
    let seed = config.seed_or_default();
    let mut two_stage = TwoStageConfig::new(alpha, d_max, epsilon)?;
    two_stage.particles = config.particles.unwrap_or(DEFAULT_PARTICLES);
    two_stage.coverage = config.coverage.unwrap_or(two_stage.coverage);
    two_stage.validate()?;

    let mut t = Table::new(&[
        "trial", "true_a", "path", "estimate", "abs_error", "within_epsilon", "measurements", "max_depth", "depth_limit", "iterations",
    ]);
    t.meta("seed", seed);
    t.meta("alpha", alpha);
    t.meta("dmax", d_max);
    t.meta("epsilon", epsilon);
    t.meta("trials", trials);
    t.meta("particles", two_stage.particles);
    t.meta("coverage", two_stage.coverage);
    match &config.targets {
        Some(v) => t.meta("targets", join(v)),
        None => {
            t.meta("instances", format!("random 2-qubit states with |A| in [{}, {}]", two_stage.target.lo, two_stage.target.hi));
            t.meta("layers", layers);
        }
    }

    let cases: Vec<(usize, Option<f64>)> = match &config.targets {
        Some(v) => v.iter().flat_map(|&a| (0..trials).map(move |_| Some(a))).enumerate().collect(),
        None => (0..trials).map(|i| (i, None)).collect(),
    };
    let results: Vec<(f64, crate::expectation::ExpectationResult, f64)> = cases
        .par_iter()
        .map(|&(i, target)| {
            let (ansatz, p) = match target {
                Some(a) => single_qubit_with_expectation(a)?,
                None => random_instance_in(2, layers, &two_stage.target, &mut substream(seed, "instance", &[i as u64]))?,
            };
            let op = build_prop2_operator(&ansatz, &p)?;
            let r = two_stage_estimate(&ansatz, &p, &two_stage, &mut substream(seed, "estimate", &[i as u64]))?;
            Ok((op.expectation(), r, d_max * op.depth() as f64))
        })
        .collect::<Result<_>>()?;

    let mut failure = None;
    let mut errors = Vec::new();
    let mut measurements = Vec::new();
    let mut within = 0;
    let mut fallbacks = 0;
    for (i, (a, r, limit)) in results.iter().enumerate() {
        let err = (r.value - a).abs();
        let ok = err <= epsilon;
        within += ok as usize;
        fallbacks += (r.path == EstimatePath::StatisticalFallback) as usize;
        errors.push(err);
        measurements.push(r.measurements as f64);
        if r.path == EstimatePath::AlphaQpe && r.max_depth > *limit && failure.is_none() {
            failure = Some(format!("trial {i}: depth {} exceeds limit {limit}", r.max_depth));
        }
        t.rows.push(vec![
            i.to_string(),
            a.to_string(),
            r.path.as_str().to_string(),
            r.value.to_string(),
            err.to_string(),
            ok.to_string(),
            r.measurements.to_string(),
            r.max_depth.to_string(),
            limit.to_string(),
            r.iterations.to_string(),
        ]);
    }
    let n = results.len().max(1) as f64;
    let summary = if results.is_empty() {
        "no trials".to_string()
    } else {
        format!(
            "within_epsilon = {}, fallback = {}, median_measurements = {}, error_q50 = {}, error_q90 = {}",
            within as f64 / n,
            fallbacks as f64 / n,
            median(&measurements),
            quantile(&errors, 0.5),
            quantile(&errors, 0.9)
        )
    };
    t.footer.push(summary.clone());
    Ok((t, Some(summary), failure))
}

fn vqe(config: &RunConfig) -> Result<Outcome> {
    let path = config
        .hamiltonian
        .clone()
        .ok_or_else(|| Error::invalid("vqe needs --hamiltonian PATH"))?;
    let h = load_hamiltonian_file(&path)?;
    let mode_name = config.mode.unwrap_or(ModeName::Alpha);
    let layers = config.layers.unwrap_or(1);
    let epsilon = first_or(&config.epsilon, 0.01, "epsilon")?;
    let alpha = first_or(&config.alpha, 0.5, "alpha")?;
    let d_max = first_or(&config.dmax, 32.0, "dmax")?;
    let max_iters = config.iters.unwrap_or(200);
    let seed = config.seed_or_default();
    let mode = match mode_name {
        ModeName::Exact => EstimationMode::Exact,
        ModeName::Statistical => EstimationMode::Statistical,
        ModeName::Alpha => {
            let mut c = TwoStageConfig::new(alpha, d_max, 0.5)?;
            c.particles = config.particles.unwrap_or(DEFAULT_PARTICLES);
            c.coverage = config.coverage.unwrap_or(c.coverage);
            c.validate()?;
            EstimationMode::Alpha(c)
        }
    };
    let nm = vqe_optimizer_config(mode_name, max_iters);
    let template = Ansatz::zeros(h.n_qubits(), layers)?;
    let r = optimize(&h, &template, &nm, &mode, epsilon, seed)?;
    let ground = h.ground_energy();
    let exact_at_best = h.expectation(&prepare(&template.with_params(r.best_lambda.clone())?))?;

    let mut t = Table::new(&["iteration", "energy_estimate", "measurements", "lambda"]);
    t.meta("seed", seed);
    t.meta("hamiltonian", path.display());
    t.meta("terms", h.to_string().trim_end().replace('\n', "; "));
    t.meta("mode", mode_name.as_str());
    t.meta("layers", layers);
    t.meta("epsilon_total", epsilon);
    if mode_name == ModeName::Alpha {
        t.meta("alpha", alpha);
        t.meta("dmax", d_max);
        if let EstimationMode::Alpha(c) = &mode {
            t.meta("coverage", c.coverage);
        }
    }
    t.meta("max_iters", max_iters);
    t.meta("tolerance", nm.tolerance);
    for s in &r.history {
        let lambda = s.lambda.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        t.rows.push(vec![s.iteration.to_string(), s.energy.to_string(), s.measurements.to_string(), lambda]);
    }
    let summary = format!(
        "best_energy = {}, exact_energy_at_best = {exact_at_best}, ground_energy = {ground}, gap = {}, converged = {}, evaluations = {}",
        r.best_energy,
        exact_at_best - ground,
        r.converged,
        r.evaluations
    );
    t.footer.push(summary.clone());
    let failure = (exact_at_best < ground - 1e-9).then(|| format!("energy {exact_at_best} below ground energy {ground}"));
    Ok((t, Some(summary), failure))
}

/// Optimizer settings used by the `vqe` subcommand.
pub fn vqe_optimizer_config(mode: ModeName, max_iters: usize) -> NelderMeadConfig {
    let tolerance = match mode {
        ModeName::Exact => 1e-8,
        _ => 1e-3,
    };
    NelderMeadConfig { max_iters, initial_spread: 0.5, tolerance }
}

/// Largest deviation tolerated between simulated and closed-form collapse tables.
pub const COLLAPSE_TOLERANCE: f64 = 1e-10;

fn collapse_check(config: &RunConfig) -> Result<Outcome> {
    let points = config.phases.unwrap_or(21);
    let mut t = Table::new(&[
        "phi", "b2", "b1", "probability_simulated", "probability_table", "plus_simulated", "plus_table", "abs_deviation",
    ]);
    t.meta("phi_range", "[pi/6, 5pi/6]");
    t.meta("points", points);
    t.meta("instance", "one qubit, P = Z, <Z> = cos(phi/2)");
    let mut worst: f64 = 0.0;
    for j in 0..points {
        let phi = if points == 1 {
            PI / 2.0
        } else {
            PI / 6.0 + j as f64 * (2.0 * PI / 3.0) / (points - 1) as f64
        };
        let (ansatz, p) = single_qubit_with_expectation((0.5 * phi).cos())?;
        let op = build_prop2_operator(&ansatz, &p)?;
        let sim = simulated_collapse_table(&op)?;
        let total: f64 = sim.iter().map(|r| r.probability).sum();
        worst = worst.max((total - 1.0).abs());
        for (s, c) in sim.iter().zip(collapse_table(phi)) {
            let dev = (s.probability - c.probability).abs().max((s.plus_probability - c.plus_probability).abs());
            worst = worst.max(dev);
            t.rows.push(vec![
                phi.to_string(),
                s.b2.bit().to_string(),
                s.b1.bit().to_string(),
                s.probability.to_string(),
                c.probability.to_string(),
                s.plus_probability.to_string(),
                c.plus_probability.to_string(),
                dev.to_string(),
            ]);
        }
    }
    t.footer.push(format!("max_abs_deviation = {worst}"));
    let failure = (worst > COLLAPSE_TOLERANCE).then(|| format!("collapse table deviation {worst} exceeds {COLLAPSE_TOLERANCE}"));
    Ok((t, None, failure))
}
