//! Subcommand implementations behind the `rjls` binary.
//!
//! Every command returns a report whose `Display` is the console summary and
//! whose `passed` decides the exit status.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{Instance, InstanceDocument};
use crate::error::{Error, Result};
use crate::export::{write_family_series_csv, SeriesDocument};
use crate::family::MatrixFamily;
use crate::model::{ControlPlant, FilterPlant};
use crate::moments::closed_loop_moments;
use crate::montecarlo::{enumerate_exact, simulate_filter, simulate_phi, Estimator, SimConfig, SimMetadata, MIN_HITS};
use crate::operators::{is_ms_stable, RadiusMethod};
use crate::riccati::{check_duality, relative_gap, solve_lmmse, solve_trmjlq, DUALITY_TOL};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 0x5eed;
/// Relative tolerance of the exact-enumeration comparison (moments).
pub const EXACT_MOMENT_TOL: f64 = 1e-11;
/// Relative tolerance of the exact-enumeration comparison (cost).
pub const EXACT_COST_TOL: f64 = 1e-10;
/// Standard errors allowed between a Monte Carlo estimate and its target.
pub const SIGMA_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Oracle {
    #[default]
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub oracle: Oracle,
    pub format: Format,
}

impl Options {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("rjls-out"))
    }

    fn sim_config(&self, doc: &InstanceDocument, estimator: Estimator) -> Result<SimConfig> {
        let section = doc.simulation.unwrap_or(crate::config::SimulationSection {
            samples: None,
            seed: None,
        });
        SimConfig::new(
            self.samples.or(section.samples).unwrap_or(DEFAULT_SAMPLES),
            self.seed.or(section.seed).unwrap_or(DEFAULT_SEED),
            estimator,
        )
    }
}

/// Six significant digits for console tables.
pub fn short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        return format!("{:.5e}", x);
    }
    format!("{:.5e}", x).parse::<f64>().map(|v| v.to_string()).unwrap_or_else(|_| x.to_string())
}

fn control_plant(doc: &InstanceDocument, cmd: &str) -> Result<ControlPlant> {
    match &doc.instance {
        Instance::Control(p) => Ok(p.clone()),
        Instance::Filter(_) => Err(Error::InvalidInput(format!("`{cmd}` needs a [control] instance"))),
    }
}

fn filter_plant(doc: &InstanceDocument, cmd: &str) -> Result<FilterPlant> {
    match &doc.instance {
        Instance::Filter(p) => Ok(p.clone()),
        Instance::Control(_) => Err(Error::InvalidInput(format!("`{cmd}` needs a [filter] instance"))),
    }
}

fn write_series(dir: &Path, stem: &str, format: Format, doc: SeriesDocument) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_family_series_csv(BufWriter::new(File::create(&path)?), &doc.families()?, doc.t_offset)?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &doc)
                .map_err(|e| Error::Io(e.into()))?;
            Ok(path)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rho: f64,
    pub stable: bool,
    pub method: RadiusMethod,
    pub converged: bool,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.converged
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rho={}, {} ({})",
            short(self.rho),
            if self.stable { "MS-stable" } else { "unstable" },
            self.method
        )?;
        if !self.converged {
            write!(f, "\nwarning: power iteration did not converge; rho is the best estimate")?;
        }
        Ok(())
    }
}

pub fn cmd_stability(doc: &InstanceDocument) -> Result<StabilityReport> {
    let plant = control_plant(doc, "stability")?;
    let v = is_ms_stable(&plant.a, &plant.chain)?;
    Ok(StabilityReport {
        rho: v.radius.value,
        stable: v.stable,
        method: v.radius.method,
        converged: v.radius.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub kind: &'static str,
    pub optimal_cost: Option<f64>,
    pub files: Vec<PathBuf>,
}

impl SynthesisReport {
    pub fn passed(&self) -> bool {
        true
    }
}

impl fmt::Display for SynthesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = self.optimal_cost {
            writeln!(f, "optimal cost: {}", short(c))?;
        }
        write!(f, "{} files:", self.kind)?;
        for p in &self.files {
            write!(f, "\n  {}", p.display())?;
        }
        Ok(())
    }
}

/// Writes `control_gains` (t = 0..horizon-1) and `control_p` (t = 0..=horizon).
pub fn cmd_control(doc: &InstanceDocument, opts: &Options) -> Result<SynthesisReport> {
    let plant = control_plant(doc, "control")?;
    let sol = solve_trmjlq(&plant)?;
    let dir = opts.out_dir();
    let mut gains = SeriesDocument::new("control_gains", sol.gains.as_slice(), 0);
    gains.optimal_cost = Some(sol.optimal_cost);
    let mut p = SeriesDocument::new("control_p", &sol.p, 0);
    p.optimal_cost = Some(sol.optimal_cost);
    let files = vec![
        write_series(&dir, "control_gains", opts.format, gains)?,
        write_series(&dir, "control_p", opts.format, p)?,
    ];
    Ok(SynthesisReport {
        kind: "control",
        optimal_cost: Some(sol.optimal_cost),
        files,
    })
}

/// Writes `filter_gains` and `filter_s`, both for t = 0..=horizon.
pub fn cmd_filter(doc: &InstanceDocument, opts: &Options) -> Result<SynthesisReport> {
    let plant = filter_plant(doc, "filter")?;
    let sol = solve_lmmse(&plant)?;
    let dir = opts.out_dir();
    let files = vec![
        write_series(&dir, "filter_gains", opts.format, SeriesDocument::new("filter_gains", &sol.gains, 0))?,
        write_series(&dir, "filter_s", opts.format, SeriesDocument::new("filter_s", &sol.s, 0))?,
    ];
    Ok(SynthesisReport {
        kind: "filter",
        optimal_cost: None,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualitySummary {
    pub riccati_deviation: f64,
    pub riccati_relative: f64,
    pub gain_deviation: f64,
    pub gain_relative: f64,
    pub verified: bool,
}

impl DualitySummary {
    pub fn passed(&self) -> bool {
        self.verified
    }
}

impl fmt::Display for DualitySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "max ||P_i(t) - S_i(l-t)||      = {} (relative {})",
            short(self.riccati_deviation),
            short(self.riccati_relative)
        )?;
        writeln!(
            f,
            "max ||M_i(t) - K^f_i(l-1-t)'|| = {} (relative {})",
            short(self.gain_deviation),
            short(self.gain_relative)
        )?;
        write!(
            f,
            "duality {} (threshold {} relative)",
            if self.verified { "verified" } else { "FAILED" },
            short(DUALITY_TOL)
        )
    }
}

pub fn cmd_duality(doc: &InstanceDocument) -> Result<DualitySummary> {
    let plant = control_plant(doc, "duality")?;
    let rep = check_duality(&plant)?;
    Ok(DualitySummary {
        riccati_deviation: rep.riccati_deviation,
        riccati_relative: rep.riccati_relative(),
        gain_deviation: rep.gain_deviation,
        gain_relative: rep.gain_relative(),
        verified: rep.verified(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub oracle: Oracle,
    /// Largest relative moment deviation (exact oracle).
    pub worst_relative: Option<f64>,
    /// Largest |deviation| / standard error over moment entries with enough hits.
    pub worst_sigma: Option<f64>,
    pub analytic_scalar: f64,
    pub oracle_scalar: f64,
    pub scalar_std_err: Option<f64>,
    pub scalar_name: &'static str,
    pub metadata: Option<SimMetadata>,
    pub passed: bool,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.passed
    }

    pub fn scalar_sigma(&self) -> Option<f64> {
        self.scalar_std_err
            .map(|se| (self.oracle_scalar - self.analytic_scalar).abs() / se)
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.oracle {
            Oracle::Exact => writeln!(f, "oracle: exact path enumeration")?,
            Oracle::MonteCarlo => writeln!(f, "oracle: Monte Carlo")?,
        }
        if let Some(m) = &self.metadata {
            writeln!(f, "samples={} seed={} rng={} chunks={}", m.samples, m.seed, m.rng, m.chunks)?;
        }
        writeln!(
            f,
            "{}: analytic {} oracle {}",
            self.scalar_name,
            short(self.analytic_scalar),
            short(self.oracle_scalar)
        )?;
        if let Some(r) = self.worst_relative {
            writeln!(f, "worst relative moment deviation: {}", short(r))?;
            writeln!(
                f,
                "relative {} deviation: {}",
                self.scalar_name,
                short(relative_gap(self.analytic_scalar, self.oracle_scalar))
            )?;
        }
        if let Some(z) = self.scalar_sigma() {
            writeln!(f, "{} deviation: {} sigma", self.scalar_name, short(z))?;
        }
        if let Some(z) = self.worst_sigma {
            writeln!(f, "worst moment deviation: {} sigma (entries with >= {MIN_HITS} hits)", short(z))?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Largest `|a - b| / max(|a|, |b|)` over the entries of two families,
/// skipping modes where `skip(i)` holds.
pub fn worst_relative_entry(a: &MatrixFamily, b: &MatrixFamily, skip: impl Fn(usize) -> bool) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if skip(i) {
            continue;
        }
        for (u, v) in x.iter().zip(y.iter()) {
            worst = worst.max(relative_gap(*u, *v));
        }
    }
    worst
}

/// Compares the analytic recursion and cost under the optimal gains (control)
/// or the LMMSE gains (filter) with the requested oracle.
pub fn cmd_simulate(doc: &InstanceDocument, opts: &Options) -> Result<SimulationReport> {
    let report = match (&doc.instance, opts.oracle) {
        (Instance::Control(plant), Oracle::Exact) => {
            let sol = solve_trmjlq(plant)?;
            let exact = enumerate_exact(plant, Some(&sol.gains)).map_err(|e| match e {
                Error::TooLarge { paths, limit } => Error::InvalidInput(format!(
                    "exact oracle needs {paths} paths (limit {limit}); use --oracle montecarlo"
                )),
                other => other,
            })?;
            let analytic = closed_loop_moments(plant, &sol.gains)?;
            let mut worst: f64 = 0.0;
            for t in 0..=plant.chain.horizon() {
                let mass = &exact.mass[t];
                worst = worst.max(worst_relative_entry(analytic.at(t), exact.trajectory.at(t), |i| mass[i] == 0.0));
            }
            let passed = worst <= EXACT_MOMENT_TOL && relative_gap(sol.optimal_cost, exact.cost) <= EXACT_COST_TOL;
            SimulationReport {
                oracle: Oracle::Exact,
                worst_relative: Some(worst),
                worst_sigma: None,
                analytic_scalar: sol.optimal_cost,
                oracle_scalar: exact.cost,
                scalar_std_err: None,
                scalar_name: "cost",
                metadata: None,
                passed,
            }
        }
        (Instance::Control(plant), Oracle::MonteCarlo) => {
            let sol = solve_trmjlq(plant)?;
            let cfg = opts.sim_config(doc, Estimator::Cost)?;
            let sim = simulate_phi(plant, Some(&sol.gains), &cfg)?;
            let analytic = closed_loop_moments(plant, &sol.gains)?;
            let mut worst: f64 = 0.0;
            for t in 0..=plant.chain.horizon() {
                for i in 0..plant.modes() {
                    if sim.moments.low_confidence(t, i) {
                        continue;
                    }
                    worst = worst.max(sigma_deviation(
                        &sim.moments.mean[t][i],
                        &analytic.at(t)[i],
                        &sim.moments.std_err[t][i],
                    ));
                }
            }
            let z = (sim.cost - sol.optimal_cost).abs() / sim.cost_std_err;
            SimulationReport {
                oracle: Oracle::MonteCarlo,
                worst_relative: None,
                worst_sigma: Some(worst),
                analytic_scalar: sol.optimal_cost,
                oracle_scalar: sim.cost,
                scalar_std_err: Some(sim.cost_std_err),
                scalar_name: "cost",
                metadata: Some(sim.metadata),
                passed: z <= SIGMA_BOUND || (sim.cost_std_err == 0.0 && sim.cost == sol.optimal_cost),
            }
        }
        (Instance::Filter(_), Oracle::Exact) => {
            return Err(Error::InvalidInput(
                "the exact oracle covers control instances only; use --oracle montecarlo".into(),
            ))
        }
        (Instance::Filter(plant), Oracle::MonteCarlo) => {
            let sol = solve_lmmse(plant)?;
            let cfg = opts.sim_config(doc, Estimator::FilterError)?;
            let sim = simulate_filter(plant, &sol.gains, &cfg)?;
            let horizon = plant.chain.horizon();
            let mut worst: f64 = 0.0;
            for t in 0..=horizon {
                for i in 0..plant.modes() {
                    if sim.counts[t][i] < MIN_HITS {
                        continue;
                    }
                    worst = worst.max(sigma_deviation(&sim.second_moments[t][i], &sol.s[t][i], &sim.std_err[t][i]));
                }
            }
            let analytic: f64 = sol.s[horizon].iter().map(|m| m.trace()).sum();
            let se = sim.final_error_std_err;
            let z = (sim.final_error - analytic).abs() / se;
            SimulationReport {
                oracle: Oracle::MonteCarlo,
                worst_relative: None,
                worst_sigma: Some(worst),
                analytic_scalar: analytic,
                oracle_scalar: sim.final_error,
                scalar_std_err: Some(se),
                scalar_name: "final error E|e(l)|^2",
                metadata: Some(sim.metadata),
                passed: z <= SIGMA_BOUND || (se == 0.0 && sim.final_error == analytic),
            }
        }
    };
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        let value = json!({
            "oracle": match report.oracle { Oracle::Exact => "exact", Oracle::MonteCarlo => "montecarlo" },
            "scalar": report.scalar_name,
            "analytic": report.analytic_scalar,
            "oracle_value": report.oracle_scalar,
            "std_err": report.scalar_std_err,
            "worst_relative": report.worst_relative,
            "worst_sigma": report.worst_sigma,
            "metadata": report.metadata,
            "passed": report.passed,
        });
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("simulate.json"))?), &value)
            .map_err(|e| Error::Io(e.into()))?;
    }
    Ok(report)
}

/// Largest entrywise `|est - target| / se`; entries with zero error and
/// zero standard error count as exact.
pub fn sigma_deviation(est: &crate::family::Mat, target: &crate::family::Mat, se: &crate::family::Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for ((e, t), s) in est.iter().zip(target.iter()).zip(se.iter()) {
        let d = (e - t).abs();
        let z = if d == 0.0 { 0.0 } else { d / s };
        worst = worst.max(z);
    }
    worst
}
