//! Command-line front end: configuration, experiment presets and artifacts.
//!
//! Every command writes CSV files and a `<command>.manifest.json` into the
//! output directory and prints one `PASS`/`FAIL` line per check.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::controls::{sample_random_admissible, Control, RandomKind};
use crate::error::{invalid, Error, Result};
use crate::functionals::{fmt_f64, Problem, ProblemSetup, SetupParams, DEFICIT_CSV_HEADER};
use crate::geometry::RadialField;
use crate::verifier::{
    check_annulus_asymptotics, check_bathtub_bruteforce, check_spectrum, check_normal_weight, check_penalized_optimality,
    check_radial_monotonicity, check_switch_nondegenerate, log_space, optimize_fixed_point, run_talenti_battery,
    sweep_deficit, CheckResult, Sweep, SweepKind, SweepPlan, DEFAULT_SEED, TD_FAMILIES, TI_FAMILIES,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PISO_OUT";
pub const DEFAULT_OUT: &str = "piso-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub radius: f64,
    pub cells: usize,
    pub dim: usize,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub eps: f64,
    /// Only the family `a (1 - (r/R)²)` is built in.
    pub u0_family: String,
    pub u0_amplitude: f64,
    pub k_max: usize,
    pub angular: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Competitor families; empty means every family of the sweep.
    pub families: Vec<String>,
    /// `δ / V0` values of the deficit sweeps.
    pub deltas: Vec<f64>,
    pub samples_ti: usize,
    pub samples_td: usize,
    pub modes: usize,
    pub fd_modes: usize,
    pub taus: Vec<f64>,
    pub talenti_samples: usize,
    pub talenti_slices: usize,
    pub optimizer_starts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub bathtub_trials: usize,
    pub bathtub_cells: usize,
    /// `δ / V0` values of the penalized optimality check.
    pub penalized_deltas: Vec<f64>,
    pub penalized_samples: usize,
    pub nda_eps: Vec<f64>,
    pub nda_y0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub time: TimeConfig,
    pub problem: ProblemConfig,
    pub experiments: ExperimentConfig,
    pub output: Option<PathBuf>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let p = SetupParams::default();
        Self {
            radius: p.radius,
            cells: p.cells,
            dim: p.dim,
            v0: p.v0,
        }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        let p = SetupParams::default();
        Self {
            horizon: p.horizon,
            steps: p.steps,
            theta: p.theta,
        }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let p = SetupParams::default();
        Self {
            eps: p.eps,
            u0_family: "parabolic".into(),
            u0_amplitude: p.u0_amplitude,
            k_max: p.k_max,
            angular: p.angular,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            families: Vec::new(),
            deltas: log_space(1e-3, 1e-1, 20),
            samples_ti: 8,
            samples_td: 2,
            modes: 16,
            fd_modes: 4,
            taus: vec![4e-3, 2e-3, 1e-3],
            talenti_samples: 50,
            talenti_slices: 8,
            optimizer_starts: 10,
            max_iter: 200,
            tol: 1e-3,
            bathtub_trials: 10_000,
            bathtub_cells: 64,
            penalized_deltas: vec![0.05, 0.3],
            penalized_samples: 100,
            nda_eps: vec![1e-3, 0.1, 1.0],
            nda_y0: 0.25,
        }
    }
}

/// Flags overriding the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $PISO_OUT or ./piso-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of angular modes in the spectrum.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Radial cells M.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Time steps N.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Comma-separated competitor families.
    #[arg(long, global = true, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Comma-separated values of δ/V0.
    #[arg(long, global = true, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Deficit sweep for time-independent competitors (ε = 0).
    VerifyTi,
    /// Deficit sweep for time-dependent competitors and the weight a_ε.
    VerifyTd,
    /// Shape Hessian spectrum and finite-difference validation.
    Spectrum,
    /// Talenti comparison, monotonicity and switch non-degeneracy.
    Talenti,
    /// Brute-force optimality of the bathtub maximizer and the annulus.
    Bathtub,
    /// Conditional-gradient ascent from random starts.
    Optimize,
    /// Both deficit sweeps with the selected families.
    Sweep,
    /// Every command above.
    All,
    /// Merge the manifests of an output directory.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyTi => "verify-ti",
            Command::VerifyTd => "verify-td",
            Command::Spectrum => "spectrum",
            Command::Talenti => "talenti",
            Command::Bathtub => "bathtub",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
            Command::All => "all",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "piso", version, about = "Quantitative parabolic isoperimetric inequalities: numerical checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Applies command-line overrides; flags win over the file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.output = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.experiments.seed = v;
        }
        if let Some(v) = o.modes {
            self.experiments.modes = v;
        }
        if let Some(v) = o.eps {
            self.problem.eps = v;
        }
        if let Some(v) = o.grid {
            self.geometry.cells = v;
        }
        if let Some(v) = o.steps {
            self.time.steps = v;
        }
        if let Some(v) = &o.families {
            self.experiments.families = v.clone();
        }
        if let Some(v) = &o.deltas {
            self.experiments.deltas = v.clone();
        }
    }

    pub fn params(&self) -> SetupParams {
        SetupParams {
            radius: self.geometry.radius,
            dim: self.geometry.dim,
            v0: self.geometry.v0,
            cells: self.geometry.cells,
            horizon: self.time.horizon,
            steps: self.time.steps,
            theta: self.time.theta,
            eps: self.problem.eps,
            u0_amplitude: self.problem.u0_amplitude,
            k_max: self.problem.k_max,
            angular: self.problem.angular,
        }
    }

    /// Checks every module precondition before any solve.
    pub fn validate(&self) -> Result<ProblemSetup> {
        if self.problem.u0_family != "parabolic" {
            return Err(invalid("problem.u0_family", format!("unknown family `{}`", self.problem.u0_family)));
        }
        let e = &self.experiments;
        if e.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(invalid("experiments.deltas", "values must be positive"));
        }
        if e.penalized_deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(invalid("experiments.penalized_deltas", "values must be nonnegative"));
        }
        if e.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("experiments.taus", "values must be positive"));
        }
        if !(e.tol > 0.0) {
            return Err(invalid("experiments.tol", "must be positive"));
        }
        if e.talenti_slices == 0 {
            return Err(invalid("experiments.talenti_slices", "must be positive"));
        }
        if e.nda_eps.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("experiments.nda_eps", "values must be positive"));
        }
        let known: Vec<&str> = TI_FAMILIES.iter().chain(&TD_FAMILIES).copied().collect();
        if let Some(f) = e.families.iter().find(|f| !known.contains(&f.as_str())) {
            return Err(invalid("experiments.families", format!("unknown family `{f}`")));
        }
        ProblemSetup::new(self.params())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// Checks and files produced by one command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn checks_csv(checks: &[CheckResult]) -> String {
    let mut out = String::from("check,passed,informational,margin\n");
    for c in checks {
        out.push_str(&format!("{},{},{},{}\n", c.name, c.passed, c.informational, fmt_f64(c.margin)));
    }
    out
}

fn sweep_csv(sweep: &Sweep) -> String {
    let mut out = format!("{DEFICIT_CSV_HEADER}\n");
    for r in &sweep.reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

struct Runner<'a> {
    config: &'a RunConfig,
    setup: ProblemSetup,
    dir: PathBuf,
    outcome: Outcome,
}

impl Runner<'_> {
    fn problem(&self, eps: f64) -> Result<Problem> {
        Ok(Problem::new(self.setup.with_eps(eps)?))
    }

    fn families(&self, kind: SweepKind) -> Vec<String> {
        let all: &[&str] = match kind {
            SweepKind::Ti => &TI_FAMILIES,
            SweepKind::Td => &TD_FAMILIES,
        };
        let chosen = &self.config.experiments.families;
        all.iter()
            .filter(|f| chosen.is_empty() || chosen.iter().any(|c| c == *f))
            .map(|s| s.to_string())
            .collect()
    }

    fn push(&mut self, mut check: CheckResult, artifacts: &[PathBuf]) {
        check.artifacts = artifacts.iter().map(|p| p.display().to_string()).collect();
        println!("{}", check.summary_line());
        self.outcome.checks.push(check);
        self.outcome.artifacts.extend_from_slice(artifacts);
    }

    fn sweep(&mut self, kind: SweepKind) -> Result<()> {
        let e = &self.config.experiments;
        let families = self.families(kind);
        if families.is_empty() {
            return Ok(());
        }
        let (eps, samples, tag) = match kind {
            SweepKind::Ti => (0.0, e.samples_ti, "ti"),
            SweepKind::Td => (self.config.problem.eps, e.samples_td, "td"),
        };
        let plan = SweepPlan {
            kind,
            families,
            deltas: e.deltas.clone(),
            samples,
            seed: e.seed,
        };
        let sweep = sweep_deficit(&self.problem(eps)?, &plan)?;
        let path = write_file(&self.dir, &format!("deficit_{tag}.csv"), &sweep_csv(&sweep))?;
        for note in &sweep.skipped {
            println!("note: skipped {note}");
        }
        self.push(sweep.check, &[path]);
        Ok(())
    }

    fn verify_td(&mut self) -> Result<()> {
        let p = self.problem(self.config.problem.eps)?;
        let c = check_normal_weight(&p)?;
        let w = p.normal_weight()?;
        let mut csv = String::from("t,a_eps\n");
        for (n, a) in w.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", fmt_f64(p.time().time(n)), fmt_f64(*a)));
        }
        let path = write_file(&self.dir, "normal_weight.csv", &csv)?;
        self.push(c, &[path]);
        self.sweep(SweepKind::Td)
    }

    fn spectrum(&mut self) -> Result<()> {
        let e = &self.config.experiments;
        let (s, checks) = check_spectrum(&self.problem(0.0)?, e.modes, e.fd_modes, &e.taus)?;
        let csv = write_file(&self.dir, "spectrum.csv", &s.csv())?;
        let json = write_file(&self.dir, "spectrum.json", &serde_json::to_string_pretty(&s)?)?;
        for c in checks {
            self.push(c, &[csv.clone(), json.clone()]);
        }
        Ok(())
    }

    fn talenti(&mut self) -> Result<()> {
        let e = self.config.experiments.clone();
        let p = self.problem(self.config.problem.eps)?;
        let p0 = self.problem(0.0)?;
        let mut checks = vec![
            run_talenti_battery(&p, e.talenti_samples, e.talenti_slices, e.seed)?,
            check_radial_monotonicity(&p0)?,
        ];
        for &eps in &e.nda_eps {
            checks.push(check_switch_nondegenerate(&p0.with_eps(eps)?, e.nda_y0)?);
            checks.push(check_normal_weight(&p0.with_eps(eps)?)?);
        }
        checks.push(check_switch_nondegenerate(&p0, e.nda_y0)?);
        let path = write_file(&self.dir, "talenti.csv", &checks_csv(&checks))?;
        for c in checks {
            self.push(c, std::slice::from_ref(&path));
        }
        Ok(())
    }

    fn bathtub(&mut self) -> Result<()> {
        let e = self.config.experiments.clone();
        let mut params = self.setup.params().clone();
        params.cells = e.bathtub_cells;
        let small = Problem::new(ProblemSetup::new(SetupParams { eps: 0.0, ..params })?);
        let v0 = small.setup().spec().v0;
        let mut checks = vec![check_bathtub_bruteforce(&small, e.bathtub_trials, e.seed)?];
        for &d in &e.penalized_deltas {
            checks.push(check_penalized_optimality(&small.with_eps(self.config.problem.eps)?, d * v0, e.penalized_samples, e.seed)?);
        }
        checks.push(check_annulus_asymptotics(&self.problem(0.0)?, 1e-4, 1e-2)?);
        let path = write_file(&self.dir, "bathtub.csv", &checks_csv(&checks))?;
        for c in checks {
            self.push(c, std::slice::from_ref(&path));
        }
        Ok(())
    }

    fn optimize(&mut self) -> Result<()> {
        let e = self.config.experiments.clone();
        let p = self.problem(0.0)?;
        let spec = *p.setup().spec();
        let mut csv = String::from("start,iteration,objective,distance,step,gap\n");
        let mut all_ok = true;
        let mut worst = 0.0f64;
        let uniform = Control::Radial(RadialField(vec![spec.v0 / p.grid().domain_volume(); p.grid().len()]));
        let mut starts = vec![("uniform".to_string(), uniform)];
        for i in 0..e.optimizer_starts {
            let seed = e.seed.wrapping_add(i as u64);
            starts.push((format!("bangbang-{seed}"), sample_random_admissible(seed, RandomKind::BangBangRadial, &spec, p.disc())?));
        }
        for (name, start) in &starts {
            let o = optimize_fixed_point(&p, start, e.max_iter, e.tol)?;
            for it in &o.iterates {
                csv.push_str(&format!(
                    "{name},{},{},{},{},{}\n",
                    it.iteration,
                    fmt_f64(it.objective),
                    fmt_f64(it.distance),
                    fmt_f64(it.step),
                    fmt_f64(it.gap)
                ));
            }
            all_ok &= o.converged && o.monotone();
            worst = worst.max(o.iterates.last().map_or(f64::INFINITY, |i| i.distance));
        }
        let path = write_file(&self.dir, "optimize.csv", &csv)?;
        self.push(
            CheckResult::new(
                "optimizer_convergence",
                all_ok,
                e.tol - worst,
                format!("{} starts, worst final distance {worst:.3e} Vol", starts.len()),
            ),
            &[path],
        );
        Ok(())
    }
}

/// Runs one command; `Ok` carries the checks even when some fail.
pub fn run(command: Command, config: &RunConfig) -> Result<Outcome> {
    if command == Command::Report {
        return Err(Error::Unsupported("use `report` directly".into()));
    }
    let setup = config.validate()?;
    let dir = config.out_dir();
    let mut r = Runner {
        config,
        setup,
        dir: dir.clone(),
        outcome: Outcome::default(),
    };
    let steps: &[Command] = match command {
        Command::All => &[
            Command::VerifyTi,
            Command::VerifyTd,
            Command::Spectrum,
            Command::Talenti,
            Command::Bathtub,
            Command::Optimize,
        ],
        _ => std::slice::from_ref(&command),
    };
    for step in steps {
        match step {
            Command::VerifyTi => r.sweep(SweepKind::Ti)?,
            Command::VerifyTd => r.verify_td()?,
            Command::Sweep => {
                r.sweep(SweepKind::Ti)?;
                r.sweep(SweepKind::Td)?;
            }
            Command::Spectrum => r.spectrum()?,
            Command::Talenti => r.talenti()?,
            Command::Bathtub => r.bathtub()?,
            Command::Optimize => r.optimize()?,
            Command::All | Command::Report => unreachable!(),
        }
    }
    let manifest = serde_json::json!({
        "command": command.name(),
        "seed": config.experiments.seed,
        "setup": config,
        "setup_hash": r.setup.hash(),
        "passed": r.outcome.passed(),
        "checks": r.outcome.checks.iter().map(|c| serde_json::json!({
            "check_name": c.name,
            "passed": c.passed,
            "informational": c.informational,
            "margin": c.margin,
            "details": c.details,
            "artifacts": c.artifacts,
        })).collect::<Vec<_>>(),
    });
    let path = write_file(&dir, &format!("{}.manifest.json", command.name()), &serde_json::to_string_pretty(&manifest)?)?;
    r.outcome.artifacts.push(path);
    Ok(r.outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Manifest file name to its content.
    pub manifests: BTreeMap<String, serde_json::Value>,
    pub total_checks: usize,
    pub passed_checks: usize,
    pub failed_checks: usize,
    pub warnings: Vec<String>,
}

/// Merges every `*.manifest.json` of `dir`; unreadable files become warnings.
pub fn report(dir: &Path) -> Result<Summary> {
    let mut summary = Summary {
        manifests: BTreeMap::new(),
        total_checks: 0,
        passed_checks: 0,
        failed_checks: 0,
        warnings: Vec::new(),
    };
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(summary),
        Err(e) => return Err(e.into()),
    };
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".manifest.json")))
        .collect();
    names.sort();
    for path in names {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let parsed = fs::read_to_string(&path)
            .map_err(Error::from)
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).map_err(Error::from));
        match parsed {
            Ok(v) if v.get("checks").is_some_and(|c| c.is_array()) => {
                for c in v["checks"].as_array().into_iter().flatten() {
                    summary.total_checks += 1;
                    let info = c["informational"].as_bool().unwrap_or(false);
                    if c["passed"].as_bool().unwrap_or(false) || info {
                        summary.passed_checks += 1;
                    } else {
                        summary.failed_checks += 1;
                    }
                }
                summary.manifests.insert(name, v);
            }
            Ok(_) => summary.warnings.push(format!("{name}: not a manifest")),
            Err(e) => summary.warnings.push(format!("{name}: {e}")),
        }
    }
    Ok(summary)
}

/// Entry point of the `piso` binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if cli.command == Command::Report {
        let dir = cli
            .overrides
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        return match report(&dir) {
            Ok(s) => {
                for w in &s.warnings {
                    eprintln!("warning: {w}");
                }
                match serde_json::to_string_pretty(&s) {
                    Ok(text) => {
                        println!("{text}");
                        0
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        1
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        };
    }
    let mut config = match &cli.overrides.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: config {}: {e}", path.display());
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    config.apply(&cli.overrides);
    match run(cli.command, &config) {
        Ok(outcome) => {
            let failed = outcome.checks.iter().filter(|c| !c.passed && !c.informational).count();
            println!(
                "{}: {} checks, {failed} failed",
                cli.command.name(),
                outcome.checks.len()
            );
            i32::from(failed > 0)
        }
        Err(e @ (Error::InvalidParameter { .. } | Error::Json(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            grid: Some(32),
            eps: Some(0.5),
            deltas: Some(vec![0.01]),
            ..Default::default()
        });
        assert_eq!(c.geometry.cells, 32);
        assert_eq!(c.problem.eps, 0.5);
        assert_eq!(c.experiments.deltas, vec![0.01]);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"geometry": {"cells": 64}}"#).unwrap();
        assert_eq!(partial.geometry.cells, 64);
        assert!(serde_json::from_str::<RunConfig>(r#"{"geometry": {"cels": 64}}"#).is_err());
        let mut bad = RunConfig::default();
        bad.experiments.families = vec!["triangle".into()];
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { name: "experiments.families", .. })));
    }
}
