//! Experiment driver behind the `dampwave` binary.
//!
//! A run writes `manifest.json` (the resolved configuration and its
//! SHA-256), the experiment outputs, and `summary.json`. Exit status is 0
//! when every declared assertion passes, 1 on an assertion failure, 2 on a
//! configuration error and 3 on a numerical failure.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, Format, RunConfig, SchemaError};
use crate::damping::{sample_profile, DampingField, DampingLaw, DampingProfile};
use crate::decay::{
    classify, default_exponential_window, default_polynomial_window, fit_exponential, fit_polynomial, Classification,
    ClassifyReport,
};
use crate::error::Error;
use crate::grid::Grid;
use crate::helmholtz::{HelmholtzSolver, SolverMode, DIRECT_MODE_MAX_STATE_DIM};
use crate::observability::{
    collar_sweep, default_quadrature_step, gramian_constant_with, write_sweep_csv, GramianSettings, DEFAULT_GRAMIAN_CAP,
};
use crate::provenance::{write_csv_comment, write_json, Provenance};
use crate::semigroup::{simulate, EvolutionConfig, Trajectory};
use crate::spectral::{
    assemble, eigen, resolved_band, sweep, write_sweep_csv as write_resolvent_csv, fit_resolvent_exponent, ReducedGenerator,
    DEFAULT_DENSE_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error at {0}")]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Numerical(Error),
    #[error("cannot write outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write outputs: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn status(&self) -> i32 {
        match self {
            RunError::Schema(_) | RunError::Io(_) | RunError::Csv(_) => EXIT_SCHEMA,
            RunError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::InvalidProfile(_)
            | Error::InvalidArgument(_)
            | Error::QuadratureTooCoarse { .. }
            | Error::DenseCapExceeded { .. } => RunError::Schema(SchemaError {
                path: "experiment".into(),
                message: e.to_string(),
            }),
            other => RunError::Numerical(other),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub manifest_sha256: String,
    pub seed: u64,
    pub experiment: String,
    pub headline: Value,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
    pub status: i32,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: i32,
    pub summary: Option<RunSummary>,
    pub error: Option<RunError>,
    pub out_dir: PathBuf,
}

/// Manifest document and the hex SHA-256 of its canonical JSON.
pub fn manifest(cfg: &RunConfig) -> (Value, String) {
    let doc = json!({
        "program": "dampwave",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg.resolved_json(),
    });
    let canonical = serde_json::to_string(&doc).expect("manifest serializes");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    (doc, hash)
}

struct Context<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    prov: Provenance,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl Context<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn csv(&self) -> bool {
        self.cfg.output.wants(Format::Csv)
    }

    fn json(&self) -> bool {
        self.cfg.output.wants(Format::Json)
    }
}

/// Parses the configuration at `path` and runs it.
pub fn run_path(path: &Path, out: Option<&Path>) -> RunOutcome {
    match RunConfig::from_path(path) {
        Ok(cfg) => run(&cfg, out),
        Err(e) => RunOutcome {
            status: EXIT_SCHEMA,
            summary: None,
            error: Some(RunError::Schema(e)),
            out_dir: out.map(Path::to_path_buf).unwrap_or_default(),
        },
    }
}

pub fn run(cfg: &RunConfig, out: Option<&Path>) -> RunOutcome {
    // threaded dense kernels change summation order between runs
    faer::set_global_parallelism(faer::Par::Seq);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    match run_inner(cfg, &dir) {
        Ok(summary) => RunOutcome {
            status: summary.status,
            summary: Some(summary),
            error: None,
            out_dir: dir,
        },
        Err(e) => RunOutcome {
            status: e.status(),
            summary: None,
            error: Some(e),
            out_dir: dir,
        },
    }
}

fn run_inner(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(|(path, message)| {
        RunError::Schema(SchemaError {
            path: path.into(),
            message,
        })
    })?;
    std::fs::create_dir_all(dir)?;
    let (doc, hash) = manifest(cfg);
    let mut ctx = Context {
        cfg,
        dir: dir.to_path_buf(),
        prov: Provenance {
            manifest_sha256: hash.clone(),
            seed: cfg.seed,
        },
        outputs: Vec::new(),
        warnings: Vec::new(),
    };
    {
        let mut with_hash = doc.clone();
        with_hash["manifest_sha256"] = hash.clone().into();
        let w = ctx.create("manifest.json")?;
        serde_json::to_writer_pretty(w, &with_hash).map_err(std::io::Error::other)?;
    }
    let result = execute(&mut ctx);
    let (headline, assertions, status) = match result {
        Ok((headline, assertions)) => {
            let passed = assertions.iter().all(|a| a.passed);
            (headline, assertions, if passed { EXIT_OK } else { EXIT_ASSERTION })
        }
        Err(e) => {
            // still leave a summary naming the failure
            let status = e.status();
            let summary = RunSummary {
                manifest_sha256: hash,
                seed: cfg.seed,
                experiment: cfg.experiment.name().into(),
                headline: json!({ "error": e.to_string() }),
                assertions: Vec::new(),
                passed: false,
                status,
                outputs: ctx.outputs.clone(),
                warnings: ctx.warnings.clone(),
            };
            let w = ctx.create("summary.json")?;
            serde_json::to_writer_pretty(w, &summary).map_err(std::io::Error::other)?;
            return Err(e);
        }
    };
    ctx.outputs.push("summary.json".into());
    let summary = RunSummary {
        manifest_sha256: hash,
        seed: cfg.seed,
        experiment: cfg.experiment.name().into(),
        headline,
        passed: status == EXIT_OK,
        assertions,
        status,
        outputs: ctx.outputs.clone(),
        warnings: ctx.warnings.clone(),
    };
    let w = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(w, &summary).map_err(std::io::Error::other)?;
    Ok(summary)
}

type Executed = (Value, Vec<AssertionOutcome>);

fn check(name: &str, expected: String, actual: String, passed: bool) -> AssertionOutcome {
    AssertionOutcome {
        name: name.into(),
        expected,
        actual,
        passed,
    }
}

fn upper(name: &str, bound: Option<f64>, actual: Option<f64>, out: &mut Vec<AssertionOutcome>) {
    if let Some(b) = bound {
        let passed = actual.is_some_and(|a| a <= b);
        out.push(check(name, format!("<= {b:e}"), format!("{actual:?}"), passed));
    }
}

fn lower(name: &str, bound: Option<f64>, actual: Option<f64>, out: &mut Vec<AssertionOutcome>) {
    if let Some(b) = bound {
        let passed = actual.is_some_and(|a| a >= b);
        out.push(check(name, format!(">= {b:e}"), format!("{actual:?}"), passed));
    }
}

fn execute(ctx: &mut Context) -> Result<Executed, RunError> {
    let cfg = ctx.cfg;
    let g = cfg.grid.build()?;
    let alpha = sample_profile(&cfg.damping.profile, &g)?;
    let law = cfg.damping.law;
    match &cfg.experiment {
        Experiment::Simulate {
            dt,
            nsteps,
            linear_tol,
            solver,
        } => {
            let evo = EvolutionConfig {
                dt: *dt,
                nsteps: *nsteps,
                law,
                linear_tol: *linear_tol,
                ledger: true,
                state_stride: cfg.output.state_stride,
                solver: *solver,
            };
            let (traj, class) = run_series(ctx, &g, &alpha, &evo)?;
            let mut headline = series_headline(&traj);
            let mut checks = series_checks(ctx, &traj, class.as_ref());
            if let Some(c) = &class {
                headline["classification"] = json!(c.class);
            }
            finish_series(&traj, &mut headline, &mut checks)?;
            Ok((headline, checks))
        }
        Experiment::DecayFit {
            dt,
            nsteps,
            linear_tol,
            exponential_window,
            polynomial_window,
            thresholds,
        } => {
            let evo = EvolutionConfig {
                dt: *dt,
                nsteps: *nsteps,
                law,
                linear_tol: *linear_tol,
                ledger: true,
                state_stride: cfg.output.state_stride,
                solver: Default::default(),
            };
            let (traj, _) = run_series(ctx, &g, &alpha, &evo)?;
            let horizon = *traj.times.last().unwrap_or(&0.0);
            let ew = exponential_window.unwrap_or_else(|| default_exponential_window(horizon));
            let pw = polynomial_window.unwrap_or_else(|| default_polynomial_window(&traj.times, &traj.energies));
            let exp = fit_exponential(&traj.times, &traj.energies, ew);
            let poly = fit_polynomial(&traj.times, &traj.energies, pw);
            let class = classify(&traj.times, &traj.energies, thresholds);
            for (name, r) in [("exponential fit", exp.as_ref().err()), ("power-law fit", poly.as_ref().err())] {
                if let Some(e) = r {
                    ctx.warnings.push(format!("{name}: {e}"));
                }
            }
            let class = class.map_err(RunError::from)?;
            if ctx.csv() {
                if let Ok(f) = &exp {
                    let xs: Vec<f64> = fit_abscissae(&traj, f.window, false);
                    let w = ctx.create("residuals_exponential.csv")?;
                    f.write_residuals_csv(&xs, w, Some(&ctx.prov))?;
                }
                if let Ok(f) = &poly {
                    let xs: Vec<f64> = fit_abscissae(&traj, f.window, true);
                    let w = ctx.create("residuals_polynomial.csv")?;
                    f.write_residuals_csv(&xs, w, Some(&ctx.prov))?;
                }
            }
            if ctx.json() {
                let doc = json!({
                    "exponential": exp.as_ref().ok().map(strip_residuals),
                    "polynomial": poly.as_ref().ok().map(strip_residuals),
                    "classification": class.class,
                    "relative_drop": class.relative_drop,
                    "classify_window": class.window,
                    "gap_time": crate::decay::gap_time(&traj.times, &traj.energies),
                });
                let w = ctx.create("fits.json")?;
                write_json(&doc, w, Some(&ctx.prov))?;
            }
            let mut headline = series_headline(&traj);
            headline["classification"] = json!(class.class);
            headline["decay_rate"] = json!(exp.as_ref().ok().map(|f| f.rate));
            headline["exponential_r_squared"] = json!(exp.as_ref().ok().map(|f| f.r_squared));
            headline["power"] = json!(poly.as_ref().ok().map(|f| f.rate));
            headline["polynomial_r_squared"] = json!(poly.as_ref().ok().map(|f| f.r_squared));
            headline["polynomial_window"] = json!(pw);
            let mut checks = series_checks(ctx, &traj, Some(&class));
            lower("min_decay_rate", cfg.assertions.min_decay_rate, exp.as_ref().ok().map(|f| f.rate), &mut checks);
            lower("min_power", cfg.assertions.min_power, poly.as_ref().ok().map(|f| f.rate), &mut checks);
            finish_series(&traj, &mut headline, &mut checks)?;
            Ok((headline, checks))
        }
        Experiment::Spectrum {} => {
            let h = HelmholtzSolver::new(&g, SolverMode::Auto)?;
            let m = assemble(&g, &alpha, law, &h, DEFAULT_DENSE_CAP)?;
            let rep = eigen(&m, &alpha)?;
            ctx.warnings.extend(rep.warnings.iter().cloned());
            if ctx.json() {
                let w = ctx.create("spectrum.json")?;
                rep.write_json(w, Some(&ctx.prov))?;
            }
            if ctx.csv() {
                let mut w = ctx.create("eigenvalues.csv")?;
                write_csv_comment(&mut w, Some(&ctx.prov))?;
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["re", "im"])?;
                for z in &rep.eigenvalues {
                    wr.write_record(&[format!("{:e}", z[0]), format!("{:e}", z[1])])?;
                }
                wr.flush()?;
            }
            let headline = json!({
                "state_dim": m.dim(),
                "kernel_dim": rep.kernel_dim,
                "kernel_dim_eigen": rep.kernel_dim_eigen,
                "spectral_abscissa": rep.spectral_abscissa,
                "max_modulus": rep.max_modulus,
                "clearance_required": rep.clearance_required,
                "clearance_ok": rep.clearance_ok,
                "imaginary_axis_eigenvalues": rep.imaginary_axis_eigenvalues.len(),
            });
            let mut checks = Vec::new();
            if let Some(k) = cfg.assertions.kernel_dim {
                checks.push(check("kernel_dim", k.to_string(), rep.kernel_dim.to_string(), k == rep.kernel_dim));
            }
            if let Some(c) = cfg.assertions.clearance {
                checks.push(check("clearance", c.to_string(), rep.clearance_ok.to_string(), c == rep.clearance_ok));
            }
            upper("max_spectral_abscissa", cfg.assertions.max_spectral_abscissa, rep.spectral_abscissa, &mut checks);
            Ok((headline, checks))
        }
        Experiment::Resolvent {
            beta_min,
            beta_max,
            samples,
            fit_window,
            deflate,
        } => {
            let h = HelmholtzSolver::new(&g, SolverMode::Auto)?;
            let m = assemble(&g, &alpha, law, &h, DEFAULT_DENSE_CAP)?;
            let red = if *deflate {
                let rep = eigen(&m, &alpha)?;
                ctx.warnings.extend(rep.warnings.iter().cloned());
                ReducedGenerator::new(&m, rep.kernel.as_ref().expect("kernel attached"))
            } else {
                ReducedGenerator::full(&m)
            };
            let band = resolved_band(&g);
            let lo = beta_min.unwrap_or(0.5);
            let hi = beta_max.unwrap_or(band);
            let betas: Vec<f64> = (0..*samples)
                .map(|i| lo + (hi - lo) * i as f64 / (*samples - 1) as f64)
                .collect();
            let sweep = sweep(&red, &betas)?;
            let fallbacks = sweep.iter().filter(|s| s.fallback).count();
            if fallbacks > 0 {
                ctx.warnings
                    .push(format!("{fallbacks} samples fell back to a full singular value decomposition"));
            }
            let window = fit_window.unwrap_or([lo.max(1.0), hi.min(band)]);
            let fit = fit_resolvent_exponent(&sweep, window, band);
            if let Err(e) = &fit {
                ctx.warnings.push(format!("exponent fit: {e}"));
            }
            if ctx.csv() {
                let w = ctx.create("resolvent.csv")?;
                write_resolvent_csv(&sweep, w, Some(&ctx.prov))?;
            }
            if ctx.json() {
                let doc = json!({
                    "resolved_band": band,
                    "reduced_dim": red.dim(),
                    "deflated": deflate,
                    "fit": fit.as_ref().ok(),
                    "samples": sweep,
                });
                let w = ctx.create("resolvent.json")?;
                write_json(&doc, w, Some(&ctx.prov))?;
            }
            let max_norm = sweep.iter().map(|s| s.resolvent_norm).fold(0.0, f64::max);
            let exponent = fit.as_ref().ok().map(|f| f.exponent);
            let headline = json!({
                "exponent": exponent,
                "fit_window": window,
                "resolved_band": band,
                "max_resolvent_norm": max_norm,
                "fallbacks": fallbacks,
            });
            let mut checks = Vec::new();
            upper("max_resolvent_exponent", cfg.assertions.max_resolvent_exponent, exponent, &mut checks);
            Ok((headline, checks))
        }
        Experiment::Observability {
            horizon,
            dt,
            widths,
            horizons,
            frequency_cutoff,
        } => {
            let settings = GramianSettings {
                frequency_cutoff: *frequency_cutoff,
                ..Default::default()
            };
            let step = dt.unwrap_or_else(|| default_quadrature_step(&g, *horizon));
            let rep = gramian_constant_with(&alpha, *horizon, &g, step, &settings)?;
            if ctx.json() {
                let w = ctx.create("observability.json")?;
                rep.write_json(w, Some(&ctx.prov))?;
            }
            let mut constants = vec![rep.constant];
            let mut headline = json!({
                "constant": rep.constant,
                "horizon": horizon,
                "dt": step,
                "data_dim": rep.data_dim,
                "minimizer": rep.minimizer_breakdown,
            });
            if let Some(ws) = widths {
                let level = cfg.damping.profile.level();
                let rows = collar_sweep(ws, level, *horizon, &g, step, &settings)?;
                constants.extend(rows.iter().map(|r| r.constant));
                if ctx.csv() {
                    let w = ctx.create("collar_sweep.csv")?;
                    write_sweep_csv(&rows, w, Some(&ctx.prov))?;
                }
                headline["collar_sweep"] = json!(rows);
            }
            if let Some(ts) = horizons {
                let mut rows = Vec::new();
                for &t in ts {
                    let s = dt.unwrap_or_else(|| default_quadrature_step(&g, t));
                    let r = gramian_constant_with(&alpha, t, &g, s, &settings)?;
                    constants.push(r.constant);
                    rows.push(json!({ "horizon": t, "dt": s, "constant": r.constant }));
                }
                if ctx.csv() {
                    let mut w = ctx.create("horizon_sweep.csv")?;
                    write_csv_comment(&mut w, Some(&ctx.prov))?;
                    let mut wr = csv::Writer::from_writer(w);
                    wr.write_record(["T", "dt", "C"])?;
                    for r in &rows {
                        wr.write_record(&[
                            format!("{:e}", r["horizon"].as_f64().unwrap_or(f64::NAN)),
                            format!("{:e}", r["dt"].as_f64().unwrap_or(f64::NAN)),
                            format!("{:e}", r["constant"].as_f64().unwrap_or(f64::NAN)),
                        ])?;
                    }
                    wr.flush()?;
                }
                headline["horizon_sweep"] = json!(rows);
            }
            let mut checks = Vec::new();
            let min = constants.iter().copied().fold(f64::INFINITY, f64::min);
            lower("min_observability_constant", cfg.assertions.min_observability_constant, Some(min), &mut checks);
            Ok((headline, checks))
        }
    }
}

fn strip_residuals(f: &crate::decay::DecayFit) -> Value {
    let mut v = serde_json::to_value(f).expect("fit serializes");
    if let Some(o) = v.as_object_mut() {
        o.remove("residuals");
    }
    v
}

/// Abscissae of the samples a fit used, for the residual export.
fn fit_abscissae(traj: &Trajectory, window: [f64; 2], log: bool) -> Vec<f64> {
    let e0 = traj.energies[0];
    traj.times
        .iter()
        .zip(&traj.energies)
        .take_while(|(_, e)| !(**e > 0.0 && **e <= crate::decay::FLOOR_FRACTION * e0))
        .filter(|(t, _)| **t >= window[0] && **t <= window[1])
        .map(|(t, _)| if log { t.ln() } else { *t })
        .collect()
}

fn run_series(
    ctx: &mut Context,
    g: &Grid,
    alpha: &DampingField,
    evo: &EvolutionConfig,
) -> Result<(Trajectory, Option<ClassifyReport>), RunError> {
    let cfg = ctx.cfg;
    let h = HelmholtzSolver::new(g, SolverMode::Auto)?;
    let z0 = cfg.initial.generate(alpha, evo.law, &h, cfg.seed)?;
    let traj = simulate(&z0, evo, alpha, &h)?;
    if ctx.csv() {
        let w = ctx.create("energy.csv")?;
        traj.write_csv(w, Some(&ctx.prov))?;
    }
    let class = classify(&traj.times, &traj.energies, &Default::default()).ok();
    Ok((traj, class))
}

fn series_headline(traj: &Trajectory) -> Value {
    let e0 = traj.energies[0];
    let et = *traj.energies.last().unwrap_or(&e0);
    json!({
        "steps": traj.times.len() - 1,
        "final_time": traj.times.last(),
        "initial_energy": e0,
        "final_energy": et,
        "relative_energy_change": relative_change(e0, et),
        "max_ledger_violation": traj.max_ledger_violation,
        "max_linear_residual": traj.max_linear_residual,
        "complete": traj.complete,
    })
}

fn relative_change(e0: f64, et: f64) -> f64 {
    if e0 > 0.0 {
        (et - e0).abs() / e0
    } else {
        (et - e0).abs()
    }
}

fn series_checks(ctx: &Context, traj: &Trajectory, class: Option<&ClassifyReport>) -> Vec<AssertionOutcome> {
    let a = &ctx.cfg.assertions;
    let mut out = Vec::new();
    upper("max_ledger_violation", a.max_ledger_violation, Some(traj.max_ledger_violation), &mut out);
    let e0 = traj.energies[0];
    let et = *traj.energies.last().unwrap_or(&e0);
    upper("max_relative_energy_change", a.max_relative_energy_change, Some(relative_change(e0, et)), &mut out);
    if let Some(want) = a.classification {
        let got: Option<Classification> = class.map(|c| c.class);
        out.push(check(
            "classification",
            format!("{want:?}").to_lowercase(),
            got.map(|c| format!("{c:?}").to_lowercase()).unwrap_or_else(|| "unavailable".into()),
            got == Some(want),
        ));
    }
    out
}

fn finish_series(traj: &Trajectory, headline: &mut Value, _checks: &mut [AssertionOutcome]) -> Result<(), RunError> {
    if traj.complete {
        return Ok(());
    }
    headline["failure"] = json!(traj.failure);
    Err(RunError::Numerical(Error::NoConvergence {
        solver: "midpoint step",
        iterations: traj.times.len() - 1,
        residual: traj.max_linear_residual,
    }))
}

/// Largest `n` with an `n x n` unit grid whose state dimension fits `cap`.
fn largest_square(cap: usize) -> usize {
    let mut n = 2;
    while 3 * (n + 1) * (n + 1) - 2 * (n + 1) <= cap {
        n += 1;
    }
    n
}

fn mb(bytes: f64) -> String {
    format!("{:.1} MB", bytes / 1e6)
}

/// Human-readable plan for `cfg`; nothing is executed.
pub fn describe(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let gc = &cfg.grid;
    let g = match gc.build() {
        Ok(g) => g,
        Err(e) => return format!("invalid grid: {e}\n"),
    };
    let n = g.state_dim();
    let _ = writeln!(s, "experiment: {}", cfg.experiment.name());
    let _ = writeln!(
        s,
        "grid: {} x {} cells on [0, {}] x [0, {}], hx = {:.6}, hy = {:.6}",
        g.nx, g.ny, g.lx, g.ly, g.hx, g.hy
    );
    let _ = writeln!(
        s,
        "unknowns: {} x-faces + {} y-faces + {} cells = state dimension {n} (3*nx*ny - nx - ny)",
        g.n_xfaces(),
        g.n_yfaces(),
        g.n_cells()
    );
    let _ = writeln!(s, "divergence-free subspace (interior nodes): {}", g.n_nodes());
    let _ = writeln!(
        s,
        "damping: {} law, {} profile, level {}",
        cfg.damping.law,
        cfg.damping.profile.kind_name(),
        cfg.damping.profile.level()
    );
    let kernel = match (cfg.damping.law, &cfg.damping.profile) {
        (DampingLaw::None, _) | (DampingLaw::Modified, _) | (DampingLaw::Brinkman, DampingProfile::Zero) => {
            format!("{} (divergence-free velocities and constant pressure)", g.n_nodes() + 1)
        }
        (DampingLaw::Brinkman, DampingProfile::Constant { level }) if *level > 0.0 => "1 (constant pressure)".to_string(),
        _ => "between 1 and interior-node count + 1; computed from the dense generator".to_string(),
    };
    let _ = writeln!(s, "kernel dimension: {kernel}");
    let helm = if n <= DIRECT_MODE_MAX_STATE_DIM {
        "direct cosine factorization"
    } else {
        "deflated conjugate gradients"
    };
    let _ = writeln!(s, "Helmholtz solver: {helm} (switch at state dimension {DIRECT_MODE_MAX_STATE_DIM})");
    let dense_bytes = (n * n * 8) as f64;
    let dense_ok = n <= DEFAULT_DENSE_CAP;
    let cap_advice = || {
        let k = largest_square(DEFAULT_DENSE_CAP);
        format!(
            "dense cap exceeded: state dimension {n} > {DEFAULT_DENSE_CAP}; use grids with 3*nx*ny - nx - ny <= {DEFAULT_DENSE_CAP}, e.g. nx = ny <= {k} (state dimension {})",
            3 * k * k - 2 * k
        )
    };
    match &cfg.experiment {
        Experiment::Simulate { dt, nsteps, .. } | Experiment::DecayFit { dt, nsteps, .. } => {
            let solver = match &cfg.experiment {
                Experiment::Simulate { solver, .. } => *solver,
                _ => Default::default(),
            };
            let backend = match (cfg.damping.law, solver) {
                (_, crate::semigroup::StepSolver::Direct) => "dense LU of the shifted generator",
                (DampingLaw::Modified, crate::semigroup::StepSolver::Auto) if dense_ok => "cached dense LU of the shifted generator",
                (DampingLaw::Modified, _) => "restarted GMRES",
                _ => "Schur complement conjugate gradients on the pressure",
            };
            let _ = writeln!(s, "time stepping: implicit midpoint, dt = {dt}, {nsteps} steps, T = {}", *dt * *nsteps as f64);
            let _ = writeln!(s, "linear solver: {backend}");
            if backend.contains("dense") {
                let _ = writeln!(s, "memory: dense factor {}", mb(dense_bytes));
            }
            let snaps = nsteps / cfg.output.state_stride.max(1) + 2;
            let _ = writeln!(s, "memory: {} state snapshots, {}", snaps, mb((snaps * n * 8) as f64));
            let _ = writeln!(s, "initial data: {:?}, seed {}", cfg.initial, cfg.seed);
        }
        Experiment::Spectrum {} => {
            if dense_ok {
                let _ = writeln!(s, "mode: dense eigenvalues and SVD, matrix {}, workspace about {}", mb(dense_bytes), mb(4.0 * dense_bytes));
            } else {
                let _ = writeln!(s, "{}", cap_advice());
            }
        }
        Experiment::Resolvent { samples, beta_max, deflate, .. } => {
            let band = resolved_band(&g);
            if dense_ok {
                let _ = writeln!(s, "mode: dense generator {}, {samples} samples up to beta = {:.4}", mb(dense_bytes), beta_max.unwrap_or(band));
                let reduced = if *deflate { "kernel complement" } else { "full state space" };
                let _ = writeln!(s, "resolvent: complex LU + Lanczos per sample on the {reduced}, about {} per thread", mb((n * n * 16) as f64));
            } else {
                let _ = writeln!(s, "{}", cap_advice());
            }
            let _ = writeln!(s, "resolved band: beta <= pi / (4 h) = {band:.4}");
        }
        Experiment::Observability { horizon, dt, widths, frequency_cutoff, .. } => {
            let dim = 2 * (g.n_cells() - 1);
            let step = dt.unwrap_or_else(|| default_quadrature_step(&g, *horizon));
            let _ = writeln!(s, "Gramian: data dimension up to {dim} (cap {DEFAULT_GRAMIAN_CAP}), matrix {}", mb((dim * dim * 8) as f64));
            if dim > DEFAULT_GRAMIAN_CAP && frequency_cutoff.is_none() {
                let _ = writeln!(s, "Gramian cap exceeded: reduce the grid or set frequency_cutoff");
            }
            let _ = writeln!(s, "quadrature: trapezoid, dt = {step:.6}, {} steps", (horizon / step).round());
            if let Some(ws) = widths {
                let _ = writeln!(s, "collar sweep over widths {ws:?}");
            }
        }
    }
    let _ = writeln!(s, "output directory: {}", cfg.output.dir.display());
    let _ = writeln!(s, "\nresolved configuration (defaults applied):");
    match toml::to_string(cfg) {
        Ok(t) => s.push_str(&t),
        Err(e) => {
            let _ = writeln!(s, "<unprintable: {e}>");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml(text).unwrap()
    }

    const SIM: &str = r#"
seed = 3
[grid]
nx = 8
ny = 8
[damping.profile]
kind = "zero"
[experiment]
kind = "simulate"
dt = 0.01
nsteps = 100
[assertions]
max_relative_energy_change = 1e-9
"#;

    #[test]
    fn manifest_hash_is_stable_and_config_sensitive() {
        let a = cfg(SIM);
        assert_eq!(manifest(&a).1, manifest(&a).1);
        let b = cfg(&SIM.replace("seed = 3", "seed = 4"));
        assert_ne!(manifest(&a).1, manifest(&b).1);
        assert_eq!(manifest(&a).1.len(), 64);
    }

    #[test]
    fn minimal_simulation_runs() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg(SIM), Some(dir.path()));
        assert_eq!(out.status, EXIT_OK, "{:?}", out.error);
        let s = out.summary.unwrap();
        assert!(s.passed);
        for f in ["manifest.json", "energy.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert!(csv.starts_with(&format!("# manifest_sha256={} seed=3", s.manifest_sha256)));
    }

    #[test]
    fn failing_assertion_gives_status_one() {
        let text = SIM.replace("kind = \"zero\"", "kind = \"constant\"\nlevel = 1.0");
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg(&text), Some(dir.path()));
        assert_eq!(out.status, EXIT_ASSERTION);
        assert!(!out.summary.unwrap().assertions[0].passed);
    }

    #[test]
    fn cap_violations_are_configuration_errors() {
        let text = SIM
            .replace("nx = 8\nny = 8", "nx = 64\nny = 64")
            .replace("kind = \"simulate\"\ndt = 0.01\nnsteps = 100", "kind = \"spectrum\"")
            .replace("max_relative_energy_change = 1e-9", "");
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg(&text), Some(dir.path()));
        assert_eq!(out.status, EXIT_SCHEMA);
    }

    #[test]
    fn describe_reports_dimensions_and_cap() {
        let text = SIM
            .replace("nx = 8\nny = 8", "nx = 512\nny = 512")
            .replace("kind = \"simulate\"\ndt = 0.01\nnsteps = 100", "kind = \"spectrum\"")
            .replace("max_relative_energy_change = 1e-9", "");
        let d = describe(&cfg(&text));
        assert!(d.contains("state dimension 785408"), "{d}");
        assert!(d.contains("dense cap exceeded"), "{d}");
        assert!(d.contains("nx = ny <= 45"), "{d}");
        let d = describe(&cfg(SIM));
        assert!(d.contains("linear_tol = 0.000000000001"), "{d}");
        assert!(d.contains("state_stride = 100"), "{d}");
    }
}
