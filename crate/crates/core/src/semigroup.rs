//! Time evolution `Z' = A_d Z = -(grad r + D u, div u)` by the implicit
//! midpoint rule, with a per-step energy ledger.
//!
//! For the midpoint rule `E(Z+) - E(Z) = -dt <D Z_mid, Z_mid>` holds
//! exactly when the shifted system is solved exactly, so the ledger
//! residual measures only the linear-solver error.

use std::io::Write;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::damping::{apply_damping, dissipation_rate, DampingField, DampingLaw};
use crate::error::{Error, Result};
use crate::provenance::{write_csv_comment, Provenance};
use crate::grid::{energy, norm_sq_unchecked, CellField, FaceField, Grid, State};
use crate::helmholtz::HelmholtzSolver;
use crate::linalg::{conjugate_gradient, gmres};
use crate::spectral::{assemble, DEFAULT_DENSE_CAP};

/// `A_d Z = -(grad r + D u, div u)`.
pub fn apply_generator(z: &State, alpha: &DampingField, law: DampingLaw, h: &HelmholtzSolver) -> Result<State> {
    let g = h.grid();
    z.check(g)?;
    let d = apply_damping(law, alpha, z, h)?;
    let mut out = State::zeros(g);
    g.grad_into(&z.r.values, &mut out.u.x, &mut out.u.y);
    for (o, dv) in out.u.iter_mut().zip(d.u.iter()) {
        *o = -(*o + dv);
    }
    g.div_into(&z.u.x, &z.u.y, &mut out.r.values);
    out.r.values.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSolver {
    /// Krylov for `none`/`brinkman`, cached dense LU for `modified` below the dense cap.
    #[default]
    Auto,
    Krylov,
    Direct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub nsteps: usize,
    #[serde(default)]
    pub law: DampingLaw,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "default_true")]
    pub ledger: bool,
    #[serde(default = "default_state_stride")]
    pub state_stride: usize,
    #[serde(default)]
    pub solver: StepSolver,
}

fn default_linear_tol() -> f64 {
    1e-12
}
fn default_true() -> bool {
    true
}
fn default_state_stride() -> usize {
    100
}

impl EvolutionConfig {
    pub fn new(dt: f64, nsteps: usize, law: DampingLaw) -> Self {
        Self {
            dt,
            nsteps,
            law,
            linear_tol: default_linear_tol(),
            ledger: true,
            state_stride: default_state_stride(),
            solver: StepSolver::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.nsteps < 1 {
            return Err(Error::InvalidArgument("nsteps must be >= 1".into()));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("linear_tol must be > 0, got {}", self.linear_tol)));
        }
        Ok(())
    }
}

enum Backend {
    /// Schur complement on the cell unknowns; `weights[f] = 1 / (1 + dt/2 alpha_f)`.
    Schur { weights: Vec<f64> },
    Gmres,
    Dense { lu: PartialPivLu<f64> },
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: State,
    /// `dt <D Z_mid, Z_mid>`, zero when the ledger is off.
    pub dissipated: f64,
    /// `E(Z+) - E(Z) + dissipated`.
    pub ledger_residual: f64,
    pub iterations: usize,
    pub linear_residual: f64,
}

/// Implicit midpoint stepper for a fixed grid, damping and step size.
pub struct MidpointStepper<'a> {
    alpha: &'a DampingField,
    law: DampingLaw,
    h: &'a HelmholtzSolver,
    dt: f64,
    tol: f64,
    ledger: bool,
    backend: Backend,
}

impl<'a> MidpointStepper<'a> {
    pub fn new(
        alpha: &'a DampingField,
        law: DampingLaw,
        h: &'a HelmholtzSolver,
        dt: f64,
        tol: f64,
        solver: StepSolver,
    ) -> Result<Self> {
        let g = h.grid();
        alpha.check(g)?;
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be finite and nonzero, got {dt}")));
        }
        let use_dense = match solver {
            StepSolver::Direct => true,
            StepSolver::Krylov => false,
            StepSolver::Auto => law == DampingLaw::Modified && g.state_dim() <= DEFAULT_DENSE_CAP,
        };
        let backend = if use_dense {
            let m = assemble(g, alpha, law, h, DEFAULT_DENSE_CAP)?;
            let n = g.state_dim();
            let shifted = Mat::<f64>::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - 0.5 * dt * m.matrix[(i, j)]
            });
            Backend::Dense {
                lu: shifted.partial_piv_lu(),
            }
        } else if law == DampingLaw::Modified {
            Backend::Gmres
        } else {
            let weights: Vec<f64> = alpha
                .faces
                .iter()
                .map(|&a| {
                    let a = if law == DampingLaw::None { 0.0 } else { a };
                    1.0 + 0.5 * dt * a
                })
                .map(|d| if d > 0.0 { Ok(1.0 / d) } else { Err(d) })
                .collect::<std::result::Result<_, _>>()
                .map_err(|d| Error::InvalidArgument(format!("shifted damping 1 + dt/2 alpha = {d} is not positive")))?;
            Backend::Schur { weights }
        };
        Ok(Self {
            alpha,
            law,
            h,
            dt,
            tol,
            ledger: true,
            backend,
        })
    }

    pub fn with_ledger(mut self, ledger: bool) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense { .. })
    }

    /// Advances one step: solves `(I - dt/2 A_d) Z+ = (I + dt/2 A_d) Z`.
    pub fn step(&self, z: &State) -> Result<StepOutcome> {
        let g = self.h.grid();
        let half = 0.5 * self.dt;
        let az = apply_generator(z, self.alpha, self.law, self.h)?;
        let mut b = z.clone();
        b.axpy(half, &az);
        let (next, iterations, linear_residual) = match &self.backend {
            Backend::Schur { weights } => self.solve_schur(g, weights, &b, z)?,
            Backend::Gmres => {
                let apply = |x: &[f64], y: &mut [f64]| -> Result<()> {
                    let xs = State::from_slice(g, x)?;
                    let ax = apply_generator(&xs, self.alpha, self.law, self.h)?.to_vec();
                    for ((yi, xi), ai) in y.iter_mut().zip(x).zip(&ax) {
                        *yi = xi - half * ai;
                    }
                    Ok(())
                };
                let (x, stats) = gmres(apply, &b.to_vec(), Some(&z.to_vec()), self.tol, 60, 5_000)?;
                (State::from_slice(g, &x)?, stats.iterations, stats.residual)
            }
            Backend::Dense { lu } => {
                let bv = b.to_vec();
                let rhs = Mat::<f64>::from_fn(bv.len(), 1, |i, _| bv[i]);
                let x = lu.solve(&rhs);
                let xv: Vec<f64> = (0..bv.len()).map(|i| x[(i, 0)]).collect();
                (State::from_slice(g, &xv)?, 0, 0.0)
            }
        };
        let (dissipated, ledger_residual) = if self.ledger {
            let mut mid = z.clone();
            mid.axpy(1.0, &next);
            let mid = mid.scaled(0.5);
            let dissipated = self.dt * dissipation_rate(self.law, self.alpha, &mid, self.h)?;
            let res = energy(&next, g)? - energy(z, g)? + dissipated;
            (dissipated, res)
        } else {
            (0.0, 0.0)
        };
        Ok(StepOutcome {
            next,
            dissipated,
            ledger_residual,
            iterations,
            linear_residual,
        })
    }

    fn solve_schur(&self, g: &Grid, w: &[f64], b: &State, z: &State) -> Result<(State, usize, f64)> {
        let half = 0.5 * self.dt;
        let nfx = g.n_xfaces();
        // rhs_r = b_r - dt/2 div(W b_u)
        let wbx: Vec<f64> = b.u.x.iter().zip(&w[..nfx]).map(|(u, w)| u * w).collect();
        let wby: Vec<f64> = b.u.y.iter().zip(&w[nfx..]).map(|(u, w)| u * w).collect();
        let mut divwb = vec![0.0; g.n_cells()];
        g.div_into(&wbx, &wby, &mut divwb);
        let rhs: Vec<f64> = b.r.values.iter().zip(&divwb).map(|(r, d)| r - half * d).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut gx = vec![0.0; nfx];
            let mut gy = vec![0.0; g.n_yfaces()];
            g.grad_into(x, &mut gx, &mut gy);
            gx.iter_mut().zip(&w[..nfx]).for_each(|(v, w)| *v *= w);
            gy.iter_mut().zip(&w[nfx..]).for_each(|(v, w)| *v *= w);
            g.div_into(&gx, &gy, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = xi - half * half * *yi;
            }
        };
        let (r, stats) = conjugate_gradient(apply, |_| {}, &rhs, Some(&z.r.values), self.tol, 10_000)?;
        // u+ = W (b_u - dt/2 grad r+)
        let mut gx = vec![0.0; nfx];
        let mut gy = vec![0.0; g.n_yfaces()];
        g.grad_into(&r, &mut gx, &mut gy);
        let ux = b.u.x.iter().zip(&gx).zip(&w[..nfx]).map(|((b, gr), w)| w * (b - half * gr)).collect();
        let uy = b.u.y.iter().zip(&gy).zip(&w[nfx..]).map(|((b, gr), w)| w * (b - half * gr)).collect();
        Ok((
            State {
                u: FaceField { x: ux, y: uy },
                r: CellField { values: r },
            },
            stats.iterations,
            stats.residual,
        ))
    }
}

/// Energy history of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// Cumulative `sum dt <D Z_mid, Z_mid>`.
    pub dissipation: Vec<f64>,
    /// Signed ledger residual of the step ending at each time (0 at t = 0).
    pub ledger_residuals: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, State)>,
    /// `max |ledger residual| / ||Z_n||²` over the run.
    pub max_ledger_violation: f64,
    pub max_linear_residual: f64,
    pub complete: bool,
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&State> {
        self.snapshots.last().map(|(_, s)| s)
    }

    /// `(t, E)` pairs for the decay fits.
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.energies.iter().copied()).collect()
    }

    /// CSV with columns `t,E,dissipation,ledger_residual`, preceded by a
    /// provenance comment line when one is given.
    pub fn write_csv<W: Write>(&self, mut w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
        write_csv_comment(&mut w, prov)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "E", "dissipation", "ledger_residual"])?;
        for i in 0..self.times.len() {
            wr.write_record(&[
                format!("{:e}", self.times[i]),
                format!("{:e}", self.energies[i]),
                format!("{:e}", self.dissipation[i]),
                format!("{:e}", self.ledger_residuals[i]),
            ])?;
        }
        wr.flush()
    }
}

/// Runs `cfg.nsteps` midpoint steps from `z0`.
///
/// A failing step ends the run early; the partial trajectory is returned
/// with `complete = false` and the failure message.
pub fn simulate(z0: &State, cfg: &EvolutionConfig, alpha: &DampingField, h: &HelmholtzSolver) -> Result<Trajectory> {
    cfg.validate()?;
    let g = h.grid();
    z0.check(g)?;
    let stepper = MidpointStepper::new(alpha, cfg.law, h, cfg.dt, cfg.linear_tol, cfg.solver)?.with_ledger(cfg.ledger);
    let mut traj = Trajectory {
        times: vec![0.0],
        energies: vec![energy(z0, g)?],
        dissipation: vec![0.0],
        ledger_residuals: vec![0.0],
        snapshots: vec![(0.0, z0.clone())],
        max_ledger_violation: 0.0,
        max_linear_residual: 0.0,
        complete: true,
        failure: None,
    };
    let stride = cfg.state_stride.max(1);
    let mut z = z0.clone();
    for n in 1..=cfg.nsteps {
        let out = match stepper.step(&z) {
            Ok(o) => o,
            Err(e) => {
                traj.complete = false;
                traj.failure = Some(format!("step {n}: {e}"));
                break;
            }
        };
        let t = n as f64 * cfg.dt;
        let zn = norm_sq_unchecked(&z, g);
        if zn > 0.0 {
            traj.max_ledger_violation = traj.max_ledger_violation.max(out.ledger_residual.abs() / zn);
        }
        traj.max_linear_residual = traj.max_linear_residual.max(out.linear_residual);
        z = out.next;
        traj.times.push(t);
        traj.energies.push(energy(&z, g)?);
        traj.dissipation.push(traj.dissipation[n - 1] + out.dissipated);
        traj.ledger_residuals.push(out.ledger_residual);
        if n % stride == 0 || n == cfg.nsteps {
            traj.snapshots.push((t, z.clone()));
        }
    }
    if !traj.complete {
        if let Some((t, _)) = traj.snapshots.last() {
            if *t != *traj.times.last().unwrap() {
                traj.snapshots.push((*traj.times.last().unwrap(), z));
            }
        }
    }
    Ok(traj)
}
