//! Neumann wave propagation and the damping-weighted observability Gramian.
//!
//! With `u = grad(psi)` and `r = -psi_t` the undamped acoustic system is the
//! wave equation for `psi`, so propagation reuses the midpoint stepper.
//! The data space is `(grad psi0, psi1)` with zero-mean `psi0, psi1`, and
//! `<G w, w> = int_0^T sum alpha |grad psi(t)|^2` by trapezoidal quadrature.

use std::io::Write;

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::Serialize;

use crate::damping::{sample_profile, DampingField, DampingLaw, DampingProfile};
use crate::error::{Error, Result};
use crate::provenance::{write_csv_comment, Provenance};
use crate::grid::{grad, CellField, Grid, State};
use crate::helmholtz::{HelmholtzSolver, NeumannModes};
use crate::semigroup::{MidpointStepper, StepSolver};

/// Largest data-space dimension for which the Gramian is assembled.
pub const DEFAULT_GRAMIAN_CAP: usize = 4_000;
/// Largest admissible `dt * omega_max`.
pub const QUADRATURE_LIMIT: f64 = 1.0;
const MEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub psi: CellField,
    pub psi_t: CellField,
}

fn mean(f: &CellField) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

fn rms(f: &CellField) -> f64 {
    (f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64).sqrt()
}

impl WaveState {
    /// Checks shapes and that both fields have zero mean.
    pub fn new(g: &Grid, psi: CellField, psi_t: CellField) -> Result<Self> {
        psi.check(g)?;
        psi_t.check(g)?;
        for (name, f) in [("psi", &psi), ("psi_t", &psi_t)] {
            let m = mean(f);
            if m.abs() > MEAN_TOL * rms(f).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!("{name} must have zero mean, got {m:e}")));
            }
        }
        Ok(Self { psi, psi_t })
    }

    pub fn zeros(g: &Grid) -> Self {
        Self {
            psi: CellField::zeros(g),
            psi_t: CellField::zeros(g),
        }
    }

    /// `1/2 (||grad psi||² + ||psi_t||²)`.
    pub fn energy(&self, g: &Grid) -> Result<f64> {
        let gp = grad(&self.psi, g)?;
        let pt: f64 = self.psi_t.values.iter().map(|v| v * v).sum::<f64>() * g.cell_area();
        Ok(0.5 * (gp.norm_sq(g) + pt))
    }

    /// Acoustic state `(grad psi, -psi_t)`.
    pub fn to_acoustic(&self, g: &Grid) -> Result<State> {
        Ok(State {
            u: grad(&self.psi, g)?,
            r: self.psi_t.scaled(-1.0),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveTrajectory {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub psi_means: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, WaveState)>,
    pub max_energy_drift: f64,
}

/// Propagates the Neumann wave equation for `nsteps` midpoint steps,
/// keeping every `stride`-th state.
pub fn wave_simulate(w0: &WaveState, h: &HelmholtzSolver, dt: f64, nsteps: usize, tol: f64, stride: usize) -> Result<WaveTrajectory> {
    let g = h.grid();
    let w0 = WaveState::new(g, w0.psi.clone(), w0.psi_t.clone())?;
    let alpha = sample_profile(&DampingProfile::Zero, g)?;
    let stepper = MidpointStepper::new(&alpha, DampingLaw::None, h, dt, tol, StepSolver::Krylov)?.with_ledger(false);
    let stride = stride.max(1);
    let e0 = w0.energy(g)?;
    let mut traj = WaveTrajectory {
        times: vec![0.0],
        energies: vec![e0],
        psi_means: vec![mean(&w0.psi)],
        snapshots: vec![(0.0, w0.clone())],
        max_energy_drift: 0.0,
    };
    let mut psi = w0.psi.clone();
    let mut z = w0.to_acoustic(g)?;
    for n in 1..=nsteps {
        let next = stepper.step(&z)?.next;
        for ((p, a), b) in psi.values.iter_mut().zip(&z.r.values).zip(&next.r.values) {
            *p -= 0.5 * dt * (a + b);
        }
        z = next;
        let w = WaveState {
            psi: psi.clone(),
            psi_t: z.r.scaled(-1.0),
        };
        let e = w.energy(g)?;
        if e0 > 0.0 {
            traj.max_energy_drift = traj.max_energy_drift.max((e - e0).abs() / e0);
        }
        traj.times.push(n as f64 * dt);
        traj.energies.push(e);
        traj.psi_means.push(mean(&psi));
        if n % stride == 0 || n == nsteps {
            traj.snapshots.push((n as f64 * dt, w));
        }
    }
    Ok(traj)
}

/// Largest discrete wave frequency `sqrt(mu_x,max + mu_y,max)`.
pub fn max_frequency(g: &Grid) -> f64 {
    let m = NeumannModes::new(g);
    m.eigenvalue(g.nx - 1, g.ny - 1).sqrt()
}

/// Smallest step count with `dt * omega_max <= 1`, returned as `dt = T / steps`.
pub fn default_quadrature_step(g: &Grid, horizon: f64) -> f64 {
    let steps = (horizon * max_frequency(g) / QUADRATURE_LIMIT).ceil().max(1.0);
    horizon / steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GramianMethod {
    /// Closed-form per-mode midpoint rotation.
    #[default]
    Modal,
    /// Explicit midpoint propagation of every basis vector.
    Propagation,
}

/// Gramian in the orthonormal data basis `[grad-part modes; velocity modes]`.
#[derive(Debug, Clone)]
pub struct Gramian {
    pub matrix: Mat<f64>,
    pub grid: Grid,
    /// Cosine mode indices `(k, l)` of the basis, mean mode excluded.
    pub modes: Vec<(usize, usize)>,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Gramian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Data-space vector `[a; b]` to wave initial data.
    pub fn to_wave_state(&self, w: &[f64]) -> WaveState {
        let g = &self.grid;
        let modes = NeumannModes::new(g);
        let area = g.cell_area();
        let m = self.modes.len();
        let mut psi = vec![0.0; g.n_cells()];
        let mut psi_t = vec![0.0; g.n_cells()];
        for (i, &(k, l)) in self.modes.iter().enumerate() {
            let c = modes.mode(k, l);
            let sa = w[i] / (modes.eigenvalue(k, l) * area).sqrt();
            let sb = w[m + i] / area.sqrt();
            for ((p, q), cv) in psi.iter_mut().zip(psi_t.iter_mut()).zip(&c) {
                *p += sa * cv;
                *q += sb * cv;
            }
        }
        WaveState {
            psi: CellField { values: psi },
            psi_t: CellField { values: psi_t },
        }
    }
}

/// Options for [`gramian`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GramianSettings {
    pub method: GramianMethod,
    pub cap: usize,
    /// Keep only modes with frequency at most this value. Discrete waves near
    /// the grid scale travel slowly, so the unfiltered constant shrinks under
    /// refinement; filtering to a common band makes resolutions comparable.
    pub frequency_cutoff: Option<f64>,
}

impl Default for GramianSettings {
    fn default() -> Self {
        Self {
            method: GramianMethod::Modal,
            cap: DEFAULT_GRAMIAN_CAP,
            frequency_cutoff: None,
        }
    }
}

fn quadrature(g: &Grid, horizon: f64, dt: f64, settings: &GramianSettings) -> Result<(usize, Vec<(usize, usize)>)> {
    if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} and step {dt} must be positive")));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("horizon {horizon} is not an integer multiple of dt = {dt}")));
    }
    let max_dt = QUADRATURE_LIMIT / max_frequency(g);
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::QuadratureTooCoarse { dt, max_dt });
    }
    let nm = NeumannModes::new(g);
    let cutoff = settings.frequency_cutoff.unwrap_or(f64::INFINITY);
    let modes: Vec<(usize, usize)> = (0..g.ny)
        .flat_map(|l| (0..g.nx).map(move |k| (k, l)))
        .filter(|&(k, l)| (k, l) != (0, 0) && nm.eigenvalue(k, l).sqrt() <= cutoff)
        .collect();
    if modes.is_empty() {
        return Err(Error::InvalidArgument(format!("no mode below the frequency cutoff {cutoff}")));
    }
    let dim = 2 * modes.len();
    if dim > settings.cap {
        return Err(Error::DenseCapExceeded { dim, cap: settings.cap });
    }
    Ok((steps as usize, modes))
}

fn trapezoid_weight(n: usize, steps: usize, dt: f64) -> f64 {
    if n == 0 || n == steps {
        0.5 * dt
    } else {
        dt
    }
}

/// Normalized gradients `grad c / ||grad c||` of every basis mode, one column each.
fn gradient_basis(g: &Grid, modes: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
    let nm = NeumannModes::new(g);
    let area = g.cell_area();
    modes
        .iter()
        .map(|&(k, l)| {
            let c = CellField { values: nm.mode(k, l) };
            let gc = grad(&c, g)?;
            let s = 1.0 / (nm.eigenvalue(k, l) * area).sqrt();
            Ok(gc.iter().map(|v| v * s).collect())
        })
        .collect()
}

pub fn gramian(alpha: &DampingField, horizon: f64, g: &Grid, dt: f64, settings: &GramianSettings) -> Result<Gramian> {
    alpha.check(g)?;
    let (steps, modes) = quadrature(g, horizon, dt, settings)?;
    let matrix = match settings.method {
        GramianMethod::Modal => modal_gramian(alpha, g, dt, steps, &modes)?,
        GramianMethod::Propagation => propagated_gramian(alpha, g, dt, steps, &modes)?,
    };
    Ok(Gramian {
        matrix,
        grid: *g,
        modes,
        horizon,
        dt,
        steps,
    })
}

/// Each mode pair rotates by `theta = 2 atan(omega dt / 2)` per midpoint
/// step, so `grad psi(t_n) = sum (a_i cos(n theta_i) + b_i sin(n theta_i)) g_i`.
fn modal_gramian(alpha: &DampingField, g: &Grid, dt: f64, steps: usize, modes: &[(usize, usize)]) -> Result<Mat<f64>> {
    let nm = NeumannModes::new(g);
    let m = modes.len();
    let area = g.cell_area();
    let basis = gradient_basis(g, modes)?;
    let weights: Vec<f64> = alpha.faces.iter().map(|&a| (a * area).max(0.0).sqrt()).collect();
    let nf = weights.len();
    let b = Mat::<f64>::from_fn(nf, m, |f, i| weights[f] * basis[i][f]);
    let k = b.transpose() * &b;
    let theta: Vec<f64> = modes
        .iter()
        .map(|&(kx, ly)| 2.0 * (0.5 * nm.eigenvalue(kx, ly).sqrt() * dt).atan())
        .collect();
    let cos = Mat::<f64>::from_fn(steps + 1, m, |n, i| trapezoid_weight(n, steps, dt).sqrt() * (n as f64 * theta[i]).cos());
    let sin = Mat::<f64>::from_fn(steps + 1, m, |n, i| trapezoid_weight(n, steps, dt).sqrt() * (n as f64 * theta[i]).sin());
    let cc = cos.transpose() * &cos;
    let cs = cos.transpose() * &sin;
    let ss = sin.transpose() * &sin;
    Ok(Mat::<f64>::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
        (true, true) => k[(i, j)] * cc[(i, j)],
        (true, false) => k[(i, j - m)] * cs[(i, j - m)],
        (false, true) => k[(i - m, j)] * cs[(j, i - m)],
        (false, false) => k[(i - m, j - m)] * ss[(i - m, j - m)],
    }))
}

fn propagated_gramian(alpha: &DampingField, g: &Grid, dt: f64, steps: usize, modes: &[(usize, usize)]) -> Result<Mat<f64>> {
    let h = HelmholtzSolver::new(g, Default::default())?;
    let zero = sample_profile(&DampingProfile::Zero, g)?;
    let stepper = MidpointStepper::new(&zero, DampingLaw::None, &h, dt, 1e-14, StepSolver::Krylov)?.with_ledger(false);
    let nm = NeumannModes::new(g);
    let m = modes.len();
    let area = g.cell_area();
    let basis = gradient_basis(g, modes)?;
    // Initial acoustic states (u, r) = (grad psi0, -psi1) of the basis vectors.
    let initial = |j: usize| -> Result<State> {
        let mut z = State::zeros(g);
        if j < m {
            let nx_f = g.n_xfaces();
            let col = &basis[j];
            z.u.x.copy_from_slice(&col[..nx_f]);
            z.u.y.copy_from_slice(&col[nx_f..]);
        } else {
            let (k, l) = modes[j - m];
            let s = -1.0 / area.sqrt();
            z.r.values = nm.mode(k, l).iter().map(|v| v * s).collect();
        }
        Ok(z)
    };
    let sqrt_alpha: Vec<f64> = alpha.faces.iter().map(|&a| (a * area).max(0.0).sqrt()).collect();
    // Columns of the weighted observation history, one per basis vector.
    let histories: Vec<Vec<f64>> = (0..2 * m)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let mut z = initial(j)?;
            let mut out = Vec::with_capacity((steps + 1) * sqrt_alpha.len());
            for n in 0..=steps {
                if n > 0 {
                    z = stepper.step(&z)?.next;
                }
                let w = trapezoid_weight(n, steps, dt).sqrt();
                out.extend(z.u.iter().zip(&sqrt_alpha).map(|(u, s)| w * s * u));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows = histories[0].len();
    let obs = Mat::<f64>::from_fn(rows, 2 * m, |i, j| histories[j][i]);
    Ok(obs.transpose() * &obs)
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerBreakdown {
    /// `||grad psi0||²` share of the unit-norm minimizer.
    pub gradient_part: f64,
    /// `||psi1||²` share.
    pub velocity_part: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub damping: DampingProfile,
    pub method: GramianMethod,
    pub data_dim: usize,
    /// Smallest Rayleigh quotient, clamped at zero.
    pub constant: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub gramian_norm: f64,
    pub symmetry_error: f64,
    pub minimizer_breakdown: MinimizerBreakdown,
    #[serde(skip)]
    pub minimizer: WaveState,
}

impl ObservabilityReport {
    pub fn write_json<W: Write>(&self, w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
        crate::provenance::write_json(self, w, prov)
    }
}

pub fn report(gm: &Gramian, damping: &DampingProfile, method: GramianMethod) -> Result<ObservabilityReport> {
    let n = gm.dim();
    let a = &gm.matrix;
    let norm = crate::linalg::frobenius(a);
    let mut asym = 0.0;
    for j in 0..n {
        for i in 0..n {
            asym += (a[(i, j)] - a[(j, i)]).powi(2);
        }
    }
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let lmin = s[0];
    let lmax = s[n - 1];
    let u = eig.U();
    let w: Vec<f64> = (0..n).map(|i| u[(i, 0)]).collect();
    let m = n / 2;
    let gradient_part: f64 = w[..m].iter().map(|v| v * v).sum();
    Ok(ObservabilityReport {
        horizon: gm.horizon,
        dt: gm.dt,
        steps: gm.steps,
        damping: damping.clone(),
        method,
        data_dim: n,
        constant: lmin.max(0.0),
        min_eigenvalue: lmin,
        max_eigenvalue: lmax,
        gramian_norm: norm,
        symmetry_error: asym.sqrt(),
        minimizer_breakdown: MinimizerBreakdown {
            gradient_part,
            velocity_part: 1.0 - gradient_part,
        },
        minimizer: gm.to_wave_state(&w),
    })
}

/// `C(T)`: smallest eigenvalue of the Gramian over the unit data sphere.
pub fn gramian_constant(alpha: &DampingField, horizon: f64, g: &Grid, dt: f64) -> Result<ObservabilityReport> {
    gramian_constant_with(alpha, horizon, g, dt, &GramianSettings::default())
}

pub fn gramian_constant_with(alpha: &DampingField, horizon: f64, g: &Grid, dt: f64, settings: &GramianSettings) -> Result<ObservabilityReport> {
    let gm = gramian(alpha, horizon, g, dt, settings)?;
    report(&gm, &alpha.profile, settings.method)
}

#[derive(Debug, Clone, Serialize)]
pub struct CollarRow {
    pub width: f64,
    pub horizon: f64,
    pub constant: f64,
}

/// `C(T)` for boundary collars of the given widths at level `level`.
pub fn collar_sweep(widths: &[f64], level: f64, horizon: f64, g: &Grid, dt: f64, settings: &GramianSettings) -> Result<Vec<CollarRow>> {
    widths
        .par_iter()
        .map(|&width| {
            let alpha = sample_profile(&DampingProfile::BoundaryCollar { level, width }, g)?;
            let rep = gramian_constant_with(&alpha, horizon, g, dt, settings)?;
            Ok(CollarRow {
                width,
                horizon,
                constant: rep.constant,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[CollarRow], mut w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
    write_csv_comment(&mut w, prov)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["width", "T", "C"])?;
    for r in rows {
        wr.write_record(&[format!("{:e}", r.width), format!("{:e}", r.horizon), format!("{:e}", r.constant)])?;
    }
    wr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helmholtz::SolverMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_mean(mut v: Vec<f64>) -> CellField {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
        CellField { values: v }
    }

    fn random_wave(g: &Grid, seed: u64) -> WaveState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..g.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..g.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        WaveState::new(g, zero_mean(a), zero_mean(b)).unwrap()
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let g = Grid::unit(4).unwrap();
        let one = CellField::from_fn(&g, |_, _| 1.0);
        assert!(WaveState::new(&g, one, CellField::zeros(&g)).is_err());
    }

    #[test]
    fn standing_wave_period_matches_discrete_dispersion() {
        let n = 16;
        let g = Grid::new(n, 2, 1.0, 0.125).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let psi = CellField::from_fn(&g, |x, _| (std::f64::consts::PI * x).cos());
        let w0 = WaveState::new(&g, psi, CellField::zeros(&g)).unwrap();
        let hx = g.hx;
        let omega = (2.0 / hx) * (std::f64::consts::PI * hx / 2.0).sin();
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt = 5e-4;
        let nsteps = (5.7 * period / dt).ceil() as usize;
        let traj = wave_simulate(&w0, &h, dt, nsteps, 1e-14, 1).unwrap();
        let probe: Vec<(f64, f64)> = traj.snapshots.iter().map(|(t, w)| (*t, w.psi.values[0])).collect();
        let mut crossings = Vec::new();
        for win in probe.windows(2) {
            let ((t0, a), (t1, b)) = (win[0], win[1]);
            if a > 0.0 && b <= 0.0 || a < 0.0 && b >= 0.0 {
                crossings.push(t0 + (t1 - t0) * a / (a - b));
            }
        }
        assert!(crossings.len() >= 11);
        let measured = (crossings[10] - crossings[0]) / 5.0;
        assert!((measured - period).abs() / period <= 1e-6, "{measured} vs {period}");
    }

    #[test]
    fn zero_data_stay_zero() {
        let g = Grid::unit(6).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let traj = wave_simulate(&WaveState::zeros(&g), &h, 0.01, 20, 1e-12, 5).unwrap();
        assert!(traj.energies.iter().all(|&e| e == 0.0));
        assert!(traj.snapshots.iter().all(|(_, w)| *w == WaveState::zeros(&g)));
    }

    #[test]
    fn random_wave_energy_is_conserved() {
        let g = Grid::unit(8).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let traj = wave_simulate(&random_wave(&g, 3), &h, 0.01, 1000, 1e-14, 1000).unwrap();
        assert!(traj.max_energy_drift <= 1e-10, "{}", traj.max_energy_drift);
        assert!(traj.psi_means.iter().all(|m| m.abs() <= 1e-10));
    }

    #[test]
    fn modal_and_propagated_gramians_agree() {
        let g = Grid::new(5, 4, 1.0, 0.8).unwrap();
        let alpha = sample_profile(&DampingProfile::BoundaryCollar { level: 1.3, width: 0.3 }, &g).unwrap();
        let dt = default_quadrature_step(&g, 1.5);
        let a = gramian(&alpha, 1.5, &g, dt, &GramianSettings::default()).unwrap();
        let b = gramian(&alpha, 1.5, &g, dt, &GramianSettings { method: GramianMethod::Propagation, ..Default::default() }).unwrap();
        let diff = crate::linalg::frobenius(&(&a.matrix - &b.matrix));
        assert!(diff <= 1e-10 * crate::linalg::frobenius(&a.matrix), "{diff}");
    }

    #[test]
    fn gramian_quadratic_form_matches_observation_integral() {
        let g = Grid::unit(5).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let alpha = sample_profile(&DampingProfile::InteriorBump { level: 2.0, center: [0.5, 0.5], radius: 0.3 }, &g).unwrap();
        let dt = default_quadrature_step(&g, 1.0);
        let gm = gramian(&alpha, 1.0, &g, dt, &GramianSettings::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..gm.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wave = gm.to_wave_state(&w);
        // data norm is the Euclidean norm of the coefficients
        let data_norm = 2.0 * wave.energy(&g).unwrap();
        let wn: f64 = w.iter().map(|v| v * v).sum();
        assert!((data_norm - wn).abs() <= 1e-12 * wn);
        let traj = wave_simulate(&wave, &h, dt, gm.steps, 1e-14, 1).unwrap();
        let mut obs = 0.0;
        for (n, (_, s)) in traj.snapshots.iter().enumerate() {
            let gp = grad(&s.psi, &g).unwrap();
            let q: f64 = gp.iter().zip(alpha.faces.iter()).map(|(u, a)| a * u * u).sum::<f64>() * g.cell_area();
            obs += trapezoid_weight(n, gm.steps, dt) * q;
        }
        let gw = crate::linalg::mat_vec(&gm.matrix, &w);
        let form: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((form - obs).abs() <= 1e-10 * obs, "{form} vs {obs}");
    }

    #[test]
    fn zero_damping_gives_zero_constant() {
        let g = Grid::unit(6).unwrap();
        let alpha = sample_profile(&DampingProfile::Zero, &g).unwrap();
        let rep = gramian_constant(&alpha, 2.0, &g, default_quadrature_step(&g, 2.0)).unwrap();
        assert_eq!(rep.constant, 0.0);
        assert_eq!(rep.gramian_norm, 0.0);
    }

    #[test]
    fn uniform_damping_observes_everything() {
        let g = Grid::unit(8).unwrap();
        let alpha = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
        let rep = gramian_constant(&alpha, 2.0, &g, default_quadrature_step(&g, 2.0)).unwrap();
        assert!(rep.constant > 0.1, "{}", rep.constant);
    }

    #[test]
    fn quadrature_guards() {
        let g = Grid::unit(8).unwrap();
        let alpha = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
        assert!(matches!(gramian_constant(&alpha, 2.0, &g, 0.5), Err(Error::QuadratureTooCoarse { .. })));
        assert!(matches!(gramian_constant(&alpha, 2.0, &g, 0.003), Err(Error::InvalidArgument(_))));
        let dt = default_quadrature_step(&g, 1.0);
        assert!(matches!(gramian(&alpha, 1.0, &g, dt, &GramianSettings { cap: 10, ..Default::default() }), Err(Error::DenseCapExceeded { .. })));
    }

    #[test]
    fn gramian_invariants() {
        let g = Grid::unit(8).unwrap();
        let dt = default_quadrature_step(&g, 1.0);
        let a1 = sample_profile(&DampingProfile::BoundaryCollar { level: 1.0, width: 0.25 }, &g).unwrap();
        let a2 = sample_profile(&DampingProfile::InteriorBump { level: 0.7, center: [0.4, 0.6], radius: 0.25 }, &g).unwrap();
        let sum = DampingField {
            profile: DampingProfile::Zero,
            faces: a1.faces.add(&a2.faces),
            cells: CellField { values: a1.cells.values.iter().zip(&a2.cells.values).map(|(a, b)| a + b).collect() },
        };
        let g1 = gramian(&a1, 1.0, &g, dt, &GramianSettings::default()).unwrap();
        let g2 = gramian(&a2, 1.0, &g, dt, &GramianSettings::default()).unwrap();
        let gs = gramian(&sum, 1.0, &g, dt, &GramianSettings::default()).unwrap();
        let diff = crate::linalg::frobenius(&(&gs.matrix - &(&g1.matrix + &g2.matrix)));
        assert!(diff <= 1e-12 * crate::linalg::frobenius(&gs.matrix));
        let r = report(&gs, &DampingProfile::Zero, GramianMethod::Modal).unwrap();
        assert!(r.symmetry_error <= 1e-10 * r.gramian_norm);
        assert!(r.min_eigenvalue >= -1e-10 * r.gramian_norm);
        // horizons 1 <= 2 on the same step
        let long = gramian(&a1, 2.0, &g, dt, &GramianSettings::default()).unwrap();
        let c1 = report(&g1, &a1.profile, GramianMethod::Modal).unwrap().constant;
        let c2 = report(&long, &a1.profile, GramianMethod::Modal).unwrap().constant;
        assert!(c1 <= c2 + 1e-10);
    }

    #[test]
    fn full_collar_matches_constant_and_scales_linearly() {
        let g = Grid::unit(8).unwrap();
        let dt = default_quadrature_step(&g, 3.0);
        let rows = collar_sweep(&[1.0], 0.8, 3.0, &g, dt, &GramianSettings::default()).unwrap();
        let c = sample_profile(&DampingProfile::Constant { level: 0.8 }, &g).unwrap();
        let direct = gramian_constant(&c, 3.0, &g, dt).unwrap().constant;
        assert!((rows[0].constant - direct).abs() <= 1e-10 * direct);
        let doubled = collar_sweep(&[0.3], 1.6, 3.0, &g, dt, &GramianSettings::default()).unwrap();
        let single = collar_sweep(&[0.3], 0.8, 3.0, &g, dt, &GramianSettings::default()).unwrap();
        assert!((doubled[0].constant - 2.0 * single[0].constant).abs() <= 1e-10 * doubled[0].constant);
    }
}
