//! Dense analysis of the discrete generator: spectrum, kernel, restriction
//! to the kernel complement and resolvent norms along the imaginary axis.
//!
//! Every face and cell carries the same quadrature weight, so the weighted
//! inner product is a multiple of the Euclidean one. Adjoints are plain
//! transposes and singular values need no reweighting.

use std::io::Write;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat, Side};
use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::damping::{DampingField, DampingLaw, DampingProfile};
use crate::error::{Error, Result};
use crate::provenance::{write_csv_comment, Provenance};
use crate::grid::{inner, Grid, State};
use crate::helmholtz::HelmholtzSolver;
use crate::linalg::mat_from_columns;
use crate::semigroup::apply_generator;

/// Largest state dimension assembled densely by default.
pub const DEFAULT_DENSE_CAP: usize = 6_000;
/// Relative threshold separating the kernel from the rest of the spectrum.
pub const KERNEL_REL_TOL: f64 = 1e-8;
/// Eigenvalues with `|Re| <= this` and `|Im| >= IMAG_AXIS_MIN_IM` sit on the imaginary axis.
pub const IMAG_AXIS_RE_TOL: f64 = 1e-10;
pub const IMAG_AXIS_MIN_IM: f64 = 1e-6;

/// Dense matrix of `A_d` in the flattened `[u_x, u_y, r]` ordering.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub matrix: Mat<f64>,
    pub grid: Grid,
    pub law: DampingLaw,
    pub profile: DampingProfile,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        crate::linalg::mat_vec(&self.matrix, v)
    }
}

pub fn assemble(g: &Grid, alpha: &DampingField, law: DampingLaw, h: &HelmholtzSolver, cap: usize) -> Result<GeneratorMatrix> {
    let n = g.state_dim();
    if n > cap {
        return Err(Error::DenseCapExceeded { dim: n, cap });
    }
    let mut e = vec![0.0; n];
    let matrix = mat_from_columns(n, n, |j| {
        e[j] = 1.0;
        let col = apply_generator(&State::from_slice(g, &e)?, alpha, law, h)?.to_vec();
        e[j] = 0.0;
        Ok(col)
    })?;
    Ok(GeneratorMatrix {
        matrix,
        grid: *g,
        law,
        profile: alpha.profile.clone(),
    })
}

/// Orthonormal basis of the generator kernel.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    /// Orthonormal in the weighted inner product.
    pub vectors: Vec<State>,
    /// Euclidean-orthonormal basis of the kernel complement (columns).
    pub complement: Mat<f64>,
    pub threshold: f64,
    /// Smallest singular value above the threshold over the largest below it.
    pub gap: f64,
    pub largest_singular_value: f64,
    pub warning: Option<String>,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }
}

/// Right singular vectors with `sigma <= KERNEL_REL_TOL * sigma_max`.
pub fn kernel_basis(m: &GeneratorMatrix) -> Result<KernelBasis> {
    let n = m.dim();
    let g = &m.grid;
    let svd = m.matrix.svd().map_err(|e| Error::LinearAlgebra(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let smax = s[0];
    let threshold = KERNEL_REL_TOL * smax;
    let rank = (0..n).filter(|&i| s[i] > threshold).count();
    let v = svd.V();
    let w = g.cell_area().sqrt();
    let vectors = (rank..n)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| v[(i, j)] / w).collect();
            State::from_slice(g, &col)
        })
        .collect::<Result<Vec<_>>>()?;
    let complement = Mat::<f64>::from_fn(n, rank, |i, j| v[(i, j)]);
    let above = if rank > 0 { s[rank - 1] } else { f64::INFINITY };
    let below = if rank < n { s[rank] } else { 0.0 };
    let gap = if below > 0.0 { above / below } else { f64::INFINITY };
    let warning = if rank > 0 && above < 10.0 * threshold {
        Some(format!(
            "ill-separated kernel: smallest retained singular value {above:.3e} is within 10x of threshold {threshold:.3e}"
        ))
    } else if rank < n && below > 0.1 * threshold {
        Some(format!(
            "ill-separated kernel: largest kernel singular value {below:.3e} is within 10x of threshold {threshold:.3e}"
        ))
    } else {
        None
    };
    if let Some(w) = &warning {
        warn!("{w}");
    }
    Ok(KernelBasis {
        vectors,
        complement,
        threshold,
        gap,
        largest_singular_value: smax,
        warning,
    })
}

/// `Z - sum <Z, k_i> k_i`.
pub fn project_h0(z: &State, basis: &KernelBasis, g: &Grid) -> Result<State> {
    let mut out = z.clone();
    for k in &basis.vectors {
        let c = inner(z, k, g)?;
        out.axpy(-c, k);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub nx: usize,
    pub ny: usize,
    pub law: DampingLaw,
    pub damping: DampingProfile,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub max_modulus: f64,
    /// Number of eigenvalues with `|lambda| <= KERNEL_REL_TOL * max |lambda|`.
    pub kernel_dim_eigen: usize,
    /// Dimension of the singular-value kernel (the basis actually used).
    pub kernel_dim: usize,
    pub kernel_gap: f64,
    /// Max real part over eigenvalues outside the kernel.
    pub spectral_abscissa: Option<f64>,
    /// Eigenvalues with `|Re| <= 1e-10` and `|Im| >= 1e-6`.
    pub imaginary_axis_eigenvalues: Vec<[f64; 2]>,
    /// True when the damping has nonempty support under a damped law.
    pub clearance_required: bool,
    pub clearance_ok: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub kernel: Option<KernelBasis>,
}

/// Full spectrum and kernel of a dense generator.
pub fn eigen(m: &GeneratorMatrix, alpha: &DampingField) -> Result<SpectralReport> {
    let ev = m
        .matrix
        .eigenvalues()
        .map_err(|e| Error::LinearAlgebra(format!("eigensolver failed: {e:?}")))?;
    let mut eigenvalues: Vec<[f64; 2]> = ev.iter().map(|z| [z.re, z.im]).collect();
    eigenvalues.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
    let max_modulus = eigenvalues.iter().map(|z| z[0].hypot(z[1])).fold(0.0, f64::max);
    let cut = KERNEL_REL_TOL * max_modulus;
    let kernel_dim_eigen = eigenvalues.iter().filter(|z| z[0].hypot(z[1]) <= cut).count();
    let spectral_abscissa = eigenvalues
        .iter()
        .filter(|z| z[0].hypot(z[1]) > cut)
        .map(|z| z[0])
        .reduce(f64::max);
    let imaginary_axis_eigenvalues: Vec<[f64; 2]> = eigenvalues
        .iter()
        .filter(|z| z[0].abs() <= IMAG_AXIS_RE_TOL && z[1].abs() >= IMAG_AXIS_MIN_IM)
        .copied()
        .collect();
    let clearance_required = m.law != DampingLaw::None && alpha.has_support();
    let kernel = kernel_basis(m)?;
    let mut warnings = Vec::new();
    if let Some(w) = &kernel.warning {
        warnings.push(w.clone());
    }
    if kernel.dim() != kernel_dim_eigen {
        warnings.push(format!(
            "kernel dimension from eigenvalues ({kernel_dim_eigen}) differs from singular values ({})",
            kernel.dim()
        ));
    }
    Ok(SpectralReport {
        nx: m.grid.nx,
        ny: m.grid.ny,
        law: m.law,
        damping: m.profile.clone(),
        max_modulus,
        kernel_dim_eigen,
        kernel_dim: kernel.dim(),
        kernel_gap: kernel.gap,
        spectral_abscissa,
        clearance_ok: !clearance_required || imaginary_axis_eigenvalues.is_empty(),
        imaginary_axis_eigenvalues,
        clearance_required,
        eigenvalues,
        warnings,
        kernel: Some(kernel),
    })
}

impl SpectralReport {
    pub fn write_json<W: Write>(&self, w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
        crate::provenance::write_json(self, w, prov)
    }
}

/// `A_d` restricted to the kernel complement, `Q^T M Q`.
#[derive(Debug, Clone)]
pub struct ReducedGenerator {
    pub matrix: Mat<f64>,
    pub grid: Grid,
}

impl ReducedGenerator {
    pub fn new(m: &GeneratorMatrix, basis: &KernelBasis) -> Self {
        let q = basis.complement.as_ref();
        let mq = &m.matrix * q;
        let matrix = q.transpose() * mq;
        Self { matrix, grid: m.grid }
    }

    /// Without deflation (the kernel stays in).
    pub fn full(m: &GeneratorMatrix) -> Self {
        Self {
            matrix: m.matrix.clone(),
            grid: m.grid,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn shifted(&self, beta: f64) -> Mat<c64> {
        let n = self.dim();
        Mat::<c64>::from_fn(n, n, |i, j| {
            let d = if i == j { beta } else { 0.0 };
            c64::new(-self.matrix[(i, j)], d)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMethod {
    /// LU factorization plus Lanczos on `(A^H A)^{-1}`.
    Lanczos,
    /// Full singular value decomposition.
    FullSvd,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolventSample {
    pub beta: f64,
    pub sigma_min: f64,
    pub resolvent_norm: f64,
    pub method: ResolventMethod,
    /// True when the iterative path stagnated and the full decomposition was used.
    pub fallback: bool,
}

const LANCZOS_MAX_STEPS: usize = 80;

/// `sigma_min(i beta I - M)` on the reduced space, `1 / sigma_min` as norm.
pub fn resolvent_norm(m: &ReducedGenerator, beta: f64) -> Result<ResolventSample> {
    let a = m.shifted(beta);
    match lanczos_sigma_min(&a) {
        Some(s) => Ok(sample(beta, s, ResolventMethod::Lanczos, false)),
        None => {
            let s = full_sigma_min(&a)?;
            Ok(sample(beta, s, ResolventMethod::FullSvd, true))
        }
    }
}

/// Same quantity from the full singular value decomposition.
pub fn resolvent_norm_full(m: &ReducedGenerator, beta: f64) -> Result<ResolventSample> {
    let s = full_sigma_min(&m.shifted(beta))?;
    Ok(sample(beta, s, ResolventMethod::FullSvd, false))
}

fn sample(beta: f64, sigma_min: f64, method: ResolventMethod, fallback: bool) -> ResolventSample {
    ResolventSample {
        beta,
        sigma_min,
        resolvent_norm: if sigma_min > 0.0 { 1.0 / sigma_min } else { f64::INFINITY },
        method,
        fallback,
    }
}

fn full_sigma_min(a: &Mat<c64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::LinearAlgebra(format!("svd failed: {e:?}")))?;
    Ok(*s.last().unwrap_or(&0.0))
}

/// Largest eigenvalue of `A^{-1} A^{-H}` by Lanczos with full
/// reorthogonalization; returns `None` on stagnation or breakdown of the LU.
fn lanczos_sigma_min(a: &Mat<c64>) -> Option<f64> {
    let n = a.nrows();
    if n == 0 {
        return None;
    }
    let lu: PartialPivLu<c64> = a.partial_piv_lu();
    let apply = |x: &Mat<c64>| -> Mat<c64> {
        let y = lu.solve_adjoint(x);
        lu.solve(&y)
    };
    let norm = |x: &Mat<c64>| -> f64 { (0..n).map(|i| x[(i, 0)].norm_sqr()).sum::<f64>().sqrt() };
    let dot = |x: &Mat<c64>, y: &Mat<c64>| -> c64 { (0..n).map(|i| x[(i, 0)].conj() * y[(i, 0)]).sum() };

    let mut q = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(1.0 + 0.5 * ((i as f64) * 0.7548776662).sin(), 0.3 * ((i as f64) * 0.5698402910).cos()));
    let qn = norm(&q);
    q.col_mut(0).iter_mut().for_each(|v| *v /= qn);
    let mut basis: Vec<Mat<c64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta_prev = 0.0;
    let steps = LANCZOS_MAX_STEPS.min(n);
    for k in 0..steps {
        let mut w = apply(&basis[k]);
        if !(0..n).all(|i| w[(i, 0)].re.is_finite() && w[(i, 0)].im.is_finite()) {
            return None;
        }
        let ak = dot(&basis[k], &w).re;
        alphas.push(ak);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for i in 0..n {
                    w[(i, 0)] -= c * b[(i, 0)];
                }
            }
        }
        let bk = norm(&w);
        let t = tridiagonal(&alphas, &betas);
        let eig = t.self_adjoint_eigen(Side::Lower).ok()?;
        let m = alphas.len();
        let theta = eig.S().column_vector()[m - 1].re;
        let last = eig.U()[(m - 1, m - 1)].norm();
        let resid = bk * last;
        let converged = k + 1 == n
            || bk <= 1e-14 * theta
            || (resid <= 1e-9 * theta && (theta - theta_prev).abs() <= 1e-13 * theta);
        if converged {
            if theta > 0.0 && theta.is_finite() {
                return Some(1.0 / theta.sqrt());
            }
            return None;
        }
        theta_prev = theta;
        w.col_mut(0).iter_mut().for_each(|v| *v /= bk);
        betas.push(bk);
        basis.push(w);
    }
    None
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> Mat<c64> {
    let m = alphas.len();
    Mat::<c64>::from_fn(m, m, |i, j| {
        if i == j {
            c64::new(alphas[i], 0.0)
        } else if i == j + 1 {
            c64::new(betas[j], 0.0)
        } else if j == i + 1 {
            c64::new(betas[i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Resolvent norms at every `beta`, evaluated in parallel.
pub fn sweep(m: &ReducedGenerator, betas: &[f64]) -> Result<Vec<ResolventSample>> {
    betas.par_iter().map(|&b| resolvent_norm(m, b)).collect()
}

/// Upper end of the band where the grid resolves the continuum dispersion.
pub fn resolved_band(g: &Grid) -> f64 {
    std::f64::consts::PI / (4.0 * g.hmax())
}

pub fn write_sweep_csv<W: Write>(samples: &[ResolventSample], mut w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
    write_csv_comment(&mut w, prov)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["beta", "sigma_min", "resolvent_norm"])?;
    for s in samples {
        wr.write_record(&[format!("{:e}", s.beta), format!("{:e}", s.sigma_min), format!("{:e}", s.resolvent_norm)])?;
    }
    wr.flush()
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventFit {
    pub exponent: f64,
    pub log_intercept: f64,
    /// RMS of the log residuals over the fitted points.
    pub residual: f64,
    pub window: [f64; 2],
    pub points: usize,
    /// True when local maxima were fitted, false when too few existed and all samples were used.
    pub envelope: bool,
}

/// Least-squares slope of `log(norm)` against `log(beta)` over the local
/// maxima of the sweep inside `window`.
pub fn fit_resolvent_exponent(samples: &[ResolventSample], window: [f64; 2], band_limit: f64) -> Result<ResolventFit> {
    let [lo, hi] = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Fit(format!("invalid window [{lo}, {hi}]")));
    }
    if hi > band_limit * (1.0 + 1e-12) {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] leaves the resolved band beta <= {band_limit:.4}"
        )));
    }
    let mut pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.beta >= lo && s.beta <= hi)
        .map(|s| (s.beta, s.resolvent_norm))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Fit(format!("need at least 8 samples in window, got {}", pts.len())));
    }
    if pts.iter().any(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Fit("non-finite resolvent norm in window".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let peaks: Vec<(f64, f64)> = (1..pts.len() - 1)
        .filter(|&i| pts[i].1 >= pts[i - 1].1 && pts[i].1 >= pts[i + 1].1)
        .map(|i| pts[i])
        .collect();
    let (used, envelope) = if peaks.len() >= 2 { (peaks, true) } else { (pts, false) };
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let line = crate::decay::least_squares(&xs, &ys);
    let rms = (line.ss_res / xs.len() as f64).sqrt();
    Ok(ResolventFit {
        exponent: line.slope,
        log_intercept: line.intercept,
        residual: rms,
        window,
        points: xs.len(),
        envelope,
    })
}
