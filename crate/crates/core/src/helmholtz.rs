//! Discrete Helmholtz decomposition `u = grad(phi) + h` with `div h = 0`.
//!
//! The Neumann Poisson problem `div(grad(phi)) = f` is singular with the
//! constants as kernel. Both solver modes deflate that kernel: the
//! right-hand side and iterates are kept in the zero-mean subspace, no
//! unknown is pinned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{div, grad, CellField, FaceField, Grid};
use crate::linalg::conjugate_gradient;

/// Above this state dimension `Auto` switches to the iterative mode.
pub const DIRECT_MODE_MAX_STATE_DIM: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Auto,
    /// Tensor-product cosine factorization of the Neumann Laplacian.
    DirectFactorization,
    /// Deflated conjugate gradients.
    ConjugateIteration,
}

/// 1-D Neumann eigenpairs on cell centers: `cos(k pi (i + 1/2) / n)` with
/// eigenvalue `-(2/h)^2 sin^2(k pi / (2 n))` of the second difference.
#[derive(Debug, Clone)]
pub struct NeumannModes1d {
    pub n: usize,
    /// `basis[k * n + i]`, orthonormal in the unweighted sense.
    pub basis: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl NeumannModes1d {
    pub fn new(n: usize, h: f64) -> Self {
        let mut basis = vec![0.0; n * n];
        let mut eigenvalues = vec![0.0; n];
        for k in 0..n {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for i in 0..n {
                basis[k * n + i] = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            eigenvalues[k] = (2.0 / h).powi(2) * s * s;
        }
        Self { n, basis, eigenvalues }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.basis[k * self.n + i]
    }
}

/// Cosine modes of the 2-D Neumann Laplacian on the grid.
#[derive(Debug, Clone)]
pub struct NeumannModes {
    pub x: NeumannModes1d,
    pub y: NeumannModes1d,
}

impl NeumannModes {
    pub fn new(g: &Grid) -> Self {
        Self {
            x: NeumannModes1d::new(g.nx, g.hx),
            y: NeumannModes1d::new(g.ny, g.hy),
        }
    }

    /// `mu_x[k] + mu_y[l]`, the eigenvalue of `-div grad` for mode `(k, l)`.
    pub fn eigenvalue(&self, k: usize, l: usize) -> f64 {
        self.x.eigenvalues[k] + self.y.eigenvalues[l]
    }

    /// Coefficients in the cosine basis (cells laid out `j * nx + i`).
    pub fn forward(&self, f: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &f[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let b = &self.x.basis[k * nx..(k + 1) * nx];
                tmp[j * nx + k] = row.iter().zip(b).map(|(a, b)| a * b).sum();
            }
        }
        let mut out = vec![0.0; nx * ny];
        for l in 0..ny {
            for j in 0..ny {
                let c = self.y.get(l, j);
                for k in 0..nx {
                    out[l * nx + k] += c * tmp[j * nx + k];
                }
            }
        }
        out
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut tmp = vec![0.0; nx * ny];
        for l in 0..ny {
            for j in 0..ny {
                let c = self.y.get(l, j);
                for k in 0..nx {
                    tmp[j * nx + k] += c * coeffs[l * nx + k];
                }
            }
        }
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for k in 0..nx {
                let a = tmp[j * nx + k];
                if a == 0.0 {
                    continue;
                }
                let b = &self.x.basis[k * nx..(k + 1) * nx];
                for (o, bv) in out[j * nx..(j + 1) * nx].iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// Mode `(k, l)` sampled on the cells, unit norm in the unweighted sense.
    pub fn mode(&self, k: usize, l: usize) -> Vec<f64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut v = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                v[j * nx + i] = self.x.get(k, i) * self.y.get(l, j);
            }
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: CellField,
    /// Discrete integral of the right-hand side that was projected out.
    pub removed_mass: f64,
    pub iterations: usize,
    /// `||div grad phi - f|| / ||f||` after mean removal.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    mode: SolverMode,
    tol: f64,
    max_iter: usize,
    modes: Option<NeumannModes>,
}

impl HelmholtzSolver {
    pub fn new(g: &Grid, mode: SolverMode) -> Result<Self> {
        Self::with_tolerance(g, mode, 1e-12, 10_000)
    }

    pub fn with_tolerance(g: &Grid, mode: SolverMode, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("Poisson tolerance must be > 0, got {tol}")));
        }
        let mode = match mode {
            SolverMode::Auto if g.state_dim() <= DIRECT_MODE_MAX_STATE_DIM => SolverMode::DirectFactorization,
            SolverMode::Auto => SolverMode::ConjugateIteration,
            m => m,
        };
        let modes = (mode == SolverMode::DirectFactorization).then(|| NeumannModes::new(g));
        Ok(Self {
            grid: *g,
            mode,
            tol,
            max_iter,
            modes,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> SolverMode {
        self.mode
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Solves `div(grad(phi)) = f` with zero-mean `phi`.
    pub fn neumann_poisson(&self, f: &CellField) -> Result<PoissonSolution> {
        let g = &self.grid;
        f.check(g)?;
        let n = g.n_cells() as f64;
        let mean = f.values.iter().sum::<f64>() / n;
        let removed_mass = mean * n * g.cell_area();
        let rhs: Vec<f64> = f.values.iter().map(|v| v - mean).collect();
        let fnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if fnorm == 0.0 {
            return Ok(PoissonSolution {
                phi: CellField::zeros(g),
                removed_mass,
                iterations: 0,
                residual: 0.0,
            });
        }
        let (phi, iterations) = match self.mode {
            SolverMode::DirectFactorization => {
                let modes = self.modes.as_ref().expect("direct mode carries its factorization");
                let mut c = modes.forward(&rhs);
                c[0] = 0.0;
                for l in 0..g.ny {
                    for k in 0..g.nx {
                        if k == 0 && l == 0 {
                            continue;
                        }
                        c[l * g.nx + k] /= -modes.eigenvalue(k, l);
                    }
                }
                let mut phi = modes.inverse(&c);
                remove_mean(&mut phi);
                (phi, 1)
            }
            _ => {
                let apply = |x: &[f64], y: &mut [f64]| {
                    neg_laplacian(g, x, y);
                };
                let b: Vec<f64> = rhs.iter().map(|v| -v).collect();
                let (mut phi, stats) = conjugate_gradient(apply, remove_mean, &b, None, self.tol, self.max_iter)?;
                remove_mean(&mut phi);
                (phi, stats.iterations)
            }
        };
        let mut lap = vec![0.0; phi.len()];
        neg_laplacian(g, &phi, &mut lap);
        let res = lap
            .iter()
            .zip(&rhs)
            .map(|(l, f)| (-l - f).powi(2))
            .sum::<f64>()
            .sqrt()
            / fnorm;
        Ok(PoissonSolution {
            phi: CellField { values: phi },
            removed_mass,
            iterations,
            residual: res,
        })
    }

    /// Splits `u` into its gradient part `P u` and the divergence-free rest.
    pub fn project(&self, u: &FaceField) -> Result<(FaceField, FaceField)> {
        let g = &self.grid;
        let d = div(u, g)?;
        let sol = self.neumann_poisson(&d)?;
        let gp = grad(&sol.phi, g)?;
        let rest = u.sub(&gp);
        Ok((gp, rest))
    }

    /// Zero-mean potential `phi` with `P u = grad(phi)`.
    pub fn potential(&self, u: &FaceField) -> Result<CellField> {
        let d = div(u, &self.grid)?;
        Ok(self.neumann_poisson(&d)?.phi)
    }
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// `-div(grad(x))`, symmetric positive semidefinite.
fn neg_laplacian(g: &Grid, x: &[f64], y: &mut [f64]) {
    let mut gx = vec![0.0; g.n_xfaces()];
    let mut gy = vec![0.0; g.n_yfaces()];
    g.grad_into(x, &mut gx, &mut gy);
    g.div_into(&gx, &gy, y);
    y.iter_mut().for_each(|v| *v = -*v);
}
