//! Seeded initial data and the projection onto the kernel complement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::damping::{DampingField, DampingLaw};
use crate::error::{Error, Result};
use crate::grid::{curl, grad, CellField, FaceField, Grid, NodeField, State};
use crate::helmholtz::HelmholtzSolver;
use crate::spectral::{assemble, eigen, project_h0, DEFAULT_DENSE_CAP};

fn yes() -> bool {
    true
}

fn default_max_mode() -> usize {
    6
}

fn default_smoothness() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Uniform random values on every unknown.
    Random {
        #[serde(default = "yes")]
        project_h0: bool,
    },
    /// Continuum cosine/sine modes up to `max_mode` sampled on the grid,
    /// amplitudes decaying like `(1 + k² + l²)^(-smoothness/2)`. The same
    /// seed gives the same continuum field on every grid.
    Smooth {
        #[serde(default = "default_max_mode")]
        max_mode: usize,
        #[serde(default = "default_smoothness")]
        smoothness: f64,
        #[serde(default = "yes")]
        project_h0: bool,
    },
    /// Random divergence-free velocity vanishing on the damped faces, zero pressure.
    SolenoidalOffSupport,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Random { project_h0: true }
    }
}

impl InitialData {
    pub fn projects(&self) -> bool {
        match self {
            InitialData::Random { project_h0 } | InitialData::Smooth { project_h0, .. } => *project_h0,
            InitialData::SolenoidalOffSupport => false,
        }
    }

    pub fn generate(&self, alpha: &DampingField, law: DampingLaw, h: &HelmholtzSolver, seed: u64) -> Result<State> {
        let g = h.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = match self {
            InitialData::Random { .. } => random_state(g, &mut rng),
            InitialData::Smooth { max_mode, smoothness, .. } => smooth_state(g, *max_mode, *smoothness, &mut rng)?,
            InitialData::SolenoidalOffSupport => solenoidal_off_support(g, alpha, &mut rng)?,
        };
        if self.projects() {
            project_to_h0(&z, alpha, law, h)
        } else {
            Ok(z)
        }
    }
}

fn random_state(g: &Grid, rng: &mut ChaCha8Rng) -> State {
    let mut z = State::zeros(g);
    z.u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    z.r.values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    z
}

fn smooth_state(g: &Grid, max_mode: usize, smoothness: f64, rng: &mut ChaCha8Rng) -> Result<State> {
    use std::f64::consts::PI;
    let (lx, ly) = (g.lx, g.ly);
    let mut pressure = CellField::zeros(g);
    let mut potential = CellField::zeros(g);
    let mut stream = NodeField {
        values: vec![0.0; g.n_nodes()],
    };
    for l in 0..=max_mode {
        for k in 0..=max_mode {
            let amp = (1.0 + (k * k + l * l) as f64).powf(-0.5 * smoothness);
            let (a, b, c): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (kx, ly_) = (k as f64 * PI / lx, l as f64 * PI / ly);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (x, y) = g.cell_center(i, j);
                    let cs = (kx * x).cos() * (ly_ * y).cos();
                    pressure.values[g.cell_index(i, j)] += amp * a * cs;
                    // a potential with wavenumber w has gradient of size w
                    potential.values[g.cell_index(i, j)] += amp * b * cs / (1.0 + kx.hypot(ly_));
                }
            }
            if k > 0 && l > 0 {
                for (n, v) in stream.values.iter_mut().enumerate() {
                    let (i, j) = g.node_coords(n);
                    let (x, y) = g.node_position(i, j);
                    *v += amp * c * (kx * x).sin() * (ly_ * y).sin() / kx.hypot(ly_);
                }
            }
        }
    }
    let u = grad(&potential, g)?.add(&curl(&stream, g)?);
    Ok(State { u, r: pressure })
}

fn solenoidal_off_support(g: &Grid, alpha: &DampingField, rng: &mut ChaCha8Rng) -> Result<State> {
    let mut stream = NodeField {
        values: vec![0.0; g.n_nodes()],
    };
    for (n, v) in stream.values.iter_mut().enumerate() {
        let (i, j) = g.node_coords(n);
        let touched = [
            alpha.faces.x[g.xface_index(i, j - 1)],
            alpha.faces.x[g.xface_index(i, j)],
            alpha.faces.y[g.yface_index(i - 1, j)],
            alpha.faces.y[g.yface_index(i, j)],
        ];
        let value: f64 = rng.random_range(-1.0..1.0);
        if touched.iter().all(|&a| a == 0.0) {
            *v = value;
        }
    }
    if stream.values.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(
            "damping covers every interior node; no solenoidal field avoids its support".into(),
        ));
    }
    Ok(State {
        u: curl(&stream, g)?,
        r: CellField::zeros(g),
    })
}

/// Orthogonal projection onto the complement of the generator kernel.
///
/// For `none` and `modified` (and Brinkman damping that is zero everywhere or
/// positive on every face) the kernel is known in closed form: divergence-free
/// velocities with constant pressure, or constant pressure alone. Otherwise
/// the kernel is computed from the dense generator.
pub fn project_to_h0(z: &State, alpha: &DampingField, law: DampingLaw, h: &HelmholtzSolver) -> Result<State> {
    let g = h.grid();
    z.check(g)?;
    let mut r = z.r.clone();
    let m = r.values.iter().sum::<f64>() / r.values.len() as f64;
    r.values.iter_mut().for_each(|v| *v -= m);
    let closed_form_u = |u: &FaceField| -> Result<FaceField> { Ok(h.project(u)?.0) };
    match law {
        DampingLaw::None | DampingLaw::Modified => Ok(State {
            u: closed_form_u(&z.u)?,
            r,
        }),
        DampingLaw::Brinkman if !alpha.has_support() => Ok(State {
            u: closed_form_u(&z.u)?,
            r,
        }),
        DampingLaw::Brinkman if alpha.min_face() > 0.0 => Ok(State { u: z.u.clone(), r }),
        DampingLaw::Brinkman => {
            let mat = assemble(g, alpha, law, h, DEFAULT_DENSE_CAP)?;
            let rep = eigen(&mat, alpha)?;
            let basis = rep.kernel.as_ref().expect("eigen always attaches the kernel");
            project_h0(z, basis, g)
        }
    }
}
