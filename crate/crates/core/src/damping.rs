//! Damping coefficients and the two damping laws.
//!
//! Transition bands use the C² quintic blend `s(t) = t³(10 − 15t + 6t²)`;
//! the plateau where the coefficient equals its level takes the inner
//! half of every band (blend fraction 0.5).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, FaceField, Grid, State};
use crate::helmholtz::HelmholtzSolver;

/// Fraction of a collar or bump radius used for the smooth transition.
pub const BLEND_FRACTION: f64 = 0.5;

/// Which damping operator acts on the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DampingLaw {
    /// Conservative system, no damping.
    None,
    /// Friction `alpha u`.
    #[default]
    Brinkman,
    /// `P(alpha P u)`, damping only the gradient component.
    Modified,
}

impl std::fmt::Display for DampingLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DampingLaw::None => "none",
            DampingLaw::Brinkman => "brinkman",
            DampingLaw::Modified => "modified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingProfile {
    Zero,
    Constant {
        level: f64,
    },
    /// Band of total width `width * min(lx, ly)` along the whole boundary.
    BoundaryCollar {
        level: f64,
        width: f64,
    },
    /// Disc of radius `radius` around `center`, full level on the inner half.
    InteriorBump {
        level: f64,
        center: [f64; 2],
        radius: f64,
    },
    /// Equals `level` outside the disc and decays smoothly to exactly zero at `center`.
    VanishingSmooth {
        level: f64,
        center: [f64; 2],
        radius: f64,
    },
}

impl DampingProfile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DampingProfile::Zero => "zero",
            DampingProfile::Constant { .. } => "constant",
            DampingProfile::BoundaryCollar { .. } => "boundary_collar",
            DampingProfile::InteriorBump { .. } => "interior_bump",
            DampingProfile::VanishingSmooth { .. } => "vanishing_smooth",
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            DampingProfile::Zero => 0.0,
            DampingProfile::Constant { level }
            | DampingProfile::BoundaryCollar { level, .. }
            | DampingProfile::InteriorBump { level, .. }
            | DampingProfile::VanishingSmooth { level, .. } => level,
        }
    }

    /// Same geometry with a different level.
    pub fn with_level(&self, level: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            DampingProfile::Zero => {}
            DampingProfile::Constant { level: l }
            | DampingProfile::BoundaryCollar { level: l, .. }
            | DampingProfile::InteriorBump { level: l, .. }
            | DampingProfile::VanishingSmooth { level: l, .. } => *l = level,
        }
        p
    }

    pub fn validate(&self, g: &Grid) -> Result<()> {
        let level = self.level();
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::InvalidProfile(format!("level must be finite and >= 0, got {level}")));
        }
        match *self {
            DampingProfile::Zero | DampingProfile::Constant { .. } => Ok(()),
            DampingProfile::BoundaryCollar { width, .. } => {
                if !(width > 0.0 && width <= 1.0) {
                    return Err(Error::InvalidProfile(format!(
                        "collar width must lie in (0, 1] as a fraction of min(lx, ly), got {width}"
                    )));
                }
                Ok(())
            }
            DampingProfile::InteriorBump { center, radius, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidProfile(format!("bump radius must be > 0, got {radius}")));
                }
                let [cx, cy] = center;
                if cx - radius <= 0.0 || cx + radius >= g.lx || cy - radius <= 0.0 || cy + radius >= g.ly {
                    return Err(Error::InvalidProfile(format!(
                        "bump at ({cx}, {cy}) with radius {radius} is not inside the domain"
                    )));
                }
                Ok(())
            }
            DampingProfile::VanishingSmooth { center, radius, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidProfile(format!("radius must be > 0, got {radius}")));
                }
                let [cx, cy] = center;
                if !(cx > 0.0 && cx < g.lx && cy > 0.0 && cy < g.ly) {
                    return Err(Error::InvalidProfile(format!("center ({cx}, {cy}) is not inside the domain")));
                }
                Ok(())
            }
        }
    }

    /// Pointwise value of the coefficient.
    pub fn eval(&self, g: &Grid, p: (f64, f64)) -> f64 {
        match *self {
            DampingProfile::Zero => 0.0,
            DampingProfile::Constant { level } => level,
            DampingProfile::BoundaryCollar { level, width } => {
                let band = width * g.lx.min(g.ly);
                let d = g.boundary_distance(p);
                level * smoothstep((band - d) / (band * BLEND_FRACTION))
            }
            DampingProfile::InteriorBump { level, center, radius } => {
                let d = ((p.0 - center[0]).powi(2) + (p.1 - center[1]).powi(2)).sqrt();
                level * smoothstep((radius - d) / (radius * BLEND_FRACTION))
            }
            DampingProfile::VanishingSmooth { level, center, radius } => {
                let d = ((p.0 - center[0]).powi(2) + (p.1 - center[1]).powi(2)).sqrt();
                level * smoothstep(d / radius)
            }
        }
    }
}

/// `t³(10 − 15t + 6t²)` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Coefficient sampled at the staggered locations.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingField {
    pub profile: DampingProfile,
    pub faces: FaceField,
    pub cells: CellField,
}

impl DampingField {
    /// Faces where the coefficient is positive.
    pub fn face_support(&self) -> FaceField<bool> {
        FaceField {
            x: self.faces.x.iter().map(|&a| a > 0.0).collect(),
            y: self.faces.y.iter().map(|&a| a > 0.0).collect(),
        }
    }

    pub fn has_support(&self) -> bool {
        self.faces.iter().any(|&a| a > 0.0)
    }

    pub fn min_face(&self) -> f64 {
        self.faces.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_face(&self) -> f64 {
        self.faces.iter().copied().fold(0.0, f64::max)
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        self.faces.check(g)?;
        self.cells.check(g)
    }
}

pub fn sample_profile(p: &DampingProfile, g: &Grid) -> Result<DampingField> {
    p.validate(g)?;
    let faces = FaceField::from_fn(g, |x, y| p.eval(g, (x, y)), |x, y| p.eval(g, (x, y)));
    let cells = CellField::from_fn(g, |x, y| p.eval(g, (x, y)));
    Ok(DampingField {
        profile: p.clone(),
        faces,
        cells,
    })
}

/// `BB* Z = (alpha u, 0)`.
pub fn apply_brinkman(alpha: &DampingField, z: &State, g: &Grid) -> Result<State> {
    alpha.check(g)?;
    z.check(g)?;
    let u = FaceField {
        x: alpha.faces.x.iter().zip(&z.u.x).map(|(a, u)| a * u).collect(),
        y: alpha.faces.y.iter().zip(&z.u.y).map(|(a, u)| a * u).collect(),
    };
    Ok(State {
        u,
        r: CellField::zeros(g),
    })
}

/// `(P(alpha P u), 0)` with `P` the projector onto discrete gradients.
pub fn apply_modified(alpha: &DampingField, z: &State, h: &HelmholtzSolver) -> Result<State> {
    let g = h.grid();
    alpha.check(g)?;
    z.check(g)?;
    let (pu, _) = h.project(&z.u)?;
    let weighted = FaceField {
        x: alpha.faces.x.iter().zip(&pu.x).map(|(a, u)| a * u).collect(),
        y: alpha.faces.y.iter().zip(&pu.y).map(|(a, u)| a * u).collect(),
    };
    let (u, _) = h.project(&weighted)?;
    Ok(State {
        u,
        r: CellField::zeros(g),
    })
}

/// Applies the damping operator for `law`.
pub fn apply_damping(law: DampingLaw, alpha: &DampingField, z: &State, h: &HelmholtzSolver) -> Result<State> {
    match law {
        DampingLaw::None => {
            z.check(h.grid())?;
            Ok(State::zeros(h.grid()))
        }
        DampingLaw::Brinkman => apply_brinkman(alpha, z, h.grid()),
        DampingLaw::Modified => apply_modified(alpha, z, h),
    }
}

/// `<D Z, Z>` evaluated as `||sqrt(alpha) u||²` or `||sqrt(alpha) P u||²`.
pub fn dissipation_rate(law: DampingLaw, alpha: &DampingField, z: &State, h: &HelmholtzSolver) -> Result<f64> {
    let g = h.grid();
    let weighted = |u: &FaceField| -> f64 {
        alpha.faces.iter().zip(u.iter()).map(|(a, v)| a * v * v).sum::<f64>() * g.cell_area()
    };
    match law {
        DampingLaw::None => Ok(0.0),
        DampingLaw::Brinkman => Ok(weighted(&z.u)),
        DampingLaw::Modified => {
            let (pu, _) = h.project(&z.u)?;
            Ok(weighted(&pu))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{curl, grad, inner, NodeField};
    use crate::helmholtz::SolverMode;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(g: &Grid, rng: &mut ChaCha8Rng) -> State {
        State {
            u: FaceField {
                x: (0..g.n_xfaces()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                y: (0..g.n_yfaces()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            },
            r: CellField {
                values: (0..g.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            },
        }
    }

    #[test]
    fn constant_and_zero_profiles() {
        let g = Grid::unit(6).unwrap();
        let a = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
        assert!(a.faces.iter().all(|&v| v == 1.0));
        assert!(a.cells.values.iter().all(|&v| v == 1.0));
        let z = sample_profile(&DampingProfile::Zero, &g).unwrap();
        assert!(z.faces.iter().all(|&v| v == 0.0));
        assert!(!z.has_support());
    }

    #[test]
    fn collar_matches_closed_form_blend() {
        let g = Grid::unit(32).unwrap();
        let a = sample_profile(&DampingProfile::BoundaryCollar { level: 1.0, width: 0.25 }, &g).unwrap();
        // independent evaluation of the blend at each x-face
        for k in 0..g.n_xfaces() {
            let (i, j) = g.xface_coords(k);
            let (x, y) = g.xface_position(i, j);
            let d = x.min(1.0 - x).min(y).min(1.0 - y);
            let t = ((0.25 - d) / 0.125).clamp(0.0, 1.0);
            let want = 10.0 * t.powi(3) - 15.0 * t.powi(4) + 6.0 * t.powi(5);
            assert!((a.faces.x[k] - want).abs() < 1e-14);
            if d <= 0.125 {
                assert_eq!(a.faces.x[k], 1.0);
            }
        }
        assert!(a.faces.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // face nearest the center
        assert_eq!(a.faces.x[g.xface_index(16, 15)], 0.0);
    }

    #[test]
    fn full_width_collar_is_constant() {
        let g = Grid::new(9, 7, 1.0, 1.3).unwrap();
        let a = sample_profile(&DampingProfile::BoundaryCollar { level: 0.7, width: 1.0 }, &g).unwrap();
        assert!(a.faces.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn vanishing_profile_reaches_zero() {
        let g = Grid::unit(16).unwrap();
        let p = DampingProfile::VanishingSmooth {
            level: 1.0,
            center: [0.5, 0.5],
            radius: 0.3,
        };
        assert_eq!(p.eval(&g, (0.5, 0.5)), 0.0);
        assert!(p.eval(&g, (0.5, 0.5001)) < 1e-9);
        let a = sample_profile(&p, &g).unwrap();
        assert!(a.min_face() < 0.01);
        assert!(a.faces.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let g = Grid::unit(8).unwrap();
        let bad = [
            DampingProfile::InteriorBump { level: 1.0, center: [0.5, 0.5], radius: 0.0 },
            DampingProfile::InteriorBump { level: 1.0, center: [0.1, 0.5], radius: 0.2 },
            DampingProfile::BoundaryCollar { level: 1.0, width: 0.0 },
            DampingProfile::BoundaryCollar { level: 1.0, width: 1.5 },
            DampingProfile::Constant { level: -1.0 },
        ];
        for p in bad {
            assert!(matches!(sample_profile(&p, &g), Err(Error::InvalidProfile(_))), "{p:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = Grid::new(13, 11, 1.0, 1.0).unwrap();
        let p = DampingProfile::InteriorBump { level: 2.0, center: [0.4, 0.6], radius: 0.25 };
        let a = sample_profile(&p, &g).unwrap();
        let b = sample_profile(&p, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brinkman_basic_cases() {
        let g = Grid::new(5, 4, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_state(&g, &mut rng);
        let zero = sample_profile(&DampingProfile::Zero, &g).unwrap();
        assert_eq!(apply_brinkman(&zero, &z, &g).unwrap(), State::zeros(&g));
        let one = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
        let out = apply_brinkman(&one, &z, &g).unwrap();
        assert_eq!(out.u, z.u);
        assert!(out.r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brinkman_form_matches_loop_oracle() {
        let g = Grid::unit(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_state(&g, &mut rng);
        let alpha = sample_profile(&DampingProfile::BoundaryCollar { level: 1.5, width: 0.3 }, &g).unwrap();
        let dz = apply_brinkman(&alpha, &z, &g).unwrap();
        let form = inner(&dz, &z, &g).unwrap();
        let mut oracle = 0.0;
        for j in 0..g.ny {
            for i in 1..g.nx {
                let k = g.xface_index(i, j);
                let (x, y) = g.xface_position(i, j);
                oracle += alpha.profile.eval(&g, (x, y)) * z.u.x[k] * z.u.x[k] * g.hx * g.hy;
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let k = g.yface_index(i, j);
                let (x, y) = g.yface_position(i, j);
                oracle += alpha.profile.eval(&g, (x, y)) * z.u.y[k] * z.u.y[k] * g.hx * g.hy;
            }
        }
        assert!(form >= 0.0);
        assert!((form - oracle).abs() <= 1e-13 * oracle.max(1.0));
    }

    #[test]
    fn modified_fixes_gradients_with_unit_alpha() {
        let g = Grid::new(8, 6, 1.0, 1.0).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let phi = CellField::from_fn(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos() - 0.1 * x * y);
        let z = State {
            u: grad(&phi, &g).unwrap(),
            r: CellField::zeros(&g),
        };
        let one = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
        let out = apply_modified(&one, &z, &h).unwrap();
        let err = out.u.sub(&z.u).norm_sq(&g).sqrt();
        assert!(err <= 1e-12 * z.u.norm_sq(&g).sqrt());
    }

    #[test]
    fn modified_annihilates_solenoidal_fields() {
        let g = Grid::unit(10).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = NodeField {
            values: (0..g.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let z = State {
            u: curl(&psi, &g).unwrap(),
            r: CellField::zeros(&g),
        };
        let alpha = sample_profile(&DampingProfile::BoundaryCollar { level: 1.0, width: 0.3 }, &g).unwrap();
        let out = apply_modified(&alpha, &z, &h).unwrap();
        let n = inner(&out, &out, &g).unwrap().sqrt();
        assert!(n <= 1e-12 * inner(&z, &z, &g).unwrap().sqrt());
    }

    #[test]
    fn modified_form_equals_weighted_projection_norm() {
        let g = Grid::new(9, 7, 1.0, 1.0).unwrap();
        let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let z = random_state(&g, &mut rng);
            let alpha = DampingField {
                profile: DampingProfile::Zero,
                faces: FaceField {
                    x: (0..g.n_xfaces()).map(|_| rng.random_range(0.0..2.0)).collect(),
                    y: (0..g.n_yfaces()).map(|_| rng.random_range(0.0..2.0)).collect(),
                },
                cells: CellField::zeros(&g),
            };
            let lhs = inner(&apply_modified(&alpha, &z, &h).unwrap(), &z, &g).unwrap();
            let (pu, _) = h.project(&z.u).unwrap();
            let rhs: f64 = alpha.faces.iter().zip(pu.iter()).map(|(a, v)| a * v * v).sum::<f64>() * g.cell_area();
            assert!(lhs >= -1e-14);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn damping_operators_are_symmetric_and_nonnegative(seed in any::<u64>(), law_modified in any::<bool>()) {
            let g = Grid::new(7, 6, 1.0, 1.0).unwrap();
            let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha = sample_profile(&DampingProfile::InteriorBump { level: 1.3, center: [0.45, 0.55], radius: 0.3 }, &g).unwrap();
            let law = if law_modified { DampingLaw::Modified } else { DampingLaw::Brinkman };
            let z = random_state(&g, &mut rng);
            let w = random_state(&g, &mut rng);
            let dz = apply_damping(law, &alpha, &z, &h).unwrap();
            let dw = apply_damping(law, &alpha, &w, &h).unwrap();
            let zz = inner(&dz, &z, &g).unwrap();
            prop_assert!(zz >= -1e-12 * inner(&z, &z, &g).unwrap());
            let a = inner(&dz, &w, &g).unwrap();
            let b = inner(&z, &dw, &g).unwrap();
            let scale = (inner(&z, &z, &g).unwrap() * inner(&w, &w, &g).unwrap()).sqrt();
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }

        #[test]
        fn brinkman_is_monotone_in_alpha(seed in any::<u64>()) {
            let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = random_state(&g, &mut rng);
            let a1: Vec<f64> = (0..g.n_faces()).map(|_| rng.random_range(0.0..1.0)).collect();
            let a2: Vec<f64> = a1.iter().map(|a| a + rng.random_range(0.0..1.0)).collect();
            let field = |a: &[f64]| DampingField {
                profile: DampingProfile::Zero,
                faces: FaceField { x: a[..g.n_xfaces()].to_vec(), y: a[g.n_xfaces()..].to_vec() },
                cells: CellField::zeros(&g),
            };
            let d1 = inner(&apply_brinkman(&field(&a1), &z, &g).unwrap(), &z, &g).unwrap();
            let d2 = inner(&apply_brinkman(&field(&a2), &z, &g).unwrap(), &z, &g).unwrap();
            prop_assert!(d1 <= d2 + 1e-15);
        }
    }
}
