//! Staggered (MAC) discretization of a rectangle.
//!
//! Pressure-like scalars live at cell centers, velocity components on the
//! interior faces. Faces lying on the boundary carry no unknown, so the
//! normal velocity vanishes there by construction.
//!
//! Layout (cell `(i, j)`, `0 <= i < nx`, `0 <= j < ny`):
//! - cells:   flat index `j * nx + i`, center `((i + 1/2) hx, (j + 1/2) hy)`
//! - x-faces: `1 <= i < nx`, flat index `j * (nx - 1) + (i - 1)`, at `(i hx, (j + 1/2) hy)`
//! - y-faces: `1 <= j < ny`, flat index `(j - 1) * nx + i`, at `((i + 1/2) hx, j hy)`
//!
//! Every face carries the quadrature weight `hx * hy`, the same as a cell.
//! With that choice `div` is exactly `-grad^T`, which is what makes the
//! discrete energy identity exact.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field scalar: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn re(self) -> f64;
    fn abs_sq(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn re(self) -> f64 {
        self
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn re(self) -> f64 {
        self.re
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be >= 2, got nx={nx}, ny={ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got lx={lx}, ly={ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// Grid on the unit square.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    pub fn n_faces(&self) -> usize {
        self.n_xfaces() + self.n_yfaces()
    }

    /// Number of interior nodes, which is the dimension of the discrete
    /// solenoidal subspace.
    pub fn n_nodes(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    /// Dimension of a flattened [`State`]: faces then cells.
    pub fn state_dim(&self) -> usize {
        self.n_faces() + self.n_cells()
    }

    /// Quadrature weight of every cell and every face.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn hmax(&self) -> f64 {
        self.hx.max(self.hy)
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn xface_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i < self.nx);
        j * (self.nx - 1) + (i - 1)
    }

    #[inline]
    pub fn xface_coords(&self, k: usize) -> (usize, usize) {
        (k % (self.nx - 1) + 1, k / (self.nx - 1))
    }

    #[inline]
    pub fn yface_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j >= 1 && j < self.ny);
        (j - 1) * self.nx + i
    }

    #[inline]
    pub fn yface_coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx + 1)
    }

    /// Interior node `(i, j)`, `1 <= i < nx`, `1 <= j < ny`.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.nx - 1) + (i - 1)
    }

    #[inline]
    pub fn node_coords(&self, k: usize) -> (usize, usize) {
        (k % (self.nx - 1) + 1, k / (self.nx - 1) + 1)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn xface_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn yface_position(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, j as f64 * self.hy)
    }

    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    /// Distance from a point to the boundary of the rectangle.
    pub fn boundary_distance(&self, (x, y): (f64, f64)) -> f64 {
        x.min(self.lx - x).min(y).min(self.ly - y)
    }

    /// Raw two-point gradient into preallocated face buffers.
    pub fn grad_into<T: Scalar>(&self, r: &[T], gx: &mut [T], gy: &mut [T]) {
        let (nx, ny) = (self.nx, self.ny);
        let (ix, iy) = (1.0 / self.hx, 1.0 / self.hy);
        for j in 0..ny {
            let row = &r[j * nx..(j + 1) * nx];
            let out = &mut gx[j * (nx - 1)..(j + 1) * (nx - 1)];
            for i in 1..nx {
                out[i - 1] = (row[i] - row[i - 1]).scale(ix);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                gy[(j - 1) * nx + i] = (r[j * nx + i] - r[(j - 1) * nx + i]).scale(iy);
            }
        }
    }

    /// Raw flux-balance divergence into a preallocated cell buffer.
    pub fn div_into<T: Scalar>(&self, ux: &[T], uy: &[T], out: &mut [T]) {
        let (nx, ny) = (self.nx, self.ny);
        let (ix, iy) = (1.0 / self.hx, 1.0 / self.hy);
        for j in 0..ny {
            for i in 0..nx {
                let east = if i + 1 < nx { ux[j * (nx - 1) + i] } else { T::zero() };
                let west = if i > 0 { ux[j * (nx - 1) + i - 1] } else { T::zero() };
                let north = if j + 1 < ny { uy[j * nx + i] } else { T::zero() };
                let south = if j > 0 { uy[(j - 1) * nx + i] } else { T::zero() };
                out[j * nx + i] = (east - west).scale(ix) + (north - south).scale(iy);
            }
        }
    }
}

/// Scalar values at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<T = f64> {
    pub values: Vec<T>,
}

/// Values on interior x-faces and y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField<T = f64> {
    pub x: Vec<T>,
    pub y: Vec<T>,
}

/// Stream function on interior nodes; boundary nodes are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub values: Vec<f64>,
}

/// One snapshot `(u, r)` of the discrete acoustic system.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T = f64> {
    pub u: FaceField<T>,
    pub r: CellField<T>,
}

impl<T: Scalar> CellField<T> {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            values: vec![T::zero(); g.n_cells()],
        }
    }

    pub fn from_vec(g: &Grid, values: Vec<T>) -> Result<Self> {
        check_len("cell field", g.n_cells(), values.len())?;
        Ok(Self { values })
    }

    pub fn from_fn(g: &Grid, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let values = (0..g.n_cells())
            .map(|k| {
                let (i, j) = g.cell_coords(k);
                let (x, y) = g.cell_center(i, j);
                f(x, y)
            })
            .collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        check_len("cell field", g.n_cells(), self.values.len())
    }

    /// Discrete integral `sum(values) * cell_area`.
    pub fn integral(&self, g: &Grid) -> T {
        let mut s = T::zero();
        for &v in &self.values {
            s += v;
        }
        s.scale(g.cell_area())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v.scale(s)).collect(),
        }
    }
}

impl<T: Scalar> FaceField<T> {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            x: vec![T::zero(); g.n_xfaces()],
            y: vec![T::zero(); g.n_yfaces()],
        }
    }

    pub fn from_vecs(g: &Grid, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        check_len("x-face field", g.n_xfaces(), x.len())?;
        check_len("y-face field", g.n_yfaces(), y.len())?;
        Ok(Self { x, y })
    }

    /// Samples a vector function `(fx, fy)`: x-components on x-faces,
    /// y-components on y-faces.
    pub fn from_fn(g: &Grid, mut fx: impl FnMut(f64, f64) -> T, mut fy: impl FnMut(f64, f64) -> T) -> Self {
        let x = (0..g.n_xfaces())
            .map(|k| {
                let (i, j) = g.xface_coords(k);
                let (px, py) = g.xface_position(i, j);
                fx(px, py)
            })
            .collect();
        let y = (0..g.n_yfaces())
            .map(|k| {
                let (i, j) = g.yface_coords(k);
                let (px, py) = g.yface_position(i, j);
                fy(px, py)
            })
            .collect();
        Self { x, y }
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        check_len("x-face field", g.n_xfaces(), self.x.len())?;
        check_len("y-face field", g.n_yfaces(), self.y.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.x.iter().chain(self.y.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.x.iter_mut().chain(self.y.iter_mut())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| a + b).collect(),
            y: self.y.iter().zip(&other.y).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v.scale(s)).collect(),
            y: self.y.iter().map(|v| v.scale(s)).collect(),
        }
    }

    /// Weighted squared L2 norm.
    pub fn norm_sq(&self, g: &Grid) -> f64 {
        self.iter().map(|v| v.abs_sq()).sum::<f64>() * g.cell_area()
    }

    pub fn dot(&self, other: &Self, g: &Grid) -> T {
        let mut s = T::zero();
        for (&a, &b) in self.iter().zip(other.iter()) {
            s += a * b.conj();
        }
        s.scale(g.cell_area())
    }
}

impl<T: Scalar> State<T> {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            u: FaceField::zeros(g),
            r: CellField::zeros(g),
        }
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        self.u.check(g)?;
        self.r.check(g)
    }

    /// Flattens to `[u_x, u_y, r]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.u.x.len() + self.u.y.len() + self.r.values.len());
        v.extend_from_slice(&self.u.x);
        v.extend_from_slice(&self.u.y);
        v.extend_from_slice(&self.r.values);
        v
    }

    pub fn from_slice(g: &Grid, v: &[T]) -> Result<Self> {
        check_len("state vector", g.state_dim(), v.len())?;
        let (nfx, nf) = (g.n_xfaces(), g.n_faces());
        Ok(Self {
            u: FaceField {
                x: v[..nfx].to_vec(),
                y: v[nfx..nf].to_vec(),
            },
            r: CellField {
                values: v[nf..].to_vec(),
            },
        })
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (s, &o) in self.u.iter_mut().zip(other.u.iter()) {
            *s += o.scale(a);
        }
        for (s, &o) in self.r.values.iter_mut().zip(&other.r.values) {
            *s += o.scale(a);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            u: self.u.scaled(s),
            r: self.r.scaled(s),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

pub fn build_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
    Grid::new(nx, ny, lx, ly)
}

/// Two-point difference across every interior face.
pub fn grad<T: Scalar>(r: &CellField<T>, g: &Grid) -> Result<FaceField<T>> {
    r.check(g)?;
    let mut out = FaceField::zeros(g);
    g.grad_into(&r.values, &mut out.x, &mut out.y);
    Ok(out)
}

/// Net outflux per cell divided by the cell area; boundary faces contribute nothing.
pub fn div<T: Scalar>(u: &FaceField<T>, g: &Grid) -> Result<CellField<T>> {
    u.check(g)?;
    let mut out = CellField::zeros(g);
    g.div_into(&u.x, &u.y, &mut out.values);
    Ok(out)
}

/// Discrete curl of a node stream function. The result is divergence free
/// to round-off and has zero normal trace.
pub fn curl(psi: &NodeField, g: &Grid) -> Result<FaceField> {
    check_len("node field", g.n_nodes(), psi.values.len())?;
    let node = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == g.nx || j == g.ny {
            0.0
        } else {
            psi.values[g.node_index(i, j)]
        }
    };
    let mut out = FaceField::zeros(g);
    for k in 0..g.n_xfaces() {
        let (i, j) = g.xface_coords(k);
        out.x[k] = (node(i, j + 1) - node(i, j)) / g.hy;
    }
    for k in 0..g.n_yfaces() {
        let (i, j) = g.yface_coords(k);
        out.y[k] = -(node(i + 1, j) - node(i, j)) / g.hx;
    }
    Ok(out)
}

/// Weighted inner product `sum u_a conj(u_b) w + sum r_a conj(r_b) w`.
pub fn inner<T: Scalar>(a: &State<T>, b: &State<T>, g: &Grid) -> Result<T> {
    a.check(g)?;
    b.check(g)?;
    let mut s = T::zero();
    for (&x, &y) in a.u.iter().zip(b.u.iter()) {
        s += x * y.conj();
    }
    for (&x, &y) in a.r.values.iter().zip(&b.r.values) {
        s += x * y.conj();
    }
    Ok(s.scale(g.cell_area()))
}

/// `E = 1/2 <Z, Z>`.
pub fn energy<T: Scalar>(z: &State<T>, g: &Grid) -> Result<f64> {
    Ok(0.5 * inner(z, z, g)?.re())
}

/// Squared norm without shape checks, for hot loops.
pub(crate) fn norm_sq_unchecked(z: &State, g: &Grid) -> f64 {
    let s: f64 = z.u.iter().map(|v| v * v).sum::<f64>() + z.r.values.iter().map(|v| v * v).sum::<f64>();
    s * g.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cells(g: &Grid, rng: &mut ChaCha8Rng) -> CellField {
        CellField {
            values: (0..g.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn random_faces(g: &Grid, rng: &mut ChaCha8Rng) -> FaceField {
        FaceField {
            x: (0..g.n_xfaces()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            y: (0..g.n_yfaces()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn counts_follow_layout() {
        let g = build_grid(2, 2, 1.0, 1.0).unwrap();
        assert_eq!((g.n_cells(), g.n_xfaces(), g.n_yfaces()), (4, 2, 2));
        let g = build_grid(4, 3, 1.0, 1.0).unwrap();
        assert_eq!((g.n_cells(), g.n_xfaces(), g.n_yfaces()), (12, 9, 8));
        assert_eq!(g.state_dim(), 29);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(1, 4, 1.0, 1.0).is_err());
        assert!(build_grid(4, 1, 1.0, 1.0).is_err());
        assert!(build_grid(4, 4, 0.0, 1.0).is_err());
        assert!(build_grid(4, 4, 1.0, -2.0).is_err());
    }

    #[test]
    fn grad_of_constant_vanishes() {
        let g = Grid::new(5, 3, 2.0, 1.0).unwrap();
        let r = CellField::from_fn(&g, |_, _| 3.25);
        let u = grad(&r, &g).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_is_exact_on_linear_functions() {
        let g = Grid::unit(7).unwrap();
        let r = CellField::from_fn(&g, |x, _| x);
        let u = grad(&r, &g).unwrap();
        for &v in &u.x {
            assert!((v - 1.0).abs() < 1e-13);
        }
        for &v in &u.y {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn grad_matches_loop_oracle() {
        let g = Grid::new(6, 5, 1.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_cells(&g, &mut rng);
        let u = grad(&r, &g).unwrap();
        // 2-D indexed oracle, independent of the flat-slice loops
        for j in 0..g.ny {
            for i in 1..g.nx {
                let want = (r.values[g.cell_index(i, j)] - r.values[g.cell_index(i - 1, j)]) / g.hx;
                assert!((u.x[g.xface_index(i, j)] - want).abs() <= 1e-15 * want.abs().max(1.0));
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let want = (r.values[g.cell_index(i, j)] - r.values[g.cell_index(i, j - 1)]) / g.hy;
                assert!((u.y[g.yface_index(i, j)] - want).abs() <= 1e-15 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn div_of_grad_of_x_lives_on_boundary_layer() {
        // 3x3 unit square, r = x: grad = 1 on all x-faces, 0 on y-faces.
        // Left column: outflux 1 east, nothing west -> +1/h = 3.
        // Right column: -3. Middle column: 0.
        let g = Grid::unit(3).unwrap();
        let r = CellField::from_fn(&g, |x, _| x);
        let d = div(&grad(&r, &g).unwrap(), &g).unwrap();
        for j in 0..3 {
            assert!((d.values[g.cell_index(0, j)] - 3.0).abs() < 1e-12);
            assert!(d.values[g.cell_index(1, j)].abs() < 1e-12);
            assert!((d.values[g.cell_index(2, j)] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn div_of_zero_and_size_mismatch() {
        let g = Grid::unit(4).unwrap();
        let d = div(&FaceField::<f64>::zeros(&g), &g).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        let bad = FaceField { x: vec![0.0; 3], y: vec![0.0; 12] };
        assert!(matches!(div(&bad, &g), Err(Error::ShapeMismatch { .. })));
        let bad_r = CellField { values: vec![0.0; 15] };
        assert!(grad(&bad_r, &g).is_err());
    }

    #[test]
    fn inner_and_energy_basics() {
        let g = Grid::new(4, 5, 2.0, 1.0).unwrap();
        let z = State::<f64>::zeros(&g);
        assert_eq!(inner(&z, &z, &g).unwrap(), 0.0);
        let mut imp = State::<f64>::zeros(&g);
        imp.r.values[7] = 1.0;
        assert!((inner(&imp, &imp, &g).unwrap() - g.cell_area()).abs() < 1e-15);
        let g = Grid::unit(8).unwrap();
        let mut one = State::zeros(&g);
        one.r.values.iter_mut().for_each(|v| *v = 1.0);
        assert!((energy(&one, &g).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_is_half_inner_bitwise() {
        let g = Grid::new(5, 4, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = State {
            u: random_faces(&g, &mut rng),
            r: random_cells(&g, &mut rng),
        };
        assert_eq!(energy(&z, &g).unwrap(), 0.5 * inner(&z, &z, &g).unwrap());
    }

    #[test]
    fn complex_adjointness() {
        let g = Grid::new(5, 6, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = CellField {
            values: (0..g.n_cells()).map(|_| c(&mut rng)).collect(),
        };
        let u = FaceField {
            x: (0..g.n_xfaces()).map(|_| c(&mut rng)).collect(),
            y: (0..g.n_yfaces()).map(|_| c(&mut rng)).collect(),
        };
        let divu = div(&u, &g).unwrap();
        let lhs: Complex64 = divu.values.iter().zip(&r.values).map(|(a, b)| a * b.conj()).sum::<Complex64>() * g.cell_area();
        let rhs = u.dot(&grad(&r, &g).unwrap(), &g);
        assert!((lhs + rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn curl_is_divergence_free() {
        let g = Grid::new(7, 5, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = NodeField {
            values: (0..g.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let u = curl(&psi, &g).unwrap();
        let d = div(&u, &g).unwrap();
        let scale = u.norm_sq(&g).sqrt();
        assert!(d.values.iter().all(|v| v.abs() <= 1e-12 * scale.max(1.0)));
    }

    proptest! {
        #[test]
        fn index_maps_are_bijections(nx in 2usize..20, ny in 2usize..20) {
            let g = Grid::new(nx, ny, 1.0, 1.0).unwrap();
            for k in 0..g.n_cells() {
                let (i, j) = g.cell_coords(k);
                prop_assert_eq!(g.cell_index(i, j), k);
            }
            for k in 0..g.n_xfaces() {
                let (i, j) = g.xface_coords(k);
                prop_assert!(i >= 1 && i < nx && j < ny);
                prop_assert_eq!(g.xface_index(i, j), k);
            }
            for k in 0..g.n_yfaces() {
                let (i, j) = g.yface_coords(k);
                prop_assert!(j >= 1 && j < ny && i < nx);
                prop_assert_eq!(g.yface_index(i, j), k);
            }
            for k in 0..g.n_nodes() {
                let (i, j) = g.node_coords(k);
                prop_assert_eq!(g.node_index(i, j), k);
            }
        }

        #[test]
        fn summation_by_parts(nx in 2usize..33, ny in 2usize..33, seed in any::<u64>()) {
            let g = Grid::new(nx, ny, 1.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_cells(&g, &mut rng);
            let u = random_faces(&g, &mut rng);
            let divu = div(&u, &g).unwrap();
            let lhs: f64 = divu.values.iter().zip(&r.values).map(|(a, b)| a * b).sum::<f64>() * g.cell_area();
            let gr = grad(&r, &g).unwrap();
            let rhs = u.dot(&gr, &g);
            // relative to the Cauchy-Schwarz bound on either side
            let scale = (u.norm_sq(&g) * gr.norm_sq(&g)).sqrt();
            prop_assert!((lhs + rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn divergence_integrates_to_zero(nx in 2usize..33, ny in 2usize..33, seed in any::<u64>()) {
            let g = Grid::new(nx, ny, 1.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_faces(&g, &mut rng);
            let total = div(&u, &g).unwrap().integral(&g);
            prop_assert!(total.abs() <= 1e-13 * u.norm_sq(&g).sqrt());
        }
    }
}
