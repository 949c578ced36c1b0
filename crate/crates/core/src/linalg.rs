//! Krylov solvers and small dense helpers shared by the modules.

use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `project` is applied to the right-hand side and every search direction;
/// pass the identity for definite systems or a mean-removal for singular
/// Neumann systems.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm(&rhs);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], KrylovStats { iterations: 0, residual: 0.0 }));
    }
    project(&mut x);
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    project(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let res = rr.sqrt() / bnorm;
        if res <= tol {
            return Ok((x, KrylovStats { iterations: it, residual: res }));
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                solver: "conjugate gradient (breakdown)",
                iterations: it,
                residual: res,
            });
        }
        let a = rr / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        project(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / bnorm;
    if res <= tol {
        return Ok((x, KrylovStats { iterations: max_iter, residual: res }));
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: res,
    })
}

/// Restarted GMRES with modified Gram-Schmidt.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]) -> Result<()>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], KrylovStats { iterations: 0, residual: 0.0 }));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut total = 0;
    let restart = restart.max(1);
    loop {
        apply(&x, &mut tmp)?;
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        let mut res = beta / bnorm;
        if res <= tol {
            return Ok((x, KrylovStats { iterations: total, residual: res }));
        }
        if total >= max_iter {
            return Err(Error::NoConvergence {
                solver: "gmres",
                iterations: total,
                residual: res,
            });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut s = vec![0.0; restart + 1];
        s[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = vec![0.0; n];
            apply(&v[k], &mut w)?;
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            s[k + 1] = -sn[k] * s[k];
            s[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            res = s[k + 1].abs() / bnorm;
            if res <= tol || hn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = s[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
    }
}

/// Dense matrix from a column generator.
pub fn mat_from_columns(n_rows: usize, n_cols: usize, mut col: impl FnMut(usize) -> Result<Vec<f64>>) -> Result<Mat<f64>> {
    let mut m = Mat::<f64>::zeros(n_rows, n_cols);
    for j in 0..n_cols {
        let c = col(j)?;
        debug_assert_eq!(c.len(), n_rows);
        for (i, v) in c.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    for (j, &xj) in x.iter().enumerate().take(m.ncols()) {
        if xj == 0.0 {
            continue;
        }
        let col = m.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// Frobenius norm.
pub fn frobenius(m: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_spd_tridiagonal() {
        let n = 30;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, stats) = conjugate_gradient(apply, |_| {}, &b, None, 1e-13, 200).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-11);
        assert!(stats.iterations <= n);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (1.0 + i as f64 * i as f64) * x[i];
            }
        };
        let b = vec![1.0; n];
        let err = conjugate_gradient(apply, |_| {}, &b, None, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 3, .. }));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let apply = |x: &[f64], y: &mut [f64]| -> Result<()> {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] + 0.7 * l - 0.4 * r;
            }
            Ok(())
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let (x, _) = gmres(apply, &b, None, 1e-13, 15, 500).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax).unwrap();
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-11 * norm(&b));
    }
}
