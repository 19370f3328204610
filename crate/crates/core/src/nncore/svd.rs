//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Pairwise column orthogonality threshold, relative to the column norms.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = U·diag(S)·Vᵀ` with `k = min(rows, cols)` singular triplets.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// Non-negative, non-increasing.
    pub s: Vec<f64>,
    /// `cols × k`.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us.set(i, j, us.get(i, j) * s);
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factors have consistent shapes")
    }
}

pub fn svd_thin(m: &Matrix) -> Result<Svd> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (rows, cols) = m.shape();
    if rows >= cols {
        let (u, s, v) = jacobi_tall(rows, cols, columns_of(m))?;
        Ok(Svd { u, s, v })
    } else {
        // m = V' S U'ᵀ where mᵀ = U' S V'ᵀ
        let (u_t, s, v_t) = jacobi_tall(cols, rows, columns_of(&m.transpose()))?;
        Ok(Svd { u: v_t, s, v: u_t })
    }
}

fn columns_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

/// Orthogonalizes the `cols` columns of a `rows × cols` matrix (`rows ≥ cols`)
/// and returns (U, S, V) sorted by decreasing singular value.
fn jacobi_tall(
    rows: usize,
    cols: usize,
    mut a: Vec<Vec<f64>>,
) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = cols < 2;
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        worst = 0.0f64;
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || scale == 0.0 {
                    continue;
                }
                let off = gamma.abs() / scale;
                worst = worst.max(off);
                if off <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            method: "one-sided Jacobi SVD",
            iterations: MAX_SWEEPS,
            residual: worst,
        });
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s_max = norms.iter().cloned().fold(0.0, f64::max);
    let negligible = s_max * (rows as f64) * f64::EPSILON;
    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(cols);
    let mut s = Vec::with_capacity(cols);
    let mut v_cols = Vec::with_capacity(cols);
    for &j in &order {
        let n = norms[j];
        if n > negligible {
            u_cols.push(Some(a[j].iter().map(|x| x / n).collect()));
            s.push(n);
        } else {
            u_cols.push(None);
            s.push(0.0);
        }
        v_cols.push(v[j].clone());
    }
    let u_cols = complete_orthonormal(rows, u_cols);
    Ok((
        Matrix::from_columns(rows, &u_cols)?,
        s,
        Matrix::from_columns(cols, &v_cols)?,
    ))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the missing columns (zero singular values) with unit vectors orthogonal
/// to every other column, by Gram–Schmidt over the standard basis.
fn complete_orthonormal(rows: usize, cols: Vec<Option<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut candidate = 0;
    cols.into_iter()
        .map(|c| match c {
            Some(c) => c,
            None => loop {
                let mut e = vec![0.0; rows];
                e[candidate % rows] = 1.0;
                candidate += 1;
                for _ in 0..2 {
                    for b in &basis {
                        let d = dot(&e, b);
                        e.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                    }
                }
                let n = dot(&e, &e).sqrt();
                if n > 1e-8 {
                    e.iter_mut().for_each(|x| *x /= n);
                    basis.push(e.clone());
                    break e;
                }
            },
        })
        .collect()
}
