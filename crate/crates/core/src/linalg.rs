//! Working-precision dense linear algebra used as a measuring instrument.
//!
//! Nothing here rounds into a [`crate::FormatSpec`]; these routines measure
//! what rounding did to a matrix.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "entry ({}, {}) is not finite",
                bad / cols,
                bad % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, expected {cols}",
                rows[i].len()
            )));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            data.extend((0..self.rows).map(|i| self.get(i, j)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Stop when every column pair has `|u_p·u_q| < tol · ‖u_p‖‖u_q‖`.
pub const JACOBI_TOLERANCE: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Singular values in descending order, by one-sided (Hestenes) Jacobi.
///
/// Columns are rotated pairwise until mutually orthogonal; the singular
/// values are then the column norms. Columns whose norm has collapsed below
/// `ε·‖A‖_F` count as converged, since their direction is rounding noise.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::Shape(format!(
            "singular_values needs rows >= cols, got {m}x{n}"
        )));
    }
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let negligible = (f64::EPSILON * a.frobenius_norm()).powi(2);
    let mut sweeps = 0;
    loop {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                let ratio = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(ratio);
                if ratio < JACOBI_TOLERANCE {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if off < JACOBI_TOLERANCE {
            break;
        }
        sweeps += 1;
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence {
                sweeps,
                off_diagonal: off,
            });
        }
    }
    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
    Ok(sigma)
}

pub fn sigma_min(a: &Matrix) -> Result<f64> {
    Ok(*singular_values(a)?.last().expect("at least one column"))
}

/// Pivots below this multiple of `‖A‖_F` mark a rank-deficient system.
pub const RANK_TOLERANCE: f64 = 1e-13;

/// Least-squares minimiser of `‖Ax - b‖` by Householder QR.
pub fn lls_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::Shape(format!("lls_solve needs rows >= cols, got {m}x{n}")));
    }
    if b.len() != m {
        return Err(Error::Shape(format!(
            "right-hand side has length {}, expected {m}",
            b.len()
        )));
    }
    let scale = a.frobenius_norm();
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    for k in 0..n {
        let norm = (k..m).map(|i| r.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * scale {
            return Err(Error::RankDeficient { column: k, pivot: norm });
        }
        let alpha = if r.get(k, k) > 0.0 { -norm } else { norm };
        // v = x - alpha·e1, stored in place of column k below the diagonal
        let mut v: Vec<f64> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * r.get(k + t, j)).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    let cur = r.get(k + t, j);
                    r.set(k + t, j, cur - f * vi);
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * rhs[k + t]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                rhs[k + t] -= f * vi;
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| r.get(k, j) * x[j]).sum();
        x[k] = (rhs[k] - tail) / r.get(k, k);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngKey;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let key = RngKey::derive(seed, ["linalg-test"]);
        let data = (0..rows * cols).map(|c| key.standard_normal(c as u64)).collect();
        Matrix::from_row_major(rows, cols, data).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn diagonal_embedding() {
        let mut a = Matrix::from_row_major(5, 3, vec![0.0; 15]).unwrap();
        a.set(0, 0, 1.0);
        a.set(1, 1, 3.0);
        a.set(2, 2, 2.0);
        assert_eq!(singular_values(&a).unwrap(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn permutation_matrix() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&a).unwrap(), vec![1.0, 1.0]);
        assert_eq!(sigma_min(&Matrix::identity(5)).unwrap(), 1.0);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut a = random_matrix(20, 3, 4);
        for i in 0..20 {
            let v = a.get(i, 0);
            a.set(i, 2, v);
        }
        assert!(sigma_min(&a).unwrap() <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn frobenius_identity() {
        for seed in 0..20 {
            let a = random_matrix(6, 3, seed);
            let s = singular_values(&a).unwrap();
            let sum: f64 = s.iter().map(|v| v * v).sum();
            assert_close(sum, a.frobenius_norm().powi(2), 1e-10);
        }
    }

    #[test]
    fn invariances() {
        let a = random_matrix(8, 4, 99);
        let s = singular_values(&a).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..8).map(|i| a.row(i).to_vec()).collect();
        rows.reverse();
        rows.swap(0, 3);
        let permuted = Matrix::from_rows(&rows).unwrap();
        let negated =
            Matrix::from_row_major(8, 4, a.data().iter().map(|v| -v).collect()).unwrap();
        for other in [permuted, negated] {
            for (x, y) in s.iter().zip(singular_values(&other).unwrap()) {
                assert_close(*x, y, 1e-10);
            }
        }
        for j in 0..4 {
            let col_norm = a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(s[3] <= col_norm);
        }
    }

    #[test]
    fn shape_errors() {
        let wide = Matrix::from_row_major(2, 3, vec![1.0; 6]).unwrap();
        assert!(matches!(singular_values(&wide), Err(Error::Shape(_))));
        assert!(matches!(lls_solve(&wide, &[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_row_major(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn lls_identity_and_consistent() {
        let b = [1.0, -2.0, 3.5];
        assert_eq!(lls_solve(&Matrix::identity(3), &b).unwrap(), b);
        let a = random_matrix(30, 4, 12);
        let x0 = [0.5, -1.0, 2.0, 0.25];
        let b = a.matvec(&x0).unwrap();
        let x = lls_solve(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(x0) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    #[test]
    fn lls_rank_deficient() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(
            lls_solve(&a, &[1.0, 1.0, 1.0]),
            Err(Error::RankDeficient { column: 1, .. })
        ));
    }

    #[test]
    fn lls_residual_orthogonal_to_range() {
        let a = random_matrix(40, 5, 3);
        let key = RngKey::derive(3, ["rhs"]);
        let b: Vec<f64> = (0..40).map(|c| key.standard_normal(c)).collect();
        let x = lls_solve(&a, &b).unwrap();
        let ax = a.matvec(&x).unwrap();
        let resid: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        let g = a.transpose().matvec(&resid).unwrap();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gnorm <= 1e-10 * a.frobenius_norm() * bnorm);
    }
}
