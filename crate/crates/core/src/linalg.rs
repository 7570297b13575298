//! Small dense linear algebra: enough for information matrices of a few
//! dozen parameters at most.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Pivots at or below this value mark a matrix as not positive definite.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        Self::with_tolerance(a, PIVOT_TOLERANCE)
    }

    /// Reads only the lower triangle of `a`.
    pub fn with_tolerance(a: &Matrix, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        debug_assert!(a.is_symmetric(1e-10 * (1.0 + max_abs(a.as_slice()))));
        let n = a.rows;
        let mut lower = a.data.clone();
        factor_in_place(&mut lower, n, tol)?;
        Ok(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }

    /// Quadratic form `b' A^{-1} b`.
    pub fn inverse_quad(&self, b: &[f64]) -> f64 {
        let n = self.n;
        let l = &self.lower;
        let mut z = b.to_vec();
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[i * n + k] * z[k];
            }
            z[i] = s / l[i * n + i];
            acc += z[i] * z[i];
        }
        acc
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrise away round-off
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = m;
                inv[(j, i)] = m;
            }
        }
        inv
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// In-place Cholesky of the `n x n` row-major buffer; on success the lower
/// triangle holds `L` and the strict upper triangle is zeroed.
pub(crate) fn factor_in_place(a: &mut [f64], n: usize, tol: f64) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Log-determinant of a packed SPD buffer, using `scratch` as workspace.
/// Returns `None` when a pivot falls at or below [`PIVOT_TOLERANCE`].
pub(crate) fn logdet_buffer(a: &[f64], n: usize, scratch: &mut Vec<f64>) -> Option<f64> {
    scratch.clear();
    scratch.extend_from_slice(a);
    factor_in_place(scratch, n, PIVOT_TOLERANCE).ok()?;
    Some(2.0 * (0..n).map(|i| scratch[i * n + i].ln()).sum::<f64>())
}

pub fn logdet_spd(a: &Matrix) -> Result<f64> {
    Ok(Cholesky::new(a)?.logdet())
}

pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    Ok(Cholesky::new(a)?.inverse())
}

/// `tr(AB)` without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows != b.cols || a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "trace of {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Matrix::from_row_major(
            n,
            n,
            (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut a = b.transpose().matmul(&b).unwrap();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    /// Leibniz expansion over all permutations.
    fn permutation_det(a: &Matrix) -> f64 {
        fn rec(a: &Matrix, row: usize, used: &mut Vec<bool>, perm: &mut Vec<usize>, out: &mut f64) {
            let n = a.rows();
            if row == n {
                let mut inversions = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if perm[i] > perm[j] {
                            inversions += 1;
                        }
                    }
                }
                let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
                *out += sign * (0..n).map(|i| a[(i, perm[i])]).product::<f64>();
                return;
            }
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    perm.push(c);
                    rec(a, row + 1, used, perm, out);
                    perm.pop();
                    used[c] = false;
                }
            }
        }
        let mut out = 0.0;
        rec(a, 0, &mut vec![false; a.rows()], &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_spd(&Matrix::identity(3)).unwrap(), 0.0);
        assert!((logdet_spd(&Matrix::diag(&[2.0, 3.0])).unwrap() - 6f64.ln()).abs() < 1e-15);
        let a = random_spd(5, 11);
        let oracle = permutation_det(&a).ln();
        assert!((logdet_spd(&a).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn logdet_rejects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            logdet_spd(&a),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(logdet_spd(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_spd(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let inv = inverse_spd(&Matrix::diag(&[2.0, 4.0])).unwrap();
        assert!(inv.max_abs_diff(&Matrix::diag(&[0.5, 0.25])) < 1e-15);
        let a = random_spd(4, 3);
        let prod = a.matmul(&inverse_spd(&a).unwrap()).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(4)) < 1e-8);
    }

    #[test]
    fn trace_product_examples() {
        let d = Matrix::diag(&[1.0, 2.0, 3.0]);
        assert_eq!(trace_product(&Matrix::identity(3), &d).unwrap(), 6.0);
        assert_eq!(trace_product(&Matrix::zeros(3, 3), &d).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand3 = || {
            Matrix::from_row_major(3, 3, (0..9).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap()
        };
        let (a, b) = (rand3(), rand3());
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                oracle += a[(i, j)] * b[(j, i)];
            }
        }
        assert!((trace_product(&a, &b).unwrap() - oracle).abs() < 1e-14);
        assert!(trace_product(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn solve_and_quadratic_form_agree() {
        let a = random_spd(5, 8);
        let c = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let x = c.solve(&b);
        let quad: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((quad - c.inverse_quad(&b)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spd_strategy() -> impl Strategy<Value = Matrix> {
            (2usize..7, any::<u64>()).prop_map(|(n, seed)| random_spd(n, seed))
        }

        proptest! {
            #[test]
            fn logdet_scales_with_dimension(a in spd_strategy(), c in 0.01f64..100.0) {
                let p = a.rows() as f64;
                let lhs = logdet_spd(&a.scale(c)).unwrap();
                let rhs = p * c.ln() + logdet_spd(&a).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }

            #[test]
            fn inverse_is_an_involution(a in spd_strategy()) {
                let back = inverse_spd(&inverse_spd(&a).unwrap()).unwrap();
                prop_assert!(back.max_abs_diff(&a) < 1e-7);
            }

            #[test]
            fn trace_product_commutes(a in spd_strategy(), seed in any::<u64>()) {
                let b = random_spd(a.rows(), seed);
                let ab = trace_product(&a, &b).unwrap();
                let ba = trace_product(&b, &a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-10 * (1.0 + ab.abs()));
            }
        }
    }
}
