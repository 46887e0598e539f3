//! Dense symmetric linear algebra: Cholesky factorization, solves, inverses,
//! covariance estimation, and condition-number probes.
//!
//! Covariance matrices here are small (at most feature width x feature width,
//! 512 in the largest supported tables), so a plain O(d^3) Cholesky is fine.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Array2<f64>,
}

impl Cholesky {
    /// Factors `a = L L^T`. Returns `None` if the matrix is not numerically
    /// positive definite.
    pub fn new(a: &ArrayView2<f64>) -> Option<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return None;
        }
        let mut l = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                for k in 0..j {
                    sum -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[[i, i]] = sum.sqrt();
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        Some(Self { factor: l })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &ArrayView1<f64>) -> Array1<f64> {
        let d = self.dim();
        let l = &self.factor;
        let mut y = Array1::<f64>::zeros(d);
        for i in 0..d {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l[[i, k]] * y[k];
            }
            y[i] = sum / l[[i, i]];
        }
        let mut x = Array1::<f64>::zeros(d);
        for i in (0..d).rev() {
            let mut sum = y[i];
            for k in i + 1..d {
                sum -= l[[k, i]] * x[k];
            }
            x[i] = sum / l[[i, i]];
        }
        x
    }

    /// Explicit symmetric inverse `A^{-1} = L^{-T} L^{-1}`.
    pub fn inverse(&self) -> Array2<f64> {
        let d = self.dim();
        let mut inv = Array2::<f64>::zeros((d, d));
        let eye = Array2::<f64>::eye(d);
        for j in 0..d {
            let col = self.solve(&eye.row(j));
            inv.column_mut(j).assign(&col);
        }
        // Symmetrize to wash out substitution round-off.
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (inv[[i, j]] + inv[[j, i]]);
                inv[[i, j]] = s;
                inv[[j, i]] = s;
            }
        }
        inv
    }

    /// Maps a standard normal draw `g` to a draw from `N(0, A)` via `L g`.
    pub fn correlate(&self, g: &ArrayView1<f64>) -> Array1<f64> {
        self.factor.dot(g)
    }
}

/// Factors `a`, escalating an additive ridge `scale * I` until the matrix is
/// positive definite. Returns the factorization and the ridge that was used.
pub fn cholesky_with_ridge(a: &Array2<f64>) -> Result<(Cholesky, f64)> {
    if let Some(chol) = Cholesky::new(&a.view()) {
        return Ok((chol, 0.0));
    }
    let d = a.nrows() as f64;
    let trace: f64 = a.diag().sum();
    let base = (trace / d).abs().max(1e-12);
    let mut ridge = base * 1e-12;
    for _ in 0..24 {
        let mut ridged = a.clone();
        for i in 0..a.nrows() {
            ridged[[i, i]] += ridge;
        }
        if let Some(chol) = Cholesky::new(&ridged.view()) {
            return Ok((chol, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::invalid(
        "matrix could not be made positive definite by ridge regularization",
    ))
}

/// Estimates the spectral condition number of a symmetric positive definite
/// matrix via power iteration for the top eigenvalue and inverse iteration
/// (through the supplied factorization) for the bottom one.
pub fn condition_number(a: &ArrayView2<f64>, chol: &Cholesky) -> f64 {
    let d = a.nrows();
    let start = Array1::from_elem(d, 1.0 / (d as f64).sqrt());

    let mut v = start.clone();
    let mut lambda_max = 0.0;
    for _ in 0..64 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        v = w / norm;
        lambda_max = norm;
    }

    let mut u = start;
    let mut inv_lambda = 0.0;
    for _ in 0..64 {
        let w = chol.solve(&u.view());
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        u = w / norm;
        inv_lambda = norm;
    }
    let lambda_min = 1.0 / inv_lambda;
    lambda_max / lambda_min
}

/// Sample covariance of the rows of `x` (divisor n - 1).
pub fn sample_covariance(x: &ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    assert!(n >= 2, "covariance needs at least two rows");
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let mut cov = Array2::<f64>::zeros((d, d));
    for row in x.rows() {
        let r = &row - &mean;
        for i in 0..d {
            for j in 0..=i {
                cov[[i, j]] += r[i] * r[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[[i, j]] / denom;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    cov
}

/// Draws `n` rows from `N(0, A)` where `chol` factors `A`, via `L g` with
/// `g` standard normal.
pub fn gaussian_rows(chol: &Cholesky, n: usize, rng: &mut crate::seeding::Rng) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let d = chol.dim();
    let mut out = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let g = Array1::from_shape_fn(d, |_| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        });
        out.row_mut(i).assign(&chol.correlate(&g.view()));
    }
    out
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "p out of range");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Sorts a copy of `values` and takes the requested quantile.
pub fn quantile_of(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    quantile(&sorted, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_round_trips() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let chol = Cholesky::new(&a.view()).unwrap();
        let rebuilt = chol.factor().dot(&chol.factor().t());
        for (x, y) in a.iter().zip(rebuilt.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let b = array![1.0, -2.0, 0.5];
        let x = chol.solve(&b.view());
        let back = a.dot(&x);
        for (x, y) in b.iter().zip(back.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        let inv = chol.inverse();
        let prod = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[[i, j]], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::new(&a.view()).is_none());
    }

    #[test]
    fn ridge_recovers_singular_matrix() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let (_, ridge) = cholesky_with_ridge(&a).unwrap();
        assert!(ridge > 0.0);
    }

    #[test]
    fn condition_number_of_diagonal() {
        let a = array![[100.0, 0.0], [0.0, 1.0]];
        let chol = Cholesky::new(&a.view()).unwrap();
        let cond = condition_number(&a.view(), &chol);
        assert_abs_diff_eq!(cond, 100.0, epsilon = 1e-6);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&v, 0.0), 1.0);
        assert_abs_diff_eq!(quantile(&v, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&v, 0.5), 2.5);
        let ten: Vec<f64> = vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert_abs_diff_eq!(quantile(&ten, 0.9), 1.0);
    }

    #[test]
    fn covariance_matches_hand_computation() {
        let x = array![[1.0, 2.0], [3.0, 6.0], [5.0, 10.0]];
        let cov = sample_covariance(&x.view());
        assert_abs_diff_eq!(cov[[0, 0]], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[[0, 1]], 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[[1, 1]], 16.0, epsilon = 1e-12);
    }
}
