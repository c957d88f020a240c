//! Dense complex helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Result of inverting a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct HermitianInverse {
    pub inverse: CMat,
    /// `ln det(A^-1)`
    pub log_det_inverse: f64,
    /// Diagonal jitter that had to be added before the factorization succeeded.
    pub jitter: f64,
}

/// Invert a Hermitian positive-definite matrix through its Cholesky factor.
///
/// On factorization failure a diagonal jitter of `1e-10 * trace / n` is added
/// and grown tenfold up to five times before giving up.
pub fn hermitian_pd_inverse(a: &CMat, context: &'static str) -> Result<HermitianInverse> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::shape(context, "square matrix", format!("{}x{}", n, a.ncols())));
    }
    let mut sym = a.clone();
    for j in 0..n {
        sym[(j, j)] = Complex64::new(sym[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let v = (sym[(i, j)] + sym[(j, i)].conj()) * 0.5;
            sym[(i, j)] = v;
            sym[(j, i)] = v.conj();
        }
    }
    let trace: f64 = (0..n).map(|i| sym[(i, i)].re).sum();
    let mut jitter = 0.0;
    let base = 1e-10 * trace.abs().max(f64::MIN_POSITIVE) / n.max(1) as f64;
    for attempt in 0..=5 {
        let mut m = sym.clone();
        if attempt > 0 {
            jitter = base * 10f64.powi(attempt - 1);
            for i in 0..n {
                m[(i, i)] += Complex64::new(jitter, 0.0);
            }
            log::warn!("{context}: Cholesky failed, retrying with jitter {jitter:e}");
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            let mut log_det = 0.0;
            for i in 0..n {
                log_det += l[(i, i)].re.ln();
            }
            let inverse = chol.inverse();
            return Ok(HermitianInverse {
                inverse,
                log_det_inverse: -2.0 * log_det,
                jitter,
            });
        }
    }
    Err(Error::Regularization(context))
}

/// `A^H A` for a column-major matrix, exploiting Hermitian symmetry.
pub fn gram(a: &CMat) -> CMat {
    let n = a.ncols();
    let mut g = CMat::zeros(n, n);
    for j in 0..n {
        let cj = a.column(j);
        for i in 0..=j {
            let ci = a.column(i);
            let v = ci.dotc(&cj);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

/// `‖v‖²` for a complex vector.
pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Minimum-norm least-squares solution `A⁺ y` via the SVD, discarding singular
/// values below `rel_tol * σ_max`.
pub fn lstsq_pinv(a: &CMat, y: &CVec, rel_tol: f64) -> Result<CVec> {
    if a.nrows() != y.len() {
        return Err(Error::shape("lstsq_pinv", a.nrows(), y.len()));
    }
    if a.ncols() == 0 {
        return Ok(CVec::zeros(0));
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(CVec::zeros(a.ncols()));
    }
    svd.solve(y, rel_tol * smax)
        .map_err(|e| Error::numerical("pseudoinverse", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn inverse_and_log_det_of_hermitian_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random(5, 5, &mut rng);
        let a = b.adjoint() * &b + CMat::identity(5, 5);
        let inv = hermitian_pd_inverse(&a, "test").unwrap();
        let eye = &a * &inv.inverse;
        assert!((eye - CMat::identity(5, 5)).norm() < 1e-12);
        let det = a.clone().determinant();
        assert!((inv.log_det_inverse + det.re.ln()).abs() < 1e-10);
        assert_eq!(inv.jitter, 0.0);
    }

    #[test]
    fn singular_matrix_is_rescued_by_jitter() {
        let v = CMat::from_element(3, 1, ONE);
        let a = &v * v.adjoint();
        let inv = hermitian_pd_inverse(&a, "rank one").unwrap();
        assert!(inv.jitter > 0.0);
    }

    #[test]
    fn gram_matches_adjoint_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(6, 4, &mut rng);
        assert!((gram(&a) - a.adjoint() * &a).norm() < 1e-13);
    }

    #[test]
    fn pinv_solves_overdetermined_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(7, 3, &mut rng);
        let x = CVec::from_fn(3, |i, _| Complex64::new(i as f64, 1.0));
        let y = &a * &x;
        let est = lstsq_pinv(&a, &y, 1e-10).unwrap();
        assert!((est - x).norm() < 1e-10);
    }
}
