//! Dense complex-Hermitian helpers shared across the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`; eigendecompositions come from
//! the symmetric (Hermitian) QR solver and are always returned with
//! eigenvalues sorted in descending order so downstream consumers get a
//! deterministic ordering.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Max-norm tolerance below which a matrix counts as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Largest entrywise deviation from Hermitian symmetry, `max |a_ij - conj(a_ji)|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn is_hermitian(a: &CMatrix) -> bool {
    a.is_square() && hermitian_defect(a) <= HERMITIAN_TOL
}

/// `(a + a^H) / 2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Hilbert-Schmidt inner product `tr(a b)` for Hermitian `a`, `b` (real part).
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc.re
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.norm()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
pub struct HermEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: CMatrix,
}

impl HermEigen {
    pub fn reassemble<F: Fn(f64) -> f64>(&self, f: F) -> CMatrix {
        let n = self.values.len();
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(
            n,
            self.values.iter().map(|&v| C64::new(f(v), 0.0)),
        ));
        &self.vectors * diag * self.vectors.adjoint()
    }

    /// Index of the eigenvalue with the largest absolute value.
    pub fn extremal_index(&self) -> usize {
        let last = self.values.len() - 1;
        if self.values[0].abs() >= self.values[last].abs() {
            0
        } else {
            last
        }
    }

    pub fn op_norm(&self) -> f64 {
        self.values[self.extremal_index()].abs()
    }
}

/// Hermitian eigendecomposition. The input is symmetrized first; non-finite
/// entries are rejected so the iterative solver cannot stall.
pub fn hermitian_eigen(a: &CMatrix) -> Result<HermEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(
            "non-finite entries passed to the eigensolver".into(),
        ));
    }
    let n = a.nrows();
    let se = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .partial_cmp(&se.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok(HermEigen { values, vectors })
}

/// Largest absolute eigenvalue.
pub fn op_norm(a: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigen(a)?.op_norm())
}

/// Applies `f` to the spectrum of a Hermitian matrix: `U f(L) U^H`.
pub fn spectral_map<F: Fn(f64) -> f64>(a: &CMatrix, f: F) -> Result<CMatrix> {
    Ok(hermitian_eigen(a)?.reassemble(f))
}

/// Random Hermitian matrix with independent Gaussian entries (GUE-like),
/// scaled so entries have standard deviation `scale`.
pub fn random_hermitian<R: Rng>(m: usize, scale: f64, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    });
    symmetrize(&g)
}

/// Random complex unit vector (uniform on the sphere).
pub fn random_unit_vector<R: Rng>(m: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(m, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im)
        });
        let n = v.norm();
        if n > 1e-12 {
            return v.unscale(n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigen_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [2usize, 5, 8, 16] {
            let h = random_hermitian(m, 1.0, &mut rng);
            let eig = hermitian_eigen(&h).unwrap();
            let recon = eig.reassemble(|x| x);
            assert!((&h - &recon).norm() < 1e-10 * (1.0 + h.norm()));
            for w in eig.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            // orthonormal columns
            let gram = eig.vectors.adjoint() * &eig.vectors;
            let eye = CMatrix::identity(m, m);
            assert!((gram - eye).norm() < 1e-10);
        }
    }

    #[test]
    fn hs_inner_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_hermitian(6, 1.0, &mut rng);
        let b = random_hermitian(6, 1.0, &mut rng);
        let prod = &a * &b;
        let tr: C64 = prod.diagonal().iter().sum();
        assert!((hs_inner(&a, &b) - tr.re).abs() < 1e-12);
        assert!(tr.im.abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(hermitian_eigen(&a).is_err());
    }

    #[test]
    fn defect_detects_asymmetry() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = C64::new(0.0, 1.0);
        a[(1, 0)] = C64::new(0.0, 1.0); // conj would be -i
        assert!(hermitian_defect(&a) > 1.0);
        assert!(!is_hermitian(&a));
        assert!(is_hermitian(&symmetrize(&a)));
    }
}
