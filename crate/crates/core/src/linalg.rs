//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. Hermitian
//! eigendecompositions are always full-spectrum and sorted descending.
//!
//! The module also provides an isometric real coordinate system for
//! Hermitian matrices ([`hermitian_to_coords`] / [`coords_to_hermitian`]).
//! Measurement maps are stored as real matrices acting on these coordinates,
//! which turns the Hilbert-Schmidt pairing of Hermitian matrices into a plain
//! real dot product.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigendecomposition `a = U diag(λ) U†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Real eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    /// Rebuild `Σ_k λ_k u_k u_k†` from the columns listed in `indices`, using
    /// `values` in place of the stored eigenvalues.
    pub fn reconstruct_from(&self, indices: &[usize], values: &[f64]) -> ComplexMatrix {
        let d = self.eigenvectors.nrows();
        let mut out = ComplexMatrix::zeros(d, d);
        for (&k, &lambda) in indices.iter().zip(values) {
            if lambda == 0.0 {
                continue;
            }
            let u = self.eigenvectors.column(k);
            out.gerc(Complex64::new(lambda, 0.0), &u, &u, ONE);
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let idx: Vec<usize> = (0..self.eigenvalues.len()).collect();
        self.reconstruct_from(&idx, &self.eigenvalues)
    }
}

/// Hermitian part `(a + a†) / 2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn eig_hermitian(a: &ComplexMatrix) -> Result<HermitianEig> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let d = a.nrows();
    if d == 0 {
        return Ok(HermitianEig {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps the factorization's order among ties
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(d, d, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Hilbert-Schmidt inner product `Tr(a† b)`.
pub fn frobenius_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "inner product of {:?} and {:?} matrices",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Schatten-1 norm of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian(a: &ComplexMatrix) -> Result<f64> {
    Ok(eig_hermitian(a)?.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Largest absolute entry of `a - a†`.
pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Number of real coordinates of a `d x d` Hermitian matrix.
pub const fn coord_len(d: usize) -> usize {
    d * d
}

/// Write the isometric real coordinates of the Hermitian part of `a` into `out`.
///
/// Layout: the `d` diagonal entries, then for each `i < j` (row-major) the
/// pair `√2·Re a_ij, √2·Im a_ij`. For Hermitian `a, b` the dot product of
/// coordinates equals `Re Tr(a† b)`, which is the full inner product.
pub fn hermitian_to_coords_into(a: &ComplexMatrix, out: &mut [f64]) {
    let d = a.nrows();
    debug_assert_eq!(out.len(), coord_len(d));
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        out[i] = a[(i, i)].re;
    }
    let mut p = d;
    for i in 0..d {
        for j in (i + 1)..d {
            // average with the mirrored entry so slightly non-Hermitian input
            // maps to its Hermitian part
            let z = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            out[p] = s2 * z.re;
            out[p + 1] = s2 * z.im;
            p += 2;
        }
    }
}

pub fn hermitian_to_coords(a: &ComplexMatrix) -> Vec<f64> {
    let mut out = vec![0.0; coord_len(a.nrows())];
    hermitian_to_coords_into(a, &mut out);
    out
}

pub fn coords_to_hermitian(v: &[f64], d: usize) -> ComplexMatrix {
    debug_assert_eq!(v.len(), coord_len(d));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        a[(i, i)] = Complex64::new(v[i], 0.0);
    }
    let mut p = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = Complex64::new(h * v[p], h * v[p + 1]);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            p += 2;
        }
    }
    a
}

/// Real dot product over the common length. Eight partial sums let the
/// compiler vectorize; the summation order is fixed, so results are
/// reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let head = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    head + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
