//! Signal model: calibration vectors, density matrices, stacked block signals
//! and the seeded generators that draw experiment instances.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ONE, ZERO};

/// Tolerance used when checking density-matrix invariants.
pub const STATE_TOL: f64 = 1e-10;

/// Real calibration coefficients, one per measurement block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalibrationVector {
    pub values: Vec<f64>,
}

impl CalibrationVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.values[k] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validate `matrix` as a quantum state.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim("density matrix must be square"));
        }
        if linalg::hermiticity_defect(&matrix) > STATE_TOL {
            return Err(Error::NumericalFailure("density matrix is not Hermitian".into()));
        }
        let eig = linalg::eig_hermitian(&matrix)?;
        let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
        if min < -STATE_TOL {
            return Err(Error::NumericalFailure(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::NumericalFailure(format!("density matrix has trace {tr}")));
        }
        Ok(Self { matrix })
    }

    /// Euclidean projection of the Hermitian part of `matrix` onto the set of
    /// density matrices (eigenvalues projected onto the probability simplex).
    pub fn project(matrix: &ComplexMatrix) -> Result<Self> {
        let eig = linalg::eig_hermitian(matrix)?;
        let probs = project_to_simplex(&eig.eigenvalues);
        let idx: Vec<usize> = (0..probs.len()).collect();
        let mut m = eig.reconstruct_from(&idx, &probs);
        m = linalg::hermitian_part(&m);
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        linalg::eig_hermitian(&self.matrix)
            .map(|e| e.eigenvalues.iter().filter(|l| **l > tol).count())
            .unwrap_or(0)
    }
}

/// Euclidean projection of `v` onto `{p : p ≥ 0, Σ p = 1}`, preserving order.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `n` Hermitian `d x d` blocks stacked into an `nd x d` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSignal {
    d: usize,
    blocks: Vec<ComplexMatrix>,
}

impl BlockSignal {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            d,
            blocks: vec![ComplexMatrix::zeros(d, d); n],
        }
    }

    pub fn from_blocks(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        let d = blocks.first().map(|b| b.nrows()).unwrap_or(0);
        if blocks.iter().any(|b| b.shape() != (d, d)) {
            return Err(Error::dim("all blocks must be square with equal size"));
        }
        Ok(Self { d, blocks })
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self, k: usize) -> &ComplexMatrix {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut ComplexMatrix {
        &mut self.blocks[k]
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ComplexMatrix] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<ComplexMatrix> {
        self.blocks
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n() == other.n() && self.d == other.d
    }

    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(linalg::frobenius_norm).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.block_norms().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Blockwise Hilbert-Schmidt inner product.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if !self.same_shape(other) {
            return Err(Error::dim("block signals differ in shape"));
        }
        let mut acc = ZERO;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            acc += linalg::frobenius_inner(a, b)?;
        }
        Ok(acc)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += b.scale(alpha);
        }
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::dim("block signals differ in shape"));
        }
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::frobenius_norm(&(a - b)).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Indices of blocks with Frobenius norm above `tol`.
    pub fn nonzero_blocks(&self, tol: f64) -> Vec<usize> {
        self.block_norms()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > tol)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(linalg::is_finite)
    }

    /// Block traces, the calibration read-out for signals of the form `ξ_k x_k`.
    pub fn block_traces(&self) -> CalibrationVector {
        CalibrationVector::new(self.blocks.iter().map(|b| linalg::trace(b).re).collect())
    }
}

/// How the non-zero calibration coefficients of an instance are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum XiModel {
    /// Uniform support of size `s`, entries `N(0, 1)`.
    GaussianUnit,
    /// `ξ_0 = 1` plus `s - 1` entries `scale * N(0, 1)` on a uniform support.
    LeadingOneScaled { scale: f64 },
    /// `ξ_0 = 1` plus `s - 1` entries `N(mean, std²)` on a uniform support.
    ShiftedNormal { mean: f64, std: f64 },
}

impl XiModel {
    pub fn has_leading_one(&self) -> bool {
        !matches!(self, XiModel::GaussianUnit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub r: usize,
    pub xi_model: XiModel,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s < 1 || self.s > self.n {
            return Err(Error::config("instance.s", format!("need 1 <= s <= n = {}", self.n)));
        }
        if self.r < 1 || self.r > self.d {
            return Err(Error::config("instance.r", format!("need 1 <= r <= d = {}", self.d)));
        }
        match self.xi_model {
            XiModel::ShiftedNormal { std, .. } if !(std >= 0.0) => {
                Err(Error::config("instance.xi_model.std", "must be non-negative"))
            }
            XiModel::LeadingOneScaled { scale } if !scale.is_finite() => {
                Err(Error::config("instance.xi_model.scale", "must be finite"))
            }
            _ => Ok(()),
        }
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// Haar-random `d x r` isometry (orthonormal columns) by Gram-Schmidt on
/// complex Gaussian columns.
pub fn haar_isometry<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> ComplexMatrix {
    let mut v = ComplexMatrix::from_fn(d, r, |_, _| complex_gaussian(rng));
    for j in 0..r {
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for k in 0..j {
                let proj: Complex64 = v.column(k).dotc(&v.column(j));
                let ck = v.column(k).clone_owned();
                let mut cj = v.column_mut(j);
                cj -= ck * proj;
            }
        }
        let norm = v.column(j).norm();
        v.column_mut(j).unscale_mut(norm);
    }
    v
}

pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let psi = haar_isometry(d, 1, rng);
    let matrix = &psi * psi.adjoint();
    DensityMatrix {
        matrix: linalg::hermitian_part(&matrix),
    }
}

/// Rank-`r` state with Haar eigenvectors and flat spectrum `1/r`.
pub fn random_rank_r_state<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> DensityMatrix {
    let r = r.clamp(1, d.max(1));
    let spectrum = vec![1.0 / r as f64; r];
    random_state_with_spectrum(d, &spectrum, rng).expect("flat spectrum is a valid distribution")
}

/// State with Haar eigenvectors and the given spectrum (non-negative, summing to one).
pub fn random_state_with_spectrum<R: Rng + ?Sized>(
    d: usize,
    spectrum: &[f64],
    rng: &mut R,
) -> Result<DensityMatrix> {
    let r = spectrum.len();
    if r == 0 || r > d {
        return Err(Error::dim(format!("spectrum of length {r} for dimension {d}")));
    }
    let total: f64 = spectrum.iter().sum();
    if spectrum.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::NumericalFailure("spectrum must be a probability vector".into()));
    }
    let u = haar_isometry(d, r, rng);
    let lambda = ComplexMatrix::from_diagonal(&DVector::from_iterator(
        r,
        spectrum.iter().map(|&p| Complex64::new(p, 0.0)),
    ));
    let matrix = &u * lambda * u.adjoint();
    Ok(DensityMatrix {
        matrix: linalg::hermitian_part(&matrix),
    })
}

pub fn random_calibration<R: Rng + ?Sized>(spec: &InstanceSpec, rng: &mut R) -> CalibrationVector {
    let n = spec.n;
    let s = spec.s.min(n);
    let mut xi = CalibrationVector::zeros(n);
    match spec.xi_model {
        XiModel::GaussianUnit => {
            let mut support = rand::seq::index::sample(rng, n, s).into_vec();
            support.sort_unstable();
            for k in support {
                xi.values[k] = StandardNormal.sample(rng);
            }
        }
        XiModel::LeadingOneScaled { .. } | XiModel::ShiftedNormal { .. } => {
            if n == 0 {
                return xi;
            }
            xi.values[0] = 1.0;
            let extra = s.saturating_sub(1);
            let mut support: Vec<usize> = rand::seq::index::sample(rng, n - 1, extra)
                .into_iter()
                .map(|k| k + 1)
                .collect();
            support.sort_unstable();
            for k in support {
                xi.values[k] = match spec.xi_model {
                    XiModel::LeadingOneScaled { scale } => {
                        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                    }
                    XiModel::ShiftedNormal { mean, std } => {
                        Normal::new(mean, std).expect("validated std").sample(rng)
                    }
                    XiModel::GaussianUnit => unreachable!(),
                };
            }
        }
    }
    xi
}

/// Lifted signal `ξ ⊗ ρ`: block `k` is `ξ_k ρ`.
pub fn assemble_signal(xi: &CalibrationVector, rho: &DensityMatrix) -> BlockSignal {
    BlockSignal {
        d: rho.dim(),
        blocks: xi.values.iter().map(|&v| rho.matrix().scale(v)).collect(),
    }
}

/// Read a state and calibration vector off a block signal.
///
/// The state is the trace-normalized reference block projected onto the
/// density matrices; `ξ̂_k` is the trace of block `k`.
pub fn extract_estimate(
    x: &BlockSignal,
    reference_block: usize,
) -> Result<(DensityMatrix, CalibrationVector)> {
    if reference_block >= x.n() {
        return Err(Error::dim(format!(
            "reference block {reference_block} out of range for {} blocks",
            x.n()
        )));
    }
    let reference = x.block(reference_block);
    let tr = linalg::trace(reference).re;
    if tr.abs() < 1e-12 {
        return Err(Error::DegenerateEstimate { trace: tr });
    }
    let state = DensityMatrix::project(&reference.unscale(tr))?;
    Ok((state, x.block_traces()))
}

/// `|0⟩⟨0|` in dimension `d`.
pub fn ground_state(d: usize) -> DensityMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    m[(0, 0)] = ONE;
    DensityMatrix { matrix: m }
}
