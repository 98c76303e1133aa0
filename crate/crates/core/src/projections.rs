//! Hard-thresholding projections onto the structured signal sets.
//!
//! * [`hard_threshold_vector`]: nearest `s`-sparse vector.
//! * [`project_rank`]: rank-`r` truncation of a Hermitian block in one of
//!   three [`RankProjectionMode`]s.
//! * [`project_omega_hat`]: blockwise rank truncation followed by keeping the
//!   `s` blocks of largest Frobenius norm.
//! * [`tangent_space_project`]: blockwise projection of a search direction
//!   onto the tangent space of the fixed-rank manifold at the current iterate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::parallel;
use crate::signals::BlockSignal;

/// Blocks with Frobenius norm at or below this are treated as vanishing.
pub const VANISHING_BLOCK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankProjectionMode {
    /// Keep the `r` largest non-negative eigenvalues.
    Psd,
    /// Nearest of `P_psd(x)` and `-P_psd(-x)`: the metric projection onto
    /// `{c·ρ : c ∈ ℝ, ρ ⪰ 0, rank ρ ≤ r}`.
    #[default]
    SignedPsd,
    /// Keep the `r` eigenvalues of largest magnitude, any sign.
    PlainRank,
}

/// Indices of the `s` entries of largest magnitude; ties go to the lower index.
pub fn top_s_indices(values: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs()));
    order.truncate(s);
    order.sort_unstable();
    order
}

pub fn hard_threshold_vector(v: &[f64], s: usize) -> Vec<f64> {
    if s >= v.len() {
        return v.to_vec();
    }
    let mut out = vec![0.0; v.len()];
    for i in top_s_indices(v, s) {
        out[i] = v[i];
    }
    out
}

/// A rank-truncated Hermitian block in factored form `U diag(λ) U†`.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    /// `d x k` matrix with orthonormal columns spanning the range.
    pub basis: ComplexMatrix,
    pub values: Vec<f64>,
}

impl LowRankBlock {
    fn empty(d: usize) -> Self {
        Self {
            basis: ComplexMatrix::zeros(d, 0),
            values: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let d = self.basis.nrows();
        let mut out = ComplexMatrix::zeros(d, d);
        for (k, &lambda) in self.values.iter().enumerate() {
            let u = self.basis.column(k);
            out.gerc(Complex64::new(lambda, 0.0), &u, &u, linalg::ONE);
        }
        linalg::hermitian_part(&out)
    }
}

fn select_eigenpairs(eigenvalues: &[f64], r: usize, mode: RankProjectionMode) -> Vec<usize> {
    let positive: Vec<usize> = (0..eigenvalues.len())
        .filter(|&k| eigenvalues[k] > 0.0)
        .take(r)
        .collect();
    match mode {
        RankProjectionMode::Psd => positive,
        RankProjectionMode::SignedPsd => {
            let negative: Vec<usize> = (0..eigenvalues.len())
                .rev()
                .filter(|&k| eigenvalues[k] < 0.0)
                .take(r)
                .collect();
            let energy = |idx: &[usize]| idx.iter().map(|&k| eigenvalues[k].powi(2)).sum::<f64>();
            // removing more energy means a closer projection
            if energy(&negative) > energy(&positive) {
                negative
            } else {
                positive
            }
        }
        RankProjectionMode::PlainRank => {
            let mut order: Vec<usize> = (0..eigenvalues.len()).filter(|&k| eigenvalues[k] != 0.0).collect();
            order.sort_by(|&i, &j| eigenvalues[j].abs().total_cmp(&eigenvalues[i].abs()));
            order.truncate(r);
            order
        }
    }
}

/// Rank projection of a Hermitian block, returned in factored form.
pub fn project_rank_factored(x: &ComplexMatrix, r: usize, mode: RankProjectionMode) -> Result<LowRankBlock> {
    let d = x.nrows();
    if r == 0 || linalg::frobenius_norm(x) == 0.0 {
        return Ok(LowRankBlock::empty(d));
    }
    let eig = linalg::eig_hermitian(x)?;
    let keep = select_eigenpairs(&eig.eigenvalues, r, mode);
    let basis = ComplexMatrix::from_fn(d, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    let values = keep.iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok(LowRankBlock { basis, values })
}

pub fn project_rank(x: &ComplexMatrix, r: usize, mode: RankProjectionMode) -> Result<ComplexMatrix> {
    Ok(project_rank_factored(x, r, mode)?.to_matrix())
}

/// Result of the hierarchical projection, with the factors of the retained
/// blocks (`None` for zeroed blocks).
#[derive(Debug, Clone)]
pub struct ProjectedSignal {
    pub signal: BlockSignal,
    pub factors: Vec<Option<LowRankBlock>>,
}

/// Hierarchical projection restricted to the blocks flagged in `allowed`
/// (all blocks when `None`). Disallowed blocks are zeroed before selection.
pub fn project_omega_hat_restricted(
    x: &BlockSignal,
    s: usize,
    r: usize,
    mode: RankProjectionMode,
    allowed: Option<&[bool]>,
) -> Result<ProjectedSignal> {
    let n = x.n();
    let d = x.d();
    if let Some(mask) = allowed {
        if mask.len() != n {
            return Err(Error::dim(format!("support mask of length {} for {n} blocks", mask.len())));
        }
    }
    let is_allowed = |k: usize| allowed.is_none_or(|m| m[k]);
    let projected: Vec<Result<Option<LowRankBlock>>> = parallel::map_range(n, |k| {
        if is_allowed(k) {
            project_rank_factored(x.block(k), r, mode).map(Some)
        } else {
            Ok(None)
        }
    });
    let projected: Vec<Option<LowRankBlock>> = projected.into_iter().collect::<Result<_>>()?;
    let norms: Vec<f64> = projected
        .iter()
        .map(|p| p.as_ref().map_or(0.0, LowRankBlock::frobenius_norm))
        .collect();
    let keep = top_s_indices(&norms, s.min(n));
    let mut retained = vec![false; n];
    for k in keep {
        retained[k] = norms[k] > 0.0;
    }
    let mut blocks = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for (k, p) in projected.into_iter().enumerate() {
        match p {
            Some(f) if retained[k] => {
                blocks.push(f.to_matrix());
                factors.push(Some(f));
            }
            _ => {
                blocks.push(ComplexMatrix::zeros(d, d));
                factors.push(None);
            }
        }
    }
    Ok(ProjectedSignal {
        signal: BlockSignal::from_blocks(blocks)?,
        factors,
    })
}

pub fn project_omega_hat(x: &BlockSignal, s: usize, r: usize, mode: RankProjectionMode) -> Result<BlockSignal> {
    Ok(project_omega_hat_restricted(x, s, r, mode, None)?.signal)
}

/// `g - (1 - P) g (1 - P)` with `P = U U†` for orthonormal `basis = U`.
pub fn tangent_project_block(basis: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
    if basis.ncols() == 0 {
        return ComplexMatrix::zeros(g.nrows(), g.ncols());
    }
    let ut_g = basis.adjoint() * g; // U† g
    let g_u = g * basis; // g U
    let core = &ut_g * basis; // U† g U
    let pg = basis * &ut_g;
    let gp = &g_u * basis.adjoint();
    let pgp = basis * core * basis.adjoint();
    pg + gp - pgp
}

/// Blockwise tangent-space projection at `x`. Blocks where `x` vanishes
/// pass `g` through unchanged.
pub fn tangent_space_project(x: &BlockSignal, g: &BlockSignal, r: usize) -> Result<BlockSignal> {
    if !x.same_shape(g) {
        return Err(Error::dim("tangent projection of differently shaped signals"));
    }
    let blocks: Vec<Result<ComplexMatrix>> = parallel::map_range(x.n(), |k| {
        let xk = x.block(k);
        if linalg::frobenius_norm(xk) <= VANISHING_BLOCK_TOL {
            return Ok(g.block(k).clone());
        }
        let basis = range_basis(xk, r)?;
        Ok(tangent_project_block(&basis, g.block(k)))
    });
    BlockSignal::from_blocks(blocks.into_iter().collect::<Result<_>>()?)
}

/// Eigenvectors of the `r` eigenvalues of largest magnitude.
pub fn range_basis(x: &ComplexMatrix, r: usize) -> Result<ComplexMatrix> {
    let eig = linalg::eig_hermitian(x)?;
    let d = x.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
    order.truncate(r.min(d));
    Ok(ComplexMatrix::from_fn(d, order.len(), |i, j| eig.eigenvectors[(i, order[j])]))
}
