//! Recovery algorithms.
//!
//! [`sdt`] is projected gradient descent over the set of `s`-block-sparse
//! signals with rank-`r` blocks:
//!
//! ```text
//! X ← P_Ω̂( X + diag(μ) P_T( A†(y - A(X)) ) ),    X⁰ = 0
//! ```
//!
//! with one step width per block. [`dt`], [`informed_dt`],
//! [`standard_tomography`] and [`iht_low_rank`] are configurations of the same
//! loop. [`als_bt`] alternates a sparse-vector IHT for `ξ` with a low-rank IHT
//! for `ρ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, coord_len, ComplexMatrix};
use crate::measurements::MeasurementEnsemble;
use crate::projections::{
    hard_threshold_vector, project_omega_hat_restricted, tangent_space_project, top_s_indices, RankProjectionMode,
};
use crate::signals::{random_rank_r_state, BlockSignal, CalibrationVector, DensityMatrix};

/// Step-width denominators below this disable the block for one iteration.
const STEP_DENOMINATOR_TOL: f64 = 1e-14;
const STALL_WINDOW: usize = 10;
const STALL_TOL: f64 = 1e-12;
/// A tangent-space step that keeps more than this fraction of the residual
/// is compared against a full-gradient step.
const SAFEGUARD_RATIO: f64 = 0.99;
/// Halvings tried when an adaptive step increases the residual.
const MAX_BACKTRACK: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// `μ_k = ‖G_k‖² / ‖A(G_k)‖²` with `G_k` embedded at block `k`.
    Adaptive,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdtConfig {
    pub s: usize,
    pub r: usize,
    pub max_iters: usize,
    pub gamma_break: f64,
    pub step_mode: StepMode,
    pub use_tangent_projection: bool,
    pub rank_mode: RankProjectionMode,
    /// Fixed block support; every other block is held at zero.
    pub support_restriction: Option<Vec<usize>>,
    pub record_trace: bool,
}

impl Default for SdtConfig {
    fn default() -> Self {
        Self {
            s: 1,
            r: 1,
            max_iters: 600,
            gamma_break: 1e-5,
            step_mode: StepMode::Adaptive,
            use_tangent_projection: true,
            rank_mode: RankProjectionMode::SignedPsd,
            support_restriction: None,
            record_trace: false,
        }
    }
}

impl SdtConfig {
    pub fn new(s: usize, r: usize) -> Self {
        Self { s, r, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_break > 0.0) {
            return Err(Error::config("gamma_break", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if self.s == 0 || self.r == 0 {
            return Err(Error::config("s/r", "model orders must be at least 1"));
        }
        if let StepMode::Constant(mu) = self.step_mode {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::config("step_mode", "constant step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsConfig {
    pub s: usize,
    pub r: usize,
    pub max_iters: usize,
    pub gamma_break: f64,
    pub reinit_period: usize,
    pub max_reinits: usize,
    /// Budget of the sparse-vector IHT per ξ-step.
    pub xi_iters: usize,
    /// Budget of the low-rank IHT per ρ-step.
    pub rho_iters: usize,
    pub record_trace: bool,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            s: 1,
            r: 1,
            max_iters: 1000,
            gamma_break: 1e-5,
            reinit_period: 50,
            max_reinits: 10,
            xi_iters: 100,
            rho_iters: 20,
            record_trace: false,
        }
    }
}

impl AlsConfig {
    pub fn new(s: usize, r: usize) -> Self {
        Self { s, r, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_break > 0.0) {
            return Err(Error::config("gamma_break", "must be positive"));
        }
        if self.max_iters == 0 || self.xi_iters == 0 || self.rho_iters == 0 {
            return Err(Error::config("max_iters", "iteration budgets must be at least 1"));
        }
        if self.reinit_period == 0 || self.reinit_period > self.max_iters {
            return Err(Error::config("reinit_period", "must lie in 1..=max_iters"));
        }
        if self.s == 0 || self.r == 0 {
            return Err(Error::config("s/r", "model orders must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration-cap",
            Termination::Stalled => "stalled",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum Estimate {
    Signal(BlockSignal),
    StateAndCalibration { state: DensityMatrix, xi: CalibrationVector },
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub estimate: Estimate,
    pub iterations: usize,
    pub reinits: usize,
    pub relative_residual: f64,
    pub termination: Termination,
    pub residual_trace: Option<Vec<f64>>,
}

impl RecoveryReport {
    /// The block-signal estimate of an SDT-family run.
    pub fn signal(&self) -> Option<&BlockSignal> {
        match &self.estimate {
            Estimate::Signal(x) => Some(x),
            Estimate::StateAndCalibration { .. } => None,
        }
    }

    pub fn into_signal(self) -> Option<BlockSignal> {
        match self.estimate {
            Estimate::Signal(x) => Some(x),
            Estimate::StateAndCalibration { .. } => None,
        }
    }
}

fn check_data(y: &[f64], ens: &MeasurementEnsemble) -> Result<f64> {
    if y.len() != ens.m() {
        return Err(Error::dim(format!("data of length {} for {} settings", y.len(), ens.m())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite data".into()));
    }
    Ok(linalg::norm2(y))
}

fn support_mask(cfg: &SdtConfig, n: usize) -> Result<Option<Vec<bool>>> {
    let Some(support) = &cfg.support_restriction else {
        return Ok(None);
    };
    let mut mask = vec![false; n];
    for &k in support {
        if k >= n {
            return Err(Error::config("support_restriction", format!("block {k} out of range for {n} blocks")));
        }
        mask[k] = true;
    }
    Ok(Some(mask))
}

fn residual(y: &[f64], ay: &[f64]) -> Vec<f64> {
    y.iter().zip(ay).map(|(a, b)| a - b).collect()
}

/// One SDT update from `x` (no stopping logic).
pub fn sdt_step(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig, x: &BlockSignal) -> Result<BlockSignal> {
    let mask = support_mask(cfg, ens.n())?;
    let xc = ens.signal_coords(x)?;
    let r = residual(y, &ens.apply_coords(&xc));
    step_from_residual(ens, cfg, mask.as_deref(), x, &r)
}

/// Gradient direction and per-block step widths at one iterate.
struct Direction {
    grad: Vec<f64>,
    mu: Vec<f64>,
}

fn direction(
    ens: &MeasurementEnsemble,
    cfg: &SdtConfig,
    mask: Option<&[bool]>,
    x: &BlockSignal,
    r: &[f64],
) -> Result<Direction> {
    let n = ens.n();
    let dd = coord_len(ens.d());
    let mut grad = ens.adjoint_coords(r);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite gradient".into()));
    }
    if let Some(mask) = mask {
        for (k, allowed) in mask.iter().enumerate() {
            if !allowed {
                grad[k * dd..(k + 1) * dd].fill(0.0);
            }
        }
    }
    if cfg.use_tangent_projection {
        let g = tangent_space_project(x, &ens.coords_signal(&grad), cfg.r)?;
        grad = ens.signal_coords(&g)?;
    }
    let mu = (0..n)
        .map(|k| {
            let gk = &grad[k * dd..(k + 1) * dd];
            match cfg.step_mode {
                StepMode::Constant(mu) => mu,
                StepMode::Adaptive => {
                    let num = linalg::dot(gk, gk);
                    let agk = ens.apply_block_coords(k, gk);
                    let den = linalg::dot(&agk, &agk);
                    if den < STEP_DENOMINATOR_TOL {
                        0.0
                    } else {
                        num / den
                    }
                }
            }
        })
        .collect();
    Ok(Direction { grad, mu })
}

fn take_step(
    ens: &MeasurementEnsemble,
    cfg: &SdtConfig,
    mask: Option<&[bool]>,
    x: &BlockSignal,
    dir: &Direction,
    damping: f64,
) -> Result<BlockSignal> {
    let dd = coord_len(ens.d());
    let mut z = ens.signal_coords(x)?;
    for (k, mu) in dir.mu.iter().enumerate() {
        let step = damping * mu;
        for (zi, gi) in z[k * dd..(k + 1) * dd].iter_mut().zip(&dir.grad[k * dd..(k + 1) * dd]) {
            *zi += step * gi;
        }
    }
    let projected = project_omega_hat_restricted(&ens.coords_signal(&z), cfg.s, cfg.r, cfg.rank_mode, mask)?;
    if !projected.signal.is_finite() {
        return Err(Error::NumericalFailure("non-finite iterate".into()));
    }
    Ok(projected.signal)
}

fn step_from_residual(
    ens: &MeasurementEnsemble,
    cfg: &SdtConfig,
    mask: Option<&[bool]>,
    x: &BlockSignal,
    r: &[f64],
) -> Result<BlockSignal> {
    let dir = direction(ens, cfg, mask, x, r)?;
    take_step(ens, cfg, mask, x, &dir, 1.0)
}

pub fn sdt(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig) -> Result<RecoveryReport> {
    sdt_from(y, ens, cfg, BlockSignal::zeros(ens.n(), ens.d()))
}

/// SDT started from `x0` instead of zero.
pub fn sdt_from(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig, x0: BlockSignal) -> Result<RecoveryReport> {
    cfg.validate()?;
    let y_norm = check_data(y, ens)?;
    let mask = support_mask(cfg, ens.n())?;
    if !x0.same_shape(&BlockSignal::zeros(ens.n(), ens.d())) {
        return Err(Error::dim("initial iterate does not match the ensemble"));
    }
    if y_norm == 0.0 {
        return Ok(RecoveryReport {
            estimate: Estimate::Signal(BlockSignal::zeros(ens.n(), ens.d())),
            iterations: 1,
            reinits: 0,
            relative_residual: 0.0,
            termination: Termination::Converged,
            residual_trace: cfg.record_trace.then(|| vec![0.0]),
        });
    }

    let evaluate = |x: &BlockSignal| -> Result<(Vec<f64>, f64)> {
        let r = residual(y, &ens.apply(x)?);
        let rel = linalg::norm2(&r) / y_norm;
        if !rel.is_finite() {
            return Err(Error::NumericalFailure("non-finite residual".into()));
        }
        Ok((r, rel))
    };
    let full_gradient = SdtConfig {
        use_tangent_projection: false,
        ..cfg.clone()
    };

    let mut x = x0;
    let (mut r, mut rel) = evaluate(&x)?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, BlockSignal)> = None;
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    loop {
        trace.push(rel);
        if best.as_ref().is_none_or(|(b, _)| rel < *b) {
            best = Some((rel, x.clone()));
        }
        if rel <= cfg.gamma_break {
            termination = Termination::Converged;
            break;
        }
        if trace.len() > STALL_WINDOW && (rel - trace[trace.len() - 1 - STALL_WINDOW]).abs() < STALL_TOL {
            termination = Termination::Stalled;
            break;
        }
        if iterations == cfg.max_iters {
            break;
        }
        let mut dir = direction(ens, cfg, mask.as_deref(), &x, &r)?;
        let mut next = take_step(ens, cfg, mask.as_deref(), &x, &dir, 1.0)?;
        let mut eval = evaluate(&next)?;
        if cfg.use_tangent_projection && eval.1 > SAFEGUARD_RATIO * rel {
            // a block whose range is nearly orthogonal to its target cannot
            // rotate within the tangent space; retry with the full gradient
            let alt_dir = direction(ens, &full_gradient, mask.as_deref(), &x, &r)?;
            let alt = take_step(ens, cfg, mask.as_deref(), &x, &alt_dir, 1.0)?;
            let alt_eval = evaluate(&alt)?;
            if alt_eval.1 < eval.1 {
                (dir, next, eval) = (alt_dir, alt, alt_eval);
            }
        }
        if cfg.step_mode == StepMode::Adaptive && eval.1 > rel {
            // per-block widths can overshoot jointly when block responses
            // overlap; shrink them together until the residual stops growing
            let mut damping = 1.0;
            for _ in 0..MAX_BACKTRACK {
                damping *= 0.5;
                let cand = take_step(ens, cfg, mask.as_deref(), &x, &dir, damping)?;
                let cand_eval = evaluate(&cand)?;
                let improved = cand_eval.1 < eval.1;
                if improved {
                    (next, eval) = (cand, cand_eval);
                }
                if eval.1 <= rel {
                    break;
                }
            }
        }
        x = next;
        (r, rel) = eval;
        iterations += 1;
    }
    let (relative_residual, estimate) = best.expect("at least one residual evaluated");
    Ok(RecoveryReport {
        estimate: Estimate::Signal(estimate),
        iterations,
        reinits: 0,
        relative_residual,
        termination,
        residual_trace: cfg.record_trace.then_some(trace),
    })
}

/// SDT without the sparsity constraint (`s = n`) and with plain rank truncation.
pub fn dt(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig) -> Result<RecoveryReport> {
    let cfg = SdtConfig {
        s: ens.n(),
        rank_mode: RankProjectionMode::PlainRank,
        ..cfg.clone()
    };
    sdt(y, ens, &cfg)
}

/// DT restricted to a known block support.
pub fn informed_dt(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig, support: &[usize]) -> Result<RecoveryReport> {
    let cfg = SdtConfig {
        s: ens.n(),
        rank_mode: RankProjectionMode::PlainRank,
        support_restriction: Some(support.to_vec()),
        ..cfg.clone()
    };
    sdt(y, ens, &cfg)
}

/// Low-rank tomography: SDT on a single-block ensemble.
pub fn standard_tomography(y: &[f64], ens: &MeasurementEnsemble, cfg: &SdtConfig) -> Result<RecoveryReport> {
    if ens.n() != 1 {
        return Err(Error::dim(format!("standard tomography needs one block, got {}", ens.n())));
    }
    let cfg = SdtConfig {
        s: 1,
        support_restriction: None,
        ..cfg.clone()
    };
    sdt(y, ens, &cfg)
}

/// Low-rank IHT on a single-block ensemble; returns the recovered matrix.
pub fn iht_low_rank(
    y: &[f64],
    ens: &MeasurementEnsemble,
    r: usize,
    rank_mode: RankProjectionMode,
    budget: usize,
) -> Result<ComplexMatrix> {
    iht_low_rank_from(y, ens, r, rank_mode, budget, None).map(|(x, _)| x)
}

/// [`iht_low_rank`] with an optional warm start; also returns the relative residual.
pub fn iht_low_rank_from(
    y: &[f64],
    ens: &MeasurementEnsemble,
    r: usize,
    rank_mode: RankProjectionMode,
    budget: usize,
    x0: Option<&ComplexMatrix>,
) -> Result<(ComplexMatrix, f64)> {
    if ens.n() != 1 {
        return Err(Error::dim(format!("low-rank IHT needs one block, got {}", ens.n())));
    }
    let cfg = SdtConfig {
        s: 1,
        r,
        rank_mode,
        max_iters: budget,
        gamma_break: 1e-12,
        ..SdtConfig::default()
    };
    let start = match x0 {
        Some(x) => BlockSignal::from_blocks(vec![x.clone()])?,
        None => BlockSignal::zeros(1, ens.d()),
    };
    let report = sdt_from(y, ens, &cfg, start)?;
    let rel = report.relative_residual;
    let x = report.into_signal().expect("SDT returns a signal").into_blocks().remove(0);
    Ok((x, rel))
}

fn matvec(a: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    a.chunks_exact(cols).map(|row| linalg::dot(row, x)).collect()
}

fn matvec_t(a: &[f64], cols: usize, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &ri) in a.chunks_exact(cols).zip(r) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += ri * v;
        }
    }
    out
}

fn residual_norm(y: &[f64], a: &[f64], cols: usize, x: &[f64]) -> f64 {
    linalg::norm2(&residual(y, &matvec(a, cols, x)))
}

/// Least squares restricted to the columns in `support`.
fn least_squares_on(y: &[f64], a: &[f64], cols: usize, support: &[usize]) -> Option<Vec<f64>> {
    if support.is_empty() {
        return None;
    }
    let rows = y.len();
    let sub = DMatrix::from_fn(rows, support.len(), |i, j| a[i * cols + support[j]]);
    let coef = sub.svd(true, true).solve(&DVector::from_column_slice(y), 1e-12).ok()?;
    let mut x = vec![0.0; cols];
    for (j, &k) in support.iter().enumerate() {
        x[k] = coef[j];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Normalized IHT for `y ≈ A x` with `x` `s`-sparse; `a` is row-major with
/// `cols` columns. Returns the best iterate by residual, after a least-squares
/// refit on its support.
pub fn iht_sparse_vector(y: &[f64], a: &[f64], cols: usize, s: usize, budget: usize) -> Vec<f64> {
    let mut x = vec![0.0; cols];
    if cols == 0 || linalg::norm2(y) == 0.0 {
        return x;
    }
    debug_assert_eq!(a.len(), y.len() * cols);
    let mut best = (residual_norm(y, a, cols, &x), x.clone());
    for _ in 0..budget {
        let r = residual(y, &matvec(a, cols, &x));
        let g = matvec_t(a, cols, &r);
        let support: Vec<usize> = if x.iter().any(|v| *v != 0.0) {
            (0..cols).filter(|&k| x[k] != 0.0).collect()
        } else {
            top_s_indices(&g, s)
        };
        let mut gs = vec![0.0; cols];
        for &k in &support {
            gs[k] = g[k];
        }
        let ags = matvec(a, cols, &gs);
        let den = linalg::dot(&ags, &ags);
        if den < STEP_DENOMINATOR_TOL {
            break;
        }
        let mu = linalg::dot(&gs, &gs) / den;
        let z: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + mu * gi).collect();
        x = hard_threshold_vector(&z, s);
        let res = residual_norm(y, a, cols, &x);
        if !res.is_finite() {
            break;
        }
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= 1e-14 * linalg::norm2(y) {
            break;
        }
    }
    let support: Vec<usize> = (0..cols).filter(|&k| best.1[k] != 0.0).collect();
    if let Some(refit) = least_squares_on(y, a, cols, &support) {
        let res = residual_norm(y, a, cols, &refit);
        if res < best.0 {
            best = (res, refit);
        }
    }
    best.1
}

fn als_estimate(rho: &ComplexMatrix, xi: &[f64]) -> Result<(DensityMatrix, CalibrationVector)> {
    let t = linalg::trace(rho).re;
    if !(t.abs() > 1e-12) {
        return Err(Error::DegenerateEstimate { trace: t });
    }
    let state = DensityMatrix::project(&rho.unscale(t))?;
    Ok((state, CalibrationVector::new(xi.iter().map(|v| v * t).collect())))
}

/// Alternating least squares over `(ξ, ρ)` with periodic random restarts.
pub fn als_bt<R: Rng + ?Sized>(
    y: &[f64],
    ens: &MeasurementEnsemble,
    cfg: &AlsConfig,
    rng: &mut R,
) -> Result<RecoveryReport> {
    cfg.validate()?;
    let y_norm = check_data(y, ens)?;
    let (n, d) = (ens.n(), ens.d());
    let mut rho = random_rank_r_state(d, cfg.r, rng).into_matrix();
    if y_norm == 0.0 {
        return Ok(RecoveryReport {
            estimate: Estimate::StateAndCalibration {
                state: DensityMatrix::new(rho)?,
                xi: CalibrationVector::zeros(n),
            },
            iterations: 1,
            reinits: 0,
            relative_residual: 0.0,
            termination: Termination::Converged,
            residual_trace: cfg.record_trace.then(|| vec![0.0]),
        });
    }

    let mut trace = Vec::new();
    let mut best: Option<(f64, ComplexMatrix, Vec<f64>)> = None;
    let mut termination = Termination::IterationCap;
    let mut reinits = 0;
    let mut since_restart = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let responses = ens.block_responses(&rho)?;
        let xi = iht_sparse_vector(y, &responses, n, cfg.s, cfg.xi_iters);
        let rel = if xi.iter().all(|v| *v == 0.0) {
            1.0
        } else {
            let combined = ens.combine(&xi)?;
            let (next, rel) =
                iht_low_rank_from(y, &combined, cfg.r, RankProjectionMode::Psd, cfg.rho_iters, Some(&rho))?;
            rho = next;
            rel
        };
        trace.push(rel);
        if best.as_ref().is_none_or(|(b, _, _)| rel < *b) {
            best = Some((rel, rho.clone(), xi));
        }
        if rel <= cfg.gamma_break {
            termination = Termination::Converged;
            break;
        }
        since_restart += 1;
        if since_restart >= cfg.reinit_period {
            if reinits >= cfg.max_reinits {
                break;
            }
            rho = random_rank_r_state(d, cfg.r, rng).into_matrix();
            reinits += 1;
            since_restart = 0;
        }
    }
    let (relative_residual, rho, xi) = best.expect("at least one iteration");
    let (state, xi) = als_estimate(&rho, &xi)?;
    Ok(RecoveryReport {
        estimate: Estimate::StateAndCalibration { state, xi },
        iterations,
        reinits,
        relative_residual,
        termination,
        residual_trace: cfg.record_trace.then_some(trace),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{gue_ensemble, EnsembleKind, MeasurementEnsemble, Pauli, PauliString, PauliTerm};
    use crate::rng::rng_from_seed;
    use crate::signals::{assemble_signal, random_pure_state, random_rank_r_state};
    use rand_distr::{Distribution, StandardNormal};

    fn complete_pauli_ensemble(q: usize) -> MeasurementEnsemble {
        let mut strings = vec![vec![]];
        for _ in 0..q {
            strings = strings
                .into_iter()
                .flat_map(|s: Vec<Pauli>| {
                    Pauli::ALL.into_iter().map(move |p| {
                        let mut t = s.clone();
                        t.push(p);
                        t
                    })
                })
                .collect();
        }
        let block = strings
            .into_iter()
            .map(|s| vec![PauliTerm { weight: 1.0, string: PauliString::new(s) }])
            .collect();
        MeasurementEnsemble::from_pauli(EnsembleKind::SubsampledPauli, q, vec![block], None).unwrap()
    }

    fn planted(n: usize, d: usize, support: &[usize], seed: u64) -> BlockSignal {
        let mut rng = rng_from_seed(seed);
        let rho = random_pure_state(d, &mut rng);
        let mut xi = vec![0.0; n];
        for &k in support {
            xi[k] = rng.random_range(0.5..1.5);
        }
        assemble_signal(&CalibrationVector::new(xi), &rho)
    }

    #[test]
    fn zero_data_gives_zero() {
        let ens = gue_ensemble(3, 10, 2, &mut rng_from_seed(1));
        let y = vec![0.0; 10];
        for report in [
            sdt(&y, &ens, &SdtConfig::new(1, 1)).unwrap(),
            dt(&y, &ens, &SdtConfig::new(1, 1)).unwrap(),
            standard_tomography(&y, &ens.block_ensemble(0), &SdtConfig::new(1, 1)).unwrap(),
        ] {
            assert_eq!(report.signal().unwrap().frobenius_norm(), 0.0);
            assert_eq!(report.termination, Termination::Converged);
            assert_eq!(report.iterations, 1);
        }
        let als = als_bt(&y, &ens, &AlsConfig::new(1, 1), &mut rng_from_seed(2)).unwrap();
        match als.estimate {
            Estimate::StateAndCalibration { xi, .. } => assert!(xi.values.iter().all(|v| *v == 0.0)),
            _ => panic!("ALS returns a state"),
        }
        assert_eq!(iht_sparse_vector(&y[..4], &[1.0; 8], 2, 1, 10), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let ens = gue_ensemble(2, 5, 2, &mut rng_from_seed(1));
        assert!(matches!(sdt(&[1.0; 4], &ens, &SdtConfig::new(1, 1)), Err(Error::Dimension(_))));
        assert!(matches!(
            sdt(&[1.0, f64::NAN, 0.0, 0.0, 0.0], &ens, &SdtConfig::new(1, 1)),
            Err(Error::NumericalFailure(_))
        ));
        let bad = SdtConfig { gamma_break: 0.0, ..SdtConfig::new(1, 1) };
        assert!(matches!(sdt(&[1.0; 5], &ens, &bad), Err(Error::Config { .. })));
        assert!(standard_tomography(&[1.0; 5], &ens, &SdtConfig::new(1, 1)).is_err());
    }

    #[test]
    fn recovers_planted_sparse_signal() {
        let (n, d, m) = (6, 4, 200);
        let x = planted(n, d, &[1, 4], 3);
        let ens = gue_ensemble(n, m, d, &mut rng_from_seed(4));
        let y = ens.apply(&x).unwrap();
        let report = sdt(&y, &ens, &SdtConfig::new(2, 1)).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        assert!(report.relative_residual <= 1e-5);
        assert!(report.signal().unwrap().distance(&x).unwrap() < 1e-3);
    }

    #[test]
    fn fixed_point_at_truth() {
        let x = planted(5, 4, &[0, 3], 5);
        let ens = gue_ensemble(5, 60, 4, &mut rng_from_seed(6));
        let y = ens.apply(&x).unwrap();
        for cfg in [SdtConfig::new(2, 1), SdtConfig { step_mode: StepMode::Constant(1.0), ..SdtConfig::new(2, 1) }] {
            let next = sdt_step(&y, &ens, &cfg, &x).unwrap();
            assert!(next.distance(&x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn dt_is_sdt_with_full_support() {
        let x = planted(4, 3, &[0, 2], 7);
        let ens = gue_ensemble(4, 40, 3, &mut rng_from_seed(8));
        let y = ens.apply(&x).unwrap();
        let cfg = SdtConfig { max_iters: 30, ..SdtConfig::new(2, 1) };
        let a = dt(&y, &ens, &cfg).unwrap();
        let b = sdt(&y, &ens, &SdtConfig { s: 4, rank_mode: RankProjectionMode::PlainRank, ..cfg }).unwrap();
        assert_eq!(a.signal().unwrap(), b.signal().unwrap());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn informed_dt_respects_support() {
        let x = planted(5, 3, &[1, 3], 9);
        let ens = gue_ensemble(5, 30, 3, &mut rng_from_seed(10));
        let y = ens.apply(&x).unwrap();
        let cfg = SdtConfig { max_iters: 20, record_trace: true, ..SdtConfig::new(2, 1) };
        let mask = support_mask(&SdtConfig { support_restriction: Some(vec![1, 3]), ..cfg.clone() }, 5)
            .unwrap()
            .unwrap();
        let mut it = BlockSignal::zeros(5, 3);
        for _ in 0..20 {
            let r = residual(&y, &ens.apply(&it).unwrap());
            let c = SdtConfig { s: 5, rank_mode: RankProjectionMode::PlainRank, ..cfg.clone() };
            it = step_from_residual(&ens, &c, Some(&mask), &it, &r).unwrap();
            for k in [0, 2, 4] {
                assert_eq!(linalg::frobenius_norm(it.block(k)), 0.0);
            }
        }
        let report = informed_dt(&y, &ens, &cfg, &[1, 3]).unwrap();
        let est = report.signal().unwrap();
        for k in [0, 2, 4] {
            assert_eq!(linalg::frobenius_norm(est.block(k)), 0.0);
        }
    }

    #[test]
    fn single_block_paths_agree() {
        let ens = gue_ensemble(1, 30, 3, &mut rng_from_seed(11));
        let rho = random_pure_state(3, &mut rng_from_seed(12));
        let x = BlockSignal::from_blocks(vec![rho.matrix().clone()]).unwrap();
        let y = ens.apply(&x).unwrap();
        let cfg = SdtConfig { gamma_break: 1e-12, max_iters: 80, ..SdtConfig::new(1, 1) };
        let a = sdt(&y, &ens, &cfg).unwrap();
        let b = standard_tomography(&y, &ens, &cfg).unwrap();
        let c = iht_low_rank(&y, &ens, 1, cfg.rank_mode, 80).unwrap();
        assert_eq!(a.signal().unwrap(), b.signal().unwrap());
        assert_eq!(a.signal().unwrap().block(0), &c);
    }

    #[test]
    fn complete_basis_matches_pseudoinverse_oracle() {
        // the Pauli basis is orthogonal with ‖P‖² = d, so the least-squares
        // solution is A†y / d; its rank projection is the oracle
        let ens = complete_pauli_ensemble(2);
        let mut rng = rng_from_seed(13);
        for r in 1..=2 {
            let rho = random_rank_r_state(4, r, &mut rng);
            let x = BlockSignal::from_blocks(vec![rho.matrix().clone()]).unwrap();
            let y = ens.apply(&x).unwrap();
            let ls = ens.adjoint(&y).unwrap().block(0).unscale(4.0);
            let oracle = crate::projections::project_rank(&ls, r, RankProjectionMode::SignedPsd).unwrap();
            let cfg = SdtConfig { gamma_break: 1e-12, ..SdtConfig::new(1, r) };
            let est = standard_tomography(&y, &ens, &cfg).unwrap();
            let diff = est.signal().unwrap().block(0) - oracle;
            assert!(linalg::frobenius_norm(&diff) < 1e-8);
        }
    }

    #[test]
    fn best_iterate_residual_is_trace_minimum() {
        let x = planted(6, 4, &[0, 5], 14);
        let ens = gue_ensemble(6, 50, 4, &mut rng_from_seed(15));
        let y = ens.apply(&x).unwrap();
        let cfg = SdtConfig { max_iters: 40, record_trace: true, ..SdtConfig::new(2, 1) };
        let report = sdt(&y, &ens, &cfg).unwrap();
        let trace = report.residual_trace.as_ref().unwrap();
        assert!(!trace.is_empty());
        let min = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.relative_residual, min);
    }

    #[test]
    fn sparse_iht_identity_and_planted() {
        let id: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let y = vec![0.0, -2.0, 0.0, 0.5];
        assert_eq!(iht_sparse_vector(&y, &id, 4, 2, 50), y);

        let mut rng = rng_from_seed(16);
        for _ in 0..20 {
            let a: Vec<f64> = (0..160).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut truth = vec![0.0; 8];
            let i = rng.random_range(0..8);
            let j = (i + rng.random_range(1..8)) % 8;
            truth[i] = rng.random_range(0.5..2.0);
            truth[j] = -rng.random_range(0.5..2.0);
            let y = matvec(&a, 8, &truth);
            let x = iht_sparse_vector(&y, &a, 8, 2, 200);
            for (u, v) in x.iter().zip(&truth) {
                assert!((u - v).abs() < 1e-8, "{x:?} vs {truth:?}");
            }
        }
    }

    #[test]
    fn als_recovers_noiseless_instance() {
        let mut rng = rng_from_seed(17);
        let (n, d, m) = (4, 4, 120);
        let ens = gue_ensemble(n, m, d, &mut rng);
        let rho = random_pure_state(d, &mut rng);
        let xi = CalibrationVector::new(vec![1.0, 0.0, -0.3, 0.0]);
        let y = ens.apply(&assemble_signal(&xi, &rho)).unwrap();
        let report = als_bt(&y, &ens, &AlsConfig::new(2, 1), &mut rng).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        let Estimate::StateAndCalibration { state, xi: est } = report.estimate else {
            panic!("ALS returns a state")
        };
        let err = linalg::trace_norm_hermitian(&(state.matrix() - rho.matrix())).unwrap();
        assert!(err < 1e-4, "trace-norm error {err}");
        for (a, b) in est.values.iter().zip(&xi.values) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn als_with_single_block_matches_tomography() {
        let ens = complete_pauli_ensemble(2);
        let rho = random_pure_state(4, &mut rng_from_seed(18));
        let x = BlockSignal::from_blocks(vec![rho.matrix().clone()]).unwrap();
        let y = ens.apply(&x).unwrap();
        let cfg = SdtConfig { gamma_break: 1e-12, ..SdtConfig::new(1, 1) };
        let tomo = standard_tomography(&y, &ens, &cfg).unwrap();
        let tomo_state = tomo.signal().unwrap().block(0).clone();
        let als_cfg = AlsConfig { gamma_break: 1e-12, ..AlsConfig::new(1, 1) };
        let als = als_bt(&y, &ens, &als_cfg, &mut rng_from_seed(19)).unwrap();
        let Estimate::StateAndCalibration { state, .. } = als.estimate else { unreachable!() };
        assert!(linalg::frobenius_norm(&(state.matrix() - tomo_state)) < 1e-6);
    }

    #[test]
    fn als_config_validation() {
        assert!(AlsConfig { reinit_period: 2000, ..AlsConfig::default() }.validate().is_err());
        assert!(AlsConfig::default().validate().is_ok());
    }
}
