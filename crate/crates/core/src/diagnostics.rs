//! Error metrics, a sampled RIP probe and convergence-rate fitting.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::measurements::MeasurementEnsemble;
use crate::parallel;
use crate::recovery::Termination;
use crate::rng::derive_rng;
use crate::signals::{haar_isometry, BlockSignal, CalibrationVector};

/// Frobenius distance below which a recovery counts as a success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub frob_error: f64,
    pub trace_norm_error: f64,
    pub calib_l2_error: f64,
    pub success: bool,
    pub iterations: usize,
    pub termination: Termination,
}

/// `‖ρ̂ - ρ‖₁` for Hermitian arguments.
pub fn trace_norm_error(rho_hat: &ComplexMatrix, rho: &ComplexMatrix) -> Result<f64> {
    if rho_hat.shape() != rho.shape() {
        return Err(Error::dim(format!("shapes {:?} and {:?}", rho_hat.shape(), rho.shape())));
    }
    linalg::trace_norm_hermitian(&(rho_hat - rho))
}

pub fn calibration_l2_error(xi_hat: &CalibrationVector, xi: &CalibrationVector) -> Result<f64> {
    if xi_hat.len() != xi.len() {
        return Err(Error::dim(format!("lengths {} and {}", xi_hat.len(), xi.len())));
    }
    Ok(xi_hat.values.iter().zip(&xi.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// Unit-Frobenius random element of the structured set: uniform support of
/// size `s`, blocks `Σ_j g_j u_j u_j†` over a Haar-random rank-`r` frame.
pub fn random_structured_signal<R: Rng + ?Sized>(n: usize, d: usize, s: usize, r: usize, rng: &mut R) -> BlockSignal {
    let mut x = BlockSignal::zeros(n, d);
    for k in index::sample(rng, n, s.min(n)) {
        let u = haar_isometry(d, r.min(d), rng);
        let w: Vec<f64> = (0..u.ncols()).map(|_| StandardNormal.sample(rng)).collect();
        let mut scaled = u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= num_complex::Complex64::new(w[j], 0.0);
        }
        *x.block_mut(k) = linalg::hermitian_part(&(scaled * u.adjoint()));
    }
    let norm = x.frobenius_norm();
    if norm > 0.0 {
        x.blocks_mut().iter_mut().for_each(|b| *b /= num_complex::Complex64::new(norm, 0.0));
    }
    x
}

/// `max_X |‖A(X)‖² / ‖X‖² - 1|` over the given (non-zero) signals.
pub fn rip_delta_for_signals(ens: &MeasurementEnsemble, signals: &[BlockSignal]) -> Result<f64> {
    let deltas = parallel::map_slice(signals, |x| -> Result<f64> {
        let ax = ens.apply(x)?;
        let norm2 = x.frobenius_norm().powi(2);
        if norm2 == 0.0 {
            return Err(Error::dim("RIP probe signal is zero"));
        }
        Ok((linalg::dot(&ax, &ax) / norm2 - 1.0).abs())
    });
    deltas.into_iter().try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
}

/// Sampled lower bound on the RIP constant of `ens` (which should already be
/// normalized). Sample `i` is drawn from a stream derived from one seed taken
/// from `rng`, so larger `sample_count` extends the same sample set.
pub fn rip_delta_lower_bound<R: Rng + ?Sized>(
    ens: &MeasurementEnsemble,
    sample_count: usize,
    s: usize,
    r: usize,
    rng: &mut R,
) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::InsufficientData("RIP probe needs at least one sample".into()));
    }
    let master: u64 = rng.random();
    let signals = parallel::map_range(sample_count, |i| {
        random_structured_signal(ens.n(), ens.d(), s, r, &mut derive_rng(master, &[i as u64]))
    });
    rip_delta_for_signals(ens, &signals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceFit {
    /// `exp(slope)` of the least-squares line through `log e_l`.
    pub rate: f64,
    /// RMS deviation of `log e_l` from that line.
    pub residual: f64,
}

/// Fit `e_l ≈ C·γ^l`. The trace is cut at its first non-positive entry.
pub fn convergence_trace_fit(trace: &[f64]) -> Result<TraceFit> {
    let logs: Vec<f64> = trace.iter().take_while(|e| **e > 0.0 && e.is_finite()).map(|e| e.ln()).collect();
    if logs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable trace entries, need at least 3",
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in logs.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss: f64 = logs
        .iter()
        .enumerate()
        .map(|(i, y)| (y - intercept - slope * i as f64).powi(2))
        .sum();
    Ok(TraceFit {
        rate: slope.exp(),
        residual: (ss / n).sqrt(),
    })
}
