//! Monte Carlo experiment harness.
//!
//! An [`ExperimentConfig`] describes a sweep over the number of settings `m`
//! with `trials_per_m` random instances per point. Every instance is built
//! from a stream derived from `(master_seed, m, trial)`, and solver-side
//! randomness from `(master_seed, m, trial, solver)`, so the table does not
//! depend on how trials are scheduled across workers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{self, calibration_l2_error, trace_norm_error, DEFAULT_SUCCESS_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::measurements::{
    add_shot_noise, coherent_error_pauli_ensemble, gaussian_ensemble, gue_ensemble, subsampled_pauli_ensemble,
    EnsembleKind, MeasurementEnsemble, NoiseModel,
};
use crate::parallel;
use crate::projections::{self, RankProjectionMode};
use crate::recovery::{self, AlsConfig, Estimate, RecoveryReport, SdtConfig};
use crate::rng::{derive_rng, derive_seed, TrialRng};
use crate::signals::{
    assemble_signal, extract_estimate, random_calibration, random_rank_r_state, BlockSignal, CalibrationVector,
    DensityMatrix, InstanceSpec, XiModel,
};

/// Bumped whenever the CSV columns change.
pub const SCHEMA_VERSION: &str = "results-v1";

pub const CSV_HEADER: &str =
    "experiment,m,trial,solver,frob_error,trace_norm_error,calib_l2_error,success,iterations,termination,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    GuePhase,
    PauliBlind,
    CoherentAls,
    RipProbe,
    UnitOracles,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::GuePhase => "gue-phase",
            Experiment::PauliBlind => "pauli-blind",
            Experiment::CoherentAls => "coherent-als",
            Experiment::RipProbe => "rip-probe",
            Experiment::UnitOracles => "unit-oracles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Sdt,
    Dt,
    InformedDt,
    Standard,
    Als,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Sdt => "sdt",
            Solver::Dt => "dt",
            Solver::InformedDt => "informed-dt",
            Solver::Standard => "standard",
            Solver::Als => "als",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub instance: InstanceSpec,
    pub ensemble: EnsembleKind,
    pub m_values: Vec<usize>,
    pub trials_per_m: usize,
    pub noise: NoiseModel,
    pub sdt: SdtConfig,
    pub als: AlsConfig,
    pub solvers: Vec<Solver>,
    pub master_seed: u64,
    /// Frobenius distance below which a trial counts as recovered.
    pub success_threshold: f64,
    /// Signals per ensemble draw in `rip-probe`.
    pub rip_samples: usize,
    /// Write measured wall time; off by default so output is byte-reproducible.
    pub record_timing: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Default parameters for each experiment.
    pub fn preset(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            instance: InstanceSpec {
                n: 10,
                d: 16,
                s: 3,
                r: 1,
                xi_model: XiModel::GaussianUnit,
                seed: 0,
            },
            ensemble: EnsembleKind::Gue,
            m_values: vec![100],
            trials_per_m: 1,
            noise: NoiseModel::None,
            sdt: SdtConfig::new(3, 1),
            als: AlsConfig::new(3, 1),
            solvers: vec![Solver::Sdt],
            master_seed: 0,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            rip_samples: 100,
            record_timing: false,
            output: None,
        };
        match experiment {
            Experiment::GuePhase => Self {
                m_values: vec![100, 150, 200, 250, 300, 400, 500, 600, 700, 800, 1000],
                trials_per_m: 50,
                solvers: vec![Solver::Sdt, Solver::Dt, Solver::InformedDt],
                ..base
            },
            Experiment::PauliBlind => Self {
                instance: InstanceSpec {
                    n: 10,
                    d: 8,
                    s: 3,
                    r: 1,
                    xi_model: XiModel::LeadingOneScaled { scale: 0.1 },
                    seed: 0,
                },
                ensemble: EnsembleKind::SubsampledPauli,
                m_values: vec![50, 100, 150, 200, 250],
                trials_per_m: 30,
                noise: NoiseModel::Shot {
                    samples: 100_000_000,
                    exact_binomial: false,
                },
                solvers: vec![Solver::Sdt, Solver::Standard],
                ..base
            },
            Experiment::CoherentAls => Self {
                instance: InstanceSpec {
                    n: 7,
                    d: 16,
                    s: 2,
                    r: 1,
                    xi_model: XiModel::ShiftedNormal { mean: 0.2, std: 0.05 },
                    seed: 0,
                },
                ensemble: EnsembleKind::CoherentErrorPauli,
                m_values: vec![40, 60, 80, 100, 140, 180],
                trials_per_m: 20,
                sdt: SdtConfig::new(2, 1),
                als: AlsConfig::new(2, 1),
                solvers: vec![Solver::Als, Solver::Standard],
                ..base
            },
            Experiment::RipProbe => Self {
                m_values: vec![100, 200, 400, 800],
                trials_per_m: 20,
                solvers: vec![],
                ..base
            },
            Experiment::UnitOracles => Self {
                instance: InstanceSpec {
                    n: 4,
                    d: 4,
                    s: 2,
                    r: 1,
                    xi_model: XiModel::GaussianUnit,
                    seed: 0,
                },
                m_values: vec![1],
                trials_per_m: 1,
                solvers: vec![],
                ..base
            },
        }
    }

    /// Preset for `experiment`, overlaid with a partial JSON config, then
    /// `key.path=value` overrides, then an explicit seed.
    pub fn resolve(
        experiment: Experiment,
        file: Option<Value>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut value = serde_json::to_value(Self::preset(experiment))?;
        if let Some(file) = file {
            if !file.is_object() {
                return Err(Error::config("<root>", "config file must hold a JSON object"));
            }
            merge(&mut value, file);
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "override must look like key=value"))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        if let Some(seed) = seed {
            value["master_seed"] = Value::from(seed);
        }
        let found = value.get("experiment").cloned();
        if found != Some(serde_json::to_value(experiment)?) {
            return Err(Error::config(
                "experiment",
                format!("config is for {found:?}, subcommand is `{}`", experiment.as_str()),
            ));
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.instance.validate()?;
        if self.m_values.is_empty() {
            return Err(Error::config("m_values", "must not be empty"));
        }
        if self.m_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("m_values", "must be strictly ascending"));
        }
        if self.m_values[0] == 0 {
            return Err(Error::config("m_values", "entries must be positive"));
        }
        if self.trials_per_m == 0 {
            return Err(Error::config("trials_per_m", "must be at least 1"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::config("success_threshold", "must be positive"));
        }
        self.noise.validate()?;
        self.sdt.validate().map_err(|e| prefix("sdt", e))?;
        self.als.validate().map_err(|e| prefix("als", e))?;
        let d = self.instance.d;
        match self.ensemble {
            EnsembleKind::SubsampledPauli | EnsembleKind::CoherentErrorPauli if !d.is_power_of_two() => {
                return Err(Error::config("instance.d", "Pauli ensembles need d = 2^q"));
            }
            EnsembleKind::CoherentErrorPauli if self.instance.n != 7 => {
                return Err(Error::config("instance.n", "the coherent-error model has exactly 7 blocks"));
            }
            EnsembleKind::Dense => {
                return Err(Error::config("ensemble", "`dense` ensembles cannot be drawn at random"));
            }
            _ => {}
        }
        if !self.ensemble.is_pauli() && self.noise != NoiseModel::None {
            return Err(Error::config("noise", "shot noise needs a Pauli ensemble"));
        }
        let needs_solvers = matches!(
            self.experiment,
            Experiment::GuePhase | Experiment::PauliBlind | Experiment::CoherentAls
        );
        if needs_solvers && self.solvers.is_empty() {
            return Err(Error::config("solvers", "must not be empty"));
        }
        if self.experiment == Experiment::RipProbe && self.rip_samples == 0 {
            return Err(Error::config("rip_samples", "must be at least 1"));
        }
        Ok(())
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::config(format!("{section}.{path}"), message),
        other => other,
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // tagged enums are replaced wholesale so stale fields don't linger
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(key, format!("index {idx} out of range ({len} items)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(key, format!("cannot descend into `{part}`"))),
        };
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub m: usize,
    pub trial: usize,
    pub solver: String,
    pub frob_error: f64,
    pub trace_norm_error: f64,
    pub calib_l2_error: f64,
    pub success: bool,
    pub iterations: usize,
    pub termination: String,
    pub wall_ms: u64,
}

/// A random problem instance: ensemble, ground truth and (noisy) data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ensemble: MeasurementEnsemble,
    pub rho: DensityMatrix,
    pub xi: CalibrationVector,
    pub signal: BlockSignal,
    pub data: Vec<f64>,
}

pub fn draw_ensemble(kind: EnsembleKind, spec: &InstanceSpec, m: usize, rng: &mut TrialRng) -> Result<MeasurementEnsemble> {
    let (n, d) = (spec.n, spec.d);
    let q = d.trailing_zeros() as usize;
    Ok(match kind {
        EnsembleKind::Gue => gue_ensemble(n, m, d, rng),
        EnsembleKind::Gaussian => gaussian_ensemble(n, m, d, rng),
        EnsembleKind::SubsampledPauli => subsampled_pauli_ensemble(n, m, q, rng),
        EnsembleKind::CoherentErrorPauli => coherent_error_pauli_ensemble(m, q, rng),
        EnsembleKind::Dense => return Err(Error::config("ensemble", "`dense` ensembles cannot be drawn at random")),
    })
}

pub fn draw_instance(cfg: &ExperimentConfig, m: usize, rng: &mut TrialRng) -> Result<Instance> {
    let ensemble = draw_ensemble(cfg.ensemble, &cfg.instance, m, rng)?;
    let rho = random_rank_r_state(cfg.instance.d, cfg.instance.r, rng);
    let xi = random_calibration(&cfg.instance, rng);
    let signal = assemble_signal(&xi, &rho);
    let clean = ensemble.apply(&signal)?;
    let data = add_shot_noise(&clean, ensemble.kind(), cfg.noise, rng)?;
    Ok(Instance {
        ensemble,
        rho,
        xi,
        signal,
        data,
    })
}

struct Outcome {
    frob_error: f64,
    trace_norm_error: f64,
    calib_l2_error: f64,
    iterations: usize,
    termination: String,
}

impl Outcome {
    fn failed(termination: &str) -> Self {
        Self {
            frob_error: f64::NAN,
            trace_norm_error: f64::NAN,
            calib_l2_error: f64::NAN,
            iterations: 0,
            termination: termination.to_string(),
        }
    }
}

fn blockwise_trace_norm(a: &BlockSignal, b: &BlockSignal) -> Result<f64> {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| trace_norm_error(x, y))
        .sum()
}

/// Errors of a block-signal estimate. With a leading-one calibration model
/// the state is read off block 0; otherwise the trace-norm error is summed
/// over blocks and `ξ̂` is the vector of block traces.
fn signal_outcome(
    cfg: &ExperimentConfig,
    inst: &Instance,
    estimate: &BlockSignal,
    report: &RecoveryReport,
) -> Result<Outcome> {
    let frob_error = estimate.distance(&inst.signal)?;
    let mut termination = report.termination.as_str().to_string();
    let (trace_norm_error, calib_l2_error) = if cfg.instance.xi_model.has_leading_one() {
        match extract_estimate(estimate, 0) {
            Ok((state, xi)) => (
                diagnostics::trace_norm_error(state.matrix(), inst.rho.matrix())?,
                calibration_l2_error(&xi, &inst.xi)?,
            ),
            Err(Error::DegenerateEstimate { .. }) => {
                termination = "degenerate".into();
                (f64::INFINITY, calibration_l2_error(&estimate.block_traces(), &inst.xi)?)
            }
            Err(e) => return Err(e),
        }
    } else {
        (
            blockwise_trace_norm(estimate, &inst.signal)?,
            calibration_l2_error(&estimate.block_traces(), &inst.xi)?,
        )
    };
    Ok(Outcome {
        frob_error,
        trace_norm_error,
        calib_l2_error,
        iterations: report.iterations,
        termination,
    })
}

fn run_solver(cfg: &ExperimentConfig, inst: &Instance, solver: Solver, seed: u64) -> Result<Outcome> {
    let ens = &inst.ensemble;
    let y = &inst.data;
    let sdt_cfg = SdtConfig {
        s: cfg.instance.s,
        r: cfg.instance.r,
        ..cfg.sdt.clone()
    };
    match solver {
        Solver::Sdt | Solver::Dt | Solver::InformedDt => {
            let report = match solver {
                Solver::Sdt => recovery::sdt(y, ens, &sdt_cfg)?,
                Solver::Dt => recovery::dt(y, ens, &sdt_cfg)?,
                _ => recovery::informed_dt(y, ens, &sdt_cfg, &inst.xi.support())?,
            };
            let estimate = report.signal().expect("SDT family returns a signal").clone();
            signal_outcome(cfg, inst, &estimate, &report)
        }
        Solver::Standard => {
            let report = recovery::standard_tomography(y, &ens.block_ensemble(0), &sdt_cfg)?;
            let x0 = report.signal().expect("SDT family returns a signal").block(0).clone();
            let mut blocks = vec![ComplexMatrix::zeros(ens.d(), ens.d()); ens.n()];
            blocks[0] = x0;
            let estimate = BlockSignal::from_blocks(blocks)?;
            signal_outcome(cfg, inst, &estimate, &report)
        }
        Solver::Als => {
            let als_cfg = AlsConfig {
                s: cfg.instance.s,
                r: cfg.instance.r,
                ..cfg.als.clone()
            };
            let mut rng = crate::rng::rng_from_seed(seed);
            let report = match recovery::als_bt(y, ens, &als_cfg, &mut rng) {
                Err(Error::DegenerateEstimate { .. }) => return Ok(Outcome::failed("degenerate")),
                other => other?,
            };
            let Estimate::StateAndCalibration { state, xi } = &report.estimate else {
                unreachable!("ALS returns a state")
            };
            Ok(Outcome {
                frob_error: assemble_signal(xi, state).distance(&inst.signal)?,
                trace_norm_error: trace_norm_error(state.matrix(), inst.rho.matrix())?,
                calib_l2_error: calibration_l2_error(xi, &inst.xi)?,
                iterations: report.iterations,
                termination: report.termination.as_str().to_string(),
            })
        }
    }
}

fn trial_rows(cfg: &ExperimentConfig, m: usize, trial: usize) -> Result<Vec<ResultRow>> {
    let path = [m as u64, trial as u64];
    let row = |solver: &str, o: Outcome, success: bool, wall_ms: u64| ResultRow {
        experiment: cfg.experiment.as_str().to_string(),
        m,
        trial,
        solver: solver.to_string(),
        frob_error: o.frob_error,
        trace_norm_error: o.trace_norm_error,
        calib_l2_error: o.calib_l2_error,
        success,
        iterations: o.iterations,
        termination: o.termination,
        wall_ms,
    };
    if cfg.experiment == Experiment::RipProbe {
        let mut rng = derive_rng(cfg.master_seed, &path);
        let ens = draw_ensemble(cfg.ensemble, &cfg.instance, m, &mut rng)?.normalized();
        let delta =
            diagnostics::rip_delta_lower_bound(&ens, cfg.rip_samples, cfg.instance.s, cfg.instance.r, &mut rng)?;
        let outcome = Outcome {
            frob_error: delta,
            trace_norm_error: f64::NAN,
            calib_l2_error: f64::NAN,
            iterations: cfg.rip_samples,
            termination: "converged".into(),
        };
        return Ok(vec![row("rip-probe", outcome, delta < 0.5, 0)]);
    }
    let inst = draw_instance(cfg, m, &mut derive_rng(cfg.master_seed, &path))?;
    let mut rows = Vec::with_capacity(cfg.solvers.len());
    for &solver in &cfg.solvers {
        let seed = derive_seed(cfg.master_seed, &[m as u64, trial as u64, solver.tag()]);
        let start = Instant::now();
        let outcome = match run_solver(cfg, &inst, solver, seed) {
            Err(Error::NumericalFailure(_)) => Outcome::failed("numerical-failure"),
            other => other?,
        };
        let wall_ms = if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };
        let success = outcome.frob_error < cfg.success_threshold;
        rows.push(row(solver.as_str(), outcome, success, wall_ms));
    }
    Ok(rows)
}

/// Run every `(m, trial)` of the sweep on the current worker pool. Rows are
/// ordered by `(m, trial, solver)` with solvers in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if cfg.experiment == Experiment::UnitOracles {
        return oracle_rows(cfg.master_seed);
    }
    let jobs: Vec<(usize, usize)> = cfg
        .m_values
        .iter()
        .flat_map(|&m| (0..cfg.trials_per_m).map(move |t| (m, t)))
        .collect();
    let results = parallel::map_slice(&jobs, |&(m, t)| trial_rows(cfg, m, t));
    let mut rows = Vec::with_capacity(jobs.len() * cfg.solvers.len().max(1));
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Same as [`run_experiment`] but never parallel; used as a baseline.
pub fn run_experiment_sequential(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if cfg.experiment == Experiment::UnitOracles {
        return oracle_rows(cfg.master_seed);
    }
    let mut rows = Vec::new();
    for &m in &cfg.m_values {
        for t in 0..cfg.trials_per_m {
            rows.extend(trial_rows(cfg, m, t)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub m: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub median_frob_error: f64,
    pub median_trace_norm_error: f64,
    pub median_calib_l2_error: f64,
}

/// Median with NaN sorted last; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Per `(solver, m)` success rate and error medians, solvers in order of
/// first appearance and `m` ascending.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::EmptySummary);
    }
    let mut solvers: Vec<&str> = Vec::new();
    for r in rows {
        if !solvers.contains(&r.solver.as_str()) {
            solvers.push(&r.solver);
        }
    }
    let mut out = Vec::new();
    for solver in solvers {
        let mut ms: Vec<usize> = rows.iter().filter(|r| r.solver == solver).map(|r| r.m).collect();
        ms.sort_unstable();
        ms.dedup();
        for m in ms {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.solver == solver && r.m == m).collect();
            let col = |f: fn(&ResultRow) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            out.push(SummaryRow {
                solver: solver.to_string(),
                m,
                trials: group.len(),
                success_rate: group.iter().filter(|r| r.success).count() as f64 / group.len() as f64,
                median_frob_error: col(|r| r.frob_error),
                median_trace_norm_error: col(|r| r.trace_norm_error),
                median_calib_l2_error: col(|r| r.calib_l2_error),
            });
        }
    }
    Ok(out)
}

/// First `m` at which the success rate of `solver` reaches 0.5, linearly
/// interpolated between adjacent sweep points. `None` if it never does.
pub fn m50(summary: &[SummaryRow], solver: &str) -> Option<f64> {
    let pts: Vec<(f64, f64)> = summary
        .iter()
        .filter(|s| s.solver == solver)
        .map(|s| (s.m as f64, s.success_rate))
        .collect();
    let i = pts.iter().position(|&(_, rate)| rate >= 0.5)?;
    if i == 0 {
        return Some(pts[0].0);
    }
    let (m0, r0) = pts[i - 1];
    let (m1, r1) = pts[i];
    Some(m0 + (0.5 - r0) / (r1 - r0) * (m1 - m0))
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    pub version: String,
    pub git_revision: Option<String>,
    pub rows: usize,
    pub config: ExperimentConfig,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write the CSV table and its JSON sidecar next to it.
pub fn write_outputs(cfg: &ExperimentConfig, rows: &[ResultRow], csv_path: &Path) -> Result<()> {
    if let Some(dir) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(rows, fs::File::create(csv_path)?)?;
    let sidecar = Sidecar {
        schema: SCHEMA_VERSION.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        git_revision: option_env!("BLINDTOMO_GIT_REVISION").map(str::to_string),
        rows: rows.len(),
        config: cfg.clone(),
    };
    let mut f = fs::File::create(sidecar_path(csv_path))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    Ok(())
}

/// Smallest achievable squared distance to a rank-`r` block, from the spectrum.
fn rank_truncation_error(eigenvalues: &[f64], r: usize, mode: RankProjectionMode) -> f64 {
    let total: f64 = eigenvalues.iter().map(|l| l * l).sum();
    let kept = |mut vals: Vec<f64>| -> f64 {
        vals.sort_by(|a, b| b.total_cmp(a));
        vals.iter().take(r).map(|l| l * l).sum()
    };
    let psd = |sign: f64| kept(eigenvalues.iter().map(|l| sign * l).filter(|l| *l > 0.0).collect());
    let captured = match mode {
        RankProjectionMode::Psd => psd(1.0),
        RankProjectionMode::SignedPsd => psd(1.0).max(psd(-1.0)),
        RankProjectionMode::PlainRank => kept(eigenvalues.iter().map(|l| l.abs()).collect()),
    };
    (total - captured).max(0.0)
}

fn subsets(n: usize, max: usize) -> impl Iterator<Item = u32> {
    (0u32..(1u32 << n)).filter(move |mask| mask.count_ones() as usize <= max)
}

/// Distance from `v` to the nearest `s`-sparse vector, by enumerating supports.
pub fn brute_force_sparse_distance(v: &[f64], s: usize) -> f64 {
    subsets(v.len(), s)
        .map(|mask| {
            v.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) == 0)
                .map(|(_, x)| x * x)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Distance from `x` to the structured set, by enumerating block supports and
/// truncating each kept block through its eigendecomposition.
pub fn brute_force_omega_hat_distance(x: &BlockSignal, s: usize, r: usize, mode: RankProjectionMode) -> Result<f64> {
    let mut kept_cost = Vec::with_capacity(x.n());
    let mut dropped_cost = Vec::with_capacity(x.n());
    for b in x.blocks() {
        let eig = linalg::eig_hermitian(b)?;
        kept_cost.push(rank_truncation_error(&eig.eigenvalues, r, mode));
        dropped_cost.push(linalg::frobenius_norm(b).powi(2));
    }
    Ok(subsets(x.n(), s)
        .map(|mask| {
            (0..x.n())
                .map(|k| if mask & (1 << k) != 0 { kept_cost[k] } else { dropped_cost[k] })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt())
}

fn random_hermitian(d: usize, rng: &mut TrialRng) -> ComplexMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let a = ComplexMatrix::from_fn(d, d, |_, _| {
        num_complex::Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    linalg::hermitian_part(&a)
}

/// Largest gap between the projections and their brute-force oracles over
/// `cases` random inputs with `n ≤ 8`, `s ≤ 4`, `d ≤ 4`, `r ≤ 2`.
pub fn projection_oracle_gap(cases: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    let gaps = parallel::map_range(cases, |case| -> Result<f64> {
        let mut rng = derive_rng(seed, &[case as u64]);
        let n = rng.random_range(1..=8);
        let s = rng.random_range(1..=4usize.min(n));
        let d = rng.random_range(1..=4);
        let r = rng.random_range(1..=2usize.min(d));
        let mode = [RankProjectionMode::Psd, RankProjectionMode::SignedPsd, RankProjectionMode::PlainRank][case % 3];
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = projections::hard_threshold_vector(&v, s);
        let dv = v.iter().zip(&hv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let vector_gap = (dv - brute_force_sparse_distance(&v, s)).abs();
        let x = BlockSignal::from_blocks((0..n).map(|_| random_hermitian(d, &mut rng)).collect())?;
        let px = projections::project_omega_hat(&x, s, r, mode)?;
        let block_gap = (px.distance(&x)? - brute_force_omega_hat_distance(&x, s, r, mode)?).abs();
        Ok(vector_gap.max(block_gap))
    });
    gaps.into_iter().try_fold(0.0f64, |acc, g| Ok(acc.max(g?)))
}

/// Largest `|⟨A(X), y⟩ - ⟨X, A†(y)⟩|` over random draws of every ensemble kind.
pub fn adjoint_identity_gap(cases: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = derive_rng(seed, &[case as u64]);
        let ens = match case % 4 {
            0 => gue_ensemble(3, 9, 4, &mut rng),
            1 => gaussian_ensemble(2, 7, 3, &mut rng),
            2 => subsampled_pauli_ensemble(3, 8, 2, &mut rng),
            _ => coherent_error_pauli_ensemble(6, 2, &mut rng),
        };
        let x = BlockSignal::from_blocks((0..ens.n()).map(|_| random_hermitian(ens.d(), &mut rng)).collect())?;
        let y: Vec<f64> = (0..ens.m()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = linalg::dot(&ens.apply(&x)?, &y);
        let rhs = x.inner(&ens.adjoint(&y)?)?;
        worst = worst.max((lhs - rhs.re).abs()).max(rhs.im.abs());
    }
    Ok(worst)
}

/// Largest change when re-projecting a projected signal.
pub fn projection_idempotence_gap(cases: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = derive_rng(seed, &[case as u64]);
        let x = BlockSignal::from_blocks((0..6).map(|_| random_hermitian(4, &mut rng)).collect())?;
        for mode in [RankProjectionMode::Psd, RankProjectionMode::SignedPsd, RankProjectionMode::PlainRank] {
            let p = projections::project_omega_hat(&x, 3, 2, mode)?;
            let pp = projections::project_omega_hat(&p, 3, 2, mode)?;
            worst = worst.max(pp.distance(&p)?);
        }
    }
    Ok(worst)
}

/// Largest distance between solver paths that must coincide:
/// `dt` vs `sdt(s = n, plain-rank)`, and `sdt(n = s = 1)` vs
/// `standard_tomography` vs `iht_low_rank`.
pub fn solver_equivalence_gap(cases: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = derive_rng(seed, &[case as u64]);
        let spec = InstanceSpec {
            n: 4,
            d: 3,
            s: 2,
            r: 1,
            xi_model: XiModel::GaussianUnit,
            seed: 0,
        };
        let ens = gue_ensemble(spec.n, 30, spec.d, &mut rng);
        let rho = random_rank_r_state(spec.d, 1, &mut rng);
        let xi = random_calibration(&spec, &mut rng);
        let y = ens.apply(&assemble_signal(&xi, &rho))?;
        let cfg = SdtConfig {
            max_iters: 25,
            ..SdtConfig::new(2, 1)
        };
        let a = recovery::dt(&y, &ens, &cfg)?;
        let b = recovery::sdt(
            &y,
            &ens,
            &SdtConfig {
                s: spec.n,
                rank_mode: RankProjectionMode::PlainRank,
                ..cfg.clone()
            },
        )?;
        worst = worst.max(a.signal().unwrap().distance(b.signal().unwrap())?);

        let single = ens.block_ensemble(0);
        let y1 = single.apply(&BlockSignal::from_blocks(vec![rho.matrix().clone()])?)?;
        let one = SdtConfig {
            s: 1,
            gamma_break: 1e-12,
            ..cfg.clone()
        };
        let p = recovery::sdt(&y1, &single, &one)?;
        let q = recovery::standard_tomography(&y1, &single, &one)?;
        let h = recovery::iht_low_rank(&y1, &single, 1, one.rank_mode, one.max_iters)?;
        let p0 = p.signal().unwrap().block(0);
        worst = worst
            .max(p.signal().unwrap().distance(q.signal().unwrap())?)
            .max(linalg::frobenius_norm(&(p0 - h)));
    }
    Ok(worst)
}

/// Whether two runs of a small sweep produce identical CSV bytes, sequential
/// and parallel alike.
pub fn determinism_check(seed: u64) -> Result<bool> {
    let cfg = ExperimentConfig {
        instance: InstanceSpec {
            n: 4,
            d: 4,
            s: 2,
            r: 1,
            xi_model: XiModel::GaussianUnit,
            seed: 0,
        },
        m_values: vec![20, 40],
        trials_per_m: 3,
        sdt: SdtConfig {
            max_iters: 50,
            ..SdtConfig::new(2, 1)
        },
        master_seed: seed,
        ..ExperimentConfig::preset(Experiment::GuePhase)
    };
    let bytes = |rows: Vec<ResultRow>| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf)?;
        Ok(buf)
    };
    let a = bytes(run_experiment(&cfg)?)?;
    let b = bytes(run_experiment(&cfg)?)?;
    let c = bytes(run_experiment_sequential(&cfg)?)?;
    Ok(a == b && a == c)
}

pub const ORACLE_TOLERANCE: f64 = 1e-10;

fn oracle_rows(seed: u64) -> Result<Vec<ResultRow>> {
    let checks: Vec<(&str, f64)> = vec![
        ("projection-oracle", projection_oracle_gap(300, derive_seed(seed, &[1]))?),
        ("adjoint-identity", adjoint_identity_gap(100, derive_seed(seed, &[2]))?),
        ("projection-idempotence", projection_idempotence_gap(50, derive_seed(seed, &[3]))?),
        ("solver-equivalence", solver_equivalence_gap(5, derive_seed(seed, &[4]))?),
        (
            "determinism",
            if determinism_check(derive_seed(seed, &[5]))? { 0.0 } else { f64::INFINITY },
        ),
    ];
    Ok(checks
        .into_iter()
        .enumerate()
        .map(|(i, (name, gap))| {
            let success = gap <= ORACLE_TOLERANCE;
            ResultRow {
                experiment: Experiment::UnitOracles.as_str().to_string(),
                m: 0,
                trial: i,
                solver: name.to_string(),
                frob_error: gap,
                trace_norm_error: f64::NAN,
                calib_l2_error: f64::NAN,
                success,
                iterations: 0,
                termination: if success { "converged" } else { "failed" }.to_string(),
                wall_ms: 0,
            }
        })
        .collect())
}
