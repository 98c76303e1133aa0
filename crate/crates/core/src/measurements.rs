//! Measurement ensembles and the linear measurement map.
//!
//! An ensemble holds `n` blocks of `m` Hermitian observables `A_k^(i)` and
//! defines
//!
//! ```text
//! A(X)_i = Σ_k ⟨A_k^(i), x_k⟩,        A†(y)_k = Σ_i y_i A_k^(i).
//! ```
//!
//! Internally every observable is stored as its real Hermitian coordinates
//! (see [`crate::linalg::hermitian_to_coords`]), giving an `m x (n·d²)` real
//! design matrix. The forward map is a matrix-vector product and the adjoint
//! its transpose. Pauli ensembles additionally keep their letter strings so
//! they can be serialized exactly and so the coherent-error replacement rule
//! stays inspectable.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, coord_len, ComplexMatrix};
use crate::rng::rng_from_seed;
use crate::signals::BlockSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Entry `(row, col)` of the 2x2 matrix.
    fn entry(self, row: usize, col: usize) -> Complex64 {
        let c = Complex64::new;
        match (self, row, col) {
            (Pauli::I, a, b) if a == b => c(1.0, 0.0),
            (Pauli::X, a, b) if a != b => c(1.0, 0.0),
            (Pauli::Y, 0, 1) => c(0.0, -1.0),
            (Pauli::Y, 1, 0) => c(0.0, 1.0),
            (Pauli::Z, 0, 0) => c(1.0, 0.0),
            (Pauli::Z, 1, 1) => c(-1.0, 0.0),
            _ => c(0.0, 0.0),
        }
    }

    pub fn matrix(self) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| self.entry(i, j))
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// Tensor product of single-qubit Paulis; the first letter acts on the most
/// significant qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self(letters)
    }

    pub fn identity(q: usize) -> Self {
        Self(vec![Pauli::I; q])
    }

    pub fn random<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Self {
        Self((0..q).map(|_| Pauli::ALL[rng.random_range(0..4)]).collect())
    }

    pub fn qubits(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.0.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    pub fn count(&self, p: Pauli) -> usize {
        self.0.iter().filter(|&&l| l == p).count()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&l| l == Pauli::I)
    }

    /// All strings obtained by replacing exactly one occurrence of `from` by `to`.
    pub fn single_replacements(&self, from: Pauli, to: Pauli) -> Vec<PauliString> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == from)
            .map(|(pos, _)| {
                let mut letters = self.0.clone();
                letters[pos] = to;
                PauliString(letters)
            })
            .collect()
    }

    /// Non-zero entries as `(row, col, value)`; one per row.
    pub fn entries(&self) -> Vec<(usize, usize, Complex64)> {
        let q = self.qubits();
        let d = self.dim();
        let mut flip = 0usize;
        for (j, l) in self.0.iter().enumerate() {
            if l.flips() {
                flip |= 1 << (q - 1 - j);
            }
        }
        (0..d)
            .map(|row| {
                let col = row ^ flip;
                let mut value = linalg::ONE;
                for (j, l) in self.0.iter().enumerate() {
                    let shift = q - 1 - j;
                    value *= l.entry((row >> shift) & 1, (col >> shift) & 1);
                }
                (row, col, value)
            })
            .collect()
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let d = self.dim();
        let mut m = ComplexMatrix::zeros(d, d);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// `Tr(ρ P)` evaluated from the sparse structure of `P`.
    pub fn expectation(&self, rho: &ComplexMatrix) -> f64 {
        self.entries()
            .into_iter()
            .map(|(r, c, v)| (rho[(c, r)] * v).re)
            .sum()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::config("pauli", format!("invalid letter `{c}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub weight: f64,
    pub string: PauliString,
}

/// Real-weighted sum of Pauli strings; empty means the zero observable.
pub type PauliSum = Vec<PauliTerm>;

fn pauli_sum_coords(sum: &[PauliTerm], d: usize, out: &mut [f64]) {
    let mut m = ComplexMatrix::zeros(d, d);
    for term in sum {
        for (r, c, v) in term.string.entries() {
            m[(r, c)] += v * term.weight;
        }
    }
    linalg::hermitian_to_coords_into(&m, out);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Gue,
    Gaussian,
    SubsampledPauli,
    CoherentErrorPauli,
    /// Explicit observables, or an ensemble derived from another one.
    Dense,
}

impl EnsembleKind {
    pub fn is_pauli(self) -> bool {
        matches!(self, EnsembleKind::SubsampledPauli | EnsembleKind::CoherentErrorPauli)
    }

    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Gue => "gue",
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::SubsampledPauli => "subsampled-pauli",
            EnsembleKind::CoherentErrorPauli => "coherent-error-pauli",
            EnsembleKind::Dense => "dense",
        }
    }
}

/// Order of the six calibration blocks of the coherent-error model.
pub const REPLACEMENT_PAIRS: [(Pauli, Pauli); 6] = [
    (Pauli::X, Pauli::Y),
    (Pauli::X, Pauli::Z),
    (Pauli::Y, Pauli::X),
    (Pauli::Y, Pauli::Z),
    (Pauli::Z, Pauli::X),
    (Pauli::Z, Pauli::Y),
];

#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    kind: EnsembleKind,
    n: usize,
    m: usize,
    d: usize,
    seed: Option<u64>,
    scale: f64,
    /// `paulis[k][i]` is observable `i` of block `k` (Pauli kinds only).
    paulis: Option<Vec<Vec<PauliSum>>>,
    /// Row `i` holds the coordinates of `A_0^(i), ..., A_{n-1}^(i)` back to back.
    design: Vec<f64>,
}

impl MeasurementEnsemble {
    fn stride(&self) -> usize {
        self.n * coord_len(self.d)
    }

    /// Build from explicit observables `observables[k][i]` (block `k`, setting `i`).
    pub fn from_dense(observables: &[Vec<ComplexMatrix>]) -> Result<Self> {
        let n = observables.len();
        let m = observables.first().map_or(0, Vec::len);
        let d = observables.first().and_then(|b| b.first()).map_or(0, |a| a.nrows());
        if observables.iter().any(|b| b.len() != m) {
            return Err(Error::dim("every block needs the same number of observables"));
        }
        let dd = coord_len(d);
        let mut design = vec![0.0; m * n * dd];
        for (k, block) in observables.iter().enumerate() {
            for (i, a) in block.iter().enumerate() {
                if a.shape() != (d, d) {
                    return Err(Error::dim(format!("observable ({k}, {i}) has shape {:?}", a.shape())));
                }
                if linalg::hermiticity_defect(a) > 1e-10 {
                    return Err(Error::NumericalFailure(format!("observable ({k}, {i}) is not Hermitian")));
                }
                let off = i * n * dd + k * dd;
                linalg::hermitian_to_coords_into(a, &mut design[off..off + dd]);
            }
        }
        Ok(Self {
            kind: EnsembleKind::Dense,
            n,
            m,
            d,
            seed: None,
            scale: 1.0,
            paulis: None,
            design,
        })
    }

    /// Build from Pauli sums `paulis[k][i]` on `q` qubits.
    pub fn from_pauli(kind: EnsembleKind, q: usize, paulis: Vec<Vec<PauliSum>>, seed: Option<u64>) -> Result<Self> {
        let n = paulis.len();
        let m = paulis.first().map_or(0, Vec::len);
        let d = 1usize << q;
        if paulis.iter().any(|b| b.len() != m) {
            return Err(Error::dim("every block needs the same number of observables"));
        }
        if paulis.iter().flatten().flatten().any(|t| t.string.qubits() != q) {
            return Err(Error::dim(format!("Pauli strings must act on {q} qubits")));
        }
        let dd = coord_len(d);
        let mut design = vec![0.0; m * n * dd];
        for (k, block) in paulis.iter().enumerate() {
            for (i, sum) in block.iter().enumerate() {
                let off = i * n * dd + k * dd;
                pauli_sum_coords(sum, d, &mut design[off..off + dd]);
            }
        }
        Ok(Self {
            kind,
            n,
            m,
            d,
            seed,
            scale: 1.0,
            paulis: Some(paulis),
            design,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Overall factor applied to every observable (1 unless rescaled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn paulis(&self) -> Option<&[Vec<PauliSum>]> {
        self.paulis.as_deref()
    }

    /// Coordinates of observable `i` in block `k`.
    pub fn block_row(&self, i: usize, k: usize) -> &[f64] {
        let dd = coord_len(self.d);
        let off = i * self.stride() + k * dd;
        &self.design[off..off + dd]
    }

    pub fn observable(&self, k: usize, i: usize) -> ComplexMatrix {
        linalg::coords_to_hermitian(self.block_row(i, k), self.d)
    }

    /// Every observable multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale *= factor;
        out.design.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `A / √m`, the normalization under which GUE maps are near-isometric.
    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / (self.m.max(1) as f64).sqrt())
    }

    /// Single-block ensemble made of block `k` only.
    pub fn block_ensemble(&self, k: usize) -> Self {
        let dd = coord_len(self.d);
        let mut design = Vec::with_capacity(self.m * dd);
        for i in 0..self.m {
            design.extend_from_slice(self.block_row(i, k));
        }
        Self {
            kind: self.kind,
            n: 1,
            m: self.m,
            d: self.d,
            seed: None,
            scale: self.scale,
            paulis: self.paulis.as_ref().map(|p| vec![p[k].clone()]),
            design,
        }
    }

    /// Single-block ensemble with observables `Σ_k w_k A_k^(i)`, i.e. the map
    /// `ρ ↦ A(w ⊗ ρ)`.
    pub fn combine(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.n {
            return Err(Error::dim(format!("{} weights for {} blocks", weights.len(), self.n)));
        }
        let dd = coord_len(self.d);
        let mut design = vec![0.0; self.m * dd];
        for i in 0..self.m {
            let out = &mut design[i * dd..(i + 1) * dd];
            for (k, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, a) in out.iter_mut().zip(self.block_row(i, k)) {
                    *o += w * a;
                }
            }
        }
        Ok(Self {
            kind: EnsembleKind::Dense,
            n: 1,
            m: self.m,
            d: self.d,
            seed: None,
            scale: 1.0,
            paulis: None,
            design,
        })
    }

    fn check_signal(&self, x: &BlockSignal) -> Result<()> {
        if x.n() != self.n || x.d() != self.d {
            return Err(Error::dim(format!(
                "signal with {} blocks of size {} for an ensemble with {} blocks of size {}",
                x.n(),
                x.d(),
                self.n,
                self.d
            )));
        }
        Ok(())
    }

    /// Concatenated Hermitian coordinates of all blocks.
    pub fn signal_coords(&self, x: &BlockSignal) -> Result<Vec<f64>> {
        self.check_signal(x)?;
        let dd = coord_len(self.d);
        let mut out = vec![0.0; self.n * dd];
        for (k, b) in x.blocks().iter().enumerate() {
            linalg::hermitian_to_coords_into(b, &mut out[k * dd..(k + 1) * dd]);
        }
        Ok(out)
    }

    pub fn coords_signal(&self, coords: &[f64]) -> BlockSignal {
        let dd = coord_len(self.d);
        let blocks = (0..self.n)
            .map(|k| linalg::coords_to_hermitian(&coords[k * dd..(k + 1) * dd], self.d))
            .collect();
        BlockSignal::from_blocks(blocks).expect("blocks share one shape")
    }

    pub fn apply_coords(&self, coords: &[f64]) -> Vec<f64> {
        let stride = self.stride();
        debug_assert_eq!(coords.len(), stride);
        self.design
            .chunks_exact(stride.max(1))
            .take(self.m)
            .map(|row| linalg::dot(row, coords))
            .collect()
    }

    pub fn adjoint_coords(&self, y: &[f64]) -> Vec<f64> {
        let stride = self.stride();
        let mut out = vec![0.0; stride];
        for (row, &yi) in self.design.chunks_exact(stride.max(1)).zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
        out
    }

    /// `A` applied to the signal whose only non-zero block is `block` at position `k`.
    pub fn apply_block_coords(&self, k: usize, block: &[f64]) -> Vec<f64> {
        (0..self.m).map(|i| linalg::dot(self.block_row(i, k), block)).collect()
    }

    pub fn apply(&self, x: &BlockSignal) -> Result<Vec<f64>> {
        Ok(self.apply_coords(&self.signal_coords(x)?))
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<BlockSignal> {
        if y.len() != self.m {
            return Err(Error::dim(format!("data of length {} for {} settings", y.len(), self.m)));
        }
        Ok(self.coords_signal(&self.adjoint_coords(y)))
    }

    /// `m x n` matrix (row-major) whose column `k` is `A_k(ρ)`.
    pub fn block_responses(&self, rho: &ComplexMatrix) -> Result<Vec<f64>> {
        if rho.shape() != (self.d, self.d) {
            return Err(Error::dim("state dimension does not match ensemble"));
        }
        let coords = linalg::hermitian_to_coords(rho);
        let mut out = Vec::with_capacity(self.m * self.n);
        for i in 0..self.m {
            for k in 0..self.n {
                out.push(linalg::dot(self.block_row(i, k), &coords));
            }
        }
        Ok(out)
    }

    pub fn to_spec(&self) -> EnsembleSpec {
        let stores_design = self.kind == EnsembleKind::Dense || (self.paulis.is_none() && self.seed.is_none());
        EnsembleSpec {
            kind: self.kind,
            n: self.n,
            m: self.m,
            d: self.d,
            seed: self.seed,
            scale: self.scale,
            observables: self.paulis.clone(),
            design: stores_design.then(|| self.design.clone()),
        }
    }

    pub fn from_spec(spec: &EnsembleSpec) -> Result<Self> {
        let base = if let Some(paulis) = &spec.observables {
            let q = spec.d.trailing_zeros() as usize;
            if 1usize << q != spec.d {
                return Err(Error::config("ensemble.d", "Pauli ensembles need d = 2^q"));
            }
            Self::from_pauli(spec.kind, q, paulis.clone(), spec.seed)?
        } else if let Some(design) = &spec.design {
            if design.len() != spec.m * spec.n * coord_len(spec.d) {
                return Err(Error::config("ensemble.design", "length does not match m·n·d²"));
            }
            // stored design already carries the scale
            return Ok(Self {
                kind: spec.kind,
                n: spec.n,
                m: spec.m,
                d: spec.d,
                seed: spec.seed,
                scale: spec.scale,
                paulis: None,
                design: design.clone(),
            });
        } else {
            let seed = spec
                .seed
                .ok_or_else(|| Error::config("ensemble.seed", "random ensembles need a seed to be rebuilt"))?;
            match spec.kind {
                EnsembleKind::Gue => gue_ensemble_seeded(spec.n, spec.m, spec.d, seed),
                EnsembleKind::Gaussian => gaussian_ensemble_seeded(spec.n, spec.m, spec.d, seed),
                other => {
                    return Err(Error::config(
                        "ensemble.observables",
                        format!("`{}` ensembles need their observables", other.name()),
                    ))
                }
            }
        };
        Ok(if spec.scale == 1.0 { base } else { base.scaled(spec.scale) })
    }
}

/// Serialized form of an ensemble: enough to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
    /// `observables[k][i]`: Pauli sum for block `k`, setting `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observables: Option<Vec<Vec<PauliSum>>>,
    /// Raw design rows (dense ensembles without a seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<f64>>,
}

fn unit_scale() -> f64 {
    1.0
}

pub fn apply(ens: &MeasurementEnsemble, x: &BlockSignal) -> Result<Vec<f64>> {
    ens.apply(x)
}

pub fn adjoint(ens: &MeasurementEnsemble, y: &[f64]) -> Result<BlockSignal> {
    ens.adjoint(y)
}

fn random_dense<R, F>(kind: EnsembleKind, n: usize, m: usize, d: usize, rng: &mut R, mut draw: F) -> MeasurementEnsemble
where
    R: Rng + ?Sized,
    F: FnMut(&mut R, usize) -> ComplexMatrix,
{
    let dd = coord_len(d);
    let mut design = vec![0.0; m * n * dd];
    for i in 0..m {
        for k in 0..n {
            let a = draw(rng, d);
            let off = i * n * dd + k * dd;
            linalg::hermitian_to_coords_into(&a, &mut design[off..off + dd]);
        }
    }
    MeasurementEnsemble {
        kind,
        n,
        m,
        d,
        seed: None,
        scale: 1.0,
        paulis: None,
        design,
    }
}

/// GUE observables `(B + B†)/2` with `B_ij ~ N(0,1) + i N(0,1)`.
pub fn gue_ensemble<R: Rng + ?Sized>(n: usize, m: usize, d: usize, rng: &mut R) -> MeasurementEnsemble {
    random_dense(EnsembleKind::Gue, n, m, d, rng, |rng, d| {
        let b = ComplexMatrix::from_fn(d, d, |_, _| {
            Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        linalg::hermitian_part(&b)
    })
}

/// Real symmetric observables `(G + Gᵀ)/2` with `G_ij ~ N(0,1)`.
pub fn gaussian_ensemble<R: Rng + ?Sized>(n: usize, m: usize, d: usize, rng: &mut R) -> MeasurementEnsemble {
    random_dense(EnsembleKind::Gaussian, n, m, d, rng, |rng, d| {
        let g = ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(StandardNormal.sample(rng), 0.0));
        linalg::hermitian_part(&g)
    })
}

pub fn gue_ensemble_seeded(n: usize, m: usize, d: usize, seed: u64) -> MeasurementEnsemble {
    let mut ens = gue_ensemble(n, m, d, &mut rng_from_seed(seed));
    ens.seed = Some(seed);
    ens
}

pub fn gaussian_ensemble_seeded(n: usize, m: usize, d: usize, seed: u64) -> MeasurementEnsemble {
    let mut ens = gaussian_ensemble(n, m, d, &mut rng_from_seed(seed));
    ens.seed = Some(seed);
    ens
}

fn single(string: PauliString) -> PauliSum {
    vec![PauliTerm { weight: 1.0, string }]
}

/// `n` blocks of `m` independent, uniformly drawn Pauli strings on `q` qubits.
pub fn subsampled_pauli_ensemble<R: Rng + ?Sized>(n: usize, m: usize, q: usize, rng: &mut R) -> MeasurementEnsemble {
    let paulis: Vec<Vec<PauliSum>> = (0..n)
        .map(|_| (0..m).map(|_| single(PauliString::random(q, rng))).collect())
        .collect();
    MeasurementEnsemble::from_pauli(EnsembleKind::SubsampledPauli, q, paulis, None).expect("consistent shapes")
}

/// First-order coherent-error model for the given target strings: block 0
/// holds the targets, blocks 1..=6 the single-replacement sums for each
/// ordered pair in [`REPLACEMENT_PAIRS`].
pub fn coherent_error_blocks(targets: &[PauliString]) -> Vec<Vec<PauliSum>> {
    let mut blocks = vec![targets.iter().cloned().map(single).collect::<Vec<_>>()];
    for (from, to) in REPLACEMENT_PAIRS {
        blocks.push(
            targets
                .iter()
                .map(|t| {
                    t.single_replacements(from, to)
                        .into_iter()
                        .map(|string| PauliTerm { weight: 1.0, string })
                        .collect()
                })
                .collect(),
        );
    }
    blocks
}

pub fn coherent_error_pauli_ensemble<R: Rng + ?Sized>(m: usize, q: usize, rng: &mut R) -> MeasurementEnsemble {
    let targets: Vec<PauliString> = (0..m).map(|_| PauliString::random(q, rng)).collect();
    MeasurementEnsemble::from_pauli(EnsembleKind::CoherentErrorPauli, q, coherent_error_blocks(&targets), None)
        .expect("consistent shapes")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    None,
    /// Finite-statistics estimate from `samples` ±1 outcomes per expectation value.
    Shot {
        samples: u64,
        /// Resample a binomial instead of using the Gaussian approximation.
        #[serde(default)]
        exact_binomial: bool,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Shot { samples: 0, .. } => Err(Error::config("noise.samples", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Add shot noise to ideal Pauli expectation data.
///
/// Entry `y_i` (clipped to `[-1, 1]`) becomes `y_i + g_i` with
/// `g_i ~ N(0, (1 - y_i²)/N)`, or the mean of `N` resampled ±1 outcomes when
/// `exact_binomial` is set.
pub fn add_shot_noise<R: Rng + ?Sized>(
    y: &[f64],
    kind: EnsembleKind,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (samples, exact) = match noise {
        NoiseModel::None => return Ok(y.to_vec()),
        NoiseModel::Shot { samples, exact_binomial } => (samples, exact_binomial),
    };
    if !kind.is_pauli() {
        return Err(Error::UnsupportedNoise(kind.name().to_string()));
    }
    noise.validate()?;
    let n = samples as f64;
    y.iter()
        .map(|&yi| {
            let clipped = yi.clamp(-1.0, 1.0);
            if exact {
                let p = (1.0 + clipped) / 2.0;
                let k = Binomial::new(samples, p)
                    .map_err(|e| Error::NumericalFailure(e.to_string()))?
                    .sample(rng);
                // shift by the clipped-away part so only the fluctuation is added
                Ok(yi - clipped + 2.0 * k as f64 / n - 1.0)
            } else {
                let var = (1.0 - clipped * clipped) / n;
                if var <= 0.0 {
                    return Ok(yi);
                }
                let g: f64 = Normal::new(0.0, var.sqrt())
                    .map_err(|e| Error::NumericalFailure(e.to_string()))?
                    .sample(rng);
                Ok(yi + g)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signals::{assemble_signal, ground_state, random_pure_state, CalibrationVector};
    use approx::assert_relative_eq;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn random_hermitian_signal<R: Rng>(n: usize, d: usize, rng: &mut R) -> BlockSignal {
        let blocks = (0..n)
            .map(|_| {
                let a = ComplexMatrix::from_fn(d, d, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                linalg::hermitian_part(&a)
            })
            .collect();
        BlockSignal::from_blocks(blocks).unwrap()
    }

    #[test]
    fn pauli_string_matrices() {
        assert_eq!(ps("ZY").matrix(), linalg::kron(&Pauli::Z.matrix(), &Pauli::Y.matrix()));
        assert_eq!(ps("XIY").matrix(), linalg::kron(&linalg::kron(&Pauli::X.matrix(), &Pauli::I.matrix()), &Pauli::Y.matrix()));
        assert_eq!(ps("XYZI").to_string(), "XYZI");
        assert!("XQ".parse::<PauliString>().is_err());
    }

    #[test]
    fn pauli_expectation_matches_dense_trace() {
        let rho = random_pure_state(8, &mut rng_from_seed(3));
        for s in ["XYZ", "IIZ", "YYX", "III"] {
            let p = ps(s);
            let dense = linalg::frobenius_inner(&p.matrix(), rho.matrix()).unwrap().re;
            assert_relative_eq!(p.expectation(rho.matrix()), dense, epsilon = 1e-14);
        }
    }

    #[test]
    fn apply_examples() {
        let z = Pauli::Z.matrix();
        let ens = MeasurementEnsemble::from_dense(&[vec![z.clone()]]).unwrap();
        let x = assemble_signal(&CalibrationVector::new(vec![1.0]), &ground_state(2));
        assert_relative_eq!(ens.apply(&x).unwrap()[0], 1.0, epsilon = 1e-15);

        let rho = random_pure_state(2, &mut rng_from_seed(1));
        let id = MeasurementEnsemble::from_dense(&[vec![ComplexMatrix::identity(2, 2)]]).unwrap();
        let x = assemble_signal(&CalibrationVector::new(vec![1.0]), &rho);
        assert_relative_eq!(id.apply(&x).unwrap()[0], 1.0, epsilon = 1e-14);

        let two = MeasurementEnsemble::from_dense(&[vec![z.clone()], vec![z.clone()]]).unwrap();
        let x = assemble_signal(&CalibrationVector::new(vec![1.0, 0.1]), &rho);
        let tz = linalg::frobenius_inner(&z, rho.matrix()).unwrap().re;
        assert_relative_eq!(two.apply(&x).unwrap()[0], 1.1 * tz, epsilon = 1e-14);

        assert!(two.apply(&BlockSignal::zeros(3, 2)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let z = Pauli::Z.matrix();
        let ens = MeasurementEnsemble::from_dense(&[vec![z.clone()]]).unwrap();
        assert_eq!(ens.adjoint(&[0.0]).unwrap().frobenius_norm(), 0.0);
        let a = ens.adjoint(&[1.0]).unwrap();
        assert!(linalg::frobenius_norm(&(a.block(0) - &z)) < 1e-15);
        assert!(ens.adjoint(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn adjoint_identity_for_every_kind() {
        let mut rng = rng_from_seed(5);
        for trial in 0..100 {
            let ens = match trial % 4 {
                0 => gue_ensemble(3, 7, 4, &mut rng),
                1 => gaussian_ensemble(2, 9, 3, &mut rng),
                2 => subsampled_pauli_ensemble(3, 8, 2, &mut rng),
                _ => coherent_error_pauli_ensemble(6, 2, &mut rng),
            };
            let x = random_hermitian_signal(ens.n(), ens.d(), &mut rng);
            let y: Vec<f64> = (0..ens.m()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = linalg::dot(&ens.apply(&x).unwrap(), &y);
            let rhs = x.inner(&ens.adjoint(&y).unwrap()).unwrap();
            assert!((lhs - rhs.re).abs() < 1e-10 && rhs.im.abs() < 1e-10);
        }
    }

    #[test]
    fn ensembles_are_hermitian_and_deterministic() {
        let a = gue_ensemble(2, 5, 3, &mut rng_from_seed(8));
        let b = gue_ensemble(2, 5, 3, &mut rng_from_seed(8));
        assert_eq!(a.design, b.design);
        for k in 0..2 {
            for i in 0..5 {
                assert!(linalg::hermiticity_defect(&a.observable(k, i)) < 1e-14);
            }
        }
        let g1 = gaussian_ensemble(1, 4, 3, &mut rng_from_seed(9));
        let g2 = gaussian_ensemble(1, 4, 3, &mut rng_from_seed(9));
        assert_eq!(g1.design, g2.design);
        assert!(g1.observable(0, 0).iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn gue_entry_moments() {
        let mut rng = rng_from_seed(10);
        let draws = 10_000;
        let ens = gue_ensemble(1, draws, 2, &mut rng);
        let (mut d2, mut o2) = (0.0, 0.0);
        let (mut d4, mut o4) = (0.0, 0.0);
        for i in 0..draws {
            let a = ens.observable(0, i);
            let dv = a[(0, 0)].re.powi(2);
            let ov = a[(0, 1)].re.powi(2);
            d2 += dv;
            d4 += dv * dv;
            o2 += ov;
            o4 += ov * ov;
        }
        let n = draws as f64;
        let (dm, om) = (d2 / n, o2 / n);
        let dse = ((d4 / n - dm * dm) / n).sqrt();
        let ose = ((o4 / n - om * om) / n).sqrt();
        assert!((dm - 1.0).abs() < 5.0 * dse, "diag variance {dm}");
        assert!((om - 0.5).abs() < 5.0 * ose, "offdiag variance {om}");
    }

    #[test]
    fn gaussian_entry_moments() {
        let ens = gaussian_ensemble(1, 10_000, 2, &mut rng_from_seed(11));
        let n = 10_000.0;
        let diag: f64 = (0..10_000).map(|i| ens.observable(0, i)[(1, 1)].re.powi(2)).sum::<f64>() / n;
        let off: f64 = (0..10_000).map(|i| ens.observable(0, i)[(0, 1)].re.powi(2)).sum::<f64>() / n;
        // standard errors: sqrt(2/n) and sqrt(2·0.25/n)
        assert!((diag - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!((off - 0.5).abs() < 5.0 * (0.5 / n).sqrt());
    }

    #[test]
    fn subsampled_pauli_properties() {
        let mut rng = rng_from_seed(12);
        let ens = subsampled_pauli_ensemble(2, 50, 3, &mut rng);
        for k in 0..2 {
            for i in 0..50 {
                let a = ens.observable(k, i);
                assert_relative_eq!(linalg::frobenius_inner(&a, &a).unwrap().re, 8.0, epsilon = 1e-12);
                let e = linalg::eig_hermitian(&a).unwrap();
                assert!(e.eigenvalues.iter().all(|l| (l.abs() - 1.0).abs() < 1e-12));
            }
        }
        let ens = subsampled_pauli_ensemble(1, 10_000, 2, &mut rng);
        let x_count = ens.paulis().unwrap()[0]
            .iter()
            .filter(|sum| sum[0].string.letters()[1] == Pauli::X)
            .count();
        let freq = x_count as f64 / 10_000.0;
        assert!((freq - 0.25).abs() < 5.0 * (0.25 * 0.75 / 10_000.0f64).sqrt());
    }

    #[test]
    fn coherent_error_replacement_examples() {
        let blocks = coherent_error_blocks(&[ps("ZYZZY"), ps("XX"), ps("ZZ")][..1]);
        // block order: X→Y, X→Z, Y→X, ...
        let yx = &blocks[3][0];
        let strings: Vec<String> = yx.iter().map(|t| t.string.to_string()).collect();
        assert_eq!(strings, vec!["ZXZZY", "ZYZZX"]);

        let blocks = coherent_error_blocks(&[ps("XX"), ps("ZZ")]);
        let xz: Vec<String> = blocks[2][0].iter().map(|t| t.string.to_string()).collect();
        assert_eq!(xz, vec!["ZX", "XZ"]);
        // no Y in the target: every Y→· observable vanishes
        assert!(blocks[3][1].is_empty() && blocks[4][1].is_empty());

        let ens = MeasurementEnsemble::from_pauli(EnsembleKind::CoherentErrorPauli, 2, blocks, None).unwrap();
        assert_eq!(ens.n(), 7);
        assert!(ens.block_row(1, 3).iter().all(|v| *v == 0.0));
        let expect = ps("ZX").matrix() + ps("XZ").matrix();
        assert!(linalg::frobenius_norm(&(ens.observable(2, 0) - expect)) < 1e-14);
    }

    #[test]
    fn coherent_error_letter_counts() {
        let mut rng = rng_from_seed(13);
        let targets: Vec<PauliString> = (0..40).map(|_| PauliString::random(4, &mut rng)).collect();
        let blocks = coherent_error_blocks(&targets);
        for (b, (from, to)) in REPLACEMENT_PAIRS.iter().enumerate() {
            for (i, t) in targets.iter().enumerate() {
                let terms = &blocks[b + 1][i];
                assert_eq!(terms.len(), t.count(*from));
                for term in terms {
                    assert_eq!(term.string.count(*to), t.count(*to) + 1);
                    assert_eq!(term.string.count(*from), t.count(*from) - 1);
                }
            }
        }
        let ens = MeasurementEnsemble::from_pauli(EnsembleKind::CoherentErrorPauli, 4, blocks, None).unwrap();
        for k in 0..7 {
            for i in 0..40 {
                assert!(linalg::hermiticity_defect(&ens.observable(k, i)) < 1e-14);
            }
        }
    }

    #[test]
    fn shot_noise() {
        let mut rng = rng_from_seed(14);
        let y = vec![0.3, -1.0, 1.0];
        assert_eq!(add_shot_noise(&y, EnsembleKind::SubsampledPauli, NoiseModel::None, &mut rng).unwrap(), y);
        let noisy = add_shot_noise(
            &y,
            EnsembleKind::SubsampledPauli,
            NoiseModel::Shot { samples: 100, exact_binomial: false },
            &mut rng,
        )
        .unwrap();
        assert_eq!(noisy[1], -1.0);
        assert_eq!(noisy[2], 1.0);
        assert!(matches!(
            add_shot_noise(&y, EnsembleKind::Gue, NoiseModel::Shot { samples: 10, exact_binomial: false }, &mut rng),
            Err(Error::UnsupportedNoise(_))
        ));

        let zeros = vec![0.0; 10_000];
        let shot = NoiseModel::Shot { samples: 100_000_000, exact_binomial: false };
        let noisy = add_shot_noise(&zeros, EnsembleKind::SubsampledPauli, shot, &mut rng).unwrap();
        let std = (noisy.iter().map(|v| v * v).sum::<f64>() / 10_000.0).sqrt();
        // relative standard error of a sample std is about 1/sqrt(2n)
        assert!((std / 1e-4 - 1.0).abs() < 5.0 / (2.0f64 * 10_000.0).sqrt());

        let exact = NoiseModel::Shot { samples: 10_000, exact_binomial: true };
        let noisy = add_shot_noise(&zeros[..4000], EnsembleKind::CoherentErrorPauli, exact, &mut rng).unwrap();
        let std = (noisy.iter().map(|v| v * v).sum::<f64>() / 4000.0).sqrt();
        assert!((std / 1e-2 - 1.0).abs() < 5.0 / (8000.0f64).sqrt());
    }

    #[test]
    fn spec_round_trip() {
        let gue = gue_ensemble_seeded(2, 4, 3, 77).normalized();
        let json = serde_json::to_string(&gue.to_spec()).unwrap();
        let back = MeasurementEnsemble::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.design, gue.design);

        let pauli = coherent_error_pauli_ensemble(5, 2, &mut rng_from_seed(4));
        let json = serde_json::to_string(&pauli.to_spec()).unwrap();
        assert!(json.contains("\"kind\":\"coherent-error-pauli\""));
        let back = MeasurementEnsemble::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.design, pauli.design);

        let unseeded = gue_ensemble(1, 2, 2, &mut rng_from_seed(1));
        let back = MeasurementEnsemble::from_spec(&unseeded.to_spec()).unwrap();
        assert_eq!(back.design, unseeded.design);
    }

    #[test]
    fn combine_matches_weighted_sum() {
        let mut rng = rng_from_seed(15);
        let ens = gue_ensemble(3, 6, 3, &mut rng);
        let rho = random_pure_state(3, &mut rng);
        let xi = CalibrationVector::new(vec![0.5, 0.0, -1.2]);
        let direct = ens.apply(&assemble_signal(&xi, &rho)).unwrap();
        let combined = ens.combine(&xi.values).unwrap();
        let single = BlockSignal::from_blocks(vec![rho.matrix().clone()]).unwrap();
        let via = combined.apply(&single).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-12);
        }
        let responses = ens.block_responses(rho.matrix()).unwrap();
        for i in 0..6 {
            let row: f64 = (0..3).map(|k| responses[i * 3 + k] * xi.values[k]).sum();
            assert!((row - direct[i]).abs() < 1e-12);
        }
    }
}
