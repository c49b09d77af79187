// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Weighted-atom representation of exchangeable states,
//! `ρ^(N) = Σ_i w_i ρ_i^{⊗N}`, plus measurement records.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{outcome_probabilities, povm_from_operation, QuantumOperation};
use crate::qstate::{
    bloch_from_density, check_power_capacity, density_from_bloch, BlochVector, ComplexMatrix,
    DensityOperator, DEFAULT_DIM_CAP,
};
use crate::rng;

pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Entry-wise tolerance for permutation invariance.
pub const PERMUTATION_TOL: f64 = 1e-10;

/// Finite weighted set of single-system states standing in for the measure
/// `p(ρ) dρ`. Atoms are shared and never change; updates only reweight.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    dim: usize,
    states: Arc<[DensityOperator]>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Ensemble {
    /// Builds an ensemble from explicit weights that must already sum to one.
    pub fn new(atoms: Vec<(f64, DensityOperator)>) -> Result<Self> {
        let (weights, states): (Vec<f64>, Vec<DensityOperator>) = atoms.into_iter().unzip();
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidPrior(format!("weights sum to {total}, expected 1")));
        }
        Self::from_unnormalized(weights, states)
    }

    /// Builds an ensemble from nonnegative weights with a positive total,
    /// normalizing them.
    pub fn from_unnormalized(weights: Vec<f64>, states: Vec<DensityOperator>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidPrior("ensemble needs at least one atom".into()));
        }
        if weights.len() != states.len() {
            return Err(Error::InvalidPrior(format!(
                "{} weights for {} atoms",
                weights.len(),
                states.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::Dimension("atoms have differing dimensions".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPrior("all weights are zero".into()));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            dim,
            states: states.into(),
            weights,
            log_weights,
        })
    }

    /// Equal weights `1/len`.
    pub fn uniform(states: Vec<DensityOperator>) -> Result<Self> {
        let n = states.len();
        Self::from_unnormalized(vec![1.0; n], states)
    }

    pub fn single(state: DensityOperator) -> Self {
        Self {
            dim: state.dim(),
            states: vec![state].into(),
            weights: vec![1.0],
            log_weights: vec![0.0],
        }
    }

    pub fn from_bloch(weights: Vec<f64>, points: &[BlochVector]) -> Result<Self> {
        Self::from_unnormalized(weights, points.iter().map(|&b| density_from_bloch(b)).collect())
    }

    /// Normalizes log weights by a max shift and returns the ensemble.
    pub(crate) fn with_log_weights(
        dim: usize,
        states: Arc<[DensityOperator]>,
        log_weights: Vec<f64>,
    ) -> Result<Self> {
        let (weights, log_weights) = normalize_log_weights(log_weights)?;
        Ok(Self {
            dim,
            states,
            weights,
            log_weights,
        })
    }

    /// Same atoms, new unnormalized log weights.
    pub fn reweighted(&self, log_weights: Vec<f64>) -> Result<Self> {
        Self::with_log_weights(self.dim, Arc::clone(&self.states), log_weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    /// True when both ensembles share the very same atom storage.
    pub fn shares_atoms_with(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.states, &other.states)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, &DensityOperator)> {
        self.weights.iter().copied().zip(self.states.iter())
    }

    /// Kish effective sample size `1/Σ w²`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Max-shift normalization; fails when every weight is zero.
fn normalize_log_weights(mut log_weights: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidPrior("all weights are zero".into()));
    }
    let shifted: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let log_total = max + total.ln();
    let weights = shifted.into_iter().map(|w| w / total).collect();
    for lw in &mut log_weights {
        *lw -= log_total;
    }
    Ok((weights, log_weights))
}

/// `Σ_i w_i ρ_i`.
pub fn marginal_state(e: &Ensemble) -> DensityOperator {
    let sum = e
        .atoms()
        .fold(ComplexMatrix::zeros(e.dim), |acc, (w, r)| acc.add(&r.matrix().scale(w)));
    DensityOperator::from_trusted(sum)
}

/// `Σ_i w_i ρ_i^{⊗n}` as an explicit `d^n`-dimensional state.
pub fn expand_to_copies(e: &Ensemble, n: usize) -> Result<DensityOperator> {
    expand_to_copies_capped(e, n, DEFAULT_DIM_CAP)
}

pub fn expand_to_copies_capped(e: &Ensemble, n: usize, cap: usize) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one copy".into()));
    }
    let total = check_power_capacity(e.dim, n, cap)?;
    let mut acc = ComplexMatrix::zeros(total);
    for (w, r) in e.atoms() {
        if w == 0.0 {
            continue;
        }
        let p = crate::qstate::tensor_power_capped(r, n, cap)?;
        acc = acc.add(&p.matrix().scale(w));
    }
    Ok(DensityOperator::from_trusted(acc))
}

/// Number of `d`-dimensional factors in a `dim`-dimensional space.
pub fn subsystem_count(dim: usize, d: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::Dimension(format!("subsystem dimension {d} must be at least 2")));
    }
    let mut n = 0;
    let mut acc = 1usize;
    while acc < dim {
        acc *= d;
        n += 1;
    }
    if acc != dim {
        return Err(Error::Dimension(format!("{dim} is not a power of {d}")));
    }
    Ok(n)
}

/// Checks `S ρ S† = ρ` for every adjacent transposition `S` of the
/// `d`-dimensional subsystems. Those transpositions generate the full
/// symmetric group.
pub fn is_permutation_invariant(r: &DensityOperator, d: usize) -> Result<bool> {
    let n = subsystem_count(r.dim(), d)?;
    let m = r.matrix().as_dmatrix();
    let dim = r.dim();
    for j in 0..n.saturating_sub(1) {
        // Digits are most significant first.
        let hi = d.pow((n - 1 - j) as u32);
        let lo = d.pow((n - 2 - j) as u32);
        let swap = |i: usize| {
            let a = (i / hi) % d;
            let b = (i / lo) % d;
            i - a * hi - b * lo + b * hi + a * lo
        };
        for row in 0..dim {
            let pr = swap(row);
            for col in 0..dim {
                if (m[(pr, swap(col))] - m[(row, col)]).norm() > PERMUTATION_TOL {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// One recorded shot: which operation was applied and which outcome came up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub operation_id: usize,
    pub outcome: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordRow {
    step: usize,
    operation_id: usize,
    outcome: usize,
}

/// Ordered measurement outcomes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MeasurementRecord {
    entries: Vec<RecordEntry>,
}

impl MeasurementRecord {
    pub fn new(entries: Vec<RecordEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[RecordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, operation_id: usize, outcome: usize) {
        self.entries.push(RecordEntry {
            operation_id,
            outcome,
        });
    }

    /// Aggregated counts keyed by `(operation_id, outcome)`.
    pub fn counts(&self) -> BTreeMap<(usize, usize), u64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.operation_id, e.outcome)).or_insert(0) += 1;
        }
        out
    }

    /// Outcome counts for one operation, indexed by outcome.
    pub fn outcome_counts(&self, operation_id: usize, outcomes: usize) -> Vec<u64> {
        let mut out = vec![0; outcomes];
        for e in self.entries.iter().filter(|e| e.operation_id == operation_id) {
            if e.outcome < outcomes {
                out[e.outcome] += 1;
            }
        }
        out
    }

    pub fn validate(&self, ops: &[QuantumOperation]) -> Result<()> {
        for (step, e) in self.entries.iter().enumerate() {
            let op = ops.get(e.operation_id).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "step {step}: unknown operation id {}",
                    e.operation_id
                ))
            })?;
            if e.outcome >= op.len() {
                return Err(Error::InvalidArgument(format!(
                    "step {step}: outcome {} out of range for operation {}",
                    e.outcome, e.operation_id
                )));
            }
        }
        Ok(())
    }

    fn rows(&self) -> impl Iterator<Item = RecordRow> + '_ {
        self.entries.iter().enumerate().map(|(step, e)| RecordRow {
            step,
            operation_id: e.operation_id,
            outcome: e.outcome,
        })
    }

    fn from_rows(rows: Vec<RecordRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.step != i {
                return Err(Error::InvalidArgument(format!(
                    "record steps must be 0,1,2,...; found {} at position {i}",
                    r.step
                )));
            }
        }
        Ok(Self::new(
            rows.into_iter()
                .map(|r| RecordEntry {
                    operation_id: r.operation_id,
                    outcome: r.outcome,
                })
                .collect(),
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.rows().collect::<Vec<_>>())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_rows(serde_json::from_str(s)?)
    }

    /// CSV with header `step,operation_id,outcome`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for row in self.rows() {
            writer.serialize(row)?;
        }
        if self.entries.is_empty() {
            writer.write_record(["step", "operation_id", "outcome"])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let rows = reader.deserialize().collect::<std::result::Result<Vec<RecordRow>, _>>()?;
        Self::from_rows(rows)
    }
}

/// Draws an outcome index from a probability vector.
pub(crate) fn draw_outcome<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Round-off left `u` above the cumulative total; fall back to the last
    // outcome with nonzero probability.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Simulates `shots` independent shots on copies of `true_state`. Shot `i`
/// uses operation `i mod ops.len()`.
pub fn sample_measurement_record(
    true_state: &DensityOperator,
    ops: &[QuantumOperation],
    shots: usize,
    seed: u64,
) -> Result<MeasurementRecord> {
    if ops.is_empty() && shots > 0 {
        return Err(Error::InvalidArgument("no operations to sample from".into()));
    }
    let probs = ops
        .iter()
        .map(|op| outcome_probabilities(true_state, &povm_from_operation(op)))
        .collect::<Result<Vec<_>>>()?;
    let mut g = rng::stream(seed, rng::streams::TRUE_STATE);
    let mut record = MeasurementRecord::default();
    for i in 0..shots {
        let id = i % ops.len();
        record.push(id, draw_outcome(&probs[id], &mut g));
    }
    Ok(record)
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bloch: Option<BlochVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<DensityOperator>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleRepr {
    dim: usize,
    atoms: Vec<AtomRepr>,
}

impl Serialize for Ensemble {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let atoms = self
            .atoms()
            .map(|(weight, r)| {
                if self.dim == 2 {
                    AtomRepr {
                        weight,
                        bloch: Some(bloch_from_density(r).expect("qubit atom")),
                        matrix: None,
                    }
                } else {
                    AtomRepr {
                        weight,
                        bloch: None,
                        matrix: Some(r.clone()),
                    }
                }
            })
            .collect();
        EnsembleRepr {
            dim: self.dim,
            atoms,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ensemble {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = EnsembleRepr::deserialize(d)?;
        let mut weights = Vec::with_capacity(repr.atoms.len());
        let mut states = Vec::with_capacity(repr.atoms.len());
        for a in repr.atoms {
            let state = match (a.bloch, a.matrix) {
                (Some(b), None) => density_from_bloch(b),
                (None, Some(m)) => m,
                _ => return Err(D::Error::custom("each atom needs exactly one of `bloch` or `matrix`")),
            };
            weights.push(a.weight);
            states.push(state);
        }
        let e = Ensemble::from_unnormalized(weights, states).map_err(D::Error::custom)?;
        if e.dim != repr.dim {
            return Err(D::Error::custom(format!(
                "declared dim {} but atoms have dim {}",
                repr.dim, e.dim
            )));
        }
        Ok(e)
    }
}
