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

//! Generalized measurements: POVMs, Kraus-form operations, outcome
//! probabilities, and post-measurement states.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{ComplexMatrix, DensityOperator, PSD_TOL};

/// Completeness tolerance, per matrix entry.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Outcomes with probability below this cannot be normalized.
pub const IMPOSSIBLE_OUTCOME_TOL: f64 = 1e-15;
/// Slack allowed on a probability before it is clamped into `[0, 1]`.
pub const PROBABILITY_SLACK: f64 = 1e-12;

/// A finite positive-operator valued measure. Outcome order is the
/// constructor's order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PovmRepr", into = "PovmRepr")]
pub struct Povm {
    dim: usize,
    effects: Vec<ComplexMatrix>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct PovmRepr {
    dim: usize,
    effects: Vec<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<PovmRepr> for Povm {
    type Error = Error;

    fn try_from(r: PovmRepr) -> Result<Self> {
        let povm = Povm::with_labels(r.effects, r.labels)?;
        if povm.dim != r.dim {
            return Err(Error::Dimension(format!(
                "declared dim {} but effects have dim {}",
                r.dim, povm.dim
            )));
        }
        Ok(povm)
    }
}

impl From<Povm> for PovmRepr {
    fn from(p: Povm) -> Self {
        PovmRepr {
            dim: p.dim,
            effects: p.effects,
            labels: p.labels,
        }
    }
}

impl Povm {
    pub fn new(effects: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_labels(effects, None)
    }

    pub fn with_labels(effects: Vec<ComplexMatrix>, labels: Option<Vec<String>>) -> Result<Self> {
        let dim = common_dim(effects.iter())?;
        if let Some(l) = &labels {
            if l.len() != effects.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} effects",
                    l.len(),
                    effects.len()
                )));
            }
        }
        for (k, e) in effects.iter().enumerate() {
            if !e.is_hermitian(crate::qstate::HERMITIAN_TOL) {
                return Err(Error::InvalidArgument(format!("effect {k} is not Hermitian")));
            }
            let min = e.min_eigenvalue();
            if min < -PSD_TOL {
                return Err(Error::InvalidArgument(format!(
                    "effect {k} is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        check_completeness(&effects, dim, "effects")?;
        Ok(Self {
            dim,
            effects: effects.into_iter().map(|e| e.hermitian_part()).collect(),
            labels,
        })
    }

    /// The single-outcome trivial measurement.
    pub fn trivial(dim: usize) -> Self {
        Self {
            dim,
            effects: vec![ComplexMatrix::identity(dim)],
            labels: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn effect(&self, outcome: usize) -> Result<&ComplexMatrix> {
        self.effects.get(outcome).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "outcome {outcome} out of range for {} outcomes",
                self.effects.len()
            ))
        })
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Raw `tr(E_k ρ)` without clamping; the single likelihood kernel.
    pub fn likelihood(&self, r: &DensityOperator, outcome: usize) -> Result<f64> {
        self.check_dim(r.dim())?;
        Ok(self.effect(outcome)?.trace_product(r.matrix()).re)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::Dimension(format!(
                "measurement acts on dimension {}, state has dimension {dim}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Per-outcome lists of Kraus operators `A_kl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperationRepr", into = "OperationRepr")]
pub struct QuantumOperation {
    dim: usize,
    outcomes: Vec<Vec<ComplexMatrix>>,
}

#[derive(Serialize, Deserialize)]
struct OperationRepr {
    dim: usize,
    outcomes: Vec<Vec<ComplexMatrix>>,
}

impl TryFrom<OperationRepr> for QuantumOperation {
    type Error = Error;

    fn try_from(r: OperationRepr) -> Result<Self> {
        let op = QuantumOperation::new(r.outcomes)?;
        if op.dim != r.dim {
            return Err(Error::Dimension(format!(
                "declared dim {} but Kraus operators have dim {}",
                r.dim, op.dim
            )));
        }
        Ok(op)
    }
}

impl From<QuantumOperation> for OperationRepr {
    fn from(op: QuantumOperation) -> Self {
        OperationRepr {
            dim: op.dim,
            outcomes: op.outcomes,
        }
    }
}

impl QuantumOperation {
    pub fn new(outcomes: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if outcomes.iter().any(|k| k.is_empty()) {
            return Err(Error::InvalidArgument(
                "every outcome needs at least one Kraus operator".into(),
            ));
        }
        let dim = common_dim(outcomes.iter().flatten())?;
        let effects: Vec<ComplexMatrix> = outcomes.iter().map(|k| effect_of(k, dim)).collect();
        check_completeness(&effects, dim, "Kraus operators")?;
        Ok(Self { dim, outcomes })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            outcomes: vec![vec![ComplexMatrix::identity(dim)]],
        }
    }

    /// One Kraus operator per outcome: `P_k` for each projector.
    pub fn projective(projectors: Vec<ComplexMatrix>) -> Result<Self> {
        Self::new(projectors.into_iter().map(|p| vec![p]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn kraus(&self, outcome: usize) -> Result<&[ComplexMatrix]> {
        self.outcomes.get(outcome).map(Vec::as_slice).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "outcome {outcome} out of range for {} outcomes",
                self.outcomes.len()
            ))
        })
    }

    pub fn outcomes(&self) -> &[Vec<ComplexMatrix>] {
        &self.outcomes
    }
}

fn common_dim<'a>(mut ms: impl Iterator<Item = &'a ComplexMatrix>) -> Result<usize> {
    let first = ms
        .next()
        .ok_or_else(|| Error::InvalidArgument("measurement needs at least one outcome".into()))?;
    let dim = first.dim();
    if ms.any(|m| m.dim() != dim) {
        return Err(Error::Dimension("operators have differing dimensions".into()));
    }
    Ok(dim)
}

fn effect_of(kraus: &[ComplexMatrix], dim: usize) -> ComplexMatrix {
    kraus
        .iter()
        .fold(ComplexMatrix::zeros(dim), |acc, a| acc.add(&a.adjoint().mul(a)))
}

fn check_completeness(effects: &[ComplexMatrix], dim: usize, what: &str) -> Result<()> {
    let sum = effects
        .iter()
        .fold(ComplexMatrix::zeros(dim), |acc, e| acc.add(e));
    let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim));
    if defect > COMPLETENESS_TOL {
        return Err(Error::InvalidArgument(format!(
            "{what} do not resolve the identity (defect {defect:e})"
        )));
    }
    Ok(())
}

/// `E_k = Σ_l A_kl† A_kl`.
pub fn povm_from_operation(op: &QuantumOperation) -> Povm {
    Povm {
        dim: op.dim,
        effects: op
            .outcomes
            .iter()
            .map(|k| effect_of(k, op.dim).hermitian_part())
            .collect(),
        labels: None,
    }
}

/// Clamps a probability into `[0, 1]` after checking it is within slack.
pub fn checked_probability(p: f64) -> Result<f64> {
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
        return Err(Error::InvalidState(format!(
            "probability {p} is outside [0, 1] beyond round-off"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `p_k = tr(E_k ρ)` for every outcome.
pub fn outcome_probabilities(r: &DensityOperator, p: &Povm) -> Result<Vec<f64>> {
    p.check_dim(r.dim())?;
    p.effects
        .iter()
        .map(|e| checked_probability(e.trace_product(r.matrix()).re))
        .collect()
}

/// Unnormalized post-measurement operator `F_k(ρ) = Σ_l A_kl ρ A_kl†` and its trace.
pub fn apply_operation(
    r: &DensityOperator,
    op: &QuantumOperation,
    outcome: usize,
) -> Result<(ComplexMatrix, f64)> {
    if r.dim() != op.dim {
        return Err(Error::Dimension(format!(
            "operation acts on dimension {}, state has dimension {}",
            op.dim,
            r.dim()
        )));
    }
    let unnormalized = apply_kraus(r.matrix(), op.kraus(outcome)?);
    let p = unnormalized.trace().re;
    if p < IMPOSSIBLE_OUTCOME_TOL {
        return Err(Error::ImpossibleOutcome {
            outcome,
            probability: p,
        });
    }
    Ok((unnormalized, checked_probability(p)?))
}

/// Normalized post-measurement state `F_k(ρ)/p_k`.
pub fn post_measurement_state(
    r: &DensityOperator,
    op: &QuantumOperation,
    outcome: usize,
) -> Result<DensityOperator> {
    let (f, p) = apply_operation(r, op, outcome)?;
    Ok(DensityOperator::from_trusted(f.scale(1.0 / p)))
}

pub(crate) fn apply_kraus(m: &ComplexMatrix, kraus: &[ComplexMatrix]) -> ComplexMatrix {
    kraus
        .iter()
        .fold(ComplexMatrix::zeros(m.dim()), |acc, a| acc.add(&a.sandwich(m)))
}

fn unit_axis(axis: [f64; 3]) -> Result<[f64; 3]> {
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "axis {axis:?} is not a unit vector (norm {norm})"
        )));
    }
    Ok(axis)
}

/// Spin measurement along `axis`: outcome 0 is `+1`, outcome 1 is `-1`,
/// with projectors `(1 ± n·σ)/2`.
pub fn projective_spin_povm(axis: [f64; 3]) -> Result<QuantumOperation> {
    let n = unit_axis(axis)?;
    let half_id = ComplexMatrix::identity(2).scale(0.5);
    let half_ns = ComplexMatrix::pauli_combination(n).scale(0.5);
    let plus = half_id.add(&half_ns);
    let minus = half_id.sub(&half_ns);
    QuantumOperation::projective(vec![plus, minus])
}

/// Vertices of the regular tetrahedron inscribed in the unit sphere.
pub fn tetrahedron_vertices() -> [[f64; 3]; 4] {
    let s2 = std::f64::consts::SQRT_2;
    let s6 = 6f64.sqrt();
    [
        [0.0, 0.0, 1.0],
        [2.0 * s2 / 3.0, 0.0, -1.0 / 3.0],
        [-s2 / 3.0, s6 / 3.0, -1.0 / 3.0],
        [-s2 / 3.0, -s6 / 3.0, -1.0 / 3.0],
    ]
}

/// Qubit SIC-POVM with effects `(1 + n_j·σ)/4`.
pub fn tetrahedral_sic_povm() -> Povm {
    let effects = tetrahedron_vertices()
        .iter()
        .map(|&n| {
            ComplexMatrix::identity(2)
                .add(&ComplexMatrix::pauli_combination(n))
                .scale(0.25)
        })
        .collect();
    Povm::with_labels(
        effects,
        Some((0..4).map(|j| format!("sic{j}")).collect()),
    )
    .expect("tetrahedral effects form a POVM")
}

/// Haar-random unitary via Gram–Schmidt on a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for q in &cols {
            let proj: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        cols.push(v.into_iter().map(|z| z / norm).collect());
    }
    let m = DMatrix::from_fn(dim, dim, |r, c| cols[c][r]);
    ComplexMatrix::from_dmatrix(m).expect("finite unitary")
}

/// Two-outcome operation read off a Haar-random unitary on system ⊗ qubit
/// ancilla: `A_k = (1 ⊗ ⟨k|) U (1 ⊗ |0⟩)`.
pub fn random_kraus_operation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> QuantumOperation {
    let u = haar_unitary(2 * dim, rng);
    let outcomes = (0..2)
        .map(|k| {
            let a = DMatrix::from_fn(dim, dim, |r, c| u.get(2 * r + k, 2 * c));
            vec![ComplexMatrix::from_dmatrix(a).expect("finite")]
        })
        .collect();
    QuantumOperation::new(outcomes).expect("isometry yields a complete operation")
}

/// Rank-one projective measurement in a Haar-random orthonormal basis.
pub fn random_projective_operation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> QuantumOperation {
    let u = haar_unitary(dim, rng);
    let projectors = (0..dim)
        .map(|c| {
            let col: Vec<Complex64> = (0..dim).map(|r| u.get(r, c)).collect();
            ComplexMatrix::projector(&col)
        })
        .collect();
    QuantumOperation::projective(projectors).expect("orthonormal basis is complete")
}
