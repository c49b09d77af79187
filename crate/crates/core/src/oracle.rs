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

//! Brute-force check of the ensemble Bayes rule.
//!
//! The oracle materializes the full `n`-copy exchangeable state, applies the
//! Kraus operators to the first subsystem, normalizes, and traces that
//! subsystem out. The result must equal the reweighted ensemble expanded to
//! `n − 1` copies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::bayes_update;
use crate::error::{Error, Result};
use crate::exchangeable::{expand_to_copies_capped, Ensemble, MeasurementRecord};
use crate::measurement::{
    apply_kraus, haar_unitary, povm_from_operation, projective_spin_povm,
    random_kraus_operation, random_projective_operation, QuantumOperation,
    IMPOSSIBLE_OUTCOME_TOL,
};
use crate::qstate::{
    check_power_capacity, density_from_bloch, partial_trace, trace_distance, BlochVector,
    ComplexMatrix, DensityOperator, DEFAULT_DIM_CAP,
};
use crate::rng;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_CASES: usize = 200;
/// Agreement required between the three routes to `p_k`.
pub const PROBABILITY_ROUTE_TOL: f64 = 1e-12;
pub const MAX_ATOMS: usize = 4;
pub const MAX_SUBSYSTEMS: usize = 5;

/// Comparison of the two posterior routes for one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub p_k_bayes: f64,
    pub p_k_brute: f64,
    pub trace_distance_posterior: f64,
    /// Single-subsystem trace distances, one per remaining subsystem.
    pub marginal_distances: Vec<f64>,
    pub pass: bool,
    pub tolerance: f64,
}

impl EquivalenceReport {
    fn new(
        p_k_bayes: f64,
        p_k_brute: f64,
        trace_distance_posterior: f64,
        marginal_distances: Vec<f64>,
        tolerance: f64,
    ) -> Self {
        let pass = trace_distance_posterior <= tolerance
            && marginal_distances.iter().all(|&d| d <= tolerance)
            && (p_k_bayes - p_k_brute).abs() <= tolerance;
        Self {
            p_k_bayes,
            p_k_brute,
            trace_distance_posterior,
            marginal_distances,
            pass,
            tolerance,
        }
    }
}

fn require_subsystems(n_total: usize) -> Result<()> {
    if n_total < 2 {
        return Err(Error::InvalidArgument(
            "the oracle needs at least two subsystems (one measured, one kept)".into(),
        ));
    }
    Ok(())
}

/// `A ⊗ 1` on the first of `n_total` subsystems.
fn on_first(a: &ComplexMatrix, d: usize, n_total: usize, cap: usize) -> Result<ComplexMatrix> {
    let rest = check_power_capacity(d, n_total - 1, cap)?;
    a.kron_capped(&ComplexMatrix::identity(rest), cap)
}

/// Measures subsystem 1 of an explicit `n_total`-subsystem state and returns
/// the normalized reduced state of the rest together with `p_k`.
pub fn brute_force_posterior_of_state(
    state: &DensityOperator,
    d: usize,
    n_total: usize,
    op: &QuantumOperation,
    outcome: usize,
) -> Result<(DensityOperator, f64)> {
    require_subsystems(n_total)?;
    if op.dim() != d {
        return Err(Error::Dimension(format!(
            "operation dimension {} differs from subsystem dimension {d}",
            op.dim()
        )));
    }
    let total = check_power_capacity(d, n_total, DEFAULT_DIM_CAP)?;
    if state.dim() != total {
        return Err(Error::Dimension(format!(
            "state dimension {} is not {d}^{n_total}",
            state.dim()
        )));
    }
    let lifted: Vec<ComplexMatrix> = op
        .kraus(outcome)?
        .iter()
        .map(|a| on_first(a, d, n_total, DEFAULT_DIM_CAP))
        .collect::<Result<_>>()?;
    let unnormalized = apply_kraus(state.matrix(), &lifted);
    let p_k = unnormalized.trace().re;
    if p_k < IMPOSSIBLE_OUTCOME_TOL {
        return Err(Error::ImpossibleOutcome {
            outcome,
            probability: p_k,
        });
    }
    let normalized = DensityOperator::from_trusted(unnormalized.scale(1.0 / p_k));
    let keep: Vec<usize> = (1..n_total).collect();
    let reduced = partial_trace(&normalized, &vec![d; n_total], &keep)?;
    Ok((reduced, p_k))
}

/// Brute-force posterior for an exchangeable prior: build `Σ w_i ρ_i^{⊗n}`,
/// measure subsystem 1, trace it out.
pub fn brute_force_posterior(
    prior: &Ensemble,
    n_total: usize,
    op: &QuantumOperation,
    outcome: usize,
) -> Result<(DensityOperator, f64)> {
    require_subsystems(n_total)?;
    let state = expand_to_copies_capped(prior, n_total, DEFAULT_DIM_CAP)?;
    brute_force_posterior_of_state(&state, prior.dim(), n_total, op, outcome)
}

fn compare(
    brute: &DensityOperator,
    p_k_brute: f64,
    prior: &Ensemble,
    n_total: usize,
    op: &QuantumOperation,
    outcome: usize,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    let (posterior, p_k_bayes) = bayes_update(prior, &povm_from_operation(op), outcome)?;
    let expanded = expand_to_copies_capped(&posterior, n_total - 1, DEFAULT_DIM_CAP)?;
    let distance = trace_distance(&expanded, brute)?;
    let dims = vec![prior.dim(); n_total - 1];
    let marginals = (0..n_total - 1)
        .map(|j| {
            let a = partial_trace(&expanded, &dims, &[j])?;
            let b = partial_trace(brute, &dims, &[j])?;
            trace_distance(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::new(
        p_k_bayes, p_k_brute, distance, marginals, tolerance,
    ))
}

/// Compares the brute-force posterior against the ensemble Bayes rule.
pub fn equivalence_report(
    prior: &Ensemble,
    n_total: usize,
    op: &QuantumOperation,
    outcome: usize,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    let (brute, p_k_brute) = brute_force_posterior(prior, n_total, op, outcome)?;
    compare(&brute, p_k_brute, prior, n_total, op, outcome, tolerance)
}

/// Like [`equivalence_report`], but a unitary acting jointly on subsystems 1
/// and 2 is applied to the prior state before the measurement. An entangling
/// unitary breaks the premise of the Bayes rule, so the comparison is
/// expected to fail.
pub fn entangled_equivalence_report(
    prior: &Ensemble,
    n_total: usize,
    unitary: &ComplexMatrix,
    op: &QuantumOperation,
    outcome: usize,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    require_subsystems(n_total)?;
    let d = prior.dim();
    if unitary.dim() != d * d {
        return Err(Error::Dimension(format!(
            "two-subsystem unitary must have dimension {}, got {}",
            d * d,
            unitary.dim()
        )));
    }
    let state = expand_to_copies_capped(prior, n_total, DEFAULT_DIM_CAP)?;
    let rest = check_power_capacity(d, n_total - 2, DEFAULT_DIM_CAP)?;
    let lifted = unitary.kron_capped(&ComplexMatrix::identity(rest), DEFAULT_DIM_CAP)?;
    let rotated = DensityOperator::from_trusted(lifted.sandwich(state.matrix()));
    let (brute, p_k_brute) = brute_force_posterior_of_state(&rotated, d, n_total, op, outcome)?;
    compare(&brute, p_k_brute, prior, n_total, op, outcome, tolerance)
}

/// Three routes to `p_k`: the full trace `tr F_k(ρ^(n))`, the marginal trace
/// `tr(E_k ρ^(1))` with `ρ^(1)` obtained by partial trace of the full
/// state, and the ensemble average `Σ_i w_i tr(E_k ρ_i)`.
pub fn probability_triple_check(
    prior: &Ensemble,
    op: &QuantumOperation,
    outcome: usize,
    n_total: usize,
) -> Result<(f64, f64, f64)> {
    if n_total == 0 {
        return Err(Error::InvalidArgument("need at least one subsystem".into()));
    }
    let d = prior.dim();
    let state = expand_to_copies_capped(prior, n_total, DEFAULT_DIM_CAP)?;
    let full = if n_total == 1 {
        apply_kraus(state.matrix(), op.kraus(outcome)?).trace().re
    } else {
        let lifted: Vec<ComplexMatrix> = op
            .kraus(outcome)?
            .iter()
            .map(|a| on_first(a, d, n_total, DEFAULT_DIM_CAP))
            .collect::<Result<_>>()?;
        apply_kraus(state.matrix(), &lifted).trace().re
    };
    let povm = povm_from_operation(op);
    let effect = povm.effect(outcome)?;
    let first = partial_trace(&state, &vec![d; n_total], &[0])?;
    let marginal = effect.trace_product(first.matrix()).re;
    let ensemble: f64 = prior
        .atoms()
        .map(|(w, r)| w * effect.trace_product(r.matrix()).re)
        .sum();
    Ok((full, marginal, ensemble))
}

/// Probability of an ordered record, measuring subsystem `j` with entry `j`,
/// computed on the explicit `(len + extra)`-copy state.
pub fn brute_force_record_probability(
    prior: &Ensemble,
    ops: &[QuantumOperation],
    record: &MeasurementRecord,
    extra: usize,
) -> Result<f64> {
    record.validate(ops)?;
    let d = prior.dim();
    let n = record.len() + extra;
    if n == 0 {
        return Ok(1.0);
    }
    let state = expand_to_copies_capped(prior, n, DEFAULT_DIM_CAP)?;
    let mut effect = ComplexMatrix::identity(1);
    for e in record.entries() {
        let povm = povm_from_operation(&ops[e.operation_id]);
        effect = effect.kron_capped(povm.effect(e.outcome)?, DEFAULT_DIM_CAP)?;
    }
    let rest = check_power_capacity(d, extra, DEFAULT_DIM_CAP)?;
    let effect = effect.kron_capped(&ComplexMatrix::identity(rest), DEFAULT_DIM_CAP)?;
    Ok(effect.trace_product(state.matrix()).re)
}

/// A randomized oracle case.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub prior: Ensemble,
    pub n_total: usize,
    pub operation: QuantumOperation,
    pub outcome: usize,
    pub kind: OperationKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperationKind {
    SpinProjective,
    BasisProjective,
    RandomKraus,
}

/// Random full-rank-or-not state: Haar eigenbasis, flat-Dirichlet spectrum.
fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityOperator {
    if d == 2 {
        loop {
            let v: [f64; 3] = [
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ];
            if let Ok(b) = BlochVector::new(v[0], v[1], v[2]) {
                return density_from_bloch(b);
            }
        }
    }
    let u = haar_unitary(d, rng);
    let mut spectrum: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = spectrum.iter().sum();
    spectrum.iter_mut().for_each(|p| *p /= total);
    DensityOperator::from_trusted(u.sandwich(&ComplexMatrix::diag(&spectrum)))
}

/// Draws case `index` of the seeded oracle run. Qubits throughout, with an
/// occasional qutrit case at three subsystems or fewer.
pub fn random_case(seed: u64, index: u64) -> OracleCase {
    let mut g = rng::stream(seed, rng::streams::ORACLE + index);
    let atoms = g.random_range(1..=MAX_ATOMS);
    let qutrit = index % 10 == 9;
    let (d, n_total) = if qutrit {
        (3, g.random_range(2..=3))
    } else {
        (2, g.random_range(2..=MAX_SUBSYSTEMS))
    };
    let states: Vec<DensityOperator> = (0..atoms).map(|_| random_state(d, &mut g)).collect();
    let weights: Vec<f64> = (0..atoms).map(|_| g.random::<f64>() + 0.05).collect();
    let prior = Ensemble::from_unnormalized(weights, states).expect("valid random prior");
    let kind = match index % 3 {
        0 if d == 2 => OperationKind::SpinProjective,
        0 | 1 => OperationKind::BasisProjective,
        _ => OperationKind::RandomKraus,
    };
    let operation = match kind {
        OperationKind::SpinProjective => {
            let dir = crate::priors::sample_pure_haar(1, g.random())[0].to_array();
            projective_spin_povm(dir).expect("unit axis")
        }
        OperationKind::BasisProjective => random_projective_operation(d, &mut g),
        OperationKind::RandomKraus => random_kraus_operation(d, &mut g),
    };
    // Pick an outcome with comfortably nonzero probability.
    let povm = povm_from_operation(&operation);
    let probs: Vec<f64> = (0..povm.len())
        .map(|k| {
            prior
                .atoms()
                .map(|(w, r)| w * povm.effects()[k].trace_product(r.matrix()).re)
                .sum()
        })
        .collect();
    let candidates: Vec<usize> = (0..probs.len()).filter(|&k| probs[k] > 1e-6).collect();
    let outcome = candidates[g.random_range(0..candidates.len())];
    OracleCase {
        prior,
        n_total,
        operation,
        outcome,
        kind,
    }
}

/// Result of one seeded oracle case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: u64,
    pub kind: OperationKind,
    pub atoms: usize,
    pub dim: usize,
    pub n_total: usize,
    pub outcome: usize,
    pub report: EquivalenceReport,
    /// Full-trace, marginal-trace, and ensemble-average `p_k`.
    pub p_k_routes: [f64; 3],
}

impl CaseResult {
    pub fn triple_spread(&self) -> f64 {
        let [a, b, c] = self.p_k_routes;
        (a - b).abs().max((a - c).abs()).max((b - c).abs())
    }
}

pub fn run_case(seed: u64, index: u64, tolerance: f64) -> Result<CaseResult> {
    let case = random_case(seed, index);
    let report = equivalence_report(
        &case.prior,
        case.n_total,
        &case.operation,
        case.outcome,
        tolerance,
    )?;
    let (a, b, c) =
        probability_triple_check(&case.prior, &case.operation, case.outcome, case.n_total)?;
    Ok(CaseResult {
        index,
        kind: case.kind,
        atoms: case.prior.len(),
        dim: case.prior.dim(),
        n_total: case.n_total,
        outcome: case.outcome,
        report,
        p_k_routes: [a, b, c],
    })
}

/// Runs `cases` seeded cases, in parallel, returned in index order.
pub fn run_oracle(seed: u64, cases: usize, tolerance: f64) -> Result<Vec<CaseResult>> {
    (0..cases as u64)
        .into_par_iter()
        .map(|i| run_case(seed, i, tolerance))
        .collect()
}

/// Seeded case `index` with a Haar-random unitary on subsystems 1 and 2
/// applied before the measurement.
pub fn run_entangled_case(seed: u64, index: u64, tolerance: f64) -> Result<EquivalenceReport> {
    let case = random_case(seed, index);
    let d = case.prior.dim();
    let mut g = rng::stream(seed, rng::streams::ORACLE + rng::streams::ENTANGLED_OFFSET + index);
    let unitary = haar_unitary(d * d, &mut g);
    entangled_equivalence_report(
        &case.prior,
        case.n_total,
        &unitary,
        &case.operation,
        case.outcome,
        tolerance,
    )
}
