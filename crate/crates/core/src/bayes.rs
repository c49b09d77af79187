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

//! The quantum Bayes rule on ensembles.
//!
//! Measuring one copy of `Σ_i w_i ρ_i^{⊗N}` with outcome `k` leaves
//! `Σ_i w_i' ρ_i^{⊗(N−1)}` with `w_i' ∝ w_i tr(E_k ρ_i)`. Atom states never
//! change. Likelihoods are accumulated in log space and normalized once per
//! call, so long count records do not underflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exchangeable::Ensemble;
use crate::measurement::{
    checked_probability, povm_from_operation, projective_spin_povm, Povm, IMPOSSIBLE_OUTCOME_TOL,
};
use crate::qstate::{
    bloch_from_density, density_from_bloch, tensor_power_capped, BlochVector, DensityOperator,
    DEFAULT_DIM_CAP,
};

/// Largest number of future shots a predictive distribution is built for.
pub const MAX_PREDICTIVE_SHOTS: usize = 10_000;

/// Atom count above which per-atom likelihoods are evaluated in parallel.
const PARALLEL_THRESHOLD: usize = 2048;

fn per_atom<F>(e: &Ensemble, f: F) -> Result<Vec<f64>>
where
    F: Fn(&DensityOperator) -> Result<f64> + Sync,
{
    // Collecting in index order keeps every downstream reduction sequential
    // and therefore bitwise reproducible.
    if e.len() >= PARALLEL_THRESHOLD {
        e.states().par_iter().map(&f).collect()
    } else {
        e.states().iter().map(f).collect()
    }
}

fn per_atom_rows<F>(e: &Ensemble, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&DensityOperator) -> Result<Vec<f64>> + Sync,
{
    if e.len() >= PARALLEL_THRESHOLD {
        e.states().par_iter().map(&f).collect()
    } else {
        e.states().iter().map(f).collect()
    }
}

fn likelihoods(e: &Ensemble, f: impl Fn(&DensityOperator) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    per_atom(e, |r| checked_probability(f(r)?))
}

/// Applies likelihoods `l_i` to the prior and returns `(posterior, p_k)`.
fn reweight(prior: &Ensemble, lik: &[f64], outcome: usize) -> Result<(Ensemble, f64)> {
    let evidence: f64 = prior.weights().iter().zip(lik).map(|(w, l)| w * l).sum();
    if evidence < IMPOSSIBLE_OUTCOME_TOL {
        return Err(Error::ImpossibleOutcome {
            outcome,
            probability: evidence,
        });
    }
    let log_weights = prior
        .log_weights()
        .iter()
        .zip(lik)
        .map(|(lw, l)| lw + l.ln())
        .collect();
    Ok((prior.reweighted(log_weights)?, evidence))
}

/// Posterior after observing `outcome` of `povm` on one copy, and the
/// outcome's prior predictive probability `p_k = Σ_i w_i tr(E_k ρ_i)`.
pub fn bayes_update(prior: &Ensemble, povm: &Povm, outcome: usize) -> Result<(Ensemble, f64)> {
    if povm.dim() != prior.dim() {
        return Err(Error::Dimension(format!(
            "POVM acts on dimension {}, ensemble atoms have dimension {}",
            povm.dim(),
            prior.dim()
        )));
    }
    let effect = povm.effect(outcome)?;
    let lik = likelihoods(prior, |r| Ok(effect.trace_product(r.matrix()).re))?;
    reweight(prior, &lik, outcome)
}

/// Update from a collective measurement on `copies` subsystems at once,
/// with likelihood `tr(E_k ρ_i^{⊗m})`.
pub fn bayes_update_collective(
    prior: &Ensemble,
    povm: &Povm,
    copies: usize,
    outcome: usize,
) -> Result<(Ensemble, f64)> {
    bayes_update_collective_capped(prior, povm, copies, outcome, DEFAULT_DIM_CAP)
}

pub fn bayes_update_collective_capped(
    prior: &Ensemble,
    povm: &Povm,
    copies: usize,
    outcome: usize,
    cap: usize,
) -> Result<(Ensemble, f64)> {
    let joint = crate::qstate::check_power_capacity(prior.dim(), copies, cap)?;
    if povm.dim() != joint {
        return Err(Error::Dimension(format!(
            "collective POVM has dimension {}, expected {}^{} = {joint}",
            povm.dim(),
            prior.dim(),
            copies
        )));
    }
    let effect = povm.effect(outcome)?;
    let lik = likelihoods(prior, |r| {
        let big = tensor_power_capped(r, copies, cap)?;
        Ok(effect.trace_product(big.matrix()).re)
    })?;
    reweight(prior, &lik, outcome)
}

/// Result of a batched count update.
#[derive(Clone, Debug)]
pub struct CountsUpdate {
    pub posterior: Ensemble,
    /// Log probability of the specific ordered outcome sequence under the prior.
    pub log_evidence: f64,
}

/// Batched update for outcome counts of a single POVM; equivalent to
/// applying `bayes_update` once per shot in any order.
pub fn counts_update(prior: &Ensemble, povm: &Povm, counts: &[u64]) -> Result<CountsUpdate> {
    CountsModel::new(prior.clone(), povm)?.update(counts)
}

/// A prior together with the log-likelihood of every outcome of one POVM at
/// every atom. Repeated count updates against the same prior then cost one
/// pass over the weights.
#[derive(Clone, Debug)]
pub struct CountsModel {
    prior: Ensemble,
    outcomes: usize,
    /// Atom-major `ln tr(E_k ρ_i)`.
    ln_lik: Vec<f64>,
}

impl CountsModel {
    pub fn new(prior: Ensemble, povm: &Povm) -> Result<Self> {
        if povm.dim() != prior.dim() {
            return Err(Error::Dimension(format!(
                "POVM acts on dimension {}, ensemble atoms have dimension {}",
                povm.dim(),
                prior.dim()
            )));
        }
        let rows = per_atom_rows(&prior, |r| {
            povm.effects()
                .iter()
                .map(|e| checked_probability(e.trace_product(r.matrix()).re).map(f64::ln))
                .collect()
        })?;
        Ok(Self {
            prior,
            outcomes: povm.len(),
            ln_lik: rows.into_iter().flatten().collect(),
        })
    }

    pub fn prior(&self) -> &Ensemble {
        &self.prior
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    /// Per-atom `Σ_k n_k ln tr(E_k ρ_i)`.
    pub fn log_likelihood(&self, counts: &[u64]) -> Result<Vec<f64>> {
        if counts.len() != self.outcomes {
            return Err(Error::InvalidArgument(format!(
                "{} counts for a {}-outcome POVM",
                counts.len(),
                self.outcomes
            )));
        }
        Ok(self
            .ln_lik
            .chunks_exact(self.outcomes)
            .map(|row| {
                let mut acc = 0.0;
                for (&n, &l) in counts.iter().zip(row) {
                    if n > 0 {
                        acc += n as f64 * l;
                    }
                }
                acc
            })
            .collect())
    }

    /// Posterior and log evidence after the given outcome counts.
    pub fn update(&self, counts: &[u64]) -> Result<CountsUpdate> {
        let ll = self.log_likelihood(counts)?;
        let outcome = counts.iter().position(|&n| n > 0).unwrap_or(0);
        update_with_log_likelihood(&self.prior, &ll, outcome)
    }
}

/// Reweights `prior` by per-atom log-likelihoods. `outcome` only labels the
/// error when every atom has likelihood zero.
pub fn update_with_log_likelihood(
    prior: &Ensemble,
    log_likelihood: &[f64],
    outcome: usize,
) -> Result<CountsUpdate> {
    if log_likelihood.len() != prior.len() {
        return Err(Error::InvalidArgument(format!(
            "{} log-likelihoods for {} atoms",
            log_likelihood.len(),
            prior.len()
        )));
    }
    let unnormalized: Vec<f64> = prior
        .log_weights()
        .iter()
        .zip(log_likelihood)
        .map(|(lw, ll)| lw + ll)
        .collect();
    let max = unnormalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ImpossibleOutcome {
            outcome,
            probability: 0.0,
        });
    }
    let log_evidence = max + unnormalized.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(CountsUpdate {
        posterior: prior.reweighted(unnormalized)?,
        log_evidence,
    })
}

/// Posterior after `n_plus` results of `+1` and `n_minus` results of `−1`
/// from spin measurements along `axis`: `w_i ∝ w_i a_i^{n+} (1−a_i)^{n−}`
/// with `a_i = (1 + axis·b_i)/2`.
pub fn qubit_counts_update(
    prior: &Ensemble,
    axis: [f64; 3],
    n_plus: u64,
    n_minus: u64,
) -> Result<Ensemble> {
    qubit_counts_update_with_evidence(prior, axis, n_plus, n_minus).map(|u| u.posterior)
}

pub fn qubit_counts_update_with_evidence(
    prior: &Ensemble,
    axis: [f64; 3],
    n_plus: u64,
    n_minus: u64,
) -> Result<CountsUpdate> {
    require_qubit(prior)?;
    let povm = povm_from_operation(&projective_spin_povm(axis)?);
    counts_update(prior, &povm, &[n_plus, n_minus])
}

fn require_qubit(e: &Ensemble) -> Result<()> {
    if e.dim() != 2 {
        return Err(Error::Dimension(format!(
            "qubit ensemble required, atoms have dimension {}",
            e.dim()
        )));
    }
    Ok(())
}

/// Weighted moments of the atom Bloch vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean_bloch: BlochVector,
    pub mean_state: DensityOperator,
    /// Per-component variances of `(x, y, z)`.
    pub variances: [f64; 3],
}

pub fn posterior_moments(e: &Ensemble) -> Result<PosteriorMoments> {
    posterior_moments_cached(e, &bloch_table(e)?)
}

/// Bloch vectors of every atom, for repeated moment evaluations on
/// reweightings of one ensemble.
pub fn bloch_table(e: &Ensemble) -> Result<Vec<[f64; 3]>> {
    require_qubit(e)?;
    e.states()
        .iter()
        .map(|r| bloch_from_density(r).map(BlochVector::to_array))
        .collect()
}

/// [`posterior_moments`] with the atom Bloch vectors supplied.
pub fn posterior_moments_cached(e: &Ensemble, blochs: &[[f64; 3]]) -> Result<PosteriorMoments> {
    require_qubit(e)?;
    if blochs.len() != e.len() {
        return Err(Error::InvalidArgument(format!(
            "{} Bloch vectors for {} atoms",
            blochs.len(),
            e.len()
        )));
    }
    let mut mean = [0.0; 3];
    for (w, b) in e.weights().iter().zip(blochs) {
        for c in 0..3 {
            mean[c] += w * b[c];
        }
    }
    let mut var = [0.0; 3];
    for (w, b) in e.weights().iter().zip(blochs) {
        for c in 0..3 {
            var[c] += w * (b[c] - mean[c]).powi(2);
        }
    }
    let mean_bloch = BlochVector::new(mean[0], mean[1], mean[2])?;
    Ok(PosteriorMoments {
        mean_bloch,
        mean_state: density_from_bloch(mean_bloch),
        variances: var,
    })
}

/// Distribution of the number of `+1` results among `n` future spin
/// measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub total_shots: usize,
    /// `probabilities[n_plus]` for `n_plus` in `0..=total_shots`.
    pub probabilities: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.total_shots != other.total_shots {
            return Err(Error::InvalidArgument(format!(
                "predictives over {} and {} shots",
                self.total_shots, other.total_shots
            )));
        }
        Ok(0.5
            * self
                .probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln(a^k (1−a)^(n−k))` with `0^0 = 1`.
fn ln_bernoulli_run(a: f64, n: usize, k: usize) -> f64 {
    let term = |count: usize, p: f64| if count == 0 { 0.0 } else { count as f64 * p.ln() };
    term(k, a) + term(n - k, 1.0 - a)
}

/// `p(N+) = Σ_i w_i C(n, N+) a_i^{N+} (1−a_i)^{n−N+}`, `a_i = (1 + axis·b_i)/2`.
pub fn posterior_predictive_counts(
    e: &Ensemble,
    axis: [f64; 3],
    n: usize,
) -> Result<PredictiveDistribution> {
    require_qubit(e)?;
    if n > MAX_PREDICTIVE_SHOTS {
        return Err(Error::InvalidArgument(format!(
            "predictive shot count {n} exceeds {MAX_PREDICTIVE_SHOTS}"
        )));
    }
    let plus = povm_from_operation(&projective_spin_povm(axis)?);
    let a = likelihoods(e, |r| Ok(plus.effects()[0].trace_product(r.matrix()).re))?;
    let ln_c: Vec<f64> = (0..=n).map(|k| ln_binomial(n, k)).collect();
    let mut probabilities = vec![0.0; n + 1];
    for (w, &ai) in e.weights().iter().zip(&a) {
        if *w == 0.0 {
            continue;
        }
        for (k, p) in probabilities.iter_mut().enumerate() {
            *p += w * (ln_c[k] + ln_bernoulli_run(ai, n, k)).exp();
        }
    }
    Ok(PredictiveDistribution {
        total_shots: n,
        probabilities,
    })
}

/// Binomial predictive for `n` spin measurements on the product state `ρ^{⊗n}`.
pub fn product_state_predictive(
    state: &DensityOperator,
    axis: [f64; 3],
    n: usize,
) -> Result<PredictiveDistribution> {
    posterior_predictive_counts(&Ensemble::single(state.clone()), axis, n)
}

/// Discrete Bayes rule `posterior_i = l_i p_i / Σ_j l_j p_j`.
pub fn classical_bayes(prior: &[f64], likelihood: &[f64]) -> Result<Vec<f64>> {
    if prior.len() != likelihood.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prior entries for {} likelihoods",
            prior.len(),
            likelihood.len()
        )));
    }
    if likelihood.iter().chain(prior).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "priors and likelihoods must be finite and nonnegative".into(),
        ));
    }
    let evidence: f64 = prior.iter().zip(likelihood).map(|(p, l)| p * l).sum();
    if !(evidence > 0.0) {
        return Err(Error::ImpossibleOutcome {
            outcome: 0,
            probability: evidence,
        });
    }
    Ok(prior
        .iter()
        .zip(likelihood)
        .map(|(p, l)| l * p / evidence)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchangeable::marginal_state;
    use crate::measurement::{outcome_probabilities, random_kraus_operation, tetrahedral_sic_povm};
    use crate::priors::{discretize_prior, PriorSpec};
    use crate::qstate::ComplexMatrix;
    use crate::rng;
    use num_complex::Complex64;
    use proptest::prelude::*;

    const X: [f64; 3] = [1.0, 0.0, 0.0];
    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    fn zstate(z: f64) -> DensityOperator {
        density_from_bloch(BlochVector::new(0.0, 0.0, z).unwrap())
    }

    fn sz() -> Povm {
        povm_from_operation(&projective_spin_povm(Z).unwrap())
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn trivial_povm_leaves_prior() {
        let prior = discretize_prior(&PriorSpec::uniform_ball(50, 1)).unwrap();
        let (post, pk) = bayes_update(&prior, &Povm::trivial(2), 0).unwrap();
        assert!((pk - 1.0).abs() < 1e-15);
        assert!(max_diff(post.weights(), prior.weights()) < 1e-15);
        assert!(post.shares_atoms_with(&prior));
    }

    #[test]
    fn bayes_update_examples() {
        let prior = Ensemble::new(vec![(0.5, zstate(1.0)), (0.5, zstate(-1.0))]).unwrap();
        let (post, pk) = bayes_update(&prior, &sz(), 0).unwrap();
        assert_eq!(post.weights(), &[1.0, 0.0]);
        assert!((pk - 0.5).abs() < 1e-15);

        let prior = Ensemble::new(vec![(0.5, zstate(0.5)), (0.5, zstate(-0.5))]).unwrap();
        let (post, pk) = bayes_update(&prior, &sz(), 0).unwrap();
        assert!(max_diff(post.weights(), &[0.75, 0.25]) < 1e-15);
        assert!((pk - 0.5).abs() < 1e-15);
    }

    #[test]
    fn impossible_outcome_is_an_error() {
        let prior = Ensemble::single(zstate(1.0));
        assert!(matches!(
            bayes_update(&prior, &sz(), 1),
            Err(Error::ImpossibleOutcome { outcome: 1, .. })
        ));
        assert!(matches!(
            qubit_counts_update(&prior, Z, 3, 1),
            Err(Error::ImpossibleOutcome { .. })
        ));
        assert!(bayes_update(&prior, &Povm::trivial(3), 0).is_err());
    }

    #[test]
    fn collective_examples() {
        let prior = discretize_prior(&PriorSpec::uniform_ball(20, 4)).unwrap();
        let (a, pa) = bayes_update_collective(&prior, &sz(), 1, 1).unwrap();
        let (b, pb) = bayes_update(&prior, &sz(), 1).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(pa, pb);

        let trivial = Povm::trivial(4);
        let (c, pc) = bayes_update_collective(&prior, &trivial, 2, 0).unwrap();
        assert!(max_diff(c.weights(), prior.weights()) < 1e-15);
        assert!((pc - 1.0).abs() < 1e-14);

        // Singlet projector: brute-force 4x4 traces per atom against the
        // closed form (1 − |b|²)/4.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = Complex64::new(0.0, 0.0);
        let singlet = ComplexMatrix::projector(&[zero, Complex64::new(s, 0.0), Complex64::new(-s, 0.0), zero]);
        let rest = ComplexMatrix::identity(4).sub(&singlet);
        let povm = Povm::new(vec![singlet.clone(), rest]).unwrap();
        let (post, pk) = bayes_update_collective(&prior, &povm, 2, 0).unwrap();
        let brute: Vec<f64> = prior
            .states()
            .iter()
            .map(|r| {
                let rr = r.matrix().kron_capped(r.matrix(), 16).unwrap();
                singlet.mul(&rr).trace().re
            })
            .collect();
        for (r, l) in prior.states().iter().zip(&brute) {
            let b = bloch_from_density(r).unwrap();
            assert!((l - (1.0 - b.norm_squared()) / 4.0).abs() < 1e-14);
        }
        let expected = classical_bayes(prior.weights(), &brute).unwrap();
        assert!(max_diff(post.weights(), &expected) < 1e-14);
        let ev: f64 = prior.weights().iter().zip(&brute).map(|(w, l)| w * l).sum();
        assert!((pk - ev).abs() < 1e-15);

        assert!(matches!(
            bayes_update_collective(&prior, &povm, 3, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn counts_examples() {
        let prior = Ensemble::uniform(vec![zstate(-0.5), zstate(0.0), zstate(0.5)]).unwrap();
        let same = qubit_counts_update(&prior, Z, 0, 0).unwrap();
        assert_eq!(same.weights(), prior.weights());

        let post = qubit_counts_update(&prior, Z, 1, 0).unwrap();
        assert!(max_diff(post.weights(), &[1.0 / 6.0, 1.0 / 3.0, 0.5]) < 1e-15);

        let sym = discretize_prior(&PriorSpec::Atoms {
            atoms: [-0.8, -0.3, 0.3, 0.8]
                .iter()
                .map(|&z| crate::priors::AtomSpec {
                    weight: 0.25,
                    bloch: Some(BlochVector::new(0.0, 0.0, z).unwrap()),
                    matrix: None,
                })
                .collect(),
        })
        .unwrap();
        let post = qubit_counts_update(&sym, Z, 40, 40).unwrap();
        assert!(posterior_moments(&post).unwrap().mean_bloch.z().abs() < 1e-15);
    }

    #[test]
    fn moments_examples() {
        let r = density_from_bloch(BlochVector::new(0.1, -0.2, 0.3).unwrap());
        let m = posterior_moments(&Ensemble::single(r.clone())).unwrap();
        assert!(m.mean_state.matrix().max_abs_diff(r.matrix()) < 1e-15);
        assert_eq!(m.variances, [0.0; 3]);

        let two = Ensemble::new(vec![(0.5, zstate(1.0)), (0.5, zstate(-1.0))]).unwrap();
        let m = posterior_moments(&two).unwrap();
        assert_eq!(m.mean_bloch.to_array(), [0.0, 0.0, 0.0]);
        assert!((m.variances[2] - 1.0).abs() < 1e-15);
        assert!(m.mean_state.matrix().max_abs_diff(marginal_state(&two).matrix()) < 1e-15);
    }

    #[test]
    fn predictive_examples() {
        let prior = discretize_prior(&PriorSpec::bures(300, 8)).unwrap();
        let axis = [0.6, 0.0, 0.8];
        let pred = posterior_predictive_counts(&prior, axis, 1).unwrap();
        let mean = posterior_moments(&prior).unwrap().mean_bloch;
        assert!((pred.probabilities[1] - (1.0 + mean.dot(axis)) / 2.0).abs() < 1e-12);

        let x0: Vec<DensityOperator> = [(0.0, 0.3), (0.0, -0.7), (0.5, 0.5)]
            .iter()
            .map(|&(y, z)| density_from_bloch(BlochVector::new(0.0, y, z).unwrap()))
            .collect();
        let e = Ensemble::uniform(x0).unwrap();
        for n in 0..=20usize {
            let pred = posterior_predictive_counts(&e, X, n).unwrap();
            for (k, p) in pred.probabilities.iter().enumerate() {
                let exact = binomial(n, k) / 2f64.powi(n as i32);
                assert!((p - exact).abs() < 1e-10);
            }
        }

        let two = Ensemble::new(vec![
            (0.5, density_from_bloch(BlochVector::new(1.0, 0.0, 0.0).unwrap())),
            (0.5, density_from_bloch(BlochVector::new(-1.0, 0.0, 0.0).unwrap())),
        ])
        .unwrap();
        let pred = posterior_predictive_counts(&two, X, 2).unwrap();
        assert!(max_diff(&pred.probabilities, &[0.5, 0.0, 0.5]) < 1e-15);
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn classical_examples() {
        assert_eq!(classical_bayes(&[0.2, 0.8], &[0.3, 0.3]).unwrap(), vec![0.2, 0.8]);
        let post = classical_bayes(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert!(max_diff(&post, &[0.75, 0.25]) < 1e-15);
        assert_eq!(classical_bayes(&[0.3, 0.3, 0.4], &[0.0, 0.9, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            classical_bayes(&[0.5, 0.5], &[0.0, 0.0]),
            Err(Error::ImpossibleOutcome { .. })
        ));
    }

    #[test]
    fn long_records_do_not_underflow() {
        let prior = discretize_prior(&PriorSpec::uniform_ball(500, 2)).unwrap();
        let post = qubit_counts_update(&prior, Z, 7_500, 2_500).unwrap();
        assert!(post.weights().iter().all(|w| w.is_finite()));
        assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = posterior_moments(&post).unwrap().mean_bloch.z();
        assert!((z - 0.5).abs() < 0.05);
    }

    #[test]
    fn sic_counts_match_iterated_updates() {
        let prior = discretize_prior(&PriorSpec::uniform_ball(64, 5)).unwrap();
        let sic = tetrahedral_sic_povm();
        let seq = [0usize, 3, 1, 1, 2, 0, 3, 3, 2];
        let mut it = prior.clone();
        let mut log_ev = 0.0;
        for &k in &seq {
            let (next, p) = bayes_update(&it, &sic, k).unwrap();
            log_ev += p.ln();
            it = next;
        }
        let mut counts = [0u64; 4];
        for &k in &seq {
            counts[k] += 1;
        }
        let batch = counts_update(&prior, &sic, &counts).unwrap();
        assert!(max_diff(batch.posterior.weights(), it.weights()) < 1e-12);
        assert!((batch.log_evidence - log_ev).abs() < 1e-12);
    }

    fn ensemble_strategy() -> impl Strategy<Value = Ensemble> {
        (1usize..8, any::<u64>()).prop_map(|(n, seed)| {
            let mut e = discretize_prior(&PriorSpec::uniform_ball(n, seed)).unwrap();
            // Uneven weights.
            let w: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            e = Ensemble::from_unnormalized(w, e.states().to_vec()).unwrap();
            e
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn update_keeps_atoms_and_matches_classical(e in ensemble_strategy(), seed in any::<u64>(), k in 0usize..2) {
            let op = random_kraus_operation(2, &mut rng::stream(seed, 0));
            let povm = povm_from_operation(&op);
            let lik: Vec<f64> = e.states().iter().map(|r| povm.likelihood(r, k).unwrap()).collect();
            if let Ok((post, pk)) = bayes_update(&e, &povm, k) {
                prop_assert!(post.shares_atoms_with(&e));
                prop_assert_eq!(post.states(), e.states());
                let classical = classical_bayes(e.weights(), &lik).unwrap();
                prop_assert!(max_diff(post.weights(), &classical) <= 1e-15);
                let marginal = outcome_probabilities(&marginal_state(&e), &povm).unwrap()[k];
                prop_assert!((pk - marginal).abs() < 1e-12);
                prop_assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn updates_commute(e in ensemble_strategy(), seed in any::<u64>(), k1 in 0usize..2, k2 in 0usize..2) {
            let p1 = povm_from_operation(&random_kraus_operation(2, &mut rng::stream(seed, 1)));
            let p2 = povm_from_operation(&random_kraus_operation(2, &mut rng::stream(seed, 2)));
            let ab = bayes_update(&e, &p1, k1).and_then(|(x, _)| bayes_update(&x, &p2, k2));
            let ba = bayes_update(&e, &p2, k2).and_then(|(x, _)| bayes_update(&x, &p1, k1));
            if let (Ok((ab, _)), Ok((ba, _))) = (ab, ba) {
                prop_assert!(max_diff(ab.weights(), ba.weights()) < 1e-12);
            }
        }

        #[test]
        fn single_atom_never_learns(b in (-0.57f64..0.57, -0.57f64..0.57, -0.57f64..0.57), seed in any::<u64>(), k in 0usize..2) {
            let e = Ensemble::single(density_from_bloch(BlochVector::new(b.0, b.1, b.2).unwrap()));
            let povm = povm_from_operation(&random_kraus_operation(2, &mut rng::stream(seed, 3)));
            let (post, _) = bayes_update(&e, &povm, k).unwrap();
            prop_assert_eq!(post.weights(), e.weights());
            prop_assert_eq!(post.states(), e.states());
        }

        #[test]
        fn batch_equals_iterated(seed in any::<u64>(), n_plus in 0u64..120, n_minus in 0u64..80) {
            let prior = discretize_prior(&PriorSpec::uniform_ball(40, seed)).unwrap();
            let axis = [0.0, 0.6, 0.8];
            let povm = povm_from_operation(&projective_spin_povm(axis).unwrap());
            let mut it = prior.clone();
            for k in std::iter::repeat_n(1, n_minus as usize).chain(std::iter::repeat_n(0, n_plus as usize)) {
                it = bayes_update(&it, &povm, k).unwrap().0;
            }
            let batch = qubit_counts_update(&prior, axis, n_plus, n_minus).unwrap();
            prop_assert!(max_diff(batch.weights(), it.weights()) < 1e-12);
        }

        #[test]
        fn predictive_is_normalized(e in ensemble_strategy(), n in 0usize..=64) {
            let pred = posterior_predictive_counts(&e, [0.0, 1.0, 0.0], n).unwrap();
            prop_assert_eq!(pred.probabilities.len(), n + 1);
            prop_assert!((pred.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(pred.probabilities.iter().all(|&p| p >= 0.0));
        }
    }
}
