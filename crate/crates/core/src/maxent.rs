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

//! Maximum-entropy state assignment under expectation-value constraints.
//!
//! The solver minimizes the convex dual `ln tr exp(−Σ λ_j O_j) + λ·e` with
//! damped Newton steps. Its gradient is `e − ⟨O⟩` and its Hessian is the
//! Kubo–Mori covariance of the observables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bayes::{
    bayes_update, posterior_predictive_counts, product_state_predictive, PredictiveDistribution,
};
use crate::error::{Error, Result};
use crate::exchangeable::{marginal_state, Ensemble};
use crate::measurement::{povm_from_operation, projective_spin_povm, IMPOSSIBLE_OUTCOME_TOL};
use crate::qstate::{
    check_power_capacity, density_from_bloch, bloch_from_density, trace_distance,
    von_neumann_entropy, BlochVector, ComplexMatrix, DensityOperator, DEFAULT_DIM_CAP,
    HERMITIAN_TOL,
};

pub const DEFAULT_MAXENT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;
pub const MULTIPLIER_LIMIT: f64 = 1e6;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

/// Observables `O_j` with target expectation values `e_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    observables: Vec<ComplexMatrix>,
    targets: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(observables: Vec<ComplexMatrix>, targets: Vec<f64>) -> Result<Self> {
        if observables.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} observables for {} targets",
                observables.len(),
                targets.len()
            )));
        }
        for (j, o) in observables.iter().enumerate() {
            if !o.is_hermitian(HERMITIAN_TOL) {
                return Err(Error::InvalidArgument(format!(
                    "observable {j} is not Hermitian (defect {:.3e})",
                    o.hermiticity_defect()
                )));
            }
            if o.dim() != observables[0].dim() {
                return Err(Error::Dimension(format!(
                    "observable {j} has dimension {}, expected {}",
                    o.dim(),
                    observables[0].dim()
                )));
            }
        }
        if let Some(j) = targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("target {j} is not finite")));
        }
        let observables = observables.into_iter().map(|o| o.hermitian_part()).collect();
        Ok(Self {
            observables,
            targets,
        })
    }

    pub fn empty() -> Self {
        Self {
            observables: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Spin-component constraints `⟨n_j·σ⟩ = e_j` on a qubit.
    pub fn spin(axes: &[[f64; 3]], targets: &[f64]) -> Result<Self> {
        Self::new(
            axes.iter().map(|&a| ComplexMatrix::pauli_combination(a)).collect(),
            targets.to_vec(),
        )
    }

    pub fn observables(&self) -> &[ComplexMatrix] {
        &self.observables
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// The same single-subsystem constraints imposed on each of `n`
    /// subsystems of dimension `d`.
    pub fn on_each_subsystem(&self, d: usize, n: usize) -> Result<Self> {
        check_power_capacity(d, n, DEFAULT_DIM_CAP)?;
        let mut observables = Vec::with_capacity(self.len() * n);
        let mut targets = Vec::with_capacity(self.len() * n);
        for (o, &t) in self.observables.iter().zip(&self.targets) {
            if o.dim() != d {
                return Err(Error::Dimension(format!(
                    "observable of dimension {} on subsystems of dimension {d}",
                    o.dim()
                )));
            }
            for pos in 0..n {
                let mut lifted = ComplexMatrix::identity(1);
                for j in 0..n {
                    let factor = if j == pos {
                        o.clone()
                    } else {
                        ComplexMatrix::identity(d)
                    };
                    lifted = lifted.kron_capped(&factor, DEFAULT_DIM_CAP)?;
                }
                observables.push(lifted);
                targets.push(t);
            }
        }
        Ok(Self {
            observables,
            targets,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxEntSolution {
    pub state: DensityOperator,
    pub multipliers: Vec<f64>,
    /// Von Neumann entropy in nats.
    pub entropy: f64,
    /// `tr(ρ O_j) − e_j`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Dual objective after each accepted step, starting at `λ = 0`.
    pub dual_history: Vec<f64>,
}

/// Gibbs state of `H = Σ λ_j O_j` with everything the Newton step needs.
struct Gibbs {
    dual: f64,
    expectations: Vec<f64>,
    hessian: DMatrix<f64>,
    state: ComplexMatrix,
    min_probability: f64,
}

fn gibbs(c: &ConstraintSet, dim: usize, lambda: &[f64], with_hessian: bool) -> Gibbs {
    let mut h = ComplexMatrix::zeros(dim);
    for (o, &l) in c.observables.iter().zip(lambda) {
        h = h.add(&o.scale(l));
    }
    let eig = h.eigh();
    let mu0 = eig.values[0];
    let unnorm: Vec<f64> = eig.values.iter().map(|&m| (-(m - mu0)).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    let p: Vec<f64> = unnorm.iter().map(|u| u / z).collect();
    let dual = -mu0 + z.ln() + lambda.iter().zip(&c.targets).map(|(l, e)| l * e).sum::<f64>();

    let v = &eig.vectors;
    let rotated: Vec<DMatrix<_>> = c
        .observables
        .iter()
        .map(|o| v.adjoint() * o.as_dmatrix() * v)
        .collect();
    let expectations: Vec<f64> = rotated
        .iter()
        .map(|o| (0..dim).map(|a| p[a] * o[(a, a)].re).sum())
        .collect();

    let m = c.len();
    let mut hessian = DMatrix::zeros(m, m);
    if with_hessian && m > 0 {
        let mut kernel = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                kernel[(a, b)] = kubo_mori(p[a], p[b], eig.values[b] - eig.values[a]);
            }
        }
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        s += kernel[(a, b)] * (rotated[i][(a, b)] * rotated[j][(b, a)]).re;
                    }
                }
                let cov = s - expectations[i] * expectations[j];
                hessian[(i, j)] = cov;
                hessian[(j, i)] = cov;
            }
        }
    }
    Gibbs {
        dual,
        expectations,
        hessian,
        state: ComplexMatrix::from_spectrum(&p, v),
        min_probability: p.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// `∫_0^1 p_a^s p_b^(1−s) ds` where `ln p_a − ln p_b = delta`.
fn kubo_mori(pa: f64, pb: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        return pa;
    }
    let (big, d) = if delta > 0.0 { (pa, delta) } else { (pb, -delta) };
    big * (-(-d).exp_m1()) / d
}

/// Solves `(H + ridge) x = rhs`, growing the ridge until the Cholesky
/// factorization succeeds. Dependent observables make `H` singular.
fn newton_direction(hessian: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = hessian.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        let mut h = hessian.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(rhs);
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 10.0 };
    }
}

/// Maximum-entropy state on a `dim`-dimensional space with constraint
/// residuals at most `tol`.
pub fn maxent_state(c: &ConstraintSet, dim: usize, tol: f64) -> Result<MaxEntSolution> {
    if dim == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    if dim > DEFAULT_DIM_CAP {
        return Err(Error::Capacity {
            dim,
            cap: DEFAULT_DIM_CAP,
        });
    }
    if let Some(o) = c.observables.first() {
        if o.dim() != dim {
            return Err(Error::Dimension(format!(
                "observables have dimension {}, expected {dim}",
                o.dim()
            )));
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let m = c.len();
    let mut lambda = vec![0.0; m];
    let mut g = gibbs(c, dim, &lambda, true);
    let mut dual_history = vec![g.dual];
    let mut iterations = 0;
    loop {
        let grad = DVector::from_iterator(
            m,
            c.targets.iter().zip(&g.expectations).map(|(e, o)| e - o),
        );
        if grad.amax() <= tol || m == 0 {
            break;
        }
        if iterations == MAX_ITERATIONS {
            return Err(Error::NoInteriorSolution(format!(
                "no convergence after {MAX_ITERATIONS} iterations (residual {:.3e})",
                grad.amax()
            )));
        }
        iterations += 1;
        let step = newton_direction(&g.hessian, &(-&grad));
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, s)| l + t * s).collect();
            let next = gibbs(c, dim, &trial, false);
            let slack = 4.0 * f64::EPSILON * g.dual.abs().max(1.0);
            if next.dual.is_finite() && next.dual <= g.dual + ARMIJO * t * slope + slack {
                break Some(trial);
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(next) = accepted else {
            return Err(Error::NoInteriorSolution(format!(
                "line search stalled at residual {:.3e}",
                grad.amax()
            )));
        };
        lambda = next;
        let norm = lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > MULTIPLIER_LIMIT {
            return Err(Error::NoInteriorSolution(format!(
                "multipliers diverge (|λ| = {norm:.3e}); targets are infeasible or on the boundary"
            )));
        }
        g = gibbs(c, dim, &lambda, true);
        dual_history.push(g.dual);
    }
    // A residual within tolerance can still sit on the boundary, where the
    // Gibbs state is numerically rank-deficient.
    if g.min_probability <= tol {
        return Err(Error::NoInteriorSolution(format!(
            "solution is numerically rank-deficient (smallest eigenvalue {:.3e})",
            g.min_probability
        )));
    }
    let state = DensityOperator::from_trusted(g.state);
    let residuals = c
        .observables
        .iter()
        .zip(&c.targets)
        .map(|(o, e)| state.expectation(o) - e)
        .collect();
    Ok(MaxEntSolution {
        entropy: von_neumann_entropy(&state),
        state,
        multipliers: lambda,
        residuals,
        iterations,
        dual_history,
    })
}

/// Closed form `½(1 + e_z σ_z)`, valid on the boundary too.
pub fn maxent_qubit_z(e_z: f64) -> Result<DensityOperator> {
    if !e_z.is_finite() || e_z.abs() > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "⟨σ_z⟩ must lie in [−1, 1], got {e_z}"
        )));
    }
    Ok(density_from_bloch(BlochVector::new(0.0, 0.0, e_z)?))
}

/// Outcome of one extra spin measurement applied to both schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCheck {
    pub axis: [f64; 3],
    /// `+1` or `−1`; `+1` unless it is impossible under the posterior.
    pub outcome: i8,
    /// Trace distance moved by the Bayes marginal.
    pub bayes_shift: f64,
    /// Trace distance moved by the single-atom ensemble of the MAXENT state.
    pub maxent_shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesMaxEntReport {
    pub constraint_axes: Vec<[f64; 3]>,
    pub constraint_targets: Vec<f64>,
    pub bayes_marginal_bloch: [f64; 3],
    pub maxent_bloch: [f64; 3],
    pub marginal_trace_distance: f64,
    pub future_axis: [f64; 3],
    pub shots: usize,
    pub bayes_predictive: PredictiveDistribution,
    pub maxent_predictive: PredictiveDistribution,
    pub predictive_total_variation: f64,
    pub learning: LearningCheck,
}

pub const PAULI_AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Compares the Bayes posterior with the MAXENT assignment constrained by
/// every spin component of the posterior mean.
pub fn bayes_vs_maxent_report(
    posterior: &Ensemble,
    axis_future: [f64; 3],
    n: usize,
) -> Result<BayesMaxEntReport> {
    bayes_vs_maxent_report_with(posterior, axis_future, n, &PAULI_AXES)
}

/// As [`bayes_vs_maxent_report`], constraining only the spin components
/// along `constraint_axes`, with targets taken from the posterior mean.
pub fn bayes_vs_maxent_report_with(
    posterior: &Ensemble,
    axis_future: [f64; 3],
    n: usize,
    constraint_axes: &[[f64; 3]],
) -> Result<BayesMaxEntReport> {
    if posterior.dim() != 2 {
        return Err(Error::Dimension(format!(
            "the comparison needs a qubit ensemble, got dimension {}",
            posterior.dim()
        )));
    }
    let marginal = marginal_state(posterior);
    let targets: Vec<f64> = constraint_axes
        .iter()
        .map(|&a| marginal.expectation(&ComplexMatrix::pauli_combination(a)))
        .collect();
    let constraints = ConstraintSet::spin(constraint_axes, &targets)?;
    let maxent = match maxent_state(&constraints, 2, DEFAULT_MAXENT_TOL) {
        Ok(sol) => sol.state,
        // On the boundary the unique MAXENT state is the pure state with
        // the constrained components; the Newton solver cannot reach it.
        Err(Error::NoInteriorSolution(_)) => boundary_state(constraint_axes, &targets)?,
        Err(e) => return Err(e),
    };
    let bayes_predictive = posterior_predictive_counts(posterior, axis_future, n)?;
    let maxent_predictive = product_state_predictive(&maxent, axis_future, n)?;

    let z = projective_spin_povm([0.0, 0.0, 1.0])?;
    let z = povm_from_operation(&z);
    let p_plus = z.effects()[0].trace_product(marginal.matrix()).re;
    let outcome = usize::from(p_plus < IMPOSSIBLE_OUTCOME_TOL);
    let (bayes_next, _) = bayes_update(posterior, &z, outcome)?;
    let maxent_prior = Ensemble::single(maxent.clone());
    let (maxent_next, _) = bayes_update(&maxent_prior, &z, outcome)?;

    Ok(BayesMaxEntReport {
        constraint_axes: constraint_axes.to_vec(),
        constraint_targets: targets,
        bayes_marginal_bloch: bloch_from_density(&marginal)?.to_array(),
        maxent_bloch: bloch_from_density(&maxent)?.to_array(),
        marginal_trace_distance: trace_distance(&marginal, &maxent)?,
        future_axis: axis_future,
        shots: n,
        predictive_total_variation: bayes_predictive.total_variation(&maxent_predictive)?,
        bayes_predictive,
        maxent_predictive,
        learning: LearningCheck {
            axis: [0.0, 0.0, 1.0],
            outcome: if outcome == 0 { 1 } else { -1 },
            bayes_shift: trace_distance(&marginal, &marginal_state(&bayes_next))?,
            maxent_shift: trace_distance(&maxent, &marginal_state(&maxent_next))?,
        },
    })
}

/// Bloch state with the given components along orthonormal axes and zero
/// elsewhere.
fn boundary_state(axes: &[[f64; 3]], targets: &[f64]) -> Result<DensityOperator> {
    let mut v = [0.0; 3];
    for (a, t) in axes.iter().zip(targets) {
        for i in 0..3 {
            v[i] += t * a[i];
        }
    }
    Ok(density_from_bloch(BlochVector::new(v[0], v[1], v[2])?))
}
