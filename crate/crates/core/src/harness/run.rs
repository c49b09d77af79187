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

//! Experiment execution.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, ExperimentKind, OracleSpec};
use crate::bayes::{
    bloch_table, counts_update, posterior_moments_cached, posterior_predictive_counts,
    update_with_log_likelihood, CountsModel,
};
use crate::error::{Error, Result};
use crate::exchangeable::{draw_outcome, marginal_state, Ensemble};
use crate::maxent::bayes_vs_maxent_report_with;
use crate::measurement::outcome_probabilities;
use crate::oracle;
use crate::priors::discretize_prior;
use crate::qstate::{trace_distance, von_neumann_entropy, DensityOperator};
use crate::rng::{self, StreamRng};

/// Tomography reports whether the trial-averaged trace distance decreases
/// strictly across all checkpoints at or beyond this many shots.
pub const DECREASE_CHECK_FROM: u64 = 300;

/// One emitted quantity. `value` is a number, boolean, string or a JSON
/// array/object for multi-valued quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: u64,
    pub step: u64,
    pub quantity: String,
    pub value: Value,
    pub config_hash: String,
    pub seed: u64,
}

/// A quantity reduced over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub step: u64,
    pub quantity: String,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub trial_count: u64,
    pub row_count: usize,
    pub passed: BTreeMap<String, bool>,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

struct Sink {
    config_hash: String,
    seed: u64,
    rows: Vec<ResultRow>,
}

impl Sink {
    fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            seed,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, trial: u64, step: u64, quantity: &str, value: impl Serialize) -> Result<()> {
        self.rows.push(ResultRow {
            trial,
            step,
            quantity: quantity.to_string(),
            value: serde_json::to_value(value)?,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        });
        Ok(())
    }
}

fn trial_rng(seed: u64, trial: u64) -> StreamRng {
    rng::stream(seed, rng::streams::TRIAL_BASE + trial)
}

fn simulate_counts<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..shots {
        counts[draw_outcome(probs, rng)] += 1;
    }
    counts
}

/// Prior plus cached Bloch table, shared by all trials.
struct Prepared {
    prior: Ensemble,
    blochs: Option<Vec<[f64; 3]>>,
}

impl Prepared {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let spec = config
            .prior
            .as_ref()
            .ok_or_else(|| Error::config("prior", "missing"))?;
        let prior = discretize_prior(spec)?;
        let blochs = if prior.dim() == 2 {
            Some(bloch_table(&prior)?)
        } else {
            None
        };
        Ok(Self { prior, blochs })
    }

    fn moment_rows(&self, sink: &mut Sink, trial: u64, step: u64, e: &Ensemble) -> Result<DensityOperator> {
        let mean = match &self.blochs {
            Some(b) => {
                let m = posterior_moments_cached(e, b)?;
                sink.push(trial, step, "mean_bloch", m.mean_bloch.to_array())?;
                sink.push(trial, step, "variances", m.variances)?;
                m.mean_state
            }
            None => marginal_state(e),
        };
        sink.push(trial, step, "mean_state_entropy", von_neumann_entropy(&mean))?;
        sink.push(trial, step, "effective_size", e.effective_size())?;
        Ok(mean)
    }
}

/// Applies the plan block by block; step `0` is the prior and step `i + 1`
/// follows plan block `i`.
fn infer(config: &ExperimentConfig, prep: &Prepared, trial: u64, sink: &mut Sink) -> Result<Ensemble> {
    let mut g = trial_rng(config.seed, trial);
    let truth = config.true_state.as_ref().map(|t| t.density());
    let mut posterior = prep.prior.clone();
    prep.moment_rows(sink, trial, 0, &posterior)?;
    for (i, step) in config.plan.iter().enumerate() {
        let resolved = config.resolve_step(i)?;
        let counts = match (&step.counts, &truth) {
            (Some(c), _) => c.clone(),
            (None, Some(t)) => simulate_counts(&outcome_probabilities(t, &resolved.povm)?, step.shots, &mut g),
            (None, None) => return Err(Error::config("true_state", "required to simulate the plan")),
        };
        let update = counts_update(&posterior, &resolved.povm, &counts)?;
        let s = i as u64 + 1;
        sink.push(trial, s, "shots", step.shots)?;
        sink.push(trial, s, "counts", &counts)?;
        sink.push(trial, s, "log_evidence", update.log_evidence)?;
        posterior = update.posterior;
        prep.moment_rows(sink, trial, s, &posterior)?;
    }
    Ok(posterior)
}

fn per_trial<F>(config: &ExperimentConfig, hash: &str, f: F) -> Result<Vec<ResultRow>>
where
    F: Fn(u64, &mut Sink) -> Result<()> + Sync,
{
    let chunks = (0..config.trial_count)
        .into_par_iter()
        .map(|t| {
            let mut sink = Sink::new(hash, config.seed);
            f(t, &mut sink)?;
            Ok(sink.rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn run_counts(config: &ExperimentConfig, hash: &str, predictive: bool) -> Result<Vec<ResultRow>> {
    let prep = Prepared::new(config)?;
    let last = config.plan.len() as u64;
    per_trial(config, hash, |t, sink| {
        let posterior = infer(config, &prep, t, sink)?;
        if let (true, Some(f)) = (predictive, &config.future) {
            let p = posterior_predictive_counts(&posterior, f.axis, f.shots)?;
            sink.push(t, last, "predictive_mean", p.mean())?;
            sink.push(t, last, "predictive", &p.probabilities)?;
        }
        Ok(())
    })
}

fn run_maxent(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRow>> {
    let prep = Prepared::new(config)?;
    let last = config.plan.len() as u64;
    let axes = config.maxent_axes()?;
    let future = config
        .future
        .as_ref()
        .ok_or_else(|| Error::config("future", "missing"))?;
    per_trial(config, hash, |t, sink| {
        let posterior = infer(config, &prep, t, sink)?;
        let r = bayes_vs_maxent_report_with(&posterior, future.axis, future.shots, &axes)?;
        sink.push(t, last, "constraint_axes", &r.constraint_axes)?;
        sink.push(t, last, "constraint_targets", &r.constraint_targets)?;
        sink.push(t, last, "bayes_marginal_bloch", r.bayes_marginal_bloch)?;
        sink.push(t, last, "maxent_bloch", r.maxent_bloch)?;
        sink.push(t, last, "marginal_trace_distance", r.marginal_trace_distance)?;
        sink.push(t, last, "bayes_predictive", &r.bayes_predictive.probabilities)?;
        sink.push(t, last, "maxent_predictive", &r.maxent_predictive.probabilities)?;
        sink.push(t, last, "predictive_total_variation", r.predictive_total_variation)?;
        sink.push(t, last, "learning_outcome", r.learning.outcome)?;
        sink.push(t, last, "learning_bayes_shift", r.learning.bayes_shift)?;
        sink.push(t, last, "learning_maxent_shift", r.learning.maxent_shift)?;
        Ok(())
    })
}

/// Everything a tomography trial needs that does not depend on the trial.
pub struct TomographySetup {
    prep: Prepared,
    truth: DensityOperator,
    checkpoints: Vec<u64>,
    /// One model per distinct measurement in the plan.
    models: Vec<CountsModel>,
    /// Outcome probabilities under the true state, per model.
    probs: Vec<Vec<f64>>,
    /// `(model index, shots)` per plan block.
    blocks: Vec<(usize, u64)>,
    seed: u64,
    hash: String,
}

impl TomographySetup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != ExperimentKind::Tomography {
            return Err(Error::config("kind", "expected tomography"));
        }
        let prep = Prepared::new(config)?;
        let truth = config
            .true_state
            .as_ref()
            .ok_or_else(|| Error::config("true_state", "missing"))?
            .density();
        let mut keys: Vec<String> = Vec::new();
        let mut models = Vec::new();
        let mut probs = Vec::new();
        let mut blocks = Vec::new();
        for (i, step) in config.plan.iter().enumerate() {
            let r = config.resolve_step(i)?;
            let m = match keys.iter().position(|k| *k == r.key) {
                Some(m) => m,
                None => {
                    keys.push(r.key.clone());
                    probs.push(outcome_probabilities(&truth, &r.povm)?);
                    models.push(CountsModel::new(prep.prior.clone(), &r.povm)?);
                    models.len() - 1
                }
            };
            blocks.push((m, step.shots));
        }
        Ok(Self {
            prep,
            truth,
            checkpoints: config.checkpoints(),
            models,
            probs,
            blocks,
            seed: config.seed,
            hash: config.config_hash()?,
        })
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    /// Simulates one trial shot by shot and reports at every checkpoint;
    /// `step` is the cumulative shot count.
    pub fn trial(&self, trial: u64) -> Result<Vec<ResultRow>> {
        let mut sink = Sink::new(&self.hash, self.seed);
        let mut g = trial_rng(self.seed, trial);
        let mut counts: Vec<Vec<u64>> = self.probs.iter().map(|p| vec![0; p.len()]).collect();
        let mut next = self.checkpoints.iter().peekable();
        let mut done = 0u64;
        for &(m, shots) in &self.blocks {
            for _ in 0..shots {
                counts[m][draw_outcome(&self.probs[m], &mut g)] += 1;
                done += 1;
                if next.peek() == Some(&&done) {
                    next.next();
                    self.checkpoint(&mut sink, trial, done, &counts)?;
                }
            }
        }
        Ok(sink.rows)
    }

    fn checkpoint(&self, sink: &mut Sink, trial: u64, step: u64, counts: &[Vec<u64>]) -> Result<()> {
        let mut ll = vec![0.0; self.prep.prior.len()];
        for (model, c) in self.models.iter().zip(counts) {
            if c.iter().all(|&n| n == 0) {
                continue;
            }
            for (acc, l) in ll.iter_mut().zip(model.log_likelihood(c)?) {
                *acc += l;
            }
        }
        let update = update_with_log_likelihood(&self.prep.prior, &ll, 0)?;
        let mean = self.prep.moment_rows(sink, trial, step, &update.posterior)?;
        sink.push(trial, step, "log_evidence", update.log_evidence)?;
        sink.push(trial, step, "trace_distance", trace_distance(&mean, &self.truth)?)?;
        Ok(())
    }
}

/// Rows of one tomography trial.
pub fn tomography_trial(config: &ExperimentConfig, trial: u64) -> Result<Vec<ResultRow>> {
    TomographySetup::new(config)?.trial(trial)
}

fn run_tomography(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let setup = TomographySetup::new(config)?;
    let chunks = (0..config.trial_count)
        .into_par_iter()
        .map(|t| setup.trial(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn run_oracle(config: &ExperimentConfig, hash: &str) -> Result<(Vec<ResultRow>, BTreeMap<String, bool>)> {
    let spec = config.oracle.clone().unwrap_or_default();
    let OracleSpec {
        cases,
        tolerance,
        entangled_cases,
    } = spec;
    let results = oracle::run_oracle(config.seed, cases, tolerance)?;
    let mut sink = Sink::new(hash, config.seed);
    let mut passed = BTreeMap::new();
    let mut all = true;
    let mut routes = true;
    for r in &results {
        let i = r.index;
        sink.push(0, i, "operation", r.kind)?;
        sink.push(0, i, "atoms", r.atoms)?;
        sink.push(0, i, "dim", r.dim)?;
        sink.push(0, i, "n_total", r.n_total)?;
        sink.push(0, i, "outcome", r.outcome)?;
        sink.push(0, i, "p_k_bayes", r.report.p_k_bayes)?;
        sink.push(0, i, "p_k_brute", r.report.p_k_brute)?;
        sink.push(0, i, "p_k_routes", r.p_k_routes)?;
        sink.push(0, i, "trace_distance_posterior", r.report.trace_distance_posterior)?;
        sink.push(0, i, "marginal_distances", &r.report.marginal_distances)?;
        sink.push(0, i, "pass", r.report.pass)?;
        all &= r.report.pass;
        routes &= r.triple_spread() <= oracle::PROBABILITY_ROUTE_TOL;
    }
    passed.insert("all_cases_pass".into(), all);
    passed.insert("probability_routes_agree".into(), routes);
    if entangled_cases > 0 {
        let reports = (0..entangled_cases as u64)
            .into_par_iter()
            .map(|i| oracle::run_entangled_case(config.seed, i, tolerance))
            .collect::<Result<Vec<_>>>()?;
        let mut broken = false;
        for (i, rep) in reports.iter().enumerate() {
            let i = i as u64;
            sink.push(1, i, "trace_distance_posterior", rep.trace_distance_posterior)?;
            sink.push(1, i, "p_k_bayes", rep.p_k_bayes)?;
            sink.push(1, i, "p_k_brute", rep.p_k_brute)?;
            sink.push(1, i, "pass", rep.pass)?;
            broken |= !rep.pass;
        }
        passed.insert("entanglement_breaks_equivalence".into(), broken);
    }
    Ok((sink.rows, passed))
}

fn mean_over_trials(rows: &[ResultRow], quantity: &str) -> Vec<Aggregate> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.quantity == quantity) {
        if let Some(v) = r.value.as_f64() {
            let e = acc.entry(r.step).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(step, (s, n))| Aggregate {
            step,
            quantity: format!("mean_{quantity}"),
            value: Value::from(s / n as f64),
        })
        .collect()
}

/// Runs the configured experiment. Rows are ordered by `(trial, step)` and
/// then by emission order, independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let hash = config.config_hash()?;
    let mut passed = BTreeMap::new();
    let mut aggregates = Vec::new();
    let mut rows = match config.kind {
        ExperimentKind::QubitCounts => run_counts(config, &hash, true)?,
        ExperimentKind::Predict => run_counts(config, &hash, true)?,
        ExperimentKind::MaxentCompare => {
            let rows = run_maxent(config, &hash)?;
            aggregates.extend(mean_over_trials(&rows, "marginal_trace_distance"));
            aggregates.extend(mean_over_trials(&rows, "predictive_total_variation"));
            rows
        }
        ExperimentKind::Tomography => {
            let rows = run_tomography(config)?;
            let means = mean_over_trials(&rows, "trace_distance");
            let tail: Vec<f64> = means
                .iter()
                .filter(|a| a.step >= DECREASE_CHECK_FROM)
                .filter_map(|a| a.value.as_f64())
                .collect();
            passed.insert(
                "mean_trace_distance_decreasing".into(),
                tail.windows(2).all(|w| w[1] < w[0]),
            );
            aggregates.extend(means);
            rows
        }
        ExperimentKind::VerifyOracle => {
            let (rows, flags) = run_oracle(config, &hash)?;
            passed.extend(flags);
            rows
        }
    };
    if matches!(config.kind, ExperimentKind::QubitCounts | ExperimentKind::Predict) {
        aggregates.extend(mean_over_trials(&rows, "effective_size"));
    }
    rows.sort_by_key(|r| (r.trial, r.step));
    Ok(RunOutput {
        summary: Summary {
            kind: config.kind,
            config_hash: hash,
            seed: config.seed,
            trial_count: config.trial_count,
            row_count: rows.len(),
            passed,
            aggregates,
        },
        rows,
    })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    match threads {
        None => run_experiment(config),
        Some(0) => Err(Error::InvalidArgument("thread count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run_experiment(config)),
    }
}
