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

//! Experiment configuration: a single JSON document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::MAX_PREDICTIVE_SHOTS;
use crate::error::{Error, Result};
use crate::measurement::{
    povm_from_operation, projective_spin_povm, tetrahedral_sic_povm, Povm,
};
use crate::oracle;
use crate::priors::PriorSpec;
use crate::qstate::{density_from_bloch, BlochVector, ComplexMatrix, DensityOperator};

/// Environment variable that replaces the configured seed.
pub const SEED_OVERRIDE_VAR: &str = "QBAYES_SEED_OVERRIDE";

const AXIS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    QubitCounts,
    Tomography,
    VerifyOracle,
    MaxentCompare,
    Predict,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::QubitCounts => "qubit-counts",
            ExperimentKind::Tomography => "tomography",
            ExperimentKind::VerifyOracle => "verify-oracle",
            ExperimentKind::MaxentCompare => "maxent-compare",
            ExperimentKind::Predict => "predict",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving the results file and `summary.json`.
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

/// One block of the measurement plan: a spin axis or a POVM id, a shot
/// count, and optionally the observed counts. Without counts the outcomes
/// are simulated from the true state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<String>,
    pub shots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
}

impl PlanStep {
    pub fn axis(axis: [f64; 3], shots: u64) -> Self {
        Self {
            axis: Some(axis),
            povm: None,
            shots,
            counts: None,
        }
    }

    pub fn povm(id: &str, shots: u64) -> Self {
        Self {
            axis: None,
            povm: Some(id.to_string()),
            shots,
            counts: None,
        }
    }

    pub fn with_counts(mut self, counts: Vec<u64>) -> Self {
        self.counts = Some(counts);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrueState {
    Bloch(BlochVector),
    Matrix(DensityOperator),
}

impl TrueState {
    pub fn density(&self) -> DensityOperator {
        match self {
            TrueState::Bloch(b) => density_from_bloch(*b),
            TrueState::Matrix(m) => m.clone(),
        }
    }
}

/// Future spin measurements to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FutureSpec {
    pub axis: [f64; 3],
    pub shots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Cases with an entangling unitary applied before the measurement.
    #[serde(default)]
    pub entangled_cases: usize,
}

fn default_cases() -> usize {
    oracle::DEFAULT_CASES
}

fn default_tolerance() -> f64 {
    oracle::DEFAULT_TOLERANCE
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            cases: default_cases(),
            tolerance: default_tolerance(),
            entangled_cases: 0,
        }
    }
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub plan: Vec<PlanStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_state: Option<TrueState>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trial_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Additional POVMs addressable from the plan by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub povms: BTreeMap<String, Povm>,
    /// Cumulative shot counts at which tomography reports; log-spaced by
    /// default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future: Option<FutureSpec>,
    /// Spin axes constraining the MAXENT state; defaults to the axes the
    /// plan measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_axes: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
}

/// A plan measurement resolved to a POVM.
#[derive(Clone, Debug)]
pub struct ResolvedStep {
    pub key: String,
    pub povm: Povm,
    /// Spin axes whose expectations the POVM determines.
    pub axes: Vec<[f64; 3]>,
}

pub use crate::maxent::PAULI_AXES;

/// Six-outcome POVM `(1 ± σ_j)/6`: a spin measurement along a uniformly
/// chosen coordinate axis.
pub fn pauli6_povm() -> Povm {
    let mut effects = Vec::with_capacity(6);
    let mut labels = Vec::with_capacity(6);
    for (j, name) in ["x", "y", "z"].iter().enumerate() {
        for (sign, s) in [(1.0, "+"), (-1.0, "-")] {
            let mut n = [0.0; 3];
            n[j] = sign;
            effects.push(
                ComplexMatrix::identity(2)
                    .add(&ComplexMatrix::pauli_combination(n))
                    .scale(1.0 / 6.0),
            );
            labels.push(format!("{name}{s}"));
        }
    }
    Povm::with_labels(effects, Some(labels)).expect("valid six-outcome POVM")
}

/// Built-in POVM ids: `sic`, `pauli6`, `x`, `y`, `z`.
pub fn builtin_povm(id: &str) -> Option<(Povm, Vec<[f64; 3]>)> {
    let spin = |j: usize| {
        let axis = PAULI_AXES[j];
        let op = projective_spin_povm(axis).expect("unit axis");
        (povm_from_operation(&op), vec![axis])
    };
    match id {
        "sic" => Some((tetrahedral_sic_povm(), PAULI_AXES.to_vec())),
        "pauli6" => Some((pauli6_povm(), PAULI_AXES.to_vec())),
        "x" => Some(spin(0)),
        "y" => Some(spin(1)),
        "z" => Some(spin(2)),
        _ => None,
    }
}

fn check_axis(field: &str, axis: [f64; 3]) -> Result<()> {
    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOL {
        return Err(Error::config(field, format!("axis must be a unit vector, has norm {norm}")));
    }
    Ok(())
}

/// Log-spaced checkpoints `1, 3, 10, 30, …` up to `total`, always ending at
/// `total`.
pub fn default_checkpoints(total: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for m in [decade, 3 * decade] {
            if m >= total {
                break 'outer;
            }
            out.push(m);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if total > 0 {
        out.push(total);
    }
    out
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `QBAYES_SEED_OVERRIDE` when it is set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        match std::env::var(SEED_OVERRIDE_VAR) {
            Ok(v) => {
                self.seed = v.trim().parse().map_err(|_| {
                    Error::config(SEED_OVERRIDE_VAR, format!("expected a 64-bit unsigned integer, got {v:?}"))
                })?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => Err(Error::config(SEED_OVERRIDE_VAR, e.to_string())),
        }
    }

    /// SHA-256 of the canonical JSON form (object keys sorted).
    pub fn config_hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(&serde_json::to_value(self)?)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn total_shots(&self) -> u64 {
        self.plan.iter().map(|s| s.shots).sum()
    }

    pub fn resolve_step(&self, index: usize) -> Result<ResolvedStep> {
        let step = &self.plan[index];
        let field = format!("plan[{index}]");
        match (&step.axis, &step.povm) {
            (Some(axis), None) => {
                check_axis(&format!("{field}.axis"), *axis)?;
                let op = projective_spin_povm(*axis)?;
                Ok(ResolvedStep {
                    key: format!("axis:{:?}", axis),
                    povm: povm_from_operation(&op),
                    axes: vec![*axis],
                })
            }
            (None, Some(id)) => {
                if let Some(p) = self.povms.get(id) {
                    return Ok(ResolvedStep {
                        key: format!("povm:{id}"),
                        povm: p.clone(),
                        axes: Vec::new(),
                    });
                }
                let (povm, axes) = builtin_povm(id).ok_or_else(|| {
                    Error::config(
                        format!("{field}.povm"),
                        format!("unknown POVM id {id:?}; use sic, pauli6, x, y, z or a key of `povms`"),
                    )
                })?;
                Ok(ResolvedStep {
                    key: format!("povm:{id}"),
                    povm,
                    axes,
                })
            }
            _ => Err(Error::config(field, "give exactly one of `axis` or `povm`")),
        }
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.total_shots()))
    }

    /// Constraint axes for the MAXENT comparison.
    pub fn maxent_axes(&self) -> Result<Vec<[f64; 3]>> {
        if let Some(axes) = &self.constraint_axes {
            return Ok(axes.clone());
        }
        let mut axes: Vec<[f64; 3]> = Vec::new();
        for i in 0..self.plan.len() {
            for a in self.resolve_step(i)?.axes {
                if !axes.contains(&a) {
                    axes.push(a);
                }
            }
        }
        Ok(axes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trial_count == 0 {
            return Err(Error::config("trial_count", "must be at least 1"));
        }
        let needs_prior = self.kind != ExperimentKind::VerifyOracle;
        match (&self.prior, needs_prior) {
            (None, true) => {
                return Err(Error::config("prior", format!("required for kind {}", self.kind.name())))
            }
            (Some(p), _) => p.validate().map_err(|e| Error::config("prior", e.to_string()))?,
            _ => {}
        }
        for (name, p) in &self.povms {
            if builtin_povm(name).is_some() {
                return Err(Error::config(format!("povms.{name}"), "shadows a built-in POVM id"));
            }
            if p.is_empty() {
                return Err(Error::config(format!("povms.{name}"), "has no effects"));
            }
        }
        let mut simulated = false;
        for i in 0..self.plan.len() {
            let resolved = self.resolve_step(i)?;
            let step = &self.plan[i];
            match &step.counts {
                Some(c) => {
                    let field = format!("plan[{i}].counts");
                    if c.len() != resolved.povm.len() {
                        return Err(Error::config(
                            field,
                            format!("{} counts for a {}-outcome measurement", c.len(), resolved.povm.len()),
                        ));
                    }
                    if c.iter().sum::<u64>() != step.shots {
                        return Err(Error::config(field, format!("counts do not sum to shots = {}", step.shots)));
                    }
                }
                None => simulated |= step.shots > 0,
            }
        }
        if let Some(ts) = &self.true_state {
            let d = ts.density().dim();
            for i in 0..self.plan.len() {
                if self.resolve_step(i)?.povm.dim() != d {
                    return Err(Error::config(
                        format!("plan[{i}]"),
                        format!("measurement dimension differs from the true-state dimension {d}"),
                    ));
                }
            }
        }
        if simulated && self.true_state.is_none() {
            return Err(Error::config("true_state", "required to simulate plan steps without counts"));
        }
        match self.kind {
            ExperimentKind::Tomography => {
                if self.plan.is_empty() {
                    return Err(Error::config("plan", "tomography needs at least one measurement"));
                }
                if self.true_state.is_none() {
                    return Err(Error::config("true_state", "required for tomography"));
                }
                if self.plan.iter().any(|s| s.counts.is_some()) {
                    return Err(Error::config("plan", "tomography simulates its data; remove `counts`"));
                }
                let cps = self.checkpoints();
                if cps.is_empty() {
                    return Err(Error::config("checkpoints", "no checkpoints; the plan has no shots"));
                }
                if cps.windows(2).any(|w| w[0] >= w[1]) || cps[0] == 0 {
                    return Err(Error::config("checkpoints", "must be positive and strictly increasing"));
                }
                if *cps.last().unwrap() > self.total_shots() {
                    return Err(Error::config(
                        "checkpoints",
                        format!("exceed the plan total of {} shots", self.total_shots()),
                    ));
                }
            }
            ExperimentKind::MaxentCompare | ExperimentKind::Predict => {
                let Some(f) = &self.future else {
                    return Err(Error::config("future", format!("required for kind {}", self.kind.name())));
                };
                check_axis("future.axis", f.axis)?;
                if f.shots > MAX_PREDICTIVE_SHOTS {
                    return Err(Error::config("future.shots", format!("at most {MAX_PREDICTIVE_SHOTS}")));
                }
                if let Some(axes) = &self.constraint_axes {
                    for (j, a) in axes.iter().enumerate() {
                        check_axis(&format!("constraint_axes[{j}]"), *a)?;
                    }
                }
            }
            ExperimentKind::VerifyOracle => {
                if let Some(o) = &self.oracle {
                    if !(o.tolerance >= 0.0) {
                        return Err(Error::config("oracle.tolerance", "must be non-negative"));
                    }
                }
            }
            ExperimentKind::QubitCounts => {}
        }
        Ok(())
    }

    /// Built-in configuration reproducing the headline result for `kind`.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            prior: None,
            plan: Vec::new(),
            true_state: None,
            seed: 0,
            trial_count: 1,
            output: None,
            povms: BTreeMap::new(),
            checkpoints: None,
            future: None,
            constraint_axes: None,
            oracle: None,
        };
        let ball = |n| Some(PriorSpec::uniform_ball(n, 0).symmetrized());
        match kind {
            ExperimentKind::QubitCounts => Self {
                prior: ball(10_000),
                plan: vec![PlanStep::axis([0.0, 0.0, 1.0], 10_000).with_counts(vec![7_500, 2_500])],
                future: Some(FutureSpec {
                    axis: [1.0, 0.0, 0.0],
                    shots: 10,
                }),
                ..base
            },
            ExperimentKind::Tomography => Self {
                prior: ball(100_000),
                plan: vec![PlanStep::povm("sic", 30_000)],
                true_state: Some(TrueState::Bloch(BlochVector::new(0.3, -0.2, 0.4).expect("inside the ball"))),
                trial_count: 100,
                ..base
            },
            ExperimentKind::VerifyOracle => Self {
                oracle: Some(OracleSpec {
                    entangled_cases: 20,
                    ..OracleSpec::default()
                }),
                ..base
            },
            ExperimentKind::MaxentCompare => Self {
                prior: ball(10_000),
                plan: vec![PlanStep::axis([0.0, 0.0, 1.0], 10_000).with_counts(vec![5_000, 5_000])],
                future: Some(FutureSpec {
                    axis: [1.0, 0.0, 0.0],
                    shots: 10,
                }),
                ..base
            },
            ExperimentKind::Predict => {
                let atom = |w: f64, y: f64, z: f64| crate::priors::AtomSpec {
                    weight: w,
                    bloch: Some(BlochVector::new(0.0, y, z).expect("inside the ball")),
                    matrix: None,
                };
                Self {
                    prior: Some(PriorSpec::Atoms {
                        atoms: vec![
                            atom(0.3, 0.0, 0.5),
                            atom(0.2, 0.6, -0.2),
                            atom(0.2, -0.3, -0.7),
                            atom(0.1, 0.0, -1.0),
                            atom(0.2, 0.8, 0.6),
                        ],
                    }),
                    future: Some(FutureSpec {
                        axis: [1.0, 0.0, 0.0],
                        shots: 20,
                    }),
                    ..base
                }
            }
        }
    }
}
