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

use std::collections::BTreeMap;
use std::io::BufReader;

use qbayes::bayes::posterior_moments;
use qbayes::exchangeable::MeasurementRecord;
use qbayes::harness::config::{
    default_checkpoints, ExperimentConfig, ExperimentKind, FutureSpec, OutputFormat, PlanStep, TrueState,
};
use qbayes::harness::emit::{read_csv, read_json_lines, write_csv, write_json_lines, write_run};
use qbayes::harness::run::{run_experiment, run_experiment_with_threads, tomography_trial, ResultRow};
use qbayes::measurement::projective_spin_povm;
use qbayes::oracle::brute_force_record_probability;
use qbayes::priors::{discretize_prior, PriorSpec};
use qbayes::{BlochVector, Error};
use serde_json::{json, Value};

fn value(rows: &[ResultRow], trial: u64, step: u64, quantity: &str) -> Value {
    rows.iter()
        .find(|r| r.trial == trial && r.step == step && r.quantity == quantity)
        .unwrap_or_else(|| panic!("no {quantity} at trial {trial} step {step}"))
        .value
        .clone()
}

fn vec3(v: Value) -> [f64; 3] {
    let a: Vec<f64> = serde_json::from_value(v).unwrap();
    [a[0], a[1], a[2]]
}

fn small_counts_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default_for(ExperimentKind::QubitCounts);
    c.prior = Some(PriorSpec::uniform_ball(64, 2).symmetrized());
    c.plan = vec![PlanStep::axis([0.0, 0.0, 1.0], 20).with_counts(vec![15, 5])];
    c
}

#[test]
fn qubit_counts_mean_tracks_empirical_mean() {
    let out = run_experiment(&ExperimentConfig::default_for(ExperimentKind::QubitCounts)).unwrap();
    let m = vec3(value(&out.rows, 0, 1, "mean_bloch"));
    assert!(m[0].abs() < 0.03 && m[1].abs() < 0.03 && (m[2] - 0.5).abs() < 0.03, "{m:?}");
    let var = vec3(value(&out.rows, 0, 1, "variances"));
    assert!(var[2] < 1e-3);
    assert!(value(&out.rows, 0, 1, "log_evidence").as_f64().unwrap() < 0.0);
}

#[test]
fn predict_on_x_free_prior_is_binomial() {
    let out = run_experiment(&ExperimentConfig::default_for(ExperimentKind::Predict)).unwrap();
    let p: Vec<f64> = serde_json::from_value(value(&out.rows, 0, 0, "predictive")).unwrap();
    assert_eq!(p.len(), 21);
    let mut c = 1.0f64;
    for (k, pk) in p.iter().enumerate() {
        assert!((pk - c / 2f64.powi(20)).abs() < 1e-10, "k = {k}");
        c = c * (20 - k) as f64 / (k + 1) as f64;
    }
}

#[test]
fn verify_default_all_pass() {
    let out = run_experiment(&ExperimentConfig::default_for(ExperimentKind::VerifyOracle)).unwrap();
    let passes = out.rows.iter().filter(|r| r.trial == 0 && r.quantity == "pass").count();
    assert_eq!(passes, 200);
    assert!(out.summary.passed.values().all(|&v| v), "{:?}", out.summary.passed);
}

#[test]
fn chain_rule_matches_brute_force() {
    let prior_spec = PriorSpec::uniform_ball(24, 9);
    let prior = discretize_prior(&prior_spec).unwrap();
    let ops = vec![
        projective_spin_povm([0.0, 0.0, 1.0]).unwrap(),
        projective_spin_povm([1.0, 0.0, 0.0]).unwrap(),
    ];
    let sequences: [&[(usize, usize)]; 4] = [
        &[(0, 0)],
        &[(0, 0), (1, 1)],
        &[(1, 1), (0, 0), (0, 1)],
        &[(0, 0), (0, 0), (1, 0), (1, 1)],
    ];
    for seq in sequences {
        let mut c = ExperimentConfig::default_for(ExperimentKind::QubitCounts);
        c.prior = Some(prior_spec.clone());
        c.future = None;
        c.plan = seq
            .iter()
            .map(|&(op, k)| {
                let axis = if op == 0 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
                let mut counts = vec![0, 0];
                counts[k] = 1;
                PlanStep::axis(axis, 1).with_counts(counts)
            })
            .collect();
        let out = run_experiment(&c).unwrap();
        let log_ev: f64 = (1..=seq.len() as u64)
            .map(|s| value(&out.rows, 0, s, "log_evidence").as_f64().unwrap())
            .sum();
        let mut record = MeasurementRecord::default();
        for &(op, k) in seq {
            record.push(op, k);
        }
        let brute = brute_force_record_probability(&prior, &ops, &record, 1).unwrap();
        assert!((log_ev.exp() - brute).abs() < 1e-10, "{seq:?}: {} vs {brute}", log_ev.exp());
    }
}

#[test]
fn output_is_deterministic_across_runs_and_threads() {
    let mut c = ExperimentConfig::default_for(ExperimentKind::Tomography);
    c.prior = Some(PriorSpec::uniform_ball(2_000, 1).symmetrized());
    c.plan = vec![PlanStep::povm("sic", 500), PlanStep::povm("pauli6", 500)];
    c.trial_count = 6;
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [None, Some(1), Some(3)].into_iter().enumerate() {
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let out = run_experiment_with_threads(&c, threads).unwrap();
            let sub = dir.path().join(format!("{i}-{format:?}"));
            let path = write_run(&out, format, &sub).unwrap();
            outputs.push((format, std::fs::read(path).unwrap(), std::fs::read(sub.join("summary.json")).unwrap()));
        }
    }
    for pair in outputs.chunks(2).collect::<Vec<_>>().windows(2) {
        assert_eq!(pair[0][0], pair[1][0]);
        assert_eq!(pair[0][1], pair[1][1]);
    }
}

#[test]
fn rows_sorted_and_carry_provenance() {
    let mut c = small_counts_config();
    c.trial_count = 3;
    c.true_state = Some(TrueState::Bloch(BlochVector::new(0.0, 0.0, 0.2).unwrap()));
    c.plan.push(PlanStep::axis([1.0, 0.0, 0.0], 10));
    let out = run_experiment(&c).unwrap();
    let hash = c.config_hash().unwrap();
    assert!(out.rows.windows(2).all(|w| (w[0].trial, w[0].step) <= (w[1].trial, w[1].step)));
    assert!(out.rows.iter().all(|r| r.config_hash == hash && r.seed == c.seed));
    assert_eq!(out.summary.config_hash, hash);
    // Different trials simulate different data.
    assert_ne!(value(&out.rows, 0, 2, "counts"), value(&out.rows, 1, 2, "counts"));
}

#[test]
fn hash_changes_with_every_field() {
    let base = small_counts_config();
    let h = base.config_hash().unwrap();
    assert_eq!(h, base.clone().config_hash().unwrap());
    assert_eq!(h.len(), 64);
    let mut variants = Vec::new();
    let mut c = base.clone();
    c.seed = 1;
    variants.push(c);
    let mut c = base.clone();
    c.trial_count = 2;
    variants.push(c);
    let mut c = base.clone();
    c.plan[0].counts = Some(vec![14, 6]);
    variants.push(c);
    let mut c = base.clone();
    c.prior = Some(PriorSpec::uniform_ball(64, 3).symmetrized());
    variants.push(c);
    let mut c = base.clone();
    c.future = Some(FutureSpec { axis: [0.0, 1.0, 0.0], shots: 10 });
    variants.push(c);
    for v in variants {
        assert_ne!(v.config_hash().unwrap(), h);
    }
}

#[test]
fn seed_override_from_environment() {
    let mut c = small_counts_config();
    std::env::set_var(qbayes::harness::config::SEED_OVERRIDE_VAR, "12345");
    c.apply_seed_override().unwrap();
    assert_eq!(c.seed, 12345);
    std::env::set_var(qbayes::harness::config::SEED_OVERRIDE_VAR, "not-a-number");
    let err = c.apply_seed_override().unwrap_err();
    std::env::remove_var(qbayes::harness::config::SEED_OVERRIDE_VAR);
    assert!(matches!(err, Error::Config { ref field, .. } if field == "QBAYES_SEED_OVERRIDE"));
}

fn config_error(v: Value) -> (String, String) {
    match ExperimentConfig::from_json_str(&v.to_string()) {
        Err(Error::Config { field, message }) => (field, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_validation_names_the_field() {
    let prior = json!({"kind": "uniform-ball", "atom_count": 16, "seed": 0});
    let (f, _) = config_error(json!({"kind": "qubit-counts"}));
    assert_eq!(f, "prior");
    let (f, _) = config_error(json!({"kind": "qubit-counts", "prior": prior, "trial_count": 0}));
    assert_eq!(f, "trial_count");
    let (f, m) = config_error(json!({"kind": "qubit-counts", "prior": prior,
        "plan": [{"povm": "nope", "shots": 3, "counts": [1, 2]}]}));
    assert_eq!(f, "plan[0].povm");
    assert!(m.contains("nope"));
    let (f, _) = config_error(json!({"kind": "qubit-counts", "prior": prior,
        "plan": [{"axis": [0, 0, 2], "shots": 3, "counts": [1, 2]}]}));
    assert_eq!(f, "plan[0].axis");
    let (f, _) = config_error(json!({"kind": "qubit-counts", "prior": prior,
        "plan": [{"axis": [0, 0, 1], "shots": 4, "counts": [1, 2]}]}));
    assert_eq!(f, "plan[0].counts");
    let (f, _) = config_error(json!({"kind": "qubit-counts", "prior": prior,
        "plan": [{"axis": [0, 0, 1], "shots": 4}]}));
    assert_eq!(f, "true_state");
    let (f, _) = config_error(json!({"kind": "predict", "prior": prior}));
    assert_eq!(f, "future");
    let (f, _) = config_error(json!({"kind": "tomography", "prior": prior,
        "true_state": {"bloch": [0, 0, 0.5]}, "plan": [{"povm": "sic", "shots": 10}], "checkpoints": [5, 3]}));
    assert_eq!(f, "checkpoints");
    let (f, _) = config_error(json!({"kind": "qubit-counts",
        "prior": {"kind": "uniform-ball", "atom_count": 10, "seed": 0, "symmetrize": true}}));
    assert_eq!(f, "prior");
    assert!(ExperimentConfig::from_json_str(r#"{"kind": "qubit-counts", "bogus": 1}"#).is_err());
}

#[test]
fn config_json_round_trip() {
    for kind in [
        ExperimentKind::QubitCounts,
        ExperimentKind::Tomography,
        ExperimentKind::VerifyOracle,
        ExperimentKind::MaxentCompare,
        ExperimentKind::Predict,
    ] {
        let c = ExperimentConfig::default_for(kind);
        let back = ExperimentConfig::from_json_str(&c.to_json_pretty().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash().unwrap(), c.config_hash().unwrap());
    }
}

#[test]
fn custom_povm_by_name() {
    let sic = qbayes::measurement::tetrahedral_sic_povm();
    let mut c = small_counts_config();
    c.povms = BTreeMap::from([("tetra".to_string(), sic)]);
    c.plan = vec![PlanStep::povm("tetra", 8).with_counts(vec![5, 1, 1, 1])];
    let a = run_experiment(&c).unwrap();
    c.povms.clear();
    c.plan = vec![PlanStep::povm("sic", 8).with_counts(vec![5, 1, 1, 1])];
    let b = run_experiment(&c).unwrap();
    assert_eq!(value(&a.rows, 0, 1, "mean_bloch"), value(&b.rows, 0, 1, "mean_bloch"));
}

#[test]
fn emit_empty_and_single_row() {
    let mut buf = Vec::new();
    write_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().collect::<Vec<_>>(), ["trial,step,quantity,value"]);
    let row = ResultRow {
        trial: 0,
        step: 3,
        quantity: "mean_bloch".into(),
        value: json!([0.1, -0.2, 0.3]),
        config_hash: "abc".into(),
        seed: 9,
    };
    let mut buf = Vec::new();
    write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().nth(1).unwrap(), r#"0,3,mean_bloch,"[0.1,-0.2,0.3]""#);
}

#[test]
fn emit_round_trip() {
    let out = run_experiment(&ExperimentConfig::default_for(ExperimentKind::MaxentCompare)).unwrap();
    let mut csv = Vec::new();
    write_csv(&out.rows, &mut csv).unwrap();
    let parsed = read_csv(csv.as_slice()).unwrap();
    assert_eq!(parsed.len(), out.rows.len());
    for (p, r) in parsed.iter().zip(&out.rows) {
        assert_eq!((p.trial, p.step, &p.quantity, &p.value), (r.trial, r.step, &r.quantity, &r.value));
    }
    let mut jl = Vec::new();
    write_json_lines(&out.rows, &mut jl).unwrap();
    assert_eq!(read_json_lines(BufReader::new(jl.as_slice())).unwrap(), out.rows);
}

#[test]
fn emit_surfaces_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/results.csv");
    let err = qbayes::harness::emit::emit_results(&[], OutputFormat::Csv, &missing).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}

#[test]
fn maxent_compare_contrast() {
    let out = run_experiment(&ExperimentConfig::default_for(ExperimentKind::MaxentCompare)).unwrap();
    let td = value(&out.rows, 0, 1, "marginal_trace_distance").as_f64().unwrap();
    let tv = value(&out.rows, 0, 1, "predictive_total_variation").as_f64().unwrap();
    assert!(td < 0.02 && tv > 0.1, "td {td} tv {tv}");
    assert!(value(&out.rows, 0, 1, "learning_maxent_shift").as_f64().unwrap() < 1e-12);
    assert!(value(&out.rows, 0, 1, "learning_bayes_shift").as_f64().unwrap() > 0.0);
}

fn z_only_tomography(truth: [f64; 3]) -> ExperimentConfig {
    let mut c = ExperimentConfig::default_for(ExperimentKind::Tomography);
    c.prior = Some(PriorSpec::uniform_ball(20_000, 4).symmetrized());
    c.plan = vec![PlanStep::axis([0.0, 0.0, 1.0], 3_000)];
    c.true_state = Some(TrueState::Bloch(BlochVector::new(truth[0], truth[1], truth[2]).unwrap()));
    c.trial_count = 1;
    c
}

#[test]
fn z_counts_alone_do_not_reveal_x_or_y() {
    // A transverse component is never learned from σ_z data.
    let c = z_only_tomography([0.6, 0.0, 0.0]);
    let rows = tomography_trial(&c, 0).unwrap();
    let m = vec3(value(&rows, 0, 3_000, "mean_bloch"));
    assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12, "{m:?}");
    assert!(value(&rows, 0, 3_000, "trace_distance").as_f64().unwrap() > 0.29);

    // With a pure z = +1 truth the z-marginal concentrates while x and y
    // keep a symmetric posterior with zero mean.
    let c = z_only_tomography([0.0, 0.0, 1.0]);
    let rows = tomography_trial(&c, 0).unwrap();
    let var = vec3(value(&rows, 0, 3_000, "variances"));
    let m = vec3(value(&rows, 0, 3_000, "mean_bloch"));
    assert!(var[2] < 1e-3);
    assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12);
    let prior = discretize_prior(c.prior.as_ref().unwrap()).unwrap();
    let prior_var = posterior_moments(&prior).unwrap().variances;
    assert!(var[0] < prior_var[0] && var[1] < prior_var[1]);
}

#[test]
fn checkpoints_are_log_spaced() {
    assert_eq!(default_checkpoints(30_000), vec![1, 3, 10, 30, 100, 300, 1_000, 3_000, 10_000, 30_000]);
    assert_eq!(default_checkpoints(3_000), vec![1, 3, 10, 30, 100, 300, 1_000, 3_000]);
    assert_eq!(default_checkpoints(50), vec![1, 3, 10, 30, 50]);
    assert_eq!(default_checkpoints(1), vec![1]);
    assert!(default_checkpoints(0).is_empty());
}

#[test]
fn single_atom_prior_runs_without_learning() {
    let mut c = small_counts_config();
    c.prior = Some(PriorSpec::Atoms {
        atoms: vec![qbayes::priors::AtomSpec {
            weight: 1.0,
            bloch: Some(BlochVector::new(0.1, 0.2, 0.3).unwrap()),
            matrix: None,
        }],
    });
    let out = run_experiment(&c).unwrap();
    assert_eq!(value(&out.rows, 0, 0, "mean_bloch"), value(&out.rows, 0, 1, "mean_bloch"));
}
