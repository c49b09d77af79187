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

use proptest::prelude::*;

use qbayes::bayes::{counts_update, update_with_log_likelihood, CountsModel};
use qbayes::maxent::{bayes_vs_maxent_report, bayes_vs_maxent_report_with};
use qbayes::measurement::{povm_from_operation, projective_spin_povm, tetrahedral_sic_povm};
use qbayes::priors::{discretize_prior, PriorSpec};
use qbayes::{BlochVector, Ensemble};

fn ball(n: usize, seed: u64) -> Ensemble {
    discretize_prior(&PriorSpec::uniform_ball(n, seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_update_is_counts_update(seed in any::<u64>(), counts in prop::collection::vec(0u64..40, 4)) {
        let prior = ball(50, seed);
        let sic = tetrahedral_sic_povm();
        let a = counts_update(&prior, &sic, &counts).unwrap();
        let b = CountsModel::new(prior, &sic).unwrap().update(&counts).unwrap();
        prop_assert_eq!(a.posterior.weights(), b.posterior.weights());
        prop_assert_eq!(a.log_evidence, b.log_evidence);
    }

    #[test]
    fn summed_log_likelihoods_equal_sequential_updates(
        seed in any::<u64>(), sic_counts in prop::collection::vec(0u64..30, 4), z_plus in 0u64..30, z_minus in 0u64..30
    ) {
        let prior = ball(40, seed);
        let sic = tetrahedral_sic_povm();
        let z = povm_from_operation(&projective_spin_povm([0.0, 0.0, 1.0]).unwrap());
        let first = counts_update(&prior, &sic, &sic_counts).unwrap();
        let second = counts_update(&first.posterior, &z, &[z_plus, z_minus]).unwrap();
        let a = CountsModel::new(prior.clone(), &sic).unwrap().log_likelihood(&sic_counts).unwrap();
        let b = CountsModel::new(prior.clone(), &z).unwrap().log_likelihood(&[z_plus, z_minus]).unwrap();
        let ll: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let joint = update_with_log_likelihood(&prior, &ll, 0).unwrap();
        for (w1, w2) in joint.posterior.weights().iter().zip(second.posterior.weights()) {
            prop_assert!((w1 - w2).abs() < 1e-12);
        }
        prop_assert!((joint.log_evidence - (first.log_evidence + second.log_evidence)).abs() < 1e-9);
    }
}

#[test]
fn x_free_prior_has_binomial_predictive() {
    let points: Vec<BlochVector> = [(0.0, 0.5), (0.6, -0.2), (-0.3, -0.7), (0.8, 0.6)]
        .iter()
        .map(|&(y, z)| BlochVector::new(0.0, y, z).unwrap())
        .collect();
    let e = Ensemble::from_bloch(vec![0.1, 0.2, 0.3, 0.4], &points).unwrap();
    for n in [1, 5, 12, 20] {
        let r = bayes_vs_maxent_report_with(&e, [1.0, 0.0, 0.0], n, &[[0.0, 0.0, 1.0]]).unwrap();
        assert!(r.predictive_total_variation < 1e-10, "n = {n}");
        let r = bayes_vs_maxent_report(&e, [1.0, 0.0, 0.0], n).unwrap();
        assert!(r.predictive_total_variation < 1e-10, "n = {n}");
    }
}

#[test]
fn report_json_round_trip() {
    let e = ball(30, 5);
    let r = bayes_vs_maxent_report(&e, [0.0, 1.0, 0.0], 6).unwrap();
    let back: qbayes::maxent::BayesMaxEntReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}
