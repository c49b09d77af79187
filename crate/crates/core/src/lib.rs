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

//! Bayesian inference for exchangeable quantum states.
//!
//! An exchangeable state of many copies of a system is represented as a
//! weighted set of single-system density operators (an [`Ensemble`]).
//! Measuring one copy with a POVM reweights the atoms by `tr(E_k ρ_i)` and
//! leaves the atom states untouched. The [`oracle`] module checks that rule
//! against explicit tensor-product states, and [`maxent`] provides the
//! maximum-entropy assignment used for comparison.

pub mod bayes;
pub mod error;
pub mod exchangeable;
pub mod harness;
pub mod maxent;
pub mod measurement;
pub mod oracle;
pub mod priors;
pub mod qstate;
pub mod rng;

pub use error::{Error, Result};
pub use exchangeable::{Ensemble, MeasurementRecord};
pub use measurement::{Povm, QuantumOperation};
pub use qstate::{BlochVector, ComplexMatrix, DensityOperator};
