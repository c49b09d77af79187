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

//! Batch experiment runner behind the `qbayes` binary.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat, PlanStep, TrueState};
pub use emit::{emit_results, read_csv, read_json_lines, write_run};
pub use run::{run_experiment, run_experiment_with_threads, tomography_trial, ResultRow, RunOutput, Summary};
