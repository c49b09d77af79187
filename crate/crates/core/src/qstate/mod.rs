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

//! Finite-dimensional quantum states: construction, composition, reduction,
//! and scalar functionals.

mod density;
mod matrix;

pub use density::{
    bloch_from_density, check_power_capacity, density_from_bloch, entropy_of_spectrum,
    partial_trace, partial_trace_matrix, tensor_power, tensor_power_capped, tensor_product,
    trace_distance, von_neumann_entropy, BlochVector, DensityOperator, BLOCH_TOL, HERMITIAN_TOL,
    PSD_TOL, TRACE_TOL,
};
pub use matrix::{ComplexMatrix, HermitianEigen, DEFAULT_DIM_CAP};
