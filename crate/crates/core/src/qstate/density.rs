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

//! Density operators, qubit Bloch vectors, and the state functionals built on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, DEFAULT_DIM_CAP};
use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
pub const BLOCH_TOL: f64 = 1e-12;

/// A point in the closed unit ball, the qubit state `(1 + x σx + y σy + z σz)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochVector {
    x: f64,
    y: f64,
    z: f64,
}

impl BlochVector {
    /// Vectors with norm in `(1, 1 + 1e-12]` are rescaled onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidState("Bloch vector has non-finite components".into()));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if norm > 1.0 + BLOCH_TOL {
            return Err(Error::InvalidState(format!(
                "Bloch vector norm {norm} exceeds 1"
            )));
        }
        if norm > 1.0 {
            return Ok(Self {
                x: x / norm,
                y: y / norm,
                z: z / norm,
            });
        }
        Ok(Self { x, y, z })
    }

    pub const fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn dot(&self, v: [f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d = [self.x - other.x, self.y - other.y, self.z - other.z];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

impl TryFrom<[f64; 3]> for BlochVector {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<BlochVector> for [f64; 3] {
    fn from(b: BlochVector) -> Self {
        b.to_array()
    }
}

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "matrix is not Hermitian (defect {defect:e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {trace}, expected 1")));
        }
        let min = matrix.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(Self {
            matrix: matrix.hermitian_part(),
        })
    }

    /// Wraps a matrix known to be a state up to round-off; only Hermitizes it.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: matrix.hermitian_part(),
        }
    }

    /// Normalizes a nonzero positive operator to unit trace.
    pub fn normalized(matrix: ComplexMatrix) -> Result<Self> {
        let tr = matrix.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("cannot normalize operator with trace {tr}")));
        }
        Self::new(matrix.scale(1.0 / tr))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    /// `|ψ⟩⟨ψ|` after normalizing `ψ`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let normed: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        Ok(Self::from_trusted(ComplexMatrix::projector(&normed)))
    }

    pub fn diag(probabilities: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::diag(probabilities))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Eigenvalues with round-off negatives clamped to zero.
    pub fn spectrum(&self) -> Vec<f64> {
        self.matrix
            .eigenvalues_hermitian()
            .into_iter()
            .map(|v| v.max(0.0))
            .collect()
    }

    /// `tr(O ρ)` for a Hermitian observable.
    pub fn expectation(&self, observable: &ComplexMatrix) -> f64 {
        observable.trace_product(&self.matrix).re
    }
}

impl TryFrom<ComplexMatrix> for DensityOperator {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<DensityOperator> for ComplexMatrix {
    fn from(r: DensityOperator) -> Self {
        r.matrix
    }
}

/// `(1 + b·σ)/2`.
pub fn density_from_bloch(b: BlochVector) -> DensityOperator {
    let h = 0.5;
    let (x, y, z) = (b.x, b.y, b.z);
    let entries = [
        Complex64::new(h * (1.0 + z), 0.0),
        Complex64::new(h * x, -h * y),
        Complex64::new(h * x, h * y),
        Complex64::new(h * (1.0 - z), 0.0),
    ];
    DensityOperator {
        matrix: ComplexMatrix::from_row_major(2, &entries).expect("finite 2x2"),
    }
}

/// `(tr ρσx, tr ρσy, tr ρσz)`.
pub fn bloch_from_density(r: &DensityOperator) -> Result<BlochVector> {
    if r.dim() != 2 {
        return Err(Error::Dimension(format!(
            "Bloch vectors need a qubit, got dimension {}",
            r.dim()
        )));
    }
    let m = r.matrix();
    let off = m.get(1, 0);
    BlochVector::new(2.0 * off.re, 2.0 * off.im, (m.get(0, 0) - m.get(1, 1)).re)
}

pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.kron_capped(b, DEFAULT_DIM_CAP)
}

pub fn tensor_power(r: &DensityOperator, n: usize) -> Result<DensityOperator> {
    tensor_power_capped(r, n, DEFAULT_DIM_CAP)
}

pub fn tensor_power_capped(r: &DensityOperator, n: usize, cap: usize) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power needs n >= 1".into()));
    }
    check_power_capacity(r.dim(), n, cap)?;
    let mut acc = r.matrix.clone();
    for _ in 1..n {
        acc = acc.kron_capped(&r.matrix, cap)?;
    }
    Ok(DensityOperator::from_trusted(acc))
}

/// Fails with a capacity error when `dim^n > cap`.
pub fn check_power_capacity(dim: usize, n: usize, cap: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total.saturating_mul(dim);
        if total > cap {
            return Err(Error::Capacity { dim: total, cap });
        }
    }
    Ok(total)
}

/// Trace over every subsystem not listed in `keep`, for any square operator.
///
/// Subsystem 0 is the most significant factor, matching the Kronecker order.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != m.dim() {
        return Err(Error::Dimension(format!(
            "subsystem dims {dims:?} do not multiply to {}",
            m.dim()
        )));
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set must be nonempty".into()));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidArgument(format!(
            "keep set {keep:?} is not a set of subsystem indices below {}",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();

    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |subsystems: &[usize]| -> Vec<usize> {
        let count: usize = subsystems.iter().map(|&s| dims[s]).product();
        let mut out = Vec::with_capacity(count);
        for mut idx in 0..count {
            let mut off = 0;
            for &s in subsystems.iter().rev() {
                off += (idx % dims[s]) * strides[s];
                idx /= dims[s];
            }
            out.push(off);
        }
        out
    };
    let kept_off = offsets(&kept);
    let traced_off = offsets(&traced);

    let out_dim = kept_off.len();
    let src = m.as_dmatrix();
    let mut out = nalgebra::DMatrix::<Complex64>::zeros(out_dim, out_dim);
    for (r, &ro) in kept_off.iter().enumerate() {
        for (c, &co) in kept_off.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in &traced_off {
                acc += src[(ro + t, co + t)];
            }
            out[(r, c)] = acc;
        }
    }
    ComplexMatrix::from_dmatrix(out)
}

pub fn partial_trace(r: &DensityOperator, dims: &[usize], keep: &[usize]) -> Result<DensityOperator> {
    partial_trace_matrix(r.matrix(), dims, keep).map(DensityOperator::from_trusted)
}

/// Von Neumann entropy in nats, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(r: &DensityOperator) -> f64 {
    entropy_of_spectrum(&r.spectrum())
}

pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum::<f64>()
        .max(0.0)
}

/// `½‖a − b‖₁`.
pub fn trace_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "trace distance between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = a.matrix().sub(b.matrix());
    let d = 0.5 * diff.eigenvalues_hermitian().iter().map(|v| v.abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}
