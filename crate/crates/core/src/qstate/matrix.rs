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

//! Dense complex square matrices and the Hermitian spectral kernel.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the dimension of any matrix produced by a tensor product.
pub const DEFAULT_DIM_CAP: usize = 1 << 12;

/// A finite square complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    inner: DMatrix<Complex64>,
}

/// Wire format: dimension plus row-major `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        let entries: Vec<Complex64> = repr
            .entries
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        ComplexMatrix::from_row_major(repr.dim, &entries)
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        let dim = m.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let z = m.inner[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixRepr { dim, entries }
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the orthonormal eigenvectors matching `values`.
    pub vectors: DMatrix<Complex64>,
}

impl ComplexMatrix {
    pub fn from_dmatrix(inner: DMatrix<Complex64>) -> Result<Self> {
        if inner.nrows() != inner.ncols() {
            return Err(Error::Dimension(format!(
                "matrix is not square: {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        if inner.nrows() == 0 {
            return Err(Error::Dimension("matrix dimension must be at least 1".into()));
        }
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        Ok(Self { inner })
    }

    pub fn from_row_major(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<Complex64> = rows
            .iter()
            .flat_map(|row| row.iter().map(|&v| Complex64::new(v, 0.0)))
            .collect();
        Self::from_row_major(dim, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut inner = DMatrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            inner[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { inner }
    }

    /// Rank-one projector |ψ⟩⟨ψ| for an already-normalized vector.
    pub fn projector(psi: &[Complex64]) -> Self {
        let n = psi.len();
        let inner = DMatrix::from_fn(n, n, |r, c| psi[r] * psi[c].conj());
        Self { inner }
    }

    pub fn sigma_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("static matrix")
    }

    pub fn sigma_y() -> Self {
        let i = Complex64::i();
        let z = Complex64::new(0.0, 0.0);
        Self::from_row_major(2, &[z, -i, i, z]).expect("static matrix")
    }

    pub fn sigma_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    /// `n·σ` for a real 3-vector `n`.
    pub fn pauli_combination(n: [f64; 3]) -> Self {
        Self::sigma_x()
            .scale(n[0])
            .add(&Self::sigma_y().scale(n[1]))
            .add(&Self::sigma_z().scale(n[2]))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<Complex64> {
        self.inner
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.inner[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner * &other.inner,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner - &other.inner,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            inner: self.inner.map(|z| z * factor),
        }
    }

    /// `A X A†`.
    pub fn sandwich(&self, x: &Self) -> Self {
        Self {
            inner: &self.inner * &x.inner * self.inner.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                acc += self.inner[(r, c)] * other.inner[(c, r)];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            inner: (&self.inner + self.inner.adjoint()).map(|z| z * 0.5),
        }
    }

    /// Kronecker product, refusing results larger than `cap`.
    pub fn kron_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        let dim = self.dim() * other.dim();
        if dim > cap {
            return Err(Error::Capacity { dim, cap });
        }
        Ok(Self {
            inner: self.inner.kronecker(&other.inner),
        })
    }

    /// Hermitian eigendecomposition of the Hermitian part of this matrix.
    ///
    /// Every spectral functional in the crate routes through here.
    pub fn eigh(&self) -> HermitianEigen {
        let h = self.hermitian_part().inner;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        HermitianEigen { values, vectors }
    }

    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        self.eigh().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_hermitian()[0]
    }

    /// Applies a real function to a Hermitian matrix through its spectrum.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Self {
        let HermitianEigen { values, vectors } = self.eigh();
        Self::from_spectrum(&values.iter().map(|&v| f(v)).collect::<Vec<_>>(), &vectors)
    }

    /// `V diag(values) V†`.
    pub fn from_spectrum(values: &[f64], vectors: &DMatrix<Complex64>) -> Self {
        let n = values.len();
        let mut scaled = vectors.clone();
        for c in 0..n {
            for r in 0..n {
                scaled[(r, c)] *= values[c];
            }
        }
        Self {
            inner: scaled * vectors.adjoint(),
        }
    }

    /// Matrix exponential of a Hermitian matrix.
    pub fn expm_hermitian(&self) -> Self {
        self.hermitian_function(f64::exp)
    }

    /// Real Hilbert–Schmidt inner product `Re tr(A† B)`.
    pub fn hs_inner(&self, other: &Self) -> f64 {
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }
}
