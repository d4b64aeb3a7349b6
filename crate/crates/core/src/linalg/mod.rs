//! Dense complex linear algebra on labelled tensor-product spaces.
//!
//! Every operator carries the ordered list of its factor dimensions. The
//! first factor is the most significant digit of the row-major basis index,
//! so for qubits `|q1 q2 ... qn>` maps to the integer with `q1` as its
//! highest bit.

mod spectral;
mod state;
pub mod structured;

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

pub use num_complex::Complex64 as C64;
use thiserror::Error;

pub use spectral::{hermitian_eigen, HermitianEigen};
pub use state::{state_fidelity, StateVector};

/// Largest matrix side length produced by [`OperatorMatrix::kron`].
pub const DEFAULT_MAX_SIDE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension product {product} does not match data length {len}")]
    ShapeMismatch { product: usize, len: usize },
    #[error("operator dimensions differ: {left:?} vs {right:?}")]
    DimMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("side length {side} exceeds capacity {max}")]
    Capacity { side: usize, max: usize },
    #[error("matrix is not Hermitian (relative anti-Hermitian part {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (||U^dag U - I||_F = {0:.3e})")]
    NotUnitary(f64),
    #[error("eigenphase {phase:.9} lies within {tol:.1e} of the branch cut at +-pi")]
    BranchAmbiguity { phase: f64, tol: f64 },
    #[error("invalid factor selection: {0}")]
    InvalidFactors(String),
    #[error("<psi|rho|psi> = {0:.3e} is negative beyond tolerance")]
    NegativeOverlap(f64),
    #[error("state is not normalised (norm {0:.12})")]
    NotNormalized(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub(crate) fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Dense square matrix over a tensor-product space, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl OperatorMatrix {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let side = product(&dims);
        if side * side != data.len() {
            return Err(LinalgError::ShapeMismatch {
                product: side * side,
                len: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let side = product(dims);
        Self {
            dims: dims.to_vec(),
            data: vec![C64::new(0.0, 0.0); side * side],
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let mut m = Self::zeros(dims);
        let side = m.side();
        for i in 0..side {
            m.data[i * side + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(dims: &[usize], diag: &[C64]) -> Result<Self> {
        let mut m = Self::zeros(dims);
        let side = m.side();
        if diag.len() != side {
            return Err(LinalgError::ShapeMismatch {
                product: side,
                len: diag.len(),
            });
        }
        for (i, d) in diag.iter().enumerate() {
            m.data[i * side + i] = *d;
        }
        Ok(m)
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let side = product(dims);
        let mut data = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                data.push(f(r, c));
            }
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// Single-factor matrix from real row literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        Self::from_fn(&[rows.len()], |r, c| C64::new(rows[r][c], 0.0))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn side(&self) -> usize {
        product(&self.dims)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.side() + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        let side = self.side();
        self.data[r * side + c] = v;
    }

    /// Relabel the factor structure without touching entries.
    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        if product(&dims) != self.side() {
            return Err(LinalgError::DimMismatch {
                left: self.dims,
                right: dims,
            });
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn adjoint(&self) -> Self {
        let side = self.side();
        let mut out = Self::zeros(&self.dims);
        for r in 0..side {
            for c in 0..side {
                out.data[c * side + r] = self.data[r * side + c].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        let side = self.side();
        (0..side).map(|i| self.data[i * side + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.side() != other.side() {
            return Err(LinalgError::DimMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Accumulate `s * other` into `self`.
    pub fn axpy(&mut self, s: C64, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let n = self.side();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        let row = |r: usize, dst: &mut [C64]| {
            let a = &self.data[r * n..(r + 1) * n];
            for (k, &aik) in a.iter().enumerate() {
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                let b = &other.data[k * n..(k + 1) * n];
                for (d, bkj) in dst.iter_mut().zip(b) {
                    *d += aik * bkj;
                }
            }
        };
        structured::for_each_row(&mut out, n, row);
        Ok(Self {
            dims: self.dims.clone(),
            data: out,
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        &ab - &ba
    }

    /// Relative anti-Hermitian part `||M - M^dag||_F / ||M||_F` (absolute when `M = 0`).
    pub fn hermiticity_defect(&self) -> f64 {
        let side = self.side();
        let mut acc = 0.0;
        for r in 0..side {
            for c in 0..side {
                acc += (self.data[r * side + c] - self.data[c * side + r].conj()).norm_sqr();
            }
        }
        let norm = self.frobenius_norm();
        if norm > 0.0 {
            acc.sqrt() / norm
        } else {
            acc.sqrt()
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    /// `||U^dag U - I||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let uu = self.adjoint().matmul(self).expect("same shape");
        uu.distance(&Self::identity(&self.dims)).expect("same shape")
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        let n = self.side();
        if psi.len() != n {
            return Err(LinalgError::DimMismatch {
                left: self.dims.clone(),
                right: psi.dims().to_vec(),
            });
        }
        let amps = (0..n)
            .map(|r| {
                self.data[r * n..(r + 1) * n]
                    .iter()
                    .zip(psi.amplitudes())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        StateVector::new(self.dims.clone(), amps)
    }

    /// Tensor product with the default side-length cap.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        self.kron_with_limit(other, DEFAULT_MAX_SIDE)
    }

    pub fn kron_with_limit(&self, other: &Self, max_side: usize) -> Result<Self> {
        let (na, nb) = (self.side(), other.side());
        let side = na.checked_mul(nb).unwrap_or(usize::MAX);
        if side > max_side {
            return Err(LinalgError::Capacity {
                side,
                max: max_side,
            });
        }
        let mut data = vec![C64::new(0.0, 0.0); side * side];
        for ar in 0..na {
            for ac in 0..na {
                let a = self.data[ar * na + ac];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for br in 0..nb {
                    let row = (ar * nb + br) * side + ac * nb;
                    let src = &other.data[br * nb..(br + 1) * nb];
                    for (d, b) in data[row..row + nb].iter_mut().zip(src) {
                        *d = a * b;
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(Self { dims, data })
    }

    /// `U^dag M U` for the basis permutation `U|r> = |map[r]>`.
    pub fn conjugate_by_basis_map(&self, map: &[usize]) -> Result<Self> {
        let n = self.side();
        if map.len() != n {
            return Err(LinalgError::ShapeMismatch {
                product: n,
                len: map.len(),
            });
        }
        let mut out = Self::zeros(&self.dims);
        for r in 0..n {
            let src = map[r] * n;
            let dst = &mut out.data[r * n..(r + 1) * n];
            for (c, d) in dst.iter_mut().enumerate() {
                *d = self.data[src + map[c]];
            }
        }
        Ok(out)
    }

    /// `e^{-iHt}` through the spectral decomposition of Hermitian `H`.
    pub fn expm_hermitian(&self, t: f64) -> Result<Self> {
        spectral::expm_hermitian(self, t)
    }

    /// Principal logarithm of a unitary; the result is skew-Hermitian.
    pub fn unitary_log(&self) -> Result<Self> {
        spectral::unitary_log(self)
    }

    /// Trace out every factor not listed in `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(LinalgError::InvalidFactors("keep set is empty".into()));
        }
        let nf = self.dims.len();
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&k| k >= nf) {
            return Err(LinalgError::InvalidFactors(format!(
                "keep {keep:?} invalid for {nf} factors"
            )));
        }
        let traced: Vec<usize> = (0..nf).filter(|f| !keep_sorted.contains(f)).collect();
        let kept_dims: Vec<usize> = keep_sorted.iter().map(|&f| self.dims[f]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&f| self.dims[f]).collect();
        let strides = structured::strides(&self.dims);
        let kept_offsets = structured::offsets(&kept_dims, &keep_sorted, &strides);
        let traced_offsets = structured::offsets(&traced_dims, &traced, &strides);

        let n = self.side();
        let nk = kept_offsets.len();
        let mut out = Self::zeros(&kept_dims);
        for (a, &ka) in kept_offsets.iter().enumerate() {
            for (b, &kb) in kept_offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_offsets {
                    acc += self.data[(ka + t) * n + kb + t];
                }
                out.data[a * nk + b] = acc;
            }
        }
        Ok(out)
    }
}

impl Add for &OperatorMatrix {
    type Output = Result<OperatorMatrix>;
    fn add(self, rhs: Self) -> Self::Output {
        self.check_same(rhs)?;
        Ok(OperatorMatrix {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }
}

impl Sub for &OperatorMatrix {
    type Output = Result<OperatorMatrix>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.check_same(rhs)?;
        Ok(OperatorMatrix {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = Result<OperatorMatrix>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.matmul(rhs)
    }
}

impl AddAssign<&OperatorMatrix> for OperatorMatrix {
    /// Panics on a shape mismatch; use [`OperatorMatrix::axpy`] for a checked version.
    fn add_assign(&mut self, rhs: &OperatorMatrix) {
        self.axpy(C64::new(1.0, 0.0), rhs)
            .expect("operator shapes must agree");
    }
}

pub(crate) fn to_nalgebra(m: &OperatorMatrix) -> nalgebra::DMatrix<C64> {
    let n = m.side();
    nalgebra::DMatrix::from_row_slice(n, n, m.data())
}

pub(crate) fn from_nalgebra(dims: &[usize], m: &nalgebra::DMatrix<C64>) -> OperatorMatrix {
    OperatorMatrix::from_fn(dims, |r, c| m[(r, c)])
}
