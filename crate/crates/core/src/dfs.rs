//! Dark subspace of the collective spin operators, the j = 0 sector in which
//! collective noise acts trivially.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{LinalgError, OperatorMatrix, StateVector, C64};
use crate::qubit_ops::{collective_spin, PauliAxis, QubitError, MAX_QUBITS};

/// Singular values at or below this count as kernel.
pub const KERNEL_TOL: f64 = 1e-8;
/// Required ratio between the smallest kept singular value and the largest kernel one.
pub const GAP_RATIO: f64 = 1e4;

#[derive(Debug, Error)]
pub enum DfsError {
    #[error("qubit count must lie in 1..={max}, got {n}")]
    QubitCount { n: usize, max: usize },
    #[error("no spectral gap: kernel edge {kernel:.3e}, next singular value {next:.3e}")]
    NoSpectralGap { kernel: f64, next: f64 },
    #[error("state has {got} amplitudes, basis lives in dimension {expected}")]
    DimMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Orthonormal basis of the joint kernel of `S_x`, `S_y`, `S_z`.
#[derive(Clone, Debug, Serialize)]
pub struct DarkBasis {
    pub n_qubits: usize,
    #[serde(skip)]
    pub vectors: Vec<StateVector>,
    pub singular_gap: Option<(f64, f64)>,
}

impl DarkBasis {
    pub fn dimension(&self) -> usize {
        self.vectors.len()
    }

    pub fn projector(&self) -> OperatorMatrix {
        let dims = vec![2; self.n_qubits];
        let mut p = OperatorMatrix::zeros(&dims);
        for v in &self.vectors {
            p += &v.projector();
        }
        p
    }
}

/// Kernel of the stacked `[S_x; S_y; S_z]` by SVD, returned in canonical orientation.
pub fn dark_subspace(n: usize) -> Result<DarkBasis, DfsError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(DfsError::QubitCount { n, max: MAX_QUBITS });
    }
    let d = 1usize << n;
    let spins: Vec<OperatorMatrix> = PauliAxis::ALL
        .iter()
        .map(|&a| collective_spin(a, n))
        .collect::<Result<_, _>>()?;
    let stacked = DMatrix::from_fn(3 * d, d, |r, c| spins[r / d].get(r % d, c));
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested V^dag");
    let mut kernel_rows = Vec::new();
    let (mut edge, mut next) = (0.0f64, f64::INFINITY);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= KERNEL_TOL {
            kernel_rows.push(i);
            edge = edge.max(s);
        } else {
            next = next.min(s);
        }
    }
    let gap = (!kernel_rows.is_empty() && next.is_finite()).then_some((edge, next));
    if let Some((k, s)) = gap {
        if s < GAP_RATIO * k {
            return Err(DfsError::NoSpectralGap { kernel: k, next: s });
        }
    }
    // Rows of V^dag are conjugated kernel vectors.
    let raw: Vec<Vec<C64>> = kernel_rows
        .iter()
        .map(|&i| (0..d).map(|c| v_t[(i, c)].conj()).collect())
        .collect();
    let vectors = canonicalize(&raw, d)
        .into_iter()
        .map(|amps| StateVector::new(vec![2; n], amps))
        .collect::<Result<_, _>>()?;
    Ok(DarkBasis {
        n_qubits: n,
        vectors,
        singular_gap: gap,
    })
}

/// Gram-Schmidt on the projections of `e_0, e_1, ...` onto the span of `raw`.
fn canonicalize(raw: &[Vec<C64>], d: usize) -> Vec<Vec<C64>> {
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(raw.len());
    for i in 0..d {
        if out.len() == raw.len() {
            break;
        }
        // P e_i = Σ_v v * conj(v_i)
        let mut w = vec![C64::new(0.0, 0.0); d];
        for v in raw {
            let c = v[i].conj();
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk += vk * c;
            }
        }
        for u in &out {
            let c = dot(u, &w);
            for (wk, uk) in w.iter_mut().zip(u) {
                *wk -= uk * c;
            }
        }
        let norm = dot(&w, &w).re.sqrt();
        if norm > 1e-6 {
            out.push(w.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Norm of the projection of `psi` onto the dark span.
pub fn contains(basis: &DarkBasis, psi: &StateVector) -> Result<f64, DfsError> {
    let expected = 1usize << basis.n_qubits;
    if psi.len() != expected {
        return Err(DfsError::DimMismatch {
            got: psi.len(),
            expected,
        });
    }
    let mut sq = 0.0;
    for v in &basis.vectors {
        sq += v.inner(psi)?.norm_sqr();
    }
    Ok(sq.sqrt())
}

pub fn dfs_dimension(n: usize) -> Result<usize, DfsError> {
    Ok(dark_subspace(n)?.dimension())
}

/// The explicit protected states: `psi1` on two qubits, `psi2` and `psi3` on four.
pub fn named_state(label: &str) -> Option<StateVector> {
    match label {
        "psi1" => StateVector::from_terms(&[("01", 1.0), ("10", -1.0)]),
        "psi2" => StateVector::from_terms(&[
            ("0101", 1.0),
            ("1001", -1.0),
            ("0110", -1.0),
            ("1010", 1.0),
        ]),
        "psi3" => StateVector::from_terms(&[
            ("0011", 2.0),
            ("0101", -1.0),
            ("1001", -1.0),
            ("0110", -1.0),
            ("1010", -1.0),
            ("1100", 2.0),
        ]),
        _ => None,
    }
}

/// Text listing of the basis in ket notation.
pub fn describe(basis: &DarkBasis) -> String {
    let mut s = format!(
        "dark subspace of {} qubits: dimension {}\n",
        basis.n_qubits,
        basis.dimension()
    );
    for (i, v) in basis.vectors.iter().enumerate() {
        s.push_str(&format!("  v{}: {}\n", i + 1, v.to_ket_string()));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_qubit_singlet() {
        let b = dark_subspace(2).unwrap();
        assert_eq!(b.dimension(), 1);
        let psi1 = named_state("psi1").unwrap();
        assert!((b.vectors[0].inner(&psi1).unwrap().norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            b.vectors[0].to_ket_string(),
            "+0.707107|01> -0.707107|10>"
        );
        assert!(contains(&b, &StateVector::from_bits("00").unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn four_qubit_states() {
        let b = dark_subspace(4).unwrap();
        assert_eq!(b.dimension(), 2);
        let psi2 = named_state("psi2").unwrap();
        let psi3 = named_state("psi3").unwrap();
        assert!((contains(&b, &psi2).unwrap() - 1.0).abs() < 1e-10);
        assert!((contains(&b, &psi3).unwrap() - 1.0).abs() < 1e-10);
        let mix = psi2.add(&psi3).unwrap().normalized().unwrap();
        assert!((contains(&b, &mix).unwrap() - 1.0).abs() < 1e-10);
        assert!(psi2.inner(&psi3).unwrap().norm() < 1e-15);
    }

    #[test]
    fn dimensions() {
        // brute force: multiplicity of total spin 0 is C(n, n/2) - C(n, n/2 + 1)
        let binom = |n: u64, k: u64| -> u64 { (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1)) };
        for n in 1..=7usize {
            let expected = if n % 2 == 1 {
                0
            } else {
                let h = n as u64 / 2;
                (binom(n as u64, h) - binom(n as u64, h + 1)) as usize
            };
            assert_eq!(dfs_dimension(n).unwrap(), expected, "n = {n}");
        }
    }

    #[test]
    fn basis_is_dark_orthonormal_and_projector_idempotent() {
        for n in [2, 4, 6] {
            let b = dark_subspace(n).unwrap();
            for (i, u) in b.vectors.iter().enumerate() {
                for (j, v) in b.vectors.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((u.inner(v).unwrap() - C64::new(expect, 0.0)).norm() < 1e-10);
                }
                for axis in PauliAxis::ALL {
                    let s = collective_spin(axis, n).unwrap();
                    assert!(s.apply(u).unwrap().norm() < 1e-10);
                }
            }
            let p = b.projector();
            assert!(p.matmul(&p).unwrap().distance(&p).unwrap() < 1e-10);
            if let Some((k, s)) = b.singular_gap {
                assert!(s >= GAP_RATIO * k);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(dark_subspace(0).is_err());
        let b = dark_subspace(2).unwrap();
        assert!(contains(&b, &named_state("psi2").unwrap()).is_err());
    }
}
