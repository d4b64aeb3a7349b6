//! Qubit operators: embedded Paulis, collective spins, exchange gates,
//! permutation unitaries and two-qubit exchange Hamiltonians.
//!
//! Sites are zero-based in code. Displayed cycle notation is one-based so it
//! reads like the usual `(1,2,...,N)` convention.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, OperatorMatrix, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QubitError {
    #[error("site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("exchange needs two distinct sites, got ({0}, {0})")]
    SameSite(usize),
    #[error("need at least one qubit")]
    NoQubits,
    #[error("not a bijection on {n} sites: {map:?}")]
    NotBijection { n: usize, map: Vec<usize> },
    #[error("{0} qubits exceed the dense-operator capacity")]
    TooManyQubits(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Dense operators stop at 2^12 = 4096.
pub const MAX_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn matrix(self) -> OperatorMatrix {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let data = match self {
            PauliAxis::X => vec![z, one, one, z],
            PauliAxis::Y => vec![z, -i, i, z],
            PauliAxis::Z => vec![one, z, z, -one],
        };
        OperatorMatrix::new(vec![2], data).expect("2x2")
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliAxis::X => "x",
            PauliAxis::Y => "y",
            PauliAxis::Z => "z",
        };
        f.write_str(s)
    }
}

fn check_n(n: usize) -> Result<(), QubitError> {
    if n == 0 {
        return Err(QubitError::NoQubits);
    }
    if n > MAX_QUBITS {
        return Err(QubitError::TooManyQubits(n));
    }
    Ok(())
}

fn check_site(site: usize, n: usize) -> Result<(), QubitError> {
    if site >= n {
        return Err(QubitError::SiteOutOfRange { site, n });
    }
    Ok(())
}

fn check_pair(i: usize, j: usize, n: usize) -> Result<(), QubitError> {
    check_n(n)?;
    check_site(i, n)?;
    check_site(j, n)?;
    if i == j {
        return Err(QubitError::SameSite(i));
    }
    Ok(())
}

#[inline]
fn bit(index: usize, site: usize, n: usize) -> usize {
    (index >> (n - 1 - site)) & 1
}

/// Pauli `axis` on qubit `site` of an `n`-qubit register.
pub fn pauli_on(axis: PauliAxis, site: usize, n: usize) -> Result<OperatorMatrix, QubitError> {
    check_n(n)?;
    check_site(site, n)?;
    let p = axis.matrix();
    let dim = 1usize << n;
    let mut out = OperatorMatrix::zeros(&vec![2; n]);
    let mask = 1usize << (n - 1 - site);
    for c in 0..dim {
        let b = bit(c, site, n);
        for a in 0..2 {
            let v = p.get(a, b);
            if v != C64::new(0.0, 0.0) {
                let r = if a == b { c } else { c ^ mask };
                out.set(r, c, v);
            }
        }
    }
    Ok(out)
}

/// `S_axis = sum_i sigma_axis^(i)`.
pub fn collective_spin(axis: PauliAxis, n: usize) -> Result<OperatorMatrix, QubitError> {
    check_n(n)?;
    let mut acc = OperatorMatrix::zeros(&vec![2; n]);
    for i in 0..n {
        acc += &pauli_on(axis, i, n)?;
    }
    Ok(acc)
}

/// Site relabelling: the state held at site `i` moves to site `map[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct QubitPermutation {
    map: Vec<usize>,
}

impl TryFrom<Vec<usize>> for QubitPermutation {
    type Error = QubitError;
    fn try_from(map: Vec<usize>) -> Result<Self, QubitError> {
        Self::new(map)
    }
}

impl From<QubitPermutation> for Vec<usize> {
    fn from(p: QubitPermutation) -> Self {
        p.map
    }
}

impl QubitPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self, QubitError> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n || seen[m] {
                return Err(QubitError::NotBijection { n, map });
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn transposition(i: usize, j: usize, n: usize) -> Result<Self, QubitError> {
        check_pair(i, j, n)?;
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(i, j);
        Ok(Self { map })
    }

    /// Cycle `(c0, c1, ..., ck)`: the state at `c0` moves to `c1`, and so on, wrapping around.
    pub fn cycle(sites: &[usize], n: usize) -> Result<Self, QubitError> {
        let mut map: Vec<usize> = (0..n).collect();
        for (k, &s) in sites.iter().enumerate() {
            check_site(s, n)?;
            map[s] = sites[(k + 1) % sites.len()];
        }
        Self::new(map)
    }

    /// Product of disjoint or overlapping exchanges applied in list order.
    pub fn from_exchanges(pairs: &[(usize, usize)], n: usize) -> Result<Self, QubitError> {
        let mut p = Self::identity(n);
        for &(i, j) in pairs {
            p = Self::transposition(i, j, n)?.compose(&p);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, site: usize) -> usize {
        self.map[site]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n(), other.n(), "permutation sizes differ");
        Self {
            map: other.map.iter().map(|&m| self.map[m]).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.n()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::identity(self.n()), |acc, _| self.compose(&acc))
    }

    /// Number of sites whose state moves.
    pub fn moved_sites(&self) -> usize {
        self.map.iter().enumerate().filter(|(i, m)| i != *m).count()
    }

    /// Same relabelling on a larger register; extra sites stay fixed.
    pub fn extended(&self, n: usize) -> Self {
        let mut map = self.map.clone();
        map.extend(self.n()..n);
        Self { map }
    }

    /// Basis-index image under the permutation unitary on `n` qubits.
    pub fn basis_map(&self) -> Vec<usize> {
        let n = self.n();
        (0..1usize << n)
            .map(|b| {
                let mut out = 0;
                for i in 0..n {
                    if bit(b, i, n) == 1 {
                        out |= 1 << (n - 1 - self.map[i]);
                    }
                }
                out
            })
            .collect()
    }

    /// Basis map on `qubits ⊗ rest`, leaving the trailing `rest_dim` factor untouched.
    pub fn lifted_basis_map(&self, rest_dim: usize) -> Vec<usize> {
        let qmap = self.basis_map();
        let mut out = Vec::with_capacity(qmap.len() * rest_dim);
        for &q in &qmap {
            for b in 0..rest_dim {
                out.push(q * rest_dim + b);
            }
        }
        out
    }
}

impl fmt::Display for QubitPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("()");
        }
        let mut seen = vec![false; self.n()];
        for start in 0..self.n() {
            if seen[start] || self.map[start] == start {
                continue;
            }
            let mut cyc = Vec::new();
            let mut s = start;
            while !seen[s] {
                seen[s] = true;
                cyc.push((s + 1).to_string());
                s = self.map[s];
            }
            write!(f, "({})", cyc.join(","))?;
        }
        Ok(())
    }
}

/// Unitary realising the site relabelling, `U|b_1..b_n> = |b'>` with `b'_{map(i)} = b_i`.
pub fn permutation_unitary(p: &QubitPermutation) -> Result<OperatorMatrix, QubitError> {
    check_n(p.n())?;
    let map = p.basis_map();
    let mut out = OperatorMatrix::zeros(&vec![2; p.n()]);
    for (c, &r) in map.iter().enumerate() {
        out.set(r, c, C64::new(1.0, 0.0));
    }
    Ok(out)
}

/// Phase-free exchange of qubits `i` and `j`.
pub fn swap_gate(i: usize, j: usize, n: usize) -> Result<OperatorMatrix, QubitError> {
    check_pair(i, j, n)?;
    permutation_unitary(&QubitPermutation::transposition(i, j, n)?)
}

/// Shared cache of permutation unitaries keyed by site map.
#[derive(Default)]
pub struct PermutationCache {
    inner: RwLock<HashMap<QubitPermutation, Arc<OperatorMatrix>>>,
}

impl PermutationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, p: &QubitPermutation) -> Result<Arc<OperatorMatrix>, QubitError> {
        if let Some(u) = self.inner.read().get(p) {
            return Ok(Arc::clone(u));
        }
        let u = Arc::new(permutation_unitary(p)?);
        let mut guard = self.inner.write();
        Ok(Arc::clone(guard.entry(p.clone()).or_insert(u)))
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Two-qubit interaction used to drive an exchange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeGenerator {
    /// `xx + yy + zz`; a pulse area of pi/4 gives `e^{-i pi/4} SWAP`.
    #[default]
    Heisenberg,
    /// `xx + yy`; a pulse area of pi/4 swaps up to relative phases `-i` on `|01>`,`|10>`.
    Xy,
}

impl ExchangeGenerator {
    /// Local 4x4 generator on the ordered pair.
    pub fn local_matrix(self) -> OperatorMatrix {
        match self {
            ExchangeGenerator::Heisenberg => {
                heisenberg_coupling(0, 1, 2).expect("valid pair")
            }
            ExchangeGenerator::Xy => xy_coupling(0, 1, 2).expect("valid pair"),
        }
    }
}

fn pair_coupling(
    axes: &[PauliAxis],
    i: usize,
    j: usize,
    n: usize,
) -> Result<OperatorMatrix, QubitError> {
    check_pair(i, j, n)?;
    let mut acc = OperatorMatrix::zeros(&vec![2; n]);
    for &a in axes {
        acc += &pauli_on(a, i, n)?.matmul(&pauli_on(a, j, n)?)?;
    }
    Ok(acc)
}

/// `σx σx + σy σy + σz σz` on sites `i`, `j` (unit coupling).
pub fn heisenberg_coupling(i: usize, j: usize, n: usize) -> Result<OperatorMatrix, QubitError> {
    pair_coupling(&PauliAxis::ALL, i, j, n)
}

/// `σx σx + σy σy` on sites `i`, `j` (unit coupling).
pub fn xy_coupling(i: usize, j: usize, n: usize) -> Result<OperatorMatrix, QubitError> {
    pair_coupling(&[PauliAxis::X, PauliAxis::Y], i, j, n)
}
