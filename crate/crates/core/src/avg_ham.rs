//! Average-Hamiltonian engine: interval-averaged couplings under a decoupling
//! cycle, the second- and third-order error generators, BCH residual ladders and
//! the collective / non-collective split of an independent-bath coupling.
//!
//! All stored generators are Hermitian. Evolution over one periodic block is
//! `U_0(T) = exp(-i(τ H̄ + τ² H_p + O(τ³)))` with `H̄ = Σ_k g_k† H_0 g_k`, and over
//! one concatenated block `exp(-i(mτ H̄ + τ² Σ_k g_k† H_p g_k + τ³ H_c + ...))`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::structured::{FactorLayout, LocalOperator};
use crate::linalg::{LinalgError, OperatorMatrix, C64, DEFAULT_MAX_SIDE};
use crate::par;
use crate::qubit_ops::{collective_spin, pauli_on, PauliAxis, QubitError, QubitPermutation};
use crate::sequences::DecouplingCycle;

/// Tolerance for the Hermiticity of supplied bath operators.
pub const BATH_HERMITIAN_TOL: f64 = 1e-12;
/// Frobenius tolerance of the transposition-invariance check.
pub const COLLECTIVITY_TOL: f64 = 1e-9;
/// Frobenius tolerance of the elimination identity.
pub const ELIMINATION_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AvgHamError {
    #[error("cycle acts on {cycle} qubits but the Hamiltonian has {hamiltonian}")]
    QubitCountMismatch { cycle: usize, hamiltonian: usize },
    #[error("operator side {side} is not a multiple of 2^{qubits}")]
    SideMismatch { side: usize, qubits: usize },
    #[error("site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("bath {bath} out of range for {count} baths")]
    BathOutOfRange { bath: usize, count: usize },
    #[error("operator on bath {bath} has dimension {got}, expected {expected}")]
    BathDimension { bath: usize, got: usize, expected: usize },
    #[error("operator is not Hermitian (relative defect {0:.3e})")]
    NotHermitian(f64),
    #[error("component index {j} must lie in 2..={n}")]
    BadComponent { j: usize, n: usize },
    #[error("{property}: deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    PropertyViolation {
        property: String,
        deviation: f64,
        tolerance: f64,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

pub type Result<T> = std::result::Result<T, AvgHamError>;

fn creal(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Seeded random Hermitian matrix with entries uniform in the unit square.
pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> OperatorMatrix {
    let a = OperatorMatrix::from_fn(&[dim], |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    (&a + &a.adjoint()).expect("square").scale_real(0.5)
}

/// One `σ_α^{(site)} ⊗ B` term, with `B` acting on bath factor `bath`.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub site: usize,
    pub axis: PauliAxis,
    pub bath: usize,
    pub op: OperatorMatrix,
}

/// `H_0 = H_S + Σ_b H_B^{(b)} + Σ σ_α^{(i)} ⊗ B_α^{(i)}` on `qubits ⊗ bath_1 ⊗ ... ⊗ bath_K`.
#[derive(Clone, Debug)]
pub struct SystemBathHamiltonian {
    n_qubits: usize,
    bath_dims: Vec<usize>,
    couplings: Vec<Coupling>,
    system_term: Option<OperatorMatrix>,
    bath_terms: Vec<(usize, OperatorMatrix)>,
}

impl SystemBathHamiltonian {
    pub fn new(n_qubits: usize, bath_dims: Vec<usize>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(QubitError::NoQubits.into());
        }
        let side = bath_dims
            .iter()
            .try_fold(1usize << n_qubits.min(63), |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if n_qubits > 62 || side > DEFAULT_MAX_SIDE {
            return Err(LinalgError::Capacity {
                side,
                max: DEFAULT_MAX_SIDE,
            }
            .into());
        }
        Ok(Self {
            n_qubits,
            bath_dims,
            couplings: Vec::new(),
            system_term: None,
            bath_terms: Vec::new(),
        })
    }

    /// Every qubit couples along x, y and z to its own bath of dimension `bath_dim`.
    pub fn random_independent(n_qubits: usize, bath_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Self::new(n_qubits, vec![bath_dim; n_qubits])?;
        for site in 0..n_qubits {
            for axis in PauliAxis::ALL {
                h.add_coupling(site, axis, site, random_hermitian(bath_dim, &mut rng))?;
            }
        }
        Ok(h)
    }

    /// Every qubit couples to one shared bath through the same operators.
    pub fn random_common(n_qubits: usize, bath_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Self::new(n_qubits, vec![bath_dim])?;
        for axis in PauliAxis::ALL {
            let b = random_hermitian(bath_dim, &mut rng);
            for site in 0..n_qubits {
                h.add_coupling(site, axis, 0, b.clone())?;
            }
        }
        Ok(h)
    }

    /// Append one idle, bath-free qubit after the existing ones.
    pub fn with_ancilla(&self) -> Result<Self> {
        let mut out = Self::new(self.n_qubits + 1, self.bath_dims.clone())?;
        out.couplings = self.couplings.clone();
        out.bath_terms = self.bath_terms.clone();
        if let Some(hs) = &self.system_term {
            let ext = hs.kron(&OperatorMatrix::identity(&[2]))?;
            out.system_term = Some(ext.with_dims(vec![2; self.n_qubits + 1])?);
        }
        Ok(out)
    }

    pub fn add_coupling(
        &mut self,
        site: usize,
        axis: PauliAxis,
        bath: usize,
        op: OperatorMatrix,
    ) -> Result<()> {
        if site >= self.n_qubits {
            return Err(AvgHamError::SiteOutOfRange {
                site,
                n: self.n_qubits,
            });
        }
        self.check_bath_op(bath, &op)?;
        self.couplings.push(Coupling {
            site,
            axis,
            bath,
            op: op.with_dims(vec![self.bath_dims[bath]])?,
        });
        Ok(())
    }

    pub fn add_bath_term(&mut self, bath: usize, op: OperatorMatrix) -> Result<()> {
        self.check_bath_op(bath, &op)?;
        let op = op.with_dims(vec![self.bath_dims[bath]])?;
        self.bath_terms.push((bath, op));
        Ok(())
    }

    pub fn set_system_term(&mut self, op: OperatorMatrix) -> Result<()> {
        if op.side() != 1 << self.n_qubits {
            return Err(AvgHamError::SideMismatch {
                side: op.side(),
                qubits: self.n_qubits,
            });
        }
        let defect = op.hermiticity_defect();
        if defect > BATH_HERMITIAN_TOL {
            return Err(AvgHamError::NotHermitian(defect));
        }
        self.system_term = Some(op.with_dims(vec![2; self.n_qubits])?);
        Ok(())
    }

    fn check_bath_op(&self, bath: usize, op: &OperatorMatrix) -> Result<()> {
        let expected = *self
            .bath_dims
            .get(bath)
            .ok_or(AvgHamError::BathOutOfRange {
                bath,
                count: self.bath_dims.len(),
            })?;
        if op.side() != expected {
            return Err(AvgHamError::BathDimension {
                bath,
                got: op.side(),
                expected,
            });
        }
        let defect = op.hermiticity_defect();
        if defect > BATH_HERMITIAN_TOL {
            return Err(AvgHamError::NotHermitian(defect));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn bath_dims(&self) -> &[usize] {
        &self.bath_dims
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    /// Product of all bath dimensions.
    pub fn rest_dim(&self) -> usize {
        self.bath_dims.iter().product()
    }

    pub fn side(&self) -> usize {
        (1 << self.n_qubits) * self.rest_dim()
    }

    pub fn layout(&self) -> FactorLayout {
        let mut dims = vec![2; self.n_qubits];
        dims.extend_from_slice(&self.bath_dims);
        FactorLayout::new(dims)
    }

    fn add_couplings_to(&self, layout: &FactorLayout, acc: &mut OperatorMatrix) -> Result<()> {
        for c in &self.couplings {
            let local = c.axis.matrix().kron(&c.op)?;
            let op = LocalOperator::new(layout, &[c.site, self.n_qubits + c.bath], &local)?;
            op.add_to_dense(creal(1.0), acc.data_mut());
        }
        Ok(())
    }

    /// Full `H_0`.
    pub fn assemble(&self) -> Result<OperatorMatrix> {
        let layout = self.layout();
        let mut acc = OperatorMatrix::zeros(layout.dims());
        if let Some(hs) = &self.system_term {
            let factors: Vec<usize> = (0..self.n_qubits).collect();
            LocalOperator::new(&layout, &factors, hs)?.add_to_dense(creal(1.0), acc.data_mut());
        }
        for (b, hb) in &self.bath_terms {
            LocalOperator::new(&layout, &[self.n_qubits + b], hb)?
                .add_to_dense(creal(1.0), acc.data_mut());
        }
        self.add_couplings_to(&layout, &mut acc)?;
        Ok(acc)
    }

    /// `H_SB` alone.
    pub fn assemble_coupling(&self) -> Result<OperatorMatrix> {
        let layout = self.layout();
        let mut acc = OperatorMatrix::zeros(layout.dims());
        self.add_couplings_to(&layout, &mut acc)?;
        Ok(acc)
    }

    /// `B_α^{(site)}` embedded on the full bath space (zero if the site has no such term).
    pub fn bath_operator(&self, site: usize, axis: PauliAxis) -> Result<OperatorMatrix> {
        let layout = FactorLayout::new(self.bath_dims.clone());
        let mut acc = OperatorMatrix::zeros(&self.bath_dims);
        for c in self
            .couplings
            .iter()
            .filter(|c| c.site == site && c.axis == axis)
        {
            LocalOperator::new(&layout, &[c.bath], &c.op)?.add_to_dense(creal(1.0), acc.data_mut());
        }
        Ok(acc)
    }

    /// `Σ_α S_α ⊗ B_α^{env}` with `B_α^{env}` the site average of `B_α^{(i)}`.
    pub fn collective_coupling(&self) -> Result<OperatorMatrix> {
        let n = self.n_qubits;
        let mut acc = OperatorMatrix::zeros(self.layout().dims());
        for axis in PauliAxis::ALL {
            let mut env = OperatorMatrix::zeros(&self.bath_dims);
            for site in 0..n {
                env += &self.bath_operator(site, axis)?;
            }
            let term = collective_spin(axis, n)?.kron(&env.scale_real(1.0 / n as f64))?;
            acc += &term;
        }
        Ok(acc)
    }
}

fn rest_dim_for(op: &OperatorMatrix, n_qubits: usize) -> Result<usize> {
    let q = 1usize << n_qubits;
    if op.side() % q != 0 {
        return Err(AvgHamError::SideMismatch {
            side: op.side(),
            qubits: n_qubits,
        });
    }
    Ok(op.side() / q)
}

/// `g† M g` with `g` lifted to act trivially on everything after the qubits.
pub fn conjugate(op: &OperatorMatrix, g: &QubitPermutation) -> Result<OperatorMatrix> {
    let rest = rest_dim_for(op, g.n())?;
    Ok(op.conjugate_by_basis_map(&g.lifted_basis_map(rest))?)
}

/// `[g_0† M g_0, ..., g_{m-1}† M g_{m-1}]`.
pub fn conjugates(op: &OperatorMatrix, cycle: &DecouplingCycle) -> Result<Vec<OperatorMatrix>> {
    cycle.controllers().iter().map(|g| conjugate(op, g)).collect()
}

/// `(1/m) Σ_k g_k† M g_k`.
pub fn average_operator(op: &OperatorMatrix, cycle: &DecouplingCycle) -> Result<OperatorMatrix> {
    let mut acc = OperatorMatrix::zeros(op.dims());
    for g in cycle.controllers() {
        acc += &conjugate(op, g)?;
    }
    Ok(acc.scale_real(1.0 / cycle.intervals() as f64))
}

fn check_cycle(h: &SystemBathHamiltonian, cycle: &DecouplingCycle) -> Result<()> {
    if cycle.n_qubits() != h.n_qubits() {
        return Err(AvgHamError::QubitCountMismatch {
            cycle: cycle.n_qubits(),
            hamiltonian: h.n_qubits(),
        });
    }
    Ok(())
}

/// Effective Hamiltonian `(1/m) Σ_k g_k† H_0 g_k` at cycle boundaries.
pub fn average_hamiltonian(
    h: &SystemBathHamiltonian,
    cycle: &DecouplingCycle,
) -> Result<OperatorMatrix> {
    check_cycle(h, cycle)?;
    average_operator(&h.assemble()?, cycle)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollectivityReport {
    pub max_violation: f64,
    /// Worst transposition, 0-based sites.
    pub worst_pair: Option<(usize, usize)>,
    pub tolerance: f64,
}

impl CollectivityReport {
    pub fn passed(&self) -> bool {
        self.max_violation < self.tolerance
    }
}

/// Largest change of `H_eff` under conjugation by any qubit transposition.
pub fn verify_collectivity(
    h_eff: &OperatorMatrix,
    n_qubits: usize,
    bath_dims: &[usize],
) -> Result<CollectivityReport> {
    let rest: usize = bath_dims.iter().product();
    if h_eff.side() != (1 << n_qubits) * rest {
        return Err(AvgHamError::SideMismatch {
            side: h_eff.side(),
            qubits: n_qubits,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n_qubits)
        .flat_map(|i| (i + 1..n_qubits).map(move |j| (i, j)))
        .collect();
    let mut report = CollectivityReport {
        max_violation: 0.0,
        worst_pair: None,
        tolerance: COLLECTIVITY_TOL,
    };
    for (i, j) in pairs {
        let t = QubitPermutation::transposition(i, j, n_qubits)?;
        let v = conjugate(h_eff, &t)?.distance(h_eff)?;
        if report.worst_pair.is_none() || v > report.max_violation {
            report.max_violation = v;
            report.worst_pair = Some((i, j));
        }
    }
    Ok(report)
}

/// Terms of a graded Lie series: `z[0]` is first order, `z[1]` second, `z[2]` third.
type Graded = [OperatorMatrix; 3];

/// `log(e^{A} e^{Z})` through third order for graded `A` and `Z`.
fn bch3(a: &Graded, z: &Graded) -> Result<Graded> {
    let c = |x: &OperatorMatrix, y: &OperatorMatrix| x.commutator(y);
    let first = (&a[0] + &z[0])?;
    let mut second = (&a[1] + &z[1])?;
    second.axpy(creal(0.5), &c(&a[0], &z[0])?)?;
    let mut third = (&a[2] + &z[2])?;
    third.axpy(creal(0.5), &c(&a[0], &z[1])?)?;
    third.axpy(creal(0.5), &c(&a[1], &z[0])?)?;
    let az = c(&a[0], &z[0])?;
    third.axpy(creal(1.0 / 12.0), &c(&a[0], &az)?)?;
    third.axpy(creal(-1.0 / 12.0), &c(&z[0], &az)?)?;
    Ok([first, second, third])
}

/// `log(e^{X_{m-1}} ... e^{X_0})` through third order, factor `0` acting first.
fn bch_product(factors: &[Graded]) -> Result<Graded> {
    let mut z = factors[0].clone();
    for f in &factors[1..] {
        z = bch3(f, &z)?;
    }
    Ok(z)
}

fn conj_graded(z: &Graded, g: &QubitPermutation) -> Result<Graded> {
    Ok([conjugate(&z[0], g)?, conjugate(&z[1], g)?, conjugate(&z[2], g)?])
}

/// Residuals of the truncated exponents at one interval length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BchResidual {
    pub tau: f64,
    /// `‖log U_0 + iτ H̄‖`.
    pub r1: f64,
    /// `‖log U_0 + i(τ H̄ + τ² H_p)‖`.
    pub r2: f64,
    /// `‖log U_c + i(mτ H̄ + τ² Σ g_k† H_p g_k + τ³ H_c)‖`.
    pub r3: f64,
    /// As `r3` with the complete third-order BCH term included.
    pub r3_full: f64,
    /// `‖τ² m H_p‖`.
    pub periodic_error_norm: f64,
    /// `‖τ³ H_c‖`.
    pub concatenated_error_norm: f64,
}

/// Error generators of one decoupling cycle.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub intervals: usize,
    /// `(1/m) Σ_k g_k† H_0 g_k`.
    pub h_eff: OperatorMatrix,
    /// `-(i/2) Σ_{j>k} [g_j† H_0 g_j, g_k† H_0 g_k]`.
    pub h_p: OperatorMatrix,
    /// `Σ_k g_k† H_p g_k`.
    pub h_p_symmetrized: OperatorMatrix,
    /// `-(i/2) Σ_k (m-2k-1) [H̄, g_k† H_p g_k]`.
    pub h_c: OperatorMatrix,
    /// Complete third-order term of `log U_c` at unit interval, as a Hermitian generator.
    pub third_order_full: OperatorMatrix,
    pub group_invariance_defect: f64,
    pub residuals: Vec<BchResidual>,
}

/// `Σ_{j>k} [A_j, A_k]` by prefix sums.
fn ordered_commutator_sum(a: &[OperatorMatrix]) -> Result<OperatorMatrix> {
    let mut acc = OperatorMatrix::zeros(a[0].dims());
    let mut prefix = OperatorMatrix::zeros(a[0].dims());
    for (j, aj) in a.iter().enumerate() {
        if j > 0 {
            acc += &aj.commutator(&prefix)?;
        }
        prefix += aj;
    }
    Ok(acc)
}

/// Hermitian generator `G` of an anti-Hermitian exponent term `-iG`.
fn hermitian_part_of_exponent(x: &OperatorMatrix) -> OperatorMatrix {
    x.scale(C64::new(0.0, 1.0))
}

pub fn error_hamiltonians(
    h: &SystemBathHamiltonian,
    cycle: &DecouplingCycle,
) -> Result<ErrorReport> {
    check_cycle(h, cycle)?;
    error_hamiltonians_of(&h.assemble()?, cycle)
}

/// As [`error_hamiltonians`] for an already assembled `H_0` on `qubits ⊗ rest`.
pub fn error_hamiltonians_of(h0: &OperatorMatrix, cycle: &DecouplingCycle) -> Result<ErrorReport> {
    let m = cycle.intervals();
    let a = conjugates(h0, cycle)?;
    let mut h_bar = OperatorMatrix::zeros(h0.dims());
    for ak in &a {
        h_bar += ak;
    }
    let h_p = ordered_commutator_sum(&a)?.scale(C64::new(0.0, -0.5));
    let c: Vec<OperatorMatrix> = conjugates(&h_p, cycle)?;
    let mut h_p_sym = OperatorMatrix::zeros(h0.dims());
    let mut comm = OperatorMatrix::zeros(h0.dims());
    for (k, ck) in c.iter().enumerate() {
        h_p_sym += ck;
        let w = m as f64 - 2.0 * k as f64 - 1.0;
        comm.axpy(creal(w), &h_bar.commutator(ck)?)?;
    }
    let h_c = comm.scale(C64::new(0.0, -0.5));

    let mut group_invariance_defect: f64 = 0.0;
    for g in cycle.controllers() {
        group_invariance_defect =
            group_invariance_defect.max(conjugate(&h_p_sym, g)?.distance(&h_p_sym)?);
    }

    // Graded series at τ = 1 with X_k = -i A_k.
    let zero = OperatorMatrix::zeros(h0.dims());
    let inner: Vec<Graded> = a
        .iter()
        .map(|ak| [ak.scale(C64::new(0.0, -1.0)), zero.clone(), zero.clone()])
        .collect();
    let z0 = bch_product(&inner)?;
    let outer: Vec<Graded> = cycle
        .controllers()
        .iter()
        .map(|g| conj_graded(&z0, g))
        .collect::<Result<_>>()?;
    let zc = bch_product(&outer)?;

    Ok(ErrorReport {
        intervals: m,
        h_eff: h_bar.scale_real(1.0 / m as f64),
        h_p,
        h_p_symmetrized: h_p_sym,
        h_c,
        third_order_full: hermitian_part_of_exponent(&zc[2]),
        group_invariance_defect,
        residuals: Vec::new(),
    })
}

impl ErrorReport {
    /// `(‖τ² m H_p‖, ‖τ³ H_c‖)`.
    pub fn error_scales(&self, tau: f64) -> (f64, f64) {
        (
            tau * tau * self.intervals as f64 * self.h_p.frobenius_norm(),
            tau.powi(3) * self.h_c.frobenius_norm(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "intervals: {}", self.intervals);
        let _ = writeln!(s, "dimension: {}", self.h_eff.side());
        let _ = writeln!(s, "h_eff_norm: {:.6e}", self.h_eff.frobenius_norm());
        let _ = writeln!(s, "h_eff_hermiticity_defect: {:.3e}", self.h_eff.hermiticity_defect());
        let _ = writeln!(s, "h_p_norm: {:.6e}", self.h_p.frobenius_norm());
        let _ = writeln!(s, "h_p_symmetrized_norm: {:.6e}", self.h_p_symmetrized.frobenius_norm());
        let _ = writeln!(s, "h_p_group_invariance_defect: {:.3e}", self.group_invariance_defect);
        let _ = writeln!(s, "h_c_norm: {:.6e}", self.h_c.frobenius_norm());
        let _ = writeln!(s, "third_order_full_norm: {:.6e}", self.third_order_full.frobenius_norm());
        for r in &self.residuals {
            let _ = writeln!(
                s,
                "residual[tau={:.6e}]: r1={:.6e} r2={:.6e} r3={:.6e} r3_full={:.6e} \
                 tau2_m_hp={:.6e} tau3_hc={:.6e}",
                r.tau, r.r1, r.r2, r.r3, r.r3_full, r.periodic_error_norm, r.concatenated_error_norm
            );
        }
        s
    }
}

/// Exact block unitary `Π_k g_k† U g_k` with `k = 0` rightmost.
fn conjugated_product(u: &OperatorMatrix, cycle: &DecouplingCycle) -> Result<OperatorMatrix> {
    let mut acc = OperatorMatrix::identity(u.dims());
    for g in cycle.controllers() {
        acc = conjugate(u, g)?.matmul(&acc)?;
    }
    Ok(acc)
}

/// Residual ladder over `taus`; the points run independently.
pub fn bch_residual(
    h: &SystemBathHamiltonian,
    cycle: &DecouplingCycle,
    taus: &[f64],
) -> Result<ErrorReport> {
    check_cycle(h, cycle)?;
    let h0 = h.assemble()?;
    let mut report = error_hamiltonians_of(&h0, cycle)?;
    let rows = par::map(taus, |&tau| residual_at(&h0, cycle, &report, tau));
    report.residuals = rows.into_iter().collect::<Result<_>>()?;
    Ok(report)
}

fn residual_at(
    h0: &OperatorMatrix,
    cycle: &DecouplingCycle,
    rep: &ErrorReport,
    tau: f64,
) -> Result<BchResidual> {
    let m = rep.intervals as f64;
    let mi = C64::new(0.0, -1.0);
    let u0 = conjugated_product(&h0.expm_hermitian(tau)?, cycle)?;
    let uc = conjugated_product(&u0, cycle)?;
    let l0 = u0.unitary_log()?;
    let lc = uc.unitary_log()?;

    let h_bar = rep.h_eff.scale_real(m);
    let mut gen = h_bar.scale_real(tau);
    let r1 = l0.distance(&gen.scale(mi))?;
    gen.axpy(creal(tau * tau), &rep.h_p)?;
    let r2 = l0.distance(&gen.scale(mi))?;

    let mut genc = h_bar.scale_real(m * tau);
    genc.axpy(creal(tau * tau), &rep.h_p_symmetrized)?;
    let mut truncated = genc.clone();
    truncated.axpy(creal(tau.powi(3)), &rep.h_c)?;
    let r3 = lc.distance(&truncated.scale(mi))?;
    genc.axpy(creal(tau.powi(3)), &rep.third_order_full)?;
    let r3_full = lc.distance(&genc.scale(mi))?;

    let (periodic_error_norm, concatenated_error_norm) = rep.error_scales(tau);
    Ok(BchResidual {
        tau,
        r1,
        r2,
        r3,
        r3_full,
        periodic_error_norm,
        concatenated_error_norm,
    })
}

/// `H_SB` split into one collective component and `N-1` non-collective components.
#[derive(Clone, Debug)]
pub struct CollectiveDecomposition {
    n_qubits: usize,
    bath_dims: Vec<usize>,
    /// `B_α^{1+}` per axis (x, y, z) on the full bath space.
    collective: Vec<OperatorMatrix>,
    /// `B_α^{j-}` per axis for `j = 2..=N`.
    noncollective: Vec<Vec<OperatorMatrix>>,
}

pub fn collective_decompose(h: &SystemBathHamiltonian) -> Result<CollectiveDecomposition> {
    let n = h.n_qubits();
    let mut collective = Vec::with_capacity(3);
    let mut noncollective = vec![Vec::with_capacity(3); n.saturating_sub(1)];
    for axis in PauliAxis::ALL {
        let b: Vec<OperatorMatrix> = (0..n)
            .map(|i| h.bath_operator(i, axis))
            .collect::<Result<_>>()?;
        let mut plus = b[0].scale_real(-(n as f64 - 3.0) / 2.0);
        for bi in &b[1..] {
            plus.axpy(creal(0.5), bi)?;
        }
        collective.push(plus);
        for (j, bj) in b.iter().enumerate().skip(1) {
            noncollective[j - 1].push((&b[0] - bj)?.scale_real(0.5));
        }
    }
    Ok(CollectiveDecomposition {
        n_qubits: n,
        bath_dims: h.bath_dims().to_vec(),
        collective,
        noncollective,
    })
}

impl CollectiveDecomposition {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn collective_bath(&self, axis: PauliAxis) -> &OperatorMatrix {
        &self.collective[axis_index(axis)]
    }

    /// `B_α^{j-}` for 1-based `j` in `2..=N`.
    pub fn noncollective_bath(&self, j: usize, axis: PauliAxis) -> Result<&OperatorMatrix> {
        self.check_component(j)?;
        Ok(&self.noncollective[j - 2][axis_index(axis)])
    }

    fn check_component(&self, j: usize) -> Result<()> {
        if j < 2 || j > self.n_qubits {
            return Err(AvgHamError::BadComponent {
                j,
                n: self.n_qubits,
            });
        }
        Ok(())
    }

    /// `Σ_α S_α ⊗ B_α^{1+}`.
    pub fn collective_part(&self) -> Result<OperatorMatrix> {
        let mut acc = self.zero();
        for axis in PauliAxis::ALL {
            acc += &collective_spin(axis, self.n_qubits)?.kron(self.collective_bath(axis))?;
        }
        Ok(acc)
    }

    /// `Σ_α (S_α - 2 σ_α^{(j)}) ⊗ B_α^{j-}`.
    pub fn component(&self, j: usize) -> Result<OperatorMatrix> {
        self.check_component(j)?;
        let mut acc = self.zero();
        for axis in PauliAxis::ALL {
            let mut spins = collective_spin(axis, self.n_qubits)?;
            spins.axpy(creal(-2.0), &pauli_on(axis, j - 1, self.n_qubits)?)?;
            acc += &spins.kron(self.noncollective_bath(j, axis)?)?;
        }
        Ok(acc)
    }

    /// `c · Σ_α S_α ⊗ B_α^{j-}`.
    pub fn collective_multiple(&self, j: usize, c: f64) -> Result<OperatorMatrix> {
        self.check_component(j)?;
        let mut acc = self.zero();
        for axis in PauliAxis::ALL {
            let term = collective_spin(axis, self.n_qubits)?.kron(self.noncollective_bath(j, axis)?)?;
            acc.axpy(creal(c), &term)?;
        }
        Ok(acc)
    }

    /// Sum of all components; equals `H_SB`.
    pub fn reassemble(&self) -> Result<OperatorMatrix> {
        let mut acc = self.collective_part()?;
        for j in 2..=self.n_qubits {
            acc += &self.component(j)?;
        }
        Ok(acc)
    }

    fn zero(&self) -> OperatorMatrix {
        let mut dims = vec![2; self.n_qubits];
        dims.extend_from_slice(&self.bath_dims);
        OperatorMatrix::zeros(&dims)
    }
}

fn axis_index(axis: PauliAxis) -> usize {
    match axis {
        PauliAxis::X => 0,
        PauliAxis::Y => 1,
        PauliAxis::Z => 2,
    }
}

#[derive(Clone, Debug)]
pub struct Elimination {
    pub j: usize,
    /// `Σ_k g_k† H_SB^j g_k`.
    pub summed: OperatorMatrix,
    /// Multiple of `Σ_α S_α ⊗ B_α^{j-}` reached by the sum, `m - 2`.
    pub coefficient: f64,
    pub deviation: f64,
}

/// Sum the conjugates of component `j` over the cycle and check it is collective.
///
/// Each controller moves the flipped site once around the register, so the
/// sum is `m S_α ⊗ B^{j-} - 2 S_α ⊗ B^{j-}`.
pub fn eliminate_noncollective(
    decomposition: &CollectiveDecomposition,
    j: usize,
    cycle: &DecouplingCycle,
) -> Result<Elimination> {
    if cycle.n_qubits() != decomposition.n_qubits() {
        return Err(AvgHamError::QubitCountMismatch {
            cycle: cycle.n_qubits(),
            hamiltonian: decomposition.n_qubits(),
        });
    }
    let component = decomposition.component(j)?;
    let mut summed = OperatorMatrix::zeros(component.dims());
    for g in cycle.controllers() {
        summed += &conjugate(&component, g)?;
    }
    let coefficient = cycle.intervals() as f64 - 2.0;
    let deviation = summed.distance(&decomposition.collective_multiple(j, coefficient)?)?;
    if deviation > ELIMINATION_TOL {
        return Err(AvgHamError::PropertyViolation {
            property: format!("elimination of component {j}"),
            deviation,
            tolerance: ELIMINATION_TOL,
        });
    }
    Ok(Elimination {
        j,
        summed,
        coefficient,
        deviation,
    })
}

/// Largest `‖ avg(H) ψ⊗φ ‖` over dark vectors `ψ` and bath basis states `φ`.
pub fn dark_leakage(h_eff: &OperatorMatrix, dark: &[crate::linalg::StateVector], rest_dim: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for psi in dark {
        for b in 0..rest_dim {
            let phi = crate::linalg::StateVector::basis(&[rest_dim], b);
            let v = h_eff.apply(&psi.kron(&phi))?;
            worst = worst.max(v.norm());
        }
    }
    Ok(worst)
}
