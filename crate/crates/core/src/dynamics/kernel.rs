//! Lindblad right-hand side on a dense density matrix, applied through
//! Kronecker-structured factors, and the fixed-step RK4 driver.

use crate::linalg::structured::{apply_diagonal_left_acc, for_each_row, permute_conjugate, LocalOperator};
use crate::linalg::{OperatorMatrix, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const MINUS_I: C64 = C64::new(0.0, -1.0);

/// Damped mode `L = sqrt(rate) a`.
#[derive(Clone, Debug)]
pub struct Jump {
    pub rate: f64,
    pub lower: LocalOperator,
    pub raise: LocalOperator,
}

/// `dρ/dt = -i(H_eff ρ - ρ H_eff†) + Σ L ρ L†` with `H_eff = H - (i/2) Σ L†L`.
///
/// The diagonal of `H_eff` (qubit splitting and the `-(i/2) L†L` number terms)
/// is stored separately from the off-diagonal local terms.
#[derive(Clone, Debug)]
pub struct Generator {
    side: usize,
    diagonal: Vec<C64>,
    terms: Vec<(C64, LocalOperator)>,
    jumps: Vec<Jump>,
}

impl Generator {
    pub fn new(diagonal: Vec<C64>, terms: Vec<(C64, LocalOperator)>, jumps: Vec<Jump>) -> Self {
        Self {
            side: diagonal.len(),
            diagonal,
            terms,
            jumps,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Copy with extra Hermitian terms added to `H`.
    pub fn with_terms(&self, extra: impl IntoIterator<Item = (C64, LocalOperator)>) -> Self {
        let mut g = self.clone();
        g.terms.extend(extra);
        g
    }

    /// Dense `H` when the generator is closed (no jumps, real diagonal).
    pub fn closed_hamiltonian(&self, dims: &[usize]) -> Option<OperatorMatrix> {
        if !self.jumps.is_empty() || self.diagonal.iter().any(|d| d.im != 0.0) {
            return None;
        }
        let mut h = OperatorMatrix::from_diagonal(dims, &self.diagonal).ok()?;
        for (c, op) in &self.terms {
            op.add_to_dense(*c, h.data_mut());
        }
        Some(h)
    }

    /// `out = L[ρ]`; `tmp` is scratch of the same size.
    pub fn derivative(&self, rho: &[C64], out: &mut [C64], tmp: &mut [C64]) {
        let n = self.side;
        tmp.fill(ZERO);
        apply_diagonal_left_acc(&self.diagonal, MINUS_I, rho, tmp);
        for (c, op) in &self.terms {
            op.apply_left_acc(MINUS_I * c, rho, tmp);
        }
        let k: &[C64] = tmp;
        for_each_row(out, n, |r, row| {
            for (c, d) in row.iter_mut().enumerate() {
                *d = k[r * n + c] + k[c * n + r].conj();
            }
        });
        for j in &self.jumps {
            tmp.fill(ZERO);
            j.lower.apply_left_acc(C64::new(1.0, 0.0), rho, tmp);
            j.raise.apply_right_acc(C64::new(j.rate, 0.0), tmp, out);
        }
    }
}

/// Buffers for classical fourth-order Runge-Kutta on an `n x n` state.
pub struct Rk4 {
    acc: Vec<C64>,
    stage: Vec<C64>,
    deriv: Vec<C64>,
    tmp: Vec<C64>,
}

fn axpy_into(dst: &mut [C64], base: &[C64], h: f64, x: &[C64]) {
    for ((d, b), v) in dst.iter_mut().zip(base).zip(x) {
        *d = b + v * h;
    }
}

fn axpy(dst: &mut [C64], h: f64, x: &[C64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += v * h;
    }
}

impl Rk4 {
    pub fn new(side: usize) -> Self {
        let len = side * side;
        Self {
            acc: vec![ZERO; len],
            stage: vec![ZERO; len],
            deriv: vec![ZERO; len],
            tmp: vec![ZERO; len],
        }
    }

    pub fn step(&mut self, g: &Generator, rho: &mut Vec<C64>, h: f64) {
        g.derivative(rho, &mut self.deriv, &mut self.tmp);
        axpy_into(&mut self.acc, rho, h / 6.0, &self.deriv);
        axpy_into(&mut self.stage, rho, h / 2.0, &self.deriv);

        g.derivative(&self.stage, &mut self.deriv, &mut self.tmp);
        axpy(&mut self.acc, h / 3.0, &self.deriv);
        axpy_into(&mut self.stage, rho, h / 2.0, &self.deriv);

        g.derivative(&self.stage, &mut self.deriv, &mut self.tmp);
        axpy(&mut self.acc, h / 3.0, &self.deriv);
        axpy_into(&mut self.stage, rho, h, &self.deriv);

        g.derivative(&self.stage, &mut self.deriv, &mut self.tmp);
        axpy(&mut self.acc, h / 6.0, &self.deriv);
        std::mem::swap(rho, &mut self.acc);
    }

    /// Integrate over `duration` in equal steps no longer than `max_step`.
    pub fn advance(&mut self, g: &Generator, rho: &mut Vec<C64>, duration: f64, max_step: f64) -> usize {
        if duration <= 0.0 {
            return 0;
        }
        let steps = (duration / max_step - 1e-9).ceil().max(1.0) as usize;
        let h = duration / steps as f64;
        for _ in 0..steps {
            self.step(g, rho, h);
        }
        steps
    }

    /// `ρ -> P ρ P†` for a basis permutation.
    pub fn permute(&mut self, map: &[usize], rho: &mut Vec<C64>) {
        permute_conjugate(map, rho, &mut self.tmp);
        std::mem::swap(rho, &mut self.tmp);
    }
}
