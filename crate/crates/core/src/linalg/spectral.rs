use std::f64::consts::PI;

use nalgebra::SymmetricEigen;

use super::{from_nalgebra, to_nalgebra, LinalgError, OperatorMatrix, Result, C64};

const HERMITIAN_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-8;
/// Eigenphases closer than this to the branch cut are rejected.
const BRANCH_TOL: f64 = 1e-6;

/// Eigen-decomposition `H = V diag(values) V^dag` with orthonormal columns in `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: OperatorMatrix,
}

pub fn hermitian_eigen(h: &OperatorMatrix) -> Result<HermitianEigen> {
    let defect = h.hermiticity_defect();
    if defect >= HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian(defect));
    }
    let eig = SymmetricEigen::new(to_nalgebra(h));
    Ok(HermitianEigen {
        values: eig.eigenvalues.iter().copied().collect(),
        vectors: from_nalgebra(h.dims(), &eig.eigenvectors),
    })
}

/// `V diag(f) V^dag`.
fn reassemble(vectors: &OperatorMatrix, f: &[C64]) -> OperatorMatrix {
    let n = vectors.side();
    let v = vectors.data();
    let mut scaled = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for k in 0..n {
            scaled[r * n + k] = v[r * n + k] * f[k];
        }
    }
    OperatorMatrix::from_fn(vectors.dims(), |r, c| {
        (0..n).map(|k| scaled[r * n + k] * v[c * n + k].conj()).sum()
    })
}

pub(super) fn expm_hermitian(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    let defect = h.hermiticity_defect();
    if defect >= HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian(defect));
    }
    if h.max_abs() == 0.0 {
        return Ok(OperatorMatrix::identity(h.dims()));
    }
    // symmetrise away rounding noise before handing to the eigensolver
    let herm = OperatorMatrix::from_fn(h.dims(), |r, c| 0.5 * (h.get(r, c) + h.get(c, r).conj()));
    let eig = SymmetricEigen::new(to_nalgebra(&herm));
    let vectors = from_nalgebra(h.dims(), &eig.eigenvectors);
    let phases: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|&e| C64::from_polar(1.0, -e * t))
        .collect();
    Ok(reassemble(&vectors, &phases))
}

pub(super) fn unitary_log(u: &OperatorMatrix) -> Result<OperatorMatrix> {
    let defect = u.unitarity_defect();
    if defect >= UNITARY_TOL {
        return Err(LinalgError::NotUnitary(defect));
    }
    // Cayley transform C = i (I + U)^-1 (I - U) is Hermitian with eigenvalues tan(phi/2)
    let id = OperatorMatrix::identity(u.dims());
    let plus = to_nalgebra(&(&id + u)?);
    let minus = to_nalgebra(&(&id - u)?);
    let branch = LinalgError::BranchAmbiguity {
        phase: PI,
        tol: BRANCH_TOL,
    };
    let x = plus.lu().solve(&minus).ok_or(branch)?;
    let c = from_nalgebra(u.dims(), &x).scale(C64::new(0.0, 1.0));
    let herm = OperatorMatrix::from_fn(u.dims(), |r, col| 0.5 * (c.get(r, col) + c.get(col, r).conj()));
    let eig = SymmetricEigen::new(to_nalgebra(&herm));
    let mut logs = Vec::with_capacity(eig.eigenvalues.len());
    for &t in eig.eigenvalues.iter() {
        let phase = 2.0 * t.atan();
        if !phase.is_finite() || PI - phase.abs() < BRANCH_TOL {
            return Err(LinalgError::BranchAmbiguity {
                phase,
                tol: BRANCH_TOL,
            });
        }
        logs.push(C64::new(0.0, phase));
    }
    let vectors = from_nalgebra(u.dims(), &eig.eigenvectors);
    Ok(reassemble(&vectors, &logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> OperatorMatrix {
        let a = OperatorMatrix::from_fn(&[n], |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&a + &a.adjoint()).unwrap().scale_real(0.5)
    }

    /// Plain truncated Taylor series of `exp(-iHt)`.
    fn taylor_expm(h: &OperatorMatrix, t: f64, terms: usize) -> OperatorMatrix {
        let gen = h.scale(C64::new(0.0, -t));
        let mut term = OperatorMatrix::identity(h.dims());
        let mut sum = term.clone();
        for k in 1..terms {
            term = term.matmul(&gen).unwrap().scale_real(1.0 / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn sigma_z_half_turn_is_minus_identity() {
        let sz = OperatorMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let u = sz.expm_hermitian(PI).unwrap();
        let minus = OperatorMatrix::identity(&[2]).scale_real(-1.0);
        assert!(u.distance(&minus).unwrap() < 1e-14);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let z = OperatorMatrix::zeros(&[3]);
        assert_eq!(z.expm_hermitian(1.7).unwrap(), OperatorMatrix::identity(&[3]));
    }

    #[test]
    fn matches_taylor_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = random_hermitian(&mut rng, 8);
        let t = 0.3;
        let u = h.expm_hermitian(t).unwrap();
        let oracle = taylor_expm(&h, t, 20);
        assert!(u.distance(&oracle).unwrap() < 1e-9);
        assert!(u.unitarity_defect() < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = OperatorMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            m.expm_hermitian(1.0),
            Err(LinalgError::NotHermitian(_))
        ));
    }

    #[test]
    fn exponent_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = random_hermitian(&mut rng, 6);
        let (s, t) = (0.37, 1.21);
        let lhs = h.expm_hermitian(s + t).unwrap();
        let rhs = h
            .expm_hermitian(s)
            .unwrap()
            .matmul(&h.expm_hermitian(t).unwrap())
            .unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn log_of_identity_and_diag() {
        let i4 = OperatorMatrix::identity(&[4]);
        assert!(i4.unitary_log().unwrap().max_abs() < 1e-14);

        let d = OperatorMatrix::from_diagonal(&[2], &[C64::new(0.0, 1.0), C64::new(0.0, -1.0)])
            .unwrap();
        let expected = OperatorMatrix::from_diagonal(
            &[2],
            &[C64::new(0.0, PI / 2.0), C64::new(0.0, -PI / 2.0)],
        )
        .unwrap();
        assert!(d.unitary_log().unwrap().distance(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn log_inverts_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let h = random_hermitian(&mut rng, 8);
        let norm = hermitian_eigen(&h)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let t = 2.0 / norm;
        let log = h.expm_hermitian(t).unwrap().unitary_log().unwrap();
        let expected = h.scale(C64::new(0.0, -t));
        assert!(log.distance(&expected).unwrap() < 1e-9);
    }

    #[test]
    fn log_branch_ambiguity() {
        let minus = OperatorMatrix::identity(&[2]).scale_real(-1.0);
        assert!(matches!(
            minus.unitary_log(),
            Err(LinalgError::BranchAmbiguity { .. })
        ));
    }

    #[test]
    fn log_handles_degenerate_spectrum() {
        // swap has eigenvalues {1, 1, 1, -1}; rotate it slightly away from the cut
        let mut swap = OperatorMatrix::zeros(&[4]);
        for (r, c) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap.set(r, c, C64::new(1.0, 0.0));
        }
        let gen = swap.scale_real(0.4);
        let u = gen.expm_hermitian(1.0).unwrap();
        let log = u.unitary_log().unwrap();
        assert!(log.distance(&gen.scale(C64::new(0.0, -1.0))).unwrap() < 1e-12);
    }

    #[test]
    fn log_near_the_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = random_hermitian(&mut rng, 6);
        let norm = hermitian_eigen(&h)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let t = 3.1 / norm;
        let log = h.expm_hermitian(t).unwrap().unitary_log().unwrap();
        assert!(log.distance(&h.scale(C64::new(0.0, -t))).unwrap() < 1e-9);
    }
}
