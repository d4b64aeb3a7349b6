use super::{product, LinalgError, OperatorMatrix, Result, C64};

const NORM_TOL: f64 = 1e-12;
const NEGATIVITY_TOL: f64 = 1e-10;

/// Pure state on a tensor-product space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let n = product(&dims);
        if n != amps.len() {
            return Err(LinalgError::ShapeMismatch {
                product: n,
                len: amps.len(),
            });
        }
        Ok(Self { dims, amps })
    }

    pub fn basis(dims: &[usize], index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); product(dims)];
        amps[index] = C64::new(1.0, 0.0);
        Self {
            dims: dims.to_vec(),
            amps,
        }
    }

    /// Qubit basis state from a bit string such as `"0101"`.
    pub fn from_bits(bits: &str) -> Option<Self> {
        let n = bits.len();
        let index = usize::from_str_radix(bits, 2).ok()?;
        Some(Self::basis(&vec![2; n], index))
    }

    /// Normalised superposition of qubit basis states given as `(bits, weight)` pairs.
    pub fn from_terms(terms: &[(&str, f64)]) -> Option<Self> {
        let n = terms.first()?.0.len();
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        for (bits, w) in terms {
            if bits.len() != n {
                return None;
            }
            amps[usize::from_str_radix(bits, 2).ok()?] += C64::new(*w, 0.0);
        }
        Self::new(vec![2; n], amps).ok()?.normalized()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORM_TOL
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|a| a * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(LinalgError::DimMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Self::new(
            self.dims.clone(),
            self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        )
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.len() != other.len() {
            return Err(LinalgError::DimMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.len() * other.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims, amps }
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> OperatorMatrix {
        let a = &self.amps;
        OperatorMatrix::from_fn(&self.dims, |r, c| a[r] * a[c].conj())
    }

    /// Ket notation with amplitudes to six decimals, skipping negligible terms.
    pub fn to_ket_string(&self) -> String {
        let n = self.dims.len();
        let qubits = self.dims.iter().all(|&d| d == 2);
        let mut parts = Vec::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() < 5e-7 {
                continue;
            }
            let label = if qubits {
                format!("{:0width$b}", i, width = n)
            } else {
                i.to_string()
            };
            let amp = if a.im.abs() < 5e-7 {
                format!("{:+.6}", a.re)
            } else {
                format!("({:+.6}{:+.6}i)", a.re, a.im)
            };
            parts.push(format!("{amp}|{label}>"));
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// `sqrt(<psi|rho|psi>)`, clamped to `[0, 1]` once the overlap passes the negativity check.
pub fn state_fidelity(psi: &StateVector, rho: &OperatorMatrix) -> Result<f64> {
    if !psi.is_normalized() {
        return Err(LinalgError::NotNormalized(psi.norm()));
    }
    let n = rho.side();
    if psi.len() != n {
        return Err(LinalgError::DimMismatch {
            left: psi.dims().to_vec(),
            right: rho.dims().to_vec(),
        });
    }
    let a = psi.amplitudes();
    let data = rho.data();
    let mut overlap = C64::new(0.0, 0.0);
    for r in 0..n {
        if a[r] == C64::new(0.0, 0.0) {
            continue;
        }
        let row: C64 = data[r * n..(r + 1) * n]
            .iter()
            .zip(a)
            .map(|(m, b)| m * b)
            .sum();
        overlap += a[r].conj() * row;
    }
    if overlap.re < -NEGATIVITY_TOL {
        return Err(LinalgError::NegativeOverlap(overlap.re));
    }
    Ok(overlap.re.max(0.0).sqrt().min(1.0))
}
