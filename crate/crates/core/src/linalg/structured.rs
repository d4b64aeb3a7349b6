//! Kronecker-structured products: apply an operator that acts on a few
//! tensor factors to a full dense matrix without materialising `A ⊗ I`.
//!
//! Row loops go through [`for_each_row`], which fans out over rayon when the
//! `parallel` feature is on and runs sequentially otherwise.

use super::{LinalgError, OperatorMatrix, Result, C64};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-major strides for the given factor dimensions.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        s[f] = s[f + 1] * dims[f + 1];
    }
    s
}

/// Full-space offsets of every multi-index over `factors` (first listed factor most significant).
pub(crate) fn offsets(local_dims: &[usize], factors: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = local_dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for l in 0..total {
        let mut rem = l;
        let mut off = 0;
        for (k, &f) in factors.iter().enumerate().rev() {
            let d = local_dims[k];
            off += (rem % d) * strides[f];
            rem /= d;
        }
        out.push(off);
    }
    out
}

/// Run `f(row_index, row_slice)` over the rows of a row-major `n`-column buffer.
pub fn for_each_row<F>(buf: &mut [C64], n: usize, f: F)
where
    F: Fn(usize, &mut [C64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        buf.par_chunks_mut(n)
            .enumerate()
            .for_each(|(r, row)| f(r, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        buf.chunks_mut(n).enumerate().for_each(|(r, row)| f(r, row));
    }
}

/// Factor structure of the full space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorLayout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl FactorLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        let strides = strides(&dims);
        let total = dims.iter().product();
        Self {
            dims,
            strides,
            total,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn digit(&self, index: usize, factor: usize) -> usize {
        (index / self.strides[factor]) % self.dims[factor]
    }
}

/// Operator on a subset of factors, precompiled for a given layout.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    factors: Vec<usize>,
    local: OperatorMatrix,
    offsets: Vec<usize>,
    local_index: Vec<u32>,
    base: Vec<u32>,
    /// Nonzero entries of each local row: `(column, value)`.
    rows: Vec<Vec<(usize, C64)>>,
    /// Nonzero entries of each local column: `(row, value)`.
    cols: Vec<Vec<(usize, C64)>>,
}

impl LocalOperator {
    /// `factors` lists the factors `local` acts on, in the order of its own tensor structure.
    pub fn new(layout: &FactorLayout, factors: &[usize], local: &OperatorMatrix) -> Result<Self> {
        let mut seen = factors.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != factors.len() || factors.iter().any(|&f| f >= layout.dims.len()) {
            return Err(LinalgError::InvalidFactors(format!(
                "factors {factors:?} invalid for layout {:?}",
                layout.dims
            )));
        }
        let local_dims: Vec<usize> = factors.iter().map(|&f| layout.dims[f]).collect();
        if local_dims.iter().product::<usize>() != local.side() {
            return Err(LinalgError::DimMismatch {
                left: local_dims,
                right: local.dims().to_vec(),
            });
        }
        let offsets = offsets(&local_dims, factors, &layout.strides);
        let mut local_index = Vec::with_capacity(layout.total);
        let mut base = Vec::with_capacity(layout.total);
        for r in 0..layout.total {
            let mut l = 0;
            for &f in factors {
                l = l * layout.dims[f] + layout.digit(r, f);
            }
            local_index.push(l as u32);
            base.push((r - offsets[l]) as u32);
        }
        let side = local.side();
        let mut rows = vec![Vec::new(); side];
        let mut cols = vec![Vec::new(); side];
        for r in 0..side {
            for c in 0..side {
                let v = local.get(r, c);
                if v != C64::new(0.0, 0.0) {
                    rows[r].push((c, v));
                    cols[c].push((r, v));
                }
            }
        }
        Ok(Self {
            factors: factors.to_vec(),
            local: local.clone(),
            offsets,
            local_index,
            base,
            rows,
            cols,
        })
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn local(&self) -> &OperatorMatrix {
        &self.local
    }

    /// `dst += coeff * (A ⊗ I) * src` for row-major square buffers.
    pub fn apply_left_acc(&self, coeff: C64, src: &[C64], dst: &mut [C64]) {
        let n = self.base.len();
        debug_assert_eq!(src.len(), n * n);
        for_each_row(dst, n, |r, out| {
            let l = self.local_index[r] as usize;
            let b = self.base[r] as usize;
            for &(lc, v) in &self.rows[l] {
                let s = b + self.offsets[lc];
                let w = coeff * v;
                for (d, x) in out.iter_mut().zip(&src[s * n..(s + 1) * n]) {
                    *d += w * x;
                }
            }
        });
    }

    /// `dst += coeff * src * (A ⊗ I)` for row-major square buffers.
    pub fn apply_right_acc(&self, coeff: C64, src: &[C64], dst: &mut [C64]) {
        let n = self.base.len();
        debug_assert_eq!(src.len(), n * n);
        for_each_row(dst, n, |r, out| {
            let row = &src[r * n..(r + 1) * n];
            for (c, d) in out.iter_mut().enumerate() {
                let l = self.local_index[c] as usize;
                let b = self.base[c] as usize;
                let mut acc = C64::new(0.0, 0.0);
                for &(lr, v) in &self.cols[l] {
                    acc += row[b + self.offsets[lr]] * v;
                }
                *d += coeff * acc;
            }
        });
    }

    /// `dst += coeff * (A ⊗ I)` on a dense row-major buffer.
    pub fn add_to_dense(&self, coeff: C64, dst: &mut [C64]) {
        let n = self.base.len();
        for_each_row(dst, n, |r, out| {
            let l = self.local_index[r] as usize;
            let b = self.base[r] as usize;
            for &(lc, v) in &self.rows[l] {
                out[b + self.offsets[lc]] += coeff * v;
            }
        });
    }

    /// Dense `A ⊗ I` with factors in layout order; used to cross-check the structured path.
    pub fn to_dense(&self, layout: &FactorLayout) -> OperatorMatrix {
        let n = layout.total;
        let mut out = OperatorMatrix::zeros(layout.dims());
        for r in 0..n {
            let l = self.local_index[r] as usize;
            let b = self.base[r] as usize;
            for &(lc, v) in &self.rows[l] {
                out.set(r, b + self.offsets[lc], v);
            }
        }
        out
    }
}

/// Diagonal operator on the full space.
pub fn apply_diagonal_left_acc(diag: &[C64], coeff: C64, src: &[C64], dst: &mut [C64]) {
    let n = diag.len();
    for_each_row(dst, n, |r, out| {
        let w = coeff * diag[r];
        if w == C64::new(0.0, 0.0) {
            return;
        }
        for (d, x) in out.iter_mut().zip(&src[r * n..(r + 1) * n]) {
            *d += w * x;
        }
    });
}

/// `dst = P src P^dag` for the basis permutation `P|r> = |map[r]>`.
pub fn permute_conjugate(map: &[usize], src: &[C64], dst: &mut [C64]) {
    let n = map.len();
    let mut inverse = vec![0usize; n];
    for (r, &m) in map.iter().enumerate() {
        inverse[m] = r;
    }
    for_each_row(dst, n, |r, out| {
        let s = inverse[r];
        let row = &src[s * n..(s + 1) * n];
        for (c, d) in out.iter_mut().enumerate() {
            *d = row[inverse[c]];
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, dims: &[usize]) -> OperatorMatrix {
        OperatorMatrix::from_fn(dims, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Embed `local` on `factors` by explicit kron with identities, permuting if needed.
    fn embed_by_kron(layout: &FactorLayout, factors: &[usize], local: &OperatorMatrix) -> OperatorMatrix {
        // brute force: <r|A⊗I|c> = A[l(r), l(c)] * prod_{f not in factors} delta(r_f, c_f)
        let dims = layout.dims();
        OperatorMatrix::from_fn(dims, |r, c| {
            for f in 0..dims.len() {
                if !factors.contains(&f) && layout.digit(r, f) != layout.digit(c, f) {
                    return C64::new(0.0, 0.0);
                }
            }
            let lr = factors.iter().fold(0, |acc, &f| acc * dims[f] + layout.digit(r, f));
            let lc = factors.iter().fold(0, |acc, &f| acc * dims[f] + layout.digit(c, f));
            local.get(lr, lc)
        })
    }

    #[test]
    fn structured_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = FactorLayout::new(vec![2, 3, 2, 2]);
        for factors in [vec![1], vec![0, 2], vec![3, 1], vec![2, 0, 3]] {
            let ldims: Vec<usize> = factors.iter().map(|&f| layout.dims()[f]).collect();
            let a = random(&mut rng, &ldims);
            let op = LocalOperator::new(&layout, &factors, &a).unwrap();
            let dense = embed_by_kron(&layout, &factors, &a);
            assert!(op.to_dense(&layout).distance(&dense).unwrap() < 1e-14);

            let m = random(&mut rng, layout.dims());
            let coeff = C64::new(0.3, -1.1);
            let mut left = vec![C64::new(0.0, 0.0); layout.total() * layout.total()];
            op.apply_left_acc(coeff, m.data(), &mut left);
            let expect = dense.matmul(&m).unwrap().scale(coeff);
            let got = OperatorMatrix::new(layout.dims().to_vec(), left).unwrap();
            assert!(got.distance(&expect).unwrap() < 1e-12);

            let mut right = vec![C64::new(0.0, 0.0); layout.total() * layout.total()];
            op.apply_right_acc(coeff, m.data(), &mut right);
            let expect = m.matmul(&dense).unwrap().scale(coeff);
            let got = OperatorMatrix::new(layout.dims().to_vec(), right).unwrap();
            assert!(got.distance(&expect).unwrap() < 1e-12);
        }
    }

    #[test]
    fn contiguous_local_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layout = FactorLayout::new(vec![2, 2, 3]);
        let a = random(&mut rng, &[2, 2]);
        let op = LocalOperator::new(&layout, &[0, 1], &a).unwrap();
        let kron = a.kron(&OperatorMatrix::identity(&[3])).unwrap();
        assert!(op.to_dense(&layout).distance(&kron).unwrap() < 1e-15);
    }

    #[test]
    fn rejects_bad_factors() {
        let layout = FactorLayout::new(vec![2, 2]);
        let a = OperatorMatrix::identity(&[2]);
        assert!(LocalOperator::new(&layout, &[2], &a).is_err());
        assert!(LocalOperator::new(&layout, &[0, 1], &a).is_err());
    }

    #[test]
    fn permutation_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, &[4]);
        let map = [1usize, 3, 0, 2];
        let p = OperatorMatrix::from_fn(&[4], |r, c| {
            if map[c] == r { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let expect = p.matmul(&m).unwrap().matmul(&p.adjoint()).unwrap();
        let mut out = vec![C64::new(0.0, 0.0); 16];
        permute_conjugate(&map, m.data(), &mut out);
        let got = OperatorMatrix::new(vec![4], out).unwrap();
        assert!(got.distance(&expect).unwrap() < 1e-15);
    }
}
