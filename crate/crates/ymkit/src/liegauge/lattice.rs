//! Potentials sampled on a regular spacetime lattice.

use super::algebra::{Algebra, Elem};
use super::form::{TwoForm, PAIRS};
use super::PotentialField;
use crate::exec::Exec;
use crate::geometry::Vec4;
use crate::{Error, Result};

/// What to do where the centred stencil leaves the lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Refuse with a boundary-stencil error.
    #[default]
    Reject,
    /// Switch to 4th-order one-sided stencils.
    OneSided,
}

/// A_α sampled at `lo + i·h` for `i < n` along each axis.
#[derive(Clone, Debug)]
pub struct LatticePotential {
    pub lo: Vec4,
    pub h: Vec4,
    pub n: [usize; 4],
    pub data: Vec<[Elem; 4]>,
}

impl LatticePotential {
    pub fn sample(a: &dyn PotentialField, lo: Vec4, h: Vec4, n: [usize; 4], exec: Exec) -> Self {
        let total = n.iter().product();
        let data = exec.map(total, |flat| {
            let idx = unflatten(flat, &n);
            a.potential(&std::array::from_fn(|k| lo[k] + idx[k] as f64 * h[k]))
        });
        Self { lo, h, n, data }
    }

    pub fn point(&self, idx: &[usize; 4]) -> Vec4 {
        std::array::from_fn(|k| self.lo[k] + idx[k] as f64 * self.h[k])
    }

    fn at(&self, idx: &[usize; 4]) -> &[Elem; 4] {
        &self.data[flatten(idx, &self.n)]
    }

    /// ∂_k A at a node.
    fn partial(&self, idx: &[usize; 4], k: usize, policy: BoundaryPolicy) -> Result<[Elem; 4]> {
        let n = self.n[k];
        if n < 5 {
            return Err(Error::Resolution(format!("axis {k} has {n} nodes; 5 are needed")));
        }
        let i = idx[k];
        let (offsets, weights): ([isize; 5], [f64; 5]) = if i >= 2 && i + 2 < n {
            ([-2, -1, 0, 1, 2], [1.0, -8.0, 0.0, 8.0, -1.0])
        } else if policy == BoundaryPolicy::Reject {
            return Err(Error::BoundaryStencil { index: idx.to_vec() });
        } else if i == 0 {
            ([0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0])
        } else if i == 1 {
            ([-1, 0, 1, 2, 3], [-3.0, -10.0, 18.0, -6.0, 1.0])
        } else if i == n - 1 {
            ([0, -1, -2, -3, -4], [25.0, -48.0, 36.0, -16.0, 3.0])
        } else {
            ([1, 0, -1, -2, -3], [3.0, 10.0, -18.0, 6.0, -1.0])
        };
        let mut out = [Elem::ZERO; 4];
        for (o, w) in offsets.iter().zip(weights.iter()) {
            if *w == 0.0 {
                continue;
            }
            let mut j = *idx;
            j[k] = (i as isize + o) as usize;
            let v = self.at(&j);
            for (s, e) in out.iter_mut().zip(v.iter()) {
                s.axpy(w / (12.0 * self.h[k]), e);
            }
        }
        Ok(out)
    }

    /// F at one node.
    pub fn curvature_at(&self, alg: &Algebra, idx: &[usize; 4], policy: BoundaryPolicy) -> Result<TwoForm> {
        let a0 = self.at(idx);
        let mut da = [[Elem::ZERO; 4]; 4];
        for (k, d) in da.iter_mut().enumerate() {
            *d = self.partial(idx, k, policy)?;
        }
        let mut f = TwoForm::ZERO;
        for (i, &(m, n)) in PAIRS.iter().enumerate() {
            f.0[i] = da[m][n] - da[n][m] + alg.bracket(&a0[m], &a0[n]);
        }
        Ok(f)
    }

    /// F at every node, in lattice order.
    pub fn curvature(&self, alg: &Algebra, policy: BoundaryPolicy, exec: Exec) -> Result<Vec<TwoForm>> {
        exec.map(self.data.len(), |flat| self.curvature_at(alg, &unflatten(flat, &self.n), policy))
            .into_iter()
            .collect()
    }
}

fn flatten(idx: &[usize; 4], n: &[usize; 4]) -> usize {
    ((idx[0] * n[1] + idx[1]) * n[2] + idx[2]) * n[3] + idx[3]
}

fn unflatten(mut flat: usize, n: &[usize; 4]) -> [usize; 4] {
    let mut idx = [0; 4];
    for k in (0..4).rev() {
        idx[k] = flat % n[k];
        flat /= n[k];
    }
    idx
}
