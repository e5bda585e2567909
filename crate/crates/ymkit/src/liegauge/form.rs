//! Algebra-valued tensors with spacetime indices.

use super::algebra::{Algebra, Elem};
use crate::geometry::{Mat4, RiemannianH};

/// Index pairs (α < β) in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[inline]
fn slot(a: usize, b: usize) -> (usize, f64) {
    debug_assert!(a != b);
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let k = match (lo, hi) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        _ => 5,
    };
    (k, sign)
}

/// An algebra-valued antisymmetric 2-tensor stored by its upper triangle,
/// so `F_{αβ} = −F_{βα}` holds exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoForm(pub [Elem; 6]);

impl TwoForm {
    pub const ZERO: TwoForm = TwoForm([Elem::ZERO; 6]);

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> Elem {
        if a == b {
            return Elem::ZERO;
        }
        let (k, s) = slot(a, b);
        if s > 0.0 {
            self.0[k]
        } else {
            -self.0[k]
        }
    }

    /// Set F_{ab} (and hence F_{ba} = −F_{ab}).
    #[inline]
    pub fn set(&mut self, a: usize, b: usize, v: Elem) {
        let (k, s) = slot(a, b);
        self.0[k] = v * s;
    }

    /// Canonical seed with a single independent component set to `v`.
    pub fn unit(pair: usize, v: Elem) -> Self {
        let mut f = TwoForm::ZERO;
        f.0[pair] = v;
        f
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = *self;
        for e in out.0.iter_mut() {
            *e = *e * a;
        }
        out
    }

    pub fn add(&self, o: &TwoForm) -> Self {
        let mut out = *self;
        for (e, x) in out.0.iter_mut().zip(o.0.iter()) {
            *e += *x;
        }
        out
    }

    pub fn sub(&self, o: &TwoForm) -> Self {
        self.add(&o.scaled(-1.0))
    }

    pub fn axpy(&mut self, a: f64, o: &TwoForm) {
        for (e, x) in self.0.iter_mut().zip(o.0.iter()) {
            e.axpy(a, x);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, e| m.max(e.max_abs()))
    }

    /// Full 4×4 array of components.
    pub fn dense(&self) -> [[Elem; 4]; 4] {
        let mut out = [[Elem::ZERO; 4]; 4];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = self.get(a, b);
            }
        }
        out
    }

    /// `T^{αβ} = m^α_μ m^β_ν T^{μν}` for any linear map `m` on both slots,
    /// e.g. raising with g^{-1} or a change of frame.
    pub fn transform(&self, m: &Mat4) -> Self {
        let d = self.dense();
        let mut out = TwoForm::ZERO;
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let mut acc = Elem::ZERO;
            for mu in 0..4 {
                if m[a][mu] == 0.0 {
                    continue;
                }
                for nu in 0..4 {
                    let w = m[a][mu] * m[b][nu];
                    if w != 0.0 && mu != nu {
                        acc.axpy(w, &d[mu][nu]);
                    }
                }
            }
            out.0[k] = acc;
        }
        out
    }

    /// Index-raised copy F^{αβ} = g^{αμ}g^{βν}F_{μν}.
    pub fn raise(&self, ginv: &Mat4) -> Self {
        self.transform(ginv)
    }

    /// Contraction with two vectors, F(u, v) = F_{αβ}u^α v^β.
    pub fn contract(&self, u: &[f64; 4], v: &[f64; 4]) -> Elem {
        let mut acc = Elem::ZERO;
        for &(a, b) in PAIRS.iter() {
            let w = u[a] * v[b] - u[b] * v[a];
            if w != 0.0 {
                acc.axpy(w, &self.get(a, b));
            }
        }
        acc
    }

    /// Mixed components F^α_μ = g^{αβ}F_{βμ} (not antisymmetric).
    pub fn mixed(&self, ginv: &Mat4) -> [[Elem; 4]; 4] {
        let d = self.dense();
        let mut out = [[Elem::ZERO; 4]; 4];
        for a in 0..4 {
            for m in 0..4 {
                let mut acc = Elem::ZERO;
                for b in 0..4 {
                    if ginv[a][b] != 0.0 {
                        acc.axpy(ginv[a][b], &d[b][m]);
                    }
                }
                out[a][m] = acc;
            }
        }
        out
    }
}

/// ⟨K_{αβ}, G^{αβ}⟩ summed over all index pairs, `g_up` the raised `G`.
pub fn pair_inner(alg: &Algebra, k_low: &TwoForm, g_up: &TwoForm) -> f64 {
    let mut s = 0.0;
    for i in 0..6 {
        s += alg.inner(&k_low.0[i], &g_up.0[i]);
    }
    2.0 * s
}

/// ⟨K, G⟩ with both given with lower indices.
pub fn metric_inner(alg: &Algebra, k: &TwoForm, g: &TwoForm, ginv: &Mat4) -> f64 {
    pair_inner(alg, k, &g.raise(ginv))
}

/// |K|² = h_{αμ}h_{βν}|K^{μν}||K^{αβ}| for a 2-tensor given with lower indices.
pub fn h_norm_sq(alg: &Algebra, k: &TwoForm, ginv: &Mat4, h: &RiemannianH) -> f64 {
    let up = k.raise(ginv);
    let mut n = [[0.0; 4]; 4];
    for (a, row) in n.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            if a != b {
                *v = alg.norm(&up.get(a, b));
            }
        }
    }
    h.tensor_norm_sq(&n)
}
