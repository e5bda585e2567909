//! Lie algebras given by structure constants in a fixed basis.

use crate::{Error, Result};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Largest algebra dimension in the catalog (so(3,1)).
pub const MAX_DIM: usize = 6;

/// Components of an algebra element in the basis of its [`Algebra`].
/// Unused trailing slots stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Elem(pub [f64; MAX_DIM]);

impl Elem {
    pub const ZERO: Elem = Elem([0.0; MAX_DIM]);

    pub fn from_slice(v: &[f64]) -> Self {
        let mut e = Elem::ZERO;
        e.0[..v.len()].copy_from_slice(v);
        e
    }

    pub fn scalar(v: f64) -> Self {
        Elem::from_slice(&[v])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn axpy(&mut self, a: f64, x: &Elem) {
        for i in 0..MAX_DIM {
            self.0[i] += a * x.0[i];
        }
    }
}

impl Add for Elem {
    type Output = Elem;
    #[inline]
    fn add(mut self, o: Elem) -> Elem {
        self += o;
        self
    }
}

impl AddAssign for Elem {
    #[inline]
    fn add_assign(&mut self, o: Elem) {
        for i in 0..MAX_DIM {
            self.0[i] += o.0[i];
        }
    }
}

impl Sub for Elem {
    type Output = Elem;
    #[inline]
    fn sub(mut self, o: Elem) -> Elem {
        self -= o;
        self
    }
}

impl SubAssign for Elem {
    #[inline]
    fn sub_assign(&mut self, o: Elem) {
        for i in 0..MAX_DIM {
            self.0[i] -= o.0[i];
        }
    }
}

impl Neg for Elem {
    type Output = Elem;
    #[inline]
    fn neg(self) -> Elem {
        self * -1.0
    }
}

impl Mul<f64> for Elem {
    type Output = Elem;
    #[inline]
    fn mul(mut self, a: f64) -> Elem {
        for v in self.0.iter_mut() {
            *v *= a;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgebraKind {
    U1,
    Su2,
    /// Lorentz algebra on frame-index pairs, used for the Cartan connection.
    So31,
}

/// Frame-index pairs labelling the so(3,1) basis.
pub const LORENTZ_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// A Lie algebra with structure constants `c[i][j][k]` = c^k_{ij} and Gram
/// matrix of the invariant product.
#[derive(Clone, Debug)]
pub struct Algebra {
    pub kind: AlgebraKind,
    dim: usize,
    c: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
    gram: [[f64; MAX_DIM]; MAX_DIM],
}

impl Algebra {
    /// The abelian algebra u(1) with ⟨X, Y⟩ = XY.
    pub fn u1() -> Self {
        let mut gram = [[0.0; MAX_DIM]; MAX_DIM];
        gram[0][0] = 1.0;
        Self { kind: AlgebraKind::U1, dim: 1, c: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM], gram }
    }

    /// su(2) in the basis e_k = −(i/2)σ_k: [e_i, e_j] = ε_{ijk} e_k, and
    /// ⟨X, Y⟩ = −2 tr(XY) makes the basis orthonormal.
    pub fn su2() -> Self {
        let mut c = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c[i][j][k] = 1.0;
            c[j][i][k] = -1.0;
        }
        let mut gram = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in gram.iter_mut().enumerate().take(3) {
            row[i] = 1.0;
        }
        Self { kind: AlgebraKind::Su2, dim: 3, c, gram }
    }

    /// so(3,1) as antisymmetric lowered matrices a_{αβ} with the matrix
    /// commutator `[a, b] = aηb − bηa` and the indefinite trace product
    /// ⟨a, b⟩ = ½ a_{αβ} b^{αβ}.
    pub fn so31() -> Self {
        let eta = [-1.0, 1.0, 1.0, 1.0];
        let basis = |k: usize| {
            let (a, b) = LORENTZ_PAIRS[k];
            let mut m = [[0.0; 4]; 4];
            m[a][b] = 1.0;
            m[b][a] = -1.0;
            m
        };
        let mut c = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for i in 0..6 {
            for j in 0..6 {
                let (x, y) = (basis(i), basis(j));
                let mut comm = [[0.0; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        for l in 0..4 {
                            comm[a][b] += x[a][l] * eta[l] * y[l][b] - y[a][l] * eta[l] * x[l][b];
                        }
                    }
                }
                for (k, &(a, b)) in LORENTZ_PAIRS.iter().enumerate() {
                    c[i][j][k] = comm[a][b];
                }
            }
        }
        let mut gram = [[0.0; MAX_DIM]; MAX_DIM];
        for (k, &(a, b)) in LORENTZ_PAIRS.iter().enumerate() {
            gram[k][k] = eta[a] * eta[b];
        }
        Self { kind: AlgebraKind::So31, dim: 6, c, gram }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "u1" | "u(1)" => Ok(Self::u1()),
            "su2" | "su(2)" => Ok(Self::su2()),
            "so31" | "so(3,1)" => Ok(Self::so31()),
            _ => Err(Error::UnknownCatalogEntry {
                kind: "algebra",
                name: name.into(),
                available: "u1, su2, so31".into(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AlgebraKind::U1 => "u1",
            AlgebraKind::Su2 => "su2",
            AlgebraKind::So31 => "so31",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_abelian(&self) -> bool {
        self.kind == AlgebraKind::U1
    }

    /// Whether the invariant product is positive definite.
    pub fn is_compact(&self) -> bool {
        self.kind != AlgebraKind::So31
    }

    /// c^k_{ij}.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[i][j][k]
    }

    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[i][j]
    }

    pub fn basis(&self, i: usize) -> Elem {
        let mut e = Elem::ZERO;
        e.0[i] = 1.0;
        e
    }

    /// Build an element, checking the component count.
    pub fn element(&self, comps: &[f64]) -> Result<Elem> {
        if comps.len() != self.dim {
            return Err(Error::BasisMismatch { expected: self.dim, got: comps.len() });
        }
        Ok(Elem::from_slice(comps))
    }

    #[inline]
    pub fn bracket(&self, x: &Elem, y: &Elem) -> Elem {
        match self.kind {
            AlgebraKind::U1 => Elem::ZERO,
            AlgebraKind::Su2 => {
                let (a, b) = (&x.0, &y.0);
                Elem([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0], 0.0, 0.0, 0.0])
            }
            AlgebraKind::So31 => {
                let mut out = Elem::ZERO;
                for i in 0..self.dim {
                    if x.0[i] == 0.0 {
                        continue;
                    }
                    for j in 0..self.dim {
                        let xy = x.0[i] * y.0[j];
                        if xy == 0.0 {
                            continue;
                        }
                        for k in 0..self.dim {
                            out.0[k] += self.c[i][j][k] * xy;
                        }
                    }
                }
                out
            }
        }
    }

    #[inline]
    pub fn inner(&self, x: &Elem, y: &Elem) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            s += self.gram[i][i] * x.0[i] * y.0[i];
        }
        s
    }

    /// Positive-definite magnitude used in norms; for the indefinite
    /// Lorentz product this is the Euclidean component norm.
    #[inline]
    pub fn norm(&self, x: &Elem) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            s += x.0[i] * x.0[i];
        }
        s.sqrt()
    }

    /// max over basis triples of |Σ_cyc [[e_i, e_j], e_k]|.
    pub fn jacobi_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let (a, b, c) = (self.basis(i), self.basis(j), self.basis(k));
                    let s = self.bracket(&self.bracket(&a, &b), &c)
                        + self.bracket(&self.bracket(&b, &c), &a)
                        + self.bracket(&self.bracket(&c, &a), &b);
                    worst = worst.max(s.max_abs());
                }
            }
        }
        worst
    }

    /// max over basis triples of |⟨[Z,X],Y⟩ + ⟨X,[Z,Y]⟩|.
    pub fn ad_invariance_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let (z, x, y) = (self.basis(i), self.basis(j), self.basis(k));
                    let v = self.inner(&self.bracket(&z, &x), &y) + self.inner(&x, &self.bracket(&z, &y));
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    /// max |c^k_{ij} + c^k_{ji}|.
    pub fn antisymmetry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    worst = worst.max((self.c[i][j][k] + self.c[j][i][k]).abs());
                }
            }
        }
        worst
    }
}
