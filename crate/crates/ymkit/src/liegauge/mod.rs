//! Lie-algebra-valued fields on a spacetime chart: curvature of a potential,
//! gauge covariant derivatives, Yang-Mills and Bianchi residuals, and the
//! source of the covariant wave equation satisfied by F.
//!
//! Fields are evaluated pointwise; derivatives use 4th-order central
//! differences with a caller-supplied step.

pub mod algebra;
pub mod cartan;
pub mod form;
pub mod lattice;

pub use algebra::{Algebra, AlgebraKind, Elem, LORENTZ_PAIRS, MAX_DIM};
pub use cartan::{cartan_connection, CartanPotential, DiagonalFrameField, FrameField};
pub use form::{h_norm_sq, metric_inner, pair_inner, TwoForm, PAIRS};
pub use lattice::{BoundaryPolicy, LatticePotential};

use crate::geometry::{christoffel, inverse_metric, CurvatureTensors, SpacetimeChart, Vec4};
use crate::Result;

/// An algebra-valued 1-form A_α given pointwise.
pub trait PotentialField: Sync {
    fn potential(&self, x: &Vec4) -> [Elem; 4];
}

/// An algebra-valued 2-form F_{αβ} given pointwise.
pub trait TwoFormField: Sync {
    fn field(&self, x: &Vec4) -> TwoForm;
}

impl<F: Fn(&Vec4) -> [Elem; 4] + Sync> PotentialField for F {
    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        self(x)
    }
}

/// The vanishing potential.
pub struct ZeroPotential;

impl PotentialField for ZeroPotential {
    fn potential(&self, _x: &Vec4) -> [Elem; 4] {
        [Elem::ZERO; 4]
    }
}

/// Anything that supports `y += a·x`, used by the difference stencils.
pub trait Linear: Clone {
    fn zero_like(&self) -> Self;
    fn axpy_from(&mut self, a: f64, x: &Self);
}

impl Linear for Elem {
    fn zero_like(&self) -> Self {
        Elem::ZERO
    }
    fn axpy_from(&mut self, a: f64, x: &Self) {
        self.axpy(a, x);
    }
}

impl Linear for TwoForm {
    fn zero_like(&self) -> Self {
        TwoForm::ZERO
    }
    fn axpy_from(&mut self, a: f64, x: &Self) {
        self.axpy(a, x);
    }
}

impl Linear for [Elem; 4] {
    fn zero_like(&self) -> Self {
        [Elem::ZERO; 4]
    }
    fn axpy_from(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x.iter()) {
            s.axpy(a, v);
        }
    }
}

impl Linear for GTensor {
    fn zero_like(&self) -> Self {
        GTensor::zeros(self.rank)
    }
    fn axpy_from(&mut self, a: f64, x: &Self) {
        for (s, v) in self.comps.iter_mut().zip(x.comps.iter()) {
            s.axpy(a, v);
        }
    }
}

/// ∂_k f at x by the 4th-order central stencil.
pub fn partial<T: Linear>(f: impl Fn(&Vec4) -> T, x: &Vec4, k: usize, h: f64) -> T {
    const W: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let mut acc: Option<T> = None;
    for &(o, w) in W.iter() {
        let mut y = *x;
        y[k] += o * h;
        let v = f(&y);
        let a = acc.get_or_insert_with(|| v.zero_like());
        a.axpy_from(w / (12.0 * h), &v);
    }
    acc.expect("stencil is non-empty")
}

/// F_{αβ} = ∂_αA_β − ∂_βA_α + [A_α, A_β]. The Christoffel terms of the
/// covariant derivatives cancel, so no chart is needed.
pub fn curvature_from_potential(alg: &Algebra, a: &dyn PotentialField, x: &Vec4, h: f64) -> TwoForm {
    let a0 = a.potential(x);
    let da: [[Elem; 4]; 4] = std::array::from_fn(|k| partial(|y| a.potential(y), x, k, h));
    let mut f = TwoForm::ZERO;
    for (i, &(m, n)) in PAIRS.iter().enumerate() {
        f.0[i] = da[m][n] - da[n][m] + alg.bracket(&a0[m], &a0[n]);
    }
    f
}

/// A 2-form field obtained from a potential by [`curvature_from_potential`].
pub struct CurvatureOf<'a> {
    pub alg: &'a Algebra,
    pub potential: &'a dyn PotentialField,
    pub h: f64,
}

impl TwoFormField for CurvatureOf<'_> {
    fn field(&self, x: &Vec4) -> TwoForm {
        curvature_from_potential(self.alg, self.potential, x, self.h)
    }
}

/// Index symmetry imposed on a [`GTensor`] at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    None,
    /// Antisymmetric in the last two indices.
    AntisymmetricLastPair,
}

/// Algebra-valued covariant tensor Ψ_{a₁…a_r}, components in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct GTensor {
    pub rank: usize,
    pub comps: Vec<Elem>,
}

impl GTensor {
    pub fn zeros(rank: usize) -> Self {
        Self { rank, comps: vec![Elem::ZERO; 4usize.pow(rank as u32)] }
    }

    pub fn scalar(v: Elem) -> Self {
        Self { rank: 0, comps: vec![v] }
    }

    /// Build from components and enforce `sym`.
    pub fn new(rank: usize, comps: Vec<Elem>, sym: Symmetry) -> Self {
        assert_eq!(comps.len(), 4usize.pow(rank as u32), "component count must be 4^rank");
        let mut t = Self { rank, comps };
        if sym == Symmetry::AntisymmetricLastPair {
            assert!(rank >= 2, "antisymmetry needs two indices");
            let outer = 4usize.pow(rank as u32 - 2);
            for o in 0..outer {
                for a in 0..4 {
                    for b in a..4 {
                        let (i, j) = (o * 16 + a * 4 + b, o * 16 + b * 4 + a);
                        let v = (t.comps[i] - t.comps[j]) * 0.5;
                        t.comps[i] = v;
                        t.comps[j] = -v;
                    }
                }
            }
        }
        t
    }

    pub fn from_two_form(f: &TwoForm) -> Self {
        let d = f.dense();
        Self { rank: 2, comps: d.iter().flat_map(|r| r.iter().copied()).collect() }
    }

    pub fn from_one_form(a: &[Elem; 4]) -> Self {
        Self { rank: 1, comps: a.to_vec() }
    }

    pub fn get(&self, idx: &[usize]) -> Elem {
        self.comps[Self::flat(idx)]
    }

    fn flat(idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * 4 + i)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, e| m.max(e.max_abs()))
    }

    /// Last two indices as a 2-form, for a rank-2 tensor.
    pub fn to_two_form(&self) -> TwoForm {
        assert_eq!(self.rank, 2);
        let mut f = TwoForm::ZERO;
        for (i, &(a, b)) in PAIRS.iter().enumerate() {
            f.0[i] = self.comps[a * 4 + b];
        }
        f
    }
}

/// An algebra-valued tensor field.
pub trait GTensorField: Sync {
    fn rank(&self) -> usize;
    fn eval(&self, x: &Vec4) -> GTensor;
}

impl<T: TwoFormField> GTensorField for T {
    fn rank(&self) -> usize {
        2
    }
    fn eval(&self, x: &Vec4) -> GTensor {
        GTensor::from_two_form(&self.field(x))
    }
}

/// (D_γΨ)_{a₁…a_r} = ∂_γΨ − Σ_i Γ^λ_{γa_i}Ψ_{…λ…} + [A_γ, Ψ], returned with
/// the derivative index first.
pub fn gauge_covariant_derivative(
    alg: &Algebra,
    chart: &dyn SpacetimeChart,
    a: &dyn PotentialField,
    psi: &dyn GTensorField,
    x: &Vec4,
    h: f64,
) -> Result<GTensor> {
    let rank = psi.rank();
    let gam = christoffel(chart, x)?;
    let p0 = psi.eval(x);
    let av = a.potential(x);
    let n = p0.comps.len();
    let mut out = GTensor::zeros(rank + 1);
    for g in 0..4 {
        let dp = partial(|y| psi.eval(y), x, g, h);
        for flat in 0..n {
            let mut v = dp.comps[flat] + alg.bracket(&av[g], &p0.comps[flat]);
            // subtract the connection term for every slot
            let mut stride = 1;
            for _ in 0..rank {
                let ai = (flat / stride) % 4;
                let base = flat - ai * stride;
                for (l, gl) in gam.iter().enumerate() {
                    let c = gl[g][ai];
                    if c != 0.0 {
                        v.axpy(-c, &p0.comps[base + l * stride]);
                    }
                }
                stride *= 4;
            }
            out.comps[g * n + flat] = v;
        }
    }
    Ok(out)
}

/// The field x ↦ D^{(A)}Ψ(x) as a tensor field of one higher rank.
pub struct CovariantDerivativeField<'a> {
    pub alg: &'a Algebra,
    pub chart: &'a dyn SpacetimeChart,
    pub potential: &'a dyn PotentialField,
    pub inner: &'a dyn GTensorField,
    pub h: f64,
}

impl GTensorField for CovariantDerivativeField<'_> {
    fn rank(&self) -> usize {
        self.inner.rank() + 1
    }
    fn eval(&self, x: &Vec4) -> GTensor {
        gauge_covariant_derivative(self.alg, self.chart, self.potential, self.inner, x, self.h).unwrap_or_else(|_| {
            let mut t = GTensor::zeros(self.rank());
            t.comps.iter_mut().for_each(|e| *e = Elem([f64::NAN; MAX_DIM]));
            t
        })
    }
}

/// D_γF_{αβ} for each γ.
pub fn covariant_derivative_two_form(
    alg: &Algebra,
    chart: &dyn SpacetimeChart,
    a: &dyn PotentialField,
    f: &dyn TwoFormField,
    x: &Vec4,
    h: f64,
) -> Result<[TwoForm; 4]> {
    let gam = christoffel(chart, x)?;
    let f0 = f.field(x);
    let d0 = f0.dense();
    let av = a.potential(x);
    let mut out = [TwoForm::ZERO; 4];
    for (g, o) in out.iter_mut().enumerate() {
        let df = partial(|y| f.field(y), x, g, h);
        for (i, &(m, n)) in PAIRS.iter().enumerate() {
            let mut v = df.0[i] + alg.bracket(&av[g], &f0.0[i]);
            for l in 0..4 {
                v.axpy(-gam[l][g][m], &d0[l][n]);
                v.axpy(-gam[l][g][n], &d0[m][l]);
            }
            o.0[i] = v;
        }
    }
    Ok(out)
}

/// D_α F^{αβ}; vanishes exactly for Yang-Mills solutions.
pub fn ym_residual(
    alg: &Algebra,
    chart: &dyn SpacetimeChart,
    a: &dyn PotentialField,
    f: &dyn TwoFormField,
    x: &Vec4,
    h: f64,
) -> Result<[Elem; 4]> {
    let df = covariant_derivative_two_form(alg, chart, a, f, x, h)?;
    let gi = inverse_metric(&chart.metric(x), x)?;
    let dd: [[[Elem; 4]; 4]; 4] = std::array::from_fn(|g| df[g].dense());
    let mut out = [Elem::ZERO; 4];
    for (b, o) in out.iter_mut().enumerate() {
        for al in 0..4 {
            for m in 0..4 {
                if gi[al][m] == 0.0 {
                    continue;
                }
                for n in 0..4 {
                    let w = gi[al][m] * gi[b][n];
                    if w != 0.0 {
                        o.axpy(w, &dd[al][m][n]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// D_αF_{μν} + D_μF_{να} + D_νF_{αμ}, indexed `[α][μ][ν]`.
pub fn bianchi_residual(
    alg: &Algebra,
    chart: &dyn SpacetimeChart,
    a: &dyn PotentialField,
    f: &dyn TwoFormField,
    x: &Vec4,
    h: f64,
) -> Result<[[[Elem; 4]; 4]; 4]> {
    let df = covariant_derivative_two_form(alg, chart, a, f, x, h)?;
    let dd: [[[Elem; 4]; 4]; 4] = std::array::from_fn(|g| df[g].dense());
    Ok(std::array::from_fn(|al| {
        std::array::from_fn(|m| std::array::from_fn(|n| dd[al][m][n] + dd[m][n][al] + dd[n][al][m]))
    }))
}

/// Largest component of a Bianchi residual.
pub fn bianchi_max(r: &[[[Elem; 4]; 4]; 4]) -> f64 {
    r.iter().flatten().flatten().fold(0.0f64, |m, e| m.max(e.max_abs()))
}

/// S_{μν} = −2R_{γμνα}F^{αγ} − R_{μγ}F_ν^γ − R_{νγ}F^γ_μ − 2[F^α_μ, F_{να}],
/// the right-hand side of □^{(A)}F_{μν} = S_{μν}.
pub fn wave_source(alg: &Algebra, curv: &CurvatureTensors, f: &TwoForm) -> TwoForm {
    let gi = &curv.ginv;
    let r = &curv.riemann;
    let ric = &curv.ricci;
    let d = f.dense();
    let up = f.raise(gi).dense();
    let mixed = f.mixed(gi); // F^α_μ
                             // F_ν^γ = F_{νβ} g^{βγ}
    let mut low_up = [[Elem::ZERO; 4]; 4];
    for nu in 0..4 {
        for g in 0..4 {
            for b in 0..4 {
                if gi[b][g] != 0.0 {
                    low_up[nu][g].axpy(gi[b][g], &d[nu][b]);
                }
            }
        }
    }
    let mut s = TwoForm::ZERO;
    for (i, &(mu, nu)) in PAIRS.iter().enumerate() {
        let mut v = Elem::ZERO;
        for g in 0..4 {
            for al in 0..4 {
                let c = r[g][mu][nu][al];
                if c != 0.0 {
                    v.axpy(-2.0 * c, &up[al][g]);
                }
            }
            v.axpy(-ric[mu][g], &low_up[nu][g]);
            v.axpy(-ric[nu][g], &mixed[g][mu]);
        }
        for al in 0..4 {
            v.axpy(-2.0, &alg.bracket(&mixed[al][mu], &d[nu][al]));
        }
        s.0[i] = v;
    }
    s
}
