//! Gauge fields available at arbitrary spacetime points: analytic profiles
//! differentiated exactly with hyper-dual numbers, and a catalog of named
//! profiles.

use std::collections::BTreeMap;

use crate::geometry::dual::{HyperDual, Real};
use crate::geometry::{christoffel, Flrw, SpacetimeChart, Vec4};
use crate::liegauge::{Algebra, Elem, PotentialField, TwoForm, TwoFormField, PAIRS};
use crate::{Error, Result};

/// A gauge field with its potential, curvature and curvature gradient.
pub trait FieldSource: Sync {
    fn algebra(&self) -> &Algebra;
    fn potential(&self, x: &Vec4) -> [Elem; 4];
    fn field(&self, x: &Vec4) -> TwoForm;
    /// F and `∂_γF` for each γ.
    fn field_jet(&self, x: &Vec4) -> (TwoForm, [TwoForm; 4]);
}

/// Views a [`FieldSource`] as the pointwise field traits of `liegauge`.
pub struct Pointwise<'a>(pub &'a dyn FieldSource);

impl PotentialField for Pointwise<'_> {
    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        self.0.potential(x)
    }
}

impl TwoFormField for Pointwise<'_> {
    fn field(&self, x: &Vec4) -> TwoForm {
        self.0.field(x)
    }
}

/// F and D^{(A)}_γF_{αβ} at x from the exact jet of the source.
pub fn covariant_jet(src: &dyn FieldSource, chart: &dyn SpacetimeChart, x: &Vec4) -> Result<(TwoForm, [TwoForm; 4])> {
    let gam = christoffel(chart, x)?;
    let (f, df) = src.field_jet(x);
    let a = src.potential(x);
    let alg = src.algebra();
    let d = f.dense();
    let mut out = [TwoForm::ZERO; 4];
    for (g, o) in out.iter_mut().enumerate() {
        for (i, &(m, n)) in PAIRS.iter().enumerate() {
            let mut v = df[g].0[i] + alg.bracket(&a[g], &f.0[i]);
            for l in 0..4 {
                v.axpy(-gam[l][g][m], &d[l][n]);
                v.axpy(-gam[l][g][n], &d[m][l]);
            }
            o.0[i] = v;
        }
    }
    Ok((f, out))
}

/// A potential written once over any [`Real`] scalar; `A_μ^i` for the
/// first three algebra components.
pub trait AnalyticPotential: Sync {
    fn algebra(&self) -> &Algebra;
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4];
}

/// Wraps an [`AnalyticPotential`] as a [`FieldSource`] with exact derivatives.
pub struct Analytic<P>(pub P);

fn elem_of(v: &[f64; 3]) -> Elem {
    Elem([v[0], v[1], v[2], 0.0, 0.0, 0.0])
}

impl<P: AnalyticPotential> Analytic<P> {
    /// A_μ, ∂_γA_μ and ∂_γ∂_δA_μ.
    #[allow(clippy::type_complexity)]
    fn jet(&self, x: &Vec4) -> ([Elem; 4], [[Elem; 4]; 4], [[[Elem; 4]; 4]; 4]) {
        let mut a = [Elem::ZERO; 4];
        let mut da = [[Elem::ZERO; 4]; 4];
        let mut dda = [[[Elem::ZERO; 4]; 4]; 4];
        for k in 0..4 {
            for l in k..4 {
                let xs: [HyperDual; 4] =
                    std::array::from_fn(|i| HyperDual::new(x[i], (i == k) as u8 as f64, (i == l) as u8 as f64, 0.0));
                let c = self.0.components(&xs);
                for m in 0..4 {
                    let d = elem_of(&[c[m][0].d, c[m][1].d, c[m][2].d]);
                    dda[k][l][m] = d;
                    dda[l][k][m] = d;
                    if k == l {
                        da[k][m] = elem_of(&[c[m][0].b, c[m][1].b, c[m][2].b]);
                    }
                    if k == 0 && l == 0 {
                        a[m] = elem_of(&[c[m][0].a, c[m][1].a, c[m][2].a]);
                    }
                }
            }
        }
        (a, da, dda)
    }
}

impl<P: AnalyticPotential> FieldSource for Analytic<P> {
    fn algebra(&self) -> &Algebra {
        self.0.algebra()
    }

    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        let c = self.0.components(x);
        std::array::from_fn(|m| elem_of(&c[m]))
    }

    fn field(&self, x: &Vec4) -> TwoForm {
        let mut da = [[Elem::ZERO; 4]; 4];
        let mut a = [Elem::ZERO; 4];
        for (k, row) in da.iter_mut().enumerate() {
            let xs: [HyperDual; 4] = std::array::from_fn(|i| HyperDual::new(x[i], (i == k) as u8 as f64, 0.0, 0.0));
            let c = self.0.components(&xs);
            for m in 0..4 {
                row[m] = elem_of(&[c[m][0].b, c[m][1].b, c[m][2].b]);
                if k == 0 {
                    a[m] = elem_of(&[c[m][0].a, c[m][1].a, c[m][2].a]);
                }
            }
        }
        let alg = self.0.algebra();
        let mut f = TwoForm::ZERO;
        for (i, &(m, n)) in PAIRS.iter().enumerate() {
            f.0[i] = da[m][n] - da[n][m] + alg.bracket(&a[m], &a[n]);
        }
        f
    }

    fn field_jet(&self, x: &Vec4) -> (TwoForm, [TwoForm; 4]) {
        let (a, da, dda) = self.jet(x);
        let alg = self.0.algebra();
        let mut f = TwoForm::ZERO;
        let mut df = [TwoForm::ZERO; 4];
        for (i, &(m, n)) in PAIRS.iter().enumerate() {
            f.0[i] = da[m][n] - da[n][m] + alg.bracket(&a[m], &a[n]);
            for g in 0..4 {
                df[g].0[i] =
                    dda[g][m][n] - dda[g][n][m] + alg.bracket(&da[g][m], &a[n]) + alg.bracket(&a[m], &da[g][n]);
            }
        }
        (f, df)
    }
}

impl<P: AnalyticPotential> PotentialField for Analytic<P> {
    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        FieldSource::potential(self, x)
    }
}

impl<P: AnalyticPotential> TwoFormField for Analytic<P> {
    fn field(&self, x: &Vec4) -> TwoForm {
        FieldSource::field(self, x)
    }
}

/// Vanishing potential of a given algebra.
pub struct Vacuum(pub Algebra);

impl AnalyticPotential for Vacuum {
    fn algebra(&self) -> &Algebra {
        &self.0
    }
    fn components<S: Real>(&self, _x: &[S; 4]) -> [[S; 3]; 4] {
        [[S::cst(0.0); 3]; 4]
    }
}

/// Abelian plane wave `A_i = a ε_i sin(|k|t − k·x + φ₀)`, `A_t = 0`, on
/// Cartesian Minkowski space. A vacuum Maxwell solution when ε ⊥ k.
#[derive(Clone, Debug)]
pub struct PlaneWave {
    pub alg: Algebra,
    pub amplitude: f64,
    pub polarization: [f64; 3],
    pub wavevector: [f64; 3],
    pub phase: f64,
}

impl PlaneWave {
    pub fn new(amplitude: f64, polarization: [f64; 3], wavevector: [f64; 3], phase: f64) -> Self {
        Self { alg: Algebra::u1(), amplitude, polarization, wavevector, phase }
    }

    pub fn frequency(&self) -> f64 {
        self.wavevector.iter().map(|k| k * k).sum::<f64>().sqrt()
    }

    /// Whether the polarization is transverse, i.e. the wave solves Maxwell.
    pub fn is_transverse(&self) -> bool {
        let d: f64 = (0..3).map(|i| self.polarization[i] * self.wavevector[i]).sum();
        d.abs() < 1e-12 * (1.0 + self.frequency())
    }
}

impl AnalyticPotential for PlaneWave {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let k = &self.wavevector;
        let theta =
            x[0].scale(self.frequency()) - x[1].scale(k[0]) - x[2].scale(k[1]) - x[3].scale(k[2]) + S::cst(self.phase);
        let s = theta.sin().scale(self.amplitude);
        let z = S::cst(0.0);
        let mut out = [[z; 3]; 4];
        for i in 0..3 {
            out[i + 1][0] = s.scale(self.polarization[i]);
        }
        out
    }
}

/// Sum of abelian plane waves; a Maxwell solution when every mode is.
#[derive(Clone, Debug)]
pub struct WaveSuperposition {
    pub alg: Algebra,
    pub modes: Vec<PlaneWave>,
}

impl WaveSuperposition {
    pub fn new(modes: Vec<PlaneWave>) -> Self {
        Self { alg: Algebra::u1(), modes }
    }
}

impl AnalyticPotential for WaveSuperposition {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let z = S::cst(0.0);
        let mut out = [[z; 3]; 4];
        for m in &self.modes {
            let c = m.components(x);
            for mu in 0..4 {
                out[mu][0] += c[mu][0];
            }
        }
        out
    }
}

/// A plane wave on spatially flat FLRW, written in conformal time
/// `η(t) = ∫ dt / a(t)`. Maxwell's equations are conformally invariant, so
/// `A_i = a ε_i sin(|k|η − k·x + φ₀)` solves them on the expanding chart.
#[derive(Clone, Debug)]
pub struct ConformalPlaneWave {
    pub wave: PlaneWave,
    pub cosmology: Flrw,
}

impl ConformalPlaneWave {
    /// Conformal time of `a(t) = a₀(t/t₀)^p`, zero at t = 0 for p < 1.
    pub fn conformal_time(&self, t: f64) -> f64 {
        let c = &self.cosmology;
        c.t0.powf(c.exponent) * t.powf(1.0 - c.exponent) / (c.a0 * (1.0 - c.exponent))
    }
}

impl AnalyticPotential for ConformalPlaneWave {
    fn algebra(&self) -> &Algebra {
        &self.wave.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let c = &self.cosmology;
        let eta = x[0].powf(1.0 - c.exponent).scale(c.t0.powf(c.exponent) / (c.a0 * (1.0 - c.exponent)));
        self.wave.components(&[eta, x[1], x[2], x[3]])
    }
}

/// Static Coulomb potential `A_t = −q/r` on a Schwarzschild background,
/// either in Schwarzschild coordinates (`r = x¹`) or in isotropic Cartesian
/// coordinates (`r` the areal radius of `ρ = |x|`). A Maxwell test field on
/// both.
#[derive(Clone, Debug)]
pub struct Coulomb {
    pub alg: Algebra,
    pub charge: f64,
    /// `Some(M)` for isotropic Cartesian coordinates of mass `M`.
    pub isotropic_mass: Option<f64>,
}

impl Coulomb {
    pub fn schwarzschild(charge: f64) -> Self {
        Self { alg: Algebra::u1(), charge, isotropic_mass: None }
    }

    pub fn isotropic(charge: f64, mass: f64) -> Self {
        Self { alg: Algebra::u1(), charge, isotropic_mass: Some(mass) }
    }
}

impl AnalyticPotential for Coulomb {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let r = match self.isotropic_mass {
            None => x[1],
            Some(m) => {
                let rho = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
                let psi = S::cst(1.0) + S::cst(0.5 * m) / rho;
                rho * psi * psi
            }
        };
        let z = S::cst(0.0);
        let mut out = [[z; 3]; 4];
        out[0][0] = -(r.recip().scale(self.charge));
        out
    }
}

/// `A_μ^i = c_μ^i exp(−|x − x₀|²/w²)` with the Euclidean distance in the
/// chart coordinates. Generic (non-solution) data for identity checks.
#[derive(Clone, Debug)]
pub struct GaussianPotential {
    pub alg: Algebra,
    pub coefficients: [[f64; 3]; 4],
    pub center: Vec4,
    pub width: f64,
}

impl AnalyticPotential for GaussianPotential {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let mut r2 = S::cst(0.0);
        for i in 0..4 {
            let d = x[i] - S::cst(self.center[i]);
            r2 += d * d;
        }
        let env = (-(r2.scale(1.0 / (self.width * self.width)))).exp();
        std::array::from_fn(|m| std::array::from_fn(|i| env.scale(self.coefficients[m][i])))
    }
}

/// Constant potential; on a flat chart F_{μν} = [A_μ, A_ν].
#[derive(Clone, Debug)]
pub struct ConstantPotential {
    pub alg: Algebra,
    pub values: [[f64; 3]; 4],
}

impl AnalyticPotential for ConstantPotential {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, _x: &[S; 4]) -> [[S; 3]; 4] {
        std::array::from_fn(|m| std::array::from_fn(|i| S::cst(self.values[m][i])))
    }
}

/// Names accepted by [`profile`].
pub const PROFILES: &[&str] = &["zero", "plane_wave", "coulomb", "gaussian", "constant_commutator"];

fn param(p: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    p.get(key).copied().unwrap_or(default)
}

/// Build a named analytic profile.
///
/// * `zero`: vanishing field of `algebra`.
/// * `plane_wave` (u1): `amplitude`, `kx, ky, kz`, polarization `ex, ey, ez`, `phase`.
/// * `coulomb` (u1): `charge`; `mass` selects isotropic coordinates when given.
/// * `gaussian`: `amplitude`, `width`, centre `t0, x0, y0, z0`; spatial
///   components `A_k^i = amplitude·δ_{ki}`.
/// * `constant_commutator`: `A_x = e₁`, `A_y = e₂` scaled by `amplitude`.
pub fn profile(name: &str, algebra: &Algebra, p: &BTreeMap<String, f64>) -> Result<Box<dyn FieldSource>> {
    let alg = algebra.clone();
    match name {
        "zero" => Ok(Box::new(Analytic(Vacuum(alg)))),
        "plane_wave" => {
            let w = PlaneWave {
                alg,
                amplitude: param(p, "amplitude", 1.0),
                polarization: [param(p, "ex", 0.0), param(p, "ey", 1.0), param(p, "ez", 0.0)],
                wavevector: [param(p, "kx", 1.0), param(p, "ky", 0.0), param(p, "kz", 0.0)],
                phase: param(p, "phase", 0.0),
            };
            if !w.is_transverse() {
                return Err(Error::Config(
                    vec!["plane_wave: polarization must be orthogonal to the wavevector".into()],
                ));
            }
            Ok(Box::new(Analytic(w)))
        }
        "coulomb" => {
            let q = param(p, "charge", 1.0);
            let c = match p.get("mass") {
                Some(&m) => Coulomb { alg, charge: q, isotropic_mass: Some(m) },
                None => Coulomb { alg, charge: q, isotropic_mass: None },
            };
            Ok(Box::new(Analytic(c)))
        }
        "gaussian" => {
            let a = param(p, "amplitude", 0.5);
            let mut c = [[0.0; 3]; 4];
            for k in 1..4 {
                if k - 1 < algebra.dim().min(3) {
                    c[k][k - 1] = a;
                } else {
                    c[k][0] = a;
                }
            }
            Ok(Box::new(Analytic(GaussianPotential {
                alg,
                coefficients: c,
                center: [param(p, "t0", 0.0), param(p, "x0", 0.0), param(p, "y0", 0.0), param(p, "z0", 0.0)],
                width: param(p, "width", 1.0),
            })))
        }
        "constant_commutator" => {
            let a = param(p, "amplitude", 1.0);
            let mut v = [[0.0; 3]; 4];
            v[1][0] = a;
            if algebra.dim() > 1 {
                v[2][1] = a;
            }
            Ok(Box::new(Analytic(ConstantPotential { alg, values: v })))
        }
        _ => Err(Error::UnknownCatalogEntry { kind: "profile", name: name.into(), available: PROFILES.join(", ") }),
    }
}
