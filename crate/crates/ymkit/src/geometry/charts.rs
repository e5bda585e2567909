//! Metric catalog. Analytic charts are written once over [`Real`] and
//! differentiated exactly with hyper-dual numbers; user charts fall back
//! to fourth-order central differences.

use super::dual::{HyperDual, Real};
use super::tensor::{Mat4, Vec4, ZERO44};

/// Metric with first and second coordinate derivatives at a point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: Mat4,
    /// `dg[k][a][b]` = ∂_k g_{ab}.
    pub dg: [Mat4; 4],
    /// `ddg[k][l][a][b]` = ∂_k ∂_l g_{ab}.
    pub ddg: [[Mat4; 4]; 4],
}

/// A metric on a single coordinate chart with coordinate 0 as time.
pub trait SpacetimeChart: Send + Sync {
    fn name(&self) -> String;
    fn metric(&self, x: &Vec4) -> Mat4;
    /// Metric and first derivatives.
    fn first_jet(&self, x: &Vec4) -> (Mat4, [Mat4; 4]);
    fn second_jet(&self, x: &Vec4) -> MetricJet;
    /// Whether `x` lies in the region where the chart is regular.
    fn contains(&self, _x: &Vec4) -> bool {
        true
    }
    /// True when derivatives are exact rather than finite-difference.
    fn analytic(&self) -> bool;
}

/// A metric whose components can be evaluated on any [`Real`] scalar.
pub trait AnalyticMetric: Send + Sync {
    fn label(&self) -> String;
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 4]; 4];
    fn in_domain(&self, _x: &Vec4) -> bool {
        true
    }
}

fn seeded(x: &Vec4, k: usize, l: usize) -> [HyperDual; 4] {
    let mut out = [HyperDual::default(); 4];
    for i in 0..4 {
        out[i].a = x[i];
    }
    out[k].b = 1.0;
    out[l].c = 1.0;
    out
}

fn part(m: &[[HyperDual; 4]; 4], f: impl Fn(&HyperDual) -> f64) -> Mat4 {
    let mut out = ZERO44;
    for a in 0..4 {
        for b in 0..4 {
            out[a][b] = f(&m[a][b]);
        }
    }
    out
}

impl<M: AnalyticMetric> SpacetimeChart for M {
    fn name(&self) -> String {
        self.label()
    }

    fn metric(&self, x: &Vec4) -> Mat4 {
        self.components(x)
    }

    fn first_jet(&self, x: &Vec4) -> (Mat4, [Mat4; 4]) {
        let mut dg = [ZERO44; 4];
        let mut g = ZERO44;
        for k in 0..4 {
            let mut xs = [HyperDual::default(); 4];
            for i in 0..4 {
                xs[i].a = x[i];
            }
            xs[k].b = 1.0;
            let m = self.components(&xs);
            dg[k] = part(&m, |v| v.b);
            if k == 0 {
                g = part(&m, |v| v.a);
            }
        }
        (g, dg)
    }

    fn second_jet(&self, x: &Vec4) -> MetricJet {
        let mut jet = MetricJet { g: ZERO44, dg: [ZERO44; 4], ddg: [[ZERO44; 4]; 4] };
        for k in 0..4 {
            for l in k..4 {
                let m = self.components(&seeded(x, k, l));
                let d = part(&m, |v| v.d);
                jet.ddg[k][l] = d;
                jet.ddg[l][k] = d;
                if k == l {
                    jet.dg[k] = part(&m, |v| v.b);
                }
                if k == 0 && l == 0 {
                    jet.g = part(&m, |v| v.a);
                }
            }
        }
        jet
    }

    fn contains(&self, x: &Vec4) -> bool {
        self.in_domain(x)
    }

    fn analytic(&self) -> bool {
        true
    }
}

/// Flat space in Cartesian coordinates.
#[derive(Clone, Copy, Debug, Default)]
pub struct Minkowski;

impl AnalyticMetric for Minkowski {
    fn label(&self) -> String {
        "minkowski".into()
    }
    fn components<S: Real>(&self, _x: &[S; 4]) -> [[S; 4]; 4] {
        let z = S::cst(0.0);
        let o = S::cst(1.0);
        [[-o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]]
    }
}

/// Schwarzschild in Schwarzschild coordinates `(t, r, θ, φ)`.
#[derive(Clone, Copy, Debug)]
pub struct Schwarzschild {
    pub mass: f64,
}

impl AnalyticMetric for Schwarzschild {
    fn label(&self) -> String {
        format!("schwarzschild(M={})", self.mass)
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 4]; 4] {
        let z = S::cst(0.0);
        let r = x[1];
        let f = S::cst(1.0) - S::cst(2.0 * self.mass) / r;
        let st = x[2].sin();
        [[-f, z, z, z], [z, f.recip(), z, z], [z, z, r * r, z], [z, z, z, r * r * st * st]]
    }
    fn in_domain(&self, x: &Vec4) -> bool {
        x[1] > 2.0 * self.mass && x[2] > 0.0 && x[2] < std::f64::consts::PI
    }
}

/// Schwarzschild in isotropic Cartesian coordinates `(t, x, y, z)`:
/// `g = −α² dt² + ψ⁴ δ_ij`, `ψ = 1 + M/2ρ`, `α = (1 − M/2ρ)/ψ`.
#[derive(Clone, Copy, Debug)]
pub struct SchwarzschildIsotropic {
    pub mass: f64,
}

impl SchwarzschildIsotropic {
    /// Areal radius for isotropic radius ρ.
    pub fn areal_radius(&self, rho: f64) -> f64 {
        rho * (1.0 + self.mass / (2.0 * rho)).powi(2)
    }

    /// Isotropic radius for areal radius r (outer branch).
    pub fn isotropic_radius(&self, r: f64) -> f64 {
        let m = self.mass;
        0.5 * (r - m + (r * r - 2.0 * m * r).sqrt())
    }
}

impl AnalyticMetric for SchwarzschildIsotropic {
    fn label(&self) -> String {
        format!("schwarzschild_isotropic(M={})", self.mass)
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 4]; 4] {
        let z = S::cst(0.0);
        let rho = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
        let q = S::cst(0.5 * self.mass) / rho;
        let psi = S::cst(1.0) + q;
        let alpha = (S::cst(1.0) - q) / psi;
        let p4 = psi.powi(4);
        [[-(alpha * alpha), z, z, z], [z, p4, z, z], [z, z, p4, z], [z, z, z, p4]]
    }
    fn in_domain(&self, x: &Vec4) -> bool {
        (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt() > 0.5 * self.mass * (1.0 + 1e-9)
    }
}

/// Spatially flat FLRW with power-law scale factor `a(t) = a₀ (t/t₀)^p`.
#[derive(Clone, Copy, Debug)]
pub struct Flrw {
    pub a0: f64,
    pub t0: f64,
    pub exponent: f64,
}

impl Flrw {
    pub fn scale_factor(&self, t: f64) -> f64 {
        self.a0 * (t / self.t0).powf(self.exponent)
    }
}

impl AnalyticMetric for Flrw {
    fn label(&self) -> String {
        format!("flrw(p={})", self.exponent)
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 4]; 4] {
        let z = S::cst(0.0);
        let a = (x[0] / S::cst(self.t0)).powf(self.exponent).scale(self.a0);
        let a2 = a * a;
        [[S::cst(-1.0), z, z, z], [z, a2, z, z], [z, z, a2, z], [z, z, z, a2]]
    }
    fn in_domain(&self, x: &Vec4) -> bool {
        x[0] > 0.0
    }
}

/// A user chart given only by metric values; derivatives use fourth-order
/// central differences with step `1e-4 · scale` (truncation O(h⁴)).
pub struct FdChart<F> {
    pub label: String,
    pub metric_fn: F,
    pub scale: f64,
}

impl<F: Fn(&Vec4) -> Mat4 + Send + Sync> FdChart<F> {
    pub fn new(label: impl Into<String>, scale: f64, metric_fn: F) -> Self {
        Self { label: label.into(), metric_fn, scale }
    }

    fn step(&self) -> f64 {
        1e-4 * self.scale
    }

    fn shifted(&self, x: &Vec4, k: usize, dk: f64, l: usize, dl: f64) -> Mat4 {
        let mut y = *x;
        y[k] += dk;
        y[l] += dl;
        (self.metric_fn)(&y)
    }

    fn d1(&self, x: &Vec4, k: usize) -> Mat4 {
        let h = self.step();
        let f = |s: f64| self.shifted(x, k, s * h, k, 0.0);
        let (p1, m1, p2, m2) = (f(1.0), f(-1.0), f(2.0), f(-2.0));
        let mut out = ZERO44;
        for a in 0..4 {
            for b in 0..4 {
                out[a][b] = (8.0 * (p1[a][b] - m1[a][b]) - (p2[a][b] - m2[a][b])) / (12.0 * h);
            }
        }
        out
    }
}

impl<F: Fn(&Vec4) -> Mat4 + Send + Sync> SpacetimeChart for FdChart<F> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn metric(&self, x: &Vec4) -> Mat4 {
        (self.metric_fn)(x)
    }

    fn first_jet(&self, x: &Vec4) -> (Mat4, [Mat4; 4]) {
        let g = self.metric(x);
        let mut dg = [ZERO44; 4];
        for (k, d) in dg.iter_mut().enumerate() {
            *d = self.d1(x, k);
        }
        (g, dg)
    }

    fn second_jet(&self, x: &Vec4) -> MetricJet {
        let (g, dg) = self.first_jet(x);
        let h = self.step();
        let mut ddg = [[ZERO44; 4]; 4];
        let w = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        for k in 0..4 {
            // pure second derivative, five-point stencil
            let f = |s: f64| self.shifted(x, k, s * h, k, 0.0);
            let (p1, m1, p2, m2) = (f(1.0), f(-1.0), f(2.0), f(-2.0));
            for a in 0..4 {
                for b in 0..4 {
                    ddg[k][k][a][b] =
                        (-p2[a][b] + 16.0 * p1[a][b] - 30.0 * g[a][b] + 16.0 * m1[a][b] - m2[a][b]) / (12.0 * h * h);
                }
            }
            for l in (k + 1)..4 {
                let mut acc = ZERO44;
                for &(si, wi) in &w {
                    for &(sj, wj) in &w {
                        let m = self.shifted(x, k, si * h, l, sj * h);
                        for a in 0..4 {
                            for b in 0..4 {
                                acc[a][b] += wi * wj * m[a][b];
                            }
                        }
                    }
                }
                for a in 0..4 {
                    for b in 0..4 {
                        acc[a][b] /= 144.0 * h * h;
                    }
                }
                ddg[k][l] = acc;
                ddg[l][k] = acc;
            }
        }
        MetricJet { g, dg, ddg }
    }

    fn analytic(&self) -> bool {
        false
    }
}
