//! Stress-energy of a gauge field: T_{μν}, energies on slices inside the
//! past cone of a point, fluxes through the cone, the deformation bulk term
//! and the wave-energy tensor T₁ of the first derivatives.
//!
//! The slice region Σ_t ∩ J⁻(p) is the star-shaped disc bounded by the cut
//! of the cone with Σ_t, parametrised as `x = p + σ y(ω)` with `y(ω)` the
//! ring offset and σ ∈ [0, 1]. Energies, fluxes and bulk integrals all use
//! rings of the same bundle, so the three share one boundary.

use std::path::Path;

use gauss_quad::GaussLegendre;
use serde::Serialize;

use crate::exec::{pairwise_sum, Exec};
use crate::fields::{covariant_jet, FieldSource};
use crate::geometry::{
    deformation_tensor, dot, gram_schmidt, inverse_metric, lower, CoordinateField, Mat4, SpacetimeChart, UnitTimeField,
    Vec4, VectorField, ZERO44,
};
use crate::liegauge::{pair_inner, Algebra, TwoForm, PAIRS};
use crate::nullcone::{integrate_uniform, null_frame, unit_normal, NullConeBundle, NullFrame, Vertex};
use crate::{Error, Result};

/// The vector field the energy current is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeVector {
    /// The coordinate field ∂/∂t.
    #[default]
    Coordinate,
    /// The unit normal t̂ of the constant-t slices.
    Unit,
}

impl TimeVector {
    fn with<R>(self, chart: &dyn SpacetimeChart, f: impl FnOnce(&dyn VectorField) -> R) -> R {
        match self {
            TimeVector::Coordinate => f(&CoordinateField(0)),
            TimeVector::Unit => f(&UnitTimeField(chart)),
        }
    }

    pub fn value(self, chart: &dyn SpacetimeChart, x: &Vec4) -> Vec4 {
        self.with(chart, |v| v.value(x))
    }

    /// π^{μν} of the field at x.
    pub fn deformation(self, chart: &dyn SpacetimeChart, x: &Vec4) -> Result<Mat4> {
        self.with(chart, |v| deformation_tensor(chart, x, v))
    }
}

/// `T_{μν} = ⟨F_{μβ}, F_ν^β⟩ − ¼ g_{μν}⟨F, F⟩`.
pub fn stress_from_metric(alg: &Algebra, f: &TwoForm, g: &Mat4, ginv: &Mat4) -> Mat4 {
    let d = f.dense();
    let mixed = f.mixed(ginv); // F^β_ν = g^{βγ}F_{γν}
    let ff = pair_inner(alg, f, &f.raise(ginv));
    let mut t = ZERO44;
    for mu in 0..4 {
        for nu in mu..4 {
            let mut s = 0.0;
            for b in 0..4 {
                // F_{μβ} F_ν^β = F_{μβ} g^{βγ} F_{νγ} = −F_{μβ} F^β_ν
                s -= alg.inner(&d[mu][b], &mixed[b][nu]);
            }
            t[mu][nu] = s - 0.25 * g[mu][nu] * ff;
            t[nu][mu] = t[mu][nu];
        }
    }
    t
}

pub fn stress_tensor(alg: &Algebra, chart: &dyn SpacetimeChart, x: &Vec4, f: &TwoForm) -> Result<Mat4> {
    let g = chart.metric(x);
    let ginv = inverse_metric(&g, x)?;
    Ok(stress_from_metric(alg, f, &g, &ginv))
}

/// `g^{μν}T_{μν}`.
pub fn stress_trace(t: &Mat4, ginv: &Mat4) -> f64 {
    let mut s = 0.0;
    for m in 0..4 {
        for n in 0..4 {
            s += ginv[m][n] * t[m][n];
        }
    }
    s
}

/// `T(u, v) = T_{μν}u^μv^ν`.
pub fn contract(t: &Mat4, u: &Vec4, v: &Vec4) -> f64 {
    let mut s = 0.0;
    for m in 0..4 {
        for n in 0..4 {
            s += t[m][n] * u[m] * v[n];
        }
    }
    s
}

/// `∇^νT_{μν}` from fourth-order central differences of T with step h.
pub fn stress_divergence(src: &dyn FieldSource, chart: &dyn SpacetimeChart, x: &Vec4, h: f64) -> Result<Vec4> {
    let alg = src.algebra();
    let at = |y: &Vec4| stress_tensor(alg, chart, y, &src.field(y));
    let t0 = at(x)?;
    let gam = crate::geometry::christoffel(chart, x)?;
    let ginv = inverse_metric(&chart.metric(x), x)?;
    // dt[λ][μ][ν] = ∂_λ T_{μν}
    let mut dt = [ZERO44; 4];
    for (l, d) in dt.iter_mut().enumerate() {
        let shifted = |k: f64| {
            let mut y = *x;
            y[l] += k * h;
            at(&y)
        };
        let (p1, m1, p2, m2) = (shifted(1.0)?, shifted(-1.0)?, shifted(2.0)?, shifted(-2.0)?);
        for m in 0..4 {
            for n in 0..4 {
                d[m][n] = (8.0 * (p1[m][n] - m1[m][n]) - (p2[m][n] - m2[m][n])) / (12.0 * h);
            }
        }
    }
    let mut out = [0.0; 4];
    for (m, o) in out.iter_mut().enumerate() {
        for l in 0..4 {
            for n in 0..4 {
                if ginv[l][n] == 0.0 {
                    continue;
                }
                let mut cov = dt[l][m][n];
                for s in 0..4 {
                    cov -= gam[s][l][m] * t0[s][n] + gam[s][l][n] * t0[m][s];
                }
                *o += ginv[l][n] * cov;
            }
        }
    }
    Ok(out)
}

/// Energy density `T(t̂, V)` on the slice through x.
pub fn energy_density(alg: &Algebra, chart: &dyn SpacetimeChart, x: &Vec4, f: &TwoForm, v: TimeVector) -> Result<f64> {
    let g = chart.metric(x);
    let ginv = inverse_metric(&g, x)?;
    spacelike(&ginv, x)?;
    let t = stress_from_metric(alg, f, &g, &ginv);
    Ok(contract(&t, &unit_normal(&ginv), &v.value(chart, x)))
}

fn spacelike(ginv: &Mat4, x: &Vec4) -> Result<()> {
    if ginv[0][0] < 0.0 {
        Ok(())
    } else {
        Err(Error::Frame(format!("constant-t slice is not spacelike at {x:?} (g^tt = {})", ginv[0][0])))
    }
}

/// `−T(L, t̂)` in the null frame: `⅛c|F_{LL̄}|² + ½c⁻¹Σ_a|F_{Le_a}|² + ½c|F_{e₁e₂}|²`
/// with `c = g(L, t̂) > 0`.
pub fn null_flux_density(alg: &Algebra, f: &TwoForm, frame: &NullFrame, c: f64) -> f64 {
    let sq = |u: &Vec4, v: &Vec4| {
        let e = f.contract(u, v);
        alg.inner(&e, &e)
    };
    let l = &frame.l;
    0.125 * c * sq(l, &frame.lbar)
        + 0.5 / c * (sq(l, &frame.e[0]) + sq(l, &frame.e[1]))
        + 0.5 * c * sq(&frame.e[0], &frame.e[1])
}

/// Largest frame component of π^{μ̂ν̂}(V) in an orthonormal frame {t̂, n, e_a, e_b}.
pub fn deformation_sup(chart: &dyn SpacetimeChart, x: &Vec4, v: TimeVector) -> Result<f64> {
    let g = chart.metric(x);
    let ginv = inverse_metric(&g, x)?;
    let pi = v.deformation(chart, x)?;
    let frame = gram_schmidt(&g, &unit_normal(&ginv))?.vectors();
    let low: Vec<Vec4> = frame.iter().map(|e| lower(&g, e)).collect();
    let mut worst = 0.0f64;
    for a in &low {
        for b in &low {
            worst = worst.max(contract(&pi, a, b).abs());
        }
    }
    Ok(worst)
}

/// Quadrature of Σ_t ∩ J⁻(p); `weights` include the volume density √γ.
#[derive(Clone, Debug)]
pub struct SliceDisc {
    pub t: f64,
    pub points: Vec<Vec4>,
    pub weights: Vec<f64>,
}

impl SliceDisc {
    /// The disc bounded by ring `k` of the bundle, with `n_radial`
    /// Gauss-Legendre nodes along each ray from the centre.
    pub fn from_ring(bundle: &NullConeBundle<'_>, k: usize, n_radial: usize) -> Result<Self> {
        let t = *bundle.params.slices.get(k).ok_or_else(|| Error::Config(vec![format!("bundle has no slice {k}")]))?;
        let ring = bundle.ring(k)?;
        let p = bundle.vertex.p;
        let grid = &bundle.grid;
        let n = ring.len();
        let y: [Vec<f64>; 3] = std::array::from_fn(|c| ring.iter().map(|r| r.node.x[c + 1] - p[c + 1]).collect());
        let grads: Vec<(Vec<f64>, Vec<f64>)> = y.iter().map(|c| grid.gradient(c)).collect();
        let radial = GaussLegendre::new(
            std::num::NonZeroUsize::new(n_radial)
                .ok_or_else(|| Error::Config(vec!["n_radial must be positive".into()]))?,
        );
        let mut points = Vec::with_capacity(n * n_radial);
        let mut weights = Vec::with_capacity(n * n_radial);
        for i in 0..n {
            let yi = [y[0][i], y[1][i], y[2][i]];
            let dt = [grads[0].0[i], grads[1].0[i], grads[2].0[i]];
            let dp = [grads[0].1[i], grads[1].1[i], grads[2].1[i]];
            let cross = [dt[1] * dp[2] - dt[2] * dp[1], dt[2] * dp[0] - dt[0] * dp[2], dt[0] * dp[1] - dt[1] * dp[0]];
            let jac = (yi[0] * cross[0] + yi[1] * cross[1] + yi[2] * cross[2]).abs();
            for (node, w) in radial.iter() {
                let sigma = 0.5 * (node + 1.0);
                let x = [t, p[1] + sigma * yi[0], p[2] + sigma * yi[1], p[3] + sigma * yi[2]];
                let g = bundle.chart.metric(&x);
                points.push(x);
                weights.push(grid.weight(i) * 0.5 * w * sigma * sigma * jac * spatial_volume(&g));
            }
        }
        Ok(Self { t, points, weights })
    }

    /// `Σ w f(x)`, evaluated in parallel and summed in a fixed order.
    pub fn integrate(&self, f: impl Fn(&Vec4) -> Result<f64> + Sync, exec: Exec) -> Result<f64> {
        let vals = exec.map(self.points.len(), |i| f(&self.points[i]).map(|v| v * self.weights[i]));
        let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("slice integrand at {:?}", self.points[i])));
        }
        Ok(pairwise_sum(&vals))
    }

    pub fn volume(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

/// √det g_ij.
fn spatial_volume(g: &Mat4) -> f64 {
    let s = [[g[1][1], g[1][2], g[1][3]], [g[2][1], g[2][2], g[2][3]], [g[3][1], g[3][2], g[3][3]]];
    let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
        + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
    det.max(0.0).sqrt()
}

/// `E_t = ∫ T(t̂, V) dV_Σ` over the disc.
pub fn energy(
    src: &dyn FieldSource,
    chart: &dyn SpacetimeChart,
    disc: &SliceDisc,
    v: TimeVector,
    exec: Exec,
) -> Result<f64> {
    disc.integrate(|x| energy_density(src.algebra(), chart, x, &src.field(x), v), exec)
}

/// `|D^{(A)}F|²` with every index contracted by h, in an orthonormal frame.
pub fn gradient_norm_sq(alg: &Algebra, g: &Mat4, that: &Vec4, df: &[TwoForm; 4]) -> Result<f64> {
    let frame = gram_schmidt(g, that)?.vectors();
    let mut s = 0.0;
    for e in &frame {
        s += h_norm_sq_frame(alg, &along(df, e), &frame);
    }
    Ok(s)
}

/// `Σ_{α̂β̂} |K(ê_α, ê_β)|²` over ordered pairs of an orthonormal frame.
pub fn h_norm_sq_frame(alg: &Algebra, k: &TwoForm, frame: &[Vec4; 4]) -> f64 {
    let mut s = 0.0;
    for &(a, b) in PAIRS.iter() {
        let e = k.contract(&frame[a], &frame[b]);
        s += 2.0 * alg.inner(&e, &e);
    }
    s
}

/// `X^γ D_γF`.
fn along(df: &[TwoForm; 4], x: &Vec4) -> TwoForm {
    let mut out = TwoForm::ZERO;
    for (g, d) in df.iter().enumerate() {
        if x[g] != 0.0 {
            out.axpy(x[g], d);
        }
    }
    out
}

/// `‖D^{(A)}F‖²` over the disc.
pub fn gradient_energy(src: &dyn FieldSource, chart: &dyn SpacetimeChart, disc: &SliceDisc, exec: Exec) -> Result<f64> {
    disc.integrate(
        |x| {
            let g = chart.metric(x);
            let ginv = inverse_metric(&g, x)?;
            let (_, df) = covariant_jet(src, chart, x)?;
            gradient_norm_sq(src.algebra(), &g, &unit_normal(&ginv), &df)
        },
        exec,
    )
}

/// Contractions of the wave-energy tensor
/// `T₁_{μν} = ⟨D_μF, D_νF⟩_h − ½g_{μν}⟨D^λF, D_λF⟩_h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct T1Contractions {
    /// `T₁(t̂, t̂) = ½[|D_t̂F|² + |D_n̂F|² + Σ_a|D_aF|²]`.
    pub tt: f64,
    /// `T₁(t̂, L)` from the tensor.
    pub tl: f64,
    /// `−½[c Σ_a|D_{e_a}F|² + c⁻¹|D_LF|²]`, the same quantity from the null frame.
    pub tl_null: f64,
}

/// T₁ contractions at x along the cone generator `l` (with `g(l, t̂) > 0`).
pub fn t1_tensor(alg: &Algebra, g: &Mat4, ginv: &Mat4, df: &[TwoForm; 4], l: &Vec4) -> Result<T1Contractions> {
    let that = unit_normal(ginv);
    let frame = gram_schmidt(g, &that)?.vectors();
    // G_{γδ} = ⟨D_γF, D_δF⟩_h
    let mut gram = ZERO44;
    for a in 0..4 {
        for b in a..4 {
            let mut s = 0.0;
            for &(p, q) in PAIRS.iter() {
                s += 2.0 * alg.inner(&df[a].contract(&frame[p], &frame[q]), &df[b].contract(&frame[p], &frame[q]));
            }
            gram[a][b] = s;
            gram[b][a] = s;
        }
    }
    let trace = stress_trace(&gram, ginv);
    let t1 = |u: &Vec4, v: &Vec4| contract(&gram, u, v) - 0.5 * dot(g, u, v) * trace;
    let c = dot(g, l, &that);
    if c <= 0.0 {
        return Err(Error::Frame(format!("g(L, t̂) = {c} is not positive")));
    }
    // e_a ⊥ {t̂, L}: orthonormalise the spatial frame legs against the
    // spatial part of L.
    let n = {
        let mut v = *l;
        let k = dot(g, l, &that);
        for m in 0..4 {
            v[m] += k * that[m];
        }
        let nn = dot(g, &v, &v).sqrt();
        v.map(|c| c / nn)
    };
    let mut legs: Vec<Vec4> = Vec::new();
    for e in &frame[1..] {
        let mut v = *e;
        let k = dot(g, &v, &n);
        for m in 0..4 {
            v[m] -= k * n[m];
        }
        for w in &legs {
            let k = dot(g, &v, w);
            for m in 0..4 {
                v[m] -= k * w[m];
            }
        }
        let nn = dot(g, &v, &v);
        if nn > 1e-10 && legs.len() < 2 {
            legs.push(v.map(|c| c / nn.sqrt()));
        }
    }
    let angular: f64 = legs.iter().map(|e| h_norm_sq_frame(alg, &along(df, e), &frame)).sum();
    let radial = h_norm_sq_frame(alg, &along(df, l), &frame);
    Ok(T1Contractions { tt: t1(&that, &that), tl: t1(&that, l), tl_null: -0.5 * (c * angular + radial / c) })
}

/// Flux density `−T(L, V)` at a cone node, from the null decomposition.
fn flux_density(
    alg: &Algebra,
    chart: &dyn SpacetimeChart,
    f: &TwoForm,
    frame: &NullFrame,
    x: &Vec4,
    v: TimeVector,
) -> Result<f64> {
    let g = chart.metric(x);
    let ginv = inverse_metric(&g, x)?;
    let that = unit_normal(&ginv);
    let c = dot(&g, &frame.l, &that);
    let lapse = -dot(&g, &v.value(chart, x), &that);
    Ok(lapse * null_flux_density(alg, f, frame, c))
}

/// `∫ −T(L, V) dA ds` over the cone between the affine parameters
/// `s_upper(ω)` (towards the vertex) and `s_lower(ω)` on every ray.
pub fn cone_flux(
    src: &dyn FieldSource,
    bundle: &NullConeBundle<'_>,
    s_upper: &[f64],
    s_lower: &[f64],
    v: TimeVector,
    exec: Exec,
) -> Result<f64> {
    let h = bundle.shells[1] - bundle.shells[0];
    let per_ray = exec.map(bundle.n_rays(), |i| -> Result<f64> {
        let ray = &bundle.rays[i];
        let last = ((s_lower[i] / h).ceil() as usize + 3).min(ray.nodes.len());
        let mut vals = Vec::with_capacity(last);
        for k in 0..last {
            let node = &ray.nodes[k];
            let frame = null_frame(bundle.chart, node)?;
            let d = flux_density(src.algebra(), bundle.chart, &src.field(&node.x), &frame, &node.x, v)?;
            vals.push(d * bundle.area_element(i, k)?);
        }
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("flux integrand on ray {i} at s = {}", bundle.shells[k])));
        }
        integrate_uniform(&vals, h, s_upper[i], s_lower[i]).map_err(|e| match e {
            Error::Resolution(_) => Error::MissingInitialData { ray: i, s: (ray.nodes.len() - 1) as f64 * h },
            e => e,
        })
    });
    let vals = per_ray.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(bundle.grid.integrate(&vals))
}

/// `∫ T^{μν}π_{μν}(V) dV` over the disc, per unit time (the lapse is included).
pub fn bulk_density(
    src: &dyn FieldSource,
    chart: &dyn SpacetimeChart,
    disc: &SliceDisc,
    v: TimeVector,
    exec: Exec,
) -> Result<f64> {
    disc.integrate(
        |x| {
            let g = chart.metric(x);
            let ginv = inverse_metric(&g, x)?;
            let t = stress_from_metric(src.algebra(), &src.field(x), &g, &ginv);
            let pi = v.deformation(chart, x)?;
            let mut s = 0.0;
            for m in 0..4 {
                for n in 0..4 {
                    s += t[m][n] * pi[m][n];
                }
            }
            Ok(s * (-1.0 / ginv[0][0]).sqrt())
        },
        exec,
    )
}

/// Times and resolutions of an energy balance inside the past cone of a
/// point: the region between the initial slice and each later slice.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancePlan {
    pub t_initial: f64,
    /// Increasing later times; a time equal to the vertex time closes the cone.
    pub times: Vec<f64>,
    /// Gauss-Legendre nodes per time interval for the bulk integral.
    pub n_time: usize,
    /// Gauss-Legendre nodes along each disc radius.
    pub n_radial: usize,
}

/// One row of an energy balance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub energy: f64,
    pub energy_initial: f64,
    /// Flux through the cone between the initial slice and t.
    pub flux: f64,
    /// `∫ T^{μν}π_{μν} dV` between the initial slice and t.
    pub bulk: f64,
    /// `E_t − E_{t₀} + flux + bulk`, zero by the divergence theorem.
    pub residual: f64,
    /// Largest frame component of π(V) on the slice disc.
    pub deformation: f64,
}

impl EnergyReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / self.energy_initial.abs().max(f64::MIN_POSITIVE)
    }
}

impl BalancePlan {
    fn closes(&self, t: f64, t_vertex: f64) -> bool {
        (t - t_vertex).abs() <= 1e-12 * (1.0 + t_vertex.abs())
    }

    fn nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let gl = GaussLegendre::new(std::num::NonZeroUsize::new(self.n_time.max(1)).expect("positive"));
        gl.iter().map(|(x, w)| (0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w)).collect()
    }

    pub fn validate(&self, t_vertex: f64) -> Result<()> {
        let mut errs = Vec::new();
        if self.t_initial >= t_vertex {
            errs.push(format!("t_initial = {} is not before the vertex time {t_vertex}", self.t_initial));
        }
        let mut prev = self.t_initial;
        for &t in &self.times {
            if t <= prev || t > t_vertex + 1e-12 * (1.0 + t_vertex.abs()) {
                errs.push(format!("times must increase from t_initial up to the vertex time, got {t} after {prev}"));
            }
            prev = t;
        }
        if self.n_time == 0 || self.n_radial == 0 {
            errs.push("n_time and n_radial must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Slices the bundle must be cut with, in the order `energy_balance`
    /// expects: the initial slice, the later slices, then the bulk nodes.
    pub fn slices(&self, t_vertex: f64) -> Vec<f64> {
        let mut out = vec![self.t_initial];
        out.extend(self.times.iter().copied().filter(|&t| !self.closes(t, t_vertex)));
        let mut prev = self.t_initial;
        for &t in &self.times {
            out.extend(self.nodes(prev, t).into_iter().map(|(x, _)| x));
            prev = t;
        }
        out
    }
}

/// Energies, fluxes and bulk integrals for every time of the plan. The
/// bundle must have been cut with `plan.slices(vertex time)`.
pub fn energy_balance(
    src: &dyn FieldSource,
    bundle: &NullConeBundle<'_>,
    plan: &BalancePlan,
    v: TimeVector,
    exec: Exec,
) -> Result<Vec<EnergyReport>> {
    let tp = bundle.vertex.p[0];
    plan.validate(tp)?;
    let expected = plan.slices(tp);
    if bundle.params.slices != expected {
        return Err(Error::Config(vec![format!(
            "bundle slices {:?} do not match the balance plan {:?}",
            bundle.params.slices, expected
        )]));
    }
    let chart = bundle.chart;
    let ring_s = |k: usize| -> Result<Vec<f64>> { Ok(bundle.ring(k)?.iter().map(|r| r.s).collect()) };
    let disc = |k: usize| SliceDisc::from_ring(bundle, k, plan.n_radial);
    let initial = disc(0)?;
    let e0 = energy(src, chart, &initial, v, exec)?;
    let s0 = ring_s(0)?;
    let mut out = Vec::with_capacity(plan.times.len());
    let mut bulk = 0.0;
    let mut prev = plan.t_initial;
    let mut late_index = 1;
    let mut node_index = 1 + plan.times.iter().filter(|&&t| !plan.closes(t, tp)).count();
    for &t in &plan.times {
        for (_, w) in plan.nodes(prev, t) {
            bulk += w * bulk_density(src, chart, &disc(node_index)?, v, exec)?;
            node_index += 1;
        }
        prev = t;
        let (e, s_up, deformation) = if plan.closes(t, tp) {
            (0.0, vec![0.0; bundle.n_rays()], deformation_sup(chart, &bundle.vertex.p, v)?)
        } else {
            let d = disc(late_index)?;
            let c = sup_over(&d, |x| deformation_sup(chart, x, v), exec)?;
            let r = (energy(src, chart, &d, v, exec)?, ring_s(late_index)?, c);
            late_index += 1;
            r
        };
        let flux = cone_flux(src, bundle, &s_up, &s0, v, exec)?;
        out.push(EnergyReport {
            t,
            energy: e,
            energy_initial: e0,
            flux,
            bulk,
            residual: e - e0 + flux + bulk,
            deformation,
        });
    }
    Ok(out)
}

fn sup_over(disc: &SliceDisc, f: impl Fn(&Vec4) -> Result<f64> + Sync, exec: Exec) -> Result<f64> {
    let vals = exec.map(disc.points.len(), |i| f(&disc.points[i]));
    let mut worst = 0.0f64;
    for v in vals {
        worst = worst.max(v?);
    }
    Ok(worst)
}

/// Cone parameters for a balance plan: rays long enough to cross the
/// initial slice, cut at every slice of the plan.
pub fn balance_cone(
    chart: &dyn SpacetimeChart,
    vertex: &Vertex,
    plan: &BalancePlan,
    n_theta: usize,
    ds: f64,
    exec: Exec,
) -> Result<crate::nullcone::ConeParams> {
    let s_max = NullConeBundle::s_max_for_slice(chart, vertex, n_theta, plan.t_initial, exec)?;
    Ok(crate::nullcone::ConeParams {
        n_theta,
        n_phi: 2 * n_theta,
        s_max,
        ds,
        slices: plan.slices(vertex.p[0]),
        ..Default::default()
    })
}

/// Writes rows as CSV with columns t, E_t, flux, bulk, residual, C.
pub fn write_energy_csv(path: impl AsRef<Path>, rows: &[EnergyReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    })?;
    w.write_record(["t", "E_t", "flux", "bulk", "residual", "C"])?;
    for r in rows {
        w.write_record([r.t, r.energy, r.flux, r.bulk, r.residual, r.deformation].map(|v| format!("{v:.17e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
