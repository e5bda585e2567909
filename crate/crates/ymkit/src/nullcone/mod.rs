//! Past null cones as fans of affinely parametrised null geodesics.
//!
//! Each ray carries its position `x(s)`, tangent `L = dx/ds`, two Jacobi
//! fields `J_A = ∂x/∂ω_A` (variations along the round-orthonormal θ̂, φ̂
//! directions at the vertex) with their covariant derivatives `∇_{J_A}L`,
//! and a transported pair `e_a` completing the t̂-adapted null frame.
//! Second fundamental forms, area elements and connection scalars are all
//! read off these fields at the recorded nodes.

mod io;
mod optics;

pub use io::{read_binary, write_binary, write_summary_csv};
pub use optics::{
    cone_normal, frame_pairing_residual, node_optics, null_frame, sphere_basis, sphere_frame, ConnectionScalars,
    Neighbours, NullFrame, OpticalScalars, SphereBasis,
};

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::geometry::tensor::contract_gamma;
use crate::geometry::{
    axpy, christoffel, connection_jet, dot, gram_schmidt, inverse_metric, scale, SpacetimeChart, Vec4, ZERO4,
};
use crate::sphere::{SphereGrid, Vec3};
use crate::{Error, Result};

/// Cone vertex with an orthonormal frame `{T_p, E_1, E_2, E_3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub p: Vec4,
    pub frame: [Vec4; 4],
}

impl Vertex {
    /// Vertex with observer `t_p`; the spatial triad comes from
    /// Gram-Schmidt on the coordinate axes.
    pub fn new(chart: &dyn SpacetimeChart, p: Vec4, t_p: Vec4) -> Result<Self> {
        if !chart.contains(&p) {
            return Err(Error::OutsideChart { chart: chart.name(), point: p });
        }
        let g = chart.metric(&p);
        let n = dot(&g, &t_p, &t_p);
        if (n + 1.0).abs() > 1e-10 || t_p[0] <= 0.0 {
            return Err(Error::NotUnitTimelike(n));
        }
        let f = gram_schmidt(&g, &t_p)?;
        Ok(Self { p, frame: [t_p, f.n, f.ea, f.eb] })
    }

    /// Vertex whose observer is the unit normal of the constant-t slice.
    pub fn at_rest(chart: &dyn SpacetimeChart, p: Vec4) -> Result<Self> {
        let g = chart.metric(&p);
        let ginv = inverse_metric(&g, &p)?;
        Self::new(chart, p, unit_normal(&ginv))
    }

    /// Spatial vector `ω^i E_i`.
    pub fn spatial(&self, w: &Vec3) -> Vec4 {
        let mut v = ZERO4;
        for (i, wi) in w.iter().enumerate() {
            v = axpy(*wi, &self.frame[i + 1], &v);
        }
        v
    }

    /// Initial tangent `l_ω = −(T_p + ω^i E_i)`, so that `g(l_ω, T_p) = 1`.
    pub fn initial_tangent(&self, w: &Vec3) -> Vec4 {
        scale(-1.0, &axpy(1.0, &self.frame[0], &self.spatial(w)))
    }

    /// The vertex displaced by proper time `u` along the geodesic tangent to
    /// `T_p`, with its frame parallel transported.
    pub fn shifted(&self, chart: &dyn SpacetimeChart, u: f64) -> Result<Self> {
        let n = ((u.abs() / 1e-3).ceil() as usize).max(16);
        let h = u / n as f64;
        // state: x, v = T, then the three spatial legs
        let mut y = [self.p, self.frame[0], self.frame[1], self.frame[2], self.frame[3]];
        let f = |y: &[Vec4; 5]| -> Result<[Vec4; 5]> {
            let gam = christoffel(chart, &y[0])?;
            let mut d = [y[1], ZERO4, ZERO4, ZERO4, ZERO4];
            for k in 1..5 {
                d[k] = scale(-1.0, &contract_gamma(&gam, &y[1], &y[k]));
            }
            Ok(d)
        };
        for _ in 0..n {
            y = rk4(&y, h, &f)?;
        }
        Ok(Self { p: y[0], frame: [y[1], y[2], y[3], y[4]] })
    }
}

/// Future unit normal to the constant-t slice, `t̂^μ = −g^{μ0}/√(−g^{00})`.
pub fn unit_normal(ginv: &[[f64; 4]; 4]) -> Vec4 {
    let n = (-ginv[0][0]).sqrt();
    [-ginv[0][0] / n, -ginv[1][0] / n, -ginv[2][0] / n, -ginv[3][0] / n]
}

/// Resolution and integration settings for [`NullConeBundle::emanate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeParams {
    pub n_theta: usize,
    pub n_phi: usize,
    pub s_max: f64,
    pub ds: f64,
    /// Record a node every this many integration steps.
    pub record_every: usize,
    /// Optical scalars below `s_min = s_min_factor · ds` take their flat
    /// leading behaviour.
    pub s_min_factor: f64,
    /// Project L back onto the null cone every this many steps.
    pub renormalize_every: usize,
    /// Constant-t slices on which the cone is cut into rings.
    pub slices: Vec<f64>,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            n_theta: 16,
            n_phi: 32,
            s_max: 1.0,
            ds: 1e-3,
            record_every: 1,
            s_min_factor: 10.0,
            renormalize_every: 100,
            slices: Vec::new(),
        }
    }
}

impl ConeParams {
    /// Parameters for a product grid with `n_dirs = 2 n_θ²` directions.
    pub fn with_directions(n_dirs: usize, s_max: f64, ds: f64) -> Result<Self> {
        let nt = ((n_dirs as f64 / 2.0).sqrt()).round() as usize;
        if 2 * nt * nt != n_dirs || nt < 2 {
            return Err(Error::Resolution(format!("{n_dirs} directions is not of the form 2n² with n ≥ 2")));
        }
        Ok(Self { n_theta: nt, n_phi: 2 * nt, s_max, ds, ..Self::default() })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min_factor * self.ds
    }

    /// Number of integration steps, rounded up to an even number of
    /// recorded intervals.
    pub fn n_steps(&self) -> usize {
        let block = 2 * self.record_every.max(1);
        let raw = (self.s_max / self.ds - 1e-9).ceil().max(1.0) as usize;
        raw.div_ceil(block) * block
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.ds > 0.0 && self.ds.is_finite()) {
            errs.push(format!("ds must be positive, got {}", self.ds));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            errs.push(format!("s_max must be positive, got {}", self.s_max));
        }
        if self.record_every == 0 {
            errs.push("record_every must be at least 1".into());
        }
        if self.renormalize_every == 0 {
            errs.push("renormalize_every must be at least 1".into());
        }
        if !(self.s_min_factor >= 0.0) {
            errs.push(format!("s_min_factor must be non-negative, got {}", self.s_min_factor));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Ray data at one recorded affine parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayNode {
    pub x: Vec4,
    pub l: Vec4,
    /// Jacobi fields `J_A`.
    pub jac: [Vec4; 2],
    /// `∇_{J_A} L`.
    pub dl: [Vec4; 2],
    /// Transported pair of the t̂-adapted null frame.
    pub e: [Vec4; 2],
}

/// Why a ray stopped before `s_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    ExitedChart { s: f64 },
    Caustic { s: f64 },
}

impl Termination {
    pub fn s(&self) -> f64 {
        match *self {
            Termination::ExitedChart { s } | Termination::Caustic { s } => s,
        }
    }
}

/// Intersection of one ray with a constant-t slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingNode {
    pub s: f64,
    pub node: RayNode,
}

#[derive(Clone, Debug)]
pub struct Ray {
    /// Nodes at `shells[k]` for `k < nodes.len()`.
    pub nodes: Vec<RayNode>,
    pub termination: Option<Termination>,
    /// Largest null-cone projection applied to L.
    pub renormalization: f64,
    /// Largest |g(e_a, L)| found before re-orthogonalising `e_a`.
    pub reprojection: f64,
    /// One entry per requested slice; `None` if the ray never reached it.
    pub rings: Vec<Option<RingNode>>,
}

/// The past null cone of a vertex, sampled on a sphere grid of directions.
pub struct NullConeBundle<'c> {
    pub chart: &'c dyn SpacetimeChart,
    pub vertex: Vertex,
    pub grid: SphereGrid,
    pub params: ConeParams,
    pub shells: Vec<f64>,
    pub rays: Vec<Ray>,
}

impl std::fmt::Debug for NullConeBundle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NullConeBundle")
            .field("chart", &self.chart.name())
            .field("vertex", &self.vertex)
            .field("grid", &self.grid)
            .field("shells", &self.shells.len())
            .finish()
    }
}

/// x, L, J_0, dJ_0/ds, J_1, dJ_1/ds, e_0, e_1.
type State = [Vec4; 8];

fn rk4<const N: usize>(y: &[Vec4; N], h: f64, f: &impl Fn(&[Vec4; N]) -> Result<[Vec4; N]>) -> Result<[Vec4; N]> {
    let shift = |y: &[Vec4; N], k: &[Vec4; N], c: f64| {
        let mut o = *y;
        for i in 0..N {
            o[i] = axpy(c, &k[i], &y[i]);
        }
        o
    };
    let k1 = f(y)?;
    let k2 = f(&shift(y, &k1, 0.5 * h))?;
    let k3 = f(&shift(y, &k2, 0.5 * h))?;
    let k4 = f(&shift(y, &k3, h))?;
    let mut o = *y;
    for i in 0..N {
        for m in 0..4 {
            o[i][m] += h / 6.0 * (k1[i][m] + 2.0 * k2[i][m] + 2.0 * k3[i][m] + k4[i][m]);
        }
    }
    Ok(o)
}

/// Geodesic, geodesic deviation and parallel transport right-hand side.
fn ray_rhs(chart: &dyn SpacetimeChart, y: &State) -> Result<State> {
    let cj = connection_jet(chart, &y[0])?;
    let gam = &cj.gamma;
    let l = y[1];
    let mut d = [ZERO4; 8];
    d[0] = l;
    d[1] = scale(-1.0, &contract_gamma(gam, &l, &l));
    for a in 0..2 {
        let (jx, jl) = (y[2 + 2 * a], y[3 + 2 * a]);
        d[2 + 2 * a] = jl;
        let mut acc = scale(-2.0, &contract_gamma(gam, &l, &jl));
        for (lam, dg) in cj.dgamma.iter().enumerate() {
            if jx[lam] != 0.0 {
                acc = axpy(-jx[lam], &contract_gamma(dg, &l, &l), &acc);
            }
        }
        d[3 + 2 * a] = acc;
        d[6 + a] = scale(-1.0, &contract_gamma(gam, &l, &y[6 + a]));
    }
    Ok(d)
}

/// Projects `v` off the span of the null pair and normalises; `prev` are
/// already-processed legs to orthogonalise against.
fn project_leg(g: &[[f64; 4]; 4], v: &Vec4, l: &Vec4, lbar: &Vec4, prev: &[Vec4]) -> Vec4 {
    // X = −½g(X,L̄)L − ½g(X,L)L̄ + Σ g(X,e_a)e_a
    let mut w = axpy(0.5 * dot(g, v, lbar), l, v);
    w = axpy(0.5 * dot(g, v, l), lbar, &w);
    for e in prev {
        w = axpy(-dot(g, &w, e), e, &w);
    }
    scale(1.0 / dot(g, &w, &w).sqrt(), &w)
}

/// `L̄ = −g(L,t̂)^{−1}(2t̂ + g(L,t̂)^{−1}L)`.
pub fn lbar_from_normal(g: &[[f64; 4]; 4], l: &Vec4, that: &Vec4) -> Result<Vec4> {
    let glt = dot(g, l, that);
    if glt.abs() < 1e-12 {
        return Err(Error::Frame(format!("g(L, t̂) = {glt:e} is degenerate")));
    }
    Ok(scale(-1.0 / glt, &axpy(1.0 / glt, l, &scale(2.0, that))))
}

impl<'c> NullConeBundle<'c> {
    /// Trace the past null cone of `vertex`.
    pub fn emanate(chart: &'c dyn SpacetimeChart, vertex: Vertex, params: &ConeParams, exec: Exec) -> Result<Self> {
        params.validate()?;
        let grid = SphereGrid::new(params.n_theta, params.n_phi)?;
        let n_steps = params.n_steps();
        let every = params.record_every;
        let shells: Vec<f64> = (0..=n_steps / every).map(|k| (k * every) as f64 * params.ds).collect();
        let outcomes = exec.map(grid.len(), |i| trace_ray(chart, &vertex, &grid, i, params, n_steps));
        let mut rays = Vec::with_capacity(grid.len());
        for o in outcomes {
            rays.push(o?);
        }
        Ok(Self { chart, vertex, grid, params: params.clone(), shells, rays })
    }

    /// Probe the cone coarsely and return the largest affine parameter at
    /// which a ray meets the slice `t = t0`, with a safety margin.
    pub fn s_max_for_slice(
        chart: &dyn SpacetimeChart,
        vertex: &Vertex,
        n_theta: usize,
        t0: f64,
        exec: Exec,
    ) -> Result<f64> {
        let dt = vertex.p[0] - t0;
        if dt <= 0.0 {
            return Err(Error::Config(vec![format!("slice t = {t0} is not in the past of the vertex")]));
        }
        let probe = ConeParams {
            n_theta,
            n_phi: 2 * n_theta,
            s_max: 50.0 * dt,
            ds: dt / 200.0,
            slices: vec![t0],
            ..ConeParams::default()
        };
        let grid = SphereGrid::new(n_theta, 2 * n_theta)?;
        let steps = probe.n_steps();
        let worst = exec.map(grid.len(), |i| -> Result<f64> {
            let r = trace_ray_until(chart, vertex, &grid, i, &probe, steps, true)?;
            match (&r.rings[0], r.termination) {
                (Some(ring), _) => Ok(ring.s),
                (None, Some(t)) => Err(Error::MissingInitialData { ray: i, s: t.s() }),
                (None, None) => Err(Error::MissingInitialData { ray: i, s: probe.s_max }),
            }
        });
        let mut s = 0.0f64;
        for w in worst {
            s = s.max(w?);
        }
        Ok(s * 1.01 + dt / 50.0)
    }

    pub fn n_rays(&self) -> usize {
        self.rays.len()
    }

    pub fn n_shells(&self) -> usize {
        self.shells.len()
    }

    /// Number of shells on which every ray is alive.
    pub fn live_shells(&self) -> usize {
        self.rays.iter().map(|r| r.nodes.len()).min().unwrap_or(0)
    }

    pub fn node(&self, ray: usize, shell: usize) -> &RayNode {
        &self.rays[ray].nodes[shell]
    }

    pub fn s_min(&self) -> f64 {
        self.params.s_min()
    }

    /// Largest L renormalisation over all rays.
    pub fn max_renormalization(&self) -> f64 {
        self.rays.iter().map(|r| r.renormalization).fold(0.0, f64::max)
    }

    /// Largest frame re-orthogonalisation over all rays.
    pub fn max_reprojection(&self) -> f64 {
        self.rays.iter().map(|r| r.reprojection).fold(0.0, f64::max)
    }

    /// First termination among the rays, if any.
    pub fn first_termination(&self) -> Option<(usize, Termination)> {
        self.rays
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.termination.map(|t| (i, t)))
            .min_by(|a, b| a.1.s().total_cmp(&b.1.s()))
    }

    /// Ring nodes of slice `k`, failing if a ray missed the slice.
    pub fn ring(&self, k: usize) -> Result<Vec<RingNode>> {
        self.rays
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.rings.get(k).copied().flatten().ok_or_else(|| Error::MissingInitialData {
                    ray: i,
                    s: r.termination.map(|t| t.s()).unwrap_or(*self.shells.last().unwrap_or(&0.0)),
                })
            })
            .collect()
    }

    /// `Σ_ω w_ω ∫ f J ds` over the live shells, with `f(ray, shell)`.
    /// Simpson's rule in s; the vertex node carries zero area.
    pub fn cone_integral(&self, f: impl Fn(usize, usize) -> f64 + Sync, exec: Exec) -> Result<f64> {
        let n = self.live_shells();
        let per_shell = exec.map(n, |k| -> Result<f64> {
            if k == 0 {
                return Ok(0.0);
            }
            self.shell_integral(k, |i| f(i, k))
        });
        let vals = per_shell.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(simpson(&vals, self.shells[1] - self.shells[0]))
    }

    /// `Σ_ω w_ω f(ω) J(s_k, ω)`.
    pub fn shell_integral(&self, k: usize, f: impl Fn(usize) -> f64) -> Result<f64> {
        let mut vals = Vec::with_capacity(self.n_rays());
        for i in 0..self.n_rays() {
            let v = f(i);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("cone integrand at ray {i}, s = {}", self.shells[k])));
            }
            vals.push(v * self.area_element(i, k)?);
        }
        Ok(self.grid.integrate(&vals))
    }

    /// Area of the affine sphere `s = s_k`.
    pub fn shell_area(&self, k: usize) -> Result<f64> {
        self.shell_integral(k, |_| 1.0)
    }

    /// Area of the cut of the cone by slice `k`.
    pub fn ring_area(&self, k: usize) -> Result<f64> {
        let ring = self.ring(k)?;
        let mut vals = Vec::with_capacity(ring.len());
        for r in &ring {
            vals.push(optics::area_density(self.chart, &r.node)?);
        }
        Ok(self.grid.integrate(&vals))
    }

    /// Area density `J(s, ω)` relative to the unit-sphere measure.
    pub fn area_element(&self, ray: usize, shell: usize) -> Result<f64> {
        let s = self.shells[shell];
        if s < self.s_min() {
            return Ok(s * s);
        }
        optics::area_density(self.chart, self.node(ray, shell))
    }

    /// Largest relative residual of `dJ/ds = trχ J` over interior shells
    /// beyond `s_min`, with dJ/ds from fourth-order central differences.
    pub fn area_transport_residual(&self) -> Result<f64> {
        let n = self.live_shells();
        let h = self.shells[1] - self.shells[0];
        let mut worst = 0.0f64;
        for i in 0..self.n_rays() {
            let mut area = Vec::with_capacity(n);
            for k in 0..n {
                area.push(optics::area_density(self.chart, self.node(i, k))?);
            }
            for k in 2..n.saturating_sub(2) {
                if self.shells[k - 2] < self.s_min() {
                    continue;
                }
                let d = (8.0 * (area[k + 1] - area[k - 1]) - (area[k + 2] - area[k - 2])) / (12.0 * h);
                let sc = self.optical_scalars(i, k)?;
                let target = sc.tr_chi * area[k];
                worst = worst.max((d - target).abs() / target.abs());
            }
        }
        Ok(worst)
    }
}

/// Composite Simpson on uniform samples; a trailing odd interval uses the
/// three-point end correction.
pub fn simpson(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (v[0] + v[1]),
        _ => {
            let m = if (n - 1).is_multiple_of(2) { n } else { n - 1 };
            let mut s = v[0] + v[m - 1];
            for (i, x) in v[1..m - 1].iter().enumerate() {
                s += if i % 2 == 0 { 4.0 * x } else { 2.0 * x };
            }
            let mut total = s * h / 3.0;
            if m < n {
                // ∫ over the last interval from the quadratic through the last three samples
                total += h / 12.0 * (5.0 * v[n - 1] + 8.0 * v[n - 2] - v[n - 3]);
            }
            total
        }
    }
}

/// Lagrange weights of the four nodes `xs` at `x`.
pub fn lagrange4(xs: &[f64], x: f64) -> [f64; 4] {
    std::array::from_fn(|a| {
        let mut w = 1.0;
        for b in 0..4 {
            if b != a {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        w
    })
}

/// `∫_a^b` of the cubic through four samples.
pub fn cubic_integral(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    // four-point Gauss-Legendre is exact for cubics
    const NODES: [f64; 4] =
        [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    const WEIGHTS: [f64; 4] =
        [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
    let mut total = 0.0;
    for (t, w) in NODES.iter().zip(WEIGHTS) {
        let y = 0.5 * (a + b) + 0.5 * (b - a) * t;
        let l = lagrange4(xs, y);
        total += w * (0..4).map(|k| l[k] * ys[k]).sum::<f64>();
    }
    0.5 * (b - a) * total
}

/// `∫_a^b` of samples `v[k]` at `s = k h`, piecewise cubic through the
/// nearest four samples of each interval.
pub fn integrate_uniform(v: &[f64], h: f64, a: f64, b: f64) -> Result<f64> {
    let n = v.len();
    if n < 4 || a < -1e-12 * h || b > (n - 1) as f64 * h * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!("cannot integrate over [{a}, {b}] with {n} samples of spacing {h}")));
    }
    if b <= a {
        return Ok(0.0);
    }
    let first = ((a / h).floor() as usize).min(n - 2);
    let mut total = 0.0;
    let mut j = first;
    while j + 1 < n && (j as f64) * h < b {
        let lo = a.max(j as f64 * h);
        let hi = b.min((j + 1) as f64 * h);
        if hi > lo {
            let m = j.saturating_sub(1).min(n - 4);
            let xs: [f64; 4] = std::array::from_fn(|q| (m + q) as f64 * h);
            total += cubic_integral(&xs, &v[m..m + 4], lo, hi);
        }
        j += 1;
    }
    Ok(total)
}

fn trace_ray(
    chart: &dyn SpacetimeChart,
    vertex: &Vertex,
    grid: &SphereGrid,
    i: usize,
    params: &ConeParams,
    n_steps: usize,
) -> Result<Ray> {
    trace_ray_until(chart, vertex, grid, i, params, n_steps, false)
}

/// Integrate one ray. With `stop_after_rings` the ray ends once it has
/// crossed every requested slice.
fn trace_ray_until(
    chart: &dyn SpacetimeChart,
    vertex: &Vertex,
    grid: &SphereGrid,
    i: usize,
    params: &ConeParams,
    n_steps: usize,
    stop_after_rings: bool,
) -> Result<Ray> {
    let w = grid.direction(i);
    let (et, ep) = grid.tangent_basis(i);
    let l0 = vertex.initial_tangent(&w);
    let dl0 = [scale(-1.0, &vertex.spatial(&et)), scale(-1.0, &vertex.spatial(&ep))];

    let g0 = chart.metric(&vertex.p);
    let that0 = unit_normal(&inverse_metric(&g0, &vertex.p)?);
    let lbar0 = lbar_from_normal(&g0, &l0, &that0)?;
    let e0 = project_leg(&g0, &vertex.spatial(&et), &l0, &lbar0, &[]);
    let e1 = project_leg(&g0, &vertex.spatial(&ep), &l0, &lbar0, &[e0]);

    let mut y: State = [vertex.p, l0, ZERO4, dl0[0], ZERO4, dl0[1], e0, e1];
    let every = params.record_every;
    let ds = params.ds;
    let mut nodes = Vec::with_capacity(n_steps / every + 1);
    let mut ray = Ray {
        nodes: Vec::new(),
        termination: None,
        renormalization: 0.0,
        reprojection: 0.0,
        rings: vec![None; params.slices.len()],
    };
    let f = |y: &State| ray_rhs(chart, y);
    nodes.push(record(chart, &y)?);

    for step in 1..=n_steps {
        let s_prev = (step - 1) as f64 * ds;
        let next = match rk4(&y, ds, &f) {
            Ok(n) => n,
            Err(Error::OutsideChart { .. }) => {
                ray.termination = Some(Termination::ExitedChart { s: s_prev });
                break;
            }
            Err(e) => return Err(e),
        };
        if next.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Integration { ray: i, s: s_prev, reason: "non-finite state after RK4 step".into() });
        }
        for (k, &t_slice) in params.slices.iter().enumerate() {
            if ray.rings[k].is_none() && next[0][0] <= t_slice && y[0][0] > t_slice {
                ray.rings[k] = Some(locate_crossing(chart, &y, s_prev, ds, t_slice, &f)?);
            }
        }
        y = next;
        let s = step as f64 * ds;
        if !chart.contains(&y[0]) {
            ray.termination = Some(Termination::ExitedChart { s });
            break;
        }
        let g = chart.metric(&y[0]);
        let ginv = inverse_metric(&g, &y[0])?;
        let that = unit_normal(&ginv);
        if step % params.renormalize_every == 0 {
            // L + α t̂ with α the small root of g(L + α t̂, L + α t̂) = 0
            let eps = dot(&g, &y[1], &y[1]);
            let glt = dot(&g, &y[1], &that);
            let alpha = glt - glt.signum() * (glt * glt + eps).sqrt();
            y[1] = axpy(alpha, &that, &y[1]);
            ray.renormalization = ray.renormalization.max(alpha.abs());
        }
        // transport preserves g(e_a, L); its drift is the logged residual
        let drift = dot(&g, &y[6], &y[1]).abs().max(dot(&g, &y[7], &y[1]).abs());
        ray.reprojection = ray.reprojection.max(drift);
        let lbar = lbar_from_normal(&g, &y[1], &that)?;
        let p0 = project_leg(&g, &y[6], &y[1], &lbar, &[]);
        let p1 = project_leg(&g, &y[7], &y[1], &lbar, &[p0]);
        y[6] = p0;
        y[7] = p1;
        if step % every == 0 {
            let node = record(chart, &y)?;
            if s >= params.s_min() && is_caustic(&g, &node, s) {
                ray.termination = Some(Termination::Caustic { s });
                break;
            }
            nodes.push(node);
        }
        if stop_after_rings && ray.rings.iter().all(Option::is_some) {
            break;
        }
    }
    ray.nodes = nodes;
    Ok(ray)
}

/// Partial RK4 step landing on `t = t_slice`, solved by Newton on the step length.
fn locate_crossing(
    chart: &dyn SpacetimeChart,
    y: &State,
    s_prev: f64,
    ds: f64,
    t_slice: f64,
    f: &impl Fn(&State) -> Result<State>,
) -> Result<RingNode> {
    let mut h = ((y[0][0] - t_slice) / -y[1][0]).clamp(0.0, ds);
    let mut z = rk4(y, h, f)?;
    for _ in 0..8 {
        let err = z[0][0] - t_slice;
        if err.abs() < 1e-15 * (1.0 + t_slice.abs()) {
            break;
        }
        h -= err / z[1][0];
        z = rk4(y, h, f)?;
    }
    Ok(RingNode { s: s_prev + h, node: record(chart, &z)? })
}

fn record(chart: &dyn SpacetimeChart, y: &State) -> Result<RayNode> {
    let gam = christoffel(chart, &y[0])?;
    let dl =
        [axpy(1.0, &contract_gamma(&gam, &y[2], &y[1]), &y[3]), axpy(1.0, &contract_gamma(&gam, &y[4], &y[1]), &y[5])];
    Ok(RayNode { x: y[0], l: y[1], jac: [y[2], y[4]], dl, e: [y[6], y[7]] })
}

/// Determinant of the induced metric has collapsed relative to the flat
/// value `s⁴`.
fn is_caustic(g: &[[f64; 4]; 4], n: &RayNode, s: f64) -> bool {
    let (a, b, c) = (dot(g, &n.jac[0], &n.jac[0]), dot(g, &n.jac[0], &n.jac[1]), dot(g, &n.jac[1], &n.jac[1]));
    let det = a * c - b * b;
    !(det > 1e-8 * s.powi(4))
}
