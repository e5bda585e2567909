//! The parametrix weight λ on a past cone and the representation of F(p)
//! by cone integrals plus data on the cut of the cone with a slice.
//!
//! λ solves D_Lλ + ½trχ λ = 0 with sλ → J_p at the vertex. It is stored as
//! Λ = sλ on every other recorded shell: one RK4 step spans two recorded
//! shells and uses the one in between as its midpoint.

use std::path::Path;

use serde::Serialize;

use crate::exec::Exec;
use crate::fields::{covariant_jet, FieldSource, Pointwise};
use crate::geometry::{
    christoffel, covariant_jacobian, h_from_metric, inverse_metric, lower, riemann, Christoffel, Mat4, UnitTimeField,
    Vec4,
};
use crate::liegauge::{h_norm_sq, pair_inner, wave_source, Algebra, Elem, PotentialField, TwoForm, PAIRS};
use crate::nullcone::{
    cubic_integral, lagrange4, node_optics, null_frame, simpson, sphere_basis, sphere_frame, unit_normal, Neighbours,
    NullConeBundle, RingNode, SphereBasis, Termination,
};
use crate::sphere::SphereGrid;
use crate::{Error, Result};

/// Spectral power fraction in the top degrees above which a tangential
/// derivative is flagged as under-resolved.
pub const ALIASING_LIMIT: f64 = 1e-3;

/// One unit seed per index pair and algebra basis element.
pub fn canonical_seeds(alg: &Algebra) -> Vec<TwoForm> {
    let mut out = Vec::with_capacity(6 * alg.dim());
    for b in 0..alg.dim() {
        for p in 0..6 {
            out.push(TwoForm::unit(p, alg.basis(b)));
        }
    }
    out
}

/// `(mΛ)_{αβ} = m_α^μ Λ_{μβ} + m_β^μ Λ_{αμ}`.
fn act(m: &Mat4, lam: &TwoForm) -> TwoForm {
    let d = lam.dense();
    let mut out = TwoForm::ZERO;
    for (i, &(a, b)) in PAIRS.iter().enumerate() {
        let mut v = Elem::ZERO;
        for mu in 0..4 {
            if m[a][mu] != 0.0 {
                v.axpy(m[a][mu], &d[mu][b]);
            }
            if m[b][mu] != 0.0 {
                v.axpy(m[b][mu], &d[a][mu]);
            }
        }
        out.0[i] = v;
    }
    out
}

fn bracket_form(alg: &Algebra, x: &Elem, lam: &TwoForm) -> TwoForm {
    TwoForm(std::array::from_fn(|i| alg.bracket(x, &lam.0[i])))
}

/// `m_α^μ = Γ^μ_{να} X^ν`, so that `∇_X` of a covector subtracts `m·`.
fn connection_along(gam: &Christoffel, x: &Vec4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (a, row) in m.iter_mut().enumerate() {
        for (mu, v) in row.iter_mut().enumerate() {
            for nu in 0..4 {
                *v += gam[mu][nu][a] * x[nu];
            }
        }
    }
    m
}

fn potential_along(a: &[Elem; 4], x: &Vec4) -> Elem {
    let mut out = Elem::ZERO;
    for (m, am) in a.iter().enumerate() {
        if x[m] != 0.0 {
            out.axpy(x[m], am);
        }
    }
    out
}

fn sum_along(x: &Vec4, d: &[TwoForm; 4]) -> TwoForm {
    let mut out = TwoForm::ZERO;
    for (g, dg) in d.iter().enumerate() {
        if x[g] != 0.0 {
            out.axpy(x[g], dg);
        }
    }
    out
}

/// Λ = sλ on the transport nodes of each ray.
#[derive(Clone, Debug)]
pub struct TransportField {
    pub seed: TwoForm,
    /// Recorded shells per transport step.
    pub stride: usize,
    /// Affine parameter of the transport nodes.
    pub s: Vec<f64>,
    /// `values[ray][j]` = Λ at `s[j]`, for the nodes the ray reached.
    pub values: Vec<Vec<TwoForm>>,
}

impl TransportField {
    /// Recorded shell index of transport node `j`.
    pub fn shell(&self, j: usize) -> usize {
        j * self.stride
    }

    /// λ = Λ/s at transport node `j > 0`.
    pub fn lambda(&self, ray: usize, j: usize) -> TwoForm {
        self.values[ray][j].scaled(1.0 / self.s[j])
    }

    /// Λ at any `s` covered by the ray, by cubic interpolation.
    pub fn at(&self, ray: usize, s: f64) -> Result<TwoForm> {
        let v = &self.values[ray];
        let h = self.s[1] - self.s[0];
        if v.len() < 4 || s < 0.0 || s > self.s[v.len() - 1] {
            return Err(Error::Resolution(format!("transport on ray {ray} does not cover s = {s}")));
        }
        let j = ((s / h).floor() as usize).saturating_sub(1).min(v.len() - 4);
        let mut out = TwoForm::ZERO;
        for (a, w) in lagrange4(&self.s[j..j + 4], s).iter().enumerate() {
            out.axpy(*w, &v[j + a]);
        }
        Ok(out)
    }

    /// Largest component of Λ − J_p over all nodes.
    pub fn max_seed_deviation(&self) -> f64 {
        self.values.iter().flatten().map(|v| v.sub(&self.seed).max_abs()).fold(0.0, f64::max)
    }

    /// `sup |Λ| / |J_p|` in the norm built from the slice normal.
    pub fn sup_ratio(&self, bundle: &NullConeBundle<'_>, alg: &Algebra, smax: f64) -> Result<f64> {
        let norm = |x: &Vec4, k: &TwoForm| -> Result<f64> {
            let g = bundle.chart.metric(x);
            let gi = inverse_metric(&g, x)?;
            let h = h_from_metric(&g, &unit_normal(&gi))?;
            Ok(h_norm_sq(alg, k, &gi, &h).sqrt())
        };
        let j0 = norm(&bundle.vertex.p, &self.seed)?;
        let mut worst = 0.0f64;
        for (i, vals) in self.values.iter().enumerate() {
            for (j, v) in vals.iter().enumerate() {
                if self.s[j] > smax {
                    break;
                }
                worst = worst.max(norm(&bundle.node(i, self.shell(j)).x, v)? / j0);
            }
        }
        Ok(worst)
    }

    /// Largest relative residual of `d/ds⟨Λ, Λ⟩ = −(trχ − 2/s)⟨Λ, Λ⟩`, with
    /// the derivative from fourth-order differences on the transport nodes
    /// and the metric pairing evaluated at each node.
    pub fn norm_law_residual(&self, bundle: &NullConeBundle<'_>, alg: &Algebra) -> Result<f64> {
        let h = self.s[1] - self.s[0];
        let mut worst = 0.0f64;
        for (i, vals) in self.values.iter().enumerate() {
            let mut sq = Vec::with_capacity(vals.len());
            let mut scale = Vec::with_capacity(vals.len());
            for (j, v) in vals.iter().enumerate() {
                let x = bundle.node(i, self.shell(j)).x;
                let g = bundle.chart.metric(&x);
                let gi = inverse_metric(&g, &x)?;
                let hm = h_from_metric(&g, &unit_normal(&gi))?;
                sq.push(pair_inner(alg, v, &v.raise(&gi)));
                scale.push(h_norm_sq(alg, v, &gi, &hm));
            }
            for j in 2..vals.len().saturating_sub(2) {
                let k = self.shell(j);
                if bundle.shells[self.shell(j - 2)] < bundle.s_min() {
                    continue;
                }
                let d = (8.0 * (sq[j + 1] - sq[j - 1]) - (sq[j + 2] - sq[j - 2])) / (12.0 * h);
                let q = node_optics(bundle.chart, bundle.node(i, k), self.s[j])?.tr_chi - 2.0 / self.s[j];
                worst = worst.max((d + q * sq[j]).abs() / scale[j]);
            }
        }
        Ok(worst)
    }
}

struct TransportCoeffs {
    m: Mat4,
    a_l: Elem,
    /// trχ − 2/s
    q: f64,
}

fn transport_coeffs(
    bundle: &NullConeBundle<'_>,
    pot: &dyn PotentialField,
    ray: usize,
    k: usize,
) -> Result<TransportCoeffs> {
    let n = bundle.node(ray, k);
    let s = bundle.shells[k];
    let gam = christoffel(bundle.chart, &n.x)?;
    let q = if s < bundle.s_min() { 0.0 } else { node_optics(bundle.chart, n, s)?.tr_chi - 2.0 / s };
    Ok(TransportCoeffs { m: connection_along(&gam, &n.l), a_l: potential_along(&pot.potential(&n.x), &n.l), q })
}

fn transport_rhs(alg: &Algebra, c: &TransportCoeffs, lam: &TwoForm) -> TwoForm {
    let mut out = act(&c.m, lam).sub(&bracket_form(alg, &c.a_l, lam));
    out.axpy(-0.5 * c.q, lam);
    out
}

/// Transport `J_p` along every ray of the cone.
pub fn solve_transport(
    bundle: &NullConeBundle<'_>,
    potential: &dyn PotentialField,
    alg: &Algebra,
    seed: &TwoForm,
    exec: Exec,
) -> Result<TransportField> {
    Ok(solve_transport_many(bundle, potential, alg, std::slice::from_ref(seed), exec)?.remove(0))
}

/// Transport several seeds at once, sharing the geometric coefficients.
pub fn solve_transport_many(
    bundle: &NullConeBundle<'_>,
    potential: &dyn PotentialField,
    alg: &Algebra,
    seeds: &[TwoForm],
    exec: Exec,
) -> Result<Vec<TransportField>> {
    for (i, r) in bundle.rays.iter().enumerate() {
        if let Some(Termination::Caustic { s }) = r.termination {
            return Err(Error::Caustic { ray: i, s });
        }
    }
    if bundle.n_shells() < 3 {
        return Err(Error::Resolution("cone has fewer than three shells".into()));
    }
    let stride = 2;
    let h = bundle.shells[stride] - bundle.shells[0];
    let per_ray = exec.map(bundle.n_rays(), |i| -> Result<Vec<Vec<TwoForm>>> {
        let n_nodes = (bundle.rays[i].nodes.len() - 1) / stride + 1;
        let mut out: Vec<Vec<TwoForm>> = seeds.iter().map(|s| vec![*s]).collect();
        let mut c0 = transport_coeffs(bundle, potential, i, 0)?;
        for j in 0..n_nodes - 1 {
            let k = j * stride;
            let c1 = transport_coeffs(bundle, potential, i, k + 1)?;
            let c2 = transport_coeffs(bundle, potential, i, k + 2)?;
            for vals in out.iter_mut() {
                let y = vals[j];
                let k1 = transport_rhs(alg, &c0, &y);
                let mut y2 = y;
                y2.axpy(0.5 * h, &k1);
                let k2 = transport_rhs(alg, &c1, &y2);
                let mut y3 = y;
                y3.axpy(0.5 * h, &k2);
                let k3 = transport_rhs(alg, &c1, &y3);
                let mut y4 = y;
                y4.axpy(h, &k3);
                let k4 = transport_rhs(alg, &c2, &y4);
                let mut next = y;
                next.axpy(h / 6.0, &k1);
                next.axpy(h / 3.0, &k2);
                next.axpy(h / 3.0, &k3);
                next.axpy(h / 6.0, &k4);
                if !next.0.iter().all(|e| e.0.iter().all(|v| v.is_finite())) {
                    return Err(Error::Integration {
                        ray: i,
                        s: bundle.shells[k + 2],
                        reason: "transport diverged".into(),
                    });
                }
                vals.push(next);
            }
            c0 = c2;
        }
        Ok(out)
    });
    let per_ray = per_ray.into_iter().collect::<Result<Vec<_>>>()?;
    let n_max = per_ray.iter().map(|v| v[0].len()).max().unwrap_or(0);
    let s: Vec<f64> = (0..n_max).map(|j| bundle.shells[j * stride]).collect();
    Ok(seeds
        .iter()
        .enumerate()
        .map(|(q, seed)| TransportField {
            seed: *seed,
            stride,
            s: s.clone(),
            values: per_ray.iter().map(|v| v[q].clone()).collect(),
        })
        .collect())
}

/// What the angular calculus needs at one node of an affine sphere.
#[derive(Clone, Debug)]
pub struct ShellNode {
    pub x: Vec4,
    pub jac: [Vec4; 2],
    pub ginv: Mat4,
    pub gam: Christoffel,
    pub a: [Elem; 4],
    pub basis: SphereBasis,
}

/// The nodes of one recorded shell, with the potential sampled on them.
#[derive(Clone, Debug)]
pub struct Shell {
    pub k: usize,
    pub s: f64,
    pub nodes: Vec<ShellNode>,
}

impl Shell {
    pub fn new(bundle: &NullConeBundle<'_>, k: usize, potential: &dyn PotentialField) -> Result<Self> {
        if k == 0 || bundle.live_shells() <= k {
            return Err(Error::Resolution(format!("shell {k} is not a full sphere of the cone")));
        }
        let mut nodes = Vec::with_capacity(bundle.n_rays());
        for i in 0..bundle.n_rays() {
            let n = bundle.node(i, k);
            let g = bundle.chart.metric(&n.x);
            nodes.push(ShellNode {
                x: n.x,
                jac: n.jac,
                ginv: inverse_metric(&g, &n.x)?,
                gam: christoffel(bundle.chart, &n.x)?,
                a: potential.potential(&n.x),
                basis: sphere_basis(bundle.chart, n)?,
            });
        }
        Ok(Shell { k, s: bundle.shells[k], nodes })
    }
}

/// `D_{J_A}Ψ` for A = 1, 2 with the largest high-mode fraction seen.
#[derive(Clone, Debug)]
pub struct Tangential {
    pub d: [Vec<TwoForm>; 2],
    pub aliasing: f64,
}

impl Tangential {
    pub fn warning(&self, s: f64) -> Option<String> {
        aliasing_warning(self.aliasing, s)
    }

    /// Components `D_aΨ = c[a][A] D_{J_A}Ψ` in the orthonormal frame.
    pub fn frame(&self, shell: &Shell) -> [Vec<TwoForm>; 2] {
        std::array::from_fn(|a| {
            shell
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let mut v = self.d[0][i].scaled(n.basis.c[a][0]);
                    v.axpy(n.basis.c[a][1], &self.d[1][i]);
                    v
                })
                .collect()
        })
    }
}

fn aliasing_warning(fraction: f64, s: f64) -> Option<String> {
    (fraction > ALIASING_LIMIT)
        .then(|| format!("high-mode fraction {fraction:.2e} on the sphere s = {s}; increase the angular resolution"))
}

/// Round-sphere gradients of every scalar component of a two-form field.
fn component_gradients(grid: &SphereGrid, dim: usize, field: &[TwoForm]) -> ([Vec<TwoForm>; 2], f64) {
    let n = field.len();
    let mut d = [vec![TwoForm::ZERO; n], vec![TwoForm::ZERO; n]];
    let total: f64 = field.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    let mut aliasing = 0.0f64;
    let mut comp = vec![0.0; n];
    for p in 0..6 {
        for c in 0..dim {
            for (v, f) in comp.iter_mut().zip(field) {
                *v = f.0[p].0[c];
            }
            let peak = comp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                continue;
            }
            let spec = grid.analyze(&comp);
            if peak > 1e-8 * total {
                let pw = spec.power();
                let all: f64 = pw.iter().sum();
                let cut = (2 * grid.lmax()) / 3 + 1;
                if all > 0.0 {
                    aliasing = aliasing.max(pw[cut.min(pw.len())..].iter().sum::<f64>() / all);
                }
            }
            let (gt, gp) = grid.gradient_of(&spec);
            for i in 0..n {
                d[0][i].0[p].0[c] = gt[i];
                d[1][i].0[p].0[c] = gp[i];
            }
        }
    }
    (d, aliasing)
}

/// Gauge-covariant derivative of a two-form field on a shell along the
/// Jacobi directions: `D_{J_A}Ψ = ∂_AΨ − (Γ(J_A)Ψ) + [A(J_A), Ψ]`.
pub fn tangential_derivative(grid: &SphereGrid, shell: &Shell, alg: &Algebra, field: &[TwoForm]) -> Tangential {
    let (mut d, aliasing) = component_gradients(grid, alg.dim(), field);
    for (i, n) in shell.nodes.iter().enumerate() {
        for (a, da) in d.iter_mut().enumerate() {
            let m = connection_along(&n.gam, &n.jac[a]);
            let ax = potential_along(&n.a, &n.jac[a]);
            da[i] = da[i].sub(&act(&m, &field[i])).add(&bracket_form(alg, &ax, &field[i]));
        }
    }
    Tangential { d, aliasing }
}

/// Induced Laplacian on the affine sphere,
/// `Δ̂Ψ = ρ^{-1} div(ρ G) + Σ_A C_A(G^A)` with `G^A = γ^{AB} D_{J_B}Ψ`,
/// ρ the area density, div the round divergence and `C_A` the connection
/// part of `D_{J_A}`. Returns the field and the worst aliasing fraction.
pub fn induced_laplacian(grid: &SphereGrid, shell: &Shell, alg: &Algebra, field: &[TwoForm]) -> (Vec<TwoForm>, f64) {
    let t = tangential_derivative(grid, shell, alg, field);
    let n = field.len();
    let mut big_g = [vec![TwoForm::ZERO; n], vec![TwoForm::ZERO; n]];
    for (i, node) in shell.nodes.iter().enumerate() {
        let gi = &node.basis.gamma_inv;
        for a in 0..2 {
            let mut v = t.d[0][i].scaled(gi[a][0]);
            v.axpy(gi[a][1], &t.d[1][i]);
            big_g[a][i] = v;
        }
    }
    let mut out = vec![TwoForm::ZERO; n];
    let (mut vt, mut vp) = (vec![0.0; n], vec![0.0; n]);
    for p in 0..6 {
        for c in 0..alg.dim() {
            for i in 0..n {
                let rho = shell.nodes[i].basis.area;
                vt[i] = rho * big_g[0][i].0[p].0[c];
                vp[i] = rho * big_g[1][i].0[p].0[c];
            }
            if vt.iter().chain(&vp).all(|v| *v == 0.0) {
                continue;
            }
            let div = grid.divergence(&vt, &vp);
            for i in 0..n {
                out[i].0[p].0[c] = div[i] / shell.nodes[i].basis.area;
            }
        }
    }
    for (i, node) in shell.nodes.iter().enumerate() {
        for a in 0..2 {
            let m = connection_along(&node.gam, &node.jac[a]);
            let ax = potential_along(&node.a, &node.jac[a]);
            out[i] = out[i].sub(&act(&m, &big_g[a][i])).add(&bracket_form(alg, &ax, &big_g[a][i]));
        }
    }
    (out, t.aliasing)
}

/// The two sides of `∫⟨Δ̂λ, F⟩ = −∫γ^{AB}⟨D_Aλ, D_BF⟩` on a shell, with
/// the sphere measure `ρ dω`.
pub fn laplacian_forms(
    grid: &SphereGrid,
    shell: &Shell,
    alg: &Algebra,
    lambda: &[TwoForm],
    f: &[TwoForm],
) -> (f64, f64) {
    let (lap, _) = induced_laplacian(grid, shell, alg, lambda);
    let dl = tangential_derivative(grid, shell, alg, lambda);
    let df = tangential_derivative(grid, shell, alg, f);
    let n = lambda.len();
    let mut direct = vec![0.0; n];
    let mut by_parts = vec![0.0; n];
    for (i, node) in shell.nodes.iter().enumerate() {
        let rho = node.basis.area;
        direct[i] = rho * pair_inner(alg, &lap[i], &f[i].raise(&node.ginv));
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += node.basis.gamma_inv[a][b] * pair_inner(alg, &dl.d[a][i], &df.d[b][i].raise(&node.ginv));
            }
        }
        by_parts[i] = -rho * acc;
    }
    (grid.integrate(&direct), grid.integrate(&by_parts))
}

/// Per-term contributions to 4π⟨J_p, F(p)⟩.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TermBreakdown {
    /// −∫⟨λ, □F⟩ with □F from the wave equation.
    pub source: f64,
    /// ∫⟨Δ̂λ, F⟩
    pub laplacian: f64,
    /// ∫2ζ_a⟨D_aλ, F⟩
    pub torsion: f64,
    /// ∫½μ⟨λ, F⟩
    pub mass_aspect: f64,
    /// ∫⟨[F_{LL̄}, λ], F⟩
    pub bracket: f64,
    /// −½∫⟨R_α^γ_{L̄L} λ_{γβ}, F^{αβ}⟩
    pub curvature_first: f64,
    /// −½∫⟨R_β^γ_{L̄L} λ_{αγ}, F^{αβ}⟩
    pub curvature_second: f64,
    /// ∫⟨λ, D_T F⟩ φ dA on the cut.
    pub data_time_derivative: f64,
    /// ∫½φ trχ ⟨λ, F⟩ φ dA on the cut.
    pub data_expansion: f64,
    /// ∫tr k ⟨λ, F⟩ φ dA on the cut.
    pub data_extrinsic: f64,
    /// ∫⟨λ, D_N F⟩ φ dA on the cut, N = φL + T.
    pub data_normal_derivative: f64,
}

impl TermBreakdown {
    pub const NAMES: [&'static str; 11] = [
        "source",
        "laplacian",
        "torsion",
        "mass_aspect",
        "bracket",
        "curvature_first",
        "curvature_second",
        "data_time_derivative",
        "data_expansion",
        "data_extrinsic",
        "data_normal_derivative",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.source,
            self.laplacian,
            self.torsion,
            self.mass_aspect,
            self.bracket,
            self.curvature_first,
            self.curvature_second,
            self.data_time_derivative,
            self.data_expansion,
            self.data_extrinsic,
            self.data_normal_derivative,
        ]
    }

    /// Sum of all terms in declaration order.
    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    fn set_cone(&mut self, v: &[f64; CONE_TERMS]) {
        self.source = v[0];
        self.laplacian = v[1];
        self.torsion = v[2];
        self.mass_aspect = v[3];
        self.bracket = v[4];
        self.curvature_first = v[5];
        self.curvature_second = v[6];
    }
}

const CONE_TERMS: usize = 7;

/// Running cone total along the transport nodes, for convergence plots.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShellPartial {
    pub s: f64,
    /// Σ_ω w ρ (sum of cone integrands) on the full sphere `s`.
    pub shell_integral: f64,
    /// Trapezoidal running integral of `shell_integral`.
    pub cumulative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RepresentationReport {
    /// `seed[pair][component]`, pairs in the order 01, 02, 03, 12, 13, 23.
    pub seed: Vec<Vec<f64>>,
    pub reconstructed: f64,
    pub reference: f64,
    pub relative_error: f64,
    pub terms: TermBreakdown,
    /// The Laplacian term over the spheres inside the cut, evaluated
    /// directly and after integration by parts.
    pub laplacian_direct: f64,
    pub laplacian_by_parts: f64,
    pub shells: Vec<ShellPartial>,
    pub warnings: Vec<String>,
}

impl RepresentationReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn write_shell_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.shells {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Norm of a two-form at x in the metric built from the slice normal.
fn h_norm(chart: &dyn crate::geometry::SpacetimeChart, alg: &Algebra, x: &Vec4, k: &TwoForm) -> Result<f64> {
    let g = chart.metric(x);
    let gi = inverse_metric(&g, x)?;
    let h = h_from_metric(&g, &unit_normal(&gi))?;
    Ok(h_norm_sq(alg, k, &gi, &h).sqrt())
}

/// Cone integrands (already multiplied by the area density) of one sphere
/// for every seed and ray, plus the two forms of the Laplacian term.
struct ShellTerms {
    terms: Vec<Vec<[f64; CONE_TERMS]>>,
    lap_forms: Vec<(f64, f64)>,
    aliasing: f64,
}

fn shell_terms(
    bundle: &NullConeBundle<'_>,
    nb: &Neighbours<'_>,
    source: &dyn FieldSource,
    transports: &[TransportField],
    j: usize,
) -> Result<ShellTerms> {
    let alg = source.algebra();
    let chart = bundle.chart;
    let k = transports[0].shell(j);
    let s = bundle.shells[k];
    let pot = Pointwise(source);
    let shell = Shell::new(bundle, k, &pot)?;
    let cs = bundle.connection_scalars(k, nb)?;
    let n = bundle.n_rays();
    struct Local {
        rho: f64,
        f_up: TwoForm,
        s_up: TwoForm,
        f_llbar: Elem,
        rm: Mat4,
        df: [TwoForm; 2],
    }
    let mut local = Vec::with_capacity(n);
    for i in 0..n {
        let node = bundle.node(i, k);
        let sn = &shell.nodes[i];
        let curv = riemann(chart, &node.x)?;
        let frame = sphere_frame(chart, node)?;
        let (f, df) = covariant_jet(source, chart, &node.x)?;
        let f_up = f.raise(&sn.ginv);
        let s_up = wave_source(alg, &curv, &f).raise(&sn.ginv);
        // R_α^γ_{L̄L}
        let mut rm = [[0.0; 4]; 4];
        for (a, row) in rm.iter_mut().enumerate() {
            for (gm, v) in row.iter_mut().enumerate() {
                for d in 0..4 {
                    if sn.ginv[gm][d] == 0.0 {
                        continue;
                    }
                    let mut r = 0.0;
                    for m in 0..4 {
                        for nu in 0..4 {
                            r += curv.riemann[a][d][m][nu] * frame.lbar[m] * node.l[nu];
                        }
                    }
                    *v += sn.ginv[gm][d] * r;
                }
            }
        }
        local.push(Local {
            rho: bundle.area_element(i, k)?,
            f_up,
            s_up,
            f_llbar: f.contract(&node.l, &frame.lbar),
            rm,
            df: [sum_along(&node.jac[0], &df), sum_along(&node.jac[1], &df)],
        });
    }
    let mut terms = Vec::with_capacity(transports.len());
    let mut lap_forms = Vec::with_capacity(transports.len());
    let mut aliasing = 0.0f64;
    for tr in transports {
        let lam: Vec<TwoForm> = (0..n).map(|i| tr.lambda(i, j)).collect();
        let (lap, al) = induced_laplacian(&bundle.grid, &shell, alg, &lam);
        let tang = tangential_derivative(&bundle.grid, &shell, alg, &lam);
        aliasing = aliasing.max(al).max(tang.aliasing);
        let dframe = tang.frame(&shell);
        let mut per_ray = Vec::with_capacity(n);
        let (mut direct, mut by_parts) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let lc = &local[i];
            let l = &lam[i];
            let lf = pair_inner(alg, l, &lc.f_up);
            let zeta: f64 = (0..2).map(|a| 2.0 * cs[i].zeta[a] * pair_inner(alg, &dframe[a][i], &lc.f_up)).sum();
            let ld = l.dense();
            let fd = lc.f_up.dense();
            let (mut c1, mut c2) = (0.0, 0.0);
            for a in 0..4 {
                for b in 0..4 {
                    for g in 0..4 {
                        let x = lc.rm[a][g];
                        if x != 0.0 {
                            c1 += x * alg.inner(&ld[g][b], &fd[a][b]);
                        }
                        let y = lc.rm[b][g];
                        if y != 0.0 {
                            c2 += y * alg.inner(&ld[a][g], &fd[a][b]);
                        }
                    }
                }
            }
            let lap_term = pair_inner(alg, &lap[i], &lc.f_up);
            let vals = [
                -pair_inner(alg, l, &lc.s_up),
                lap_term,
                zeta,
                0.5 * cs[i].mu * lf,
                pair_inner(alg, &bracket_form(alg, &lc.f_llbar, l), &lc.f_up),
                -0.5 * c1,
                -0.5 * c2,
            ];
            if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("cone integrand {v} at ray {i}, s = {s}")));
            }
            per_ray.push(vals.map(|v| v * lc.rho));
            direct[i] = lc.rho * lap_term;
            let gi = &shell.nodes[i].basis.gamma_inv;
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    acc += gi[a][b] * pair_inner(alg, &tang.d[a][i], &lc.df[b].raise(&shell.nodes[i].ginv));
                }
            }
            by_parts[i] = -lc.rho * acc;
        }
        lap_forms.push((bundle.grid.integrate(&direct), bundle.grid.integrate(&by_parts)));
        terms.push(per_ray);
    }
    Ok(ShellTerms { terms, lap_forms, aliasing })
}

/// Ring data shared by all seeds.
struct RingLocal {
    s: f64,
    weight: f64,
    f_up: TwoForm,
    dt_up: TwoForm,
    dn_up: TwoForm,
    expansion: f64,
    extrinsic: f64,
}

fn ring_locals(bundle: &NullConeBundle<'_>, source: &dyn FieldSource, ring: &[RingNode]) -> Result<Vec<RingLocal>> {
    let chart = bundle.chart;
    ring.iter()
        .map(|r| {
            let x = r.node.x;
            let g = chart.metric(&x);
            let gi = inverse_metric(&g, &x)?;
            let that = unit_normal(&gi);
            let optics = node_optics(chart, &r.node, r.s)?;
            let phi = optics.lapse;
            let frame = null_frame(chart, &r.node)?;
            let k = covariant_jacobian(chart, &x, &UnitTimeField(chart))?;
            let mut extrinsic = 0.0;
            for e in &frame.e {
                let el = lower(&g, e);
                for m in 0..4 {
                    for nu in 0..4 {
                        extrinsic += e[m] * k[m][nu] * el[nu];
                    }
                }
            }
            let (f, df) = covariant_jet(source, chart, &x)?;
            let normal: Vec4 = std::array::from_fn(|m| phi * r.node.l[m] + that[m]);
            Ok(RingLocal {
                s: r.s,
                weight: phi * optics.area,
                f_up: f.raise(&gi),
                dt_up: sum_along(&that, &df).raise(&gi),
                dn_up: sum_along(&normal, &df).raise(&gi),
                expansion: 0.5 * phi * optics.tr_chi,
                extrinsic,
            })
        })
        .collect()
}

/// Evaluate the representation of `4π⟨J_p, F(p)⟩` for each seed, with the
/// initial-data terms on the cut of the cone by slice `slice` of the
/// bundle parameters. `nb` supplies the neighbouring cones for ω and μ.
pub fn assemble_representation(
    bundle: &NullConeBundle<'_>,
    nb: &Neighbours<'_>,
    source: &dyn FieldSource,
    seeds: &[TwoForm],
    slice: usize,
    exec: Exec,
) -> Result<Vec<RepresentationReport>> {
    let alg = source.algebra();
    let ring = bundle.ring(slice)?;
    let transports = solve_transport_many(bundle, &Pointwise(source), alg, seeds, exec)?;
    let tr0 = &transports[0];
    let h = tr0.s[1] - tr0.s[0];
    // transport node just below the cut on each ray
    let below: Vec<usize> = ring.iter().map(|r| (r.s / h).floor() as usize).collect();
    let j_max = (below.iter().max().copied().unwrap_or(0) + 2).max(3);
    for (i, v) in tr0.values.iter().enumerate() {
        if v.len() <= j_max || bundle.rays[i].nodes.len() <= tr0.shell(j_max) {
            return Err(Error::Resolution(format!(
                "cone must extend two transport steps past the slice on every ray (ray {i} stops at s = {})",
                tr0.s[v.len() - 1]
            )));
        }
    }
    let sheets = exec.map(j_max, |jm| shell_terms(bundle, nb, source, &transports, jm + 1));
    let sheets = sheets.into_iter().collect::<Result<Vec<_>>>()?;
    let ring_local = ring_locals(bundle, source, &ring)?;
    let p = bundle.vertex.p;
    let f_p = source.field(&p);
    let gp = bundle.chart.metric(&p);
    let f_p_up = f_p.raise(&inverse_metric(&gp, &p)?);
    let f_p_norm = h_norm(bundle.chart, alg, &p, &f_p)?;
    let s_cut = ring.iter().map(|r| r.s).fold(f64::INFINITY, f64::min);
    let mut warnings: Vec<String> = Vec::new();
    for (jm, sh) in sheets.iter().enumerate() {
        if let Some(w) = aliasing_warning(sh.aliasing, tr0.s[jm + 1]) {
            warnings.push(w);
            break;
        }
    }
    let n = bundle.n_rays();
    let mut reports = Vec::with_capacity(seeds.len());
    for (q, tr) in transports.iter().enumerate() {
        let sample = |i: usize, j: usize, t: usize| if j == 0 { 0.0 } else { sheets[j - 1].terms[q][i][t] };
        let mut cone = [0.0; CONE_TERMS];
        for (t, c) in cone.iter_mut().enumerate() {
            let per_ray: Vec<f64> = (0..n)
                .map(|i| {
                    let m = below[i];
                    let vals: Vec<f64> = (0..=m).map(|j| sample(i, j, t)).collect();
                    // remainder from the last node below the cut, on the cubic around it
                    let j0 = m.saturating_sub(1);
                    let ys: Vec<f64> = (j0..j0 + 4).map(|j| sample(i, j, t)).collect();
                    simpson(&vals, h) + cubic_integral(&tr.s[j0..j0 + 4], &ys, tr.s[m], ring[i].s)
                })
                .collect();
            *c = bundle.grid.integrate(&per_ray);
        }
        let mut data = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, rl) in ring_local.iter().enumerate() {
            let lam = tr.at(i, rl.s)?.scaled(1.0 / rl.s);
            let lf = pair_inner(alg, &lam, &rl.f_up);
            data[0][i] = rl.weight * pair_inner(alg, &lam, &rl.dt_up);
            data[1][i] = rl.weight * rl.expansion * lf;
            data[2][i] = rl.weight * rl.extrinsic * lf;
            data[3][i] = rl.weight * pair_inner(alg, &lam, &rl.dn_up);
        }
        let mut terms = TermBreakdown::default();
        terms.set_cone(&cone);
        terms.data_time_derivative = bundle.grid.integrate(&data[0]);
        terms.data_expansion = bundle.grid.integrate(&data[1]);
        terms.data_extrinsic = bundle.grid.integrate(&data[2]);
        terms.data_normal_derivative = bundle.grid.integrate(&data[3]);
        let reconstructed = terms.total();
        let four_pi = 4.0 * std::f64::consts::PI;
        let reference = four_pi * pair_inner(alg, &tr.seed, &f_p_up);
        let scale = four_pi * h_norm(bundle.chart, alg, &p, &tr.seed)? * f_p_norm + 1e-14;
        let (mut lap_direct, mut lap_parts) = (Vec::new(), Vec::new());
        let mut shells = Vec::new();
        let mut cumulative = 0.0;
        let mut prev = 0.0;
        shells.push(ShellPartial { s: 0.0, shell_integral: 0.0, cumulative: 0.0 });
        for (jm, sh) in sheets.iter().enumerate() {
            let s = tr.s[jm + 1];
            if s > s_cut {
                break;
            }
            lap_direct.push(sh.lap_forms[q].0);
            lap_parts.push(sh.lap_forms[q].1);
            let per_ray: Vec<f64> = (0..n).map(|i| sh.terms[q][i].iter().sum()).collect();
            let v = bundle.grid.integrate(&per_ray);
            cumulative += 0.5 * h * (prev + v);
            prev = v;
            shells.push(ShellPartial { s, shell_integral: v, cumulative });
        }
        let inner = |v: &[f64]| {
            let mut all = vec![0.0];
            all.extend_from_slice(v);
            simpson(&all, h)
        };
        reports.push(RepresentationReport {
            seed: tr.seed.0.iter().map(|e| e.0[..alg.dim()].to_vec()).collect(),
            reconstructed,
            reference,
            relative_error: (reconstructed - reference).abs() / scale,
            terms,
            laplacian_direct: inner(&lap_direct),
            laplacian_by_parts: inner(&lap_parts),
            shells,
            warnings: warnings.clone(),
        });
    }
    Ok(reports)
}

/// Shell integrals of `φ² trχ ⟨λ, F(p)⟩` on the cuts of the cone by the
/// given slices, and their extrapolation to the vertex.
#[derive(Clone, Debug, Serialize)]
pub struct VertexLimit {
    /// `t_p − t` for each slice.
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    /// 8π⟨J_p, F(p)⟩.
    pub target: f64,
}

impl VertexLimit {
    pub fn relative_error(&self) -> f64 {
        (self.extrapolated - self.target).abs() / self.target.abs().max(1e-300)
    }
}

pub fn vertex_limit(
    bundle: &NullConeBundle<'_>,
    transport: &TransportField,
    alg: &Algebra,
    f_p: &TwoForm,
    slices: &[usize],
) -> Result<VertexLimit> {
    let p = bundle.vertex.p;
    let f_up = f_p.raise(&inverse_metric(&bundle.chart.metric(&p), &p)?);
    let mut eps = Vec::with_capacity(slices.len());
    let mut values = Vec::with_capacity(slices.len());
    for &k in slices {
        let ring = bundle.ring(k)?;
        let mut vals = Vec::with_capacity(ring.len());
        for (i, r) in ring.iter().enumerate() {
            let o = node_optics(bundle.chart, &r.node, r.s)?;
            let lam = transport.at(i, r.s)?.scaled(1.0 / r.s);
            vals.push(o.lapse * o.lapse * o.tr_chi * pair_inner(alg, &lam, &f_up) * o.area);
        }
        eps.push(p[0] - bundle.params.slices[k]);
        values.push(bundle.grid.integrate(&vals));
    }
    Ok(VertexLimit {
        extrapolated: extrapolate_to_zero(&eps, &values),
        target: 8.0 * std::f64::consts::PI * pair_inner(alg, &transport.seed, &f_up),
        eps,
        values,
    })
}

/// Value at 0 of the interpolating polynomial through `(x_i, y_i)` (Neville).
pub fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p.first().copied().unwrap_or(f64::NAN)
}
