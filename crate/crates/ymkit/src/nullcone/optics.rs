//! Null frames, second fundamental form and connection scalars at cone nodes.

use serde::Serialize;

use super::{lbar_from_normal, unit_normal, NullConeBundle, RayNode};
use crate::exec::Exec;
use crate::geometry::tensor::contract_gamma;
use crate::geometry::{
    axpy, christoffel, dot, inverse_metric, riemann, scale, solve4, sub, Mat4, SpacetimeChart, Vec4,
};
use crate::{Error, Result};

/// A null frame `{L, L̄, e_1, e_2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullFrame {
    pub l: Vec4,
    pub lbar: Vec4,
    pub e: [Vec4; 2],
}

/// Largest deviation from the pairings g(L,L) = g(L̄,L̄) = 0, g(L,L̄) = −2,
/// g(e_a,e_b) = δ_ab, g(L,e_a) = g(L̄,e_a) = 0.
pub fn frame_pairing_residual(g: &Mat4, f: &NullFrame) -> f64 {
    let mut r = dot(g, &f.l, &f.l).abs();
    r = r.max(dot(g, &f.lbar, &f.lbar).abs());
    r = r.max((dot(g, &f.l, &f.lbar) + 2.0).abs());
    for a in 0..2 {
        r = r.max(dot(g, &f.l, &f.e[a]).abs());
        r = r.max(dot(g, &f.lbar, &f.e[a]).abs());
        for b in 0..2 {
            let target = if a == b { 1.0 } else { 0.0 };
            r = r.max((dot(g, &f.e[a], &f.e[b]) - target).abs());
        }
    }
    r
}

/// Frame adapted to the constant-t cuts: L̄ built from the slice normal and
/// the transported pair `e_a`.
pub fn null_frame(chart: &dyn SpacetimeChart, node: &RayNode) -> Result<NullFrame> {
    let g = chart.metric(&node.x);
    let that = unit_normal(&inverse_metric(&g, &node.x)?);
    Ok(NullFrame { l: node.l, lbar: lbar_from_normal(&g, &node.l, &that)?, e: node.e })
}

/// Induced metric, second fundamental form and the orthonormal frame of the
/// affine sphere through a node, all in the Jacobi basis `J_A`.
struct Induced {
    gamma_inv: [[f64; 2]; 2],
    chi: [[f64; 2]; 2],
    /// `e_a = c[a][A] J_A`.
    c: [[f64; 2]; 2],
    det: f64,
}

fn induced(g: &Mat4, n: &RayNode) -> Result<Induced> {
    let mut gamma = [[0.0; 2]; 2];
    let mut chi = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            gamma[a][b] = dot(g, &n.jac[a], &n.jac[b]);
            chi[a][b] = dot(g, &n.dl[a], &n.jac[b]);
        }
    }
    let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
    if !(det > 0.0) {
        return Err(Error::Frame(format!("degenerate cone section at x = {:?}", n.x)));
    }
    let gamma_inv = [[gamma[1][1] / det, -gamma[0][1] / det], [-gamma[1][0] / det, gamma[0][0] / det]];
    let n0 = gamma[0][0].sqrt();
    let p = gamma[0][1] / n0;
    let n1 = (gamma[1][1] - p * p).sqrt();
    let c = [[1.0 / n0, 0.0], [-p / (n0 * n1), 1.0 / n1]];
    Ok(Induced { gamma_inv, chi, c, det })
}

impl Induced {
    fn trace(&self, m: &[[f64; 2]; 2]) -> f64 {
        let mut t = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                t += self.gamma_inv[a][b] * m[a][b];
            }
        }
        t
    }

    /// Components in the orthonormal frame.
    fn frame_components(&self, m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut o = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        o[a][b] += self.c[a][p] * self.c[b][q] * m[p][q];
                    }
                }
            }
        }
        o
    }

    fn frame_vector(&self, a: usize, v: &[Vec4; 2]) -> Vec4 {
        axpy(self.c[a][1], &v[1], &scale(self.c[a][0], &v[0]))
    }
}

/// Induced geometry of the affine sphere through a node in the Jacobi
/// basis `J_A`: inverse metric γ^{AB}, the coefficients of the orthonormal
/// frame `e_a = c[a][A] J_A`, and the area density `√det γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereBasis {
    pub gamma_inv: [[f64; 2]; 2],
    pub c: [[f64; 2]; 2],
    pub area: f64,
}

pub fn sphere_basis(chart: &dyn SpacetimeChart, node: &RayNode) -> Result<SphereBasis> {
    let ind = induced(&chart.metric(&node.x), node)?;
    Ok(SphereBasis { gamma_inv: ind.gamma_inv, c: ind.c, area: ind.det.sqrt() })
}

/// `√det γ_AB` at a node.
pub(crate) fn area_density(chart: &dyn SpacetimeChart, n: &RayNode) -> Result<f64> {
    let g = chart.metric(&n.x);
    let d = dot(&g, &n.jac[0], &n.jac[0]) * dot(&g, &n.jac[1], &n.jac[1]) - dot(&g, &n.jac[0], &n.jac[1]).powi(2);
    Ok(d.max(0.0).sqrt())
}

/// Frame adapted to the affine spheres: `e_a` orthonormalised from the
/// Jacobi fields and L̄ the conjugate null normal with g(L, L̄) = −2.
pub fn sphere_frame(chart: &dyn SpacetimeChart, node: &RayNode) -> Result<NullFrame> {
    let g = chart.metric(&node.x);
    let ind = induced(&g, node)?;
    sphere_frame_with(&g, node, &ind)
}

fn sphere_frame_with(g: &Mat4, node: &RayNode, ind: &Induced) -> Result<NullFrame> {
    let e = [ind.frame_vector(0, &node.jac), ind.frame_vector(1, &node.jac)];
    let that = unit_normal(&inverse_metric(g, &node.x)?);
    let mut v = that;
    for ea in &e {
        v = axpy(-dot(g, &v, ea), ea, &v);
    }
    let gvl = dot(g, &v, &node.l);
    if gvl.abs() < 1e-14 {
        return Err(Error::Frame("slice normal is tangent to the cone".into()));
    }
    let alpha = -2.0 / gvl;
    let beta = -alpha * dot(g, &v, &v) / (2.0 * gvl);
    Ok(NullFrame { l: node.l, lbar: axpy(beta, &node.l, &scale(alpha, &v)), e })
}

/// Optical scalars of the affine sphere through a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OpticalScalars {
    pub s: f64,
    pub tr_chi: f64,
    /// Traceless part of χ in the sphere frame.
    pub chi_hat: [[f64; 2]; 2],
    /// `|χ_12 − χ_21|` in the sphere frame.
    pub chi_antisymmetry: f64,
    /// Area density `J(s, ω)`.
    pub area: f64,
    /// Null lapse `φ = 1/g(t̂, L)`.
    pub lapse: f64,
    /// Torsion `ζ_a = ½ g(∇_{e_a}L, L̄)` in the sphere frame.
    pub zeta: [f64; 2],
}

impl OpticalScalars {
    pub fn chi_hat_norm(&self) -> f64 {
        self.chi_hat.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Optical scalars from the node data of a ray at affine parameter `s`,
/// without the vertex policy.
pub fn node_optics(chart: &dyn SpacetimeChart, node: &RayNode, s: f64) -> Result<OpticalScalars> {
    raw_optics(chart, node, s)
}

fn raw_optics(chart: &dyn SpacetimeChart, n: &RayNode, s: f64) -> Result<OpticalScalars> {
    let g = chart.metric(&n.x);
    let that = unit_normal(&inverse_metric(&g, &n.x)?);
    let ind = induced(&g, n)?;
    let tr_chi = ind.trace(&ind.chi);
    let cf = ind.frame_components(&ind.chi);
    let sym = 0.5 * (cf[0][1] + cf[1][0]);
    let half = 0.5 * (cf[0][0] + cf[1][1]);
    let chi_hat = [[cf[0][0] - half, sym], [sym, cf[1][1] - half]];
    let frame = sphere_frame_with(&g, n, &ind)?;
    let mut zeta = [0.0; 2];
    for (a, z) in zeta.iter_mut().enumerate() {
        *z = 0.5 * dot(&g, &ind.frame_vector(a, &n.dl), &frame.lbar);
    }
    Ok(OpticalScalars {
        s,
        tr_chi,
        chi_hat,
        chi_antisymmetry: (cf[0][1] - cf[1][0]).abs(),
        area: ind.det.sqrt(),
        lapse: 1.0 / dot(&g, &that, &n.l),
        zeta,
    })
}

/// Connection scalars needing derivatives across rays and across cones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConnectionScalars {
    pub zeta: [f64; 2],
    /// `ω = −¼ g(∇_{L̄}L̄, L)`.
    pub omega: f64,
    /// Mass aspect `μ = ∇_{L̄}trχ + ½ trχ trχ̲ + 2ω trχ`.
    pub mu: f64,
    pub tr_chibar: f64,
    pub lapse: f64,
}

/// Cones whose vertices sit at proper times ±δ along the observer geodesic
/// through the vertex; they supply derivatives transverse to the cone.
pub struct Neighbours<'c> {
    pub delta: f64,
    pub minus: NullConeBundle<'c>,
    pub plus: NullConeBundle<'c>,
}

impl<'c> NullConeBundle<'c> {
    fn first_regular_shell(&self) -> usize {
        self.shells.iter().position(|&s| s >= self.s_min()).unwrap_or(self.shells.len() - 1).max(1)
    }

    /// Optical scalars at a node. Below `s_min` the flat leading behaviour
    /// is used: trχ = 2/s, J = s², χ̂ = ζ = 0 and φ frozen at `s_min`.
    pub fn optical_scalars(&self, ray: usize, shell: usize) -> Result<OpticalScalars> {
        let s = self.shells[shell];
        if s < self.s_min() {
            let k = self.first_regular_shell();
            let lapse = raw_optics(self.chart, self.node(ray, k), self.shells[k])?.lapse;
            return Ok(OpticalScalars {
                s,
                tr_chi: 2.0 / s,
                chi_hat: [[0.0; 2]; 2],
                chi_antisymmetry: 0.0,
                area: s * s,
                lapse,
                zeta: [0.0; 2],
            });
        }
        raw_optics(self.chart, self.node(ray, shell), s)
    }

    /// Optical scalars evaluated from the node data at any `s > 0`,
    /// bypassing the vertex policy.
    pub fn optical_scalars_raw(&self, ray: usize, shell: usize) -> Result<OpticalScalars> {
        raw_optics(self.chart, self.node(ray, shell), self.shells[shell])
    }

    pub fn null_frame(&self, ray: usize, shell: usize) -> Result<NullFrame> {
        null_frame(self.chart, self.node(ray, shell))
    }

    pub fn sphere_frame(&self, ray: usize, shell: usize) -> Result<NullFrame> {
        sphere_frame(self.chart, self.node(ray, shell))
    }

    /// Largest pairing residual of both null frames over all live nodes
    /// with `s > 0`.
    pub fn max_frame_residual(&self, exec: Exec) -> Result<f64> {
        let per_ray = exec.map(self.n_rays(), |i| -> Result<f64> {
            let mut worst = 0.0f64;
            for k in 1..self.rays[i].nodes.len() {
                let n = self.node(i, k);
                let g = self.chart.metric(&n.x);
                worst = worst.max(frame_pairing_residual(&g, &null_frame(self.chart, n)?));
                worst = worst.max(frame_pairing_residual(&g, &sphere_frame(self.chart, n)?));
            }
            Ok(worst)
        });
        per_ray.into_iter().try_fold(0.0f64, |a, r| Ok(a.max(r?)))
    }

    /// Largest |g(L, L)| over all nodes.
    pub fn max_null_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in &self.rays {
            for n in &r.nodes {
                worst = worst.max(dot(&self.chart.metric(&n.x), &n.l, &n.l).abs());
            }
        }
        worst
    }

    /// Neighbouring cones for transverse derivatives.
    pub fn neighbours(&self, delta: f64, exec: Exec) -> Result<Neighbours<'c>> {
        let mut params = self.params.clone();
        params.slices.clear();
        let minus = Self::emanate(self.chart, self.vertex.shifted(self.chart, -delta)?, &params, exec)?;
        let plus = Self::emanate(self.chart, self.vertex.shifted(self.chart, delta)?, &params, exec)?;
        Ok(Neighbours { delta, minus, plus })
    }

    /// Connection scalars on shell `k` for every ray.
    pub fn connection_scalars(&self, shell: usize, nb: &Neighbours<'_>) -> Result<Vec<ConnectionScalars>> {
        let n = self.n_rays();
        let s = self.shells[shell];
        if s < self.s_min() {
            let k = self.first_regular_shell();
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let lapse = raw_optics(self.chart, self.node(i, k), self.shells[k])?.lapse;
                // flat cone: trχ̲ = −2/s, μ = ω = ζ = 0
                out.push(ConnectionScalars { zeta: [0.0; 2], omega: 0.0, mu: 0.0, tr_chibar: -2.0 / s, lapse });
            }
            return Ok(out);
        }
        for (name, b) in [("cone", self), ("past neighbour", &nb.minus), ("future neighbour", &nb.plus)] {
            if b.live_shells() <= shell {
                return Err(Error::Resolution(format!("{name} is truncated before s = {s}")));
            }
        }
        let chart = self.chart;
        let mut lbar = vec![[0.0; 4]; n];
        let mut trchi = vec![0.0; n];
        let mut optics = Vec::with_capacity(n);
        for i in 0..n {
            let node = self.node(i, shell);
            let g = chart.metric(&node.x);
            let ind = induced(&g, node)?;
            lbar[i] = sphere_frame_with(&g, node, &ind)?.lbar;
            let o = raw_optics(chart, node, s)?;
            trchi[i] = o.tr_chi;
            optics.push(o);
        }
        let grad = |f: &dyn Fn(usize) -> f64| {
            let v: Vec<f64> = (0..n).map(f).collect();
            self.grid.gradient(&v)
        };
        let dlbar: Vec<(Vec<f64>, Vec<f64>)> = (0..4).map(|m| grad(&|i| lbar[i][m])).collect();
        let dtr = grad(&|i| trchi[i]);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let node = self.node(i, shell);
            let g = chart.metric(&node.x);
            let gam = christoffel(chart, &node.x)?;
            let ind = induced(&g, node)?;
            // ∇_{J_A} L̄ and χ̲
            let mut dlb = [[0.0; 4]; 2];
            for (a, d) in dlb.iter_mut().enumerate() {
                let mut v = [0.0; 4];
                for m in 0..4 {
                    v[m] = if a == 0 { dlbar[m].0[i] } else { dlbar[m].1[i] };
                }
                *d = axpy(1.0, &contract_gamma(&gam, &node.jac[a], &lbar[i]), &v);
            }
            let mut chibar = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    chibar[a][b] = dot(&g, &dlb[a], &node.jac[b]);
                }
            }
            let tr_chibar = ind.trace(&chibar);
            // transverse variation across the cone family
            let (np, nm) = (nb.plus.node(i, shell), nb.minus.node(i, shell));
            let h = 2.0 * nb.delta;
            let y = scale(1.0 / h, &sub(&np.x, &nm.x));
            let du_l = scale(1.0 / h, &sub(&np.l, &nm.l));
            let dy_l = axpy(1.0, &contract_gamma(&gam, &y, &node.l), &du_l);
            let du_tr = (raw_optics(chart, np, s)?.tr_chi - raw_optics(chart, nm, s)?.tr_chi) / h;
            // L̄ = a Y + b L + c^A J_A
            let mut m = [[0.0; 4]; 4];
            for r in 0..4 {
                m[r] = [y[r], node.l[r], node.jac[0][r], node.jac[1][r]];
            }
            let coef = solve4(&m, &lbar[i])
                .ok_or_else(|| Error::Frame(format!("cone family degenerate at ray {i}, s = {s}")))?;
            let dlbar_l = axpy(coef[3], &node.dl[1], &axpy(coef[2], &node.dl[0], &scale(coef[0], &dy_l)));
            let omega = 0.25 * dot(&g, &lbar[i], &dlbar_l);
            // Raychaudhuri: d trχ/ds = −|χ|² − Ric(L, L)
            let cf = ind.frame_components(&ind.chi);
            let chi_sq: f64 = cf.iter().flatten().map(|v| v * v).sum();
            let ric = riemann(chart, &node.x)?.ricci;
            let ric_ll = dot(&ric, &node.l, &node.l);
            let ds_tr = -chi_sq - ric_ll;
            let dlbar_tr = coef[0] * du_tr + coef[1] * ds_tr + coef[2] * dtr.0[i] + coef[3] * dtr.1[i];
            let tr = trchi[i];
            out.push(ConnectionScalars {
                zeta: optics[i].zeta,
                omega,
                mu: dlbar_tr + 0.5 * tr * tr_chibar + 2.0 * omega * tr,
                tr_chibar,
                lapse: optics[i].lapse,
            });
        }
        Ok(out)
    }
}

/// `g(L, t̂)` for a node, positive for past-directed L.
pub fn cone_normal(chart: &dyn SpacetimeChart, n: &RayNode) -> Result<f64> {
    let g = chart.metric(&n.x);
    Ok(dot(&g, &n.l, &unit_normal(&inverse_metric(&g, &n.x)?)))
}
