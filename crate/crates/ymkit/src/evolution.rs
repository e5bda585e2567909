//! Temporal-gauge Yang-Mills evolution on periodic grids.
//!
//! The state is the pair (A_i, E_i) with A_0 = 0, so F_{0i} = ∂_tA_i = E_i.
//! Space is discretised with 4th-order centred differences on a periodic
//! 2- or 3-torus carrying a static spatial metric γ_ij (unit lapse, zero
//! shift). The right-hand side is the exact gradient of the lattice energy
//! H = Σ √γ [½γ^{ij}⟨E_i,E_j⟩ + ¼⟨B_ij,B^{ij}⟩] dV, so H is conserved by the
//! semi-discrete system and the only drift is the RK4 truncation error.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::stress_from_metric;
use crate::exec::{pairwise_sum, Exec};
use crate::fields::FieldSource;
use crate::geometry::{Mat4, Vec4};
use crate::liegauge::{Algebra, Elem, TwoForm};
use crate::{Error, Result};

/// Initial-data profiles accepted by [`Evolution::initial_data`].
pub const PROFILES: &[&str] = &["zero", "plane_wave", "pulse"];

const CHECKPOINT_MAGIC: &[u8; 8] = b"YMKEVOL\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Spatial pairs (a, b), a < b, in storage order of B_ab.
const SPATIAL_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// A periodic cube [0, length)^dim with n nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Torus {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Torus {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        let t = Self { dim, n, length };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(2..=3).contains(&self.dim) {
            errs.push(format!("grid.dim = {}: only 2 and 3 are supported", self.dim));
        }
        if self.n < 8 {
            errs.push(format!("grid.n = {}: at least 8 nodes per axis are needed", self.n));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            errs.push(format!("grid.length = {}: must be positive", self.length));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        (0..self.dim).map(|a| (c[a] % self.n) * self.stride(a)).sum()
    }

    pub fn coords(&self, p: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for (a, ca) in c.iter_mut().enumerate().take(self.dim) {
            *ca = (p / self.stride(a)) % self.n;
        }
        c
    }

    /// Spatial position of node p; the unused axis of a 2-torus is 0.
    pub fn position(&self, p: usize) -> [f64; 3] {
        let c = self.coords(p);
        std::array::from_fn(|a| if a < self.dim { c[a] as f64 * self.dx() } else { 0.0 })
    }

    #[inline]
    fn shift(&self, p: usize, axis: usize, o: isize) -> usize {
        let s = self.stride(axis);
        let c = (p / s) % self.n;
        let m = (c as isize + o).rem_euclid(self.n as isize) as usize;
        p + m * s - c * s
    }
}

/// Static spatial metric on the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialMetric {
    #[default]
    Flat,
    /// γ_ij = ψ⁴δ_ij with ψ = 1 + amplitude·Π_a cos(2πx_a/L), |amplitude| < 1.
    Conformal { amplitude: f64 },
}

impl SpatialMetric {
    /// γ_ij at x; the unused axis of a 2-torus keeps γ_33 = 1.
    pub fn at(&self, torus: &Torus, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for (a, row) in g.iter_mut().enumerate() {
            row[a] = 1.0;
        }
        if let SpatialMetric::Conformal { amplitude } = *self {
            let k = 2.0 * std::f64::consts::PI / torus.length;
            let prod: f64 = (0..torus.dim).map(|a| (k * x[a]).cos()).product();
            let psi4 = (1.0 + amplitude * prod).powi(4);
            for (a, row) in g.iter_mut().enumerate().take(torus.dim) {
                row[a] = psi4;
            }
        }
        g
    }
}

struct Geometry {
    g: Vec<[[f64; 3]; 3]>,
    ginv: Vec<[[f64; 3]; 3]>,
    sqrt_g: Vec<f64>,
}

/// Cauchy data (A_i, E_i) on the torus; components with i ≥ dim stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyData {
    pub a: Vec<[Elem; 3]>,
    pub e: Vec<[Elem; 3]>,
}

impl CauchyData {
    pub fn zeros(points: usize) -> Self {
        Self { a: vec![[Elem::ZERO; 3]; points], e: vec![[Elem::ZERO; 3]; points] }
    }

    fn axpy(&self, h: f64, d: &CauchyData) -> CauchyData {
        let f = |x: &[Elem; 3], y: &[Elem; 3]| std::array::from_fn(|i| x[i] + y[i] * h);
        CauchyData {
            a: self.a.iter().zip(&d.a).map(|(x, y)| f(x, y)).collect(),
            e: self.e.iter().zip(&d.e).map(|(x, y)| f(x, y)).collect(),
        }
    }

    fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.e).all(|v| v.iter().all(|x| x.0.iter().all(|c| c.is_finite())))
    }
}

/// A point of the evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub step: u64,
    pub fields: CauchyData,
}

impl EvolutionState {
    pub fn new(fields: CauchyData, t: f64) -> Self {
        Self { t, step: 0, fields }
    }
}

/// One row of the diagnostics series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub step: u64,
    pub t: f64,
    pub energy: f64,
    pub constraint: f64,
    pub max_field: f64,
}

/// The discretised system: torus, algebra, static metric and options.
pub struct Evolution {
    pub torus: Torus,
    pub alg: Algebra,
    pub metric: SpatialMetric,
    /// Kreiss-Oliger coefficient σ; the term σ/(64dx)·Σ_a δ_a⁶ is added to both fields.
    pub dissipation: f64,
    pub exec: Exec,
    geom: Option<Geometry>,
    max_speed: f64,
}

#[inline]
fn d1(f: impl Fn(isize) -> Elem, inv12dx: f64) -> Elem {
    (f(-2) - f(-1) * 8.0 + f(1) * 8.0 - f(2)) * inv12dx
}

#[inline]
fn d6(f: impl Fn(isize) -> Elem) -> Elem {
    f(-3) + f(3) - (f(-2) + f(2)) * 6.0 + (f(-1) + f(1)) * 15.0 - f(0) * 20.0
}

fn inverse3(g: &[[f64; 3]; 3], x: &[f64; 3]) -> Result<([[f64; 3]; 3], f64)> {
    let m = nalgebra::Matrix3::from_fn(|i, j| g[i][j]);
    let det = m.determinant();
    let degenerate = || Error::DegenerateMetric { point: [0.0, x[0], x[1], x[2]], det };
    if !(det > 0.0) {
        return Err(degenerate());
    }
    let inv = m.try_inverse().ok_or_else(degenerate)?;
    Ok((std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)])), det))
}

impl Evolution {
    pub fn new(torus: Torus, alg: Algebra, metric: SpatialMetric, exec: Exec) -> Result<Self> {
        torus.validate()?;
        let geom = match metric {
            SpatialMetric::Flat => None,
            SpatialMetric::Conformal { amplitude } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(Error::Config(vec![format!(
                        "metric.amplitude = {amplitude}: |amplitude| < 1 is required"
                    )]));
                }
                let g: Vec<_> = (0..torus.points()).map(|p| metric.at(&torus, &torus.position(p))).collect();
                let mut ginv = Vec::with_capacity(g.len());
                let mut sqrt_g = Vec::with_capacity(g.len());
                for (p, gp) in g.iter().enumerate() {
                    let (inv, det) = inverse3(gp, &torus.position(p))?;
                    ginv.push(inv);
                    sqrt_g.push(det.sqrt());
                }
                Some(Geometry { g, ginv, sqrt_g })
            }
        };
        let max_speed = match &geom {
            None => 1.0,
            Some(gm) => gm
                .ginv
                .iter()
                .map(|m| nalgebra::Matrix3::from_fn(|i, j| m[i][j]).symmetric_eigenvalues().max().sqrt())
                .fold(0.0, f64::max),
        };
        Ok(Self { torus, alg, metric, dissipation: 0.0, exec, geom, max_speed })
    }

    pub fn with_dissipation(mut self, sigma: f64) -> Self {
        self.dissipation = sigma;
        self
    }

    /// Largest stable step: 0.5·dx over the fastest characteristic speed.
    pub fn cfl_limit(&self) -> f64 {
        0.5 * self.torus.dx() / self.max_speed
    }

    fn sqrt_g(&self, p: usize) -> f64 {
        self.geom.as_ref().map_or(1.0, |g| g.sqrt_g[p])
    }

    fn ginv(&self, p: usize) -> [[f64; 3]; 3] {
        self.geom.as_ref().map_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], |g| g.ginv[p])
    }

    fn gmat(&self, p: usize) -> [[f64; 3]; 3] {
        self.geom.as_ref().map_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], |g| g.g[p])
    }

    fn pairs(&self) -> &'static [(usize, usize)] {
        if self.torus.dim == 2 {
            &SPATIAL_PAIRS[..1]
        } else {
            &SPATIAL_PAIRS
        }
    }

    fn pair_index(a: usize, b: usize) -> (usize, f64) {
        match (a, b) {
            (0, 1) => (0, 1.0),
            (1, 0) => (0, -1.0),
            (0, 2) => (1, 1.0),
            (2, 0) => (1, -1.0),
            (1, 2) => (2, 1.0),
            (2, 1) => (2, -1.0),
            _ => unreachable!("diagonal pair"),
        }
    }

    fn partial(&self, field: &[[Elem; 3]], p: usize, axis: usize, comp: usize) -> Elem {
        let inv = 1.0 / (12.0 * self.torus.dx());
        d1(|o| field[self.torus.shift(p, axis, o)][comp], inv)
    }

    /// B_ab = ∂_aA_b − ∂_bA_a + [A_a, A_b] at every node, stored by spatial pair.
    pub fn magnetic(&self, a: &[[Elem; 3]]) -> Vec<[Elem; 3]> {
        let pairs = self.pairs();
        self.exec.map(self.torus.points(), |p| {
            let mut b = [Elem::ZERO; 3];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                b[k] = self.partial(a, p, i, j) - self.partial(a, p, j, i) + self.alg.bracket(&a[p][i], &a[p][j]);
            }
            b
        })
    }

    /// √γ B^{ab} by spatial pair.
    fn raised_magnetic(&self, b: Vec<[Elem; 3]>) -> Vec<[Elem; 3]> {
        if self.geom.is_none() {
            return b;
        }
        let pairs = self.pairs();
        self.exec.map(self.torus.points(), |p| {
            let gi = self.ginv(p);
            let s = self.sqrt_g(p);
            let mut q = [Elem::ZERO; 3];
            for (k, &(a, bb)) in pairs.iter().enumerate() {
                for (l, &(c, d)) in pairs.iter().enumerate() {
                    let w = gi[a][c] * gi[bb][d] - gi[a][d] * gi[bb][c];
                    if w != 0.0 {
                        q[k].axpy(s * w, &b[p][l]);
                    }
                }
            }
            q
        })
    }

    /// Time derivative of (A, E).
    pub fn rhs(&self, s: &CauchyData) -> CauchyData {
        let dim = self.torus.dim;
        let q = self.raised_magnetic(self.magnetic(&s.a));
        let ko = self.dissipation / (64.0 * self.torus.dx());
        let de = self.exec.map(self.torus.points(), |p| {
            let mut w = [Elem::ZERO; 3];
            for (b, wb) in w.iter_mut().enumerate().take(dim) {
                for a in (0..dim).filter(|&a| a != b) {
                    let (k, sign) = Self::pair_index(a, b);
                    let inv = sign / (12.0 * self.torus.dx());
                    *wb += d1(|o| q[self.torus.shift(p, a, o)][k], inv);
                    *wb += self.alg.bracket(&s.a[p][a], &q[p][k]) * sign;
                }
            }
            let mut out = if self.geom.is_none() {
                w
            } else {
                let g = self.gmat(p);
                let inv_s = 1.0 / self.sqrt_g(p);
                std::array::from_fn(|j| {
                    let mut v = Elem::ZERO;
                    for (b, wb) in w.iter().enumerate().take(dim) {
                        v.axpy(g[j][b] * inv_s, wb);
                    }
                    v
                })
            };
            if ko != 0.0 {
                for (j, o) in out.iter_mut().enumerate().take(dim) {
                    for a in 0..dim {
                        o.axpy(ko, &d6(|k| s.e[self.torus.shift(p, a, k)][j]));
                    }
                }
            }
            out
        });
        let da = if ko != 0.0 {
            self.exec.map(self.torus.points(), |p| {
                let mut v = s.e[p];
                for (j, vj) in v.iter_mut().enumerate().take(dim) {
                    for a in 0..dim {
                        vj.axpy(ko, &d6(|k| s.a[self.torus.shift(p, a, k)][j]));
                    }
                }
                v
            })
        } else {
            s.e.clone()
        };
        CauchyData { a: da, e: de }
    }

    /// One classical RK4 step.
    pub fn step(&self, state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
        let limit = self.cfl_limit();
        if !(dt > 0.0 && dt <= limit) {
            return Err(Error::Cfl { dt, limit });
        }
        let y = &state.fields;
        let k1 = self.rhs(y);
        let k2 = self.rhs(&y.axpy(0.5 * dt, &k1));
        let k3 = self.rhs(&y.axpy(0.5 * dt, &k2));
        let k4 = self.rhs(&y.axpy(dt, &k3));
        let n = y.a.len();
        let combine = |y: &[[Elem; 3]], k: [&[[Elem; 3]]; 4]| -> Vec<[Elem; 3]> {
            (0..n)
                .map(|p| {
                    std::array::from_fn(|i| {
                        y[p][i] + (k[0][p][i] + (k[1][p][i] + k[2][p][i]) * 2.0 + k[3][p][i]) * (dt / 6.0)
                    })
                })
                .collect()
        };
        let fields = CauchyData {
            a: combine(&y.a, [&k1.a, &k2.a, &k3.a, &k4.a]),
            e: combine(&y.e, [&k1.e, &k2.e, &k3.e, &k4.e]),
        };
        if !fields.is_finite() {
            return Err(Error::NonFinite(format!("evolution step {} at t = {}", state.step + 1, state.t + dt)));
        }
        Ok(EvolutionState { t: state.t + dt, step: state.step + 1, fields })
    }

    /// Take `steps` steps, calling `hook` on the initial state and after every `every` steps.
    pub fn advance(
        &self,
        mut state: EvolutionState,
        dt: f64,
        steps: u64,
        every: u64,
        mut hook: impl FnMut(&EvolutionState) -> Result<()>,
    ) -> Result<EvolutionState> {
        hook(&state)?;
        for k in 1..=steps {
            state = self.step(&state, dt)?;
            if every > 0 && k % every == 0 {
                hook(&state)?;
            }
        }
        Ok(state)
    }

    /// F on the grid as a spacetime two-form: F_{0i} = E_i, F_ij = B_ij.
    pub fn sample_f(&self, state: &EvolutionState) -> Vec<TwoForm> {
        let b = self.magnetic(&state.fields.a);
        let dim = self.torus.dim;
        self.exec.map(self.torus.points(), |p| {
            let mut f = TwoForm::ZERO;
            for i in 0..dim {
                f.set(0, i + 1, state.fields.e[p][i]);
            }
            for (k, &(a, c)) in self.pairs().iter().enumerate() {
                f.set(a + 1, c + 1, b[p][k]);
            }
            f
        })
    }

    /// Spacetime metric diag(−1, γ) at node p.
    pub fn spacetime_metric(&self, p: usize) -> (Mat4, Mat4) {
        let (g3, gi3) = (self.gmat(p), self.ginv(p));
        let mut g = [[0.0; 4]; 4];
        let mut gi = [[0.0; 4]; 4];
        g[0][0] = -1.0;
        gi[0][0] = -1.0;
        for i in 0..3 {
            for j in 0..3 {
                g[i + 1][j + 1] = g3[i][j];
                gi[i + 1][j + 1] = gi3[i][j];
            }
        }
        (g, gi)
    }

    /// ∫ T(∂_t, ∂_t) √γ dV, with T from the spacetime stress tensor.
    pub fn energy(&self, state: &EvolutionState) -> f64 {
        let f = self.sample_f(state);
        let dv = self.torus.cell_volume();
        let dens = self.exec.map(self.torus.points(), |p| {
            let (g, gi) = self.spacetime_metric(p);
            stress_from_metric(&self.alg, &f[p], &g, &gi)[0][0] * self.sqrt_g(p) * dv
        });
        pairwise_sum(&dens)
    }

    /// Gauss-law density (1/√γ)∂_i(√γE^i) + [A_i, E^i] at every node.
    pub fn gauss_law(&self, s: &CauchyData) -> Vec<Elem> {
        let dim = self.torus.dim;
        let up: Vec<[Elem; 3]> = if self.geom.is_none() {
            s.e.clone()
        } else {
            self.exec.map(self.torus.points(), |p| {
                let gi = self.ginv(p);
                let sg = self.sqrt_g(p);
                std::array::from_fn(|i| {
                    let mut v = Elem::ZERO;
                    for (j, ej) in s.e[p].iter().enumerate().take(dim) {
                        v.axpy(sg * gi[i][j], ej);
                    }
                    v
                })
            })
        };
        self.exec.map(self.torus.points(), |p| {
            let inv_s = 1.0 / self.sqrt_g(p);
            let mut g = Elem::ZERO;
            for i in 0..dim {
                g += self.partial(&up, p, i, i) * inv_s;
                g += self.alg.bracket(&s.a[p][i], &up[p][i]) * inv_s;
            }
            g
        })
    }

    /// L² norm of the Gauss-law density over the torus.
    pub fn constraint_residual(&self, state: &EvolutionState) -> f64 {
        let g = self.gauss_law(&state.fields);
        let dv = self.torus.cell_volume();
        let dens: Vec<f64> =
            g.iter().enumerate().map(|(p, x)| self.alg.norm(x).powi(2) * self.sqrt_g(p) * dv).collect();
        pairwise_sum(&dens).sqrt()
    }

    pub fn diagnostics(&self, state: &EvolutionState) -> Diagnostics {
        let max_field =
            self.sample_f(state).iter().flat_map(|f| f.0.iter().map(|e| self.alg.norm(e))).fold(0.0, f64::max);
        Diagnostics {
            step: state.step,
            t: state.t,
            energy: self.energy(state),
            constraint: self.constraint_residual(state),
            max_field,
        }
    }

    /// Build Cauchy data from a named profile.
    ///
    /// * `zero`.
    /// * `plane_wave`: A = amplitude·ε·sin(ωt − k·x + phase) along the first algebra
    ///   generator, with k = 2π(mx, my, mz)/L and ε ⊥ k; E = ∂_tA at t = 0.
    /// * `pulse`: A = 0 and, for each generator c, √γE^{c,i} the analytic curl of a
    ///   periodic bump ψ^c = amplitude·exp(κ Σ_a (cos(2π(x_a − x^c_a)/L) − 1))
    ///   centred at x^c = L(½ + offset·c, ½ − offset·c, ½).
    pub fn initial_data(&self, profile: &str, params: &BTreeMap<String, f64>) -> Result<CauchyData> {
        let allowed: &[&str] = match profile {
            "zero" => &[],
            "plane_wave" => &["amplitude", "mx", "my", "mz", "phase"],
            "pulse" => &["amplitude", "kappa", "offset"],
            _ => {
                return Err(Error::UnknownCatalogEntry {
                    kind: "initial-data profile",
                    name: profile.to_string(),
                    available: PROFILES.join(", "),
                })
            }
        };
        let unknown: Vec<String> = params
            .keys()
            .filter(|k| !allowed.contains(&k.as_str()))
            .map(|k| format!("initial data `{profile}`: unknown parameter `{k}`"))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let torus = self.torus;
        let dim = torus.dim;
        let tau = 2.0 * std::f64::consts::PI / torus.length;
        let mut data = CauchyData::zeros(torus.points());
        match profile {
            "plane_wave" => {
                let m = [get("mx", 1.0), get("my", 0.0), if dim == 3 { get("mz", 0.0) } else { 0.0 }];
                if m.iter().any(|v| v.fract() != 0.0) || m.iter().all(|&v| v == 0.0) {
                    return Err(Error::Config(vec!["plane_wave: mode numbers must be integers, not all zero".into()]));
                }
                if self.geom.is_some() {
                    return Err(Error::Config(vec!["plane_wave: requires the flat metric".into()]));
                }
                let k: [f64; 3] = std::array::from_fn(|a| tau * m[a]);
                let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                let eps = transverse(&k, dim);
                let (amp, phase) = (get("amplitude", 1.0), get("phase", 0.0));
                let gen = self.alg.basis(0);
                for p in 0..torus.points() {
                    let x = torus.position(p);
                    let arg = phase - (0..3).map(|a| k[a] * x[a]).sum::<f64>();
                    for i in 0..dim {
                        data.a[p][i] = gen * (amp * eps[i] * arg.sin());
                        data.e[p][i] = gen * (amp * eps[i] * kn * arg.cos());
                    }
                }
            }
            "pulse" => {
                let (amp, kappa, offset) = (get("amplitude", 1.0), get("kappa", 2.0), get("offset", 0.1));
                for c in 0..self.alg.dim() {
                    let centre = [
                        torus.length * (0.5 + offset * c as f64),
                        torus.length * (0.5 - offset * c as f64),
                        torus.length * 0.5,
                    ];
                    let gen = self.alg.basis(c);
                    for p in 0..torus.points() {
                        let x = torus.position(p);
                        let mut psi = amp;
                        for a in 0..dim {
                            psi *= (kappa * ((tau * (x[a] - centre[a])).cos() - 1.0)).exp();
                        }
                        let grad: [f64; 3] = std::array::from_fn(|a| {
                            if a < dim {
                                -psi * kappa * tau * (tau * (x[a] - centre[a])).sin()
                            } else {
                                0.0
                            }
                        });
                        let curl = if dim == 2 {
                            [grad[1], -grad[0], 0.0]
                        } else {
                            // ∇ψ × u with u cycling through the coordinate axes.
                            let u = c % 3;
                            let mut v = [0.0; 3];
                            v[(u + 2) % 3] = grad[(u + 1) % 3];
                            v[(u + 1) % 3] = -grad[(u + 2) % 3];
                            v
                        };
                        // The curl is the densitised √γE^i; lower it with γ_ij.
                        let (g, sg) = (self.gmat(p), self.sqrt_g(p));
                        for j in 0..dim {
                            let ej: f64 = (0..dim).map(|i| g[j][i] * curl[i]).sum::<f64>() / sg;
                            data.e[p][j] += gen * ej;
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(data)
    }
}

/// Unit polarization orthogonal to k (in the plane for dim 2).
fn transverse(k: &[f64; 3], dim: usize) -> [f64; 3] {
    let v = if dim == 2 {
        [-k[1], k[0], 0.0]
    } else {
        let axis = if k[0].abs() <= k[1].abs() && k[0].abs() <= k[2].abs() {
            [1.0, 0.0, 0.0]
        } else if k[1].abs() <= k[2].abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        [k[1] * axis[2] - k[2] * axis[1], k[2] * axis[0] - k[0] * axis[2], k[0] * axis[1] - k[1] * axis[0]]
    };
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.map(|x| x / n)
}

/// Write the diagnostics series as CSV.
pub fn write_diagnostics_csv(path: &Path, rows: &[Diagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a versioned binary checkpoint: header, then A and E as little-endian f64.
pub fn write_checkpoint(path: &Path, evo: &Evolution, state: &EvolutionState) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(evo.torus.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(evo.torus.n as u32).to_le_bytes());
    buf.extend_from_slice(&evo.torus.length.to_le_bytes());
    let name = evo.alg.name().as_bytes();
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name);
    buf.extend_from_slice(&state.t.to_le_bytes());
    buf.extend_from_slice(&state.step.to_le_bytes());
    for field in [&state.fields.a, &state.fields.e] {
        for v in field {
            for comp in v.iter().take(evo.torus.dim) {
                for x in &comp.0[..evo.alg.dim()] {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Read a checkpoint written by [`write_checkpoint`] for the same torus and algebra.
pub fn read_checkpoint(path: &Path, evo: &Evolution) -> Result<EvolutionState> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader { bytes: &bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not an evolution checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let (dim, n, length) = (r.u32()? as usize, r.u32()? as usize, r.f64()?);
    let name_len = r.u32()? as usize;
    let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
    if dim != evo.torus.dim || n != evo.torus.n || length != evo.torus.length || name != evo.alg.name() {
        return Err(Error::GridMismatch(format!(
            "checkpoint has dim {dim}, n {n}, length {length}, algebra {name}; expected dim {}, n {}, length {}, algebra {}",
            evo.torus.dim,
            evo.torus.n,
            evo.torus.length,
            evo.alg.name()
        )));
    }
    let t = r.f64()?;
    let step = r.u64()?;
    let mut fields = CauchyData::zeros(evo.torus.points());
    for field in [&mut fields.a, &mut fields.e] {
        for v in field.iter_mut() {
            for comp in v.iter_mut().take(dim) {
                for x in comp.0[..evo.alg.dim()].iter_mut() {
                    *x = r.f64()?;
                }
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(EvolutionState { t, step, fields })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length 4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("length 8")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("length 8")))
    }
}

/// Snapshot of a 3-torus evolution: A, F and ∂_tF per node, flattened.
struct Snapshot {
    t: f64,
    values: Vec<f64>,
}

/// A recorded 3+1 evolution usable as a [`FieldSource`] on flat space.
///
/// Fields are interpolated with periodic tensor-product cubic Lagrange
/// stencils in space and cubic Hermite (using ∂_tF and ∂_tA = E) in time
/// between uniformly spaced snapshots. Outside the recorded time span
/// every component is NaN.
pub struct History {
    alg: Algebra,
    torus: Torus,
    snapshots: Vec<Snapshot>,
    interval: f64,
}

/// Values per node and algebra component: A_1..3, F (6 pairs), ∂_tA_1..3, ∂_tF (6 pairs).
const HISTORY_SLOTS: usize = 18;

impl History {
    /// Evolve from `state`, storing a snapshot every `every` steps, `count` snapshots in total.
    pub fn record(evo: &Evolution, state: EvolutionState, dt: f64, every: u64, count: usize) -> Result<Self> {
        if evo.torus.dim != 3 {
            return Err(Error::GridMismatch("a field history needs a 3-torus".into()));
        }
        if evo.geom.is_some() {
            return Err(Error::Config(vec!["a field history needs the flat metric".into()]));
        }
        if count < 2 || every == 0 {
            return Err(Error::Config(vec!["a field history needs at least two snapshots".into()]));
        }
        let mut snapshots = Vec::with_capacity(count);
        let mut s = state;
        for k in 0..count {
            if k > 0 {
                for _ in 0..every {
                    s = evo.step(&s, dt)?;
                }
            }
            snapshots.push(Self::snapshot(evo, &s));
        }
        Ok(Self { alg: evo.alg.clone(), torus: evo.torus, snapshots, interval: dt * every as f64 })
    }

    pub fn time_span(&self) -> (f64, f64) {
        (self.snapshots[0].t, self.snapshots[self.snapshots.len() - 1].t)
    }

    fn snapshot(evo: &Evolution, s: &EvolutionState) -> Snapshot {
        let f = evo.sample_f(s);
        let rate = evo.rhs(&s.fields);
        let e = &s.fields.e;
        let a = &s.fields.a;
        let d = evo.alg.dim();
        let rows = evo.exec.map(evo.torus.points(), |p| {
            let mut fdot = TwoForm::ZERO;
            for i in 0..3 {
                fdot.set(0, i + 1, rate.e[p][i]);
            }
            for &(i, j) in &SPATIAL_PAIRS {
                let v = evo.partial(e, p, i, j) - evo.partial(e, p, j, i)
                    + evo.alg.bracket(&e[p][i], &a[p][j])
                    + evo.alg.bracket(&a[p][i], &e[p][j]);
                fdot.set(i + 1, j + 1, v);
            }
            let mut row = Vec::with_capacity(HISTORY_SLOTS * d);
            let slots = a[p].iter().chain(f[p].0.iter()).chain(rate.a[p].iter()).chain(fdot.0.iter());
            for el in slots {
                row.extend_from_slice(&el.0[..d]);
            }
            row
        });
        Snapshot { t: s.t, values: rows.concat() }
    }

    /// Interpolated slot values and their spatial gradient at x (one snapshot).
    fn spatial(&self, snap: &Snapshot, x: &[f64; 3], out: &mut [f64], grad: &mut [[f64; 3]]) {
        let d = self.alg.dim();
        let width = HISTORY_SLOTS * d;
        let h = self.torus.dx();
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        let mut dw = [[0.0; 4]; 3];
        for a in 0..3 {
            let u = x[a] / h;
            let i0 = u.floor();
            base[a] = i0 as isize - 1;
            let r = u - i0;
            // Lagrange nodes at −1, 0, 1, 2 relative to floor(u).
            let xs = [-1.0, 0.0, 1.0, 2.0];
            for j in 0..4 {
                let mut l = 1.0;
                let mut dl = 0.0;
                for m in 0..4 {
                    if m == j {
                        continue;
                    }
                    let den = xs[j] - xs[m];
                    let mut prod = 1.0 / den;
                    for q in 0..4 {
                        if q != j && q != m {
                            prod *= (r - xs[q]) / (xs[j] - xs[q]);
                        }
                    }
                    dl += prod;
                    l *= (r - xs[m]) / den;
                }
                w[a][j] = l;
                dw[a][j] = dl / h;
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        grad.iter_mut().for_each(|v| *v = [0.0; 3]);
        let n = self.torus.n as isize;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let c = [
                        (base[0] + i as isize).rem_euclid(n) as usize,
                        (base[1] + j as isize).rem_euclid(n) as usize,
                        (base[2] + k as isize).rem_euclid(n) as usize,
                    ];
                    let p = self.torus.index(c);
                    let row = &snap.values[p * width..(p + 1) * width];
                    let wv = w[0][i] * w[1][j] * w[2][k];
                    let wg = [dw[0][i] * w[1][j] * w[2][k], w[0][i] * dw[1][j] * w[2][k], w[0][i] * w[1][j] * dw[2][k]];
                    for (s, v) in row.iter().enumerate() {
                        out[s] += wv * v;
                        for a in 0..3 {
                            grad[s][a] += wg[a] * v;
                        }
                    }
                }
            }
        }
    }

    /// A_i, F and all first derivatives at a spacetime point, NaN outside the record.
    fn evaluate(&self, x: &Vec4) -> ([Elem; 4], TwoForm, [TwoForm; 4]) {
        let d = self.alg.dim();
        let half = HISTORY_SLOTS / 2 * d;
        let (t0, t1) = self.time_span();
        if !(x[0] >= t0 && x[0] <= t1) {
            let nan = Elem([f64::NAN; 6]);
            let f = TwoForm([nan; 6]);
            return ([nan; 4], f, [f; 4]);
        }
        let k = (((x[0] - t0) / self.interval).floor() as usize).min(self.snapshots.len() - 2);
        let h = self.interval;
        let r = (x[0] - self.snapshots[k].t) / h;
        // Cubic Hermite basis and its time derivative.
        let (h00, h10, h01, h11) = (
            2.0 * r.powi(3) - 3.0 * r * r + 1.0,
            r.powi(3) - 2.0 * r * r + r,
            -2.0 * r.powi(3) + 3.0 * r * r,
            r.powi(3) - r * r,
        );
        let (d00, d10, d01, d11) = (
            (6.0 * r * r - 6.0 * r) / h,
            3.0 * r * r - 4.0 * r + 1.0,
            (-6.0 * r * r + 6.0 * r) / h,
            3.0 * r * r - 2.0 * r,
        );
        let pos = [x[1], x[2], x[3]];
        let width = HISTORY_SLOTS * d;
        let mut v = [vec![0.0; width], vec![0.0; width]];
        let mut g = [vec![[0.0; 3]; width], vec![[0.0; 3]; width]];
        for m in 0..2 {
            let (vm, gm) = (&mut v[m], &mut g[m]);
            self.spatial(&self.snapshots[k + m], &pos, vm, gm);
        }
        let mut val = vec![0.0; half];
        let mut dt = vec![0.0; half];
        let mut dx = vec![[0.0; 3]; half];
        for s in 0..half {
            let (y0, y1, m0, m1) = (v[0][s], v[1][s], v[0][s + half], v[1][s + half]);
            val[s] = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
            dt[s] = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
            for a in 0..3 {
                let (g0, g1, gm0, gm1) = (g[0][s][a], g[1][s][a], g[0][s + half][a], g[1][s + half][a]);
                dx[s][a] = h00 * g0 + h10 * h * gm0 + h01 * g1 + h11 * h * gm1;
            }
        }
        let elem = |buf: &dyn Fn(usize) -> f64, slot: usize| {
            Elem::from_slice(&(0..d).map(|c| buf(slot * d + c)).collect::<Vec<_>>())
        };
        let mut a = [Elem::ZERO; 4];
        for i in 0..3 {
            a[i + 1] = elem(&|j| val[j], i);
        }
        let form = |buf: &dyn Fn(usize) -> f64| TwoForm(std::array::from_fn(|q| elem(buf, 3 + q)));
        let f = form(&|j| val[j]);
        let jet = [form(&|j| dt[j]), form(&|j| dx[j][0]), form(&|j| dx[j][1]), form(&|j| dx[j][2])];
        (a, f, jet)
    }
}

impl FieldSource for History {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }

    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        self.evaluate(x).0
    }

    fn field(&self, x: &Vec4) -> TwoForm {
        self.evaluate(x).1
    }

    fn field_jet(&self, x: &Vec4) -> (TwoForm, [TwoForm; 4]) {
        let (_, f, j) = self.evaluate(x);
        (f, j)
    }
}
