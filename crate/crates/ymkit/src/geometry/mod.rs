//! Metric, Levi-Civita connection, curvature, frames and the auxiliary
//! Riemannian metric `h = g + 2 t̂♭⊗t̂♭`.
//!
//! Conventions: `R^ρ_{σμν} = ∂_μΓ^ρ_{νσ} − ∂_νΓ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ} − Γ^ρ_{νλ}Γ^λ_{μσ}`,
//! `R_{αβμν} = g_{αρ}R^ρ_{βμν}` so that `R(X,Y,U,V) = g(X, [∇_U,∇_V]Y)`,
//! and `R_{μν} = R^γ_{μγν}`.

pub mod charts;
pub mod dual;
pub mod tensor;

pub use charts::{
    AnalyticMetric, FdChart, Flrw, MetricJet, Minkowski, Schwarzschild, SchwarzschildIsotropic, SpacetimeChart,
};
pub use tensor::{add, axpy, dot, lower, max_abs, scale, solve4, sub, Christoffel, Mat4, Rank4, Vec4, ZERO4, ZERO44};

use crate::{Error, Result};
use nalgebra::SymmetricEigen;
use tensor::*;

/// Determinant threshold below which the metric is treated as degenerate.
pub const DEGENERATE_DET: f64 = 1e-12;

/// Inverse metric; fails on `|det g| < 1e-12`.
pub fn inverse_metric(g: &Mat4, x: &Vec4) -> Result<Mat4> {
    let m = to_na(g);
    let d = m.determinant();
    if d.abs() < DEGENERATE_DET || !d.is_finite() {
        return Err(Error::DegenerateMetric { point: *x, det: d });
    }
    let inv = m.try_inverse().ok_or(Error::DegenerateMetric { point: *x, det: d })?;
    Ok(from_na(&inv))
}

fn checked(chart: &dyn SpacetimeChart, x: &Vec4) -> Result<()> {
    if chart.contains(x) {
        Ok(())
    } else {
        Err(Error::OutsideChart { chart: chart.name(), point: *x })
    }
}

fn gamma_from(ginv: &Mat4, dg: &[Mat4; 4]) -> Christoffel {
    let mut lowered = [[[0.0; 4]; 4]; 4]; // Γ_{δαβ}
    for d in 0..4 {
        for a in 0..4 {
            for b in a..4 {
                let v = 0.5 * (dg[a][d][b] + dg[b][d][a] - dg[d][a][b]);
                lowered[d][a][b] = v;
                lowered[d][b][a] = v;
            }
        }
    }
    let mut gam = [[[0.0; 4]; 4]; 4];
    for c in 0..4 {
        for a in 0..4 {
            for b in a..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += ginv[c][d] * lowered[d][a][b];
                }
                gam[c][a][b] = s;
                gam[c][b][a] = s;
            }
        }
    }
    gam
}

/// Christoffel symbols `Γ[γ][α][β]` = Γ^γ_{αβ}.
pub fn christoffel(chart: &dyn SpacetimeChart, x: &Vec4) -> Result<Christoffel> {
    checked(chart, x)?;
    let (g, dg) = chart.first_jet(x);
    let ginv = inverse_metric(&g, x)?;
    Ok(gamma_from(&ginv, &dg))
}

/// Metric, inverse, Christoffels and their first derivatives at a point.
#[derive(Clone, Debug)]
pub struct ConnectionJet {
    pub g: Mat4,
    pub ginv: Mat4,
    pub gamma: Christoffel,
    /// `dgamma[μ][γ][α][β]` = ∂_μ Γ^γ_{αβ}.
    pub dgamma: [Christoffel; 4],
}

pub fn connection_jet(chart: &dyn SpacetimeChart, x: &Vec4) -> Result<ConnectionJet> {
    checked(chart, x)?;
    let jet = chart.second_jet(x);
    let ginv = inverse_metric(&jet.g, x)?;
    let gamma = gamma_from(&ginv, &jet.dg);
    let mut dgamma = [[[[0.0; 4]; 4]; 4]; 4];
    for m in 0..4 {
        // ∂_m g^{cd} = −g^{ca} ∂_m g_{ab} g^{bd}
        let mut dginv = ZERO44;
        for c in 0..4 {
            for d in 0..4 {
                let mut s = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        s -= ginv[c][a] * jet.dg[m][a][b] * ginv[b][d];
                    }
                }
                dginv[c][d] = s;
            }
        }
        for c in 0..4 {
            for a in 0..4 {
                for b in a..4 {
                    let mut s = 0.0;
                    for d in 0..4 {
                        let low = 0.5 * (jet.dg[a][d][b] + jet.dg[b][d][a] - jet.dg[d][a][b]);
                        let dlow = 0.5 * (jet.ddg[m][a][d][b] + jet.ddg[m][b][d][a] - jet.ddg[m][d][a][b]);
                        s += dginv[c][d] * low + ginv[c][d] * dlow;
                    }
                    dgamma[m][c][a][b] = s;
                    dgamma[m][c][b][a] = s;
                }
            }
        }
    }
    Ok(ConnectionJet { g: jet.g, ginv, gamma, dgamma })
}

/// Riemann and Ricci tensors at a point.
#[derive(Clone, Debug)]
pub struct CurvatureTensors {
    /// `riemann[α][β][μ][ν]` = R_{αβμν}.
    pub riemann: Rank4,
    pub ricci: Mat4,
    pub g: Mat4,
    pub ginv: Mat4,
}

impl CurvatureTensors {
    /// Mixed `R^ρ_{σμν}`.
    pub fn mixed(&self) -> Rank4 {
        let mut out = [[[[0.0; 4]; 4]; 4]; 4];
        for r in 0..4 {
            for s in 0..4 {
                for m in 0..4 {
                    for n in 0..4 {
                        let mut v = 0.0;
                        for a in 0..4 {
                            v += self.ginv[r][a] * self.riemann[a][s][m][n];
                        }
                        out[r][s][m][n] = v;
                    }
                }
            }
        }
        out
    }

    /// `R_{αβμν}R^{αβμν}`.
    pub fn kretschmann(&self) -> f64 {
        let gi = &self.ginv;
        let r = &self.riemann;
        // raise one index at a time to keep the contraction O(4^5)
        let mut up = *r;
        for slot in 0..4 {
            let mut next = [[[[0.0; 4]; 4]; 4]; 4];
            for i0 in 0..4 {
                for i1 in 0..4 {
                    for i2 in 0..4 {
                        for i3 in 0..4 {
                            let mut s = 0.0;
                            for k in 0..4 {
                                let mut idx = [i0, i1, i2, i3];
                                let gik = gi[idx[slot]][k];
                                idx[slot] = k;
                                s += gik * up[idx[0]][idx[1]][idx[2]][idx[3]];
                            }
                            next[i0][i1][i2][i3] = s;
                        }
                    }
                }
            }
            up = next;
        }
        let mut k = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    for n in 0..4 {
                        k += r[a][b][m][n] * up[a][b][m][n];
                    }
                }
            }
        }
        k
    }

    /// Largest violation of antisymmetry, pair symmetry and the first Bianchi identity.
    pub fn symmetry_residual(&self) -> f64 {
        let r = &self.riemann;
        let mut worst = 0.0f64;
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    for n in 0..4 {
                        worst = worst
                            .max((r[a][b][m][n] + r[b][a][m][n]).abs())
                            .max((r[a][b][m][n] + r[a][b][n][m]).abs())
                            .max((r[a][b][m][n] - r[m][n][a][b]).abs())
                            .max((r[a][b][m][n] + r[a][m][n][b] + r[a][n][b][m]).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Riemann tensor from a connection jet.
pub fn riemann_from_jet(cj: &ConnectionJet) -> CurvatureTensors {
    let gam = &cj.gamma;
    let dg = &cj.dgamma;
    let mut mixed = [[[[0.0; 4]; 4]; 4]; 4];
    for r in 0..4 {
        for s in 0..4 {
            for m in 0..4 {
                for n in (m + 1)..4 {
                    let mut v = dg[m][r][n][s] - dg[n][r][m][s];
                    for l in 0..4 {
                        v += gam[r][m][l] * gam[l][n][s] - gam[r][n][l] * gam[l][m][s];
                    }
                    mixed[r][s][m][n] = v;
                    mixed[r][s][n][m] = -v;
                }
            }
        }
    }
    let mut riemann = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for s in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    let mut v = 0.0;
                    for r in 0..4 {
                        v += cj.g[a][r] * mixed[r][s][m][n];
                    }
                    riemann[a][s][m][n] = v;
                }
            }
        }
    }
    let mut ricci = ZERO44;
    for m in 0..4 {
        for n in 0..4 {
            let mut v = 0.0;
            for c in 0..4 {
                v += mixed[c][m][c][n];
            }
            ricci[m][n] = v;
        }
    }
    CurvatureTensors { riemann, ricci, g: cj.g, ginv: cj.ginv }
}

pub fn riemann(chart: &dyn SpacetimeChart, x: &Vec4) -> Result<CurvatureTensors> {
    Ok(riemann_from_jet(&connection_jet(chart, x)?))
}

/// Largest |∇_γ g_{αβ}| computed from the chart's own derivatives.
pub fn metric_compatibility_residual(chart: &dyn SpacetimeChart, x: &Vec4) -> Result<f64> {
    let (g, dg) = chart.first_jet(x);
    let gam = christoffel(chart, x)?;
    let mut worst = 0.0f64;
    for c in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut v = dg[c][a][b];
                for l in 0..4 {
                    v -= gam[l][c][a] * g[l][b] + gam[l][c][b] * g[a][l];
                }
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// A vector field with first derivatives.
pub trait VectorField: Sync {
    fn value(&self, x: &Vec4) -> Vec4;
    /// `jac[μ][ν]` = ∂_μ T^ν.
    fn jacobian(&self, x: &Vec4) -> Mat4;
}

/// The coordinate field ∂/∂x^k.
#[derive(Clone, Copy, Debug)]
pub struct CoordinateField(pub usize);

impl VectorField for CoordinateField {
    fn value(&self, _x: &Vec4) -> Vec4 {
        let mut v = ZERO4;
        v[self.0] = 1.0;
        v
    }
    fn jacobian(&self, _x: &Vec4) -> Mat4 {
        ZERO44
    }
}

/// The normalised time field t̂ = (−g_tt)^{−1/2} ∂_t of a chart.
pub struct UnitTimeField<'a>(pub &'a dyn SpacetimeChart);

impl VectorField for UnitTimeField<'_> {
    fn value(&self, x: &Vec4) -> Vec4 {
        unit_time(self.0, x)
    }
    fn jacobian(&self, x: &Vec4) -> Mat4 {
        let (g, dg) = self.0.first_jet(x);
        let n = (-g[0][0]).sqrt();
        let mut j = ZERO44;
        for (m, row) in j.iter_mut().enumerate() {
            // ∂_m (−g_tt)^{-1/2} = ½ (−g_tt)^{-3/2} ∂_m g_tt
            row[0] = 0.5 * dg[m][0][0] / (n * n * n);
        }
        j
    }
}

/// t̂ = (−g_tt)^{−1/2} ∂_t.
pub fn unit_time(chart: &dyn SpacetimeChart, x: &Vec4) -> Vec4 {
    let g = chart.metric(x);
    [1.0 / (-g[0][0]).sqrt(), 0.0, 0.0, 0.0]
}

/// ∇_μ T^ν for a vector field.
pub fn covariant_jacobian(chart: &dyn SpacetimeChart, x: &Vec4, field: &dyn VectorField) -> Result<Mat4> {
    let gam = christoffel(chart, x)?;
    let t = field.value(x);
    let mut out = field.jacobian(x);
    for (m, row) in out.iter_mut().enumerate() {
        for (n, v) in row.iter_mut().enumerate() {
            for l in 0..4 {
                *v += gam[n][m][l] * t[l];
            }
        }
    }
    Ok(out)
}

/// Deformation tensor π^{μν} = ½(∇^μT^ν + ∇^νT^μ).
pub fn deformation_tensor(chart: &dyn SpacetimeChart, x: &Vec4, field: &dyn VectorField) -> Result<Mat4> {
    let cov = covariant_jacobian(chart, x, field)?;
    let ginv = inverse_metric(&chart.metric(x), x)?;
    let mut up = ZERO44; // ∇^μ T^ν
    for m in 0..4 {
        for n in 0..4 {
            for a in 0..4 {
                up[m][n] += ginv[m][a] * cov[a][n];
            }
        }
    }
    let mut pi = ZERO44;
    for m in 0..4 {
        for n in 0..4 {
            pi[m][n] = 0.5 * (up[m][n] + up[n][m]);
        }
    }
    Ok(pi)
}

/// Orthonormal frame {t̂, n, e_a, e_b}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub t: Vec4,
    pub n: Vec4,
    pub ea: Vec4,
    pub eb: Vec4,
}

impl Frame {
    pub fn vectors(&self) -> [Vec4; 4] {
        [self.t, self.n, self.ea, self.eb]
    }

    /// Largest deviation of the Gram matrix from diag(−1, 1, 1, 1).
    pub fn gram_residual(&self, g: &Mat4) -> f64 {
        let v = self.vectors();
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let target = if i != j {
                    0.0
                } else if i == 0 {
                    -1.0
                } else {
                    1.0
                };
                worst = worst.max((dot(g, &v[i], &v[j]) - target).abs());
            }
        }
        worst
    }
}

/// Gram-Schmidt against g starting from a timelike hint, then the spatial
/// coordinate directions.
pub fn orthonormal_frame(chart: &dyn SpacetimeChart, x: &Vec4, hint: &Vec4) -> Result<Frame> {
    checked(chart, x)?;
    let g = chart.metric(x);
    gram_schmidt(&g, hint)
}

pub(crate) fn gram_schmidt(g: &Mat4, hint: &Vec4) -> Result<Frame> {
    let tt = dot(g, hint, hint);
    if !(tt < -1e-14) {
        return Err(Error::Frame(format!("hint {hint:?} is not timelike (g(v,v) = {tt:e})")));
    }
    let mut basis: Vec<Vec4> = vec![scale(1.0 / (-tt).sqrt(), hint)];
    let mut signs = vec![-1.0];
    for k in 0..4 {
        if basis.len() == 4 {
            break;
        }
        let mut v = ZERO4;
        v[k] = 1.0;
        for (b, s) in basis.iter().zip(&signs) {
            let c = dot(g, &v, b) * s;
            v = axpy(-c, b, &v);
        }
        let nn = dot(g, &v, &v);
        if nn > 1e-10 {
            basis.push(scale(1.0 / nn.sqrt(), &v));
            signs.push(1.0);
        }
    }
    if basis.len() < 4 {
        return Err(Error::Frame("could not complete the spatial triad".into()));
    }
    Ok(Frame { t: basis[0], n: basis[1], ea: basis[2], eb: basis[3] })
}

/// The positive definite metric h = g + 2 t̂♭ ⊗ t̂♭.
#[derive(Clone, Copy, Debug)]
pub struct RiemannianH {
    pub h: Mat4,
}

impl RiemannianH {
    pub fn eigenvalues(&self) -> [f64; 4] {
        let e = SymmetricEigen::new(to_na(&self.h)).eigenvalues;
        [e[0], e[1], e[2], e[3]]
    }

    /// `h_{αμ}h_{βν} n^{μν} n^{αβ}` for a matrix of component magnitudes.
    pub fn tensor_norm_sq(&self, n: &Mat4) -> f64 {
        let h = &self.h;
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    for v in 0..4 {
                        s += h[a][m] * h[b][v] * n[m][v] * n[a][b];
                    }
                }
            }
        }
        s
    }
}

pub fn h_metric(chart: &dyn SpacetimeChart, x: &Vec4, that: &Vec4) -> Result<RiemannianH> {
    let g = chart.metric(x);
    h_from_metric(&g, that)
}

pub fn h_from_metric(g: &Mat4, that: &Vec4) -> Result<RiemannianH> {
    let n = dot(g, that, that);
    if (n + 1.0).abs() > 1e-8 {
        return Err(Error::NotUnitTimelike(n));
    }
    let tl = lower(g, that);
    let mut h = *g;
    for a in 0..4 {
        for b in 0..4 {
            h[a][b] += 2.0 * tl[a] * tl[b];
        }
    }
    Ok(RiemannianH { h })
}
