//! The Levi-Civita connection in an orthonormal frame, viewed as an
//! so(3,1)-valued gauge potential.

use super::algebra::{Elem, LORENTZ_PAIRS};
use super::PotentialField;
use crate::geometry::{christoffel, dot, Mat4, SpacetimeChart, Vec4, ZERO44};
use crate::{Error, Result};

/// A field of frames e_β(x) with coordinate derivatives.
pub trait FrameField: Sync {
    /// `frame[β]` is the coordinate vector e_β.
    fn frame(&self, x: &Vec4) -> Result<[Vec4; 4]>;
    /// `d[μ][β][ν]` = ∂_μ e_β^ν.
    fn derivative(&self, x: &Vec4) -> Result<[Mat4; 4]>;
}

/// e_β = |g_ββ|^{-1/2} ∂_β for a chart with diagonal metric.
pub struct DiagonalFrameField<'a> {
    pub chart: &'a dyn SpacetimeChart,
}

impl DiagonalFrameField<'_> {
    fn check(&self, g: &Mat4) -> Result<()> {
        for a in 0..4 {
            for b in 0..4 {
                if a != b && g[a][b].abs() > 1e-14 * (g[a][a].abs() + g[b][b].abs()) {
                    return Err(Error::Frame(format!("metric component g[{a}][{b}] = {:e} is not diagonal", g[a][b])));
                }
            }
        }
        if !(g[0][0] < 0.0 && g[1][1] > 0.0 && g[2][2] > 0.0 && g[3][3] > 0.0) {
            return Err(Error::Frame("metric diagonal does not have signature (-,+,+,+)".into()));
        }
        Ok(())
    }
}

impl FrameField for DiagonalFrameField<'_> {
    fn frame(&self, x: &Vec4) -> Result<[Vec4; 4]> {
        let g = self.chart.metric(x);
        self.check(&g)?;
        Ok(std::array::from_fn(|b| {
            let mut e = [0.0; 4];
            e[b] = 1.0 / g[b][b].abs().sqrt();
            e
        }))
    }

    fn derivative(&self, x: &Vec4) -> Result<[Mat4; 4]> {
        let (g, dg) = self.chart.first_jet(x);
        self.check(&g)?;
        Ok(std::array::from_fn(|m| {
            let mut d = ZERO44;
            for (b, row) in d.iter_mut().enumerate() {
                let a = g[b][b].abs();
                // ∂|g|^{-1/2} = −½ |g|^{-3/2} ∂|g|
                row[b] = -0.5 * g[b][b].signum() * dg[m][b][b] / (a * a.sqrt());
            }
            d
        }))
    }
}

/// (A_μ)_{αβ} = g(∇_μ e_β, e_α), packed by frame-index pair.
pub fn cartan_connection(chart: &dyn SpacetimeChart, frames: &dyn FrameField, x: &Vec4) -> Result<[Elem; 4]> {
    let e = frames.frame(x)?;
    let de = frames.derivative(x)?;
    let g = chart.metric(x);
    let eta = [-1.0, 1.0, 1.0, 1.0];
    for a in 0..4 {
        for b in 0..4 {
            let target = if a == b { eta[a] } else { 0.0 };
            let v = dot(&g, &e[a], &e[b]);
            if (v - target).abs() > 1e-8 {
                return Err(Error::Frame(format!("frame is not orthonormal: g(e{a}, e{b}) = {v:e}")));
            }
        }
    }
    let gam = christoffel(chart, x)?;
    let mut out = [Elem::ZERO; 4];
    for (m, o) in out.iter_mut().enumerate() {
        // ∇_μ e_β
        let nab: [Vec4; 4] = std::array::from_fn(|b| {
            std::array::from_fn(|n| {
                let mut v = de[m][b][n];
                for c in 0..4 {
                    v += gam[n][m][c] * e[b][c];
                }
                v
            })
        });
        for (k, &(a, b)) in LORENTZ_PAIRS.iter().enumerate() {
            o.0[k] = dot(&g, &nab[b], &e[a]);
        }
    }
    Ok(out)
}

/// Largest |(A_μ)_{αβ} + (A_μ)_{βα}| including the diagonal, a check that the
/// frame stays orthonormal along every direction.
pub fn cartan_antisymmetry_residual(chart: &dyn SpacetimeChart, frames: &dyn FrameField, x: &Vec4) -> Result<f64> {
    let e = frames.frame(x)?;
    let de = frames.derivative(x)?;
    let g = chart.metric(x);
    let gam = christoffel(chart, x)?;
    let mut worst = 0.0f64;
    for m in 0..4 {
        let nab: [Vec4; 4] = std::array::from_fn(|b| {
            std::array::from_fn(|n| de[m][b][n] + (0..4).map(|c| gam[n][m][c] * e[b][c]).sum::<f64>())
        });
        for a in 0..4 {
            for b in 0..4 {
                worst = worst.max((dot(&g, &nab[b], &e[a]) + dot(&g, &nab[a], &e[b])).abs());
            }
        }
    }
    Ok(worst)
}

/// The Cartan connection as a potential; points where the frame cannot be
/// built evaluate to NaN.
pub struct CartanPotential<'a> {
    pub chart: &'a dyn SpacetimeChart,
    pub frames: &'a dyn FrameField,
}

impl PotentialField for CartanPotential<'_> {
    fn potential(&self, x: &Vec4) -> [Elem; 4] {
        cartan_connection(self.chart, self.frames, x).unwrap_or([Elem([f64::NAN; 6]); 4])
    }
}

/// R_{αβμν} in the frame, packed as `[pair(μ,ν)][pair(α,β)]` to match the
/// layout of a curvature 2-form of the Cartan potential.
pub fn frame_riemann(chart: &dyn SpacetimeChart, frames: &dyn FrameField, x: &Vec4) -> Result<[[f64; 6]; 6]> {
    let curv = crate::geometry::riemann(chart, x)?;
    let e = frames.frame(x)?;
    let mut out = [[0.0; 6]; 6];
    for (p, &(m, n)) in LORENTZ_PAIRS.iter().enumerate() {
        for (q, &(a, b)) in LORENTZ_PAIRS.iter().enumerate() {
            let mut v = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    let w = e[a][i] * e[b][j];
                    if w != 0.0 {
                        v += w * curv.riemann[i][j][m][n];
                    }
                }
            }
            out[p][q] = v;
        }
    }
    Ok(out)
}
