//! Product quadrature on S² (Gauss-Legendre in cos θ × uniform in φ) with a
//! spherical-harmonic transform for spectral surface derivatives.
//!
//! Nodes are stored ring by ring: node `j·n_phi + k` sits at `(θ_j, φ_k)`.
//! Gauss nodes never reach the poles, so `1/sin θ` is finite everywhere.

use std::sync::Arc;

use gauss_quad::GaussLegendre;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Spherical-harmonic coefficients `a_ℓm`, `m ≥ 0`, for a real field.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub lmax: usize,
    pub mmax: usize,
    /// `coeffs[m][ℓ − m]`.
    pub coeffs: Vec<Vec<Complex64>>,
}

impl Spectrum {
    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        if m > self.mmax || l < m || l > self.lmax {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[m][l - m]
    }

    /// Power per degree ℓ (sum over ±m).
    pub fn power(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.lmax + 1];
        for (m, row) in self.coeffs.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                p[m + i] += if m == 0 { c.norm_sqr() } else { 2.0 * c.norm_sqr() };
            }
        }
        p
    }
}

/// Direction grid with quadrature weights and spectral operators.
#[derive(Clone)]
pub struct SphereGrid {
    n_theta: usize,
    n_phi: usize,
    lmax: usize,
    mmax: usize,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    gl_w: Vec<f64>,
    phi: Vec<f64>,
    /// Per ring, `P̄_ℓ^m(cos θ_j)` at `[m][ℓ − m]`.
    plm: Vec<Vec<Vec<f64>>>,
    /// Per ring, `dP̄_ℓ^m/dθ`.
    dplm: Vec<Vec<Vec<f64>>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereGrid").field("n_theta", &self.n_theta).field("n_phi", &self.n_phi).finish()
    }
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 4 {
            return Err(Error::Resolution(format!("sphere grid {n_theta}×{n_phi} is too coarse")));
        }
        let gl = GaussLegendre::new(std::num::NonZeroUsize::new(n_theta).expect("n_theta ≥ 2"));
        let mut nodes: Vec<(f64, f64)> = gl.nodes().copied().zip(gl.weights().copied()).collect();
        // north to south
        nodes.sort_by(|a, b| b.0.total_cmp(&a.0));
        let cos_t: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let gl_w: Vec<f64> = nodes.iter().map(|n| n.1).collect();
        let sin_t: Vec<f64> = cos_t.iter().map(|c| (1.0 - c * c).sqrt()).collect();
        let phi = (0..n_phi).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64).collect();
        let lmax = n_theta - 1;
        let mmax = lmax.min(n_phi / 2 - 1);
        let mut plm = Vec::with_capacity(n_theta);
        let mut dplm = Vec::with_capacity(n_theta);
        for j in 0..n_theta {
            let (p, d) = legendre_table(lmax, mmax, cos_t[j], sin_t[j]);
            plm.push(p);
            dplm.push(d);
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_theta,
            n_phi,
            lmax,
            mmax,
            cos_t,
            sin_t,
            gl_w,
            phi,
            plm,
            dplm,
            fwd: planner.plan_fft_forward(n_phi),
            inv: planner.plan_fft_inverse(n_phi),
        })
    }

    /// A grid with `n_phi = 2·n_theta` and at least `n` nodes.
    pub fn with_directions(n: usize) -> Result<Self> {
        let mut nt = 2;
        while 2 * nt * nt < n {
            nt += 1;
        }
        Self::new(nt, 2 * nt)
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.cos_t[i / self.n_phi].acos()
    }

    pub fn phi(&self, i: usize) -> f64 {
        self.phi[i % self.n_phi]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.gl_w[i / self.n_phi] * 2.0 * std::f64::consts::PI / self.n_phi as f64
    }

    /// Unit vector ω̂.
    pub fn direction(&self, i: usize) -> Vec3 {
        let (j, k) = (i / self.n_phi, i % self.n_phi);
        let (s, c) = (self.sin_t[j], self.cos_t[j]);
        [s * self.phi[k].cos(), s * self.phi[k].sin(), c]
    }

    /// θ̂ and φ̂ at node i.
    pub fn tangent_basis(&self, i: usize) -> (Vec3, Vec3) {
        let (j, k) = (i / self.n_phi, i % self.n_phi);
        let (s, c) = (self.sin_t[j], self.cos_t[j]);
        let (sp, cp) = self.phi[k].sin_cos();
        ([c * cp, c * sp, -s], [-sp, cp, 0.0])
    }

    /// Σ w_i f_i.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len());
        let mut total = 0.0;
        for j in 0..self.n_theta {
            let ring: f64 = f[j * self.n_phi..(j + 1) * self.n_phi].iter().sum();
            total += self.gl_w[j] * ring;
        }
        total * 2.0 * std::f64::consts::PI / self.n_phi as f64
    }

    pub fn analyze(&self, f: &[f64]) -> Spectrum {
        assert_eq!(f.len(), self.len());
        let mut coeffs: Vec<Vec<Complex64>> =
            (0..=self.mmax).map(|m| vec![Complex64::new(0.0, 0.0); self.lmax + 1 - m]).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_phi];
        let norm = 2.0 * std::f64::consts::PI / self.n_phi as f64;
        for j in 0..self.n_theta {
            for (b, v) in buf.iter_mut().zip(&f[j * self.n_phi..(j + 1) * self.n_phi]) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fwd.process(&mut buf);
            for m in 0..=self.mmax {
                let fm = buf[m] * (norm * self.gl_w[j]);
                for (c, p) in coeffs[m].iter_mut().zip(&self.plm[j][m]) {
                    *c += fm * p;
                }
            }
        }
        Spectrum { lmax: self.lmax, mmax: self.mmax, coeffs }
    }

    /// Evaluate Σ a_ℓm T_ℓ^m(θ) e^{imφ} for a per-ring table T and a factor per m.
    fn synth_with(
        &self,
        s: &Spectrum,
        table: &[Vec<Vec<f64>>],
        mfac: impl Fn(usize) -> Complex64,
        scale: impl Fn(usize) -> f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_phi];
        for j in 0..self.n_theta {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for m in 0..=s.mmax.min(self.mmax) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, p) in s.coeffs[m].iter().zip(&table[j][m]) {
                    acc += c * p;
                }
                acc *= mfac(m);
                if m == 0 {
                    buf[0] += acc;
                } else {
                    buf[m] += acc;
                    buf[self.n_phi - m] += acc.conj();
                }
            }
            self.inv.process(&mut buf);
            let sc = scale(j);
            for (o, b) in out[j * self.n_phi..(j + 1) * self.n_phi].iter_mut().zip(&buf) {
                *o = b.re * sc;
            }
        }
        out
    }

    pub fn synthesize(&self, s: &Spectrum) -> Vec<f64> {
        self.synth_with(s, &self.plm, |_| Complex64::new(1.0, 0.0), |_| 1.0)
    }

    /// Round-sphere gradient components `(∂_θ f, (1/sin θ)∂_φ f)`.
    pub fn gradient(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.analyze(f);
        self.gradient_of(&s)
    }

    pub fn gradient_of(&self, s: &Spectrum) -> (Vec<f64>, Vec<f64>) {
        let gt = self.synth_with(s, &self.dplm, |_| Complex64::new(1.0, 0.0), |_| 1.0);
        let gp = self.synth_with(s, &self.plm, |m| Complex64::new(0.0, m as f64), |j| 1.0 / self.sin_t[j]);
        (gt, gp)
    }

    /// Round-sphere divergence of a tangent field with components along θ̂, φ̂,
    /// computed from the surface gradients of its Cartesian components.
    pub fn divergence(&self, vt: &[f64], vp: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut cart = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let (et, ep) = self.tangent_basis(i);
            for c in 0..3 {
                cart[c][i] = vt[i] * et[c] + vp[i] * ep[c];
            }
        }
        let mut div = vec![0.0; n];
        for (c, comp) in cart.iter().enumerate() {
            let (gt, gp) = self.gradient(comp);
            for i in 0..n {
                let (et, ep) = self.tangent_basis(i);
                div[i] += gt[i] * et[c] + gp[i] * ep[c];
            }
        }
        div
    }

    /// Round Laplacian −ℓ(ℓ+1) applied spectrally.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut s = self.analyze(f);
        for (m, row) in s.coeffs.iter_mut().enumerate() {
            for (i, c) in row.iter_mut().enumerate() {
                let l = (m + i) as f64;
                *c *= -l * (l + 1.0);
            }
        }
        self.synthesize(&s)
    }

    /// Fraction of the spectral power in the top third of the degrees, a
    /// marker of under-resolution.
    pub fn high_mode_fraction(&self, f: &[f64]) -> f64 {
        let p = self.analyze(f).power();
        let total: f64 = p.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let cut = (2 * self.lmax) / 3 + 1;
        p[cut.min(p.len())..].iter().sum::<f64>() / total
    }
}

/// Orthonormal associated Legendre functions and their θ-derivatives.
fn legendre_table(lmax: usize, mmax: usize, x: f64, s: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut p = Vec::with_capacity(mmax + 1);
    let mut d = Vec::with_capacity(mmax + 1);
    let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for m in 0..=mmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let mut row = vec![0.0; lmax + 1 - m];
        row[0] = pmm;
        if lmax > m {
            row[1] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            row[l - m] = a * (x * row[l - m - 1] - b * row[l - m - 2]);
        }
        // (1 − x²) dP̄_ℓ/dx = −ℓ x P̄_ℓ + c_ℓ P̄_{ℓ−1};  d/dθ = −sin θ d/dx
        let mut drow = vec![0.0; lmax + 1 - m];
        for l in m..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let prev = if l > m { row[l - m - 1] } else { 0.0 };
            let c = ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).max(0.0).sqrt();
            drow[l - m] = -(-lf * x * row[l - m] + c * prev) / s;
        }
        p.push(row);
        d.push(drow);
    }
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sphere_area() {
        let g = SphereGrid::new(16, 32).unwrap();
        let ones = vec![1.0; g.len()];
        assert!((g.integrate(&ones) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(SphereGrid::with_directions(512).unwrap().len(), 512);
    }

    #[test]
    fn transform_round_trips_band_limited_fields() {
        let g = SphereGrid::new(12, 24).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let w = g.direction(i);
                1.0 + w[0] * w[1] - 0.3 * w[2].powi(3) + w[0].powi(4) * w[2]
            })
            .collect();
        let back = g.synthesize(&g.analyze(&f));
        let err = f.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn gradient_of_z_is_minus_sin_theta() {
        let g = SphereGrid::new(10, 20).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| g.direction(i)[2]).collect();
        let (gt, gp) = g.gradient(&f);
        for i in 0..g.len() {
            assert!((gt[i] + g.theta(i).sin()).abs() < 1e-12);
            assert!(gp[i].abs() < 1e-12);
        }
        let f: Vec<f64> = (0..g.len()).map(|i| g.direction(i)[1]).collect();
        let (gt, gp) = g.gradient(&f);
        for i in 0..g.len() {
            let (t, p) = (g.theta(i), g.phi(i));
            assert!((gt[i] - t.cos() * p.sin()).abs() < 1e-12);
            assert!((gp[i] - p.cos()).abs() < 1e-12);
        }
    }
}
