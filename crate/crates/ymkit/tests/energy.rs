use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ymkit::energy::{
    balance_cone, contract, deformation_sup, energy, energy_balance, gradient_energy, null_flux_density,
    stress_divergence, stress_from_metric, stress_tensor, stress_trace, t1_tensor, write_energy_csv, BalancePlan,
    EnergyReport, SliceDisc, TimeVector,
};
use ymkit::fields::{
    covariant_jet, Analytic, AnalyticPotential, ConformalPlaneWave, Coulomb, FieldSource, GaussianPotential, PlaneWave,
    Vacuum, WaveSuperposition,
};
use ymkit::geometry::dual::Real;
use ymkit::geometry::{inverse_metric, Flrw, Minkowski, SchwarzschildIsotropic, SpacetimeChart, Vec4};
use ymkit::liegauge::{Algebra, Elem, TwoForm};
use ymkit::nullcone::{null_frame, unit_normal, ConeParams, NullConeBundle, Vertex};
use ymkit::{Error, Exec};

fn random_form(rng: &mut ChaCha8Rng, alg: &Algebra) -> TwoForm {
    TwoForm(std::array::from_fn(|_| {
        let c: Vec<f64> = (0..alg.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Elem::from_slice(&c)
    }))
}

fn schwarzschild() -> SchwarzschildIsotropic {
    SchwarzschildIsotropic { mass: 1.0 }
}

/// Constant magnetic field B along z: A = ½B(−y, x, 0).
#[derive(Clone)]
struct UniformMagnetic {
    alg: Algebra,
    b: f64,
}

impl AnalyticPotential for UniformMagnetic {
    fn algebra(&self) -> &Algebra {
        &self.alg
    }
    fn components<S: Real>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let z = S::cst(0.0);
        let mut out = [[z; 3]; 4];
        out[1][0] = x[2].scale(-0.5 * self.b);
        out[2][0] = x[1].scale(0.5 * self.b);
        out
    }
}

fn waves() -> Analytic<WaveSuperposition> {
    Analytic(WaveSuperposition::new(vec![
        PlaneWave::new(0.7, [0.0, 0.6, -0.8], [2.0, 0.8, 0.6], 0.3),
        PlaneWave::new(0.4, [0.0, 0.0, 1.0], [-1.0, 1.5, 0.0], 1.1),
        PlaneWave::new(0.5, [1.0, 0.0, 0.0], [0.0, -0.5, 1.2], -0.4),
    ]))
}

fn run_balance(
    chart: &dyn SpacetimeChart,
    src: &dyn FieldSource,
    p: Vec4,
    plan: &BalancePlan,
    n_theta: usize,
    ds: f64,
    v: TimeVector,
) -> Vec<EnergyReport> {
    let vertex = Vertex::at_rest(chart, p).unwrap();
    let params = balance_cone(chart, &vertex, plan, n_theta, ds, Exec::Parallel).unwrap();
    let cone = NullConeBundle::emanate(chart, vertex, &params, Exec::Parallel).unwrap();
    energy_balance(src, &cone, plan, v, Exec::Parallel).unwrap()
}

#[test]
fn vanishing_field_has_no_energy() {
    let chart = Minkowski;
    let alg = Algebra::su2();
    let t = stress_tensor(&alg, &chart, &[0.0; 4], &TwoForm::ZERO).unwrap();
    assert!(t.iter().flatten().all(|&v| v == 0.0));
    let src = Analytic(Vacuum(alg));
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.5, 1.0], n_time: 3, n_radial: 6 };
    for r in run_balance(&chart, &src, [1.0, 0.0, 0.0, 0.0], &plan, 4, 1e-2, TimeVector::Coordinate) {
        assert_eq!((r.energy, r.energy_initial, r.flux, r.bulk, r.residual), (0.0, 0.0, 0.0, 0.0, 0.0));
    }
}

#[test]
fn single_electric_component_energy_is_half_its_square() {
    let alg = Algebra::u1();
    let mut f = TwoForm::ZERO;
    f.set(0, 1, Elem::scalar(1.7));
    let t = stress_tensor(&alg, &Minkowski, &[0.0; 4], &f).unwrap();
    assert!((t[0][0] - 0.5 * 1.7 * 1.7).abs() < 1e-14);
    // the same component in the slice frame of a curved chart
    let chart = schwarzschild();
    let x = [0.0, 4.0, 1.0, -2.0];
    let g = chart.metric(&x);
    let gi = inverse_metric(&g, &x).unwrap();
    let that = unit_normal(&gi);
    let rho = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    let psi = 1.0 + 0.5 / rho;
    // unit radial vector n and F = E₀ (t̂♭ ∧ n♭) up to orientation
    let n = [0.0, x[1] / rho / (psi * psi), x[2] / rho / (psi * psi), x[3] / rho / (psi * psi)];
    let tl = ymkit::geometry::lower(&g, &that);
    let nl = ymkit::geometry::lower(&g, &n);
    let mut f = TwoForm::ZERO;
    for a in 0..4 {
        for b in (a + 1)..4 {
            f.set(a, b, Elem::scalar(2.3 * (tl[a] * nl[b] - tl[b] * nl[a])));
        }
    }
    let t = stress_from_metric(&alg, &f, &g, &gi);
    assert!((contract(&t, &that, &that) - 0.5 * 2.3 * 2.3).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stress_is_symmetric_trace_free_and_positive(seed in 0u64..10_000, r in 3.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = Algebra::su2();
        let f = random_form(&mut rng, &alg);
        let chart = schwarzschild();
        let x = [0.3, r, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let g = chart.metric(&x);
        let gi = inverse_metric(&g, &x).unwrap();
        let t = stress_from_metric(&alg, &f, &g, &gi);
        let scale = t.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..4 {
            for b in 0..4 {
                prop_assert_eq!(t[a][b], t[b][a]);
            }
        }
        prop_assert!(stress_trace(&t, &gi).abs() < 1e-12 * scale.max(1.0));
        let that = unit_normal(&gi);
        prop_assert!(contract(&t, &that, &that) >= 0.0);
    }

    #[test]
    fn null_flux_form_is_minus_t_of_l_and_that(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = Algebra::su2();
        let f = random_form(&mut rng, &alg);
        let chart = schwarzschild();
        let v = Vertex::at_rest(&chart, [0.0, 8.0, 1.0, 0.5]).unwrap();
        let params = ConeParams { n_theta: 3, n_phi: 6, s_max: 1.0, ds: 0.05, ..ConeParams::default() };
        let cone = NullConeBundle::emanate(&chart, v, &params, Exec::Sequential).unwrap();
        let ray = rng.random_range(0..cone.n_rays());
        let node = cone.node(ray, cone.live_shells() - 1);
        let g = chart.metric(&node.x);
        let gi = inverse_metric(&g, &node.x).unwrap();
        let that = unit_normal(&gi);
        let t = stress_from_metric(&alg, &f, &g, &gi);
        let frame = null_frame(&chart, node).unwrap();
        let c = ymkit::geometry::dot(&g, &node.l, &that);
        let direct = -contract(&t, &node.l, &that);
        let null = null_flux_density(&alg, &f, &frame, c);
        prop_assert!(null >= 0.0);
        prop_assert!((direct - null).abs() < 1e-9 * (1.0 + direct.abs()), "{} vs {}", direct, null);
    }

    #[test]
    fn wave_energy_contractions_are_sign_definite(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = Algebra::su2();
        let df: [TwoForm; 4] = std::array::from_fn(|_| random_form(&mut rng, &alg));
        let chart = schwarzschild();
        let x = [0.0, 5.0, -1.0, 2.0];
        let g = chart.metric(&x);
        let gi = inverse_metric(&g, &x).unwrap();
        // a past-directed null vector
        let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let mut l = [-1.0, w[0], w[1], w[2]];
        let ss: f64 = (1..4).map(|i| g[i][i] * l[i] * l[i]).sum();
        let k = (-g[0][0] / ss).sqrt();
        for i in 1..4 { l[i] *= k; }
        let c = t1_tensor(&alg, &g, &gi, &df, &l).unwrap();
        prop_assert!(c.tt >= 0.0);
        prop_assert!(c.tl <= 0.0);
        prop_assert!((c.tl - c.tl_null).abs() < 1e-10 * (1.0 + c.tl.abs()), "{} vs {}", c.tl, c.tl_null);
    }
}

#[test]
fn wave_energy_of_constant_field_vanishes() {
    let src =
        Analytic(GaussianPotential { alg: Algebra::u1(), coefficients: [[0.0; 3]; 4], center: [0.0; 4], width: 1.0 });
    let x = [0.1, 0.2, 0.3, 0.4];
    let (_, df) = covariant_jet(&src, &Minkowski, &x).unwrap();
    let g = Minkowski.metric(&x);
    let gi = inverse_metric(&g, &x).unwrap();
    let c = t1_tensor(&Algebra::u1(), &g, &gi, &df, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!((c.tt, c.tl), (0.0, 0.0));
}

#[test]
fn plane_wave_wave_energy_is_half_the_gradient_square() {
    let pw = PlaneWave::new(0.7, [0.0, 0.6, -0.8], [2.0, 0.8, 0.6], 0.3);
    let src = Analytic(pw.clone());
    let x = [0.4, -0.2, 0.9, 0.1];
    let (_, df) = covariant_jet(&src, &Minkowski, &x).unwrap();
    // hand computation: F_{μν} = k̃_μ ε_ν − k̃_ν ε_μ times a cos(θ), so
    // ∂_γF_{μν} = −a sin(θ) k̃_γ (k̃_μ ε_ν − k̃_ν ε_μ) with k̃ = (|k|, −k)
    let om = pw.frequency();
    let kt = [om, -2.0, -0.8, -0.6];
    let eps = [0.0, 0.0, 0.6, -0.8];
    let theta = om * x[0] - 2.0 * x[1] - 0.8 * x[2] - 0.6 * x[3] + 0.3;
    let amp = -0.7 * theta.sin();
    let mut sum = 0.0;
    for g in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                let v = amp * kt[g] * (kt[m] * eps[n] - kt[n] * eps[m]);
                sum += v * v;
            }
        }
    }
    let g = Minkowski.metric(&x);
    let gi = inverse_metric(&g, &x).unwrap();
    let c = t1_tensor(&Algebra::u1(), &g, &gi, &df, &[-1.0, 0.0, 1.0, 0.0]).unwrap();
    assert!((c.tt - 0.5 * sum).abs() < 1e-12 * sum, "{} vs {}", c.tt, 0.5 * sum);
}

#[test]
fn gradient_energy_matches_coordinate_contraction() {
    let alg = Algebra::su2();
    let src = Analytic(GaussianPotential {
        alg: alg.clone(),
        coefficients: [[0.2, -0.1, 0.3], [0.5, 0.2, 0.0], [-0.3, 0.4, 0.1], [0.0, 0.2, -0.6]],
        center: [0.5, 6.2, 0.3, -0.2],
        width: 1.3,
    });
    let chart = schwarzschild();
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.5], n_time: 2, n_radial: 8 };
    let vertex = Vertex::at_rest(&chart, [1.0, 6.0, 0.0, 0.0]).unwrap();
    let params = balance_cone(&chart, &vertex, &plan, 6, 1e-2, Exec::Parallel).unwrap();
    let cone = NullConeBundle::emanate(&chart, vertex, &params, Exec::Parallel).unwrap();
    let disc = SliceDisc::from_ring(&cone, 0, 8).unwrap();
    let value = gradient_energy(&src, &chart, &disc, Exec::Parallel).unwrap();
    // h^{αβ} h^{μγ} h^{νσ} ⟨D_αF_{γσ}, D_βF_{μν}⟩ with h^{-1} = g^{-1} + 2 t̂ ⊗ t̂
    let mut oracle = 0.0;
    for (x, w) in disc.points.iter().zip(&disc.weights) {
        let g = chart.metric(x);
        let gi = inverse_metric(&g, x).unwrap();
        let that = unit_normal(&gi);
        let mut hi = gi;
        for a in 0..4 {
            for b in 0..4 {
                hi[a][b] += 2.0 * that[a] * that[b];
            }
        }
        let (_, df) = covariant_jet(&src, &chart, x).unwrap();
        let d: Vec<[[Elem; 4]; 4]> = df.iter().map(|f| f.dense()).collect();
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    for gg in 0..4 {
                        for n in 0..4 {
                            for sg in 0..4 {
                                let c = hi[a][b] * hi[m][gg] * hi[n][sg];
                                if c != 0.0 {
                                    s += c * alg.inner(&d[a][gg][sg], &d[b][m][n]);
                                }
                            }
                        }
                    }
                }
            }
        }
        oracle += w * s;
    }
    assert!(value > 0.0);
    assert!((value - oracle).abs() < 1e-10 * oracle, "{value} vs {oracle}");
    // shrinking the disc cannot increase it
    let inner = SliceDisc::from_ring(&cone, 1, 8).unwrap();
    assert!(gradient_energy(&src, &chart, &inner, Exec::Parallel).unwrap() <= value);
}

#[test]
fn disc_volume_is_a_ball_in_flat_space() {
    let chart = Minkowski;
    let plan = BalancePlan { t_initial: -0.5, times: vec![0.25], n_time: 2, n_radial: 4 };
    let vertex = Vertex::at_rest(&chart, [1.0, 0.2, 0.0, -0.1]).unwrap();
    let params = balance_cone(&chart, &vertex, &plan, 6, 1e-2, Exec::Parallel).unwrap();
    let cone = NullConeBundle::emanate(&chart, vertex, &params, Exec::Parallel).unwrap();
    for (k, tau) in [(0, 1.5), (1, 0.75)] {
        let disc = SliceDisc::from_ring(&cone, k, 4).unwrap();
        let exact = 4.0 * PI / 3.0 * tau * tau * tau;
        assert!((disc.volume() - exact).abs() < 1e-10 * exact, "{} vs {exact}", disc.volume());
    }
}

#[test]
fn uniform_magnetic_flux_has_closed_form() {
    // −T(L, t̂) = ½B² on every generator, so the flux up to the slice
    // τ below the vertex is ½B² · 4πτ³/3.
    let chart = Minkowski;
    let b = 1.3;
    let src = Analytic(UniformMagnetic { alg: Algebra::u1(), b });
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.4, 1.0], n_time: 3, n_radial: 6 };
    let rows = run_balance(&chart, &src, [1.0, 0.3, -0.2, 0.1], &plan, 6, 1e-2, TimeVector::Coordinate);
    for r in &rows {
        let tau_outer = 1.0;
        let tau_inner = 1.0 - r.t;
        let exact = 0.5 * b * b * 4.0 * PI / 3.0 * (tau_outer.powi(3) - tau_inner.powi(3));
        assert!((r.flux - exact).abs() < 1e-10 * exact, "{} vs {exact}", r.flux);
        assert!((r.energy - 0.5 * b * b * 4.0 * PI / 3.0 * tau_inner.powi(3)).abs() < 1e-10);
        assert!(r.relative_residual() < 1e-10);
    }
}

#[test]
fn minkowski_energy_balances_the_flux() {
    let chart = Minkowski;
    let src = waves();
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.3, 0.7, 1.2], n_time: 4, n_radial: 16 };
    let rows = run_balance(&chart, &src, [1.2, 0.1, 0.2, -0.3], &plan, 16, 2e-3, TimeVector::Coordinate);
    for r in &rows {
        assert_eq!(r.bulk, 0.0);
        assert_eq!(r.deformation, 0.0);
        assert!(r.energy >= 0.0 && r.flux >= 0.0);
        assert!(r.relative_residual() < 1e-8, "t = {}: {:e}", r.t, r.relative_residual());
    }
    // the closed cone drains all of the initial energy through the flux
    let last = rows.last().unwrap();
    assert_eq!(last.energy, 0.0);
    assert!((last.flux - last.energy_initial).abs() < 1e-8 * last.energy_initial);
}

#[test]
fn expanding_background_balances_with_the_bulk_term() {
    let cosmology = Flrw { a0: 1.0, t0: 1.0, exponent: 0.5 };
    let src =
        Analytic(ConformalPlaneWave { wave: PlaneWave::new(0.6, [0.0, 0.8, 0.6], [1.5, 0.6, -0.8], 0.2), cosmology });
    let plan = BalancePlan { t_initial: 1.0, times: vec![1.3, 1.6], n_time: 6, n_radial: 16 };
    let mut last = f64::INFINITY;
    for ds in [8e-3, 4e-3, 2e-3] {
        let rows = run_balance(&cosmology, &src, [1.8, 0.0, 0.1, 0.2], &plan, 12, ds, TimeVector::Coordinate);
        let r = rows.last().unwrap();
        assert!(r.bulk.abs() > 1e-2 * r.energy_initial, "bulk {:e} is negligible", r.bulk);
        let res = rows.iter().map(|r| r.relative_residual()).fold(0.0, f64::max);
        assert!(res < 1e-6, "ds = {ds}: {res:e}");
        assert!(res < last || res < 1e-11);
        last = res;
    }
}

#[test]
fn schwarzschild_static_field_balances() {
    let chart = schwarzschild();
    let src = Analytic(Coulomb::isotropic(0.8, 1.0));
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.5, 1.0], n_time: 4, n_radial: 16 };
    for v in [TimeVector::Coordinate, TimeVector::Unit] {
        let mut last = f64::INFINITY;
        for ds in [1e-2, 5e-3, 2.5e-3] {
            let rows = run_balance(&chart, &src, [1.5, 6.0, 0.0, 0.0], &plan, 10, ds, v);
            let res = rows.iter().map(|r| r.relative_residual()).fold(0.0, f64::max);
            assert!(res < 1e-6, "{v:?}, ds = {ds}: {res:e}");
            assert!(res < last || res < 1e-11, "{v:?}: {res:e} after {last:e}");
            last = res;
            for r in &rows {
                assert!(r.energy > 0.0 && r.flux > 0.0);
                if v == TimeVector::Coordinate {
                    assert!(r.deformation < 1e-12, "∂_t is Killing: {:e}", r.deformation);
                }
            }
        }
    }
}

#[test]
fn flrw_deformation_is_the_hubble_rate() {
    let chart = Flrw { a0: 1.0, t0: 1.0, exponent: 0.5 };
    for t in [0.5, 1.0, 2.0] {
        let c = deformation_sup(&chart, &[t, 0.3, 0.1, -0.2], TimeVector::Coordinate).unwrap();
        assert!((c - 0.5 / t).abs() < 1e-12, "{c} vs {}", 0.5 / t);
    }
}

#[test]
fn stress_is_divergence_free_on_shell_only() {
    let chart = schwarzschild();
    let on = Analytic(Coulomb::isotropic(0.8, 1.0));
    let x = [0.0, 5.0, 1.0, -0.5];
    let div = stress_divergence(&on, &chart, &x, 1e-3).unwrap();
    assert!(div.iter().all(|v| v.abs() < 1e-9), "{div:?}");
    let off = Analytic(GaussianPotential {
        alg: Algebra::su2(),
        coefficients: [[0.2, -0.1, 0.3], [0.5, 0.2, 0.0], [-0.3, 0.4, 0.1], [0.0, 0.2, -0.6]],
        center: [0.0, 5.0, 1.0, 0.0],
        width: 1.0,
    });
    let div = stress_divergence(&off, &chart, &x, 1e-3).unwrap();
    assert!(div.iter().any(|v| v.abs() > 1e-3), "{div:?}");
}

#[test]
fn energy_of_a_pulse_is_positive_on_every_disc() {
    let src = waves();
    let chart = Minkowski;
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.5], n_time: 2, n_radial: 6 };
    let vertex = Vertex::at_rest(&chart, [1.0, 0.0, 0.0, 0.0]).unwrap();
    let params = balance_cone(&chart, &vertex, &plan, 6, 1e-2, Exec::Parallel).unwrap();
    let cone = NullConeBundle::emanate(&chart, vertex, &params, Exec::Parallel).unwrap();
    for k in 0..cone.params.slices.len() {
        let disc = SliceDisc::from_ring(&cone, k, 6).unwrap();
        assert!(energy(&src, &chart, &disc, TimeVector::Coordinate, Exec::Parallel).unwrap() > 0.0);
    }
}

#[test]
fn plans_are_validated_against_the_bundle() {
    let chart = Minkowski;
    let src = waves();
    let vertex = Vertex::at_rest(&chart, [1.0, 0.0, 0.0, 0.0]).unwrap();
    let params = ConeParams { n_theta: 4, n_phi: 8, s_max: 1.2, ds: 1e-2, slices: vec![0.0], ..ConeParams::default() };
    let cone = NullConeBundle::emanate(&chart, vertex, &params, Exec::Parallel).unwrap();
    let plan = BalancePlan { t_initial: 0.0, times: vec![0.5], n_time: 2, n_radial: 4 };
    assert!(matches!(
        energy_balance(&src, &cone, &plan, TimeVector::Coordinate, Exec::Parallel),
        Err(Error::Config(_))
    ));
    let bad = BalancePlan { t_initial: 0.0, times: vec![0.5, 0.2, 3.0], n_time: 0, n_radial: 4 };
    match bad.validate(1.0) {
        Err(Error::Config(errs)) => assert_eq!(errs.len(), 3, "{errs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn energy_series_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("energy.csv");
    let row = EnergyReport {
        t: 0.5,
        energy: 1.0,
        energy_initial: 2.0,
        flux: 0.75,
        bulk: 0.25,
        residual: 0.0,
        deformation: 0.1,
    };
    write_energy_csv(&path, &[row.clone(), row]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,E_t,flux,bulk,residual,C");
    assert_eq!(lines.len(), 3);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.5, 1.0, 0.75, 0.25, 0.0, 0.1]);
}

#[test]
fn conformal_wave_solves_the_field_equations() {
    let cosmology = Flrw { a0: 1.0, t0: 1.0, exponent: 0.5 };
    let src =
        Analytic(ConformalPlaneWave { wave: PlaneWave::new(0.6, [0.0, 0.8, 0.6], [1.5, 0.6, -0.8], 0.2), cosmology });
    let x = [1.4, 0.2, -0.1, 0.3];
    let r = ymkit::liegauge::ym_residual(
        src.algebra(),
        &cosmology,
        &ymkit::fields::Pointwise(&src),
        &ymkit::fields::Pointwise(&src),
        &x,
        1e-3,
    )
    .unwrap();
    assert!(r.iter().all(|e| e.max_abs() < 1e-9), "{r:?}");
}
