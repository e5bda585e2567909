use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ymkit::energy::{balance_cone, energy_balance, BalancePlan, TimeVector};
use ymkit::evolution::{
    read_checkpoint, write_checkpoint, write_diagnostics_csv, CauchyData, Evolution, EvolutionState, History,
    SpatialMetric, Torus,
};
use ymkit::fields::{Analytic, FieldSource, PlaneWave};
use ymkit::geometry::Minkowski;
use ymkit::liegauge::{Algebra, Elem, TwoForm};
use ymkit::nullcone::{NullConeBundle, Vertex};
use ymkit::{Error, Exec};

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn flat(dim: usize, n: usize, alg: Algebra) -> Evolution {
    Evolution::new(Torus::new(dim, n, 2.0 * PI).unwrap(), alg, SpatialMetric::Flat, Exec::Parallel).unwrap()
}

fn start(evo: &Evolution, profile: &str, p: &[(&str, f64)]) -> EvolutionState {
    EvolutionState::new(evo.initial_data(profile, &params(p)).unwrap(), 0.0)
}

fn run(evo: &Evolution, s: EvolutionState, dt: f64, steps: u64) -> EvolutionState {
    evo.advance(s, dt, steps, 0, |_| Ok(())).unwrap()
}

/// Hand-written lattice energy for diagonal γ = diag(ψ⁴, ψ⁴, 1) on a 2-torus.
fn lattice_energy_2d(evo: &Evolution, s: &EvolutionState, psi4: impl Fn(&[f64; 3]) -> f64) -> f64 {
    let t = evo.torus;
    let (n, h) = (t.n, t.dx());
    let a = &s.fields.a;
    let idx = |i: usize, j: usize| t.index([i % n, j % n, 0]);
    let d = |f: &dyn Fn(usize, usize) -> Elem, i: usize, j: usize, axis: usize| {
        let at = |o: isize| {
            let (ii, jj) = if axis == 0 {
                ((i as isize + o).rem_euclid(n as isize) as usize, j)
            } else {
                (i, (j as isize + o).rem_euclid(n as isize) as usize)
            };
            f(ii, jj)
        };
        (at(-2) - at(-1) * 8.0 + at(1) * 8.0 - at(2)) * (1.0 / (12.0 * h))
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = idx(i, j);
            let ay = |ii: usize, jj: usize| a[idx(ii, jj)][1];
            let ax = |ii: usize, jj: usize| a[idx(ii, jj)][0];
            let b = d(&ay, i, j, 0) - d(&ax, i, j, 1) + evo.alg.bracket(&a[p][0], &a[p][1]);
            let e2 = evo.alg.inner(&s.fields.e[p][0], &s.fields.e[p][0])
                + evo.alg.inner(&s.fields.e[p][1], &s.fields.e[p][1]);
            let w = psi4(&t.position(p));
            total += w * (0.5 * e2 / w + 0.5 * evo.alg.inner(&b, &b) / (w * w)) * h * h;
        }
    }
    total
}

fn l2_distance(evo: &Evolution, s: &EvolutionState, exact: impl Fn(&[f64; 3]) -> ([Elem; 3], [Elem; 3])) -> f64 {
    let t = evo.torus;
    let mut sum = 0.0;
    for p in 0..t.points() {
        let (a, e) = exact(&t.position(p));
        for i in 0..t.dim {
            sum += (evo.alg.norm(&(s.fields.a[p][i] - a[i])).powi(2)
                + evo.alg.norm(&(s.fields.e[p][i] - e[i])).powi(2))
                * t.cell_volume();
        }
    }
    sum.sqrt()
}

fn plane_wave_oracle(amp: f64, k: [f64; 2], phase: f64) -> Analytic<PlaneWave> {
    let kn = (k[0] * k[0] + k[1] * k[1]).sqrt();
    Analytic(PlaneWave::new(amp, [-k[1] / kn, k[0] / kn, 0.0], [k[0], k[1], 0.0], phase))
}

fn exact_plane_wave(w: &Analytic<PlaneWave>, t: f64, x: &[f64; 3]) -> ([Elem; 3], [Elem; 3]) {
    let pt = [t, x[0], x[1], x[2]];
    let a = w.potential(&pt);
    let f = w.field(&pt);
    (std::array::from_fn(|i| a[i + 1]), std::array::from_fn(|i| f.get(0, i + 1)))
}

#[test]
fn zero_state_is_stationary() {
    let evo = flat(2, 16, Algebra::su2());
    let s = start(&evo, "zero", &[]);
    assert_eq!(evo.constraint_residual(&s), 0.0);
    assert_eq!(evo.energy(&s), 0.0);
    assert!(evo.sample_f(&s).iter().all(|f| *f == TwoForm::ZERO));
    let next = evo.step(&s, 0.1).unwrap();
    assert_eq!(next.fields, s.fields);
    assert_eq!((next.step, next.t), (1, 0.1));
}

#[test]
fn plane_wave_data_matches_the_closed_form() {
    let evo = flat(2, 32, Algebra::u1());
    let s = start(&evo, "plane_wave", &[("mx", 1.0), ("my", 2.0), ("amplitude", 0.7), ("phase", 0.4)]);
    let w = plane_wave_oracle(0.7, [1.0, 2.0], 0.4);
    assert!(l2_distance(&evo, &s, |x| exact_plane_wave(&w, 0.0, x)) < 1e-13);
    // axis-aligned and diagonal modes are divergence free on the lattice too
    for (mx, my) in [(1.0, 0.0), (0.0, 3.0), (1.0, 1.0), (2.0, -2.0)] {
        let s = start(&evo, "plane_wave", &[("mx", mx), ("my", my)]);
        assert!(evo.constraint_residual(&s) < 1e-10);
    }
    // oblique modes only up to the difference-operator truncation
    let coarse = flat(2, 16, Algebra::u1());
    let r16 = coarse.constraint_residual(&start(&coarse, "plane_wave", &[("mx", 1.0), ("my", 2.0)]));
    let r32 = evo.constraint_residual(&s);
    assert!(r32 < 1e-2 && (r16 / r32).log2() > 3.8, "{r16:e} {r32:e}");
}

#[test]
fn plane_wave_three_torus_is_transverse() {
    let evo = flat(3, 16, Algebra::u1());
    let s = start(&evo, "plane_wave", &[("mx", 0.0), ("my", 1.0), ("mz", 1.0)]);
    let k = [0.0, 1.0, 1.0];
    for p in (0..evo.torus.points()).step_by(37) {
        let dot: f64 = (0..3).map(|i| s.fields.a[p][i].0[0] * k[i]).sum();
        assert!(dot.abs() < 1e-14);
    }
    assert!(evo.constraint_residual(&s) < 1e-10);
}

#[test]
fn sampled_field_matches_the_analytic_wave() {
    let evo = flat(2, 64, Algebra::u1());
    let s = start(&evo, "plane_wave", &[("mx", 1.0), ("my", -1.0), ("amplitude", 0.5)]);
    let w = plane_wave_oracle(0.5, [1.0, -1.0], 0.0);
    let f = evo.sample_f(&s);
    let mut worst = 0.0f64;
    for (p, fp) in f.iter().enumerate() {
        let x = evo.torus.position(p);
        let exact = w.field(&[0.0, x[0], x[1], x[2]]);
        for i in 0..2 {
            assert_eq!(fp.get(0, i + 1), s.fields.e[p][i]);
        }
        worst = worst.max((fp.get(1, 2).0[0] - exact.get(1, 2).0[0]).abs());
        assert_eq!(fp.get(1, 2), -fp.get(2, 1));
    }
    // 4th-order truncation of the curl at k·dx ≈ 0.1
    assert!(worst < 1e-5, "{worst:e}");
}

#[test]
fn plane_wave_converges_at_fourth_order() {
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let evo = flat(2, n, Algebra::u1());
        let s = start(&evo, "plane_wave", &[("mx", 1.0), ("my", 1.0), ("phase", 0.3)]);
        let dt = 0.25 * evo.torus.dx();
        let period = 2.0 * PI / 2f64.sqrt();
        let steps = (period / dt).round() as u64;
        let dt = period / steps as f64;
        let s = run(&evo, s, dt, steps);
        let w = plane_wave_oracle(1.0, [1.0, 1.0], 0.3);
        errs.push(l2_distance(&evo, &s, |x| exact_plane_wave(&w, s.t, x)));
    }
    for pair in errs.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!((3.7..4.3).contains(&order), "errors {errs:?}");
    }
}

#[test]
fn standing_wave_energy_is_constant_over_a_period() {
    let evo = flat(2, 32, Algebra::u1());
    let left = evo.initial_data("plane_wave", &params(&[("mx", 1.0)])).unwrap();
    let right = evo.initial_data("plane_wave", &params(&[("mx", -1.0)])).unwrap();
    let mut data = left.clone();
    for p in 0..evo.torus.points() {
        for i in 0..2 {
            data.a[p][i] = left.a[p][i] - right.a[p][i];
            data.e[p][i] = left.e[p][i] - right.e[p][i];
        }
    }
    let s = EvolutionState::new(data, 0.0);
    let e0 = evo.energy(&s);
    let dt = 2.0 * PI / 128.0;
    let mut worst = 0.0f64;
    evo.advance(s, dt, 128, 8, |st| {
        worst = worst.max((evo.energy(st) - e0).abs() / e0);
        Ok(())
    })
    .unwrap();
    assert!(e0 > 0.0);
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn energy_is_the_lattice_hamiltonian() {
    let evo = flat(2, 32, Algebra::su2());
    let s = start(&evo, "pulse", &[("amplitude", 0.8)]);
    let s = run(&evo, s, 0.05, 20);
    let h = lattice_energy_2d(&evo, &s, |_| 1.0);
    assert!((evo.energy(&s) - h).abs() < 1e-12 * h);
    // the same on a conformally curved torus
    let torus = Torus::new(2, 32, 2.0 * PI).unwrap();
    let metric = SpatialMetric::Conformal { amplitude: 0.3 };
    let curved = Evolution::new(torus, Algebra::su2(), metric, Exec::Parallel).unwrap();
    let s = start(&curved, "pulse", &[]);
    let s = run(&curved, s, 0.02, 10);
    let psi4 = |x: &[f64; 3]| metric.at(&torus, x)[0][0];
    let h = lattice_energy_2d(&curved, &s, psi4);
    assert!((curved.energy(&s) - h).abs() < 1e-12 * h);
}

#[test]
fn pulse_constraint_converges_at_fourth_order() {
    for metric in [SpatialMetric::Flat, SpatialMetric::Conformal { amplitude: 0.2 }] {
        let mut res = Vec::new();
        for n in [16, 32, 64] {
            let evo =
                Evolution::new(Torus::new(2, n, 2.0 * PI).unwrap(), Algebra::su2(), metric, Exec::Parallel).unwrap();
            res.push(evo.constraint_residual(&start(&evo, "pulse", &[])));
        }
        let order = (res[1] / res[2]).log2();
        assert!((3.5..4.5).contains(&order), "{metric:?}: {res:?}");
    }
}

#[test]
fn pulse_energy_drift_per_crossing() {
    let evo = flat(2, 64, Algebra::su2());
    let s = start(&evo, "pulse", &[]);
    let e0 = evo.energy(&s);
    let c0 = evo.constraint_residual(&s);
    let dt = 0.25 * evo.torus.dx();
    let s = run(&evo, s, dt, (evo.torus.length / dt).round() as u64);
    assert!(((evo.energy(&s) - e0) / e0).abs() < 1e-6);
    assert!(evo.constraint_residual(&s) < 10.0 * c0);
    // the field has evolved away from its initial shape
    assert!(s.fields.a.iter().any(|v| evo.alg.norm(&v[0]) > 0.1));
}

#[test]
fn static_curved_metric_conserves_energy() {
    let torus = Torus::new(2, 32, 2.0 * PI).unwrap();
    let evo =
        Evolution::new(torus, Algebra::su2(), SpatialMetric::Conformal { amplitude: 0.25 }, Exec::Parallel).unwrap();
    let s = start(&evo, "pulse", &[]);
    let e0 = evo.energy(&s);
    let dt = 0.25 * evo.cfl_limit();
    let s = run(&evo, s, dt, (torus.length / dt).round() as u64);
    assert!(((evo.energy(&s) - e0) / e0).abs() < 1e-6);
}

#[test]
fn gauss_law_responds_linearly_to_perturbations() {
    let evo = flat(2, 16, Algebra::su2());
    let base = start(&evo, "plane_wave", &[("mx", 1.0), ("amplitude", 0.9)]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise: Vec<[Elem; 3]> = (0..evo.torus.points())
        .map(|_| {
            std::array::from_fn(|i| {
                if i < 2 {
                    Elem([
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        0.0,
                        0.0,
                        0.0,
                    ])
                } else {
                    Elem::ZERO
                }
            })
        })
        .collect();
    let perturbed = |eps: f64| {
        let mut s = base.clone();
        for (e, n) in s.fields.e.iter_mut().zip(&noise) {
            for i in 0..2 {
                e[i] += n[i] * eps;
            }
        }
        evo.constraint_residual(&s)
    };
    assert!(evo.constraint_residual(&base) < 1e-12);
    let (r1, r2) = (perturbed(1e-6), perturbed(1e-3));
    assert!(r1 > 0.0);
    assert!((r2 / r1 - 1e3).abs() < 1e-3, "{r1:e} {r2:e}");
}

#[test]
fn cfl_and_non_finite_states_are_rejected() {
    let evo = flat(2, 16, Algebra::u1());
    let s = start(&evo, "plane_wave", &[]);
    let limit = evo.cfl_limit();
    assert!((limit - 0.5 * evo.torus.dx()).abs() < 1e-15);
    assert!(matches!(evo.step(&s, 1.01 * limit), Err(Error::Cfl { .. })));
    assert!(evo.step(&s, limit).is_ok());
    assert!(matches!(evo.step(&s, -0.1), Err(Error::Cfl { .. })));
    // the fastest speed on ψ⁴δ is ψ_min⁻²
    let torus = Torus::new(2, 16, 2.0 * PI).unwrap();
    let curved =
        Evolution::new(torus, Algebra::u1(), SpatialMetric::Conformal { amplitude: 0.5 }, Exec::Parallel).unwrap();
    assert!((curved.cfl_limit() - 0.5 * torus.dx() * 0.25).abs() < 1e-12);
    let mut bad = s.clone();
    bad.fields.e[5][0].0[0] = f64::NAN;
    assert!(matches!(evo.step(&bad, 0.1), Err(Error::NonFinite(_))));
}

#[test]
fn configuration_errors() {
    let evo = flat(2, 16, Algebra::su2());
    assert!(matches!(evo.initial_data("soliton", &params(&[])), Err(Error::UnknownCatalogEntry { .. })));
    assert!(matches!(evo.initial_data("pulse", &params(&[("widht", 1.0)])), Err(Error::Config(_))));
    assert!(matches!(evo.initial_data("plane_wave", &params(&[("mx", 0.5)])), Err(Error::Config(_))));
    assert!(matches!(evo.initial_data("plane_wave", &params(&[("mx", 0.0)])), Err(Error::Config(_))));
    assert!(Torus::new(4, 16, 1.0).is_err());
    assert!(Torus::new(2, 4, 1.0).is_err());
    assert!(Torus::new(2, 16, -1.0).is_err());
    let torus = Torus::new(2, 16, 1.0).unwrap();
    assert!(Evolution::new(torus, Algebra::u1(), SpatialMetric::Conformal { amplitude: 1.0 }, Exec::Parallel).is_err());
    let curved =
        Evolution::new(torus, Algebra::u1(), SpatialMetric::Conformal { amplitude: 0.1 }, Exec::Parallel).unwrap();
    assert!(matches!(curved.initial_data("plane_wave", &params(&[])), Err(Error::Config(_))));
}

#[test]
fn dissipation_damps_grid_scale_noise_only() {
    let evo = flat(2, 16, Algebra::u1());
    let mut data = CauchyData::zeros(evo.torus.points());
    for p in 0..evo.torus.points() {
        let c = evo.torus.coords(p);
        data.e[p][0] = Elem::scalar(if (c[0] + c[1]).is_multiple_of(2) { 0.01 } else { -0.01 });
    }
    let s = EvolutionState::new(data, 0.0);
    let e0 = evo.energy(&s);
    // the centred stencil does not see the checkerboard
    let plain = run(&evo, s.clone(), 0.1, 20);
    assert!((evo.energy(&plain) - e0).abs() < 1e-14 * e0.max(1.0));
    let damped =
        Evolution::new(evo.torus, Algebra::u1(), SpatialMetric::Flat, Exec::Parallel).unwrap().with_dissipation(0.1);
    let d = run(&damped, s, 0.1, 40);
    assert!(damped.energy(&d) < 0.1 * e0);
    // smooth data is left almost untouched
    let smooth = start(&damped, "plane_wave", &[]);
    let e1 = damped.energy(&smooth);
    let after = run(&damped, smooth, 0.1, 40);
    assert!(((damped.energy(&after) - e1) / e1).abs() < 1e-3);
}

#[test]
fn sequential_and_parallel_runs_agree_bitwise() {
    let torus = Torus::new(2, 16, 2.0 * PI).unwrap();
    let seq =
        Evolution::new(torus, Algebra::su2(), SpatialMetric::Conformal { amplitude: 0.2 }, Exec::Sequential).unwrap();
    let par =
        Evolution::new(torus, Algebra::su2(), SpatialMetric::Conformal { amplitude: 0.2 }, Exec::Parallel).unwrap();
    let s = start(&seq, "pulse", &[]);
    let a = run(&seq, s.clone(), 0.05, 5);
    let b = run(&par, s, 0.05, 5);
    assert_eq!(a, b);
    assert_eq!(seq.energy(&a).to_bits(), par.energy(&b).to_bits());
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    let evo = flat(3, 8, Algebra::su2());
    let s = run(&evo, start(&evo, "pulse", &[]), 0.05, 3);
    write_checkpoint(&path, &evo, &s).unwrap();
    assert_eq!(read_checkpoint(&path, &evo).unwrap(), s);
    let other = flat(3, 10, Algebra::su2());
    assert!(matches!(read_checkpoint(&path, &other), Err(Error::GridMismatch(_))));
    let mut bytes = std::fs::read(&path).unwrap();
    let truncated = dir.path().join("short.bin");
    std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_checkpoint(&truncated, &evo), Err(Error::Format(_))));
    bytes[8] = 99;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path, &evo), Err(Error::Format(_))));
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path, &evo), Err(Error::Format(_))));
}

#[test]
fn diagnostics_series_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diag.csv");
    let evo = flat(2, 16, Algebra::su2());
    let mut rows = Vec::new();
    evo.advance(start(&evo, "pulse", &[]), 0.1, 6, 2, |s| {
        rows.push(evo.diagnostics(s));
        Ok(())
    })
    .unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 4, 6]);
    write_diagnostics_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,t,energy,constraint,max_field"));
    assert_eq!(lines.count(), 4);
}

fn maxwell_history(n: usize) -> History {
    let evo = flat(3, n, Algebra::u1());
    let mut data = CauchyData::zeros(evo.torus.points());
    for (mx, my, mz, amp, ph) in [(1.0, 0.0, 0.0, 0.7, 0.3), (0.0, 1.0, 1.0, 0.5, 1.1), (1.0, -1.0, 0.0, 0.4, 2.0)] {
        let d = evo
            .initial_data(
                "plane_wave",
                &params(&[("mx", mx), ("my", my), ("mz", mz), ("amplitude", amp), ("phase", ph)]),
            )
            .unwrap();
        for p in 0..evo.torus.points() {
            for i in 0..3 {
                data.a[p][i] += d.a[p][i];
                data.e[p][i] += d.e[p][i];
            }
        }
    }
    let dt = 0.25 * evo.torus.dx();
    let count = (1.6 / (2.0 * dt)).ceil() as usize + 1;
    History::record(&evo, EvolutionState::new(data, 0.0), dt, 2, count).unwrap()
}

#[test]
fn history_interpolates_the_evolved_wave() {
    let evo = flat(3, 24, Algebra::u1());
    let s = start(&evo, "plane_wave", &[("mx", 1.0), ("my", 1.0), ("amplitude", 0.6)]);
    let dt = 0.25 * evo.torus.dx();
    let h = History::record(&evo, s.clone(), dt, 3, 8).unwrap();
    let (t0, t1) = h.time_span();
    assert_eq!(t0, 0.0);
    assert!((t1 - 21.0 * dt).abs() < 1e-12);
    // the profile's polarization, read off where k·x = 3π/2 and A = amplitude·ε
    let a0 = s.fields.a[evo.torus.index([18, 0, 0])];
    let pol = [a0[0].0[0], a0[1].0[0], a0[2].0[0]].map(|v| v / 0.6);
    assert!((pol.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    let w = Analytic(PlaneWave::new(0.6, pol, [1.0, 1.0, 0.0], 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut worst_jet = 0.0f64;
    for _ in 0..40 {
        let x = [
            rng.random_range(t0..t1),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(-1.0..1.0),
        ];
        let (f, jet) = h.field_jet(&x);
        let (fe, jete) = w.field_jet(&x);
        worst = worst.max(f.sub(&fe).0.iter().map(|e| e.max_abs()).fold(0.0, f64::max));
        for k in 0..4 {
            worst_jet = worst_jet.max(jet[k].sub(&jete[k]).0.iter().map(|e| e.max_abs()).fold(0.0, f64::max));
        }
    }
    assert!(worst < 1e-3, "{worst:e}");
    assert!(worst_jet < 1e-2, "{worst_jet:e}");
    let outside = h.field(&[t1 + 0.1, 0.0, 0.0, 0.0]);
    assert!(outside.0[0].0[0].is_nan());
    let plane = flat(2, 16, Algebra::u1());
    assert!(matches!(History::record(&plane, start(&plane, "zero", &[]), 0.1, 1, 3), Err(Error::GridMismatch(_))));
}

#[test]
fn evolved_maxwell_field_balances_energy_and_flux() {
    let chart = Minkowski;
    let plan = BalancePlan { t_initial: 0.1, times: vec![0.6, 1.0], n_time: 4, n_radial: 16 };
    let mut last = f64::INFINITY;
    for n in [16, 24] {
        let h = maxwell_history(n);
        let vertex = Vertex::at_rest(&chart, [1.4, 3.0, 3.1, 3.2]).unwrap();
        let cone_params = balance_cone(&chart, &vertex, &plan, 16, 4e-3, Exec::Parallel).unwrap();
        let cone = NullConeBundle::emanate(&chart, vertex, &cone_params, Exec::Parallel).unwrap();
        let rows = energy_balance(&h, &cone, &plan, TimeVector::Coordinate, Exec::Parallel).unwrap();
        let worst = rows.iter().map(|r| r.relative_residual()).fold(0.0, f64::max);
        assert!(rows.iter().all(|r| r.bulk == 0.0 && r.flux > 0.0));
        assert!(worst < 1e-3, "n = {n}: {worst:e}");
        assert!(worst < 0.5 * last);
        last = worst;
    }
}

fn random_smooth(evo: &Evolution, seed: u64, scale: f64) -> CauchyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = evo.torus;
    let mut data = CauchyData::zeros(t.points());
    let k = 2.0 * PI / t.length;
    for _ in 0..3 {
        let m = [rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64];
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp: Vec<f64> = (0..4 * evo.alg.dim()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        for p in 0..t.points() {
            let x = t.position(p);
            let s = (k * (m[0] * x[0] + m[1] * x[1]) + phase).sin();
            for i in 0..2 {
                for c in 0..evo.alg.dim() {
                    data.a[p][i].0[c] += amp[i * evo.alg.dim() + c] * s;
                    data.e[p][i].0[c] += amp[(2 + i) * evo.alg.dim() + c] * s;
                }
            }
        }
    }
    data
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn semi_discrete_flow_conserves_energy(seed in 0u64..1000, curved in any::<bool>()) {
        let torus = Torus::new(2, 12, 2.0 * PI).unwrap();
        let metric = if curved { SpatialMetric::Conformal { amplitude: 0.3 } } else { SpatialMetric::Flat };
        let evo = Evolution::new(torus, Algebra::su2(), metric, Exec::Sequential).unwrap();
        let y = random_smooth(&evo, seed, 0.5);
        let r = evo.rhs(&y);
        let shifted = |eps: f64| {
            let mut d = y.clone();
            for p in 0..torus.points() {
                for i in 0..2 {
                    d.a[p][i] += r.a[p][i] * eps;
                    d.e[p][i] += r.e[p][i] * eps;
                }
            }
            evo.energy(&EvolutionState::new(d, 0.0))
        };
        let eps = 1e-4;
        let rate = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let scale = evo.energy(&EvolutionState::new(y.clone(), 0.0));
        prop_assert!(rate.abs() < 1e-7 * scale, "rate {rate:e} energy {scale:e}");
    }

    #[test]
    fn zero_data_and_energy_positivity(seed in 0u64..1000) {
        let evo = flat(2, 12, Algebra::su2());
        let y = random_smooth(&evo, seed, 1.0);
        let s = EvolutionState::new(y, 0.0);
        prop_assert!(evo.energy(&s) > 0.0);
        let f = evo.sample_f(&s);
        for fp in &f {
            for a in 0..4 {
                prop_assert_eq!(fp.get(a, a), Elem::ZERO);
            }
        }
    }
}
