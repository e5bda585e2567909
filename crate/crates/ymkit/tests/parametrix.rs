use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ymkit::fields::{Analytic, ConstantPotential, Coulomb, FieldSource, PlaneWave, Pointwise, Vacuum};
use ymkit::geometry::{inverse_metric, Minkowski, SchwarzschildIsotropic, SpacetimeChart};
use ymkit::liegauge::{pair_inner, Algebra, Elem, TwoForm, ZeroPotential};
use ymkit::nullcone::{ConeParams, NullConeBundle, Vertex};
use ymkit::parametrix::{
    assemble_representation, canonical_seeds, extrapolate_to_zero, induced_laplacian, laplacian_forms, solve_transport,
    solve_transport_many, tangential_derivative, vertex_limit, Shell, TermBreakdown,
};
use ymkit::{Error, Exec};

const P: [f64; 4] = [1.0, 0.2, -0.1, 0.3];

fn cone_to_slice<'c>(
    chart: &'c dyn SpacetimeChart,
    p: [f64; 4],
    n_theta: usize,
    ds: f64,
    slices: Vec<f64>,
) -> NullConeBundle<'c> {
    let v = Vertex::at_rest(chart, p).unwrap();
    let t_min = slices.iter().copied().fold(f64::INFINITY, f64::min);
    let s_max = NullConeBundle::s_max_for_slice(chart, &v, n_theta.min(6), t_min, Exec::Parallel).unwrap();
    let params = ConeParams { n_theta, n_phi: 2 * n_theta, s_max, ds, slices, ..ConeParams::default() };
    NullConeBundle::emanate(chart, v, &params, Exec::Parallel).unwrap()
}

fn flat_shell(chart: &Minkowski, n_theta: usize, s: f64) -> (NullConeBundle<'_>, usize) {
    let v = Vertex::at_rest(chart, P).unwrap();
    let params = ConeParams { n_theta, n_phi: 2 * n_theta, s_max: s + 0.01, ds: 1e-2, ..ConeParams::default() };
    let cone = NullConeBundle::emanate(chart, v, &params, Exec::Parallel).unwrap();
    let k = cone.shells.iter().position(|x| (x - s).abs() < 1e-9).unwrap();
    (cone, k)
}

fn plane_wave() -> Analytic<PlaneWave> {
    Analytic(PlaneWave::new(0.7, [0.0, 0.6, -0.8], [2.0, 0.8, 0.6], 0.3))
}

fn su2_constant() -> Analytic<ConstantPotential> {
    Analytic(ConstantPotential {
        alg: Algebra::su2(),
        values: [[0.3, -0.2, 0.1], [0.5, 0.0, -0.4], [0.0, 0.7, 0.2], [-0.3, 0.1, 0.6]],
    })
}

#[test]
fn minkowski_weight_is_the_seed() {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 6, 1e-3, vec![0.0]);
    let alg = Algebra::u1();
    let seeds = canonical_seeds(&alg);
    assert_eq!(seeds.len(), 6);
    for tr in solve_transport_many(&cone, &ZeroPotential, &alg, &seeds, Exec::Parallel).unwrap() {
        assert!(tr.max_seed_deviation() < 1e-10, "{:e}", tr.max_seed_deviation());
        assert!(tr.s.last().unwrap() >= &1.0);
    }
    // an abelian potential drops out of the transport
    let pw = plane_wave();
    let tr = solve_transport(&cone, &Pointwise(&pw), &alg, &seeds[2], Exec::Parallel).unwrap();
    assert!(tr.max_seed_deviation() < 1e-10);
}

#[test]
fn nonabelian_transport_preserves_the_pairing() {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 4, 2e-3, vec![0.0]);
    let src = su2_constant();
    let alg = src.algebra().clone();
    let seed = {
        let mut j = TwoForm::ZERO;
        j.0[0] = Elem::from_slice(&[1.0, 0.0, 0.0]);
        j.0[4] = Elem::from_slice(&[0.0, -0.5, 0.2]);
        j
    };
    let tr = solve_transport(&cone, &Pointwise(&src), &alg, &seed, Exec::Parallel).unwrap();
    let gi = inverse_metric(&chart.metric(&P), &P).unwrap();
    let norm0 = pair_inner(&alg, &seed, &seed.raise(&gi));
    let mut worst = 0.0f64;
    for vals in &tr.values {
        for v in vals {
            worst = worst.max((pair_inner(&alg, v, &v.raise(&gi)) - norm0).abs());
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
    // the bracket does rotate the weight
    assert!(tr.max_seed_deviation() > 1e-2);
}

#[test]
fn schwarzschild_weight_stays_close_to_the_seed() {
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let rho = chart.isotropic_radius(10.0);
    let alg = Algebra::u1();
    let mut ratios = Vec::new();
    for tau in [0.125, 0.25, 0.5] {
        let cone = cone_to_slice(&chart, [0.0, rho, 0.0, 0.0], 6, 1e-3, vec![-tau]);
        let mut worst = 0.0f64;
        for seed in canonical_seeds(&alg) {
            let tr = solve_transport(&cone, &ZeroPotential, &alg, &seed, Exec::Parallel).unwrap();
            worst = worst.max(tr.sup_ratio(&cone, &alg, tau).unwrap());
            assert!(tr.norm_law_residual(&cone, &alg).unwrap() < 1e-8);
        }
        assert!(worst <= 1.5, "τ = {tau}: {worst}");
        ratios.push(worst - 1.0);
    }
    // C(τ) − 1 shrinks at least linearly with τ
    assert!(ratios[0] < 0.6 * ratios[1] && ratios[1] < 0.6 * ratios[2], "{ratios:?}");
}

#[test]
fn transport_refuses_caustics_and_short_cones() {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 3, 1e-2, vec![0.0]);
    let mut short = cone_to_slice(&chart, P, 3, 1e-2, vec![0.0]);
    for r in short.rays.iter_mut() {
        r.termination = Some(ymkit::nullcone::Termination::Caustic { s: 0.5 });
    }
    let alg = Algebra::u1();
    let err = solve_transport(&short, &ZeroPotential, &alg, &canonical_seeds(&alg)[0], Exec::Sequential).unwrap_err();
    assert!(matches!(err, Error::Caustic { .. }));
    // slice beyond the end of the cone
    let v = cone.vertex;
    let params = ConeParams { n_theta: 3, n_phi: 6, s_max: 0.5, ds: 1e-2, slices: vec![0.0], ..ConeParams::default() };
    let cut = NullConeBundle::emanate(&chart, v, &params, Exec::Sequential).unwrap();
    let nb = cut.neighbours(1e-3, Exec::Sequential).unwrap();
    let err =
        assemble_representation(&cut, &nb, &plane_wave(), &canonical_seeds(&alg), 0, Exec::Sequential).unwrap_err();
    assert!(matches!(err, Error::MissingInitialData { .. }), "{err}");
}

#[test]
fn tangential_derivatives_match_harmonics() {
    let chart = Minkowski;
    let (cone, k) = flat_shell(&chart, 12, 0.5);
    let alg = Algebra::u1();
    let shell = Shell::new(&cone, k, &ZeroPotential).unwrap();
    let n = cone.n_rays();
    let constant = vec![TwoForm::unit(3, Elem::scalar(2.5)); n];
    let t = tangential_derivative(&cone.grid, &shell, &alg, &constant);
    let worst = t.d.iter().flatten().map(|v| v.max_abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
    assert!(t.warning(0.5).is_none());
    // Y_10 = √(3/4π) cos θ
    let c = (3.0 / (4.0 * PI)).sqrt();
    let y10: Vec<TwoForm> = (0..n).map(|i| TwoForm::unit(0, Elem::scalar(c * cone.grid.theta(i).cos()))).collect();
    let t = tangential_derivative(&cone.grid, &shell, &alg, &y10);
    for i in 0..n {
        let th = cone.grid.theta(i);
        assert!((t.d[0][i].0[0].0[0] + c * th.sin()).abs() < 1e-8);
        assert!(t.d[1][i].0[0].0[0].abs() < 1e-8);
        // orthonormal-frame components carry the 1/s of the sphere radius
        let fr = t.frame(&shell);
        assert!((fr[0][i].0[0].0[0].abs() - c * th.sin() / 0.5).abs() < 1e-8);
    }
    // a field with power in the top degrees is flagged
    let rough: Vec<TwoForm> = (0..n)
        .map(|i| TwoForm::unit(0, Elem::scalar((11.0 * cone.grid.phi(i)).cos() * cone.grid.theta(i).sin().powi(11))))
        .collect();
    assert!(tangential_derivative(&cone.grid, &shell, &alg, &rough).warning(0.5).is_some());
}

#[test]
fn tangential_derivative_norm_is_stable_under_refinement() {
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let rho = chart.isotropic_radius(10.0);
    let alg = Algebra::u1();
    let seed = canonical_seeds(&alg)[1];
    let mut norms = Vec::new();
    for n_theta in [6, 8, 12] {
        let cone = cone_to_slice(&chart, [0.0, rho, 0.0, 0.0], n_theta, 2e-3, vec![-0.5]);
        let tr = solve_transport(&cone, &ZeroPotential, &alg, &seed, Exec::Parallel).unwrap();
        let mut per_shell = vec![0.0];
        for j in 1..tr.s.len() {
            if tr.s[j] > 0.5 {
                break;
            }
            let shell = Shell::new(&cone, tr.shell(j), &ZeroPotential).unwrap();
            let lam: Vec<TwoForm> = (0..cone.n_rays()).map(|i| tr.lambda(i, j)).collect();
            let fr = tangential_derivative(&cone.grid, &shell, &alg, &lam).frame(&shell);
            let dens: Vec<f64> = (0..cone.n_rays())
                .map(|i| {
                    let sq: f64 = fr.iter().map(|d| d[i].0.iter().map(|e| e.0[0] * e.0[0]).sum::<f64>()).sum();
                    sq * shell.nodes[i].basis.area
                })
                .collect();
            per_shell.push(cone.grid.integrate(&dens));
        }
        norms.push(ymkit::nullcone::simpson(&per_shell, tr.s[1]).sqrt());
    }
    assert!(norms.iter().all(|v| v.is_finite()));
    assert!((norms[1] - norms[2]).abs() <= 1e-3 * norms[2].max(1e-12) + 1e-12, "{norms:?}");
}

#[test]
fn laplacian_eigenvalues_on_flat_spheres() {
    let chart = Minkowski;
    let s = 0.5;
    let (cone, k) = flat_shell(&chart, 12, s);
    let alg = Algebra::u1();
    let shell = Shell::new(&cone, k, &ZeroPotential).unwrap();
    type Harmonic = fn([f64; 3]) -> f64;
    let cases: [(usize, Harmonic); 4] = [
        (0, |_| 1.0),
        (2, |w| w[0] * w[1]),
        (3, |w| 5.0 * w[2].powi(3) - 3.0 * w[2]),
        (4, |w| w[0].powi(4) - 6.0 * w[0] * w[0] * w[1] * w[1] + w[1].powi(4)),
    ];
    for (l, f) in cases {
        let field: Vec<TwoForm> =
            (0..cone.n_rays()).map(|i| TwoForm::unit(2, Elem::scalar(f(cone.grid.direction(i))))).collect();
        let (lap, _) = induced_laplacian(&cone.grid, &shell, &alg, &field);
        let ev = -((l * (l + 1)) as f64) / (s * s);
        for i in 0..cone.n_rays() {
            let want = ev * field[i].0[2].0[0];
            assert!((lap[i].0[2].0[0] - want).abs() < 1e-6 * (1.0 + want.abs()), "ℓ = {l}");
        }
    }
}

fn random_polynomial_field(rng: &mut ChaCha8Rng, alg: &Algebra, w: &[[f64; 3]]) -> Vec<TwoForm> {
    // degree ≤ 4 polynomials in ω̂ are band-limited on the sphere
    let monomials: Vec<[i32; 3]> =
        (0..=4).flat_map(|a| (0..=4 - a).flat_map(move |b| (0..=4 - a - b).map(move |c| [a, b, c]))).collect();
    let coeff: Vec<Vec<f64>> =
        (0..6 * alg.dim()).map(|_| monomials.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    w.iter()
        .map(|d| {
            let mut f = TwoForm::ZERO;
            for p in 0..6 {
                for c in 0..alg.dim() {
                    let cf = &coeff[p * alg.dim() + c];
                    f.0[p].0[c] = monomials
                        .iter()
                        .zip(cf)
                        .map(|(m, a)| a * d[0].powi(m[0]) * d[1].powi(m[1]) * d[2].powi(m[2]))
                        .sum();
                }
            }
            f
        })
        .collect()
}

#[test]
fn laplacian_is_self_adjoint_on_cone_spheres() {
    let chart = Minkowski;
    let (cone, k) = flat_shell(&chart, 16, 0.7);
    let src = su2_constant();
    let alg = src.algebra().clone();
    let shell = Shell::new(&cone, k, &Pointwise(&src)).unwrap();
    let dirs: Vec<[f64; 3]> = (0..cone.n_rays()).map(|i| cone.grid.direction(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let lam = random_polynomial_field(&mut rng, &alg, &dirs);
        let f = random_polynomial_field(&mut rng, &alg, &dirs);
        let (direct, by_parts) = laplacian_forms(&cone.grid, &shell, &alg, &lam, &f);
        assert!(direct.abs() > 1e-3);
        assert!((direct - by_parts).abs() < 1e-8, "{direct} vs {by_parts}");
    }
}

#[test]
fn laplacian_is_self_adjoint_on_curved_spheres() {
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let rho = chart.isotropic_radius(10.0);
    let v = Vertex::at_rest(&chart, [0.0, rho, 0.0, 0.0]).unwrap();
    let params = ConeParams { n_theta: 16, n_phi: 32, s_max: 0.6, ds: 1e-2, ..ConeParams::default() };
    let cone = NullConeBundle::emanate(&chart, v, &params, Exec::Parallel).unwrap();
    let src = Analytic(Coulomb::isotropic(1.0, 1.0));
    let alg = src.algebra().clone();
    let k = cone.n_shells() - 1;
    let shell = Shell::new(&cone, k, &Pointwise(&src)).unwrap();
    let dirs: Vec<[f64; 3]> = (0..cone.n_rays()).map(|i| cone.grid.direction(i)).collect();
    let lam = random_polynomial_field(&mut ChaCha8Rng::seed_from_u64(3), &alg, &dirs);
    let f: Vec<TwoForm> = (0..cone.n_rays()).map(|i| src.field(&cone.node(i, k).x)).collect();
    let (direct, by_parts) = laplacian_forms(&cone.grid, &shell, &alg, &lam, &f);
    assert!((direct - by_parts).abs() < 1e-8 * direct.abs().max(1.0), "{direct} vs {by_parts}");
}

#[test]
fn vanishing_field_gives_vanishing_terms() {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 4, 1e-2, vec![0.5]);
    let nb = cone.neighbours(1e-3, Exec::Parallel).unwrap();
    let src = Analytic(Vacuum(Algebra::u1()));
    let reports =
        assemble_representation(&cone, &nb, &src, &canonical_seeds(&Algebra::u1()), 0, Exec::Parallel).unwrap();
    for r in reports {
        assert_eq!(r.reconstructed, 0.0);
        assert!(r.terms.values().iter().all(|v| *v == 0.0));
    }
}

fn plane_wave_errors(n_theta: usize, ds: f64) -> Vec<ymkit::parametrix::RepresentationReport> {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, n_theta, ds, vec![0.0]);
    let nb = cone.neighbours(1e-3, Exec::Parallel).unwrap();
    assemble_representation(&cone, &nb, &plane_wave(), &canonical_seeds(&Algebra::u1()), 0, Exec::Parallel).unwrap()
}

#[test]
fn plane_wave_is_reconstructed_from_its_data() {
    let reports = plane_wave_errors(16, 1e-3);
    for r in &reports {
        assert!(r.relative_error < 2e-2, "{r:?}");
        // bookkeeping: the reconstruction is the sum of its parts
        assert_eq!(r.reconstructed.to_bits(), r.terms.total().to_bits());
        // on a flat cone only the data on the cut contribute
        let cone_terms = [r.terms.source, r.terms.laplacian, r.terms.torsion, r.terms.mass_aspect, r.terms.bracket];
        assert!(cone_terms.iter().all(|v| v.abs() < 1e-8), "{:?}", r.terms);
        assert!((r.laplacian_direct - r.laplacian_by_parts).abs() < 1e-8);
        assert!(r.warnings.is_empty());
    }
    let worst = reports.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn plane_wave_error_decreases_under_refinement() {
    let mut errs = Vec::new();
    let levels = [(3usize, 4e-3), (4, 2e-3), (6, 1e-3)];
    for &(n_theta, ds) in &levels {
        let worst = plane_wave_errors(n_theta, ds).iter().map(|r| r.relative_error).fold(0.0, f64::max);
        errs.push(worst);
    }
    for w in 0..levels.len() - 1 {
        let order = (errs[w] / errs[w + 1]).ln() / (levels[w + 1].0 as f64 / levels[w].0 as f64).ln();
        assert!(order >= 1.0, "errors {errs:?}");
    }
}

#[test]
fn report_serializes_terms_and_shell_partials() {
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 4, 1e-2, vec![0.5]);
    let nb = cone.neighbours(1e-3, Exec::Parallel).unwrap();
    let r =
        &assemble_representation(&cone, &nb, &plane_wave(), &canonical_seeds(&Algebra::u1())[..1], 0, Exec::Parallel)
            .unwrap()[0];
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let csv_path = dir.path().join("shells.csv");
    r.write_json(&json).unwrap();
    r.write_shell_csv(&csv_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for name in TermBreakdown::NAMES {
        assert!(v["terms"][name].is_number(), "{name}");
    }
    assert_eq!(v["reconstructed"].as_f64().unwrap(), r.reconstructed);
    let rows = csv::Reader::from_path(&csv_path).unwrap().records().count();
    assert_eq!(rows, r.shells.len());
    assert!(r.shells.windows(2).all(|w| w[1].s > w[0].s));
}

#[test]
fn shell_integral_of_expansion_tends_to_eight_pi() {
    let alg = Algebra::u1();
    let eps = [0.04, 0.08, 0.12, 0.16];
    // flat: exact at every ε
    let chart = Minkowski;
    let cone = cone_to_slice(&chart, P, 6, 1e-3, eps.iter().map(|e| P[0] - e).collect());
    let f_p = plane_wave().field(&P);
    for seed in canonical_seeds(&alg) {
        let tr = solve_transport(&cone, &ZeroPotential, &alg, &seed, Exec::Parallel).unwrap();
        let vl = vertex_limit(&cone, &tr, &alg, &f_p, &[0, 1, 2, 3]).unwrap();
        for v in &vl.values {
            assert!((v - vl.target).abs() < 1e-9 * vl.target.abs().max(1.0));
        }
    }
    // Schwarzschild with a Coulomb field: extrapolated limit within 1%
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let p = [0.0, chart.isotropic_radius(10.0), 0.0, 0.0];
    let cone = cone_to_slice(&chart, p, 8, 1e-3, eps.iter().map(|e| -e).collect());
    let src = Analytic(Coulomb::isotropic(1.0, 1.0));
    let f_p = src.field(&p);
    let seed = canonical_seeds(&alg)[0];
    let tr = solve_transport(&cone, &ZeroPotential, &alg, &seed, Exec::Parallel).unwrap();
    let vl = vertex_limit(&cone, &tr, &alg, &f_p, &[0, 1, 2, 3]).unwrap();
    assert!(vl.target.abs() > 1e-3);
    assert!(vl.relative_error() < 1e-2, "{vl:?}");
}

#[test]
fn extrapolation_recovers_polynomial_intercepts() {
    let x = [0.1, 0.2, 0.3];
    let y: Vec<f64> = x.iter().map(|t| 2.0 - 3.0 * t + 0.5 * t * t).collect();
    assert!((extrapolate_to_zero(&x, &y) - 2.0).abs() < 1e-12);
}

#[test]
fn coulomb_field_is_reconstructed_on_schwarzschild() {
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let p = [0.0, chart.isotropic_radius(10.0), 0.3, 0.0];
    let cone = cone_to_slice(&chart, p, 8, 2e-3, vec![-1.0]);
    let nb = cone.neighbours(1e-3, Exec::Parallel).unwrap();
    let src = Analytic(Coulomb::isotropic(1.0, 1.0));
    let reports =
        assemble_representation(&cone, &nb, &src, &canonical_seeds(&Algebra::u1()), 0, Exec::Parallel).unwrap();
    for r in &reports {
        assert!(r.relative_error < 1e-5, "{r:?}");
        assert_eq!(r.reconstructed.to_bits(), r.terms.total().to_bits());
        assert!((r.laplacian_direct - r.laplacian_by_parts).abs() < 1e-12);
    }
    // the electric seeds see a curvature-driven source term
    let e = &reports[0];
    assert!(e.terms.source.abs() > 1e-3 * e.reference.abs());
    assert!(e.terms.curvature_first != 0.0);
    assert!((e.terms.curvature_first - e.terms.curvature_second).abs() <= 1e-12 * e.terms.curvature_first.abs());
}
