use proptest::prelude::*;
use ymkit::fields::{Analytic, ConstantPotential, Coulomb, GaussianPotential, PlaneWave, Pointwise};
use ymkit::geometry::{riemann, Flrw, Minkowski, Schwarzschild, SchwarzschildIsotropic, SpacetimeChart, Vec4};
use ymkit::liegauge::cartan::{cartan_antisymmetry_residual, frame_riemann};
use ymkit::liegauge::*;

fn su2() -> Algebra {
    Algebra::su2()
}

fn e(i: usize) -> Elem {
    su2().basis(i)
}

#[test]
fn su2_defining_relations() {
    let a = su2();
    assert_eq!(a.bracket(&e(0), &e(1)), e(2));
    assert_eq!(a.bracket(&e(1), &e(2)), e(0));
    assert_eq!(a.bracket(&e(2), &e(0)), e(1));
    assert!(a.jacobi_residual() < 1e-12);
    assert!(a.ad_invariance_residual() < 1e-12);
    assert!(a.antisymmetry_residual() == 0.0);
}

#[test]
fn so31_is_a_lie_algebra_with_invariant_product() {
    let a = Algebra::so31();
    assert!(a.jacobi_residual() < 1e-12);
    assert!(a.ad_invariance_residual() < 1e-12);
    assert!(a.antisymmetry_residual() == 0.0);
    assert!(!a.is_compact());
}

#[test]
fn element_length_is_checked() {
    assert!(matches!(su2().element(&[1.0, 2.0]), Err(ymkit::Error::BasisMismatch { expected: 3, got: 2 })));
    assert!(Algebra::by_name("g2").is_err());
}

/// Su(2) bracket against the matrix commutator of X = x_k·(−i σ_k / 2).
#[test]
fn su2_bracket_matches_pauli_commutator() {
    use rustfft::num_complex::Complex64 as C;
    let i = C::new(0.0, 1.0);
    let sigma = [
        [[C::new(0.0, 0.0), C::new(1.0, 0.0)], [C::new(1.0, 0.0), C::new(0.0, 0.0)]],
        [[C::new(0.0, 0.0), -i], [i, C::new(0.0, 0.0)]],
        [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(-1.0, 0.0)]],
    ];
    let mat = |x: &Elem| {
        let mut m = [[C::new(0.0, 0.0); 2]; 2];
        for k in 0..3 {
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += -i * sigma[k][r][c] * (x.0[k] / 2.0);
                }
            }
        }
        m
    };
    let mul = |a: &[[C; 2]; 2], b: &[[C; 2]; 2]| {
        let mut m = [[C::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..2 {
                    m[r][c] += a[r][k] * b[k][c];
                }
            }
        }
        m
    };
    let x = Elem::from_slice(&[0.3, -1.2, 0.7]);
    let y = Elem::from_slice(&[1.1, 0.4, -0.5]);
    let (mx, my) = (mat(&x), mat(&y));
    let (xy, yx) = (mul(&mx, &my), mul(&my, &mx));
    let z = mat(&su2().bracket(&x, &y));
    for r in 0..2 {
        for c in 0..2 {
            assert!((xy[r][c] - yx[r][c] - z[r][c]).norm() < 1e-14);
        }
    }
    // ⟨X,Y⟩ = −2 tr(XY) is the Euclidean product on components.
    let tr = xy[0][0] + xy[1][1];
    assert!((-2.0 * tr.re - su2().inner(&x, &y)).abs() < 1e-14);
}

fn elem3() -> impl Strategy<Value = Elem> {
    prop::array::uniform3(-2.0f64..2.0).prop_map(|v| Elem::from_slice(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn bracket_is_antisymmetric_and_ad_invariant(x in elem3(), y in elem3(), z in elem3()) {
        let a = su2();
        prop_assert_eq!(a.bracket(&x, &x), Elem::ZERO);
        prop_assert!((a.bracket(&x, &y) + a.bracket(&y, &x)).max_abs() < 1e-14);
        let jac = a.bracket(&a.bracket(&x, &y), &z) + a.bracket(&a.bracket(&y, &z), &x) + a.bracket(&a.bracket(&z, &x), &y);
        prop_assert!(jac.max_abs() < 1e-12);
        let ad = a.inner(&a.bracket(&z, &x), &y) + a.inner(&x, &a.bracket(&z, &y));
        prop_assert!(ad.abs() < 1e-12);
    }

    #[test]
    fn two_forms_are_antisymmetric(v in prop::array::uniform6(-1.0f64..1.0), a in 0usize..4, b in 0usize..4) {
        let mut f = TwoForm::ZERO;
        for (i, &(p, q)) in PAIRS.iter().enumerate() { f.set(p, q, Elem::scalar(v[i])); }
        prop_assert_eq!(f.get(a, b), -f.get(b, a));
        prop_assert_eq!(f.get(a, a), Elem::ZERO);
    }
}

#[test]
fn plane_wave_curvature_is_the_curl() {
    let u1 = Algebra::u1();
    let a = |x: &Vec4| {
        let mut out = [Elem::ZERO; 4];
        out[2] = Elem::scalar((x[0] - x[1]).sin());
        out
    };
    for &(t, xx) in &[(0.0, 0.0), (0.3, -0.7), (1.2, 2.5)] {
        let f = curvature_from_potential(&u1, &a, &[t, xx, 0.1, -0.2], 1e-3);
        let c = (t - xx).cos();
        assert!((f.get(0, 2).0[0] - c).abs() < 1e-11);
        assert!((f.get(1, 2).0[0] + c).abs() < 1e-11);
        assert!(f.get(0, 1).max_abs() < 1e-12 && f.get(2, 3).max_abs() < 1e-12);
    }
    let zero = curvature_from_potential(&u1, &ZeroPotential, &[0.0; 4], 1e-2);
    assert_eq!(zero, TwoForm::ZERO);
}

#[test]
fn constant_su2_potential_gives_commutator() {
    let alg = su2();
    let a = move |_: &Vec4| [Elem::ZERO, e(0), e(1), Elem::ZERO];
    let f = curvature_from_potential(&alg, &a, &[0.0; 4], 1e-2);
    assert!((f.get(1, 2) - e(2)).max_abs() < 1e-14);
    assert!((f.get(2, 1) + e(2)).max_abs() < 1e-14);
}

fn gaussian(alg: Algebra, seed: f64) -> Analytic<GaussianPotential> {
    let mut c = [[0.0; 3]; 4];
    for (m, row) in c.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = ((m * 3 + i) as f64 * 0.7 + seed).sin() * 0.6;
        }
    }
    Analytic(GaussianPotential { alg, coefficients: c, center: [0.1, -0.2, 0.3, 0.05], width: 1.3 })
}

#[test]
fn covariant_derivative_reduces_to_partial_and_bracket() {
    let alg = su2();
    let chart = Minkowski;
    let x = [0.2, 0.1, -0.3, 0.4];
    // A = 0: plain partial derivative of a Gaussian 2-form.
    let g = gaussian(alg.clone(), 0.3);
    let d = gauge_covariant_derivative(&alg, &chart, &ZeroPotential, &Pointwise(&g), &x, 1e-3).unwrap();
    let (_, df) = ymkit::fields::FieldSource::field_jet(&g, &x);
    for gi in 0..4 {
        for (a, b) in [(0, 1), (1, 3), (2, 3)] {
            assert!((d.get(&[gi, a, b]) - df[gi].get(a, b)).max_abs() < 1e-9);
        }
    }
    // Constant scalar Ψ, constant A: D_αΨ = [A_α, Ψ].
    struct Const(Elem);
    impl GTensorField for Const {
        fn rank(&self) -> usize {
            0
        }
        fn eval(&self, _x: &Vec4) -> GTensor {
            GTensor::scalar(self.0)
        }
    }
    let psi = Elem::from_slice(&[0.4, -0.1, 0.9]);
    let av = [e(0), e(1) * 0.5, e(2), e(0) * -1.0];
    let pot = move |_: &Vec4| av;
    let d = gauge_covariant_derivative(&alg, &chart, &pot, &Const(psi), &x, 1e-2).unwrap();
    for (k, ak) in av.iter().enumerate() {
        assert!((d.get(&[k]) - alg.bracket(ak, &psi)).max_abs() < 1e-14);
    }
}

/// ∇_γ⟨K, G⟩ = ⟨D_γK, G⟩ + ⟨K, D_γG⟩ on a curved chart with a nonabelian potential.
#[test]
fn covariant_derivative_obeys_leibniz_for_the_invariant_product() {
    let alg = su2();
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let pot = gaussian(alg.clone(), 1.1);
    let k = gaussian(alg.clone(), 0.2);
    let gf = gaussian(alg.clone(), 2.9);
    let x = [0.3, 3.0, 1.0, -0.5];
    let h = 1e-3;
    let inner_at = |y: &Vec4| {
        let gi = ymkit::geometry::inverse_metric(&chart.metric(y), y).unwrap();
        metric_inner(&alg, &ymkit::fields::FieldSource::field(&k, y), &ymkit::fields::FieldSource::field(&gf, y), &gi)
    };
    let gi = ymkit::geometry::inverse_metric(&chart.metric(&x), &x).unwrap();
    let dk = covariant_derivative_two_form(&alg, &chart, &pot, &k, &x, h).unwrap();
    let dg = covariant_derivative_two_form(&alg, &chart, &pot, &gf, &x, h).unwrap();
    let kx = ymkit::fields::FieldSource::field(&k, &x);
    let gx = ymkit::fields::FieldSource::field(&gf, &x);
    for c in 0..4 {
        let lhs = (-inner_at(&{
            let mut y = x;
            y[c] += 2.0 * h;
            y
        }) + 8.0
            * inner_at(&{
                let mut y = x;
                y[c] += h;
                y
            })
            - 8.0
                * inner_at(&{
                    let mut y = x;
                    y[c] -= h;
                    y
                })
            + inner_at(&{
                let mut y = x;
                y[c] -= 2.0 * h;
                y
            }))
            / (12.0 * h);
        let rhs = metric_inner(&alg, &dk[c], &gx, &gi) + metric_inner(&alg, &kx, &dg[c], &gi);
        assert!((lhs - rhs).abs() < 1e-8, "γ={c}: {lhs} vs {rhs}");
    }
}

#[test]
fn maxwell_plane_wave_has_vanishing_ym_residual() {
    let w = Analytic(PlaneWave::new(0.7, [0.0, 0.6, 0.8], [2.0, 0.0, 0.0], 0.4));
    let alg = Algebra::u1();
    for x in [[0.0, 0.0, 0.0, 0.0], [0.4, 1.3, -0.2, 0.8]] {
        let r = ym_residual(&alg, &Minkowski, &w, &w, &x, 1e-3).unwrap();
        assert!(r.iter().all(|v| v.max_abs() < 1e-8), "{r:?}");
    }
    // A generic Gaussian field is not a solution.
    let g = gaussian(su2(), 0.5);
    let r = ym_residual(&su2(), &Minkowski, &g, &g, &[0.1, 0.2, 0.3, 0.4], 1e-3).unwrap();
    assert!(r.iter().map(|v| v.max_abs()).fold(0.0, f64::max) > 1e-2);
}

#[test]
fn bianchi_holds_for_curvatures_and_fails_for_hand_built_forms() {
    let alg = su2();
    let pot = gaussian(alg.clone(), 0.9);
    let f = CurvatureOf { alg: &alg, potential: &pot, h: 1e-2 };
    let x = [0.1, 0.2, -0.1, 0.3];
    let r = bianchi_residual(&alg, &Minkowski, &pot, &f, &x, 1e-2).unwrap();
    assert!(bianchi_max(&r) < 1e-6, "{}", bianchi_max(&r));
    // abelian curl: dF = 0
    let u1 = Algebra::u1();
    let pu = gaussian(u1.clone(), 0.4);
    let fu = CurvatureOf { alg: &u1, potential: &pu, h: 1e-2 };
    assert!(bianchi_max(&bianchi_residual(&u1, &Minkowski, &pu, &fu, &x, 1e-2).unwrap()) < 1e-6);
    // F_{xy} = x e₃ is not closed.
    struct Bad;
    impl TwoFormField for Bad {
        fn field(&self, x: &Vec4) -> TwoForm {
            TwoForm::unit(5, Elem::from_slice(&[0.0, 0.0, x[1]]))
        }
    }
    let r = bianchi_residual(&alg, &Minkowski, &ZeroPotential, &Bad, &x, 1e-2).unwrap();
    assert!((bianchi_max(&r) - 1.0).abs() < 1e-8);
}

/// Brute-force S_{μν} with every index summed explicitly.
fn source_oracle(alg: &Algebra, chart: &dyn SpacetimeChart, x: &Vec4, f: &TwoForm) -> [[Elem; 4]; 4] {
    let c = riemann(chart, x).unwrap();
    let gi = c.ginv;
    let fl = f.dense();
    let fu = |a: usize, b: usize| {
        let mut v = Elem::ZERO;
        for m in 0..4 {
            for n in 0..4 {
                v.axpy(gi[a][m] * gi[b][n], &fl[m][n]);
            }
        }
        v
    };
    let mut s = [[Elem::ZERO; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            let mut v = Elem::ZERO;
            for g in 0..4 {
                for a in 0..4 {
                    v.axpy(-2.0 * c.riemann[g][mu][nu][a], &fu(a, g));
                    let mut f_nu_up_g = Elem::ZERO;
                    let mut f_up_g_mu = Elem::ZERO;
                    f_nu_up_g.axpy(gi[a][g], &fl[nu][a]);
                    f_up_g_mu.axpy(gi[g][a], &fl[a][mu]);
                    v.axpy(-c.ricci[mu][g], &f_nu_up_g);
                    v.axpy(-c.ricci[nu][g], &f_up_g_mu);
                    let mut f_a_mu = Elem::ZERO;
                    f_a_mu.axpy(gi[a][g], &fl[g][mu]);
                    v -= alg.bracket(&f_a_mu, &fl[nu][a]) * 2.0;
                }
            }
            s[mu][nu] = v;
        }
    }
    s
}

#[test]
fn wave_source_matches_index_by_index_contraction() {
    let x = [0.0, 7.0, 1.1, 0.4];
    let chart = Schwarzschild { mass: 1.0 };
    for alg in [Algebra::u1(), su2()] {
        let g = gaussian(alg.clone(), 0.1);
        let f = ymkit::fields::FieldSource::field(&g, &x);
        let curv = riemann(&chart, &x).unwrap();
        let s = wave_source(&alg, &curv, &f);
        let o = source_oracle(&alg, &chart, &x, &f);
        for mu in 0..4 {
            for nu in 0..4 {
                assert!((s.get(mu, nu) - o[mu][nu]).max_abs() < 1e-14);
                assert!((o[mu][nu] + o[nu][mu]).max_abs() < 1e-14, "source must be antisymmetric");
            }
        }
    }
    // Flat + abelian: zero. Flat + su(2): bracket term only.
    let x = [0.0, 0.3, 0.2, 0.1];
    let flat = riemann(&Minkowski, &x).unwrap();
    let fu = ymkit::fields::FieldSource::field(&gaussian(Algebra::u1(), 0.1), &x);
    assert!(wave_source(&Algebra::u1(), &flat, &fu).max_abs() == 0.0);
    let fs = ymkit::fields::FieldSource::field(&gaussian(su2(), 0.1), &x);
    assert!(wave_source(&su2(), &flat, &fs).max_abs() > 1e-3);
}

/// □F for a vacuum Maxwell field on Schwarzschild equals the curvature source.
#[test]
fn coulomb_field_satisfies_the_curved_wave_equation() {
    let alg = Algebra::u1();
    let chart = Schwarzschild { mass: 1.0 };
    let src = Analytic(Coulomb::schwarzschild(2.0));
    let x = [0.0, 6.0, 1.0, 0.3];
    let df = CovariantDerivativeField {
        alg: &alg,
        chart: &chart,
        potential: &ZeroPotential,
        inner: &Pointwise(&src),
        h: 2e-3,
    };
    let ddf = gauge_covariant_derivative(&alg, &chart, &ZeroPotential, &df, &x, 2e-3).unwrap();
    let curv = riemann(&chart, &x).unwrap();
    let s = wave_source(&alg, &curv, &ymkit::fields::FieldSource::field(&src, &x));
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (mu, nu) in PAIRS {
        let mut boxf = Elem::ZERO;
        for a in 0..4 {
            for b in 0..4 {
                boxf.axpy(curv.ginv[a][b], &ddf.get(&[b, a, mu, nu]));
            }
        }
        worst = worst.max((boxf - s.get(mu, nu)).max_abs());
        scale = scale.max(s.get(mu, nu).max_abs());
    }
    assert!(scale > 1e-3);
    assert!(worst < 1e-6 * scale.max(1.0), "|□F − S| = {worst:e}, |S| = {scale:e}");
}

/// [D_α, D_β]Ψ = [F_{αβ}, Ψ] for an algebra-valued scalar.
#[test]
fn commutator_of_covariant_derivatives_is_the_curvature() {
    let alg = su2();
    let chart = SchwarzschildIsotropic { mass: 1.0 };
    let pot = gaussian(alg.clone(), 0.6);
    struct Scalar;
    impl GTensorField for Scalar {
        fn rank(&self) -> usize {
            0
        }
        fn eval(&self, x: &Vec4) -> GTensor {
            GTensor::scalar(Elem::from_slice(&[x[1].sin() * x[0], (x[2] * x[3]).cos(), x[1] * x[3]]))
        }
    }
    let h = 5e-3;
    let d1 = CovariantDerivativeField { alg: &alg, chart: &chart, potential: &pot, inner: &Scalar, h };
    let x = [0.2, 3.0, 0.5, -0.4];
    let d2 = gauge_covariant_derivative(&alg, &chart, &pot, &d1, &x, h).unwrap();
    let f = curvature_from_potential(&alg, &pot, &x, h);
    let psi = Scalar.eval(&x).comps[0];
    for (a, b) in PAIRS {
        let comm = d2.get(&[a, b]) - d2.get(&[b, a]);
        assert!((comm - alg.bracket(&f.get(a, b), &psi)).max_abs() < 1e-7);
    }
}

fn cartan_mismatch(chart: &dyn SpacetimeChart, x: &Vec4) -> (f64, f64) {
    let alg = Algebra::so31();
    let frames = DiagonalFrameField { chart };
    let pot = CartanPotential { chart, frames: &frames };
    let f = curvature_from_potential(&alg, &pot, x, 1e-2);
    let r = frame_riemann(chart, &frames, x).unwrap();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for p in 0..6 {
        for q in 0..6 {
            worst = worst.max((f.0[p].0[q] - r[p][q]).abs());
            scale = scale.max(r[p][q].abs());
        }
    }
    (worst, scale)
}

#[test]
fn cartan_curvature_reproduces_riemann_on_the_catalog() {
    let (w, _) = cartan_mismatch(&Minkowski, &[0.0, 1.0, 2.0, 3.0]);
    assert!(w < 1e-14);
    let a = cartan_connection(&Minkowski, &DiagonalFrameField { chart: &Minkowski }, &[0.0; 4]).unwrap();
    assert!(a.iter().all(|v| v.max_abs() == 0.0));
    let cases: Vec<(Box<dyn SpacetimeChart>, Vec4)> = vec![
        (Box::new(Schwarzschild { mass: 1.0 }), [0.0, 10.0, 1.2, 0.3]),
        (Box::new(SchwarzschildIsotropic { mass: 1.0 }), [0.0, 4.0, 2.0, 1.0]),
        (Box::new(Flrw { a0: 1.0, t0: 1.0, exponent: 0.5 }), [1.5, 0.2, 0.1, 0.0]),
    ];
    for (chart, x) in &cases {
        let (w, s) = cartan_mismatch(chart.as_ref(), x);
        assert!(s > 1e-4, "{}", chart.name());
        assert!(w < 1e-6, "{}: {w:e}", chart.name());
        let frames = DiagonalFrameField { chart: chart.as_ref() };
        assert!(cartan_antisymmetry_residual(chart.as_ref(), &frames, x).unwrap() < 1e-12);
    }
}

#[test]
fn lattice_curvature_respects_boundary_policy() {
    let alg = su2();
    let pot = gaussian(alg.clone(), 0.2);
    let h = 0.05;
    let lat = LatticePotential::sample(&pot, [-0.1, -0.1, -0.1, -0.1], [h; 4], [5, 5, 5, 5], ymkit::Exec::Sequential);
    assert!(matches!(
        lat.curvature_at(&alg, &[0, 2, 2, 2], BoundaryPolicy::Reject),
        Err(ymkit::Error::BoundaryStencil { .. })
    ));
    let all = lat.curvature(&alg, BoundaryPolicy::OneSided, ymkit::Exec::Sequential).unwrap();
    assert_eq!(all.len(), 625);
    for idx in [[0, 0, 0, 0], [2, 2, 2, 2], [4, 1, 3, 0]] {
        let x = lat.point(&idx);
        let exact = ymkit::fields::FieldSource::field(&pot, &x);
        let got = lat.curvature_at(&alg, &idx, BoundaryPolicy::OneSided).unwrap();
        assert!(got.sub(&exact).max_abs() < 1e-4, "{idx:?}");
    }
    let _ = ConstantPotential { alg, values: [[0.0; 3]; 4] };
}
