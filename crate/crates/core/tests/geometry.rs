use std::f64::consts::PI;

use lattice_fermi::fermi::{
    curvature_closed_form, curvature_data, curvature_graph, curvature_numerator, graph_derivatives,
    null_eigenvector_check, solve_graph, transversality_cross, zero_curvature_locus, Axis, Branch,
    DegenerateLocusPoint, FermiPatch,
};
use lattice_fermi::newton::{adaptedness_and_exponent, newton_polyhedron, polygon_vertices};
use lattice_fermi::taylor::{classify_normal_form, taylor_expand, CaseTag, TaylorModel};
use lattice_fermi::torus::{grad_h0, h0, EnergyLevel, TorusPoint};
use num_rational::Rational64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lvl(l: f64) -> EnergyLevel {
    EnergyLevel::new(l).unwrap()
}

/// Uniform free coordinates, random solved axis and branch, retried until the
/// free pair lies over the surface.
fn random_surface_point(rng: &mut ChaCha8Rng, lambda: f64) -> TorusPoint {
    loop {
        let axis = rng.gen_range(0..3);
        let free: [f64; 2] = [rng.gen(), rng.gen()];
        let branch = if rng.gen() { Branch::Plus } else { Branch::Minus };
        if let Ok(t) = solve_graph(free, lvl(lambda), Axis::from_one_based(axis + 1).unwrap(), branch) {
            let mut xi = [0.0; 3];
            let others = Axis::from_one_based(axis + 1).unwrap().free();
            xi[others[0]] = free[0];
            xi[others[1]] = free[1];
            xi[axis] = t;
            let p = TorusPoint::new(xi);
            if p.b.iter().any(|b| b.abs() > 1e-3) {
                return p;
            }
        }
    }
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Five-point central difference of a function of three angles.
fn grad3(f: impl Fn([f64; 3]) -> f64, xi: [f64; 3], h: f64) -> [f64; 3] {
    [0, 1, 2].map(|j| {
        let at = |s: f64| {
            let mut q = xi;
            q[j] += s;
            f(q)
        };
        (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
    })
}

fn grad2(f: impl Fn([f64; 2]) -> f64, c: [f64; 2], h: f64) -> [f64; 2] {
    [0, 1].map(|j| {
        let at = |s: f64| {
            let mut q = c;
            q[j] += s;
            f(q)
        };
        (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
    })
}

/// Mixed partial of `f` along the listed axes by nested central differences
/// with one Richardson step.
fn nested_partial(f: &dyn Fn([f64; 2]) -> f64, c: [f64; 2], axes: &[usize], h: f64) -> f64 {
    fn nest(f: &dyn Fn([f64; 2]) -> f64, c: [f64; 2], axes: &[usize], h: f64) -> f64 {
        match axes.split_first() {
            None => f(c),
            Some((&j, rest)) => {
                let mut p = c;
                let mut m = c;
                p[j] += h;
                m[j] -= h;
                (nest(f, p, rest, h) - nest(f, m, rest, h)) / (2.0 * h)
            }
        }
    }
    let coarse = nest(f, c, axes, h);
    let fine = nest(f, c, axes, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

fn locus(lambda: f64) -> Vec<DegenerateLocusPoint> {
    zero_curvature_locus(lvl(lambda), 256)
}

#[test]
fn symbol_identity_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let xi: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let p = TorusPoint::new(xi);
        let direct: f64 = xi.iter().map(|t| 4.0 * (PI * t).sin().powi(2)).sum();
        assert!((h0(&p) - direct).abs() < 1e-13);
        assert!((h0(&p) - 2.0 * (3.0 - p.a_sum())).abs() < 1e-13);
        let g = grad_h0(&p);
        for j in 0..3 {
            let step = |s: f64| {
                let mut q = xi;
                q[j] += s;
                h0(&TorusPoint::from_angles(q))
            };
            let fd = (step(1e-6) - step(-1e-6)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-6, "component {j} at {xi:?}: {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn symbol_extrema_on_a_grid() {
    let n = 64;
    let (mut lo, mut hi) = ((f64::INFINITY, [0; 3]), (f64::NEG_INFINITY, [0; 3]));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = h0(&TorusPoint::new([i, j, k].map(|m| m as f64 / n as f64)));
                assert!((0.0..=12.0).contains(&v));
                if v < lo.0 {
                    lo = (v, [i, j, k]);
                }
                if v > hi.0 {
                    hi = (v, [i, j, k]);
                }
            }
        }
    }
    assert_eq!(lo.1, [0, 0, 0]);
    assert_eq!(hi.1, [32, 32, 32]);
    assert!(lo.0.abs() < 1e-15);
    assert!((hi.0 - 12.0).abs() < 1e-13);
}

#[test]
fn closed_form_curvature_matches_graph_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for lambda in [2.0, 5.0, 6.0, 7.0, 10.0] {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let p = random_surface_point(&mut rng, lambda);
            let patch = FermiPatch::at(p).unwrap();
            assert!((h0(&patch.base) - lambda).abs() < 1e-12);
            let (k, nu) = curvature_closed_form(&p).unwrap();
            let kg = curvature_graph(&patch, patch.base_free()).unwrap();
            worst = worst.max((k - kg).abs() / k.abs().max(1e-300));
            assert!((norm(&nu) - 1.0).abs() < 1e-12);
            let g = grad_h0(&p);
            assert!(norm(&cross(nu, g)) < 1e-12 * norm(&g));
        }
        assert!(worst < 1e-9, "lambda {lambda}: worst relative deviation {worst:e}");
    }
}

#[test]
fn second_form_eigenpairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for lambda in [1.0, 5.0, 9.0] {
        for _ in 0..200 {
            let p = random_surface_point(&mut rng, lambda);
            let patch = FermiPatch::at(p).unwrap();
            let cd = curvature_data(&patch, patch.base_free()).unwrap();
            let b = cd.second_form;
            assert_eq!(b[0][1], b[1][0]);
            for k in 0..2 {
                let u = cd.eigvecs[k];
                assert!((norm(&u) - 1.0).abs() < 1e-12);
                let bu = [b[0][0] * u[0] + b[0][1] * u[1], b[1][0] * u[0] + b[1][1] * u[1]];
                assert!((bu[0] - cd.eigvals[k] * u[0]).abs() < 1e-10 * (1.0 + cd.eigvals[k].abs()));
                assert!((bu[1] - cd.eigvals[k] * u[1]).abs() < 1e-10 * (1.0 + cd.eigvals[k].abs()));
            }
            assert!(cd.eigvals[0].abs() <= cd.eigvals[1].abs());
        }
    }
}

#[test]
fn graph_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for lambda in [2.0, 5.0, 6.0, 7.0, 10.0] {
        for _ in 0..40 {
            let p = random_surface_point(&mut rng, lambda);
            let patch = FermiPatch::at(p).unwrap();
            if patch.radius < 0.01 {
                continue;
            }
            let c = patch.base_free();
            let f = |q: [f64; 2]| patch.solve(q).unwrap();

            let d1 = graph_derivatives(&patch, c, 1).unwrap();
            for (j, v) in d1.iter().enumerate() {
                let fd = (f([c[0] + if j == 0 { 1e-5 } else { 0.0 }, c[1] + if j == 1 { 1e-5 } else { 0.0 }])
                    - f([c[0] - if j == 0 { 1e-5 } else { 0.0 }, c[1] - if j == 1 { 1e-5 } else { 0.0 }]))
                    / 2e-5;
                assert!((fd - v).abs() < 1e-7, "order 1, axis {j}: {fd} vs {v}");
            }

            for order in [2usize, 3] {
                let d = graph_derivatives(&patch, c, order).unwrap();
                let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for (idx, v) in d.iter().enumerate() {
                    let axes: Vec<usize> = (0..order).map(|s| (idx >> (order - 1 - s)) & 1).collect();
                    let fd = nested_partial(&f, c, &axes, 2e-3);
                    assert!(
                        (fd - v).abs() < 1e-5 * v.abs().max(scale * 1e-3).max(1.0),
                        "order {order}, axes {axes:?}, lambda {lambda}: {fd} vs {v}"
                    );
                }
            }
        }
    }
}

#[test]
fn umbilic_graph_derivatives() {
    let patch = FermiPatch::with_axis(TorusPoint::new([0.25; 3]), Axis::X3).unwrap();
    let d2 = graph_derivatives(&patch, [0.25, 0.25], 2).unwrap();
    assert!(d2.iter().all(|v| v.abs() < 1e-10));
    let d3 = graph_derivatives(&patch, [0.25, 0.25], 3).unwrap();
    // index bits (m, k, l): 000 = d111, 001 = d112, 111 = d222
    assert!(d3[0].abs() < 1e-10 && d3[7].abs() < 1e-10);
    assert!((d3[1] + 4.0 * PI * PI).abs() < 1e-10);
    assert!((d3[6] + 4.0 * PI * PI).abs() < 1e-10);
}

#[test]
fn transversality_in_the_chart() {
    // where grad h0 x grad K is nonzero the curvature is not stationary along
    // the surface
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k_of = |q: [f64; 3]| curvature_closed_form(&TorusPoint::from_angles(q)).unwrap().0;
    for lambda in [2.0, 5.0, 6.0, 7.0, 10.0] {
        for _ in 0..200 {
            let p = random_surface_point(&mut rng, lambda);
            let patch = FermiPatch::at(p).unwrap();
            let c = patch.base_free();
            if patch.radius < 1e-3 {
                continue;
            }
            let gk = grad3(k_of, p.xi, 1e-4);
            let cr = norm(&cross(grad_h0(&p), gk));
            let chart = grad2(|q| curvature_closed_form(&patch.point(q).unwrap()).unwrap().0, c, 1e-4);
            if cr > 1e-6 {
                assert!(norm(&chart) > 1e-8, "cross {cr:e} but chart gradient {chart:?}");
            }
        }
    }
    let patch = FermiPatch::with_axis(TorusPoint::new([0.25; 3]), Axis::X3).unwrap();
    let chart = grad2(|q| curvature_closed_form(&patch.point(q).unwrap()).unwrap().0, [0.25, 0.25], 1e-4);
    assert!(norm(&chart) < 1e-6);
    assert!(norm(&transversality_cross(&patch.base)) < 1e-12);
}

#[test]
fn transversality_cross_matches_finite_differences() {
    let numerator = |q: [f64; 3]| curvature_numerator(&TorusPoint::from_angles(q));
    for lambda in [5.0, 7.0] {
        let pts = locus(lambda);
        assert!(!pts.is_empty());
        for lp in pts.iter().step_by(7) {
            let p = lp.point;
            let fd = cross(p.b, grad3(numerator, p.xi, 1e-4));
            let closed = transversality_cross(&p);
            for j in 0..3 {
                assert!((fd[j] - closed[j]).abs() < 1e-6, "lambda {lambda} at {:?}: {fd:?} vs {closed:?}", p.xi);
            }
        }
    }
}

#[test]
fn locus_points_satisfy_the_vanishing_relation() {
    for lambda in [4.5, 5.0, 6.0, 7.0, 7.5] {
        let pts = locus(lambda);
        assert!(!pts.is_empty(), "no locus points at {lambda}");
        let e = 3.0 - lambda / 2.0;
        for lp in &pts {
            let p = lp.point;
            let (k, _) = curvature_closed_form(&p).unwrap();
            assert!(k.abs() < 1e-9);
            assert!((h0(&p) - lp.energy).abs() < 1e-10);
            let zeros = p.a.iter().filter(|a| a.abs() < 1e-8).count();
            if zeros < 2 {
                let inv: f64 = p.a.iter().map(|a| 1.0 / a).sum();
                assert!((p.a_sum() - inv).abs() < 1e-8, "sum a = {}, sum 1/a = {inv}", p.a_sum());
            }
            if lp.umbilic {
                assert_eq!(lambda, 6.0);
                for t in p.xi {
                    assert!((t - 0.25).abs() < 1e-9 || (t - 0.75).abs() < 1e-9);
                }
            }
            // in the xi3 chart the free sines cannot both vanish
            if e > -1.0 && e < 1.0 && p.b[2].abs() > 1e-8 {
                assert!(p.b[0].abs().max(p.b[1].abs()) > 1e-6);
            }
        }
    }
}

#[test]
fn null_eigenvector_identities() {
    let mut checked = 0;
    for lp in locus(5.0) {
        let p = lp.point;
        if p.a.iter().any(|a| a.abs() < 1e-6) || p.b[2].abs() < 1e-6 {
            continue;
        }
        let chk = null_eigenvector_check(&p).unwrap();
        assert!(chk.residual < 1e-9);
        assert!(chk.orthogonality.abs() < 1e-9);
        assert!((chk.directional_value - chk.predicted).abs() < 1e-8 * chk.predicted.abs());
        assert!(chk.predicted.abs() > 1e-3);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn cubic_coefficients_follow_eigenvalue_derivatives() {
    let mut checked = 0;
    for lambda in [5.0, 7.0] {
        for lp in locus(lambda).iter().step_by(5) {
            let Ok(patch) = FermiPatch::at(lp.point) else { continue };
            if patch.radius < 0.01 {
                continue;
            }
            let c = patch.base_free();
            let cd = curvature_data(&patch, c).unwrap();
            if (cd.eigvals[0] - cd.eigvals[1]).abs() < 1e-3 {
                continue;
            }
            let m = taylor_expand(&patch, c, 4, true).unwrap();
            let ev = |k: usize| move |q: [f64; 2]| curvature_data(&patch, q).unwrap().eigvals[k];
            let g_plus = grad2(ev(0), c, 2e-4);
            let g_minus = grad2(ev(1), c, 2e-4);
            let [u_plus, u_minus] = cd.eigvecs;
            let dot = |u: [f64; 2], g: [f64; 2]| u[0] * g[0] + u[1] * g[1];
            let pairs = [
                (6.0 * m.coeff(3, 0), dot(u_plus, g_plus)),
                (2.0 * m.coeff(2, 1), dot(u_minus, g_plus)),
                (2.0 * m.coeff(1, 2), dot(u_plus, g_minus)),
                (6.0 * m.coeff(0, 3), dot(u_minus, g_minus)),
            ];
            for (taylor, fd) in pairs {
                assert!((taylor - fd).abs() < 1e-7 * taylor.abs().max(1.0), "{taylor} vs {fd} at {:?}", lp.point.xi);
            }
            checked += 1;
        }
    }
    assert!(checked > 4);
}

#[test]
fn normal_forms_at_degenerate_points() {
    let umbilic = FermiPatch::with_axis(TorusPoint::new([0.25; 3]), Axis::X3).unwrap();
    let m = taylor_expand(&umbilic, [0.25, 0.25], 5, false).unwrap();
    let case = classify_normal_form(&m, lvl(6.0)).unwrap();
    assert_eq!(case.case_tag, CaseTag::UmbilicCubic);
    assert!(case.verified_constraints.iter().all(|(_, r)| *r < 1e-8));

    // a1 = a3 = 0, a2 = E at lambda = 5
    let e = 0.5f64;
    let special = TorusPoint::new([0.25, e.acos() / (2.0 * PI), 0.25]);
    assert!((h0(&special) - 5.0).abs() < 1e-12);
    let patch = FermiPatch::with_axis(special, Axis::X3).unwrap();
    let m = taylor_expand(&patch, patch.base_free(), 5, true).unwrap();
    let case = classify_normal_form(&m, lvl(5.0)).unwrap();
    assert_eq!(case.case_tag, CaseTag::SpecialAxisPoint);
    assert!(m.coeff(2, 0).abs() < 1e-9 && m.coeff(3, 0).abs() < 1e-9 && m.coeff(4, 0).abs() < 1e-9);
    assert!(m.coeff(2, 1).abs() > 1e-3);

    let mut generic = 0;
    for lp in locus(5.0).iter().step_by(11) {
        if lp.point.a.iter().filter(|a| a.abs() < 1e-8).count() >= 2 {
            continue;
        }
        let patch = FermiPatch::at(lp.point).unwrap();
        let m = taylor_expand(&patch, patch.base_free(), 5, true).unwrap();
        let case = classify_normal_form(&m, lvl(5.0)).unwrap();
        assert_eq!(case.case_tag, CaseTag::GenericDegenerate);
        assert!(case.verified_constraints.iter().all(|(_, r)| *r < 1e-8));
        assert!(m.coeff(0, 2).abs() > 1e-8);
        generic += 1;
    }
    assert!(generic > 0);
}

#[test]
fn umbilic_pipeline_predicts_two_thirds() {
    let patch = FermiPatch::with_axis(TorusPoint::new([0.25; 3]), Axis::X3).unwrap();
    let m = taylor_expand(&patch, [0.25, 0.25], 5, false).unwrap();
    let data = newton_polyhedron(&m).unwrap();
    assert_eq!(data.newton_distance, Rational64::new(3, 2));
    let (adapted, exponent) = adaptedness_and_exponent(&data);
    assert!(adapted);
    assert_eq!(exponent, Some(Rational64::new(2, 3)));
    assert_eq!(data.predicted_exponent, Some(Rational64::new(2, 3)));
}

#[test]
fn standard_support_families() {
    for (terms, d, k) in [
        (vec![([2, 1], 1.0), ([1, 2], -2.0)], (3, 2), (2, 3)),
        (vec![([0, 2], 1.0), ([3, 0], 0.7)], (6, 5), (5, 6)),
        (vec![([0, 2], 1.0), ([2, 1], -0.4)], (4, 3), (3, 4)),
    ] {
        let data = newton_polyhedron(&TaylorModel::from_terms(4, &terms)).unwrap();
        assert_eq!(data.newton_distance, Rational64::new(d.0, d.1));
        assert_eq!(data.height, Some(Rational64::new(d.0, d.1)));
        assert_eq!(data.varchenko_exponent, Some(0));
        assert_eq!(adaptedness_and_exponent(&data).1, Some(Rational64::new(k.0, k.1)));
    }
}

fn support_strategy() -> impl Strategy<Value = Vec<([usize; 2], f64)>> {
    let term = (0usize..=6, 0usize..=6, prop_oneof![-5.0..-0.1f64, 0.1..5.0f64])
        .prop_filter("degree 2..=6", |(i, j, _)| (2..=6).contains(&(i + j)))
        .prop_map(|(i, j, v)| ([i, j], v));
    prop::collection::vec(term, 1..6).prop_map(|mut v| {
        v.sort_by_key(|t| t.0);
        v.dedup_by_key(|t| t.0);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn polygon_ignores_support_order(pts in prop::collection::vec((0i64..8, 0i64..8), 1..12), seed in any::<u64>()) {
        let support: Vec<[i64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
        let mut shuffled = support.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(polygon_vertices(&support), polygon_vertices(&shuffled));
    }

    #[test]
    fn swap_mirrors_newton_data(terms in support_strategy()) {
        let m = TaylorModel::from_terms(6, &terms);
        let a = newton_polyhedron(&m).unwrap();
        let b = newton_polyhedron(&m.swapped()).unwrap();
        prop_assert_eq!(a.newton_distance, b.newton_distance);
        let mirrored: Vec<[Rational64; 2]> = a.polyhedron_vertices.iter().rev().map(|v| [v[1], v[0]]).collect();
        prop_assert_eq!(&mirrored, &b.polyhedron_vertices);
        for t in &a.principal_part.coeffs {
            prop_assert_eq!(t.value, b.principal_part.coeff(t.j[1], t.j[0]));
        }
        prop_assert_eq!(a.vanishing_order, b.vanishing_order);
    }

    #[test]
    fn scaling_preserves_newton_data(terms in support_strategy(), s in prop_oneof![-4.0..-0.25f64, 0.25..4.0f64]) {
        let m = TaylorModel::from_terms(6, &terms);
        let a = newton_polyhedron(&m).unwrap();
        let b = newton_polyhedron(&m.scaled(s)).unwrap();
        prop_assert_eq!(a.newton_distance, b.newton_distance);
        prop_assert_eq!(&a.principal_face, &b.principal_face);
        prop_assert_eq!(a.vanishing_order, b.vanishing_order);
        prop_assert_eq!(adaptedness_and_exponent(&a), adaptedness_and_exponent(&b));
    }

    #[test]
    fn solved_points_lie_on_the_surface(u in 0.0..1.0f64, v in 0.0..1.0f64, lambda in 0.0..12.0f64, plus in any::<bool>()) {
        let branch = if plus { Branch::Plus } else { Branch::Minus };
        if let Ok(t) = solve_graph([u, v], lvl(lambda), Axis::X3, branch) {
            let p = TorusPoint::new([u, v, t]);
            prop_assert!((h0(&p) - lambda).abs() < 1e-12);
            prop_assert!(p.b[2] * branch.sign() >= 0.0);
        }
    }

    #[test]
    fn reflected_patches_keep_curvature(u in 0.0..1.0f64, v in 0.0..1.0f64, lambda in 0.5..11.5f64, mask in 0u8..8) {
        if let Ok(t) = solve_graph([u, v], lvl(lambda), Axis::X3, Branch::Plus) {
            let p = TorusPoint::new([u, v, t]);
            prop_assume!(p.b[2].abs() > 1e-3);
            let patch = FermiPatch::with_axis(p, Axis::X3).unwrap();
            let r = patch.reflect([0, 1, 2].map(|j| mask >> j & 1 == 1));
            let k0 = curvature_graph(&patch, patch.base_free()).unwrap();
            let k1 = curvature_graph(&r, r.base_free()).unwrap();
            prop_assert!((k0 - k1).abs() < 1e-9 * k0.abs().max(1.0));
        }
    }
}
