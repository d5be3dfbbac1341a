//! Property tests for structural invariants of the library.

use nalgebra::Matrix2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renormtrace::acsalg::ACPoint;
use renormtrace::jlo::{simplex_weight, trace_form, Grading};
use renormtrace::linalg::{CMat, C64};
use renormtrace::renorm::{fit_expansion, geometric_grid, AsymptoticExpansion, ExponentLattice, FitOptions};
use renormtrace::specops::{OperatorExpr, SpectralOperator, SuperOperator, Weight, DEFAULT_SYMBOL_DEPTH};
use renormtrace::traces::{weighted_trace, wodzicki_residue_symbol, wodzicki_residue_zeta, TraceOptions};

fn trig_literal() -> impl Strategy<Value = OperatorExpr> {
    prop::collection::vec((0u8..4, -1.0..1.0f64, -1.0..1.0f64), 1..4)
        .prop_map(|t| OperatorExpr::Multiplication { trig: t.into_iter().map(|(k, a, b)| [k as f64, a, b]).collect(), modes: vec![] })
}

fn multiplier_literal() -> impl Strategy<Value = OperatorExpr> {
    (0.5..2.0f64, -1.0..1.0f64).prop_map(|(c, d)| OperatorExpr::Multiplier { coeffs: vec![vec![1.0, 1.0, 1.0], vec![0.0, c + d.abs()]], power: None })
}

/// Products of a trigonometric multiplication and a multiplier, in either order.
fn operator_literal() -> impl Strategy<Value = OperatorExpr> {
    (trig_literal(), multiplier_literal(), any::<bool>()).prop_map(|(t, m, swap)| {
        if swap {
            OperatorExpr::product(vec![m, t])
        } else {
            OperatorExpr::product(vec![t, m])
        }
    })
}

fn shifted_laplacian(c: f64) -> OperatorExpr {
    OperatorExpr::Multiplier { coeffs: vec![vec![2.0, 1.0], vec![0.0, c]], power: None }
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn finite_trace_is_cyclic(a in operator_literal(), b in operator_literal(), n in 4usize..16) {
        let (a, b) = (a.quantize(n).unwrap(), b.quantize(n).unwrap());
        let ab = a.compose(&b).unwrap().trace();
        let ba = b.compose(&a).unwrap().trace();
        prop_assert!((ab - ba).norm() <= 1e-12 * (1.0 + ab.norm()), "{ab} vs {ba}");
    }

    #[test]
    fn composition_respects_band(a in trig_literal(), b in operator_literal(), n in 4usize..16) {
        let (a, b) = (a.quantize(n).unwrap(), b.quantize(n).unwrap());
        let c = a.compose(&b).unwrap();
        let bw = a.bandwidth() + b.bandwidth();
        prop_assert!(c.bandwidth() <= bw);
        let d = c.to_dense();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i.abs_diff(j) > bw {
                    prop_assert_eq!(d[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn weight_eigenvalues_positive_with_quadratic_growth(c in 0.1..5.0f64, n in 8usize..64) {
        let q = Weight::from_expr(&shifted_laplacian(c), n).unwrap();
        prop_assert!(q.order() == 2.0);
        for (k, l) in q.eigenvalues().iter().enumerate() {
            prop_assert!(*l > 0.0);
            let m = k as f64 - n as f64;
            if m.abs() >= 4.0 {
                let ratio = l / (m * m);
                prop_assert!(ratio > 0.5 && ratio < 2.0 + c);
            }
        }
    }

    #[test]
    fn odd_supertrace_vanishes(d in 1usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || CMat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let s = SuperOperator::odd(m(), m());
        prop_assert!(s.is_odd());
        prop_assert_eq!(s.supertrace(), C64::new(0.0, 0.0));
    }

    #[test]
    fn simplex_weight_is_symmetric(eps in 0.01..1.0f64, mut nodes in prop::collection::vec(0.5..60.0f64, 1..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let a = simplex_weight(eps, &nodes).unwrap();
        nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = simplex_weight(eps, &nodes).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn lim_is_affine_in_mu(vals in prop::collection::vec(-10.0..10.0f64, 6), mu in -3.0..3.0f64) {
        let lattice = ExponentLattice::new(2, 1, 0.0).unwrap();
        let mut e = AsymptoticExpansion::new(lattice, 4);
        e.set_a(0, C64::from(vals[0]));
        e.set_b(1, C64::from(vals[1])).unwrap();
        e.set_c(0, C64::from(vals[2]));
        e.set_c(1, C64::from(vals[3]));
        e.set_b(3, C64::from(vals[4])).unwrap();
        let l0 = e.renormalized_limit(0.0);
        let l = e.renormalized_limit(mu);
        prop_assert!((l - (l0 - mu * vals[1])).norm() <= 1e-12 * (1.0 + l.norm()));
        // moving weight between a at ε⁰ and c₀ leaves the limit alone
        let mut f = e.clone();
        f.set_a(1, C64::from(vals[5]));
        f.set_c(0, C64::from(vals[2] - vals[5]));
        prop_assert!((f.renormalized_limit(mu) - l).norm() <= 1e-12 * (1.0 + l.norm()));
    }

    #[test]
    fn complex_structure_axioms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ACPoint::random(&mut rng);
        let j = *p.j();
        prop_assert!((j * j + Matrix2::identity()).norm() <= 1e-12 * j.norm_squared());
        prop_assert!((j.determinant() - 1.0).abs() <= 1e-12 * j.norm_squared());
        let h1 = *p.random_tangent(&mut rng).matrix();
        let h2 = *p.random_tangent(&mut rng).matrix();
        let scale = j.norm_squared();
        prop_assert!((h1 * j + j * h1).norm() <= 1e-12 * scale);
        prop_assert!(h1.trace().abs() <= 1e-12 * scale);
        // even products commute with J, odd ones anticommute
        let even = h1 * h2;
        let odd = h1 * h2 * h1;
        prop_assert!((even * j - j * even).norm() <= 1e-12 * scale);
        prop_assert!((odd * j + j * odd).norm() <= 1e-12 * scale * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn trace_form_of_even_pair_is_symmetric(a in operator_literal(), b in trig_literal(), eps in 0.05..0.5f64) {
        let q = Weight::from_expr(&shifted_laplacian(1.0), 8).unwrap();
        let (a, b) = (a.quantize(8).unwrap(), b.quantize(8).unwrap());
        let ab = trace_form(&[a.clone(), b.clone()], &q, eps, Grading::Plain).unwrap();
        let ba = trace_form(&[b, a], &q, eps, Grading::Plain).unwrap();
        prop_assert!((ab - ba).norm() <= 1e-12 * (1.0 + ab.norm()), "{ab} vs {ba}");
    }

    #[test]
    fn fit_recovers_sparse_expansions(vals in prop::collection::vec(-10.0..10.0f64, 9), mask in prop::collection::vec(any::<bool>(), 9)) {
        // at most eight of the nine slots are populated
        let lattice = ExponentLattice::new(2, 1, 0.0).unwrap();
        let mut truth = AsymptoticExpansion::new(lattice, 5);
        let mut used = 0;
        for (s, (&v, &on)) in vals.iter().zip(&mask).enumerate() {
            if !on || used == 8 {
                continue;
            }
            used += 1;
            let v = C64::from(v);
            match s {
                0..=2 => { truth.set_a(2 * s as u32, v); }
                3..=5 => { truth.set_c((s - 3) as u32, v); }
                _ => { truth.set_b(2 * (s - 6) as u32 + 1, v).unwrap(); }
            }
        }
        let grid = geometric_grid(1e-4, 1e-1, 73).unwrap();
        let samples: Vec<(f64, C64)> = grid.iter().map(|&e| (e, truth.evaluate(e))).collect();
        let fit = fit_expansion(&samples, &lattice, &FitOptions::default().with_top(2.0)).unwrap();
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for lam in [-0.5, 0.5, 1.5, 0.0, 1.0, 2.0] {
            let d = (fit.power_coefficient(lam) - truth.power_coefficient(lam)).norm();
            prop_assert!(d <= 1e-8 * scale, "power {lam}: {d}");
        }
        for lam in [0.0, 1.0, 2.0] {
            let d = (fit.log_coefficient(lam) - truth.log_coefficient(lam)).norm();
            prop_assert!(d <= 1e-8 * scale, "log {lam}: {d}");
        }
    }

    #[test]
    fn residue_routes_agree(c in 0.5..3.0f64, p in prop::sample::select(vec![-0.5, -0.25, -0.75, 0.5])) {
        let w = shifted_laplacian(c);
        let a = w.clone().power_of(p).unwrap();
        let sym = wodzicki_residue_symbol(&a.symbol(DEFAULT_SYMBOL_DEPTH).unwrap()).unwrap();
        let n = Weight::cutoff_for_tail(&w, 1e-4, (2.0 * p).max(0.0), 1e-12).unwrap();
        let q = Weight::from_expr(&w, n).unwrap();
        let z = wodzicki_residue_zeta(&a.quantize(n).unwrap(), &q, &TraceOptions::default()).unwrap().value;
        prop_assert!(rel(sym, z) <= 1e-4 || (sym.norm() < 1e-10 && z.norm() < 1e-8), "{sym} vs {z}");
    }
}

#[test]
fn weighted_trace_of_trace_class_operator_is_the_trace() {
    // Σ_n 1/(n² + 1) = π coth π
    let w = shifted_laplacian(1.0);
    let n = Weight::cutoff_for_tail(&w, 1e-4, 0.0, 1e-12).unwrap();
    let q = Weight::from_expr(&w, n).unwrap();
    let a: SpectralOperator = w.power_of(-1.0).unwrap().quantize(n).unwrap();
    let exact = std::f64::consts::PI / std::f64::consts::PI.tanh();
    for mu in [0.0, 0.5772156649015329] {
        let v = weighted_trace(&a, &q, mu, &TraceOptions::default()).unwrap().value;
        assert!((v.re - exact).abs() < 1e-8 && v.im.abs() < 1e-12, "{v} vs {exact}");
    }
}
