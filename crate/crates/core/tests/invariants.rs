use core::f64::consts::TAU;

use phasefront::cliffwall::{cliffwall, mod2_defect, synthetic_field, AffineArrangement, FaceTag};
use phasefront::phase_space::{combination, BaseProfile, HamiltonianSpec, TimeProfile};
use phasefront::selector::{basic_phase_function, selector_from_curve};
use phasefront::spectral::{analyze, gamma, SpectralOptions};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = BaseProfile> {
    (-0.4f64..0.4, -0.4f64..0.4, -0.2f64..0.2, -0.2f64..0.2)
        .prop_map(|(a1, b1, a2, b2)| BaseProfile::fourier1(&[(1, a1), (2, a2)], &[(1, b1), (2, b2)]))
}

fn extremes(g: &BaseProfile) -> (f64, f64) {
    (0..100_000).map(|k| g.eval([TAU * k as f64 / 100_000.0, 0.0]).v).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // the time-one map of a base lift is the graph of -dg
    #[test]
    fn graphs_have_extremal_spectral_numbers(g in profile()) {
        let opts = SpectralOptions::default();
        let (lo, hi) = extremes(&g);
        let h = HamiltonianSpec::base_lift(1, g.clone(), TimeProfile::Constant);
        let n = gamma(&h, &opts).unwrap();
        let tol = 1e-6 + n.perturbation_error;
        prop_assert!((n.rho_one + lo).abs() < tol, "{} vs {}", n.rho_one, -lo);
        prop_assert!((n.rho_pt + hi).abs() < tol, "{} vs {}", n.rho_pt, -hi);
        let f = basic_phase_function(&h, 256, &opts).unwrap();
        for (q, v) in f.grid.iter().zip(&f.f) {
            prop_assert!((v + g.eval([*q, 0.0]).v).abs() < 1e-6);
        }
    }

    #[test]
    fn adding_a_constant_shifts_every_level(g in profile(), twist in prop_oneof![-1.2f64..-0.3, 0.3f64..1.2], c in -1.0f64..1.0) {
        let opts = SpectralOptions::default();
        let h = HamiltonianSpec::fold(1, g, twist);
        let k = combination(vec![(1.0, h.clone()), (1.0, HamiltonianSpec::time_constant(1, c, TimeProfile::Constant))]).unwrap();
        let c_only = gamma(&HamiltonianSpec::time_constant(1, c, TimeProfile::Constant), &opts).unwrap();
        prop_assert!((c_only.rho_one.abs() - c.abs()).abs() < 1e-9 + c_only.perturbation_error);
        let (a, b) = (gamma(&h, &opts).unwrap(), gamma(&k, &opts).unwrap());
        let tol = 1e-7 + a.perturbation_error + b.perturbation_error;
        prop_assert!((b.rho_one - a.rho_one - c_only.rho_one).abs() < tol);
        prop_assert!((b.rho_pt - a.rho_pt - c_only.rho_pt).abs() < tol);
        prop_assert!((b.gamma - a.gamma).abs() < tol);
    }

    // the selector is squeezed between the two levels and always sits on a sheet
    #[test]
    fn fold_selectors_lie_on_the_front(g in profile(), twist in prop_oneof![-1.2f64..-0.3, 0.3f64..1.2]) {
        let opts = SpectralOptions::default();
        let a = analyze(&HamiltonianSpec::fold(1, g, twist), &opts).unwrap();
        let f = selector_from_curve(a.curve.clone(), 512, &opts).unwrap();
        let n = &a.numbers;
        prop_assert!(n.rho_pt <= f.min_f() + a.tol);
        prop_assert!(f.max_f() <= n.rho_one + a.tol);
        for i in (0..f.len()).step_by(7) {
            let gap = a.front.sheets(f.grid[i]).iter().map(|(_, p)| (p.h - f.f[i]).abs()).fold(f64::INFINITY, f64::min);
            // sheets are interpolated between curve samples
            prop_assert!(gap < 1e-6 * a.front.action_scale, "q = {}, gap {gap:e}", f.grid[i]);
        }
    }

    #[test]
    fn lower_envelope_of_three_planes(x in -0.6f64..0.6, y in -0.6f64..0.6, n in 17usize..48) {
        let field = synthetic_field(&AffineArrangement::min_of_three([x, y]), n).unwrap();
        let (strata, cycle, rep) = cliffwall(&field, 1e-12).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
        prop_assert_eq!(strata.triples.len(), 1);
        let t = strata.triples[0].x;
        prop_assert!((t[0] - x).abs() < 1e-9 && (t[1] - y).abs() < 1e-9, "{t:?}");
        prop_assert_eq!(cycle.count(FaceTag::Simplex), 1);
        prop_assert_eq!(mod2_defect(&cycle), 0);
    }
}
