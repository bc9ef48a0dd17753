use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stlplan::grad::{Tape, Var};
use stlplan::stl::random::{random_formula, FormulaShape};
use stlplan::stl::{
    eval_bool, AggregationKind, Bindings, CircleRegion, CompiledFormula, Formula, LinearPredicate,
    SmoothingConfig, Trajectory,
};

fn bindings() -> Bindings {
    Bindings::new()
        .with("a", Arc::new(LinearPredicate::new([1.0, 0.5], 0.1)))
        .with("b", Arc::new(LinearPredicate::new([-0.3, 1.0], -0.2)))
        .with("c", Arc::new(CircleRegion::new([0.2, -0.1], 0.8)))
        .with("d", Arc::new(CircleRegion::new([-0.5, 0.4], 0.6)))
}

fn case(seed: u64, literals: bool, extra: usize) -> (Formula, Trajectory) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = FormulaShape {
        literals,
        ..FormulaShape::default()
    };
    let f = random_formula(&mut rng, &shape);
    let pts = (0..f.horizon() + 1 + extra)
        .map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)])
        .collect();
    (f, Trajectory::new(pts).unwrap())
}

fn beta() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(10.0), Just(100.0), 0.5..200.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn robustness_sign_agrees_with_boolean_semantics(seed in any::<u64>()) {
        let b = bindings();
        let (f, tau) = case(seed, true, 2);
        let r = CompiledFormula::new(&f, &b).unwrap().robustness(&tau, 0).unwrap();
        let sat = eval_bool(&f, &b, &tau, 0).unwrap();
        if r > 0.0 {
            prop_assert!(sat, "{f}: rho {r}");
        } else if r < 0.0 {
            prop_assert!(!sat, "{f}: rho {r}");
        }
    }

    #[test]
    fn negation_flips_hard_and_soft_robustness(seed in any::<u64>(), beta in beta()) {
        let b = bindings();
        let (f, tau) = case(seed, false, 1);
        let pos = CompiledFormula::new(&f, &b).unwrap();
        let neg = CompiledFormula::new(&Formula::not(f), &b).unwrap();
        prop_assert_eq!(neg.robustness(&tau, 0).unwrap(), -pos.robustness(&tau, 0).unwrap());
        let cfg = SmoothingConfig::new(beta).unwrap();
        let (s, n) = (pos.soft_robustness(&tau, 0, cfg).unwrap(), neg.soft_robustness(&tau, 0, cfg).unwrap());
        prop_assert!((s + n).abs() <= 1e-12 * (1.0 + s.abs()), "{s} vs {n}");
    }

    #[test]
    fn every_soft_aggregation_is_within_its_bound(seed in any::<u64>(), beta in beta()) {
        let b = bindings();
        let (f, tau) = case(seed, false, 1);
        let cf = CompiledFormula::new(&f, &b).unwrap();
        let (_, trace) = cf.soft_robustness_traced(&tau, 0, SmoothingConfig::new(beta).unwrap()).unwrap();
        for agg in trace {
            let (h, s) = (agg.hard(), agg.soft);
            let gap = (agg.values.len() as f64).ln() / beta;
            match agg.kind {
                AggregationKind::Min => prop_assert!(s <= h && h - gap <= s, "min {h} soft {s} gap {gap}"),
                AggregationKind::Max => prop_assert!(h <= s && s <= h + gap, "max {h} soft {s} gap {gap}"),
            }
        }
    }

    #[test]
    fn soft_robustness_error_is_bounded_by_the_summed_gaps(seed in any::<u64>(), beta in beta()) {
        let b = bindings();
        let (f, tau) = case(seed, false, 1);
        let cf = CompiledFormula::new(&f, &b).unwrap();
        let cfg = SmoothingConfig::new(beta).unwrap();
        let (soft, trace) = cf.soft_robustness_traced(&tau, 0, cfg).unwrap();
        let bound: f64 = trace.iter().map(|a| (a.values.len() as f64).ln() / beta).sum();
        let hard = cf.robustness(&tau, 0).unwrap();
        prop_assert!((soft - hard).abs() <= bound + 1e-12, "{soft} vs {hard}, bound {bound}");
    }

    #[test]
    fn evaluating_later_equals_evaluating_the_suffix(seed in any::<u64>(), t in 0usize..4) {
        let b = bindings();
        let (f, tau) = case(seed, true, 4);
        let cf = CompiledFormula::new(&f, &b).unwrap();
        let suffix = Trajectory::new(tau.points()[t..].to_vec()).unwrap();
        prop_assert_eq!(cf.robustness(&tau, t).unwrap(), cf.robustness(&suffix, 0).unwrap());
    }

    #[test]
    fn tape_gradient_matches_central_differences(seed in any::<u64>(), beta in 1.0..20.0f64) {
        let b = bindings();
        let (f, tau) = case(seed, false, 0);
        let cf = CompiledFormula::new(&f, &b).unwrap();
        let cfg = SmoothingConfig::new(beta).unwrap();
        let tape = Tape::new();
        let vars: Vec<[Var; 2]> = tau.points().iter().map(|p| [tape.scalar(p[0]), tape.scalar(p[1])]).collect();
        let out = cf.soft_robustness_tape(&tape, &vars, 0, cfg).unwrap();
        prop_assert!((out.item() - cf.soft_robustness(&tau, 0, cfg).unwrap()).abs() < 1e-12);
        let grads = tape.backward(out).unwrap();
        let h = 1e-5;
        for i in 0..tau.points().len() {
            for d in 0..2 {
                let (mut up, mut dn) = (tau.points().to_vec(), tau.points().to_vec());
                up[i][d] += h;
                dn[i][d] -= h;
                let fd = (cf.soft_robustness(&Trajectory::new(up).unwrap(), 0, cfg).unwrap()
                    - cf.soft_robustness(&Trajectory::new(dn).unwrap(), 0, cfg).unwrap())
                    / (2.0 * h);
                let a = grads.scalar(vars[i][d]);
                prop_assert!((a - fd).abs() <= 1e-4 * fd.abs().max(1e-2), "d/dx[{i}][{d}]: {a} vs {fd}");
            }
        }
    }
}
