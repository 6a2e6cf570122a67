mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::jet_eval;
use pisr::eval::{eval_batch, eval_scalar, Grid};
use pisr::expr::{
    enumerate_expressions, perturb, sample_expression, validate_postfix, BinaryOp, Grammar, LeafKind,
    PostfixExpr, UnaryOp,
};
use pisr::problem::{evaluate, CandidateSolution, Provenance};
use pisr::soliton::SolitonProblem;
use pisr::symdiff::{differentiate, differentiate_with, simplify, SimplifyOrder};

fn full_grammar(depth: usize) -> Grammar {
    Grammar::new(
        depth,
        UnaryOp::ALL.to_vec(),
        BinaryOp::ALL.to_vec(),
        vec![LeafKind::Variable, LeafKind::FitConst],
    )
    .unwrap()
}

// (expression, constants) drawn through the crate's sampler from a proptest seed
fn expr_strategy(max_depth: usize) -> impl Strategy<Value = (PostfixExpr, Vec<f64>)> {
    (any::<u64>(), 0..=max_depth, prop::collection::vec(0.5f64..2.0, 16)).prop_map(move |(seed, depth, pool)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = sample_expression(&full_grammar(max_depth), &mut rng, depth);
        let c = pool[..e.const_slots()].to_vec();
        (e, c)
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn simplify_is_sound_idempotent_and_shrinking((e, c) in expr_strategy(4), x in -2.0f64..2.0) {
        let s = simplify(&e);
        prop_assert!(s.len() <= e.len());
        prop_assert_eq!(simplify(&s), s.clone());
        let (a, b) = (eval_scalar(&e, x, &c), eval_scalar(&s, x, &c));
        if a.is_finite() && b.is_finite() {
            prop_assert!(close(a, b, 1e-12), "{} -> {}: {} vs {}", e, s, a, b);
        }
    }

    #[test]
    fn raw_derivatives_simplify_soundly((e, c) in expr_strategy(3), x in -2.0f64..2.0) {
        let raw = differentiate_with(&e, 0, SimplifyOrder::Never);
        let s = simplify(&raw);
        prop_assert!(s.len() <= raw.len());
        prop_assert_eq!(simplify(&s), s.clone());
        let (a, b) = (eval_scalar(&raw, x, &c), eval_scalar(&s, x, &c));
        if a.is_finite() && b.is_finite() {
            prop_assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn derivative_matches_forward_mode((e, c) in expr_strategy(4), x in -2.0f64..2.0) {
        let d = eval_scalar(&differentiate(&e, 0), x, &c);
        let j = jet_eval(&e, x, &c);
        if d.is_finite() && j.d.is_finite() && j.v.is_finite() {
            prop_assert!(close(d, j.d, 1e-8), "{}: {} vs {}", e, d, j.d);
        }
    }

    #[test]
    fn batch_equals_scalar_bitwise((e, c) in expr_strategy(4)) {
        let g = Grid::benchmark();
        let batch = eval_batch(&e, &g, &c);
        for (x, b) in g.points().iter().zip(&batch) {
            prop_assert_eq!(eval_scalar(&e, *x, &c).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn perturbation_preserves_shape((e, c) in expr_strategy(4), seed in any::<u64>()) {
        let g = full_grammar(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = perturb(&e, &g, &mut rng);
        prop_assert!(validate_postfix(p.expr.tokens()));
        prop_assert_eq!(p.expr.len(), e.len());
        prop_assert_eq!(p.expr.depth(), e.depth());
        prop_assert_eq!(p.slot_sources.len(), p.expr.const_slots());
        prop_assert_eq!(p.constants(&c).len(), p.expr.const_slots());
    }

    #[test]
    fn sampled_depth_is_exact(seed in any::<u64>(), depth in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = sample_expression(&full_grammar(4), &mut rng, depth);
        prop_assert!(validate_postfix(e.tokens()));
        prop_assert_eq!(e.depth(), depth);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_is_the_ordered_sum_of_terms((u, cu) in expr_strategy(3), (n, cn) in expr_strategy(3), g0 in 1.0f64..10.0) {
        let p = SolitonProblem::benchmark();
        let functions = vec![u.shift_slots(1), n.shift_slots(1 + cu.len())];
        let mut constants = vec![g0];
        constants.extend(cu);
        constants.extend(cn);
        let cand = CandidateSolution::new(functions, constants, Provenance::Manual);
        prop_assert!(cand.is_ok());
        let r = evaluate(&p, &cand.unwrap());
        if r.is_accepted() {
            let sum = r.sne.iter().fold(0.0, |a, b| a + b);
            prop_assert_eq!(r.total.to_bits(), sum.to_bits());
            for (m, s) in r.mse().iter().zip(&r.sne) {
                prop_assert!(close(m * r.count as f64, *s, 1e-15));
                prop_assert!(*s >= 0.0);
            }
        } else {
            prop_assert!(r.total.is_infinite());
        }
    }
}

#[test]
fn enumeration_yields_valid_distinct_expressions_of_bounded_depth() {
    let g = Grammar::new(2, vec![UnaryOp::Sech, UnaryOp::Exp], vec![BinaryOp::Add, BinaryOp::Pow], vec![LeafKind::Variable, LeafKind::FitConst]).unwrap();
    let en = enumerate_expressions(&g, 2);
    let total = en.total_count();
    let all: Vec<_> = en.collect();
    assert_eq!(all.len() as u128, total);
    let mut seen = std::collections::HashSet::new();
    for e in &all {
        assert!(validate_postfix(e.tokens()));
        assert!(e.depth() <= 2);
        assert!(seen.insert(e.to_string()));
    }
}

#[test]
fn benchmark_grid_is_mirrored() {
    let g = Grid::benchmark();
    let p = g.points();
    assert_eq!(p.len(), 127);
    for (a, b) in p.iter().zip(common::grid(-10.0, 10.0, 127)) {
        assert!((a - b).abs() < 1e-12);
    }
    for i in 0..p.len() {
        assert_eq!(p[i], -p[p.len() - 1 - i]);
    }
}
