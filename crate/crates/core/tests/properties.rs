use lastarrival::cardgame::{best_response, fictitious_play, CardGameConfig, DevilMix};
use lastarrival::certify::{certify_upper, Evidence};
use lastarrival::ppoly::{build_symbolic, eval_prefix, eval_symbolic};
use lastarrival::sim::{estimate, AdversaryChoice, SelectorStrategy};
use lastarrival::thresholds::{
    lower_strategy, nonacceptance_prob, upper_bounds, win_prob, win_prob_exact, LowerRecursion,
};
use lastarrival::{Precision, Real, TailRule, ThresholdStrategy, Window};
use proptest::prelude::*;

fn p() -> Precision {
    Precision::default()
}

fn rel_close(a: &Real, b: &Real, tol: f64) -> bool {
    let scale = a.abs().max(&b.abs()).clone();
    let diff = (a - b).abs();
    diff <= Real::from_f64(p(), tol) * scale.max(&Real::from_f64(p(), 1e-300))
}

/// `n` non-negative gaps with sum at most 1, drawn as scaled weights.
fn gaps(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(0.0f64..1.0, n), 0.05f64..1.0).prop_map(|(w, total)| {
        let s: f64 = w.iter().sum::<f64>().max(1e-12);
        w.into_iter().map(|x| x / s * total * 0.999).collect()
    })
}

fn sized_gaps(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_n).prop_flat_map(gaps)
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().map(|&x| Real::from_f64(p(), x)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_agrees_with_symbolic(x in sized_gaps(8)) {
        let x = reals(&x);
        let prefix = eval_prefix(&x).unwrap();
        for k in 1..=x.len() {
            let poly = build_symbolic(k).unwrap();
            let sym = eval_symbolic(&poly, &x[..k]).unwrap();
            prop_assert!(rel_close(prefix.get(k), &sym, 1e-30), "k = {}: {} vs {}", k, prefix.get(k), sym);
        }
    }

    #[test]
    fn prefix_nondecreasing_in_each_gap(x in sized_gaps(12), pick in 0usize..12, frac in 0.0f64..1.0) {
        let i = pick % x.len();
        let slack = 1.0 - x.iter().sum::<f64>();
        let mut y = x.clone();
        y[i] += slack * frac;
        let before = eval_prefix(&reals(&x)).unwrap();
        let after = eval_prefix(&reals(&y)).unwrap();
        for k in 1..=x.len() {
            let tiny = Real::from_f64(p(), 1e-32);
            prop_assert!(after.get(k) >= &(before.get(k) - &tiny));
        }
    }

    #[test]
    fn windowed_upper_bound_dominates_exact(theta in 0.30f64..0.37, w in 1usize..6) {
        let theta = Real::from_f64(p(), theta);
        let exact = upper_bounds(&theta, 30, Window::Exact).unwrap();
        let windowed = upper_bounds(&theta, 30, Window::Truncated(w)).unwrap();
        let upto = exact.b.len().min(windowed.b.len());
        for n in 0..upto {
            let tiny = Real::from_f64(p(), 1e-30);
            prop_assert!(&windowed.b[n] + &tiny >= exact.b[n], "n = {}", n + 1);
        }
        // a failure of the weaker bound implies one of the exact bound no later
        if let Some(nw) = windowed.failure_index() {
            prop_assert!(exact.failure_index().is_some_and(|ne| ne <= nw));
        }
    }

    #[test]
    fn windowed_lower_recursion_dominated_by_exact(theta in 0.30f64..0.352, w in 1usize..6) {
        let theta = Real::from_f64(p(), theta);
        let mut exact = LowerRecursion::new(&theta, Window::Exact).unwrap();
        let mut windowed = LowerRecursion::new(&theta, Window::Truncated(w)).unwrap();
        for n in 1..=25 {
            let (Ok(e), Ok(wv)) = (exact.step().cloned(), windowed.step().cloned()) else { break };
            let tiny = Real::from_f64(p(), 1e-30);
            prop_assert!(wv <= &e + &tiny, "n = {}: {} > {}", n, wv, e);
        }
    }

    #[test]
    fn beta_minima_are_idempotent(theta in 0.30f64..0.37, horizon in 5usize..40) {
        let theta = Real::from_f64(p(), theta);
        let seq = upper_bounds(&theta, horizon, Window::Truncated(24)).unwrap();
        prop_assert_eq!(seq.recomputed_minima(), seq.beta.clone());
        let again: Vec<Real> = seq.beta.iter().enumerate()
            .map(|(i, b)| seq.beta[i..].iter().fold(b.clone(), |m, x| m.min(x).clone()))
            .collect();
        prop_assert_eq!(again, seq.beta);
    }

    #[test]
    fn nonacceptance_depends_only_on_running_minima(a in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let s = ThresholdStrategy::new(reals(&a), TailRule::None).unwrap();
        let n = a.len();
        let alpha = ThresholdStrategy::new(s.running_minima(n).unwrap(), TailRule::None).unwrap();
        prop_assert_eq!(nonacceptance_prob(&s, n).unwrap(), nonacceptance_prob(&alpha, n).unwrap());
    }

    #[test]
    fn general_and_monotone_win_probabilities_agree(mut a in prop::collection::vec(0.0f64..1.0, 1..12)) {
        a.sort_by(f64::total_cmp);
        let s = ThresholdStrategy::new(reals(&a), TailRule::None).unwrap();
        for n in 1..=a.len() {
            let g = win_prob(&s, n).unwrap();
            let m = win_prob_exact(&s, n).unwrap();
            prop_assert!((&g - &m).abs() < Real::from_f64(p(), 1e-30), "n = {}", n);
        }
    }

    #[test]
    fn lower_exact_wins_exactly_theta(theta in 0.30f64..0.352) {
        let theta = Real::from_f64(p(), theta);
        let s = lower_strategy(&theta, 12, Window::Exact).unwrap();
        for n in 1..=12 {
            let w = win_prob_exact(&s, n).unwrap();
            prop_assert!((&w - &theta).abs() < Real::from_f64(p(), 1e-25), "n = {}", n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn upper_verdicts_stable_at_240_bits(theta in 0.353f64..0.37) {
        let wide = Precision::new(240).unwrap();
        let t120 = Real::from_f64(p(), theta);
        let t240 = Real::from_f64(wide, theta);
        let a = certify_upper(&t120, 24, 200).unwrap();
        let b = certify_upper(&t240, 24, 200).unwrap();
        prop_assert_eq!(a.is_certified(), b.is_certified());
        let index = |o: &lastarrival::certify::Outcome| match o.certificate().map(|c| &c.evidence) {
            Some(Evidence::Upper { failure_index, .. }) => Some(*failure_index),
            _ => None,
        };
        prop_assert_eq!(index(&a), index(&b));
    }

    #[test]
    fn card_value_convex_and_above_uniform_guess(
        n in 1usize..5, extra in 0usize..5,
        u in prop::collection::vec(0.01f64..1.0, 4), v in prop::collection::vec(0.01f64..1.0, 4),
        t in 0.0f64..1.0,
    ) {
        let c = CardGameConfig::new(n + extra, n).unwrap();
        let norm = |w: &[f64]| {
            let s: f64 = w[..n].iter().sum();
            DevilMix::new(w[..n].iter().map(|x| x / s).collect()).unwrap()
        };
        let (pm, qm) = (norm(&u), norm(&v));
        let mid = DevilMix::new(pm.weights.iter().zip(&qm.weights).map(|(a, b)| t * a + (1.0 - t) * b).collect()).unwrap();
        let value = |m: &DevilMix| best_response(&c, m).unwrap().0;
        prop_assert!(value(&mid) <= t * value(&pm) + (1.0 - t) * value(&qm) + 1e-12);
        prop_assert!(value(&pm) >= 1.0 / n as f64 - 1e-12);
    }

    #[test]
    fn fictitious_play_gap_nonnegative(n in 1usize..4, extra in 0usize..6, iters in 1usize..300) {
        let c = CardGameConfig::new(n + extra, n).unwrap();
        let rep = fictitious_play(&c, iters, 0.0).unwrap();
        prop_assert!(rep.gap >= -1e-12, "{}", rep.gap);
        prop_assert!(rep.lower <= rep.upper + 1e-12);
    }

    #[test]
    fn monte_carlo_matches_exact(mut a in prop::collection::vec(0.0f64..1.0, 1..30), seed in any::<u64>()) {
        a.sort_by(f64::total_cmp);
        let n = a.len();
        let s = ThresholdStrategy::new(reals(&a), TailRule::None).unwrap();
        let exact = win_prob_exact(&s, n).unwrap().to_f64();
        let r = estimate(&SelectorStrategy::Threshold(s), &AdversaryChoice::Fixed { n }, 100_000, seed, 4).unwrap();
        let sigma = r.std_error.max(1e-4);
        prop_assert!((r.estimate - exact).abs() < 5.0 * sigma, "{} vs {}", r.estimate, exact);
    }

    #[test]
    fn monte_carlo_matches_general_win_prob(a in prop::collection::vec(0.0f64..1.0, 1..12), seed in any::<u64>()) {
        let n = a.len();
        let s = ThresholdStrategy::new(reals(&a), TailRule::None).unwrap();
        let exact = win_prob(&s, n).unwrap().to_f64();
        let r = estimate(&SelectorStrategy::Threshold(s), &AdversaryChoice::Fixed { n }, 100_000, seed, 4).unwrap();
        let sigma = r.std_error.max(1e-4);
        prop_assert!((r.estimate - exact).abs() < 5.0 * sigma, "{} vs {}", r.estimate, exact);
    }

    #[test]
    fn raising_thresholds_cannot_beat_one_minus_a1(a1 in 0.0f64..1.0, bump in 0.0f64..0.5, seed in any::<u64>()) {
        let raised = (a1 + bump).min(1.0);
        let s = ThresholdStrategy::new(reals(&[raised]), TailRule::None).unwrap();
        let r = estimate(&SelectorStrategy::Threshold(s), &AdversaryChoice::Fixed { n: 1 }, 20_000, seed, 2).unwrap();
        prop_assert!(r.estimate <= 1.0 - a1 + 5.0 * r.std_error.max(1e-3));
    }
}
