use proptest::prelude::*;

use hyperabm::metrics::{bollinger, breach_count, rank_solutions, reproduction_fitness, BollingerConfig, Candidate, ReproductionFitConfig};

proptest! {
    #[test]
    fn wider_bounds_never_add_breaches(prices in prop::collection::vec(1.0f64..200.0, 0..50), lo in 0.5f64..0.95, hi in 1.05f64..1.5, widen in 0.0f64..0.2) {
        let narrow = breach_count(&prices, 100.0, lo, hi).unwrap();
        let wide = breach_count(&prices, 100.0, lo - widen * lo, hi + widen).unwrap();
        prop_assert!(wide <= narrow);
    }

    #[test]
    fn bands_are_ordered_and_shift_invariant(series in prop::collection::vec(10.0f64..100.0, 5..40), shift in -5.0f64..5.0) {
        let cfg = BollingerConfig { window: 5, k: 2.0 };
        let b = bollinger(&series, &cfg).unwrap();
        for i in 0..b.ma.len() {
            prop_assert!(b.lower[i] <= b.ma[i] && b.ma[i] <= b.upper[i]);
        }
        let moved: Vec<f64> = series.iter().map(|x| x + shift).collect();
        prop_assert!((bollinger(&moved, &cfg).unwrap().b_avg - b.b_avg).abs() < 1e-9);
    }

    #[test]
    fn reproduction_error_is_zero_only_on_match(real in prop::collection::vec(1.0f64..100.0, 2..30), bump in 0.01f64..5.0, at in 0usize..30) {
        let cfg = ReproductionFitConfig { w1: 1.0, w2: 1.0 };
        prop_assert_eq!(reproduction_fitness(&real, &real, &cfg).unwrap(), 0.0);
        let mut sim = real.clone();
        let i = at % sim.len();
        sim[i] += bump;
        prop_assert!(reproduction_fitness(&real, &sim, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn ranking_is_sorted_and_complete(c in prop::collection::vec((-10i32..10, 0i32..5), 0..30)) {
        let cands: Vec<Candidate> = c.iter().map(|(f, x)| Candidate { fitness: f64::from(*f), complexity: f64::from(*x) }).collect();
        let ranked = rank_solutions(&cands);
        prop_assert_eq!(ranked.len(), cands.len());
        for w in ranked.windows(2) {
            let (a, b) = (w[0].candidate, w[1].candidate);
            prop_assert!(a.fitness > b.fitness || (a.fitness == b.fitness && a.complexity <= b.complexity));
        }
    }
}
