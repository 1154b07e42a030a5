mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;
use tog_core::engine::{run, PruneMode, SearchConfig, Termination};

#[test]
fn best_path_equals_exhaustive_maximum() {
    for seed in 0..60 {
        best_matches_oracle(seed).unwrap();
    }
}

#[test]
fn ledger_bounds_and_invariants_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..150 {
        let g = random_kg(&mut rng, 50, 8, 4);
        let weights = random_weights(&mut rng, &g, 0.2);
        let width = rng.random_range(1..=4);
        let depth = rng.random_range(1..=4);
        let mut cfg = if rng.random_bool(0.5) { SearchConfig::tog() } else { SearchConfig::tog_r() };
        cfg.width = width;
        cfg.depth = depth;
        cfg.seed = i;
        if rng.random_bool(0.3) {
            cfg.prune_mode = PruneMode::Unified;
        }
        let yes_at = rng.random_bool(0.3).then(|| rng.random_range(1..=depth));
        let backend = weighted_backend(weights, &[entity(0), entity(1)], yes_at);
        let out = run("q", &cfg, &backend, &backend, &g.kg).unwrap();
        let ledger = out.outcome.ledger;
        assert!(ledger.total() <= cfg.max_calls(true), "run {i}: {ledger:?} over {}", cfg.max_calls(true));
        assert_eq!(backend.calls().len(), ledger.all_calls());
        check_invariants(&out.trace, &g.triples).unwrap_or_else(|e| panic!("run {i}: {e}"));
        if out.outcome.fallback {
            assert_eq!(out.outcome.depth, depth);
            assert_eq!(out.outcome.termination, Termination::DepthExhausted);
        }
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    for (i, base) in [SearchConfig::tog(), SearchConfig::tog_r()].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let g = random_kg(&mut rng, 30, 6, 3);
        let weights = random_weights(&mut rng, &g, 0.0);
        let cfg = SearchConfig { seed: 42, ..base };
        let once = || {
            let b = weighted_backend(weights.clone(), &[entity(0)], None);
            serde_json::to_string(&run("q", &cfg, &b, &b, &g.kg).unwrap().trace).unwrap()
        };
        assert_eq!(once(), once());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn scaling_scores_keeps_selection(seed in 0u64..10_000, factor in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_kg(&mut rng, 20, 5, 3);
        let weights = random_weights(&mut rng, &g, 0.0);
        let scaled = weights.iter().map(|(k, v)| (k.clone(), v * factor)).collect();
        let cfg = SearchConfig { width: 2, depth: 3, ..SearchConfig::default() };
        let a = weighted_backend(weights, &[entity(0)], None);
        let b = weighted_backend(scaled, &[entity(0)], None);
        let ra = run("q", &cfg, &a, &a, &g.kg).unwrap();
        let rb = run("q", &cfg, &b, &b, &g.kg).unwrap();
        prop_assert_eq!(ra.trace.depths.len(), rb.trace.depths.len());
        for (x, y) in ra.trace.depths.iter().zip(&rb.trace.depths) {
            let (px, py) = (x.beam.paths().unwrap(), y.beam.paths().unwrap());
            prop_assert_eq!(px.len(), py.len());
            for (p, q) in px.iter().zip(py) {
                prop_assert_eq!(p.identity(), q.identity());
                prop_assert!((p.score - q.score).abs() < 1e-9);
            }
        }
    }
}
