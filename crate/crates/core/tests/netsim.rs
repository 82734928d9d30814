use std::collections::BTreeSet;

use proptest::prelude::*;
use snips::chunkstore::{Address, ChunkId};
use snips::netsim::{
    build_stores, init_similarity, init_similarity_sized, overlap_coefficient, proof_accuracy, run, run_baseline,
    run_scenario, simulate_false_consistency, simulate_false_positive, union_of, Latency, MetricsReport, Protocol,
    Scenario, ScenarioConfig, BASELINE_ENVELOPE, MIB,
};

fn ids(xs: &[u8]) -> BTreeSet<ChunkId> {
    xs.iter().map(|&x| Address([x; 32])).collect()
}

fn small(scenario: Scenario, peers: usize, chunks: u64) -> ScenarioConfig {
    ScenarioConfig { peers, total_storage_bytes: chunks * 256, chunk_size: 256, scenario, seed: 11, ..Default::default() }
}

fn csv(r: &MetricsReport) -> String {
    let mut out = Vec::new();
    MetricsReport::write_csv(std::slice::from_ref(r), false, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn overlap_examples() {
    assert_eq!(overlap_coefficient(&ids(&[1, 2, 3]), &ids(&[2, 3, 4])), 2.0 / 3.0);
    assert_eq!(overlap_coefficient(&ids(&[1, 2]), &ids(&[1, 2])), 1.0);
    assert_eq!(overlap_coefficient(&ids(&[1]), &ids(&[2])), 0.0);
    assert_eq!(overlap_coefficient(&ids(&[]), &ids(&[])), 1.0);
    assert_eq!(overlap_coefficient(&ids(&[1]), &ids(&[])), 0.0);
    assert_eq!(overlap_coefficient(&ids(&[1]), &ids(&[1, 2, 3])), 1.0);
}

#[test]
fn accuracy_examples() {
    assert_eq!(proof_accuracy(&ids(&[1, 2]), &ids(&[1, 2])), 1.0);
    assert_eq!(proof_accuracy(&ids(&[]), &ids(&[1, 2, 3, 4, 5])), 0.0);
    assert_eq!(proof_accuracy(&ids(&[]), &ids(&[])), 1.0);
    assert_eq!(proof_accuracy(&ids(&[1, 9]), &ids(&[1, 2, 3, 4])), 0.25);
}

#[test]
fn similarity_extremes() {
    let (a, b) = init_similarity_sized(300, 1.0, 64, 1);
    assert_eq!(a.ids().collect::<Vec<_>>(), b.ids().collect::<Vec<_>>());
    let (a, b) = init_similarity_sized(300, 0.0, 64, 1);
    assert!(a.ids().all(|id| !b.contains(id)));
    let (a, b) = init_similarity(1000, 0.5, 3);
    let sa: BTreeSet<_> = a.ids().copied().collect();
    let sb: BTreeSet<_> = b.ids().copied().collect();
    assert_eq!(sa.intersection(&sb).count(), 500);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn similarity_sets_have_requested_overlap(n in 1usize..400, s in 0.0f64..=1.0, seed in any::<u64>()) {
        let (a, b) = init_similarity_sized(n, s, 32, seed);
        let sa: BTreeSet<_> = a.ids().copied().collect();
        let sb: BTreeSet<_> = b.ids().copied().collect();
        prop_assert_eq!(sa.len(), n);
        prop_assert_eq!(sb.len(), n);
        let shared = sa.intersection(&sb).count();
        prop_assert_eq!(shared, (s * n as f64).round() as usize);
        prop_assert!((overlap_coefficient(&sa, &sb) - s).abs() <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn small_neighborhoods_converge(peers in 2usize..5, chunks in 1u64..120, kind in 0u8..3, x in 0.0f64..=1.0, seed in any::<u64>()) {
        let scenario = match kind {
            0 => Scenario::ChunkLoss(x),
            1 => Scenario::ChunkAdd((x * 40.0 * 256.0) as u64),
            _ => Scenario::Similarity(x),
        };
        let config = ScenarioConfig { seed, ..small(scenario, peers, chunks) };
        let r = run_scenario(&config);
        prop_assert!(r.converged);
        prop_assert!(r.proof_accuracy_per_round.iter().all(|a| (0.0..=1.0).contains(a)));
        let union = union_of(&build_stores(&config));
        let stores = build_stores(&config);
        for (i, s) in stores.iter().enumerate() {
            let want: BTreeSet<ChunkId> = union.iter().filter(|id| !s.contains(id)).copied().collect();
            prop_assert_eq!(&r.transferred[i], &want);
        }
        let b = run_baseline(&ScenarioConfig { protocol: Protocol::Baseline, ..config });
        prop_assert!(b.converged);
        prop_assert_eq!(b.transferred, r.transferred);
    }
}

#[test]
fn no_loss_means_proof_broadcasts_only() {
    let r = run_scenario(&small(Scenario::ChunkLoss(0.0), 4, 200));
    assert!(r.converged);
    assert_eq!(r.select_messages, 0);
    assert_eq!(r.upload_messages, 0);
    assert_eq!(r.new_proof_messages, 0);
    assert_eq!(r.prove_messages, 12);
    assert_eq!(r.metadata_bytes, r.sync_metadata_bytes);
    assert_eq!(r.proof_accuracy_per_round, [1.0]);
}

#[test]
fn disjoint_peers_double_their_stores() {
    let config = small(Scenario::Similarity(0.0), 2, 500);
    let r = run_scenario(&config);
    assert!(r.converged);
    for t in &r.transferred {
        assert_eq!(t.len(), 500);
    }
    assert!(r.select_messages >= 1);
}

#[test]
fn disjoint_sync_metadata_under_one_order_above_identical() {
    let at = |s| run_scenario(&ScenarioConfig { scenario: Scenario::Similarity(s), seed: 3, ..Default::default() });
    let (r0, r1) = (at(0.0), at(1.0));
    assert_eq!(r1.select_messages, 0);
    let ratio = r0.sync_metadata_bytes as f64 / r1.sync_metadata_bytes as f64;
    assert!(ratio > 1.0 && ratio < 10.0, "sync metadata ratio {ratio}");
}

#[test]
fn metadata_nonincreasing_in_similarity() {
    let reports: Vec<MetricsReport> = (0..=10)
        .map(|i| run_scenario(&ScenarioConfig { scenario: Scenario::Similarity(i as f64 / 10.0), seed: 5, ..Default::default() }))
        .collect();
    for w in reports.windows(2) {
        assert!(w[0].metadata_bytes >= w[1].metadata_bytes, "{} then {}", w[0].scenario, w[1].scenario);
    }
}

#[test]
fn baseline_identical_stores_exact_bytes() {
    let n = 777u64;
    let r = run_baseline(&ScenarioConfig { protocol: Protocol::Baseline, ..small(Scenario::ChunkLoss(0.0), 2, n) });
    let offer = BASELINE_ENVELOPE + 32 * n;
    let want = BASELINE_ENVELOPE + n.div_ceil(8);
    assert_eq!(r.metadata_bytes, 2 * (offer + want));
    assert_eq!(r.chunk_payload_bytes, 0);
    assert!(r.converged);
}

#[test]
fn baseline_full_loss_uploads_whole_store() {
    let r = run_baseline(&ScenarioConfig { protocol: Protocol::Baseline, ..small(Scenario::ChunkLoss(1.0), 2, 300) });
    assert_eq!(r.chunk_payload_bytes, 300 * 256);
    assert_eq!(r.upload_messages, 300);
    assert!(r.converged);
}

/// Least-squares fit of `y = a + b x`; returns (b, r²).
fn fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

#[test]
fn baseline_metadata_linear_in_added_data() {
    let added = [1.0, 2.0, 4.0, 8.0];
    let ys: Vec<f64> = added
        .iter()
        .map(|&mb| {
            let c = ScenarioConfig {
                protocol: Protocol::Baseline,
                peers: 8,
                total_storage_bytes: 4 * MIB,
                scenario: Scenario::ChunkAdd((mb * MIB as f64) as u64),
                ..Default::default()
            };
            run(&c).metadata_bytes as f64
        })
        .collect();
    let (slope, r2) = fit(&added, &ys);
    assert!(slope > 0.0);
    assert!(r2 > 0.999, "r² {r2}");
}

#[test]
fn snips_fifty_times_leaner_than_baseline() {
    let c = ScenarioConfig { peers: 8, scenario: Scenario::ChunkLoss(0.1), ..Default::default() };
    let s = run(&c);
    let b = run(&ScenarioConfig { protocol: Protocol::Baseline, ..c });
    assert!(s.converged && b.converged);
    assert!(s.metadata_bytes * 50 <= b.metadata_bytes, "{} vs {}", s.metadata_bytes, b.metadata_bytes);
}

#[test]
fn identical_config_identical_report() {
    for scenario in [Scenario::ChunkLoss(0.3), Scenario::ChunkAdd(5000), Scenario::Similarity(0.4)] {
        let c = ScenarioConfig { trace: true, latency: Latency { base: 2, jitter: 5 }, ..small(scenario, 4, 150) };
        let (a, b) = (run_scenario(&c), run_scenario(&c));
        assert!(a.converged);
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.evaluations, b.evaluations);
        let other = run_scenario(&ScenarioConfig { seed: 12, ..c });
        assert_ne!(csv(&a), csv(&other));
    }
}

#[test]
fn exhausted_rounds_report_failure() {
    let r = run_scenario(&ScenarioConfig { max_rounds: 0, ..small(Scenario::ChunkLoss(0.5), 2, 100) });
    assert!(!r.converged);
}

#[test]
fn first_report_exact_without_false_positives() {
    for seed in 0..40 {
        let config = ScenarioConfig { seed, ..small(Scenario::Similarity(0.7), 2, 150) };
        let r = run_scenario(&config);
        for e in r.evaluations.iter().filter(|e| e.pair_round == 1 && e.false_positive_hits == 0 && !e.collision) {
            assert!(e.exact(), "seed {seed}");
        }
    }
}

#[test]
fn false_positive_edge_cases() {
    assert_eq!(simulate_false_positive(0, 100, 50, 1).probability, 0.0);
    let a = simulate_false_positive(50, 10, 200, 1);
    assert_eq!(a, simulate_false_positive(50, 10, 200, 1));
    assert!(a.probability > 0.0 && a.probability <= 1.0);
}

#[test]
fn false_consistency_vanishes_for_large_sets() {
    let e = simulate_false_consistency(100_000, 120, 9);
    assert_eq!(e.false_consistent, 0, "expected about {} hits", e.analytic * 120.0);
}

#[test]
fn false_consistency_reproducible() {
    let a = simulate_false_consistency(20, 3000, 4);
    assert_eq!(a, simulate_false_consistency(20, 3000, 4));
    assert!(a.false_consistent > 0);
}
