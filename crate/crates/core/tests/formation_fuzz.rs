use collab_drive::formation::{fuzz_topology, FuzzConfig};

#[test]
fn thousand_events_under_loss_keep_invariants() {
    for seed in 0..4 {
        for drop_probability in [0.0, 0.1, 0.3] {
            let report = fuzz_topology(&FuzzConfig {
                events: 1000,
                drop_probability,
                seed,
                ..FuzzConfig::default()
            })
            .unwrap_or_else(|e| panic!("seed {seed}, loss {drop_probability}: {e}"));
            assert_eq!(report.events_applied, 1000);
        }
    }
}

#[test]
fn dense_cluster_with_heavy_churn() {
    for seed in 10..14 {
        let report = fuzz_topology(&FuzzConfig {
            vehicles: 12,
            area_m: 40.0,
            max_burst: 8,
            events: 1000,
            drop_probability: 0.3,
            seed,
        })
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(report.quiescent_points > 100);
    }
}
