use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::beamalign::AlignmentScheme;
use crate::gnnbeam::{train, GnnModel, GraphConfig, RoadInstanceGenerator, TrainConfig};

fn cfg(seed: u64, extra: &str) -> ScenarioConfig {
    ScenarioConfig::parse(
        &format!("seed = {seed}\nscenario.slots = 20\n{extra}"),
        None,
    )
    .unwrap()
}

fn csv(out: &ScenarioOutput) -> (Vec<u8>, Vec<u8>) {
    let mut m = Vec::new();
    let mut l = Vec::new();
    write_metrics_csv(&mut m, &out.records).unwrap();
    write_links_csv(&mut l, &out.records).unwrap();
    (m, l)
}

#[test]
fn single_vehicle_has_no_links_and_zero_capacity() {
    let c = ScenarioConfig::parse("seed = 1\nscenario.vehicles = 1\n", None).unwrap();
    let out = run_scenario(&c, None).unwrap();
    assert_eq!(out.records.len(), 100);
    for r in &out.records {
        assert!(r.links.is_empty());
        assert_eq!(r.sum_capacity_bps, 0.0);
        assert_eq!(r.alignment_s, 0.0);
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let c = cfg(
        5,
        "scenario.churn_probability = 0.2\nnetwork.drop_probability = 0.1\n",
    );
    let a = run_scenario(&c, None).unwrap();
    let b = run_scenario(&c, None).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.trace, b.trace);
    let other = run_scenario(&cfg(6, "scenario.churn_probability = 0.2\n"), None).unwrap();
    assert_ne!(csv(&a), csv(&other));
}

#[test]
fn slot_time_splits_into_alignment_and_data() {
    for scheme in AlignmentScheme::ALL {
        let c = cfg(
            2,
            &format!(
                "scenario.scheme = {}\nscenario.method = fixed\n",
                scheme.as_str()
            ),
        );
        let out = run_scenario(&c, None).unwrap();
        for r in &out.records {
            assert!((r.alignment_s + r.data_s - c.timing.t_slot).abs() <= 1e-15);
            assert!(r.alignment_s >= 0.0 && r.data_s >= 0.0);
            if !r.links.is_empty() {
                assert!(r.sum_capacity_bps > 0.0);
            }
        }
    }
}

#[test]
fn dsrc_scheme_leaves_more_data_time_than_baseline() {
    let run = |scheme: &str| {
        let c = cfg(3, &format!("scenario.scheme = {scheme}\nscenario.method = fixed\nscenario.fixed_width_deg = 2\n"));
        let out = run_scenario(&c, None).unwrap();
        out.records.iter().map(|r| r.sum_capacity_bps).sum::<f64>()
    };
    assert!(run("dsrc2") > run("baseline"));
}

#[test]
fn unfinished_alignment_uses_stale_beams() {
    // A 2-D exhaustive search at 1 degree cannot finish inside a 10 ms slot.
    let c = cfg(
        4,
        "scenario.scheme = baseline\nscenario.method = fixed\nscenario.fixed_width_deg = 1\nalign.elevation_span_deg = 60\n",
    );
    let out = run_scenario(&c, None).unwrap();
    let with_links: Vec<_> = out.records.iter().filter(|r| !r.links.is_empty()).collect();
    assert!(!with_links.is_empty());
    for r in with_links {
        assert_eq!(r.alignment_s, c.timing.t_slot);
        assert_eq!(r.data_s, 0.0);
        assert!(r.links.iter().all(|l| l.misaligned));
        assert_eq!(r.sum_capacity_bps, 0.0);
    }
}

#[test]
fn links_join_members_to_their_leader() {
    let out = run_scenario(&cfg(8, "scenario.churn_probability = 0.3\n"), None).unwrap();
    let mut saw_link = false;
    for r in &out.records {
        let groups: Vec<(u32, Vec<u32>)> = r
            .groups
            .split(';')
            .filter(|g| !g.is_empty())
            .map(|g| {
                let (head, members) = g.split_once(':').unwrap();
                let leader: u32 = head.split('v').next().unwrap().parse().unwrap();
                let ids = members
                    .split(' ')
                    .map(|m| m[..m.len() - 1].parse().unwrap())
                    .collect();
                (leader, ids)
            })
            .collect();
        for l in &r.links {
            saw_link = true;
            let (_, members) = groups
                .iter()
                .find(|(leader, _)| *leader == l.rx)
                .expect("rx leads a group");
            assert!(members.contains(&l.tx));
        }
    }
    assert!(saw_link);
}

#[test]
fn gnn_needs_a_model() {
    let c = cfg(1, "scenario.method = gnn\n");
    assert!(matches!(
        run_scenario(&c, None),
        Err(SimError::MissingCheckpoint)
    ));
    let mut model =
        GnnModel::new(GraphConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let source = RoadInstanceGenerator::with_links(6, 0);
    model = train(
        model,
        &source,
        &TrainConfig {
            epochs: 2,
            instances_per_epoch: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .model;
    let out = run_scenario(&c, Some(&model)).unwrap();
    assert_eq!(out.records.len(), 20);
    assert!(out.records.iter().any(|r| r.sum_capacity_bps > 0.0));
}

#[test]
fn sweep_checks_widths() {
    let c = cfg(1, "");
    assert!(matches!(
        sweep_align(&c, &[0.0]),
        Err(SimError::InvalidWidth(_))
    ));
    assert!(matches!(
        sweep_align(&c, &[361.0]),
        Err(SimError::InvalidWidth(_))
    ));
    let rows = sweep_align(&c, &[360.0, 5.0]).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].beamwidth_deg, 5.0);
    assert_eq!(rows[3].overhead_s, c.timing.t_probe);
}

#[test]
fn validation_errors_are_classified() {
    assert!(SimError::Config(ConfigError::MissingSeed).is_validation());
    assert!(SimError::EmptyData.is_validation());
    assert!(!SimError::Io(std::io::Error::other("x")).is_validation());
}
