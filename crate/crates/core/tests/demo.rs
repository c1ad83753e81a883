use lics::demo::{build_dataset, derive_seed, perturb_action, record_episode, Dataset, DatasetConfig, NoiseConfig};
use lics::expert::{Action, DwaExpert};
use lics::rollout::{Outcome, RolloutConfig};
use lics::sim::VelocityLimits;
use lics::worldgen::{generate_world, World, WorldgenConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn worlds(n: u64) -> Vec<World> {
    (0..n)
        .map(|seed| {
            generate_world(&WorldgenConfig {
                seed,
                fill_probability: 0.15,
                ..Default::default()
            })
            .unwrap()
        })
        .collect()
}

fn small_cfg(sigma: f64) -> DatasetConfig {
    DatasetConfig {
        noise: NoiseConfig { sigma, seed: 7 },
        episodes_per_world: 1,
        max_attempts: 5,
        rollout: RolloutConfig {
            limits: VelocityLimits {
                v_max: 1.0,
                ..Default::default()
            },
            ..Default::default()
        },
    }
}

#[test]
fn noise_has_the_requested_moments() {
    let wide = VelocityLimits {
        v_max: 1e6,
        w_max: 1e6,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40_000;
    let (mut sv, mut sw, mut svv, mut sww, mut svw) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let p = perturb_action(Action::new(0.5, -0.2), 0.25, &wide, &mut rng);
        let (dv, dw) = (p.executed.v - 0.5, p.executed.w + 0.2);
        assert!((dv - p.noise.0).abs() < 1e-12 && (dw - p.noise.1).abs() < 1e-12);
        sv += dv;
        sw += dw;
        svv += dv * dv;
        sww += dw * dw;
        svw += dv * dw;
    }
    let n = n as f64;
    // 4 standard errors
    assert!((sv / n).abs() < 4.0 * 0.25 / n.sqrt());
    assert!((sw / n).abs() < 4.0 * 0.25 / n.sqrt());
    assert!(((svv / n).sqrt() - 0.25).abs() < 0.005);
    assert!(((sww / n).sqrt() - 0.25).abs() < 0.005);
    assert!((svw / n / 0.0625).abs() < 0.03);
}

#[test]
fn noise_is_clamped_and_zero_sigma_is_identity() {
    let lim = VelocityLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let p = perturb_action(Action::new(lim.v_max, -lim.w_max), 1.0, &lim, &mut rng);
        assert!(p.executed.v.abs() <= lim.v_max && p.executed.w.abs() <= lim.w_max);
        let q = perturb_action(Action::new(0.3, 0.1), 0.0, &lim, &mut rng);
        assert_eq!(q.executed, Action::new(0.3, 0.1));
    }
}

#[test]
fn zero_noise_records_match_the_expert() {
    let w = &worlds(1)[0];
    let cfg = small_cfg(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = record_episode(w, &mut DwaExpert::default(), 0.0, &cfg.rollout, 3, &mut rng).unwrap();
    assert_eq!(ep.outcome, Outcome::Success);
    assert!(!ep.records.is_empty());
    for r in &ep.records {
        assert_eq!(r.a_star, r.a_exec);
        assert_eq!(r.episode_id, 3);
        assert_eq!(r.scan.len(), cfg.rollout.lidar.beams);
        assert!(((r.goal[0].powi(2) + r.goal[1].powi(2)).sqrt() - 1.0).abs() < 1e-9);
    }
    // ticks are evenly spaced
    for pair in ep.records.windows(2) {
        assert!((pair[1].t - pair[0].t - 0.1).abs() < 1e-9);
    }
}

#[test]
fn dataset_is_deterministic_and_round_trips() {
    let ws = worlds(2);
    let cfg = small_cfg(0.25);
    let a = build_dataset(&ws, DwaExpert::default, &cfg).unwrap();
    let b = build_dataset(&ws, DwaExpert::default, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.manifest.expert, "dwa");
    assert!(a.records.iter().any(|r| r.a_star != r.a_exec));
    let total: usize = a.manifest.episodes.iter().map(|e| e.records).sum();
    assert_eq!(total, a.records.len());

    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    // floats survive the text format bit for bit
    let back = Dataset::load(dir.path()).unwrap();
    assert!(back == a);

    // a truncated records file no longer matches the manifest
    let path = dir.path().join(lics::demo::RECORDS_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&path, kept.join("\n")).unwrap();
    assert!(Dataset::load(dir.path()).is_err());
}

#[test]
fn seeds_differ_per_stream() {
    let mut seen = std::collections::HashSet::new();
    for w in 0..50u64 {
        for a in 0..20u64 {
            assert!(seen.insert(derive_seed(1, &[w, a])));
        }
    }
    assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    assert_ne!(derive_seed(1, &[3]), derive_seed(2, &[3]));
}
