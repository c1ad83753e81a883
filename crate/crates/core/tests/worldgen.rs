use lics::planning::{inflate, plan_astar};
use lics::worldgen::{
    generate_world, load_world_dir, save_world, split_worlds, world_from_str, world_to_string, WorldgenConfig,
};

#[test]
fn generated_worlds_are_connected_and_walled() {
    for seed in 0..20 {
        let cfg = WorldgenConfig {
            seed,
            ..Default::default()
        };
        let w = generate_world(&cfg).unwrap();
        assert_eq!(w.id, format!("world_{seed:04}"));
        assert_eq!((w.width, w.height), (30, 30));
        for i in 0..30 {
            assert!(w.is_occupied(i, 0) && w.is_occupied(i, 29) && w.is_occupied(0, i) && w.is_occupied(29, i));
        }
        let cm = inflate(&w, cfg.robot_radius);
        let s = cm.cell_of(w.start.position()).unwrap();
        let g = cm.cell_of(w.goal).unwrap();
        let path = plan_astar(&cm, s, g).unwrap();
        assert!((path.cost - w.lstar.unwrap()).abs() < 1e-12);
        // L* is at least the straight-line distance between cell centers
        assert!(w.lstar.unwrap() >= w.start.position().dist(&w.goal) - 1e-9);
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let cfg = |seed| WorldgenConfig {
        seed,
        ..Default::default()
    };
    assert_eq!(generate_world(&cfg(4)).unwrap(), generate_world(&cfg(4)).unwrap());
    assert_ne!(generate_world(&cfg(4)).unwrap().cells, generate_world(&cfg(5)).unwrap().cells);
}

#[test]
fn fill_controls_density() {
    let density = |fill| {
        let mut occ = 0;
        for seed in 0..10 {
            let w = generate_world(&WorldgenConfig {
                seed,
                fill_probability: fill,
                ..Default::default()
            })
            .unwrap();
            occ += w.cells.iter().filter(|&&c| c).count();
        }
        occ
    };
    assert!(density(0.05) < density(0.2));
}

#[test]
fn text_round_trip_and_errors() {
    let w = generate_world(&WorldgenConfig::default()).unwrap();
    let text = world_to_string(&w);
    assert_eq!(world_from_str(&text).unwrap(), w);
    assert!(world_from_str("id: x\n").is_err());
    let bad = text.replacen("resolution: 0.15", "resolution: abc", 1);
    assert!(world_from_str(&bad).is_err());
    let short = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
    assert!(world_from_str(&short).is_err());
}

#[test]
fn directory_round_trip_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let worlds: Vec<_> = (0..6)
        .map(|seed| {
            generate_world(&WorldgenConfig {
                seed,
                ..Default::default()
            })
            .unwrap()
        })
        .collect();
    for w in &worlds {
        save_world(w, dir.path().join(format!("{}.world", w.id))).unwrap();
    }
    let back = load_world_dir(dir.path()).unwrap();
    assert_eq!(back, worlds);
    let (train, test) = split_worlds(&worlds, 0.5, 3);
    assert_eq!((train.len(), test.len()), (3, 3));
    assert_eq!(split_worlds(&worlds, 0.5, 3), (train.clone(), test.clone()));
    for w in &worlds {
        assert!(train.contains(w) != test.contains(w));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        WorldgenConfig {
            fill_probability: 1.5,
            ..Default::default()
        },
        WorldgenConfig {
            width: 5,
            ..Default::default()
        },
        WorldgenConfig {
            max_attempts: 0,
            ..Default::default()
        },
    ] {
        assert!(generate_world(&cfg).is_err());
    }
    // a solid grid can never connect start and goal
    let solid = WorldgenConfig {
        fill_probability: 1.0,
        smoothing_iterations: 0,
        corridor_margin: 0.0,
        max_attempts: 3,
        ..Default::default()
    };
    assert!(generate_world(&solid).is_err());
}
