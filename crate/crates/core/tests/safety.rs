mod common;

use common::oracles::{near_boundary, swept_unsafe};
use lics::expert::Action;
use lics::geometry::Point2;
use lics::safety::{check_action, filter_action, turning_radii, MotionClass, Roi, SafetyConfig};
use lics::sim::Footprint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bare() -> SafetyConfig {
    SafetyConfig {
        footprint: Footprint {
            length: 0.5,
            width: 0.4,
        },
        margin: 0.0,
        ..Default::default()
    }
}

#[test]
fn turning_radii_worked_example() {
    let (ri, ro) = turning_radii(1.0, 0.5, 0.4);
    assert!((ro - 1.5025f64.sqrt()).abs() < 1e-12);
    assert!((ri - 0.8).abs() < 1e-12);
    // the inner radius clamps at zero for tight turns
    assert_eq!(turning_radii(0.1, 0.5, 0.4).0, 0.0);
    // sign of the turn radius does not matter
    assert_eq!(turning_radii(-1.0, 0.5, 0.4), turning_radii(1.0, 0.5, 0.4));
}

#[test]
fn margin_widens_the_roi() {
    let cfg = SafetyConfig::default();
    let v = check_action(&[], Action::new(1.0, 0.0), &cfg);
    match v.region {
        Roi::Rectangle { half_width, x_max, .. } => {
            assert!((half_width - (0.5 * cfg.footprint.width + cfg.margin)).abs() < 1e-12);
            assert!((x_max - (0.5 * cfg.footprint.length + cfg.travel(1.0))).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    // a point just outside the bare footprint but inside the margin
    let p = Point2::new(0.5, 0.5 * cfg.footprint.width + 0.5 * cfg.margin);
    assert!(!check_action(&[p], Action::new(0.5, 0.0), &cfg).safe);
    assert!(check_action(&[p], Action::new(0.5, 0.0), &bare()).safe);
}

#[test]
fn classes_follow_the_command() {
    let cfg = bare();
    let cases = [
        (Action::new(0.0, 0.0), MotionClass::Stationary),
        (Action::new(0.7, 0.0005), MotionClass::Linear),
        (Action::new(-0.7, 0.0), MotionClass::Linear),
        (Action::new(0.7, 0.4), MotionClass::Radial),
        (Action::new(0.0, -1.0), MotionClass::RotationInPlace),
    ];
    for (a, class) in cases {
        assert_eq!(check_action(&[], a, &cfg).class, class, "{a:?}");
        assert!(check_action(&[], a, &cfg).safe);
    }
    // standing still is safe even with a point touching the body
    assert!(check_action(&[Point2::new(0.1, 0.0)], Action::new(0.0, 0.0), &cfg).safe);
}

#[test]
fn reversing_checks_behind() {
    let cfg = bare();
    let behind = [Point2::new(-0.8, 0.0)];
    assert!(check_action(&behind, Action::new(0.5, 0.0), &cfg).safe);
    assert!(!check_action(&behind, Action::new(-0.5, 0.0), &cfg).safe);
}

#[test]
fn verdicts_agree_with_swept_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SafetyConfig::default();
    let (mut agree, mut total, mut unsafe_count) = (0, 0, 0);
    for _ in 0..2000 {
        let a = Action::new(rng.random_range(-1.5..1.5), rng.random_range(-2.5..2.5));
        let p = Point2::new(rng.random_range(-2.0..2.5), rng.random_range(-1.5..1.5));
        let got = !check_action(&[p], a, &cfg).safe;
        let want = swept_unsafe(&[p], a, &cfg, 0.0);
        total += 1;
        unsafe_count += want as usize;
        if got == want {
            agree += 1;
        } else {
            assert!(near_boundary(&[p], a, &cfg, 0.01), "{a:?} {p:?}: layer {got}, oracle {want}");
        }
    }
    assert!(agree as f64 / total as f64 > 0.98, "{agree}/{total}");
    assert!(unsafe_count > 100);
}

proptest! {
    #[test]
    fn mirror_symmetry(v in -1.5f64..1.5, w in -2.5f64..2.5, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let cfg = SafetyConfig::default();
        let p = [Point2::new(x, y)];
        let q = [Point2::new(x, -y)];
        let a = check_action(&p, Action::new(v, w), &cfg);
        let b = check_action(&q, Action::new(v, -w), &cfg);
        prop_assert_eq!(a.safe, b.safe);
        prop_assert_eq!(a.class, b.class);
        // running the mirrored motion backwards mirrors x as well
        let r = [Point2::new(-x, -y)];
        let c = check_action(&r, Action::new(-v, w), &cfg);
        prop_assert_eq!(a.safe, c.safe);
    }

    #[test]
    fn slower_is_never_less_safe_straight(v in 0.01f64..2.0, k in 0.0f64..1.0, x in -2.0f64..4.0, y in -1.0f64..1.0) {
        let cfg = SafetyConfig::default();
        let p = [Point2::new(x, y)];
        if check_action(&p, Action::new(v, 0.0), &cfg).safe {
            prop_assert!(check_action(&p, Action::new(v * k.max(0.01), 0.0), &cfg).safe);
        }
    }

    #[test]
    fn filter_output_is_safe_or_stop(
        v in -1.5f64..1.5, w in -2.5f64..2.5,
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 0..12),
        gy in -1.0f64..1.0,
    ) {
        let cfg = SafetyConfig::default();
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        let proposed = Action::new(v, w);
        let (out, verdict) = filter_action(&pts, proposed, Point2::new(1.0, gy), &cfg);
        // the verdict belongs to the executed command
        prop_assert_eq!(&verdict, &check_action(&pts, out, &cfg));
        if check_action(&pts, proposed, &cfg).safe {
            prop_assert_eq!(out, proposed);
        } else {
            prop_assert!(verdict.safe || out == Action::new(0.0, 0.0));
            if out.v == 0.0 && out.w != 0.0 && proposed.v * 0.5 != 0.0 {
                // recovery rotation turns toward the goal side
                prop_assert_eq!(out.w > 0.0, gy >= 0.0);
            }
        }
    }
}
