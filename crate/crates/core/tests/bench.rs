use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use lics::bench::{
    aggregate, optimal_time, run_trial, score, score_trial, trial_timeout, write_trace, BenchConfig, TraceRow,
    TrialResult,
};
use lics::expert::{Action, DwaExpert, ScriptedPolicy};
use lics::geometry::{Point2, Pose};
use lics::rollout::Outcome;
use lics::safety::SafetyConfig;
use lics::worldgen::World;
use lics::Error;
use proptest::prelude::*;

fn result(world: &str, trial: u32, outcome: Outcome, time: f64) -> TrialResult {
    TrialResult {
        world_id: world.into(),
        trial,
        policy: "p".into(),
        outcome,
        time,
        max_v: 1.0,
        safety: false,
        policy_failure: false,
        trace: Vec::new(),
    }
}

/// 9 m × 1.5 m open strip, goal 5 m straight ahead of the start.
fn open_strip() -> World {
    let mut w = World::empty("strip", 60, 10, 0.15);
    w.start = Pose::new(0.6, 0.75, 0.0);
    w.goal = Point2::new(5.6, 0.75);
    w.lstar = Some(5.0);
    w
}

#[test]
fn score_hand_cases() {
    assert_abs_diff_eq!(score(true, 8.0, 5.0), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(score(true, 20.0, 5.0), 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(score(true, 9.5, 5.0), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(score(true, 15.0, 5.0), 1.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(score(true, 100.0, 5.0), 0.125, epsilon = 1e-12);
    assert_eq!(score(false, 8.0, 5.0), 0.0);
    assert_eq!(score_trial(&result("w", 0, Outcome::Collision, 3.0), 5.0), 0.0);
}

#[test]
fn optimal_time_uses_fixed_reference_speed() {
    let mut w = open_strip();
    w.lstar = Some(10.0);
    assert_eq!(optimal_time(&w).unwrap(), 5.0);
    w.lstar = Some(7.9);
    assert_abs_diff_eq!(optimal_time(&w).unwrap(), 3.95, epsilon = 1e-12);
    w.lstar = None;
    assert!(matches!(optimal_time(&w), Err(Error::MissingLstar(_))));
    assert_eq!(trial_timeout(5.0), 60.0);
    assert_eq!(trial_timeout(7.0), 70.0);
}

#[test]
fn aggregate_hand_case() {
    let results = [
        result("w", 0, Outcome::Success, 8.0),
        result("w", 1, Outcome::Success, 12.0),
        result("w", 2, Outcome::Timeout, 60.0),
    ];
    let ts = BTreeMap::from([("w".to_string(), 5.0)]);
    let r = aggregate(&results, &ts).unwrap();
    assert_abs_diff_eq!(r.overall.success_rate, 200.0 / 3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.overall.avg_time.unwrap(), 10.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.overall.avg_score, (0.5 + 5.0 / 12.0) / 3.0, epsilon = 1e-12);
    assert_eq!(r.per_world["w"], r.overall);
    assert_eq!(r.per_policy["p"], r.overall);
}

#[test]
fn aggregate_all_failures() {
    let results = [result("w", 0, Outcome::Collision, 1.0), result("w", 1, Outcome::Timeout, 60.0)];
    let ts = BTreeMap::from([("w".to_string(), 5.0)]);
    let r = aggregate(&results, &ts).unwrap();
    assert_eq!(r.overall.success_rate, 0.0);
    assert_eq!(r.overall.avg_time, None);
    assert_eq!(r.overall.avg_score, 0.0);
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["overall"]["avg_time"].is_null());
    assert!(aggregate(&[], &ts).is_err());
    assert!(aggregate(&results, &BTreeMap::new()).is_err());
}

#[test]
fn single_fast_success_scores_metric_maximum() {
    let ts = BTreeMap::from([("w".to_string(), 5.0)]);
    let r = aggregate(&[result("w", 0, Outcome::Success, 9.0)], &ts).unwrap();
    assert_eq!(r.overall.avg_score, 0.5);
}

#[test]
fn csv_has_expected_columns() {
    let ts = BTreeMap::from([("w".to_string(), 5.0)]);
    let r = aggregate(&[result("w", 0, Outcome::Success, 8.0)], &ts).unwrap();
    let mut out = Vec::new();
    r.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "world_id,trial,policy,outcome,T,score");
    assert_eq!(lines.next().unwrap(), "w,0,p,success,8.000,0.500000");
}

#[test]
fn trace_is_json_lines() {
    let rows = vec![
        TraceRow {
            t: 0.0,
            pose: [0.0, 0.0, 0.0],
            action: [1.0, 0.0],
            verdict: None,
        };
        3
    ];
    let mut out = Vec::new();
    write_trace(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let back: TraceRow = serde_json::from_str(line).unwrap();
        assert_eq!(back, rows[0]);
    }
}

#[test]
fn stopped_policy_times_out() {
    let w = open_strip();
    let mut p = ScriptedPolicy::constant(Action::new(0.0, 0.0));
    let r = run_trial(&w, &mut p, &BenchConfig::default(), 0).unwrap();
    assert_eq!(r.outcome, Outcome::Timeout);
    assert_abs_diff_eq!(r.time, 60.0, epsilon = 1e-6);
    assert_eq!(score_trial(&r, optimal_time(&w).unwrap()), 0.0);
}

#[test]
fn expert_crosses_open_strip_near_top_speed() {
    let w = open_strip();
    let cfg = BenchConfig::default().with_max_v(2.0);
    let r = run_trial(&w, &mut DwaExpert::default(), &cfg, 0).unwrap();
    assert_eq!(r.outcome, Outcome::Success);
    assert!((2.5..=5.0).contains(&r.time), "T = {}", r.time);
    assert_eq!(r.max_v, 2.0);
}

#[test]
fn trials_are_deterministic_and_paired() {
    let w = open_strip();
    let cfg = BenchConfig {
        record_trace: true,
        ..BenchConfig::default().with_max_v(1.0)
    };
    let a = run_trial(&w, &mut DwaExpert::default(), &cfg, 1).unwrap();
    let b = run_trial(&w, &mut DwaExpert::default(), &cfg, 1).unwrap();
    assert_eq!(a, b);
    assert!(!a.trace.is_empty());
    let c = run_trial(&w, &mut DwaExpert::default(), &cfg, 2).unwrap();
    assert_ne!(a.trace, c.trace, "odometry noise differs between trials");
}

#[test]
fn safety_layer_records_verdicts() {
    let mut w = open_strip();
    // wall across the strip 1.5 m ahead
    for row in 0..w.height {
        w.set_occupied(15, row, true);
    }
    let cfg = BenchConfig {
        safety: Some(SafetyConfig::default()),
        record_trace: true,
        ..BenchConfig::default().with_max_v(1.0)
    };
    let mut p = ScriptedPolicy::constant(Action::new(1.0, 0.0));
    let r = run_trial(&w, &mut p, &cfg, 0).unwrap();
    assert!(r.safety);
    assert_ne!(r.outcome, Outcome::Collision);
    assert!(r.trace.iter().all(|t| t.verdict.is_some()));
    // verdicts describe the executed command, which the filter keeps safe
    assert!(r.trace.iter().all(|t| t.verdict.as_ref().unwrap().safe));
    assert!(r.trace.iter().any(|t| t.action != [1.0, 0.0]));
    let unsafe_cfg = BenchConfig {
        safety: None,
        ..cfg
    };
    let r = run_trial(&w, &mut p, &unsafe_cfg, 0).unwrap();
    assert_eq!(r.outcome, Outcome::Collision);
}

proptest! {
    #[test]
    fn score_is_bounded_and_monotone(t_star in 0.1f64..50.0, a in 0.0f64..1000.0, b in 0.0f64..1000.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = score(true, lo, t_star);
        let s_hi = score(true, hi, t_star);
        prop_assert!(s_hi <= s_lo);
        for s in [s_lo, s_hi] {
            prop_assert!((0.125 - 1e-12..=0.5 + 1e-12).contains(&s));
        }
        prop_assert_eq!(s_lo == 0.5, lo <= 2.0 * t_star);
        prop_assert_eq!(score(false, lo, t_star), 0.0);
    }
}
