mod common;

use cobot_intent::config::DEFAULT_HOME;
use cobot_intent::intent::{lookahead_directions, Lookahead};
use cobot_intent::kinematics::{forward_kinematics, ArmModel, JointConfig, Pose};
use cobot_intent::plan::{plan_pick_place, MotionLimits, PlanError, SegmentKind, TrapezoidProfile};
use cobot_intent::{Phase, SceneConfig};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use common::simulate_move;

fn home() -> Pose {
    forward_kinematics(&ArmModel::default_arm(), &JointConfig(DEFAULT_HOME)).unwrap()
}

#[test]
fn trapezoid_duration_matches_simulation() {
    // frozen from simulate_move(0.30, 0.15, 0.5): 2.300 s
    let p = TrapezoidProfile::new(0.30, 0.15, 0.5);
    assert!((p.duration() - 2.30).abs() < 1e-12);
    let (t, _) = simulate_move(0.30, 0.15, 0.5, 0.0);
    assert!((t - 2.30).abs() < 1e-3, "{t}");

    for (l, v, a) in [(0.02, 0.15, 0.5), (0.045, 0.15, 0.5), (0.5, 0.1, 0.2), (1.0, 0.15, 0.5)] {
        let p = TrapezoidProfile::new(l, v, a);
        let (t, _) = simulate_move(l, v, a, 0.0);
        assert!((p.duration() - t).abs() < 1e-3, "L={l}: {} vs {t}", p.duration());
        for k in 1..10 {
            let tp = p.duration() * k as f64 / 10.0;
            let (_, s) = simulate_move(l, v, a, tp);
            assert!((p.distance_at(tp) - s).abs() < 1e-5, "L={l} t={tp}");
            assert!((p.time_at_distance(p.distance_at(tp)) - tp).abs() < 1e-9);
        }
    }
}

#[test]
fn default_plan_shape() {
    let scene = SceneConfig::default_scene();
    let plan = plan_pick_place(&scene, &ArmModel::default_arm(), &MotionLimits::default(), &home()).unwrap();
    let pre = plan.segment_for_phase(Phase::ApproachPick).unwrap().to.position;
    assert!((pre.z - (0.04 + 0.10)).abs() < 1e-12);
    let phases: Vec<Phase> = plan.segments().iter().map(|s| s.phase).collect();
    assert_eq!(phases, &Phase::ALL[..8]);
    let end = plan.end().position;
    assert!((end.xy() - scene.target_center).norm() <= scene.target_radius);
    assert!(matches!(plan.sample(-0.1), Err(PlanError::OutOfRange { .. })));
    assert!(matches!(plan.sample(plan.duration() + 1e-9), Err(PlanError::OutOfRange { .. })));
}

/// Direction angle across the transport-to-lower corner, recomputed from
/// the simulated speed profile of each segment.
#[test]
fn corner_lookahead_matches_direct_evaluation() {
    let scene = SceneConfig::default_scene();
    let limits = MotionLimits::default();
    let plan = plan_pick_place(&scene, &ArmModel::default_arm(), &limits, &home()).unwrap();
    let transport = *plan.segment_for_phase(Phase::Transport).unwrap();
    let lower = *plan.segment_for_phase(Phase::Lower).unwrap();
    let h = 0.5;
    let t = transport.end_time() - 0.3;

    let at = |time: f64| -> Vector3<f64> {
        let seg = if time <= transport.end_time() { transport } else { lower };
        let len = (seg.to.position - seg.from.position).norm();
        let (_, s) = simulate_move(len, limits.v_max, limits.a_max, time - seg.start_time);
        seg.from.position + (seg.to.position - seg.from.position) * (s / len)
    };
    let (p0, p1, p2) = (at(t), at(t + h), at(t + 2.0 * h));
    let now = (p1 - p0).normalize();
    let next = (p2 - p1).normalize();
    let expected = now.dot(&next).clamp(-1.0, 1.0).acos();

    let Lookahead::Directions { now: a, next: b } = lookahead_directions(&plan, t, h).unwrap() else {
        panic!("corner must not hold");
    };
    let angle = a.angle_to(&b);
    assert!(angle > 0.0 && angle <= std::f64::consts::FRAC_PI_2);
    assert!((angle - expected).abs() < 1e-3, "{angle} vs {expected}");
}

#[test]
fn dwell_is_hold() {
    let plan = plan_pick_place(
        &SceneConfig::default_scene(),
        &ArmModel::default_arm(),
        &MotionLimits::default(),
        &home(),
    )
    .unwrap();
    let grasp = plan.segment_for_phase(Phase::Grasp).unwrap();
    assert!(matches!(grasp.kind, SegmentKind::Dwell));
    let t = grasp.start_time + 0.2;
    assert_eq!(lookahead_directions(&plan, t, 0.5).unwrap(), Lookahead::Hold);
}

#[test]
fn keepout_and_reach() {
    let model = ArmModel::default_arm();
    let mut scene = SceneConfig::default_scene();
    scene.target_center = Vector2::new(0.05, -0.05);
    assert_eq!(
        plan_pick_place(&scene, &model, &MotionLimits::default(), &home()),
        Err(PlanError::Infeasible)
    );
    let mut scene = SceneConfig::default_scene();
    scene.block.position = Vector3::new(2.0, 0.0, 0.02);
    assert!(matches!(
        plan_pick_place(&scene, &model, &MotionLimits::default(), &home()),
        Err(PlanError::Unreachable { .. })
    ));
}

fn scene_strategy() -> impl Strategy<Value = SceneConfig> {
    (0.2f64..0.75, -0.6f64..0.6, 0.2f64..0.75, -0.6f64..0.6, 0.02f64..0.06, 0.015f64..0.04)
        .prop_map(|(bx, by, tx, ty, side, radius)| {
            let mut s = SceneConfig::default_scene();
            s.block_side = side;
            s.block.position = Vector3::new(bx, by, side / 2.0);
            s.target_center = Vector2::new(tx, ty);
            s.target_radius = radius;
            s
        })
        .prop_filter("valid scene", |s| s.validate().is_ok())
        // keep lifted waypoints inside the reach sphere
        .prop_filter("within reach", |s| s.block.position.xy().norm() <= 0.8 && s.target_center.norm() <= 0.8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_plans_hold_invariants(scene in scene_strategy()) {
        let model = ArmModel::default_arm();
        let limits = MotionLimits::default();
        let plan = match plan_pick_place(&scene, &model, &limits, &home()) {
            Ok(p) => p,
            Err(PlanError::Infeasible) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let wps = plan.waypoints();
        prop_assert_eq!(wps[0].time, 0.0);
        for w in wps.windows(2) {
            prop_assert!(w[1].time > w[0].time);
            prop_assert!((w[1].pose.position - w[0].pose.position).norm() <= limits.max_waypoint_spacing + 1e-12);
        }
        let end = plan.end().position;
        prop_assert!((end.xy() - scene.target_center).norm() <= scene.target_radius);
        prop_assert!((plan.duration() - wps.last().unwrap().time).abs() < 1e-12);

        for w in wps {
            let p = plan.sample(w.time).unwrap();
            prop_assert!((p.position - w.pose.position).norm() < 1e-9);
        }
        // continuity and the speed cap
        let n = 2000;
        let dt = plan.duration() / n as f64;
        let mut prev = plan.sample(0.0).unwrap().position;
        for k in 1..=n {
            let p = plan.sample((k as f64 * dt).min(plan.duration())).unwrap().position;
            prop_assert!((p - prev).norm() <= limits.v_max * dt * (1.0 + 1e-9) + 1e-12);
            prev = p;
        }
        for seg in plan.segments() {
            if let SegmentKind::Motion(prof) = seg.kind {
                prop_assert!(prof.peak_speed <= limits.v_max + 1e-12);
                prop_assert!((seg.duration - prof.duration()).abs() < 1e-12);
            }
        }
    }
}
