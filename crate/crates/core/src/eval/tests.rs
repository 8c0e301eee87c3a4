use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::policy::{FusionMode, PolicyConfig};
use crate::runtime::BufferChoice;
use crate::sim::{CutObject, Expert, ExpertAction};

#[test]
fn score_boundaries() {
    assert_eq!(discrete_score(1.0), 1.0);
    assert_eq!(discrete_score(0.95), 1.0);
    assert_eq!(discrete_score(0.9499), 0.5);
    assert_eq!(discrete_score(0.5), 0.5);
    assert_eq!(discrete_score(0.2), 0.5);
    assert_eq!(discrete_score(0.1999), 0.0);
    assert_eq!(discrete_score(0.0), 0.0);
    let mut prev = 0.0;
    for i in 0..=100 {
        let s = discrete_score(i as f64 / 100.0);
        assert!(s >= prev);
        prev = s;
    }
}

fn run_expert_to_end(task: Task, seed: u64) -> World {
    let mut w = World::new(SimConfig::for_task(task), seed).unwrap();
    let mut e = Expert::new(&w, seed);
    for _ in 0..w.cfg.max_ticks {
        match e.act(&w).unwrap() {
            ExpertAction::Move(a) => {
                w.step(&a).unwrap();
            }
            ExpertAction::Done => break,
        }
    }
    w
}

#[test]
fn expert_trace_meets_every_requirement() {
    for task in [Task::Wipe, Task::Cut] {
        let w = run_expert_to_end(task, 3);
        let a = asr_events(&w.state, task);
        assert!(a.grasp && a.operate && a.place, "{task:?} {a:?}");
    }
    let w = run_expert_to_end(Task::Wipe, 3);
    let (c, s) = wiping_score(&w.state);
    assert!(c >= 0.95 && s == 1.0);
}

#[test]
fn open_gripper_never_grasps() {
    let mut w = World::new(SimConfig::for_task(Task::Wipe), 4).unwrap();
    let mut target = w.state.ee;
    target.width = 0.08;
    for i in 0..60 {
        target.pos.z = 0.25 - 0.004 * i as f64;
        w.step(&target).unwrap();
    }
    let a = asr_events(&w.state, Task::Wipe);
    assert!(!a.grasp && !a.operate && !a.place);
}

#[test]
fn cut_metrics() {
    let mut o = CutObject {
        center: crate::geom::Vec3::ZERO,
        length: 0.12,
        width: 0.03,
        height: 0.03,
        cells: vec![false; 99],
    };
    assert_eq!(segment_stats(&o), SegmentStats { count: 1, mean: 1.0, std: 0.0 });
    for c in [19, 39, 59, 79] {
        o.cells[c] = true;
    }
    let s = segment_stats(&o);
    assert_eq!((s.count, s.mean, s.std), (5, 0.2, 0.0));
}

fn small_policy(fusion: FusionMode) -> Policy {
    let cfg = PolicyConfig {
        d_model: 16,
        heads: 2,
        head_hidden: 32,
        fusion,
        ..Default::default()
    };
    Policy::new(cfg, crate::demo::Normalizer::from_sim(&SimConfig::default())).unwrap()
}

fn spec(seed: u64, n_max: usize) -> TrialSpec {
    TrialSpec {
        sim: SimConfig::for_task(Task::Wipe),
        seed,
        disturbance: None,
        runtime: RuntimeConfig {
            n_max,
            ..Default::default()
        },
        thresholds: ReactiveThresholds::default(),
    }
}

#[test]
fn trials_are_deterministic() {
    let p = small_policy(FusionMode::Gated);
    let (a, ra) = run_trial(&p, "gated", &spec(5, 30)).unwrap();
    let (b, rb) = run_trial(&p, "gated", &spec(5, 30)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.inferences(), 3);
}

#[test]
fn reactive_flag_only_reaches_gated_modes() {
    let p = small_policy(FusionMode::VisionOnly);
    let mut s = spec(6, 20);
    s.thresholds.delta_phi = 0.01;
    let (r, _) = run_trial(&p, "vision", &s).unwrap();
    assert_eq!(r.corrections, 0);
    let p = small_policy(FusionMode::Gated);
    let (r, log) = run_trial(&p, "gated", &s).unwrap();
    assert!(log.ticks.iter().any(|t| t.buffer == BufferChoice::Contact));
    assert!(r.corrections > 0);
}

#[test]
fn rewrite_fires_once_after_first_pass() {
    let cfg = SimConfig::for_task(Task::Wipe);
    let mut env = SimEnv::new(cfg, 8, 200, Some(Disturbance::Rewrite), 0.9).unwrap();
    let mut expert = Expert::new(&env.world, 8);
    let mut notes = Vec::new();
    for tick in 0..env.world.cfg.max_ticks {
        let a = match expert.act(&env.world).unwrap() {
            ExpertAction::Move(a) => a,
            ExpertAction::Done => break,
        };
        env.execute(&a).unwrap();
        let in_contact = env.world.state.normal_force > 0.0;
        let log = TickLog {
            tick,
            t: 0.0,
            phi: if in_contact { 1.0 } else { 0.0 },
            inference: false,
            buffer: BufferChoice::NonContact,
            correction: false,
            force_norm: 0.0,
            torque_norm: 0.0,
            pose: a,
            note: None,
        };
        if let Some(n) = env.after_tick(&log) {
            notes.push((tick, n));
        }
    }
    assert_eq!(notes.len(), 1, "{notes:?}");
    assert!(notes[0].1.starts_with("disturb:rewrite"));
    let at = env.disturbed_at.unwrap();
    assert_eq!(at, notes[0].0);
    // final coverage is over the union of original and rewritten marks
    let b = env.world.state.board.as_ref().unwrap();
    let union = b.ever_marked.iter().filter(|&&m| m).count();
    let clean = b.ever_marked.iter().zip(&b.marks).filter(|(&e, &m)| e && !m).count();
    assert_eq!(b.coverage(), clean as f64 / union as f64);
}

#[test]
fn table_requires_equal_trials() {
    let t = |seed| TrialResult {
        task: Task::Wipe,
        method: "m".into(),
        seed,
        score: 0.5,
        coverage: 0.4,
        asr: AsrEvents {
            grasp: true,
            operate: true,
            place: false,
        },
        segments: None,
        disturbance: None,
        disturbed_at: None,
        corrections: 2,
    };
    let a = summarize("a", &[t(1), t(2)]);
    let b = summarize("b", &[t(1)]);
    assert!(ComparisonTable::new("x", vec![1, 2], vec![a.clone(), b]).is_err());
    let table = ComparisonTable::new("x", vec![1, 2], vec![a.clone(), a]).unwrap();
    assert_eq!(table.rows[0].grasp, 100.0);
    assert_eq!(table.rows[0].place, 0.0);
    assert_eq!(table.to_csv().lines().count(), 3);
    assert_eq!(table.render(), table.clone().render());
}
