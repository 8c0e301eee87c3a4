use super::*;
use crate::geom::{Pose, Quat, Vec3};
use crate::rng::Rng;
use crate::sim::{SimConfig, Task};

fn episode(seed: u64) -> EpisodeData {
    record_episode(&SimConfig::for_task(Task::Wipe), seed, &RecordOptions::default()).unwrap()
}

#[test]
fn seed_7_episode_shape() {
    let ep = episode(7);
    assert!(ep.ticks.len() >= 100, "{}", ep.ticks.len());
    assert_eq!(ep.ft.len(), 200 + 10 * ep.ticks.len());
    assert_eq!(ep.clouds.len(), ep.ticks.len());
    assert!(ep.final_coverage.unwrap() >= 0.95);
}

#[test]
fn both_label_values_present() {
    let mut both = 0;
    for seed in 0..10 {
        let ep = episode(seed);
        let l = extract_contact_labels(&ep.ft, &LabelConfig::default(), &ep.tick_times()).unwrap();
        if l.contains(&0) && l.contains(&1) {
            both += 1;
        }
    }
    assert_eq!(both, 10);
}

#[test]
fn windows_and_padding() {
    let ep = episode(3);
    let ds = MemoryDataset::new(
        alloc::vec![ep.clone()],
        &LabelConfig::default(),
        200,
        20,
        Normalizer::from_sim(&SimConfig::default()),
    )
    .unwrap();
    let s0 = ds.sample(0).unwrap();
    assert_eq!(s0.input.ft.len(), 200);
    assert_eq!(s0.input.ft[0], ep.ft[0].row());
    assert_eq!(s0.input.ft[199], ep.ft[199].row());
    assert_eq!(s0.actions.len(), 20);

    // a stream without history is front-padded with its first reading
    let short = &ep.ft[200..];
    let end = samples_until(short, ep.ticks[5].t);
    assert_eq!(end, 50);
    let w = crate::sim::window_ending_at(short, end, 200);
    assert_eq!(w.len(), 200);
    assert!(w[..150].iter().all(|r| *r == short[0].row()));
    assert_eq!(w[199], short[49].row());

    let again = load_batch(&ds, &[3, 40, 3]).unwrap();
    assert_eq!(again[0], again[2]);
    assert_eq!(again, load_batch(&ds, &[3, 40, 3]).unwrap());
    for s in &again {
        for a in &s.actions {
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(s.input.cloud.iter().all(|p| p[..3].iter().all(|v| (-1.0..=1.0).contains(v))));
    }
    assert!(matches!(ds.sample(10_000), Err(DemoError::Index(_))));
}

fn random_sample(rng: &mut Rng) -> TrainingSample {
    let ep = episode(rng.next_u64() % 100);
    let ds = MemoryDataset::new(
        alloc::vec![ep],
        &LabelConfig::default(),
        200,
        20,
        Normalizer::from_sim(&SimConfig::default()),
    )
    .unwrap();
    ds.sample(rng.below(ds.len())).unwrap()
}

#[test]
fn zero_augmentation_is_identity() {
    let mut rng = Rng::seed(1);
    let s = random_sample(&mut rng);
    let mut a = s.clone();
    augment(&mut a, &AugmentConfig::none(), &mut rng);
    assert_eq!(a, s);
}

#[test]
fn translation_shifts_everything_exactly() {
    let mut rng = Rng::seed(2);
    let s = random_sample(&mut rng);
    let d = Vec3::new(0.05, -0.07, 0.01);
    let mut a = s.clone();
    apply_rigid(&mut a, d, 0.0);
    for (p, q) in s.input.cloud.iter().zip(&a.input.cloud) {
        assert_eq!([q[0], q[1], q[2]], [p[0] + d.x, p[1] + d.y, p[2] + d.z]);
        assert_eq!(p[3..], q[3..]);
    }
    for (p, q) in s.actions.iter().zip(&a.actions) {
        assert_eq!([q[0], q[1], q[2]], [p[0] + d.x, p[1] + d.y, p[2] + d.z]);
        assert_eq!(p[3..], q[3..]);
    }
    assert_eq!(a.input.ft, s.input.ft);
    assert_eq!(a.label, s.label);
}

#[test]
fn rigid_augmentation_preserves_relative_geometry() {
    let mut rng = Rng::seed(3);
    let s = random_sample(&mut rng);
    for _ in 0..20 {
        let mut a = s.clone();
        augment(&mut a, &AugmentConfig::default(), &mut rng);
        for (ai, bi) in s.actions.iter().zip(&a.actions) {
            let pa = Vec3::new(ai[0], ai[1], ai[2]);
            let pb = Vec3::new(bi[0], bi[1], bi[2]);
            let nearest = |c: &[[f64; 6]], p: Vec3| {
                c.iter()
                    .map(|q| (Vec3::new(q[0], q[1], q[2]) - p).norm())
                    .fold(f64::INFINITY, f64::min)
            };
            assert!((nearest(&s.input.cloud, pa) - nearest(&a.input.cloud, pb)).abs() < 1e-6);
        }
        assert_eq!(a.input.ft, s.input.ft);
    }
}

#[test]
fn disturbed_demos_recover() {
    let opts = RecordOptions {
        disturb_prob: 1.0,
        render: false,
    };
    let mut seen = 0;
    for seed in 0..12 {
        let ep = record_episode(&SimConfig::for_task(Task::Wipe), seed, &opts).unwrap();
        if ep.disturbance.is_some() {
            seen += 1;
        }
        assert!(ep.final_coverage.unwrap() >= 0.95, "seed {seed}");
    }
    assert!(seen >= 10, "{seen}");
}

#[test]
fn lowdim_row_round_trip() {
    let r = TickRecord {
        t: 2.5,
        proprio: Pose::new(Vec3::new(0.1, 0.2, 0.3), Quat::from_yaw(0.4), 0.05),
        action: Pose::new(Vec3::new(0.2, 0.1, 0.0), Quat::IDENTITY, 0.0),
    };
    assert_eq!(TickRecord::from_row(&r.to_row()), r);
}
