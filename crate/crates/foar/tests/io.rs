use std::fs;
use std::path::Path;

use foar::checkpoint::{load_policy, save_policy};
use foar::dataset::{self, config_hash, episode_dir, DatasetMeta};
use foar_core::demo::{extract_contact_labels, record_episode, Dataset, LabelConfig, Normalizer, RecordOptions};
use foar_core::policy::{FusionMode, Policy, PolicyConfig};
use foar_core::sim::{SimConfig, Task};

fn f32r(v: f64) -> f64 {
    v as f32 as f64
}

#[test]
fn episode_round_trip_matches_f32_arrays_and_exact_times() {
    let cfg = SimConfig::for_task(Task::Wipe);
    let ep = record_episode(&cfg, 7, &RecordOptions::default()).unwrap();
    assert!(ep.ticks.len() >= 100);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("ep");
    dataset::write_episode(&d, &ep, &cfg).unwrap();
    let back = dataset::read_episode(&d).unwrap();

    assert_eq!(back.ticks.len(), ep.ticks.len());
    for (a, b) in ep.ticks.iter().zip(&back.ticks) {
        assert_eq!(a.t, b.t);
        let (ra, rb) = (a.to_row(), b.to_row());
        for k in 1..ra.len() {
            assert_eq!(f32r(ra[k]).to_bits(), rb[k].to_bits());
        }
    }
    assert_eq!(back.ft.len(), ep.ft.len());
    for (a, b) in ep.ft.iter().zip(&back.ft) {
        assert_eq!(a.t, b.t);
        for k in 0..6 {
            assert_eq!(f32r(a.row()[k]), b.row()[k]);
        }
    }
    for (a, b) in ep.clouds.iter().zip(&back.clouds) {
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(p.iter().zip(q).all(|(x, y)| f32r(*x) == *y));
        }
    }
    for (a, b) in ep.images.iter().zip(&back.images) {
        assert_eq!((a.h, a.w, a.c), (b.h, b.w, b.c));
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| f32r(*x) == *y));
    }
    assert_eq!(back.disturbance, ep.disturbance);
    assert_eq!(back.final_coverage, ep.final_coverage);

    // label windows see the same timestamps as the in-memory recording
    let lc = LabelConfig::default();
    let mem = extract_contact_labels(&ep.ft, &lc, &ep.tick_times()).unwrap();
    let disk = extract_contact_labels(&back.ft, &lc, &back.tick_times()).unwrap();
    let differ = mem.iter().zip(&disk).filter(|(a, b)| a != b).count();
    assert!(differ <= 1, "{differ} labels changed through f32 storage");

    // a second write of the read-back episode is byte-identical
    let d2 = dir.path().join("ep2");
    dataset::write_episode(&d2, &back, &cfg).unwrap();
    for name in ["lowdim.bin", "ft.bin", "cloud_0000.bin", "image_0000.bin", "index.json"] {
        assert_eq!(fs::read(d.join(name)).unwrap(), fs::read(d2.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_file_names_the_episode() {
    let cfg = SimConfig::for_task(Task::Wipe);
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for i in 0..2 {
        let ep = record_episode(&cfg, i, &RecordOptions::default()).unwrap();
        dataset::write_episode(&episode_dir(root, i as usize), &ep, &cfg).unwrap();
    }
    dataset::write_meta(
        root,
        &DatasetMeta {
            task: Task::Wipe,
            config_hash: config_hash(&cfg),
            episodes: 2,
            seed: 0,
            skipped: vec![],
            sim: cfg.clone(),
        },
    )
    .unwrap();
    let (_, ds) = dataset::load_training_set(root, &LabelConfig::default(), 200, 20).unwrap();
    assert!(ds.len() > 200);
    assert_eq!(ds.sample(0).unwrap().input.ft.len(), 200);

    fs::remove_file(episode_dir(root, 1).join("ft.bin")).unwrap();
    let err = dataset::read_dataset(root).unwrap_err().to_string();
    assert!(err.starts_with("episode 1"), "{err}");
}

#[test]
fn tampered_meta_is_rejected() {
    let cfg = SimConfig::for_task(Task::Cut);
    let dir = tempfile::tempdir().unwrap();
    let mut meta = DatasetMeta {
        task: Task::Cut,
        config_hash: config_hash(&cfg),
        episodes: 0,
        seed: 0,
        skipped: vec![],
        sim: cfg,
    };
    dataset::write_meta(dir.path(), &meta).unwrap();
    assert!(dataset::read_meta(dir.path()).is_ok());
    meta.sim.contact.mu = 0.25;
    dataset::write_meta(dir.path(), &meta).unwrap();
    assert!(dataset::read_meta(dir.path()).is_err());
}

fn small(fusion: FusionMode) -> PolicyConfig {
    PolicyConfig {
        d_model: 16,
        heads: 2,
        head_hidden: 32,
        point_hidden: 8,
        force_hidden: 8,
        predictor_hidden: 16,
        fusion,
        ..Default::default()
    }
}

fn check_policy_round_trip(path: &Path, fusion: FusionMode) {
    let mut p = Policy::new(small(fusion), Normalizer::from_sim(&SimConfig::default())).unwrap();
    p.params.round_f32();
    save_policy(path, &p, 12).unwrap();
    let (q, meta) = load_policy(path).unwrap();
    assert_eq!(meta.step, 12);
    assert_eq!(q.cfg, p.cfg);
    assert_eq!(q.norm, p.norm);
    for ((na, a), (nb, b)) in p.params.iter().zip(q.params.iter()) {
        assert_eq!(na, nb);
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn policy_checkpoint_round_trip_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    for m in FusionMode::ALL {
        check_policy_round_trip(&dir.path().join(format!("{}.foar", m.name())), m);
    }
}

#[test]
fn checkpoint_for_another_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.foar");
    let p = Policy::new(small(FusionMode::Gated), Normalizer::from_sim(&SimConfig::default())).unwrap();
    save_policy(&path, &p, 0).unwrap();
    // swap in a sidecar describing a different architecture
    let q = Policy::new(small(FusionMode::VisionOnly), Normalizer::from_sim(&SimConfig::default())).unwrap();
    let other = dir.path().join("q.foar");
    save_policy(&other, &q, 0).unwrap();
    fs::copy(other.with_extension("json"), path.with_extension("json")).unwrap();
    assert!(load_policy(&path).is_err());
}
