use alloc::vec;
use alloc::vec::Vec;

use super::model::{contact_logit, encode_force, encode_scene, voxelize};
use super::*;
use crate::demo::{Dataset, PolicyInput, TrainingSample};
use crate::numeric::{grad_check, GradCheckConfig, TrainConfig};
use crate::sim::{ImageGrid, SimConfig, Task};

pub(crate) fn tiny(fusion: FusionMode) -> PolicyConfig {
    PolicyConfig {
        d_model: 8,
        heads: 2,
        t_o: 20,
        t_a: 4,
        force_pool: 5,
        voxel: 0.5,
        max_scene_tokens: 16,
        point_hidden: 8,
        force_hidden: 8,
        head_hidden: 16,
        time_embed: 8,
        image_size: 8,
        predictor_hidden: 8,
        noise_draws: 2,
        fusion,
        ..Default::default()
    }
}

fn norm() -> Normalizer {
    Normalizer::from_sim(&SimConfig::for_task(Task::Wipe))
}

fn random_input(cfg: &PolicyConfig, rng: &mut Rng) -> PolicyInput {
    let cloud = (0..30)
        .map(|_| {
            [
                rng.range(-1.0, 1.0),
                rng.range(-1.0, 1.0),
                rng.range(-1.0, 1.0),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
            ]
        })
        .collect();
    let s = cfg.image_size;
    let image = ImageGrid {
        h: s,
        w: s,
        c: 3,
        data: (0..s * s * 3).map(|_| rng.uniform()).collect(),
    };
    PolicyInput {
        cloud,
        image,
        ft: random_window(cfg.t_o, rng),
        proprio: [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), 1.0, 0.0, 0.0, 0.0, 0.5],
    }
}

fn random_window(n: usize, rng: &mut Rng) -> Vec<[f64; 6]> {
    (0..n)
        .map(|_| {
            let mut r = [0.0; 6];
            for v in r.iter_mut().take(3) {
                *v = rng.range(-10.0, 10.0);
            }
            for v in r.iter_mut().skip(3) {
                *v = rng.range(-1.0, 1.0);
            }
            r
        })
        .collect()
}

fn random_sample(cfg: &PolicyConfig, rng: &mut Rng) -> TrainingSample {
    TrainingSample {
        input: random_input(cfg, rng),
        actions: (0..cfg.t_a)
            .map(|_| [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), 0.1, 1.0, 0.0, 0.0, 0.0, 0.2])
            .collect(),
        label: (rng.below(2)) as f64,
    }
}

fn row(g: &Graph, v: crate::numeric::Var) -> Vec<f64> {
    g.value(v).data().to_vec()
}

#[test]
fn encoder_shapes_and_window_contract() {
    let cfg = PolicyConfig::default();
    let p = declare_params(&cfg).unwrap();
    let mut rng = Rng::seed(1);
    let input = random_input(&cfg, &mut rng);
    let mut g = Graph::new(&p);
    let hs = encode_scene(&mut g, &cfg, &input.cloud).unwrap();
    assert_eq!(g.shape(hs), [1, 64]);
    let hf = encode_force(&mut g, &cfg, &input.ft).unwrap();
    assert_eq!(g.shape(hf), [1, 64]);
    assert!(encode_force(&mut g, &cfg, &input.ft[..199]).is_err());
    assert!(encode_scene(&mut g, &cfg, &[]).is_err());
}

#[test]
fn scene_encoder_is_order_free_and_color_sensitive() {
    let cfg = tiny(FusionMode::Gated);
    let p = declare_params(&cfg).unwrap();
    let mut rng = Rng::seed(2);
    let cloud = random_input(&cfg, &mut rng).cloud;
    let mut shuffled = cloud.clone();
    rng.shuffle(&mut shuffled);
    let mut recolored = cloud.clone();
    recolored[3][4] = 1.0 - recolored[3][4];

    let mut g = Graph::with_precision(&p, Precision::F32);
    let a = encode_scene(&mut g, &cfg, &cloud).unwrap();
    let b = encode_scene(&mut g, &cfg, &shuffled).unwrap();
    let c = encode_scene(&mut g, &cfg, &recolored).unwrap();
    assert_eq!(row(&g, a), row(&g, b));
    assert_ne!(row(&g, a), row(&g, c));
}

#[test]
fn voxel_cap_keeps_most_populated() {
    let mut cloud = vec![[-0.9, -0.9, -0.9, 0.0, 0.0, 0.0]; 3];
    cloud.push([0.9, 0.9, 0.9, 0.0, 0.0, 0.0]);
    cloud.push([0.1, 0.1, 0.1, 0.0, 0.0, 0.0]);
    cloud.push([0.1, 0.1, 0.1, 0.0, 0.0, 0.0]);
    let v = voxelize(&cloud, 0.5, 2).unwrap();
    assert_eq!(v.centers.rows(), 2);
    assert_eq!(v.points.rows(), 5);
    assert_eq!(v.centers.row(0), [-0.75, -0.75, -0.75]);
    assert_eq!(v.centers.row(1), [0.25, 0.25, 0.25]);
}

#[test]
fn force_encoder_temporal_order() {
    let cfg = PolicyConfig::default();
    let p = declare_params(&cfg).unwrap();
    let constant = vec![[1.0, -2.0, 3.0, 0.1, 0.2, -0.3]; 200];
    let reversed: Vec<_> = constant.iter().rev().copied().collect();
    let ramp: Vec<[f64; 6]> = (0..200).map(|i| [i as f64 * 0.05, 0.0, -(i as f64) * 0.1, 0.0, 0.01 * i as f64, 0.0]).collect();
    let ramp_rev: Vec<_> = ramp.iter().rev().copied().collect();
    let mut g = Graph::new(&p);
    let a = encode_force(&mut g, &cfg, &constant).unwrap();
    let b = encode_force(&mut g, &cfg, &reversed).unwrap();
    assert_eq!(row(&g, a), row(&g, b));
    let c = encode_force(&mut g, &cfg, &ramp).unwrap();
    let d = encode_force(&mut g, &cfg, &ramp_rev).unwrap();
    assert_ne!(row(&g, c), row(&g, d));
}

#[test]
fn zero_output_layer_gives_half() {
    let cfg = tiny(FusionMode::Gated);
    let mut p = declare_params(&cfg).unwrap();
    p.get_mut("pred.out.w").unwrap().data_mut().fill(0.0);
    p.get_mut("pred.out.b").unwrap().data_mut().fill(0.0);
    let mut rng = Rng::seed(3);
    let input = random_input(&cfg, &mut rng);
    let mut g = Graph::new(&p);
    let f = policy_forward(&mut g, &cfg, &input, None).unwrap();
    assert_eq!(f.phi, 0.5);
    let l = contact_logit(&mut g, &cfg, &input.image, &input.ft, None).unwrap();
    assert_eq!(g.value(l).data()[0], 0.0);
}

#[test]
fn fuse_examples_and_linearity() {
    let p = ParamStore::new();
    let mut g = Graph::new(&p);
    let hs = g.input(Tensor::matrix(1, 3, vec![0.3, -0.1, 0.7]).unwrap()).unwrap();
    let hf = g.input(Tensor::matrix(1, 3, vec![2.0, 2.0, 2.0]).unwrap()).unwrap();
    let other = g.input(Tensor::matrix(1, 3, vec![-5.0, 9.0, 1.5]).unwrap()).unwrap();
    let hstar = g.input(Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap()).unwrap();
    let phi = |g: &mut Graph, v: f64| g.input(Tensor::matrix(1, 1, vec![v]).unwrap()).unwrap();

    let p0 = phi(&mut g, 0.0);
    let a = fuse(&mut g, hs, hf, p0, hstar).unwrap();
    let b = fuse(&mut g, hs, other, p0, hstar).unwrap();
    assert_eq!(row(&g, a), row(&g, b));
    assert_eq!(row(&g, a), [0.3, -0.1, 0.7, 0.0, 0.0, 0.0]);

    let p1 = phi(&mut g, 1.0);
    let c = fuse(&mut g, hs, hf, p1, hstar).unwrap();
    assert_eq!(row(&g, c), [0.3, -0.1, 0.7, 2.0, 2.0, 2.0]);

    let ph = phi(&mut g, 0.5);
    let m = fuse(&mut g, hs, hf, ph, hstar).unwrap();
    assert_eq!(row(&g, m)[3..], [1.0, 1.0, 1.0]);

    let hstar2 = g.input(Tensor::matrix(1, 3, vec![0.4, -1.0, 3.0]).unwrap()).unwrap();
    let z = fuse(&mut g, hs, other, p0, hstar2).unwrap();
    let o = fuse(&mut g, hs, other, p1, hstar2).unwrap();
    let q = phi(&mut g, 0.3);
    let mid = fuse(&mut g, hs, other, q, hstar2).unwrap();
    for i in 3..6 {
        let lin = 0.7 * row(&g, z)[i] + 0.3 * row(&g, o)[i];
        assert!((row(&g, mid)[i] - lin).abs() < 1e-12);
    }

    let short = g.input(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).unwrap();
    assert!(fuse(&mut g, hs, short, p0, hstar).is_err());
}

#[test]
fn forward_modes_respect_force_path() {
    let mut rng = Rng::seed(4);
    for mode in FusionMode::ALL {
        let cfg = tiny(mode);
        let p = declare_params(&cfg).unwrap();
        let base = random_input(&cfg, &mut rng);
        let mut alt = base.clone();
        alt.ft = random_window(cfg.t_o, &mut rng);
        let mut g = Graph::with_precision(&p, Precision::F32);
        let a = policy_forward(&mut g, &cfg, &base, Some(0.0)).unwrap();
        let b = policy_forward(&mut g, &cfg, &alt, Some(0.0)).unwrap();
        let (ca, cb) = (row(&g, a.cond), row(&g, b.cond));
        assert_eq!(ca.len(), 2 * cfg.d_model);
        match mode {
            FusionMode::ForceConcat | FusionMode::ForceToken => assert_ne!(ca, cb, "{mode:?}"),
            _ => assert_eq!(ca, cb, "{mode:?}"),
        }
        if mode == FusionMode::VisionOnly {
            let a = policy_forward(&mut g, &cfg, &base, None).unwrap();
            let b = policy_forward(&mut g, &cfg, &alt, None).unwrap();
            assert_eq!(row(&g, a.cond), row(&g, b.cond));
            assert!(row(&g, a.cond)[cfg.d_model..].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn open_gate_equals_plain_concat() {
    let cfg = tiny(FusionMode::Gated);
    let p = declare_params(&cfg).unwrap();
    let input = random_input(&cfg, &mut Rng::seed(5));
    let mut g = Graph::with_precision(&p, Precision::F32);
    let f = policy_forward(&mut g, &cfg, &input, Some(1.0)).unwrap();
    let hs = encode_scene(&mut g, &cfg, &input.cloud).unwrap();
    let hf = encode_force(&mut g, &cfg, &input.ft).unwrap();
    let mut expect = row(&g, hs);
    expect.extend(row(&g, hf));
    assert_eq!(row(&g, f.cond), expect);
    assert!(policy_forward(&mut g, &cfg, &input, Some(1.5)).is_err());
}

#[test]
fn loss_arithmetic() {
    assert!((combine(1.0, 2.0, 0.1) - 1.2).abs() < 1e-15);
    let cfg = tiny(FusionMode::Gated);
    let p = declare_params(&cfg).unwrap();
    let sched = cfg.noise_schedule();
    let mut rng = Rng::seed(6);
    let batch: Vec<_> = (0..3).map(|_| random_sample(&cfg, &mut rng)).collect();
    let draws = LossDraws::sample(&cfg, batch.len(), &mut rng);
    for precision in [Precision::F64, Precision::F32] {
        let mut g = Graph::with_precision(&p, precision);
        let l = diffusion_loss(&mut g, &cfg, &sched, &batch, &draws, 0.1).unwrap();
        let v = |x| g.value(x).data()[0];
        let tol = if precision == Precision::F64 { 1e-15 } else { 1e-6 };
        assert!((v(l.total) - combine(v(l.action), v(l.predictor), 0.1)).abs() <= tol * v(l.total).abs().max(1.0));
    }
}

#[test]
fn perfect_predictor_has_tiny_bce() {
    let p = ParamStore::new();
    let mut g = Graph::new(&p);
    // logits giving phi within 1e-7 of each label
    let z = libm::log((1.0 - 1e-7) / 1e-7);
    let l = g.input(Tensor::matrix(2, 1, vec![z, -z]).unwrap()).unwrap();
    let b = g.bce_with_logits(l, &[1.0, 0.0]).unwrap();
    assert!(g.value(b).data()[0] <= 1e-6);
}

#[test]
fn full_loss_gradients() {
    for mode in FusionMode::ALL {
        let cfg = tiny(mode);
        let p = declare_params(&cfg).unwrap();
        let sched = cfg.noise_schedule();
        let mut rng = Rng::seed(7);
        let batch: Vec<_> = (0..2).map(|_| random_sample(&cfg, &mut rng)).collect();
        let draws = LossDraws::sample(&cfg, 2, &mut rng);
        let report = grad_check(
            &p,
            |g| Ok(diffusion_loss(g, &cfg, &sched, &batch, &draws, 0.1)?.total),
            &GradCheckConfig {
                tol: 1e-4,
                max_coords_per_param: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.pass, "{mode:?}: {report:?}");
    }
}

#[test]
fn sampling_is_seed_deterministic() {
    let cfg = PolicyConfig::default();
    let policy = Policy::new(cfg.clone(), norm()).unwrap();
    let input = random_input(&cfg, &mut Rng::seed(8));
    let a = policy.infer(&input, None, &mut Rng::seed(9)).unwrap();
    let b = policy.infer(&input, None, &mut Rng::seed(9)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.chunk.len(), 20);
    assert!(a.chunk.iter().all(|p| (p.rot.norm() - 1.0).abs() < 1e-12));
    assert!(a.phi > 0.0 && a.phi < 1.0);
}

struct Fixed(Vec<TrainingSample>);

impl Dataset for Fixed {
    fn len(&self) -> usize {
        self.0.len()
    }
    fn sample(&self, i: usize) -> Result<TrainingSample, crate::demo::DemoError> {
        Ok(self.0[i].clone())
    }
    fn episode_of(&self, _: usize) -> usize {
        0
    }
}

fn quick_train(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        base_lr: 3e-3,
        warmup_steps: 10,
        total_steps: steps,
        batch_size: 8,
        seed,
        augment: false,
        ..Default::default()
    }
}

#[test]
fn head_converges_on_constant_target() {
    let cfg = PolicyConfig {
        head_hidden: 128,
        time_embed: 32,
        ..tiny(FusionMode::Gated)
    };
    let target = [0.5, -0.3, 0.2, 1.0, 0.0, 0.0, 0.0, 0.4];
    let mut rng = Rng::seed(10);
    let data: Vec<_> = (0..16)
        .map(|_| {
            let mut s = random_sample(&cfg, &mut rng);
            s.actions = vec![target; cfg.t_a];
            s
        })
        .collect();
    let ds = Fixed(data);
    let mut tr = Trainer::new(Policy::new(cfg.clone(), norm()).unwrap(), quick_train(2000, 1)).unwrap();
    for _ in 0..2000 {
        tr.train_step(&ds).unwrap();
    }
    let policy = &tr.policy;
    let mut sum = [0.0; 8];
    let mut rng = Rng::seed(11);
    let n = 1000;
    for i in 0..n {
        let s = &ds.0[i % ds.0.len()];
        let (_, cond) = policy.condition(&s.input, None).unwrap();
        let rows = policy.sample_normalized(&cond, &s.input.proprio, &mut rng).unwrap();
        for (acc, v) in sum.iter_mut().zip(&rows[0]) {
            *acc += v;
        }
    }
    for (s, c) in sum.iter().zip(target) {
        let mean = s / n as f64;
        assert!((mean - c).abs() <= c.abs() * 0.05 + 0.05, "mean {mean} target {c}");
    }
}

#[test]
fn predictor_overfits_twenty_samples() {
    let cfg = tiny(FusionMode::Gated);
    let mut rng = Rng::seed(12);
    let data: Vec<_> = (0..20)
        .map(|i| {
            let mut s = random_sample(&cfg, &mut rng);
            s.label = (i % 2) as f64;
            s
        })
        .collect();
    let ds = Fixed(data);
    let mut train = quick_train(500, 2);
    train.batch_size = 20;
    train.alpha = 1.0;
    let mut tr = Trainer::new(Policy::new(cfg.clone(), norm()).unwrap(), train).unwrap();
    for _ in 0..500 {
        tr.train_step(&ds).unwrap();
    }
    for s in &ds.0 {
        let (phi, _) = tr.policy.condition(&s.input, None).unwrap();
        assert_eq!(phi > 0.5, s.label > 0.5, "phi {phi} label {}", s.label);
    }
}

#[test]
fn training_is_reproducible_and_logs_schedule() {
    let cfg = tiny(FusionMode::Gated);
    let mut rng = Rng::seed(13);
    let ds = Fixed((0..10).map(|_| random_sample(&cfg, &mut rng)).collect());
    let run = || {
        let mut train = quick_train(30, 3);
        train.augment = true;
        let mut tr = Trainer::new(Policy::new(cfg.clone(), norm()).unwrap(), train).unwrap();
        (0..12).map(|_| tr.train_step(&ds).unwrap()).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a[9].step, 10);
    assert_eq!(a[9].lr, 3e-3);
    for l in &a {
        assert!((l.l_total - combine(l.l_action, l.l_predictor, 0.1)).abs() <= 1e-6 * l.l_total.max(1.0));
    }
}

#[test]
fn checkpoint_parts_are_validated() {
    let cfg = tiny(FusionMode::Gated);
    let p = declare_params(&cfg).unwrap();
    assert!(Policy::from_parts(cfg.clone(), p.clone(), norm()).is_ok());
    let other = declare_params(&tiny(FusionMode::VisionOnly)).unwrap();
    assert!(Policy::from_parts(cfg, other, norm()).is_err());
}
