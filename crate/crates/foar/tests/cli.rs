use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_foar");

fn foar(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL_POLICY: &str = r#"{"d_model": 16, "heads": 2, "head_hidden": 32, "point_hidden": 8,
    "force_hidden": 8, "predictor_hidden": 16, "time_embed": 8}"#;

/// A two-episode dataset and a gated and a vision-only checkpoint trained
/// for a few steps, shared by the tests below.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    fn ckpt(&self, mode: &str) -> PathBuf {
        self.root.join(format!("train_{mode}")).join("final.foar")
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        let o = foar(&["demo-gen", "--task", "wipe", "--episodes", "2", "--seed", "3", "--out", p(&data)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let pc = root.join("policy.json");
        fs::write(&pc, SMALL_POLICY).unwrap();
        for mode in ["gated", "vision_only"] {
            let out = root.join(format!("train_{mode}"));
            let o = foar(&[
                "train", "--dataset", p(&data), "--policy-config", p(&pc), "--fusion-mode", mode, "--steps", "3",
                "--batch", "2", "--out", p(&out),
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
        Fixture { _dir: dir, root }
    })
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [None, Some("demo-gen"), Some("label-check"), Some("train"), Some("rollout"), Some("eval")] {
        let mut args: Vec<&str> = sub.into_iter().collect();
        args.push("--help");
        let o = foar(&args);
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(stdout(&o).contains("Usage"));
    }
    let o = foar(&["rollout", "--help"]);
    for flag in ["--checkpoint", "--task", "--seed", "--no-reactive", "--disturb", "--deploy-config", "--out"] {
        assert!(stdout(&o).contains(flag), "{flag}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&foar(&["demo-gen", "--task", "wipe", "--episodes", "0", "--out", p(&out)])), 2);
    assert_eq!(code(&foar(&["demo-gen", "--task", "peel", "--episodes", "1", "--out", p(&out)])), 2);
    assert_eq!(code(&foar(&["train", "--dataset", "d", "--fusion-mode", "nope", "--out", "o"])), 2);
    assert_eq!(code(&foar(&["frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn runtime_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = foar(&["train", "--dataset", p(&d.join("missing")), "--out", p(&d.join("t"))]);
    assert_eq!(code(&o), 3);
    let o = foar(&["rollout", "--checkpoint", p(&d.join("none.foar")), "--task", "wipe", "--out", p(&d.join("r"))]);
    assert_eq!(code(&o), 3);
    let o = foar(&["label-check", "--dataset", p(&d.join("missing")), "--out", p(&d.join("l"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn demo_gen_is_byte_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("data");
    let o = foar(&["demo-gen", "--task", "wipe", "--episodes", "2", "--seed", "3", "--out", p(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "written=2 skipped=0");
    assert_eq!(read_tree(&f.data()), read_tree(&again));
    assert!(again.join("episodes/ep_000001/index.json").exists());
}

#[test]
fn label_check_rows_match_ticks() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = foar(&["label-check", "--dataset", p(&f.data()), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("with_both_labels=2"), "{}", stdout(&o));
    let (_, eps) = foar::dataset::read_dataset(&f.data()).unwrap();
    for (i, ep) in eps.iter().enumerate() {
        let csv = fs::read_to_string(dir.path().join(format!("labels/ep_{i:06}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), ep.ticks.len() + 1);
    }
}

#[test]
fn training_outputs_log_and_checkpoints() {
    let f = fixture();
    let t = f.root.join("train_gated");
    for name in ["train_log.csv", "final.foar", "final.json", "best.foar", "policy_config.json"] {
        assert!(t.join(name).exists(), "{name}");
    }
    let rows = foar::training::read_log(&t.join("train_log.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!((r[4] - (r[2] + 0.1 * r[3])).abs() <= 1e-6 * r[4].abs().max(1.0));
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.join("final.json")).unwrap()).unwrap();
    assert_eq!(meta["policy"]["fusion"], "gated");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.root.join("train_vision_only/final.json")).unwrap()).unwrap();
    assert_eq!(meta["policy"]["fusion"], "vision_only");
}

fn rollout(ck: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let deploy = out.with_extension("deploy.json");
    fs::write(&deploy, r#"{"runtime": {"n_max": 40}, "thresholds": {"delta_phi": 1e-6}}"#).unwrap();
    let mut args = vec!["rollout", "--checkpoint", p(ck), "--task", "wipe", "--seed", "11", "--deploy-config", p(&deploy), "--out", p(out)];
    args.extend_from_slice(extra);
    let o = foar(&args);
    (code(&o), stdout(&o))
}

#[test]
fn rollout_flags_and_determinism() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (c, line) = rollout(&f.ckpt("gated"), &d.join("a"), &[]);
    assert_eq!(c, 0);
    assert!(line.contains("coverage=") && line.contains("grasp="), "{line}");
    let a = fs::read_to_string(d.join("a/rollout.csv")).unwrap();
    assert_eq!(a.lines().count(), 41);
    assert!(a.starts_with(foar::harness::ROLLOUT_HEADER));
    // a tiny delta_phi makes every inference tick a contact inference; with a
    // quiet sensor each one corrects
    let corr = |s: &str| s.lines().skip(1).filter(|l| l.split(',').nth(4) == Some("1")).count();
    assert!(corr(&a) > 0);

    rollout(&f.ckpt("gated"), &d.join("b"), &[]);
    assert_eq!(a, fs::read_to_string(d.join("b/rollout.csv")).unwrap());

    let (c, _) = rollout(&f.ckpt("gated"), &d.join("n"), &["--no-reactive"]);
    assert_eq!(c, 0);
    assert_eq!(corr(&fs::read_to_string(d.join("n/rollout.csv")).unwrap()), 0);
}

#[test]
fn rollout_with_rewrite_logs_the_event() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    // the untrained policy never wipes, so the event comes from a forced trigger
    let deploy = dir.path().join("deploy.json");
    fs::write(&deploy, r#"{"runtime": {"n_max": 30}}"#).unwrap();
    let o = foar(&[
        "rollout", "--checkpoint", p(&f.ckpt("gated")), "--task", "wipe", "--seed", "2", "--disturb", "rewrite",
        "--deploy-config", p(&deploy), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("disturbance=rewrite"));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(rec["disturbance"], "rewrite");
}

#[test]
fn eval_writes_reproducible_two_row_report() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let exp = d.join("exp.json");
    fs::write(
        &exp,
        format!(
            r#"{{"name": "pair", "task": "wipe", "trials": 3, "seed": 40,
                "deploy": {{"runtime": {{"n_max": 20}}}},
                "methods": [{{"name": "gated", "checkpoint": "{}"}},
                            {{"name": "vision", "checkpoint": "{}"}}]}}"#,
            p(&f.ckpt("gated")),
            p(&f.ckpt("vision_only"))
        ),
    )
    .unwrap();
    let o = foar(&["eval", "--experiment", p(&exp), "--out", p(&d.join("o1")), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = foar(&["eval", "--experiment", p(&exp), "--out", p(&d.join("o2"))]);
    assert_eq!(code(&o), 0);
    let r1 = d.join("o1/runs/pair");
    assert_eq!(read_tree(&r1), read_tree(&d.join("o2/runs/pair")));
    let csv = fs::read_to_string(r1.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(r1.join("report.json")).unwrap()).unwrap();
    assert_eq!(meta["seeds"], serde_json::json!([40, 41, 42]));
    for i in 0..3 {
        assert!(r1.join(format!("trial_{i:02}/gated.csv")).exists());
        assert!(r1.join(format!("trial_{i:02}/vision.json")).exists());
    }
}

#[test]
fn eval_ablation_adds_no_reactive_rows_for_gated_methods() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("exp.json");
    fs::write(
        &exp,
        format!(
            r#"{{"name": "abl", "task": "wipe", "trials": 2, "reactive_ablation": true,
                "deploy": {{"runtime": {{"n_max": 20}}, "thresholds": {{"delta_phi": 1e-6}}}},
                "methods": [{{"name": "gated", "checkpoint": "{}"}}]}}"#,
            p(&f.ckpt("gated"))
        ),
    )
    .unwrap();
    let o = foar(&["eval", "--experiment", p(&exp), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("runs/abl/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("gated,") && rows[1].starts_with("gated-no-reactive,"));
    // last column: mean corrections per trial
    let corrections = |r: &str| r.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(corrections(rows[0]) > 0.0);
    assert_eq!(corrections(rows[1]), 0.0);
}

#[test]
fn eval_with_missing_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("exp.json");
    fs::write(&exp, r#"{"name": "x", "task": "wipe", "methods": [{"name": "a", "checkpoint": "nope.foar"}]}"#).unwrap();
    let o = foar(&["eval", "--experiment", p(&exp), "--out", p(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.foar"));
}
