use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;
use ttrbody::body::BodyTemplate;
use ttrbody::data::{label_predictions, load_stream, save_predictions, save_stream};

fn ttrbody(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttrbody"))
        .args(args)
        .env_remove("TTRBODY_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ttrbody(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small target stream plus quickly pretrained backbone and teacher.
struct Fixture {
    dir: TempDir,
    target: PathBuf,
    f0: PathBuf,
    teacher: PathBuf,
}

fn fixture(sequences: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let (source, target) = (p(&dir, "source.jsonl"), p(&dir, "target.jsonl"));
    let (f0, teacher) = (p(&dir, "f0.json"), p(&dir, "teacher.json"));
    ok(&["gen-data", "--split", "source", "--seed", "1", "--sequences", "4", "--frames", "20", "--out", s(&source)]);
    let n = sequences.to_string();
    ok(&["gen-data", "--split", "target", "--seed", "2", "--sequences", &n, "--frames", "10", "--out", s(&target)]);
    ok(&[
        "pretrain", "--source", s(&source), "--seed", "1", "--epochs", "2",
        "--out-learner", s(&f0), "--out-teacher", s(&teacher),
    ]);
    Fixture { dir, target, f0, teacher }
}

#[test]
fn gen_data_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"), p(&dir, "c.jsonl"));
    let msg = ok(&["gen-data", "--split", "target", "--seed", "5", "--out", s(&a)]);
    assert!(msg.contains("4800 frames in 40 sequences"), "{msg}");
    ok(&["gen-data", "--split", "target", "--seed", "5", "--out", s(&b)]);
    ok(&["gen-data", "--split", "target", "--seed", "6", "--sequences", "40", "--out", s(&c)]);
    let (ta, tb, tc) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
    assert!(String::from_utf8(ta).unwrap().starts_with("{\"schema\":\"frames.v1\""));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttrbody(&["gen-data", "--split", "target"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&ttrbody(&["no-such-command"])), 2);
    let f = p(&dir, "x.jsonl");
    assert_eq!(code(&ttrbody(&["gen-data", "--split", "target", "--frames", "0", "--out", s(&f)])), 2);
    assert_eq!(code(&ttrbody(&["gen-data", "--split", "target", "--dropout", "1.5", "--out", s(&f)])), 2);
    let bad_seed = Command::new(env!("CARGO_BIN_EXE_ttrbody"))
        .args(["gen-data", "--split", "target", "--out", s(&f)])
        .env("TTRBODY_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&bad_seed), 2);
    assert!(!f.exists());
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(&dir, "missing.jsonl");
    let out = p(&dir, "out.json");
    let r = ttrbody(&["eval", "--predictions", s(&missing), "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    let junk = p(&dir, "junk.jsonl");
    std::fs::write(&junk, "not json\n").unwrap();
    let r = ttrbody(&["pretrain", "--source", s(&junk), "--out-learner", s(&out), "--out-teacher", s(&out)]);
    assert_eq!(code(&r), 1);
}

#[test]
fn env_seed_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"), p(&dir, "c.jsonl"));
    let args = ["gen-data", "--split", "target", "--sequences", "2", "--frames", "5", "--out"];
    let run_env = |path: &Path, extra: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_ttrbody"))
            .args(args)
            .arg(path)
            .args(extra)
            .env("TTRBODY_SEED", "9")
            .output()
            .unwrap();
        assert!(out.status.success());
    };
    run_env(&a, &[]);
    ok(&["gen-data", "--split", "target", "--sequences", "2", "--frames", "5", "--seed", "9", "--out", s(&b)]);
    run_env(&c, &["--seed", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(&dir, "cfg.json");
    std::fs::write(&cfg, r#"{"split": "target", "sequences": 3, "frames": 4, "seed": 2}"#).unwrap();
    let (a, b) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"));
    let msg = ok(&["gen-data", "--config", s(&cfg), "--out", s(&a)]);
    assert!(msg.contains("12 frames in 3 sequences"), "{msg}");
    let msg = ok(&["gen-data", "--config", s(&cfg), "--frames", "6", "--out", s(&b)]);
    assert!(msg.contains("18 frames in 3 sequences"), "{msg}");
    let bad = p(&dir, "bad.json");
    std::fs::write(&bad, "[1, 2]").unwrap();
    assert_eq!(code(&ttrbody(&["gen-data", "--config", s(&bad), "--out", s(&a)])), 2);
}

#[test]
fn preadapt_zero_epochs_copies_the_backbone_weights() {
    let fx = fixture(2);
    let out = p(&fx.dir, "fs.json");
    let log = p(&fx.dir, "log.csv");
    ok(&[
        "preadapt", "--backbone", s(&fx.f0), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--epochs", "0", "--out", s(&out), "--log", s(&log),
    ]);
    let f0: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fx.f0).unwrap()).unwrap();
    let fs: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(fs["values"], f0["values"]);
    assert_eq!(fs["role_tag"], "fs");
    let log = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log.lines().next().unwrap(), "epoch,sequence,loss,mpjpe_mm,pa_mpjpe_mm,regenerated_flag");

    // Swapped roles are a data failure.
    let r = ttrbody(&[
        "preadapt", "--backbone", s(&fx.teacher), "--teacher", s(&fx.f0), "--data", s(&fx.target),
        "--epochs", "1", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 1);
    let r = ttrbody(&[
        "preadapt", "--backbone", s(&fx.f0), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--sigma", "-1", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn refine_regenerates_per_sequence_and_is_identity_at_zero_rate() {
    let fx = fixture(5);
    let fs = p(&fx.dir, "fs.json");
    ok(&[
        "preadapt", "--backbone", s(&fx.f0), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--epochs", "2", "--out", s(&fs),
    ]);
    let (refined, log) = (p(&fx.dir, "refined.jsonl"), p(&fx.dir, "refine.csv"));
    let msg = ok(&[
        "refine", "--weights", s(&fs), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--out", s(&refined), "--log", s(&log),
    ]);
    assert!(msg.contains("50 frames refined, 5 regenerations"), "{msg}");
    let log = std::fs::read_to_string(&log).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "frame_id,sequence,loss,mpjpe_mm,pa_mpjpe_mm,regenerated_flag");
    let flags: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(flags.len(), 50);
    assert_eq!(flags.iter().filter(|f| **f == "1").count(), 5);
    assert!(flags.iter().step_by(10).all(|f| *f == "1"));

    let msg = ok(&[
        "refine", "--weights", s(&fs), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--no-regenerate", "--out", s(&refined),
    ]);
    assert!(msg.contains("1 regenerations"), "{msg}");

    let (frozen, plain) = (p(&fx.dir, "frozen.jsonl"), p(&fx.dir, "plain.jsonl"));
    ok(&[
        "refine", "--weights", s(&fs), "--teacher", s(&fx.teacher), "--data", s(&fx.target),
        "--lr-inner", "0", "--lr-outer", "0", "--out", s(&frozen),
    ]);
    ok(&["predict", "--weights", s(&fs), "--data", s(&fx.target), "--out", s(&plain)]);
    assert_eq!(std::fs::read(&frozen).unwrap(), std::fs::read(&plain).unwrap());

    let r = ttrbody(&[
        "refine", "--weights", s(&fs), "--teacher", s(&fs), "--data", s(&fx.target), "--out", s(&frozen),
    ]);
    assert_eq!(code(&r), 1);
}

#[test]
fn eval_and_report() {
    let fx = fixture(2);
    let stream = load_stream(&fx.target).unwrap();
    let gt: Vec<_> = stream.frames.iter().map(|f| f.gt.as_ref().unwrap().as_output()).collect();
    let gt_preds = p(&fx.dir, "gt.jsonl");
    save_predictions(&label_predictions(&stream, gt).unwrap(), &gt_preds).unwrap();

    let (rep, csv) = (p(&fx.dir, "gt_report.json"), p(&fx.dir, "gt.csv"));
    let msg = ok(&[
        "eval", "--predictions", s(&gt_preds), "--data", s(&fx.target), "--baseline", "34.53",
        "--out", s(&rep), "--per-frame-csv", s(&csv),
    ]);
    assert_eq!(msg.trim(), "MPJPE 0.00 mm, PA-MPJPE 0.00 mm, gap -34.53 mm");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(report["schema"], "report.v1");
    assert_eq!(report["aggregate"]["gap_vs_initial_mm"], -34.53);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 21);

    let plain = p(&fx.dir, "plain.jsonl");
    ok(&["predict", "--weights", s(&fx.f0), "--data", s(&fx.target), "--out", s(&plain)]);
    let mut reports = Vec::new();
    for sigma in ["65", "35", "50"] {
        let r = p(&fx.dir, &format!("r{sigma}.json"));
        ok(&[
            "eval", "--predictions", s(&plain), "--data", s(&fx.target), "--sigma", sigma, "--epochs", "600",
            "--label", "f0", "--baseline", "98.25", "--out", s(&r),
        ]);
        reports.push(r);
    }
    let grid = p(&fx.dir, "grid.csv");
    let mut args = vec!["report", "--out", s(&grid), "--reports"];
    args.extend(reports.iter().map(|r| s(r)));
    ok(&args);
    let grid = std::fs::read_to_string(&grid).unwrap();
    let header: Vec<&str> = grid.lines().next().unwrap().split(',').collect();
    assert_eq!(
        header,
        ["label", "ep600_s35_mpjpe", "ep600_s35_gap", "ep600_s50_mpjpe", "ep600_s50_gap", "ep600_s65_mpjpe", "ep600_s65_gap"]
    );
    assert!(grid.lines().nth(1).unwrap().starts_with("f0,"));
}

#[test]
fn mismatched_or_unordered_inputs_exit_1() {
    let fx = fixture(2);
    let plain = p(&fx.dir, "plain.jsonl");
    ok(&["predict", "--weights", s(&fx.f0), "--data", s(&fx.target), "--out", s(&plain)]);
    let text = std::fs::read_to_string(&plain).unwrap();
    let short: Vec<&str> = text.lines().skip(1).collect();
    let partial = p(&fx.dir, "partial.jsonl");
    std::fs::write(&partial, short.join("\n") + "\n").unwrap();
    let out = p(&fx.dir, "r.json");
    let r = ttrbody(&["eval", "--predictions", s(&partial), "--data", s(&fx.target), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    let err = String::from_utf8_lossy(&r.stderr);
    let first = load_stream(&fx.target).unwrap().frames[0].sequence.clone();
    assert!(err.contains(&format!("({first}, 0)")), "{err}");

    // Shuffled lines are put back in canonical order on load.
    let data = std::fs::read_to_string(&fx.target).unwrap();
    let mut lines: Vec<&str> = data.lines().collect();
    lines.swap(2, 7);
    let shuffled = p(&fx.dir, "shuffled.jsonl");
    std::fs::write(&shuffled, lines.join("\n") + "\n").unwrap();
    let again = p(&fx.dir, "again.jsonl");
    ok(&["predict", "--weights", s(&fx.f0), "--data", s(&shuffled), "--out", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&plain).unwrap());

    // A frame missing from the middle of a sequence, or a repeated frame, cannot be ordered.
    let mut gap = data.lines().collect::<Vec<_>>();
    gap.remove(4);
    let mut dup = data.lines().collect::<Vec<_>>();
    dup.insert(4, dup[4]);
    for (name, lines) in [("gap.jsonl", gap), ("dup.jsonl", dup)] {
        let bad = p(&fx.dir, name);
        std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
        let r = ttrbody(&["refine", "--weights", s(&fx.f0), "--teacher", s(&fx.teacher), "--data", s(&bad), "--out", s(&out)]);
        assert_eq!(code(&r), 1, "{name}: {}", String::from_utf8_lossy(&r.stderr));
    }

    // A dataset generated against a different template is rejected.
    let other = p(&fx.dir, "other.jsonl");
    let stream = load_stream(&fx.target).unwrap();
    let mut moved = stream.clone();
    moved.template_hash = BodyTemplate::generate(5).hash();
    save_stream(&moved, &other).unwrap();
    let r = ttrbody(&["predict", "--weights", s(&fx.f0), "--data", s(&other), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
}
