use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn tdefumi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdefumi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tdefumi(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

/// Simulated lanes, confidence maps and labelled alarms for seed 1, built once.
struct Staged {
    _dir: TempDir,
    lanes: PathBuf,
    maps: PathBuf,
    alarms: PathBuf,
}

fn staged() -> &'static Staged {
    static STAGED: OnceLock<Staged> = OnceLock::new();
    STAGED.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let lanes = dir.path().join("lanes");
        let maps = dir.path().join("maps");
        let alarms = dir.path().join("alarms");
        ok(&["simulate", "--seed", "1", "--out", p(&lanes)]);
        ok(&["prescreen", "--lanes", p(&lanes), "--out", p(&maps)]);
        let gt = lanes.join("ground_truth.csv");
        ok(&[
            "alarms",
            "--lanes",
            p(&lanes),
            "--confidence",
            p(&maps),
            "--ground-truth",
            p(&gt),
            "--out",
            p(&alarms),
        ]);
        Staged {
            _dir: dir,
            lanes,
            maps,
            alarms,
        }
    })
}

#[test]
fn simulate_writes_six_lanes_reproducibly() {
    let s = staged();
    for id in 1..=6 {
        assert!(s.lanes.join(format!("lane_{id}.csv")).is_file());
    }
    assert!(!s.lanes.join("lane_7.csv").exists());

    let again = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "1", "--out", p(again.path())]);
    for name in ["lane_1.csv", "lane_6.csv", "ground_truth.csv", "scene.toml"] {
        assert_eq!(
            read(s.lanes.join(name)),
            read(again.path().join(name)),
            "{name}"
        );
    }
    let other = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "2", "--out", p(other.path())]);
    assert_ne!(
        read(s.lanes.join("lane_1.csv")),
        read(other.path().join("lane_1.csv"))
    );
}

#[test]
fn scene_without_lanes_is_rejected() {
    let text = String::from_utf8(read(staged().lanes.join("scene.toml"))).unwrap();
    let header = &text[..text.find("[[lanes]]").unwrap()];
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, format!("{header}lanes = []\n")).unwrap();
    let out = tdefumi(&[
        "simulate",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").join("lane_1.csv").exists());
}

#[test]
fn prescreen_and_alarms_write_their_products() {
    let s = staged();
    for id in 1..=6 {
        assert!(s.maps.join(format!("confidence_{id}.csv")).is_file());
    }
    let table = String::from_utf8(read(s.alarms.join("alarms.csv"))).unwrap();
    assert!(table.lines().count() > 100);
    assert!(s.alarms.join("alarm_points.csv").is_file());
    assert!(s.alarms.join("alarms.toml").is_file());
}

#[test]
fn held_out_lane_is_trained_classified_and_scored() {
    let s = staged();
    let work = TempDir::new().unwrap();
    let model = work.path().join("models").join("lane_6.toml");
    ok(&[
        "train",
        "--lanes",
        p(&s.lanes),
        "--alarms",
        p(&s.alarms),
        "--test-lane",
        "6",
        "--out",
        p(&model),
    ]);
    assert!(work
        .path()
        .join("models")
        .join("lane_6.config.toml")
        .is_file());

    let scores = work.path().join("scores_6.csv");
    let classify = |out: &Path| {
        ok(&[
            "classify",
            "--model",
            p(&model),
            "--lanes",
            p(&s.lanes),
            "--alarms",
            p(&s.alarms),
            "--lane",
            "6",
            "--out",
            p(out),
        ]);
    };
    classify(&scores);
    let table = String::from_utf8(read(s.alarms.join("alarms.csv"))).unwrap();
    let lane6 = table
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("6,"))
        .count();
    let rows = String::from_utf8(read(&scores)).unwrap();
    assert_eq!(rows.lines().skip(1).count(), lane6);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("6,")));

    let again = work.path().join("again.csv");
    classify(&again);
    assert_eq!(read(&scores), read(&again));

    let gt = s.lanes.join("ground_truth.csv");
    let scored = |dir: &Path, extra: &[&str]| -> usize {
        let mut args = vec![
            "score",
            "--scores",
            p(&scores),
            "--lanes",
            p(&s.lanes),
            "--alarms",
            p(&s.alarms),
        ];
        args.extend(["--ground-truth", p(&gt), "--out", p(dir)]);
        args.extend(extra);
        let out = ok(&args);
        assert!(String::from_utf8_lossy(&out.stdout).contains("auc classifier"));
        assert!(dir.join("classifier_roc.csv").is_file());
        let echo: toml::Table = String::from_utf8(read(dir.join("score.toml")))
            .unwrap()
            .parse()
            .unwrap();
        echo["scored_alarms"].as_integer().unwrap() as usize
    };
    let all = scored(&work.path().join("score_all"), &[]);
    let kept = scored(&work.path().join("score_kept"), &["--ignore-clutter"]);
    assert_eq!(all, lane6);
    assert!(kept <= all);
}

#[test]
fn plot_draws_one_polyline_per_curve() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("first.csv");
    let b = dir.path().join("second.csv");
    std::fs::write(&a, "threshold,pd,far\ninf,0,0\n0.5,0.8,0.2\n-inf,1,1\n").unwrap();
    std::fs::write(&b, "threshold,pd,far\ninf,0,0\n0.1,0.5,0.5\n-inf,1,1\n").unwrap();

    let one = dir.path().join("one.svg");
    ok(&["plot", "--roc", p(&a), "--out", p(&one)]);
    let svg = String::from_utf8(read(&one)).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("first (AUC 0.800)"));

    let repeat = dir.path().join("repeat.svg");
    ok(&["plot", "--roc", p(&a), "--out", p(&repeat)]);
    assert_eq!(read(&one), read(&repeat));

    let two = dir.path().join("two.svg");
    ok(&["plot", "--roc", p(&a), "--roc", p(&b), "--out", p(&two)]);
    let svg = String::from_utf8(read(&two)).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("first (AUC") && svg.contains("second (AUC"));
}

#[test]
fn exit_codes_separate_usage_from_runtime_failures() {
    assert_eq!(tdefumi(&["--help"]).status.code(), Some(0));
    assert_eq!(tdefumi(&[]).status.code(), Some(1));
    assert_eq!(tdefumi(&["simulate"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let out = p(dir.path());
    assert_eq!(
        tdefumi(&[
            "alarms",
            "--lanes",
            out,
            "--confidence",
            out,
            "--out",
            out,
            "--top-fraction",
            "1.5"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        tdefumi(&[
            "classify",
            "--model",
            "x",
            "--lanes",
            out,
            "--alarms",
            out,
            "--pooling",
            "median",
            "--out",
            out
        ])
        .status
        .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.toml");
    let res = tdefumi(&[
        "classify",
        "--model",
        p(&missing),
        "--lanes",
        out,
        "--alarms",
        out,
        "--out",
        out,
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing.toml"));
}
