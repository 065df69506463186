use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multicbf"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn check_exit_codes() {
    let out = run(&["check", p(&scenario("two_disk.json"))]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["certified"], true);
    for m in report["strict_cbf"].as_array().unwrap() {
        assert!(m["worst_margin"].as_f64().unwrap() < 0.0);
    }

    let out = run(&["check", p(&scenario("tangent_disks.json"))]);
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("transversality fails"));

    let out = run(&["check", p(&scenario("exhausted_authority.json"))]);
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("not a strict CBF"));
}

#[test]
fn malformed_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = fs::read_to_string(scenario("two_disk.json")).unwrap();

    let unknown = dir.path().join("unknown.json");
    fs::write(
        &unknown,
        good.replace("\"u_max\": 1.0", "\"u_max\": 1.0, \"umax\": 1.0"),
    )
    .unwrap();
    let out = run(&["check", p(&unknown)]);
    assert_eq!(code(&out), 2);
    let err = text(&out.stderr);
    assert!(err.contains("umax") && err.contains("line"), "{err}");

    // 𝒰 with empty interior
    let flat = dir.path().join("flat.json");
    fs::write(
        &flat,
        good.replace(
            "{ \"type\": \"box\", \"u_max\": 1.0 }",
            "{ \"type\": \"explicit\", \"A\": [[1, 0], [-1, 0], [0, 1], [0, -1]], \"b\": [0, 0, 1, 1] }",
        ),
    )
    .unwrap();
    assert_eq!(code(&run(&["gamma", p(&flat)])), 2);

    assert_eq!(code(&run(&["check", "/nonexistent/scenario.json"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn gamma_is_positive_and_repeatable() {
    let a = run(&["gamma", p(&scenario("two_disk.json"))]);
    assert_eq!(code(&a), 0);
    let first = text(&a.stdout);
    let gamma: f64 = first
        .lines()
        .find_map(|l| l.strip_prefix("gamma = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gamma > 0.0);
    let b = run(&["gamma", p(&scenario("two_disk.json"))]);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["gamma", p(&scenario("two_disk.json")), "--seed-override", "9"]);
    assert_ne!(a.stdout, c.stdout);
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_is_safe_deterministic_and_verifiable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("nested/b"));
    for dir in [&a, &b] {
        let out = run(&["run", p(&scenario("two_disk.json")), "--out", p(dir)]);
        assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    }
    let (fa, fb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(fa.len(), 4 * 20 * 2 + 1);
    assert_eq!(fa, fb);

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["certification"], "CERTIFIED");
    assert!(summary["worst_h"].as_f64().unwrap() <= 1e-6);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 80);

    let out = run(&["verify", p(&scenario("two_disk.json")), p(&a)]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("80 trajectories"));
    assert!(text(&out.stderr).is_empty(), "{}", text(&out.stderr));
}

#[test]
fn run_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        p(&scenario("two_disk.json")),
        "--out",
        p(tmp.path()),
        "--policy",
        "safety_program",
        "--dt",
        "0.01",
        "--seed-override",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["dt"], 0.01);
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 20);
    assert!(runs.iter().all(|r| r["policy"] == "safety_program" && r["seed"] == 4));

    let out = run(&[
        "run",
        p(&scenario("two_disk.json")),
        "--out",
        p(tmp.path()),
        "--policy",
        "mpc",
    ]);
    assert_eq!(code(&out), 2);
    let out = run(&[
        "run",
        p(&scenario("two_disk.json")),
        "--out",
        p(tmp.path()),
        "--dt",
        "-1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn uncertified_runs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let ex = scenario("exhausted_authority.json");
    let out = run(&["run", p(&ex), "--out", p(tmp.path())]);
    assert_eq!(code(&out), 1);
    assert!(!tmp.path().join("summary.json").exists());

    let out = run(&["run", p(&ex), "--out", p(tmp.path()), "--force"]);
    assert_eq!(code(&out), 3, "{}", text(&out.stderr));
    assert!(tmp.path().join("UNCERTIFIED").exists());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["certification"], "UNCERTIFIED");
    assert_eq!(summary["all_completed"], false);
    assert!(summary["runs"][0]["exit_reason"]["InfeasibleSelection"].is_u64());
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("file");
    fs::write(&file, "x").unwrap();
    let out = run(&[
        "run",
        p(&scenario("two_disk.json")),
        "--out",
        p(&file.join("sub")),
        "--policy",
        "chebyshev_center",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn plot_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        p(&scenario("two_disk.json")),
        "--out",
        p(tmp.path()),
        "--policy",
        "rotating_vertex",
        "--dt",
        "0.01",
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let csv = tmp.path().join("p0_rotating_vertex_seed1_x0.csv");
    let svg_a = tmp.path().join("a.svg");
    let svg_b = tmp.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let out = run(&["plot", p(&csv), p(&scenario("two_disk.json")), "--out", p(svg)]);
        assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    }
    let svg = fs::read_to_string(&svg_a).unwrap();
    assert_eq!(svg.as_bytes(), fs::read(&svg_b).unwrap().as_slice());
    assert!(svg.starts_with("<svg") && svg.contains(r#"class="trajectory""#));
    assert_eq!(svg.matches(r#"class="barrier""#).count(), 2);

    let iv = tmp.path().join("iv");
    let out = run(&["run", p(&scenario("interval.json")), "--out", p(&iv)]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let out = run(&[
        "plot",
        p(&iv.join("p0_chebyshev_center_seed1_x0.csv")),
        p(&scenario("interval.json")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("plot supports planar scenarios only"));

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = run(&["plot", p(&empty), p(&scenario("two_disk.json"))]);
    assert_eq!(code(&out), 2);
}
