use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn carve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carve"))
        .args(args)
        .env_remove("CARVE_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_carve(out: &Path, extra: &[&str]) -> Output {
    let (img, q, g) = (
        fixture("scene.png"),
        fixture("scene.q.catt"),
        fixture("scene.g.catt"),
    );
    let mut args = vec![
        "carve",
        "--image",
        p(&img),
        "--q-dump",
        p(&q),
        "--g-dump",
        p(&g),
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    carve(&args)
}

#[test]
fn carve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let out_a = run_carve(&a, &[]);
    let out_b = run_carve(&b, &[]);
    assert_eq!(
        code(&out_a),
        0,
        "{}",
        String::from_utf8_lossy(&out_a.stderr)
    );
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("json")).unwrap(),
        fs::read(b.with_extension("json")).unwrap()
    );
    assert_eq!(out_a.stdout, out_b.stdout);
    let diag = json(&out_a);
    assert!(diag.get("tau").is_some(), "{diag}");
}

#[test]
fn carve_missing_general_dump_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, q) = (fixture("scene.png"), fixture("scene.q.catt"));
    let missing = dir.path().join("nope.g.catt");
    let out_png = dir.path().join("o.png");
    let out = carve(&[
        "carve",
        "--image",
        p(&img),
        "--q-dump",
        p(&q),
        "--g-dump",
        p(&missing),
        "--out",
        p(&out_png),
    ]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());
    assert!(!out_png.exists());
}

#[test]
fn carve_zero_fraction_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_carve(&dir.path().join("o.png"), &["--p", "0"]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flag_value_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run_carve(
            &dir.path().join("o.png"),
            &["--connectivity", "6"]
        )),
        2
    );
    assert_eq!(code(&carve(&["cost", "--rho", "1.5"])), 2);
    assert_eq!(code(&carve(&["frobnicate"])), 2);
}

#[test]
fn complexity_of_solid_image_is_exact_zero() {
    let out = carve(&["complexity", p(&fixture("solid.png"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        r#"{"texture":0.0,"color":0.0}"#
    );
}

#[test]
fn complexity_of_full_hue_sweep_is_one() {
    let v = json(&carve(&["complexity", p(&fixture("hue180.png"))]));
    assert!((v["color"].as_f64().unwrap() - 1.0).abs() <= 0.01, "{v}");
}

#[test]
fn complexity_of_corrupt_image_is_parse_error() {
    let out = carve(&["complexity", p(&fixture("corrupt.png"))]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());
}

#[test]
fn cost_examples() {
    let v = json(&carve(&["cost", "--alpha", "0.89"]));
    assert!(
        (v["s_cache"].as_f64().unwrap() - 1.5873).abs() <= 1e-4,
        "{v}"
    );
    let v = json(&carve(&["cost", "--alpha", "1"]));
    assert_eq!(v["eta1"].as_f64().unwrap(), 0.0);
    let v = json(&carve(&["cost"]));
    assert_eq!(v["memory_bytes"].as_u64().unwrap(), 204_800);
    assert!(
        (v["eta1"].as_f64().unwrap() - 2.0 / 3.0 * 3.0 / 28.0).abs() <= 1e-6,
        "{v}"
    );
    assert_eq!(code(&carve(&["cost", "--alpha", "0"])), 2);
}

#[test]
fn entropy_reports_fixture_layers() {
    let v = json(&carve(&["entropy", p(&fixture("scene.q.catt"))]));
    let text = v.to_string();
    for layer in 20..=25 {
        assert!(text.contains(&format!("\"layer\":{layer}")), "{text}");
    }
}

#[test]
fn synth_honors_seed_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed_flag: &str, env: Option<&str>| {
        let out_dir = dir.path().join(sub);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_carve"));
        cmd.args([
            "synth",
            "--out",
            p(&out_dir),
            "--seed",
            seed_flag,
            "--size",
            "32",
        ]);
        match env {
            Some(s) => cmd.env("CARVE_SEED", s),
            None => cmd.env_remove("CARVE_SEED"),
        };
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read(out_dir.join("synth_000.png")).unwrap(),
            fs::read(out_dir.join("synth_000.q.catt")).unwrap(),
        )
    };
    let plain = run("a", "11", None);
    assert_eq!(plain, run("b", "11", None));
    assert_eq!(run("c", "99", Some("11")), plain);
    assert_ne!(run("d", "12", None), plain);
}

#[test]
fn progressive_writes_one_png_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let (img, q, g) = (
        fixture("scene.png"),
        fixture("scene.q.catt"),
        fixture("scene.g.catt"),
    );
    let out = carve(&[
        "progressive",
        "--image",
        p(&img),
        "--q-dump",
        p(&q),
        "--g-dump",
        p(&g),
        "--out",
        p(dir.path()),
        "--ratios",
        "0,0.5,1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["mask_0.000.png", "mask_0.500.png", "mask_1.000.png"]
    );
    assert!(!fs::read(dir.path().join("mask_0.000.png"))
        .unwrap()
        .is_empty());
}

#[test]
fn study_on_empty_directory_succeeds_without_plot() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let res = carve(&["study", "--dir", p(input.path()), "--out", p(out.path())]);
    let v = json(&res);
    assert_eq!(v["samples"].as_u64().unwrap(), 0);
    assert!(!String::from_utf8_lossy(&res.stderr).is_empty());
    assert!(out.path().join("raw.csv").exists());
    assert!(!out.path().join("plot.svg").exists());
}

#[test]
fn help_lists_defaults() {
    for (sub, want) in [
        (
            "carve",
            vec![
                "[default: 0.4]",
                "[default: 2]",
                "[default: 0.05]",
                "[default: 20-25]",
            ],
        ),
        (
            "complexity",
            vec!["[default: 1.4]", "[default: 50]", "[default: 150]"],
        ),
        (
            "cost",
            vec![
                "[default: 0.3]",
                "[default: 5]",
                "[default: 10]",
                "[default: 1024]",
            ],
        ),
        (
            "study",
            vec!["[default: 10]", "[default: 0.95]", "[default: question]"],
        ),
    ] {
        let out = carve(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        for w in want {
            assert!(text.contains(w), "{sub} --help lacks {w}:\n{text}");
        }
    }
}
