use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spectral-ops"));
    cmd.env_remove("SPECTRAL_OPS_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spectral-ops")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("suite,params,method,median_ms,repeats,checksum"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn verify_single_suite_lists_only_that_suite() {
    let out = run(&["verify", "--suite", "fftconv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("[PASS] fftconv"));
    assert!(!text.contains("] spectral"));
    assert!(text.contains("1 suites, 0 failed"));
}

#[test]
fn verify_unknown_suite_is_usage_error() {
    let out = run(&["verify", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn malformed_arguments_exit_2() {
    assert_eq!(run(&["bench", "conv", "--image-sizes", "0", "--kernel-sizes", "3"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "mixing", "--seq-lens", "8"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bench_conv_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("conv.csv");
    let out = run(&[
        "bench", "conv", "--image-sizes", "64,128", "--kernel-sizes", "3,15", "--repeats", "5", "--out", path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(rows.len(), 8);
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(
        keys,
        [
            ("n=64;m=3", "direct"),
            ("n=64;m=3", "fft"),
            ("n=64;m=15", "direct"),
            ("n=64;m=15", "fft"),
            ("n=128;m=3", "direct"),
            ("n=128;m=3", "fft"),
            ("n=128;m=15", "direct"),
            ("n=128;m=15", "fft"),
        ]
    );
    for r in &rows {
        assert_eq!(r[0], "conv");
        assert!(r[3].parse::<f64>().unwrap() >= 0.0);
        assert_eq!(r[4], "5");
        assert!(r[5].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn bench_mixing_rows_to_stdout() {
    let out = run(&["bench", "mixing", "--seq-lens", "256,1024", "--dim", "128"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.len(), 4);
    let methods: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(methods, ["attention", "fourier", "attention", "fourier"]);
    assert_eq!(rows[0][1], "S=256;d=128");
    assert_eq!(rows[3][1], "S=1024;d=128");
}

#[test]
fn bench_csv_stable_apart_from_timings() {
    let args = ["bench", "conv", "--image-sizes", "16,8", "--kernel-sizes", "5,3", "--repeats", "1"];
    let strip = |out: Output| {
        data_rows(&stdout(&out))
            .into_iter()
            .map(|r| [r[0].clone(), r[1].clone(), r[2].clone(), r[4].clone()])
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(run(&args)), strip(run(&args)));
}

#[test]
fn unwritable_out_path_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("missing").join("out.csv");
    let out = run(&["bench", "mixing", "--seq-lens", "8", "--dim", "4", "--repeats", "1", "--out", path(&csv)]);
    assert_eq!(out.status.code(), Some(1));
}

fn init_model(dir: &Path, mixer: &str) {
    let out = run(&["init-model", "--out", path(dir), "--mixer", mixer]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

fn logits(out: &Output) -> Vec<f64> {
    let text = stdout(out);
    let line = text.lines().find_map(|l| l.strip_prefix("logits: ")).unwrap();
    line.split(' ').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn demo_is_deterministic_and_mixers_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (fourier, attention) = (dir.path().join("fourier"), dir.path().join("attention"));
    init_model(&fourier, "fourier");
    init_model(&attention, "attention");
    let input = dir.path().join("zero.ftns");
    assert_eq!(run(&["gen-input", "--out", path(&input), "--zeros"]).status.code(), Some(0));

    let first = run(&["demo", "--model", path(&fourier), "--input", path(&input)]);
    let second = run(&["demo", "--model", path(&fourier), "--input", path(&input)]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let f = logits(&first);
    assert_eq!(f.len(), 10);
    assert!(f.iter().all(|v| v.is_finite()));
    let text = stdout(&first);
    let argmax: usize = text.lines().find_map(|l| l.strip_prefix("argmax: ")).unwrap().parse().unwrap();
    assert!(f.iter().all(|&v| v <= f[argmax]));

    let a = logits(&run(&["demo", "--model", path(&attention), "--input", path(&input)]));
    assert_eq!(a.len(), 10);
    assert_ne!(f, a);
}

#[test]
fn seed_variable_changes_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.ftns");
    assert_eq!(run(&["gen-input", "--out", path(&input)]).status.code(), Some(0));
    let default = dir.path().join("default");
    init_model(&default, "fourier");
    let seeded = dir.path().join("seeded");
    let out = bin()
        .env("SPECTRAL_OPS_SEED", "7")
        .args(["init-model", "--out", path(&seeded)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let a = run(&["demo", "--model", path(&default), "--input", path(&input)]);
    let b = run(&["demo", "--model", path(&seeded), "--input", path(&input)]);
    assert_ne!(a.stdout, b.stdout);

    let bad = bin().env("SPECTRAL_OPS_SEED", "x").args(["init-model", "--out", path(&seeded)]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn demo_reports_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    init_model(&model, "fourier");
    let input = dir.path().join("small.ftns");
    assert_eq!(run(&["gen-input", "--out", path(&input), "--shape", "3,16,16"]).status.code(), Some(0));
    let out = run(&["demo", "--model", path(&model), "--input", path(&input)]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(model.join("head_bias.ftns"), b"FTNS").unwrap();
    let out = run(&["demo", "--model", path(&model), "--input", path(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
