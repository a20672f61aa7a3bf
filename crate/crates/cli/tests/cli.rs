use std::path::Path;
use std::process::{Command, Output};

fn initcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_initcap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--dataset",
    "synthetic",
    "--input-dim",
    "6",
    "--classes",
    "3",
    "--separation",
    "2",
    "--H",
    "8,16",
    "--m",
    "32",
    "--seeds",
    "0",
    "--depth",
    "3",
    "--max-epochs",
    "30",
    "--test-size",
    "40",
    "--probes",
    "8",
];

fn sweep(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["sweep", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    initcap(&args)
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&initcap(&["--help"])), 0);
    assert_eq!(code(&initcap(&["frobnicate"])), 2);
    assert_eq!(code(&initcap(&["fit", "--csv", "x.csv"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(dir.path(), &["--profile", "Z"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown profile"));
    let o = sweep(dir.path(), &["--H", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_then_verify_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("2 grid points, 0 failed"));
    let o = initcap(&["verify-bounds", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));

    let fit = initcap(&[
        "fit",
        "--csv",
        dir.path().join("sweep.csv").to_str().unwrap(),
        "--x",
        "H",
        "--y",
        "r",
    ]);
    // Two distinct widths cannot be fitted.
    assert_eq!(code(&fit), 2);
}

#[test]
fn verify_bounds_failures() {
    let empty = tempfile::tempdir().unwrap();
    let o = initcap(&["verify-bounds", empty.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("no checkpoints"));

    let o = initcap(&["verify-bounds", empty.path().join("absent").to_str().unwrap()]);
    assert_eq!(code(&o), 3);

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sweep(dir.path(), &[])), 0);
    let victim = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_str().unwrap().ends_with("_final.icap"))
        .unwrap();
    std::fs::write(&victim, b"ICAPgarbage").unwrap();
    let o = initcap(&["verify-bounds", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains(victim.file_name().unwrap().to_str().unwrap()));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("f");
    std::fs::write(&file, b"x").unwrap();
    let o = sweep(&file.join("sub"), &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "# test\nprofile = A\nlr = 0.05\nseeds = 4\nH = 8\n").unwrap();
    let out = dir.path().join("out");
    let o = sweep(&out, &["--config", cfg.to_str().unwrap(), "--H", "16", "--momentum", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = out.join("sweep.csv");
    assert_eq!(csv_column(&csv, "H"), ["16"]);
    assert_eq!(csv_column(&csv, "profile"), ["A"]);
    // TINY passes --seeds 0 after the config file.
    assert_eq!(csv_column(&csv, "seed"), ["0"]);
    assert_eq!(csv_column(&csv, "lr"), ["0.05"]);
    assert_eq!(csv_column(&csv, "momentum"), ["0.5"]);

    let out2 = dir.path().join("out2");
    let o = sweep(&out2, &["--config", cfg.to_str().unwrap(), "--profile", "C"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv_column(&out2.join("sweep.csv"), "profile"), ["C", "C"]);
    assert_eq!(csv_column(&out2.join("sweep.csv"), "lr"), ["0.05", "0.05"]);

    let o = sweep(&out2, &["--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn fit_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("m,r,g\n");
    for m in [128.0f64, 256.0, 512.0, 1024.0] {
        text.push_str(&format!("{m},{},a\n{m},{},b\n", m.powf(0.3), 2.0 * m.powf(0.3)));
    }
    std::fs::write(&csv, text).unwrap();
    let c = csv.to_str().unwrap();
    let o = initcap(&["fit", "--csv", c, "--x", "m", "--y", "r"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("exponent 0.300000"), "{}", stdout(&o));

    let o = initcap(&["fit", "--csv", c, "--x", "m", "--y", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("available: m, r, g"));

    let svg = dir.path().join("p.svg");
    let s = svg.to_str().unwrap();
    let args = ["plot", "--csv", c, "--x", "m", "--y", "r", "--group", "g", "--out", s, "--log-x", "--log-y"];
    assert_eq!(code(&initcap(&args)), 0);
    let first = std::fs::read(&svg).unwrap();
    assert_eq!(code(&initcap(&args)), 0);
    assert_eq!(first, std::fs::read(&svg).unwrap());
    assert_eq!(String::from_utf8(first).unwrap().matches("<polyline").count(), 2);

    let o = initcap(&["fit", "--csv", dir.path().join("none.csv").to_str().unwrap(), "--x", "m", "--y", "r"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn estimate_rademacher_linear_checks_bound() {
    let o = initcap(&[
        "estimate-rademacher",
        "--r",
        "0.5",
        "--activation",
        "linear",
        "--H",
        "8",
        "--m",
        "8",
        "--trials",
        "10",
        "--steps",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("linear_bound") && out.contains("PASS"), "{out}");

    let o = initcap(&["estimate-rademacher", "--r", "0.5", "--activation", "tanh"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn estimate_rademacher_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sweep(dir.path(), &["--profile", "noise-partial", "--noise", "0", "--H", "8"])), 0);
    let init = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_str().unwrap().ends_with("_init.icap"))
        .unwrap();
    let args = ["estimate-rademacher", "--r", "1", "--init", init.to_str().unwrap(), "--trials", "4", "--steps", "20"];
    let o = initcap(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("mean"));

    std::fs::write(&init, b"not a checkpoint").unwrap();
    assert_eq!(code(&initcap(&args)), 3);
}

#[test]
fn verify_concentration_passes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let o = initcap(&["verify-concentration", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("check,params,empirical,bound,slack,samples,pass"));
}
