use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use xtalk_cli::RunConfig;

const SMALL: &str = r#"
[crossbar]
rows = 2
cols = 2
th_margin = "300 nm"
line_overhang = "100 nm"

[mesh]
h_min = "5 nm"
growth = 2.0
h_max = "400 nm"

[field]
source = [1, 1]

[extraction]
spacings = ["80 nm", "160 nm"]

[inference]
patterns = ["all_lrs", "diag"]
custom = { diag = [[1, 1], [2, 2]] }
cycles = 1000
"#;

fn xtalk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xtalk")).current_dir(dir).args(args).output().unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), format!("{SMALL}\n{extra}")).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn show_config_round_trips() {
    let dir = setup("");
    let first = xtalk(dir.path(), &["--config", "run.toml", "show-config"]);
    assert_eq!(code(&first), 0);
    let text = String::from_utf8(first.stdout).unwrap();
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.crossbar.rows, 2);
    assert_eq!(cfg.inference.custom["diag"], vec![[1, 1], [2, 2]]);
    fs::write(dir.path().join("again.toml"), &text).unwrap();
    let second = xtalk(dir.path(), &["--config", "again.toml", "show-config"]);
    assert_eq!(String::from_utf8(second.stdout).unwrap(), text);
}

#[test]
fn global_flags_override_the_file() {
    let dir = setup("");
    let out = xtalk(dir.path(), &["--config", "run.toml", "--quick", "--tol", "1e-6", "--out", "elsewhere", "show-config"]);
    let cfg = RunConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!((cfg.mesh.h_min / 10e-9 - 1.0).abs() < 1e-12);
    assert!((cfg.mesh.h_max / 800e-9 - 1.0).abs() < 1e-12);
    assert_eq!(cfg.solver.tol, 1e-6);
    assert_eq!(cfg.out_dir, Path::new("elsewhere"));
}

#[test]
fn bad_input_exits_with_2() {
    let dir = setup("");
    fs::write(dir.path().join("typo.toml"), "[crossbar]\nrowz = 3\n").unwrap();
    let out = xtalk(dir.path(), &["--config", "typo.toml", "show-config"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rowz"));

    fs::write(dir.path().join("fat.toml"), "[crossbar]\nr_cf = \"60 nm\"\n").unwrap();
    assert_eq!(code(&xtalk(dir.path(), &["--config", "fat.toml", "solve-field"])), 2);

    assert_eq!(code(&xtalk(dir.path(), &["--config", "missing.toml", "extract"])), 2);
    assert_eq!(code(&xtalk(dir.path(), &["emit-netlist", "--coupling", "nothing.txt"])), 2);
    assert_eq!(code(&xtalk(dir.path(), &["no-such-command"])), 2);

    fs::write(dir.path().join("broken.txt"), "# xtalk coupling matrix v1\narray 1 x\n").unwrap();
    let out = xtalk(dir.path(), &["emit-netlist", "--coupling", "broken.txt"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn solver_failure_exits_with_3() {
    let dir = setup("[solver]\nmax_iter = 2\n");
    let out = xtalk(dir.path(), &["--config", "run.toml", "solve-field"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn runaway_exits_with_4_and_keeps_the_trace() {
    let dir = setup("");
    let cfg = dir.path().join("run.toml");
    let text = read(dir.path(), "run.toml").replace("cycles = 1000", "cycles = 1000\nt_cap = 320.0");
    fs::write(&cfg, text).unwrap();
    let out = xtalk(dir.path(), &["--config", "run.toml", "infer"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("thermal runaway"));
    let summary = read(&dir.path().join("out"), "inference_summary.csv");
    let all_lrs = summary.lines().find(|l| l.starts_with("all_lrs")).unwrap();
    assert!(all_lrs.ends_with(",1"), "{summary}");
    let trace = read(&dir.path().join("out"), "inference_trace_all_lrs.csv");
    // no coupling file given: the bundled 3×3 network, one line per column
    assert_eq!(trace.lines().count(), 1 + 3);
}

#[test]
fn pipeline_is_deterministic() {
    let dir = setup("");
    let run = |out: &str| {
        for cmd in ["extract", "emit-netlist", "infer"] {
            let o = xtalk(dir.path(), &["--config", "run.toml", "--out", out, cmd]);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    };
    // emit-netlist and infer pick the coupling file up from the output directory
    let with_coupling = |out: &str| {
        let text = read(dir.path(), "run.toml").replace("cycles = 1000", &format!("cycles = 1000\ncoupling = \"{out}/coupling.txt\""));
        fs::write(dir.path().join("run.toml"), text).unwrap();
    };
    let original = read(dir.path(), "run.toml");
    with_coupling("a");
    run("a");
    fs::write(dir.path().join("run.toml"), &original).unwrap();
    with_coupling("b");
    run("b");
    let files = [
        "rth.csv",
        "sweep.csv",
        "coupling.csv",
        "coupling.txt",
        "netlist.sp",
        "inference_summary.csv",
        "inference_trace_all_lrs.csv",
        "inference_trace_diag_uncoupled.csv",
    ];
    for f in files {
        assert_eq!(read(&dir.path().join("a"), f), read(&dir.path().join("b"), f), "{f}");
    }
    let summary = read(&dir.path().join("a"), "inference_summary.csv");
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn single_cell_coupling_is_one() {
    let dir = setup("");
    let text = read(dir.path(), "run.toml").replacen("rows = 2\ncols = 2", "rows = 1\ncols = 1", 1).replace("source = [1, 1]", "");
    fs::write(dir.path().join("one.toml"), text).unwrap();
    let out = xtalk(dir.path(), &["--config", "one.toml", "extract"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let coupling = read(&dir.path().join("out"), "coupling.csv");
    assert_eq!(coupling, "cell,\"(1,1)\"\n\"(1,1)\",1\n");
    let out = xtalk(dir.path(), &["--config", "one.toml", "emit-netlist"]);
    assert_eq!(code(&out), 0);
    let netlist = read(&dir.path().join("out"), "netlist.sp");
    assert!(!netlist.contains("EC_"));
    assert!(netlist.contains("RTH_1_1 th_1_1 amb"));
}

#[test]
fn field_outputs_and_transient_probes() {
    let dir = setup("");
    let text = read(dir.path(), "run.toml").replace("source = [1, 1]", "source = [1, 1]\ntransient = true\nt_end = 2e-6");
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let out = xtalk(dir.path(), &["--config", "run.toml", "solve-field"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    let cells = read(&o, "cells.csv");
    let mut lines = cells.lines().skip(1);
    let source: Vec<&str> = lines.next().unwrap().split(',').collect();
    // the label is quoted, so it spans two comma fields
    let p: f64 = source[4].parse().unwrap();
    assert!((p - 2.45e-6).abs() < 1e-12, "{p}");
    let dump = xtalk_core::field_solver::read_field(std::io::BufReader::new(fs::File::open(o.join("temperature.dat")).unwrap())).unwrap();
    assert!(dump.field.max() > 300.0);
    let probes = read(&o, "probes.csv");
    assert!(probes.starts_with("time_s,probe_name,T_K\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("not steady"));
}

#[test]
fn zero_bias_field_is_ambient() {
    let dir = setup("");
    let text = read(dir.path(), "run.toml").replace("source = [1, 1]", "excitation = \"zero\"");
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let out = xtalk(dir.path(), &["--config", "run.toml", "solve-field"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dump = xtalk_core::field_solver::read_field(std::io::BufReader::new(
        fs::File::open(dir.path().join("out/temperature.dat")).unwrap(),
    ))
    .unwrap();
    assert!(dump.field.values.iter().all(|t| *t == 300.0));
}

#[test]
fn one_read_without_drift_is_exact() {
    let dir = setup("");
    let text = read(dir.path(), "run.toml").replace("cycles = 1000", "cycles = 1\n[inference.drift]\nalpha = 0.0");
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let out = xtalk(dir.path(), &["--config", "run.toml", "infer"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir.path().join("out"), "inference_summary.csv");
    for line in summary.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(&f[1..5], ["1", "100.000000", "100.000000", "0.000000"], "{line}");
    }
}

#[test]
fn plot_scripts_are_optional() {
    let dir = setup("");
    let out = xtalk(dir.path(), &["--config", "run.toml", "infer"]);
    assert_eq!(code(&out), 0);
    assert!(!dir.path().join("out/inference.gp").exists());
    let text = format!("plot_scripts = true\n{}", read(dir.path(), "run.toml"));
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let out = xtalk(dir.path(), &["--config", "run.toml", "infer"]);
    assert_eq!(code(&out), 0);
    let gp = read(&dir.path().join("out"), "inference.gp");
    assert!(gp.contains("inference_trace_diag_uncoupled.csv"));
}
