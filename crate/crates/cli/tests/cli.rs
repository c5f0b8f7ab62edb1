use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file)
}

fn hsaflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsaflow")).args(args).output().expect("spawn hsaflow")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn demo_run_writes_report_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let topo = demo("topology.json");
    let roles = demo("roles.json");
    let o = hsaflow(&[
        "run",
        "--topology",
        topo.to_str().unwrap(),
        "--manifest",
        roles.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("163735"));
    let r = report(&out);
    assert_eq!(r["report"]["clock_us"], 163_735);
    assert_eq!(r["reconfigs"], 1);
    assert_eq!(r["placement"]["fc1"]["agent"], "fpga0");
    assert!(out.join("report.txt").exists());
    let y = std::fs::read_to_string(out.join("y.tensor")).unwrap();
    assert!(y.starts_with("f32 4x4:"));
}

#[test]
fn identity_demo_passes_input_through() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("x.tensor");
    std::fs::write(&input, "f32 4x4:\n1 2 3 4\n5 6 7 8\n-1 -2 -3 -4\n0.5 0.25 0 9\n").unwrap();
    let out = tmp.path().join("out");
    let arg = format!("x={}", input.display());
    let o = hsaflow(&["run", "--input", &arg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y = hsaflow::kernels::parse_literal(&std::fs::read_to_string(out.join("y.tensor")).unwrap()).unwrap();
    let x = hsaflow::kernels::parse_literal(&std::fs::read_to_string(&input).unwrap()).unwrap();
    assert!(x.bits_eq(&y));
}

#[test]
fn hsa_layer_lowers_setup_and_dispatch() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hsaflow(&["run", "--layer", "hsa", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(tmp.path())["report"]["clock_us"], 39_032 + 7_424 + 3 * 10);
}

#[test]
fn missing_graph_file_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.json");
    let o = hsaflow(&["run", "--graph", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("absent.json") && err.contains("No such file"), "{err}");
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn malformed_graph_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.json");
    std::fs::write(&g, "{ \"nodes\": [\n  { \"id\": \"a\", \"op\": \"INPUT\" },\n  oops\n] }").unwrap();
    let o = hsaflow(&["run", "--graph", g.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn single_region_thrash_reconfigures_every_dispatch() {
    let tmp = tempfile::tempdir().unwrap();
    let g = demo("thrash.json");
    let o = hsaflow(&["run", "--graph", g.to_str().unwrap(), "--regions", "1", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(tmp.path());
    assert_eq!(r["report"]["reconfig_events"], 4);
    assert_eq!(r["report"]["dispatch_events"], 4);

    let two = tmp.path().join("two");
    let o = hsaflow(&["run", "--graph", g.to_str().unwrap(), "--regions", "2", "--out", two.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(report(&two)["report"]["reconfig_events"], 2);
}

#[test]
fn cpu_only_run_matches_fpga_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(hsaflow(&["run", "--seed", "9", "--out", a.to_str().unwrap()]).status.success());
    let o = hsaflow(&["run", "--seed", "9", "--cpu-only", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("running it on the CPU"));
    assert_eq!(std::fs::read(a.join("y.tensor")).unwrap(), std::fs::read(b.join("y.tensor")).unwrap());
    assert_eq!(report(&b)["report"]["dispatch_events"], 0);
}

#[test]
fn report_json_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(hsaflow(&["run", "--seed", "3", "--out", a.to_str().unwrap()]).status.success());
    assert!(hsaflow(&["run", "--seed", "3", "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());
}

#[test]
fn rerun_warns_before_overwriting() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert!(hsaflow(&["run", "--out", dir]).status.success());
    let o = hsaflow(&["run", "--out", dir]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: overwriting"));
}

#[test]
fn concurrent_mode_gives_same_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(hsaflow(&["run", "--out", a.to_str().unwrap()]).status.success());
    assert!(hsaflow(&["run", "--mode", "concurrent", "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(a.join("y.tensor")).unwrap(), std::fs::read(b.join("y.tensor")).unwrap());
    assert_eq!(report(&a)["report"]["clock_us"], report(&b)["report"]["clock_us"]);
}

fn increases(o: &Output) -> Vec<String> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().last().unwrap().to_owned())
        .collect()
}

#[test]
fn bench_reproduces_reference_increases() {
    let o = hsaflow(&["bench", "--reps", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(increases(&o), ["6.51x", "3.03x", "18.62x", "6.98x"]);
}

#[test]
fn bench_is_independent_of_repetitions() {
    let one = hsaflow(&["bench", "--reps", "1"]);
    let many = hsaflow(&["bench", "--reps", "1000"]);
    assert_eq!(increases(&one), increases(&many));
}

#[test]
fn flat_calibration_gives_unit_increase() {
    let cal = demo("flat_calibration.json");
    let o = hsaflow(&["bench", "--reps", "5", "--calibration", cal.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(increases(&o).iter().all(|i| i == "1.00x"));
}

#[test]
fn bench_json_lists_every_role() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hsaflow(&["bench", "--reps", "2", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("bench.json")).unwrap()).unwrap();
    let roles: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["role1", "role2", "role3", "role4"]);
}

#[test]
fn agents_lists_cpu_first() {
    let o = hsaflow(&["agents", "--topology", demo("topology.json").to_str().unwrap()]);
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().to_owned()).collect();
    assert_eq!(ids, ["cpu0", "fpga0"]);
}
