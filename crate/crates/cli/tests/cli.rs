use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ompfpga"));
    c.env_remove("FPGA_FABRIC_CONFIG");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_shipped_configs() {
    let o = bin().arg("validate").arg(configs().join("ring6.json")).output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("6 FPGAs, 24 IPs, ring OK"), "{}", stdout(&o));
    let o = bin().arg("validate").arg(configs().join("ring6-jacobi9pt2d.json")).output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("6 FPGAs, 18 IPs, ring OK"));
}

#[test]
fn validate_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"fpgas\": [\n    {\"id\": 0,,}\n  ]\n}\n").unwrap();
    let o = bin().arg("validate").arg(&broken).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));

    // Four Jacobi IPs do not fit one board.
    let text = std::fs::read_to_string(configs().join("ring6-jacobi9pt2d.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ips = v["fpgas"][0]["ips"].as_array_mut().unwrap();
    let mut extra = ips[0].clone();
    extra["port"] = 3.into();
    ips.push(extra);
    let over = dir.path().join("over.json");
    std::fs::write(&over, v.to_string()).unwrap();
    let o = bin().arg("validate").arg(&over).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violation"), "{}", stdout(&o));
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .args(["run", "--grid", "32x24", "--iters", "10", "--dump-plan", "--dump-graph", "--dump-trace", "--dump-conf", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["conf.hex", "results.csv", "speedup.svg", "gflops.svg", "summary.json", "output.grid", "plan.json", "graph.json", "trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("kernel,h,w,d,iterations,fpgas,ips_per_fpga,elapsed_s,gflops,speedup\n"));
    assert_eq!(csv.lines().count(), 2);

    // The oracle subcommand reproduces the simulated grid from the same seed.
    let input = dir.path().join("in.grid");
    let want = dir.path().join("want.grid");
    assert!(bin().args(["grid", "--dims", "32x24", "--seed", "0", "--output"]).arg(&input).status().unwrap().success());
    assert!(bin()
        .args(["oracle", "--kernel", "laplace2d", "--iters", "10", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&want)
        .status()
        .unwrap()
        .success());
    assert_eq!(std::fs::read(&want).unwrap(), std::fs::read(out.join("output.grid")).unwrap());
}

#[test]
fn sweep_and_config_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = bin()
        .env("FPGA_FABRIC_CONFIG", configs().join("ring6.json"))
        .args(["run", "--grid", "24x16", "--iters", "8", "--sweep", "fpgas=1..3", "--pcie", "gen2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let fpgas: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(fpgas, ["1", "2", "3"]);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .args(["run", "--kernel", "diffusion3d", "--grid", "12x10x6", "--iters", "7", "--sweep", "ips=1..3", "--dump-trace", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["results.csv", "summary.json", "trace.csv", "gflops.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn user_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--kernel", "nope"],
        vec!["run", "--kernel", "laplace3d", "--grid", "16x16"],
        vec!["run", "--grid", "2x2"],
    ] {
        let o = bin().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}
