//! End-to-end tests of the `noisewarp` binary: exit codes, file round-trips,
//! and the printed reports.

use noisewarp::{read_tensor, write_flo, write_tensor, FlowField};
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

/// Per-test scratch directory under the system temp dir, removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("noisewarp-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&p);
        fs::create_dir_all(&p).unwrap();
        Scratch(p)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisewarp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic_and_readable() {
    let dir = Scratch::new("gen");
    let (a, b) = (dir.path("a.nwt"), dir.path("b.nwt"));
    run_ok(&["gen", "--shape", "8x8", "--seed", "7", "--out", path_str(&a)]);
    run_ok(&["gen", "--shape", "8x8", "--seed", "7", "--out", path_str(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let t = read_tensor(&a).unwrap();
    assert_eq!(t.shape(), &[8, 8]);
    assert_eq!(t.channels(), 1);
}

#[test]
fn warp_with_zero_flow_reproduces_the_input() {
    let dir = Scratch::new("warp-id");
    let (input, flow, out) = (dir.path("in.nwt"), dir.path("zero.flo"), dir.path("out.nwt"));
    run_ok(&["gen", "--shape", "8x8", "--seed", "3", "--out", path_str(&input)]);
    write_flo(&FlowField::zeros(&[8, 8]).unwrap(), &flow).unwrap();
    for method in ["grid", "particle", "hiwyn", "bilinear", "nearest"] {
        let stdout = run_ok(&[
            "warp",
            "--input",
            path_str(&input),
            "--flow",
            path_str(&flow),
            "--method",
            method,
            "--upsample",
            "2",
            "--out",
            path_str(&out),
        ]);
        assert!(stdout.contains("wrote"), "{method}: {stdout}");
        assert_eq!(
            read_tensor(&input).unwrap().data(),
            read_tensor(&out).unwrap().data(),
            "method {method}"
        );
    }
}

#[test]
fn negated_flow_equals_pre_negated_flow() {
    let dir = Scratch::new("warp-neg");
    let input = dir.path("in.nwt");
    run_ok(&["gen", "--shape", "6x6", "--seed", "9", "--out", path_str(&input)]);
    let plus = FlowField::from_fn(&[6, 6], |_| vec![0.0, 1.0]).unwrap();
    let mut minus = plus.clone();
    minus.negate();
    write_flo(&plus, dir.path("plus.flo")).unwrap();
    write_flo(&minus, dir.path("minus.flo")).unwrap();
    let (a, b) = (dir.path("a.nwt"), dir.path("b.nwt"));
    run_ok(&[
        "warp",
        "--input",
        path_str(&input),
        "--flow",
        path_str(&dir.path("plus.flo")),
        "--method",
        "grid",
        "--seed",
        "5",
        "--negate-flow",
        "--out",
        path_str(&a),
    ]);
    run_ok(&[
        "warp",
        "--input",
        path_str(&input),
        "--flow",
        path_str(&dir.path("minus.flo")),
        "--method",
        "grid",
        "--seed",
        "5",
        "--out",
        path_str(&b),
    ]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn mismatched_flow_resolution_is_rejected() {
    let dir = Scratch::new("warp-mismatch");
    let (input, flow) = (dir.path("in.nwt"), dir.path("f.flo"));
    run_ok(&["gen", "--shape", "8x8", "--seed", "1", "--out", path_str(&input)]);
    write_flo(&FlowField::zeros(&[16, 16]).unwrap(), &flow).unwrap();
    let out = run(&[
        "warp",
        "--input",
        path_str(&input),
        "--flow",
        path_str(&flow),
        "--method",
        "grid",
        "--out",
        path_str(&dir.path("o.nwt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does not match"), "{err}");
}

#[test]
fn malformed_tensor_fails_with_exit_1_and_offset() {
    let dir = Scratch::new("badmagic");
    let bad = dir.path("bad.nwt");
    fs::write(&bad, b"BAD!rest").unwrap();
    let out = run(&["stats", "--input", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte 0"), "{err}");
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let out = run(&["warp", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("noisewarp"));
}

#[test]
fn warp_seq_writes_every_frame_starting_with_the_prior() {
    let dir = Scratch::new("seq");
    let input = dir.path("in.nwt");
    let flows = dir.path("flows");
    fs::create_dir_all(&flows).unwrap();
    run_ok(&["gen", "--shape", "8x8", "--seed", "4", "--out", path_str(&input)]);
    let zero = FlowField::zeros(&[8, 8]).unwrap();
    write_flo(&zero, flows.join("0001.flo")).unwrap();
    write_flo(&zero, flows.join("0002.flo")).unwrap();
    let out_dir = dir.path("out");
    run_ok(&[
        "warp-seq",
        "--input",
        path_str(&input),
        "--flows",
        path_str(&flows),
        "--method",
        "particle",
        "--out-dir",
        path_str(&out_dir),
    ]);
    for k in 0..3 {
        let frame = read_tensor(out_dir.join(format!("frame_{k:04}.nwt"))).unwrap();
        assert_eq!(frame.data(), read_tensor(&input).unwrap().data(), "frame {k}");
    }
}

#[test]
fn stats_prints_ks_and_moran_and_writes_csv() {
    let dir = Scratch::new("stats");
    let (input, csv) = (dir.path("in.nwt"), dir.path("report.csv"));
    run_ok(&["gen", "--shape", "32x32", "--seed", "11", "--out", path_str(&input)]);
    let stdout = run_ok(&[
        "stats",
        "--input",
        path_str(&input),
        "--csv",
        path_str(&csv),
    ]);
    assert!(stdout.contains("ks-standard-normal"), "{stdout}");
    assert!(stdout.contains("moran-i[ch0]"), "{stdout}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("test,statistic,p_value,n\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn converge_prints_levels_and_self_floor() {
    let dir = Scratch::new("converge");
    let (input, flow, csv) = (dir.path("p.nwt"), dir.path("f.flo"), dir.path("t.csv"));
    run_ok(&["gen", "--shape", "4x4", "--seed", "3", "--out", path_str(&input)]);
    let f = FlowField::from_fn(&[4, 4], |_| vec![0.2, 0.4]).unwrap();
    write_flo(&f, &flow).unwrap();
    let stdout = run_ok(&[
        "converge",
        "--input",
        path_str(&input),
        "--flow",
        path_str(&flow),
        "--runs",
        "1000",
        "--levels",
        "2",
        "--seed",
        "5",
        "--csv",
        path_str(&csv),
    ]);
    assert!(stdout.contains("mean_W2"), "{stdout}");
    assert!(stdout.contains("self"), "{stdout}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("n,mean_w2,max_w2\n"), "{text}");
    assert!(text.lines().last().unwrap().starts_with("self,"), "{text}");
}

#[test]
fn bench_reports_median_mad_and_peak_allocation() {
    let stdout = run_ok(&[
        "bench",
        "--size",
        "32",
        "--reps",
        "3",
        "--method",
        "particle",
    ]);
    assert!(stdout.contains("median"), "{stdout}");
    assert!(stdout.contains("mad"), "{stdout}");
    // The real binary installs the counting allocator, so a number must be
    // reported rather than the n/a fallback.
    assert!(stdout.contains("peak alloc") && !stdout.contains("n/a"), "{stdout}");
}

#[test]
fn warp3d_identity_reproduces_the_volume() {
    let dir = Scratch::new("warp3d");
    let (input, flow, out) = (dir.path("v.nwt"), dir.path("f3.nwt"), dir.path("w.nwt"));
    run_ok(&["gen", "--shape", "6x6x6", "--seed", "8", "--out", path_str(&input)]);
    let zero3 = FlowField::zeros(&[6, 6, 6]).unwrap();
    write_tensor(&zero3.to_tensor(), &flow).unwrap();
    run_ok(&[
        "warp3d",
        "--input",
        path_str(&input),
        "--flow",
        path_str(&flow),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        read_tensor(&input).unwrap().data(),
        read_tensor(&out).unwrap().data()
    );
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let dir = Scratch::new("threads");
    let input = dir.path("in.nwt");
    run_ok(&["gen", "--shape", "8x8", "--seed", "2", "--out", path_str(&input)]);
    let out = bin()
        .env("NOISEWARP_THREADS", "1")
        .args(["stats", "--input", path_str(&input)])
        .output()
        .unwrap();
    assert!(out.status.success());
}
