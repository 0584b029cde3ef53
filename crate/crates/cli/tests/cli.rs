use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shape(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/shapes")
        .join(format!("{name}.txt"))
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarm-construct"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_u7(dir: &Path) -> PathBuf {
    let trace = dir.join("trace.jsonl");
    let metrics = dir.join("metrics.json");
    let out = cli(&[
        "run", "--shape", s(&shape("u7")), "--robots", "3", "--trace", s(&trace), "--metrics", s(&metrics),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    trace
}

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let trace = run_u7(dir.path());
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.lines().next().unwrap().starts_with(r#"{"type":"header","format_version":1"#));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["completed"], true);
    assert!(metrics["makespan_ticks"].as_u64().unwrap() > 0);
}

#[test]
fn validate_accepts_engine_trace_and_rejects_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let trace = run_u7(dir.path());
    let ok = cli(&["validate", "--trace", s(&trace), "--shape", s(&shape("u7"))]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("ok   no sealed holes"));

    // move the first drop outside the footprint
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let i = lines.iter().position(|l| l.contains(r#""kind":"drop""#)).unwrap();
    let start = lines[i].find(r#""cell":["#).unwrap();
    let end = start + lines[i][start..].find(']').unwrap() + 1;
    lines[i].replace_range(start..end, r#""cell":[0,5]"#);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = cli(&["validate", "--trace", s(&bad), "--shape", s(&shape("u7"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL blocks within shape"));

    // a trace recorded on another shape is rejected as well
    let other = cli(&["validate", "--trace", s(&trace), "--shape", s(&shape("square5"))]);
    assert_eq!(other.status.code(), Some(1));
}

#[test]
fn render_writes_frames() {
    let dir = tempfile::tempdir().unwrap();
    let trace = run_u7(dir.path());
    let frames = dir.path().join("frames");
    let out = cli(&["render", "--trace", s(&trace), "--shape", s(&shape("u7")), "--out-dir", s(&frames), "--every", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names[0], "frame_000000.ppm");
    assert!(names.len() >= 3);
    assert!(fs::read(frames.join(&names[0])).unwrap().starts_with(b"P6\n176 176\n255\n"));
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = cli(&["bench", "--shape", s(&shape("square5")), "--robots", "1,2,4,8", "--trials", "2", "--csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "shape,robots,trial,makespan,completed,parallelism_index,replans,retargets");
    assert_eq!(lines.len(), 1 + 8);
    let robots: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(robots, ["1", "2", "4", "8", "1", "2", "4", "8"]);
    assert!(lines[1..].iter().all(|l| l.starts_with("square5,") && l.contains(",true,")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    for args in [
        vec!["run", "--shape", s(&shape("u7")), "--bogus"],
        vec!["run", "--shape", s(&shape("u7")), "--fail", "nonsense"],
        vec!["run", "--shape", "/nonexistent/shape.txt", "--trace", s(&trace)],
        vec!["run", "--shape", s(&shape("u7")), "--robots", "0", "--trace", s(&trace)],
        vec!["bench", "--shape", s(&shape("u7")), "--robots", "0"],
        vec!["frobnicate"],
    ] {
        let out = cli(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
