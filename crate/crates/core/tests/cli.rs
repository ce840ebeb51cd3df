use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use trifuse::fusion::{self, FlowField};
use trifuse::triplane::{self, Triplane};
use trifuse::visibility::{self, MaskTriplane};

const BIN: &str = env!("CARGO_BIN_EXE_trifuse");

const SMALL_CONFIG: &str = r#"{
  "seed": 7,
  "render": {"width": 20, "height": 20, "samples": 24, "t_near": 1.9, "t_far": 3.5},
  "rig": {"views": 4},
  "scene": {"blobs": 5, "frames": 2},
  "visibility": {"resolution": 32}
}"#;

fn trifuse(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = trifuse(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            e.path().is_file().then(|| {
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
        })
        .collect()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("config.json");
        std::fs::write(&config, SMALL_CONFIG).unwrap();
        let tp = Triplane::procedural(3, 8, 16).unwrap();
        triplane::write_triplane(&tp, &root.join("a.trpl")).unwrap();
        let other = Triplane::procedural(4, 8, 16).unwrap();
        triplane::write_triplane(&other, &root.join("b.trpl")).unwrap();
        fusion::write_flow(
            &FlowField::constant(16, 0.5, -0.25).unwrap(),
            &root.join("flow.flow"),
        )
        .unwrap();
        let half = MaskTriplane::from_fn(16, |_, _, u| if u < 8 { 1.0 } else { 0.0 });
        visibility::write_masks(&half, &root.join("vis_a.imgf")).unwrap();
        visibility::write_masks(&MaskTriplane::filled(16, 1.0), &root.join("vis_b.imgf")).unwrap();
        visibility::write_masks(&MaskTriplane::zeros(16), &root.join("zeros.imgf")).unwrap();
        Fixture {
            _tmp: tmp,
            root,
            config,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Runs `args` with the small config, writing into a fresh directory.
    fn run(&self, out: &str, threads: usize, args: &[&str]) -> (PathBuf, String) {
        let dir = self.path(out);
        std::fs::create_dir_all(&dir).unwrap();
        let t = threads.to_string();
        let mut full = vec![
            "--config",
            s(&self.config),
            "--out",
            s(&dir),
            "--threads",
            &t,
        ];
        full.extend_from_slice(args);
        let stdout = run_ok(&full);
        (dir, stdout)
    }
}

fn all_commands(f: &Fixture) -> Vec<Vec<String>> {
    let p = |n: &str| f.path(n).to_str().unwrap().to_string();
    let v = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        v(&["render", "--view", "1"]),
        [v(&["render", "--triplane"]), vec![p("a.trpl")]].concat(),
        v(&["shoulder", "--theta", "-0.3", "--phi", "0.2"]),
        v(&["shoulder", "--theta", "0.3", "--proper-yaw"]),
        v(&["visibility", "--view", "2", "--frontal-view", "0"]),
        [
            v(&["warp", "--triplane"]),
            vec![p("a.trpl")],
            v(&["--flow"]),
            vec![p("flow.flow")],
        ]
        .concat(),
        [
            v(&["fuse", "--undist"]),
            vec![p("a.trpl")],
            v(&["--prior"]),
            vec![p("b.trpl")],
            v(&["--vis-undist"]),
            vec![p("vis_a.imgf")],
            v(&["--vis-prior"]),
            vec![p("vis_b.imgf")],
        ]
        .concat(),
        [
            v(&["losses", "--undist"]),
            vec![p("a.trpl")],
            v(&["--gt"]),
            vec![p("b.trpl")],
            v(&["--fused"]),
            vec![p("a.trpl")],
            v(&["--vis-gt"]),
            vec![p("vis_b.imgf")],
            v(&["--occlusion"]),
            vec![p("vis_a.imgf")],
            v(&["--vis-masks"]),
            vec![
                p("vis_a.imgf"),
                p("vis_b.imgf"),
                p("vis_b.imgf"),
                p("zeros.imgf"),
            ],
            v(&["--render-loss", "0.25"]),
        ]
        .concat(),
    ]
}

#[test]
fn every_command_is_deterministic_across_thread_counts() {
    let f = Fixture::new();
    for (k, cmd) in all_commands(&f).iter().enumerate() {
        let args: Vec<&str> = cmd.iter().map(String::as_str).collect();
        let mut results = Vec::new();
        for (r, threads) in [1, 4, 8, 1].into_iter().enumerate() {
            let (dir, stdout) = f.run(&format!("cmd{k}_{r}"), threads, &args);
            let files = dir_bytes(&dir);
            assert!(!files.is_empty(), "{cmd:?} wrote nothing");
            results.push((files, stdout));
        }
        for r in &results[1..] {
            assert!(
                r == &results[0],
                "{cmd:?} output depends on thread count or run"
            );
        }
    }
}

#[test]
fn render_writes_expected_artifacts() {
    let f = Fixture::new();
    let (dir, _) = f.run("render", 1, &["render"]);
    let files = dir_bytes(&dir);
    for name in [
        "rgb.png",
        "rgb.imgf",
        "features.imgf",
        "depth.imgf",
        "alpha.imgf",
    ] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let img = image::open(dir.join("rgb.png")).unwrap();
    assert_eq!((img.width(), img.height()), (20, 20));
    let alpha = trifuse::raster::read_raster(&dir.join("alpha.imgf")).unwrap();
    assert!(alpha.data().iter().all(|a| (0.0..=1.0).contains(a)));
    assert!(alpha.data().iter().any(|&a| a > 0.5));

    let (vis, _) = f.run(
        "vis",
        1,
        &["visibility", "--view", "3", "--frontal-view", "0"],
    );
    let occ = visibility::read_masks(&vis.join("occlusion.imgf")).unwrap();
    let input = visibility::read_masks(&vis.join("visibility.imgf")).unwrap();
    assert_eq!(occ.resolution(), 32);
    for (o, v) in occ.data().iter().zip(input.data()) {
        assert!(*o == 0.0 || *o == 1.0);
        assert!(!(*o == 1.0 && *v == 1.0));
    }
}

#[test]
fn warp_and_fuse_match_the_library() {
    let f = Fixture::new();
    let a = triplane::read_triplane(&f.path("a.trpl")).unwrap();
    let flow = fusion::read_flow(&f.path("flow.flow")).unwrap();
    let (dir, _) = f.run(
        "warp",
        1,
        &[
            "warp",
            "--triplane",
            s(&f.path("a.trpl")),
            "--flow",
            s(&f.path("flow.flow")),
        ],
    );
    assert_eq!(
        triplane::read_triplane(&dir.join("warped.trpl")).unwrap(),
        fusion::warp_triplane(&a, &flow).unwrap()
    );
    // Fully visible input: the fused triplane is the input everywhere.
    let (dir, _) = f.run(
        "fuse",
        1,
        &[
            "fuse",
            "--undist",
            s(&f.path("a.trpl")),
            "--prior",
            s(&f.path("b.trpl")),
            "--vis-undist",
            s(&f.path("vis_b.imgf")),
            "--vis-prior",
            s(&f.path("zeros.imgf")),
        ],
    );
    assert_eq!(triplane::read_triplane(&dir.join("fused.trpl")).unwrap(), a);
}

#[test]
fn losses_vanish_on_identical_inputs() {
    let f = Fixture::new();
    let a = s(&f.path("a.trpl")).to_string();
    let va = s(&f.path("vis_a.imgf")).to_string();
    let (dir, stdout) = f.run(
        "losses",
        1,
        &[
            "losses",
            "--undist",
            &a,
            "--gt",
            &a,
            "--fused",
            &a,
            "--vis-gt",
            &va,
            "--occlusion",
            &va,
            "--vis-masks",
            &va,
            &va,
            &va,
            &va,
            "--render-loss",
            "0",
        ],
    );
    let v: Value = serde_json::from_str(stdout.trim()).unwrap();
    for key in ["undist", "vis", "fusion", "render", "total"] {
        assert_eq!(v[key].as_f64(), Some(0.0), "{key} in {v}");
    }
    let file: Value =
        serde_json::from_slice(&std::fs::read(dir.join("losses.json")).unwrap()).unwrap();
    assert_eq!(file, v);

    let (_, stdout) = f.run(
        "losses2",
        1,
        &["losses", "--undist", &a, "--gt", s(&f.path("b.trpl"))],
    );
    let v: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(v["vis"].is_null() && v["fusion"].is_null() && v["render"].is_null());
    assert!(v["undist"].as_f64().unwrap() > 0.0);
    assert_eq!(v["total"], v["undist"]);
}

fn expect_failure(args: &[&str], code: i32) -> Value {
    let out = trifuse(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "diagnostic must be one line: {err}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["code"].as_i64(), Some(code as i64));
    assert!(v["error"].is_string() && v["message"].is_string());
    v
}

#[test]
fn failures_exit_with_json_diagnostics() {
    let f = Fixture::new();
    let out = f.path("fail");
    let cfg = s(&f.config);
    expect_failure(&["bogus"], 2);
    expect_failure(&["shoulder", "--theta", "abc"], 2);
    expect_failure(&["--threads", "0", "render"], 2);
    expect_failure(
        &[
            "--out",
            s(&out),
            "eval",
            "--manifest",
            s(&f.path("nope.json")),
        ],
        3,
    );
    expect_failure(
        &["--config", cfg, "--out", s(&out), "render", "--view", "9"],
        2,
    );
    expect_failure(
        &[
            "--out",
            s(&out),
            "warp",
            "--triplane",
            s(&f.config),
            "--flow",
            s(&f.config),
        ],
        3,
    );
    let a = f.path("a.trpl");
    let v = expect_failure(
        &[
            "--out",
            s(&out),
            "losses",
            "--undist",
            s(&a),
            "--gt",
            s(&a),
            "--render-loss",
            "nan",
        ],
        4,
    );
    assert_eq!(v["error"], "numerical");

    let bad = f.path("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "colour": "red"}"#).unwrap();
    let v = expect_failure(&["--config", s(&bad), "render"], 2);
    assert!(v["message"].as_str().unwrap().contains("colour"));
    std::fs::write(
        &bad,
        r#"{"render": {"width": 8, "height": 8, "samples": 4, "t_near": 2.0, "t_far": 1.0}}"#,
    )
    .unwrap();
    expect_failure(&["--config", s(&bad), "render"], 2);
}

#[test]
fn synth_then_identity_eval_is_perfect_and_reproducible() {
    let f = Fixture::new();
    let (data, _) = f.run("data", 4, &["synth"]);
    let manifest = data.join("manifest.json");
    let files = dir_bytes(&data);
    assert_eq!(files.keys().filter(|k| k.starts_with("view")).count(), 8);
    let (again, _) = f.run("data2", 1, &["synth"]);
    assert_eq!(dir_bytes(&again), files);

    let (e1, stdout) = f.run("eval1", 4, &["eval", "--manifest", s(&manifest)]);
    let (e2, _) = f.run("eval2", 1, &["eval", "--manifest", s(&manifest)]);
    assert_eq!(dir_bytes(&e1), dir_bytes(&e2));
    let report: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(report["overall"].as_f64(), Some(99.0));
    assert_eq!(report["nvs"].as_f64(), Some(99.0));
    assert_eq!(report["nvv"].as_f64(), Some(0.0));
    assert_eq!(report["ivv"].as_f64(), Some(0.0));
    let csv = std::fs::read_to_string(e1.join("scores.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,i,j,score"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 4);

    let (_, stdout) = f.run(
        "eval3",
        1,
        &[
            "eval",
            "--manifest",
            s(&manifest),
            "--reconstructor",
            "perturb:0.08",
        ],
    );
    let report: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(report["overall"].as_f64().unwrap() < 99.0);
    assert!(report["nvv"].as_f64().unwrap() > 0.0);
}

#[cfg(unix)]
#[test]
fn external_reconstructor_round_trips_a_triplane() {
    use std::os::unix::fs::PermissionsExt;
    let f = Fixture::new();
    let (data, _) = f.run("data", 1, &["synth"]);
    let full = f.path("full.trpl");
    triplane::write_triplane(
        &Triplane::procedural(5, triplane::DEFAULT_CHANNELS, 16).unwrap(),
        &full,
    )
    .unwrap();
    let script = f.path("rec.sh");
    std::fs::write(&script, format!("#!/bin/sh\ncp {} \"$2\"\n", s(&full))).unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let spec = format!("external:{}", s(&script));
    let (dir, stdout) = f.run(
        "ext",
        1,
        &[
            "eval",
            "--manifest",
            s(&data.join("manifest.json")),
            "--reconstructor",
            &spec,
        ],
    );
    let report: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(report["overall"].as_f64().unwrap().is_finite());
    assert_eq!(report["present_entries"].as_u64(), Some(2 * 4 * 4));
    assert!(dir.join("heatmap.png").is_file());
}
