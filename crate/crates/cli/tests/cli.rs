use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radkit::io::{read_heatmap, write_heatmap, write_scene};
use radkit::simulator::integrate_heatmap;
use radkit::{Heatmap, PolarGrid, RotatedBox, Scatterer, Scene};
use serde_json::{json, Value};
use tempfile::TempDir;

fn radkit(args: &[&str]) -> Output {
    radkit_env(args, &[])
}

fn radkit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_radkit"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn radkit")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn small_grid(dir: &Path) -> PathBuf {
    let grid = PolarGrid {
        num_range: 12,
        num_azimuth: 12,
        ..PolarGrid::default()
    };
    let path = dir.join("grid.json");
    fs::write(&path, serde_json::to_vec(&grid).unwrap()).unwrap();
    path
}

/// Scenes and simulated tensors on a small grid under `root/<name>`.
fn corpus(root: &Path, name: &str, count: usize, seed: u64) -> PathBuf {
    let grid = small_grid(root);
    let scenes = root.join(format!("{name}-scenes"));
    let data = root.join(name);
    let seed = seed.to_string();
    ok(&radkit(&[
        "gen-scenes",
        "--count",
        &count.to_string(),
        "--seed",
        &seed,
        "--grid",
        s(&grid),
        "--out",
        s(&scenes),
    ]));
    ok(&radkit(&[
        "simulate",
        "--scenes",
        s(&scenes),
        "--grid",
        s(&grid),
        "--seed",
        &seed,
        "--out",
        s(&data),
    ]));
    data.join("manifest.json")
}

fn small_train_config(steps: usize, manifest: &str) -> Value {
    json!({
        "batch_size": 4,
        "steps": steps,
        "seed": 7,
        "encoder": {"backbone_hidden": [16], "feature_dim": 8, "head_hidden": [8], "embed_dim": 4},
        "dataset_path": manifest,
    })
}

#[test]
fn help_documents_every_subcommand_and_flag() {
    let cases: &[(&str, &[&str])] = &[
        (
            "gen-scenes",
            &[
                "--count",
                "--seed",
                "--scatterers-min",
                "--scatterers-max",
                "--grid",
                "--out",
            ],
        ),
        (
            "simulate",
            &["--scenes", "--geometry", "--grid", "--sim", "--seed", "--out"],
        ),
        ("augment", &["--in", "--spec", "--seed", "--out"]),
        ("render", &["--in", "--out"]),
        ("pretrain", &["--config", "--out"]),
        ("probe", &["--config", "--out"]),
        ("sweep-labels", &["--config", "--out"]),
        ("eval-det", &["--config", "--out"]),
        ("retrieval", &["--config", "--out"]),
    ];
    let top = radkit(&["--help"]);
    ok(&top);
    let top = String::from_utf8_lossy(&top.stdout).into_owned();
    for (cmd, flags) in cases {
        assert!(top.contains(cmd), "{cmd} missing from top-level help");
        let out = radkit(&[cmd, "--help"]);
        ok(&out);
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help does not mention {flag}");
        }
    }
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(radkit(&[]).status.code(), Some(2));
}

#[test]
fn gen_scenes_with_zero_count_makes_an_empty_dir() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("none");
    ok(&radkit(&["gen-scenes", "--count", "0", "--out", s(&out)]));
    assert!(out.is_dir());
    assert!(dir_bytes(&out).is_empty());
}

#[test]
fn gen_scenes_is_deterministic_and_respects_counts() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let args = [
            "gen-scenes",
            "--count",
            "40",
            "--seed",
            "3",
            "--scatterers-min",
            "1",
            "--scatterers-max",
            "3",
            "--out",
            s(dir),
        ];
        ok(&radkit(&args));
    }
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 40);
    assert_eq!(files, dir_bytes(&b));
    for (_, bytes) in &files {
        let scene: Scene = serde_json::from_slice(bytes).unwrap();
        assert!((1..=3).contains(&scene.scatterers.len()));
        assert_eq!(scene.boxes.len(), scene.scatterers.len());
    }
}

#[test]
fn gen_scenes_rejects_inverted_ranges() {
    let tmp = TempDir::new().unwrap();
    let out = radkit(&[
        "gen-scenes",
        "--count",
        "2",
        "--scatterers-min",
        "4",
        "--scatterers-max",
        "2",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_empty_dir_writes_empty_manifest() {
    let tmp = TempDir::new().unwrap();
    let scenes = tmp.path().join("scenes");
    fs::create_dir(&scenes).unwrap();
    let out = tmp.path().join("data");
    ok(&radkit(&["simulate", "--scenes", s(&scenes), "--out", s(&out)]));
    assert_eq!(read(&out.join("manifest.json"))["entries"], json!([]));
}

#[test]
fn simulate_places_a_single_scatterer_at_its_bin_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let grid = PolarGrid::default();
    let (l, a) = (9, 21);
    let scatterer = Scatterer {
        range: grid.range_center(l),
        azimuth: grid.azimuth_center(a),
        amplitude: 1.0,
        visibility: 1.0,
        radial_velocity: 0.0,
    };
    let (x, y) = scatterer.position();
    let scene = Scene {
        id: "one".into(),
        scatterers: vec![scatterer],
        boxes: vec![RotatedBox::new(x, y, 4.5, 1.8, 0.0)],
    };
    let scenes = tmp.path().join("scenes");
    fs::create_dir(&scenes).unwrap();
    write_scene(&scene, scenes.join("one.json")).unwrap();
    let sim = tmp.path().join("sim.json");
    write(&sim, &json!({"noise_floor": 0.0}));

    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    for out in [&first, &second] {
        ok(&radkit(&[
            "simulate",
            "--scenes",
            s(&scenes),
            "--sim",
            s(&sim),
            "--seed",
            "5",
            "--out",
            s(out),
        ]));
    }
    assert_eq!(dir_bytes(&first), dir_bytes(&second));
    let tensor = radkit::io::read_tensor(first.join("one.rst")).unwrap();
    let (pl, pa, _) = integrate_heatmap(&tensor).argmax();
    assert_eq!((pl, pa), (l, a));
}

#[test]
fn simulate_reports_parse_failures_as_data_errors() {
    let tmp = TempDir::new().unwrap();
    let scenes = tmp.path().join("scenes");
    fs::create_dir(&scenes).unwrap();
    fs::write(scenes.join("bad.json"), "{\n  \"id\": 3,\n").unwrap();
    let out = radkit(&["simulate", "--scenes", s(&scenes), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json") && err.contains("line"), "{err}");
}

fn parse_pgm(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(32)]).into_owned();
    let mut fields = text.split_ascii_whitespace();
    assert_eq!(fields.next(), Some("P5"));
    let w: usize = fields.next().unwrap().parse().unwrap();
    let h: usize = fields.next().unwrap().parse().unwrap();
    assert_eq!(fields.next(), Some("255"));
    let header = format!("P5\n{w} {h}\n255\n").len();
    let pixels = bytes[header..].to_vec();
    assert_eq!(pixels.len(), w * h);
    (w, h, pixels)
}

#[test]
fn render_single_peak_and_constant_heatmaps() {
    let tmp = TempDir::new().unwrap();
    let (l, a) = (5, 7);
    let mut data = vec![0.0f32; 6 * 9];
    data[3 * 9 + 2] = 0.5;
    data[l * 9 + a] = 2.0;
    let peak = tmp.path().join("peak.hmp");
    write_heatmap(&Heatmap::from_vec(6, 9, data).unwrap(), &peak).unwrap();
    let img = tmp.path().join("peak.pgm");
    ok(&radkit(&["render", "--in", s(&peak), "--out", s(&img)]));
    let (w, h, px) = parse_pgm(&fs::read(&img).unwrap());
    assert_eq!((w, h), (9, 6));
    assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);
    assert_eq!(px[l * 9 + a], 255);

    let flat = tmp.path().join("flat.hmp");
    write_heatmap(&Heatmap::zeros(4, 3), &flat).unwrap();
    let img = tmp.path().join("flat.pgm");
    let out = radkit(&["render", "--in", s(&flat), "--out", s(&img)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let (_, _, px) = parse_pgm(&fs::read(&img).unwrap());
    assert!(px.iter().all(|&p| p == px[0]));
}

#[test]
fn augment_writes_two_reproducible_views() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), "data", 2, 1);
    let tensor = manifest.parent().unwrap().join("scene-000000.rst");
    let (a, b) = (tmp.path().join("va"), tmp.path().join("vb"));
    for out in [&a, &b] {
        ok(&radkit(&[
            "augment",
            "--in",
            s(&tensor),
            "--seed",
            "4",
            "--out",
            s(out),
        ]));
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let view = read_heatmap(a.join("view_a.hmp")).unwrap();
    assert!(view.data().iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn pretrain_with_zero_steps_writes_the_initialization() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), "data", 8, 2);
    let config = tmp.path().join("train.json");
    write(&config, &small_train_config(0, "data/manifest.json"));
    let out = tmp.path().join("run");
    ok(&radkit(&["pretrain", "--config", s(&config), "--out", s(&out)]));
    let init = fs::read(out.join("init.ckpt")).unwrap();
    assert_eq!(fs::read(out.join("final.ckpt")).unwrap(), init);
    assert!(fs::read(out.join("metrics.jsonl")).unwrap().is_empty());

    let cfg: radkit::TrainConfig = serde_json::from_value(small_train_config(0, s(&manifest))).unwrap();
    let expect = radkit::trainer::init_params(&cfg, 144).unwrap();
    let ckpt = radkit::Checkpoint {
        params: expect,
        step: 0,
    };
    assert_eq!(init, ckpt.encode().unwrap());
}

#[test]
fn pretrain_is_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    corpus(tmp.path(), "data", 12, 3);
    let config = tmp.path().join("train.json");
    let mut cfg = small_train_config(4, "data/manifest.json");
    cfg["checkpoint_every"] = json!(2);
    write(&config, &cfg);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&radkit_env(
        &["pretrain", "--config", s(&config), "--out", s(&a)],
        &[("RADKIT_THREADS", "1")],
    ));
    ok(&radkit_env(
        &["pretrain", "--config", s(&config), "--out", s(&b)],
        &[("RADKIT_THREADS", "3")],
    ));
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "config.json",
            "final.ckpt",
            "init.ckpt",
            "metrics.jsonl",
            "step-000002.ckpt"
        ]
    );
    let log = String::from_utf8(files[3].1.clone()).unwrap();
    assert_eq!(log.lines().count(), 4);
    for line in log.lines() {
        let entry: Value = serde_json::from_str(line).unwrap();
        assert!(entry["l_total"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn bad_thread_count_and_bad_config_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let out = radkit_env(
        &["gen-scenes", "--count", "1", "--out", s(tmp.path())],
        &[("RADKIT_THREADS", "zero")],
    );
    assert_eq!(out.status.code(), Some(2));

    let config = tmp.path().join("bad.json");
    fs::write(&config, "{ not json").unwrap();
    let out = radkit(&["pretrain", "--config", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    write(&config, &json!({"steps": 1, "lr_base": -1.0, "dataset_path": "x"}));
    let out = radkit(&["pretrain", "--config", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn probe_with_missing_checkpoint_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("probe.json");
    write(
        &config,
        &json!({"checkpoint": "absent.ckpt", "train": "t/manifest.json", "test": "t/manifest.json"}),
    );
    let out = radkit(&["probe", "--config", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn probe_sweep_and_retrieval_run_end_to_end() {
    let tmp = TempDir::new().unwrap();
    corpus(tmp.path(), "train", 40, 4);
    corpus(tmp.path(), "test", 16, 5);
    let train_cfg = tmp.path().join("train.json");
    write(&train_cfg, &small_train_config(3, "train/manifest.json"));
    ok(&radkit(&[
        "pretrain",
        "--config",
        s(&train_cfg),
        "--out",
        s(&tmp.path().join("run")),
    ]));

    let probe_cfg = tmp.path().join("probe.json");
    write(
        &probe_cfg,
        &json!({"checkpoint": "run/final.ckpt", "train": "train/manifest.json", "test": "test/manifest.json"}),
    );
    let out = tmp.path().join("probe");
    ok(&radkit(&["probe", "--config", s(&probe_cfg), "--out", s(&out)]));
    let report = read(&out.join("probe.json"));
    assert!(report["rmse"].as_f64().unwrap() > 0.0);
    // frames whose scatterers all dropped out carry no label
    let n_test = report["n_test"].as_u64().unwrap();
    assert!((12..=16).contains(&n_test), "{n_test}");

    let sweep_cfg = tmp.path().join("sweep.json");
    write(
        &sweep_cfg,
        &json!({
            "checkpoint": "run/final.ckpt",
            "baseline": "run/init.ckpt",
            "train": "train/manifest.json",
            "test": "test/manifest.json",
            "fractions": [0.25, 1.0],
        }),
    );
    let out = tmp.path().join("sweep");
    ok(&radkit(&["sweep-labels", "--config", s(&sweep_cfg), "--out", s(&out)]));
    let rows = read(&out.join("sweep.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["rmse_pretrained"], report["rmse"]);

    let retrieval_cfg = tmp.path().join("retrieval.json");
    write(
        &retrieval_cfg,
        &json!({"checkpoint": "run/final.ckpt", "dataset": "test/manifest.json", "k": 16}),
    );
    let out = tmp.path().join("retrieval");
    ok(&radkit(&["retrieval", "--config", s(&retrieval_cfg), "--out", s(&out)]));
    let report = read(&out.join("retrieval.json"));
    assert_eq!(report["frames"], json!(16));
    assert_eq!(report["view_to_view"], json!(1.0));
    assert_eq!(report["radar_to_oracle"], json!(1.0));
}

#[test]
fn eval_det_reproduces_the_hand_worked_example() {
    let tmp = TempDir::new().unwrap();
    let unit = |x: f64| json!({"cx": x, "cy": 10.0, "length": 2.0, "width": 2.0, "yaw": 0.0});
    let gts = json!([{"frame_id": "a", "box": unit(0.0)}, {"frame_id": "b", "box": unit(0.0)}]);
    let with_score = |x: f64, score: f64| {
        let mut b = unit(x);
        b["score"] = json!(score);
        b
    };
    let dets = json!([
        {"frame_id": "a", "box": with_score(0.0, 0.9)},
        {"frame_id": "a", "box": with_score(50.0, 0.8)},
        {"frame_id": "b", "box": with_score(0.0, 0.7)},
    ]);
    write(&tmp.path().join("dets.json"), &dets);
    write(&tmp.path().join("gts.json"), &gts);
    let config = tmp.path().join("eval.json");
    write(&config, &json!({"detections": "dets.json", "ground_truth": "gts.json"}));
    let out = tmp.path().join("o");
    ok(&radkit(&["eval-det", "--config", s(&config), "--out", s(&out)]));
    let report = read(&out.join("detection.json"));
    assert!((report["ap50"].as_f64().unwrap() - 0.8350).abs() < 1e-4, "{report}");
    assert_eq!(report["num_gt"], json!(2));
}
