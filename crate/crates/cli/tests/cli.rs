mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use common::{bin, run_ok, s, scene_dir};
use http_body_util::BodyExt;
use lensdof_cli::{router, SceneStore};
use lensdof_core::dataset::{DatasetManifest, MANIFEST_FILE};
use lensdof_core::io;
use lensdof_core::optics::shape_mask;
use lensdof_core::synthetic::{generate, SceneSpec};
use lensdof_core::{CocProfile, CocShape, DefocusRenderer, DepthMap, GammaSpec, Image, LensParams};
use serde_json::Value;
use tower::ServiceExt;

fn frame_paths(dir: &Path, i: usize) -> (String, String) {
    (
        dir.join(format!("images/frame_{i:03}.png"))
            .to_string_lossy()
            .into_owned(),
        dir.join(format!("depth/frame_{i:03}.pfm"))
            .to_string_lossy()
            .into_owned(),
    )
}

#[test]
fn zero_aperture_reproduces_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 40, 4);
    let (image, depth) = frame_paths(&dir, 0);
    let out = tmp.path().join("out.png");
    run_ok(&[
        "render",
        "--image",
        &image,
        "--depth",
        &depth,
        "--aperture",
        "0",
        "--focus",
        "0.6",
        "--out",
        s(&out),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&image).unwrap());
}

#[test]
fn hexagon_shapes_a_point_light() {
    let tmp = tempfile::tempdir().unwrap();
    let n = 64;
    let (cx, cy) = (32usize, 32usize);
    let mut card = Image::filled(n, n, [0.0; 3]);
    card.set_pixel(cx, cy, [1.0; 3]);
    let depth = DepthMap::new(n, n, vec![3.0; n * n]).unwrap();
    let (image, depth_path) = (tmp.path().join("card.png"), tmp.path().join("card.pfm"));
    io::write_png(&image, &card).unwrap();
    io::write_pfm(&depth_path, &depth).unwrap();
    let out = tmp.path().join("hex.png");
    run_ok(&[
        "render",
        "--image",
        s(&image),
        "--depth",
        s(&depth_path),
        "--aperture",
        "0.5",
        "--focus",
        "0.5",
        "--shape",
        "hexagon",
        "--rotation",
        "0.2",
        "--out",
        s(&out),
    ]);
    let rendered = io::read_png(&out).unwrap();
    // flat depth sits at disparity 1
    let r = n as f64 * 0.5 * 0.5;
    let profile = CocProfile {
        shape: CocShape::Hexagon,
        shape_rotation: 0.2,
        ..CocProfile::default()
    };
    let (mut lit, mut outside_circle_hex) = (0, 0);
    for y in 0..n {
        for x in 0..n {
            let offset = [x as f64 - cx as f64, y as f64 - cy as f64];
            let on = rendered.pixel(x, y)[0] > 0.0;
            if on {
                lit += 1;
                assert!(
                    shape_mask(&profile, offset, r),
                    "({x}, {y}) lit outside the hexagon"
                );
            }
            if shape_mask(&profile, offset, r - 2.0) {
                assert!(on, "({x}, {y}) dark inside the hexagon");
            }
            let d = (offset[0] * offset[0] + offset[1] * offset[1]).sqrt();
            if d < r - 1.0 && !shape_mask(&profile, offset, r) {
                outside_circle_hex += 1;
            }
        }
    }
    assert!(lit > 100);
    // the highlight is not a disk: parts of the inscribed circle's annulus stay dark
    assert!(outside_circle_hex > 0);
}

#[test]
fn grid_render_matches_dataset_synthesis() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 2, 32, 8);
    let ds = tmp.path().join("ds");
    run_ok(&["dataset", "synth", "--scene", s(&dir), "--out", s(&ds)]);
    let (image, depth) = frame_paths(&dir, 1);
    let grid = tmp.path().join("grid");
    run_ok(&[
        "render",
        "--grid",
        "--image",
        &image,
        "--depth",
        &depth,
        "--out",
        s(&grid),
    ]);
    for k in 0..6 {
        let name = format!("frame_001__p{k}.png");
        assert_eq!(
            std::fs::read(grid.join(&name)).unwrap(),
            std::fs::read(ds.join("images").join(&name)).unwrap(),
            "{name}"
        );
    }
    assert!(!grid.join("frame_001__p6.png").exists());
}

#[test]
fn focus_pixel_matches_focus_value() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 32, 2);
    let (image, depth) = frame_paths(&dir, 0);
    let (a, b) = (tmp.path().join("a.png"), tmp.path().join("b.png"));
    run_ok(&[
        "render",
        "--image",
        &image,
        "--depth",
        &depth,
        "--aperture",
        "0.9",
        "--focus-pixel",
        "10,20",
        "--out",
        s(&a),
    ]);
    let d = io::read_pfm(Path::new(&depth)).unwrap();
    let rho = d.normalized_disparity()[20 * 32 + 10].max(lensdof_cli::frame::MIN_FOCUS);
    run_ok(&[
        "render",
        "--image",
        &image,
        "--depth",
        &depth,
        "--aperture",
        "0.9",
        "--focus",
        &rho.to_string(),
        "--out",
        s(&b),
    ]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cli_and_http_produce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 2, 32, 21);
    let (image, depth) = frame_paths(&dir, 1);
    let out = tmp.path().join("cli.png");
    run_ok(&[
        "render",
        "--image",
        &image,
        "--depth",
        &depth,
        "--aperture",
        "0.7",
        "--focus",
        "0.35",
        "--shape",
        "pentagon",
        "--rotation",
        "0.4",
        "--alpha",
        "3",
        "--gamma",
        "2.0",
        "--adaptation",
        "--out",
        s(&out),
    ]);
    let app = router(Arc::new(SceneStore::new()));
    let load = serde_json::json!({ "scene_dir": dir }).to_string();
    let res = app
        .clone()
        .oneshot(Request::post("/scenes").body(Body::from(load)).unwrap())
        .await
        .unwrap();
    assert!(res.status().is_success());
    let req = serde_json::json!({
        "image": 1, "aperture": 0.7, "focus": 0.35, "shape": "pentagon", "rotation": 0.4,
        "alpha": 3.0, "gamma": 2.0, "adaptation": true,
    });
    let res = app
        .oneshot(
            Request::post("/scenes/s1/render")
                .body(Body::from(req.to_string()))
                .unwrap(),
        )
        .await
        .unwrap();
    assert!(res.status().is_success());
    let png = res.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(png.as_ref(), std::fs::read(out).unwrap().as_slice());
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    [base, extra].concat()
}

#[test]
fn render_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 16, 2);
    let (image, depth) = frame_paths(&dir, 0);
    let out = tmp.path().join("x.png");
    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    let base = [
        "render",
        "--image",
        image.as_str(),
        "--depth",
        depth.as_str(),
        "--out",
        s(&out),
    ];
    assert_eq!(
        status(&with(
            &base,
            &[
                "--aperture",
                "0.5",
                "--focus",
                "0.5",
                "--focus-pixel",
                "1,1"
            ]
        )),
        Some(2)
    );
    assert_eq!(status(&with(&base, &["--aperture", "0.5"])), Some(2));
    assert_eq!(
        status(&with(
            &base,
            &["--aperture", "0.5", "--focus", "0.5", "--shape", "star"]
        )),
        Some(2)
    );
    assert_eq!(
        status(&with(&base, &["--aperture", "-0.5", "--focus", "0.5"])),
        Some(1)
    );
    assert_eq!(
        status(&with(&base, &["--aperture", "0.5", "--focus", "1.5"])),
        Some(1)
    );
    assert_eq!(
        status(&with(
            &base,
            &["--aperture", "0.5", "--focus-pixel", "16,0"]
        )),
        Some(1)
    );
    let missing = [
        "render",
        "--image",
        "/nonexistent.png",
        "--depth",
        depth.as_str(),
        "--aperture",
        "0",
        "--focus",
        "0.5",
        "--out",
        s(&out),
    ];
    let res = bin().args(missing).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonexistent.png"));
    assert!(!out.exists());
}

/// A 40x40 observation rendered with a known lens.
fn closed_loop_fixture(root: &Path, lens: LensParams) -> (String, String, String) {
    let (color, depth) = generate(&SceneSpec::new(40, 40, 2));
    let sharp = root.join("sharp.png");
    let depth_path = root.join("depth.pfm");
    io::write_png(&sharp, &color).unwrap();
    io::write_pfm(&depth_path, &depth).unwrap();
    let color = io::read_png(&sharp).unwrap();
    let renderer = DefocusRenderer::new(
        &color,
        &depth,
        &CocProfile::default(),
        &GammaSpec::default(),
    )
    .unwrap();
    let observed = root.join("observed.png");
    io::write_png(&observed, &renderer.render(&lens).unwrap().image).unwrap();
    (s(&sharp).into(), s(&depth_path).into(), s(&observed).into())
}

#[test]
fn fit_recovers_the_lens_and_writes_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let (sharp, depth, observed) = closed_loop_fixture(
        tmp.path(),
        LensParams {
            aperture: 0.5,
            focus: 0.5,
        },
    );
    let (trace, fitted) = (tmp.path().join("trace.jsonl"), tmp.path().join("fit.json"));
    run_ok(&[
        "fit",
        "--sharp",
        &sharp,
        "--depth",
        &depth,
        "--observed",
        &observed,
        "--trace-out",
        s(&trace),
        "--out",
        s(&fitted),
    ]);
    let v: Value = serde_json::from_slice(&std::fs::read(&fitted).unwrap()).unwrap();
    let (a, f) = (
        v["aperture"].as_f64().unwrap(),
        v["focus"].as_f64().unwrap(),
    );
    assert!(
        (a - 0.5).abs() < 0.05 && (f - 0.5).abs() < 0.02,
        "fitted {a} {f}"
    );
    let lines: Vec<Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, v["iterations"].as_u64().unwrap());
    assert_eq!(lines[0]["iteration"], 0);
    assert!(lines
        .iter()
        .all(|l| l["loss"].is_f64() && l["aperture"].is_f64() && l["focus"].is_f64()));
}

#[test]
fn fit_of_a_sharp_observation_closes_the_aperture() {
    let tmp = tempfile::tempdir().unwrap();
    let (sharp, depth, _) = closed_loop_fixture(
        tmp.path(),
        LensParams {
            aperture: 0.0,
            focus: 0.5,
        },
    );
    let out = run_ok(&[
        "fit",
        "--sharp",
        &sharp,
        "--depth",
        &depth,
        "--observed",
        &sharp,
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["aperture"].as_f64().unwrap() < 0.02, "{v}");
}

#[test]
fn malformed_fit_config_exits_2_with_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (sharp, depth, _) = closed_loop_fixture(
        tmp.path(),
        LensParams {
            aperture: 0.0,
            focus: 0.5,
        },
    );
    let cases = [
        (r#"{"lr_focus": "fast"}"#, "lr_focus"),
        (r#"{"profile": {"alpha": []}}"#, "profile.alpha"),
        (r#"{"max_iter": 10}"#, "max_iter"),
        (r#"{"lambda_rec": 3.0}"#, "lambda_rec"),
        (r#"{"init_focus": 0.0}"#, "init_focus"),
        ("{", "EOF"),
    ];
    for (text, field) in cases {
        let cfg = tmp.path().join("cfg.json");
        std::fs::write(&cfg, text).unwrap();
        let res = bin()
            .args([
                "fit",
                "--sharp",
                &sharp,
                "--depth",
                &depth,
                "--observed",
                &sharp,
                "--config",
                s(&cfg),
            ])
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(field), "{text}: {err}");
    }
    // a valid partial config is accepted
    let cfg = tmp.path().join("ok.json");
    std::fs::write(&cfg, r#"{"max_iters": 5, "adaptation": false}"#).unwrap();
    let out = run_ok(&[
        "fit",
        "--sharp",
        &sharp,
        "--depth",
        &depth,
        "--observed",
        &sharp,
        "--config",
        s(&cfg),
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["iterations"], 5);
}

fn gt_results(manifest: &DatasetManifest) -> Value {
    let results: Vec<Value> = manifest
        .entries
        .iter()
        .map(|e| serde_json::json!({ "image": e.image, "aperture": e.gt_aperture, "focus": e.gt_focus }))
        .collect();
    serde_json::json!({ "results": results })
}

#[test]
fn dataset_synth_and_eval_of_perfect_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 9, 24, 30);
    let ds = tmp.path().join("ds");
    run_ok(&["dataset", "synth", "--scene", s(&dir), "--out", s(&ds)]);
    let manifest_path = ds.join(MANIFEST_FILE);
    let manifest = DatasetManifest::read(&manifest_path).unwrap();
    assert_eq!(manifest.presets.len(), 6);
    assert_eq!(manifest.entries.len(), 9 * 6);
    for src in &manifest.sources {
        assert_eq!(
            manifest
                .entries
                .iter()
                .filter(|e| e.source == src.name)
                .count(),
            6
        );
    }

    let results = tmp.path().join("gt.json");
    std::fs::write(&results, gt_results(&manifest).to_string()).unwrap();
    let missing = bin()
        .args([
            "dataset",
            "eval",
            "--manifest",
            s(&manifest_path),
            "--results",
            s(&results),
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing test render"));

    let report_path = tmp.path().join("report.json");
    let out = run_ok(&[
        "dataset",
        "eval",
        "--manifest",
        s(&manifest_path),
        "--results",
        s(&results),
        "--render-missing",
        "--json-out",
        s(&report_path),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(std::fs::read(&report_path).unwrap(), out.stdout);
    assert_eq!(report["mean"]["delta_aperture"], 0.0);
    assert_eq!(report["mean"]["delta_focus"], 0.0);
    assert_eq!(report["mean"]["psnr"], 100.0);
    assert_eq!(report["mean"]["ssim"], 1.0);
    let table = String::from_utf8_lossy(&out.stderr);
    assert!(table.contains("PSNR") && table.contains("mean"), "{table}");
}

#[test]
fn dataset_fit_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 24, 5);
    let ds = tmp.path().join("ds");
    run_ok(&[
        "dataset",
        "synth",
        "--scene",
        s(&dir),
        "--out",
        s(&ds),
        "--apertures",
        "0.6",
        "--focuses",
        "0.5",
    ]);
    let manifest = ds.join(MANIFEST_FILE);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_iters": 20}"#).unwrap();
    let results = tmp.path().join("fit/results.json");
    run_ok(&[
        "dataset",
        "fit",
        "--manifest",
        s(&manifest),
        "--config",
        s(&cfg),
        "--split",
        "test",
        "--out",
        s(&results),
    ]);
    let file: Value = serde_json::from_slice(&std::fs::read(&results).unwrap()).unwrap();
    let entries = file["results"].as_array().unwrap();
    assert_eq!(entries.len(), 1);
    let render = entries[0]["render"].as_str().unwrap();
    assert!(tmp.path().join("fit").join(render).is_file());
    let out = run_ok(&[
        "dataset",
        "eval",
        "--manifest",
        s(&manifest),
        "--results",
        s(&results),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mean"]["psnr"].as_f64().unwrap() > 10.0);
}

#[test]
fn eval_argument_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 16, 5);
    let ds = tmp.path().join("ds");
    run_ok(&["dataset", "synth", "--scene", s(&dir), "--out", s(&ds)]);
    let manifest = ds.join(MANIFEST_FILE);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"results": [{"image": "x", "aperture": 0.5}]}"#).unwrap();
    let res = bin()
        .args([
            "dataset",
            "eval",
            "--manifest",
            s(&manifest),
            "--results",
            s(&bad),
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("results[0]"));
    let res = bin()
        .args([
            "dataset",
            "eval",
            "--manifest",
            s(&manifest),
            "--manifest",
            s(&manifest),
            "--results",
            s(&bad),
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    let res = bin()
        .args([
            "dataset",
            "synth",
            "--scene",
            s(&tmp.path().join("none")),
            "--out",
            s(&ds),
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn align_depth_prints_the_log_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let (w, h) = (6, 5);
    let sparse_depth =
        DepthMap::from_fn(w, h, |x, y| 1.0 + 0.5 * x as f64 + 0.25 * y as f64).unwrap();
    let pred = sparse_depth.scaled(2.0).unwrap();
    let pred_path = tmp.path().join("pred.pfm");
    io::write_pfm(&pred_path, &pred).unwrap();
    let mut csv = String::from("x,y,depth\n");
    for (x, y) in [(0, 0), (5, 1), (2, 4), (3, 3), (1, 2)] {
        csv.push_str(&format!("{x},{y},{}\n", sparse_depth.at(x, y)));
    }
    let sparse = tmp.path().join("sparse.csv");
    std::fs::write(&sparse, csv).unwrap();
    let aligned = tmp.path().join("aligned.pfm");
    let out = run_ok(&[
        "align-depth",
        "--pred",
        s(&pred_path),
        "--sparse",
        s(&sparse),
        "--out",
        s(&aligned),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next() == Some("s* = -0.693147"), "{text}");
    let aligned = io::read_pfm(&aligned).unwrap();
    for (a, b) in aligned.values().iter().zip(sparse_depth.values()) {
        assert!((a - b).abs() < 1e-5);
    }
    let one = tmp.path().join("one.csv");
    std::fs::write(&one, "0,0,1.0\n").unwrap();
    let res = bin()
        .args(["align-depth", "--pred", s(&pred_path), "--sparse", s(&one)])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn scene_gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&[
            "scene",
            "gen",
            "--out",
            s(dir),
            "--frames",
            "2",
            "--width",
            "20",
            "--height",
            "12",
            "--seed",
            "9",
        ]);
    }
    for rel in ["images/frame_001.png", "depth/frame_001.pfm"] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap()
        );
    }
    let img = io::read_png(&a.join("images/frame_000.png")).unwrap();
    assert_eq!((img.width(), img.height()), (20, 12));
    assert_eq!(
        bin()
            .args(["scene", "gen", "--out", s(&a), "--frames", "0"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path(), 1, 48, 13);
    let (image, depth) = frame_paths(&dir, 0);
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|t| {
            let out = tmp.path().join(format!("t{t}.png"));
            run_ok(&[
                "--threads",
                t,
                "render",
                "--image",
                &image,
                "--depth",
                &depth,
                "--aperture",
                "1",
                "--focus",
                "0.3",
                "--out",
                s(&out),
            ]);
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(
        bin()
            .args(["--threads", "0", "scene", "gen", "--out", s(tmp.path())])
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn serve_binds_the_env_address() {
    use std::io::{Read, Write};
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = bin()
        .arg("serve")
        .env("LENSDOF_ADDR", &addr)
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut reply = String::new();
    for _ in 0..100 {
        if let Ok(mut stream) = std::net::TcpStream::connect(&addr) {
            stream
                .write_all(b"GET /scenes HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
                .unwrap();
            stream.read_to_string(&mut reply).unwrap();
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.ends_with("[]"), "{reply}");
}
