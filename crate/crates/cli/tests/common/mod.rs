#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lensdof_core::dataset::write_scene;
use lensdof_core::synthetic::{generate, SceneSpec};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lensdof"))
}

/// Runs the binary, panicking with its stderr when it fails.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn lensdof");
    assert!(
        out.status.success(),
        "lensdof {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A procedural scene directory with `frames` images.
pub fn scene_dir(root: &Path, frames: usize, size: usize, seed: u64) -> PathBuf {
    let dir = root.join("scene");
    let frames: Vec<_> = (0..frames)
        .map(|i| {
            let (color, depth) = generate(&SceneSpec::new(size, size, seed + i as u64));
            (format!("frame_{i:03}"), color, depth)
        })
        .collect();
    write_scene(&dir, &frames).unwrap();
    dir
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
