//! Shallow depth-of-field dataset synthesis and refocus evaluation.
//!
//! Input scenes follow `<scene>/images/*.png` with depth in
//! `<scene>/depth/<stem>.pfm`. Synthesis copies the all-in-focus inputs, renders
//! every image under every lens preset and writes `manifest.json` describing
//! what was produced. Paths inside the manifest are relative to its directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{lens_error, LensError};
use crate::image::{DepthMap, DisparityRange, Image};
use crate::io;
use crate::metrics::{psnr, ssim, SsimConfig};
use crate::optics::{CocProfile, GammaSpec, LensParams};
use crate::par;
use crate::render::DefocusRenderer;

pub const MANIFEST_VERSION: &str = "lensdof-manifest/1";
pub const RENDERER_TAG: &str = concat!("lensdof-scatter/", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
/// Every `TEST_EVERY`-th source image (starting with the first) is held out.
pub const TEST_EVERY: usize = 8;
/// PSNR recorded for pixel-identical renders, so reports stay finite.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Focus presets: background, mid-ground, foreground.
pub const DEFAULT_FOCUS_PRESETS: [f64; 3] = [0.2, 0.5, 0.8];
pub const DEFAULT_APERTURE_PRESETS: [f64; 2] = [0.5, 1.0];

/// The default preset grid, aperture-major.
pub fn default_presets() -> Vec<LensParams> {
    preset_grid(&DEFAULT_APERTURE_PRESETS, &DEFAULT_FOCUS_PRESETS).expect("valid defaults")
}

pub fn preset_grid(apertures: &[f64], focuses: &[f64]) -> Result<Vec<LensParams>> {
    let mut out = Vec::with_capacity(apertures.len() * focuses.len());
    for &a in apertures {
        for &f in focuses {
            out.push(LensParams::new(a, f)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub name: String,
    pub sharp: String,
    pub depth: String,
    pub width: usize,
    pub height: usize,
    pub disparity_range: DisparityRange,
    /// Aperture pixel scale (the longest side).
    pub px_scale: f64,
    pub split: Split,
    /// Preset a multi-view trainer should use for this view (round robin).
    pub assigned_preset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    pub source: String,
    pub depth: String,
    pub split: Split,
    pub preset: usize,
    pub gt_aperture: f64,
    pub gt_focus: f64,
}

impl ManifestEntry {
    pub fn gt(&self) -> LensParams {
        LensParams {
            aperture: self.gt_aperture,
            focus: self.gt_focus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: String,
    pub scene: String,
    pub renderer: String,
    pub aperture_normalization: String,
    pub disparity_normalization: String,
    pub preset_assignment: String,
    pub test_every: usize,
    pub profile: CocProfile,
    pub gamma: GammaSpec,
    pub presets: Vec<LensParams>,
    pub sources: Vec<SourceEntry>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::domain(format!(
                "unsupported manifest version `{}` (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest = Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let referenced = manifest
            .sources
            .iter()
            .flat_map(|s| [&s.sharp, &s.depth])
            .chain(manifest.entries.iter().map(|e| &e.image));
        for rel in referenced {
            if !base.join(rel).is_file() {
                return Err(Error::Missing {
                    what: "manifest file",
                    name: rel.clone(),
                });
            }
        }
        Ok(manifest)
    }

    pub fn test_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Test)
    }

    pub fn source(&self, name: &str) -> Option<&SourceEntry> {
        self.sources.iter().find(|s| s.name == name)
    }
}

fn relative(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

/// All-in-focus image stems in `<scene>/images`, sorted.
fn list_sources(scene_dir: &Path) -> Result<Vec<String>> {
    let images = scene_dir.join("images");
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(&images).map_err(|e| Error::io(&images, e))? {
        let path = entry.map_err(|e| Error::io(&images, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Missing {
            what: "scene images",
            name: relative(&images),
        });
    }
    Ok(stems)
}

/// Preset output file for a source image.
pub fn variant_name(stem: &str, preset: usize) -> String {
    format!("{stem}__p{preset}.png")
}

/// Renders every source image under every preset into `out_dir` and writes
/// the manifest there. The result depends only on the inputs.
pub fn synthesize_dataset(
    scene_dir: &Path,
    presets: &[LensParams],
    profile: &CocProfile,
    gamma: &GammaSpec,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if presets.is_empty() {
        return Err(Error::domain("at least one lens preset is required"));
    }
    for p in presets {
        p.validate()?;
    }
    profile.validate()?;
    gamma.validate()?;
    let stems = list_sources(scene_dir)?;
    let scene = scene_dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scene".to_string());

    for sub in ["sharp", "depth", "images"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let jobs: Vec<(usize, String)> = stems.into_iter().enumerate().collect();
    let results = par::map_ordered(jobs, |(index, stem)| {
        synthesize_source(scene_dir, out_dir, index, &stem, presets, profile, gamma)
    });

    let mut sources = Vec::new();
    let mut entries = Vec::new();
    for r in results {
        let (source, mut variants) = r?;
        sources.push(source);
        entries.append(&mut variants);
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION.to_string(),
        scene,
        renderer: RENDERER_TAG.to_string(),
        aperture_normalization: "longest_side".to_string(),
        disparity_normalization: "per_image_min_max".to_string(),
        preset_assignment: "round_robin".to_string(),
        test_every: TEST_EVERY,
        profile: *profile,
        gamma: *gamma,
        presets: presets.to_vec(),
        sources,
        entries,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn synthesize_source(
    scene_dir: &Path,
    out_dir: &Path,
    index: usize,
    stem: &str,
    presets: &[LensParams],
    profile: &CocProfile,
    gamma: &GammaSpec,
) -> Result<(SourceEntry, Vec<ManifestEntry>)> {
    let image_path = scene_dir.join("images").join(format!("{stem}.png"));
    let depth_path = scene_dir.join("depth").join(format!("{stem}.pfm"));
    if !depth_path.is_file() {
        return Err(Error::Missing {
            what: "depth map",
            name: relative(&depth_path),
        });
    }
    let color = io::read_png(&image_path)?;
    let depth = io::read_pfm(&depth_path)?;
    depth.matches(&color)?;
    let renderer = DefocusRenderer::new(&color, &depth, profile, gamma)?;

    let sharp_rel = PathBuf::from("sharp").join(format!("{stem}.png"));
    let depth_rel = PathBuf::from("depth").join(format!("{stem}.pfm"));
    io::write_png(&out_dir.join(&sharp_rel), &color)?;
    io::write_pfm(&out_dir.join(&depth_rel), &depth)?;

    let split = if index.is_multiple_of(TEST_EVERY) {
        Split::Test
    } else {
        Split::Train
    };
    let mut variants = Vec::with_capacity(presets.len());
    for (k, lens) in presets.iter().enumerate() {
        let rel = PathBuf::from("images").join(variant_name(stem, k));
        let rendered = renderer.render(lens)?;
        io::write_png(&out_dir.join(&rel), &rendered.image)?;
        variants.push(ManifestEntry {
            image: relative(&rel),
            source: stem.to_string(),
            depth: relative(&depth_rel),
            split,
            preset: k,
            gt_aperture: lens.aperture,
            gt_focus: lens.focus,
        });
    }

    let source = SourceEntry {
        name: stem.to_string(),
        sharp: relative(&sharp_rel),
        depth: relative(&depth_rel),
        width: color.width(),
        height: color.height(),
        disparity_range: depth.disparity_range(),
        px_scale: renderer.px_scale(),
        split,
        assigned_preset: index % presets.len(),
    };
    Ok((source, variants))
}

/// Renders the all-in-focus input with `preset` and scores it against a
/// reference defocused image. Returns `(PSNR, SSIM)` in display space.
pub fn validate_synthesis(
    sharp: &Image,
    depth: &DepthMap,
    preset: &LensParams,
    reference: &Image,
    profile: &CocProfile,
    gamma: &GammaSpec,
) -> Result<(f64, f64)> {
    sharp.same_dims(reference, "synthesis vs reference")?;
    let rendered = DefocusRenderer::new(sharp, depth, profile, gamma)?.render(preset)?;
    let p = psnr(&rendered.image, reference, 1.0)?;
    let s = ssim(&rendered.image, reference, &SsimConfig::default())?.mean;
    Ok((p, s))
}

/// Fitted parameters (and, for test entries, a render) for one manifest entry.
#[derive(Debug, Clone)]
pub struct RefocusInput {
    /// The manifest entry's `image` path.
    pub image: String,
    pub fitted: LensParams,
    pub render: Option<Image>,
}

/// One scene's manifest and results.
pub struct SceneEval<'a> {
    pub manifest: &'a DatasetManifest,
    pub base_dir: &'a Path,
    pub results: &'a [RefocusInput],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image: String,
    pub split: Split,
    pub gt_aperture: f64,
    pub gt_focus: f64,
    pub fitted_aperture: f64,
    pub fitted_focus: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub psnr: f64,
    pub ssim: f64,
    pub delta_aperture: f64,
    pub delta_focus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: String,
    pub summary: EvalSummary,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneReport>,
    pub mean: EvalSummary,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>8} {:>8} {:>8}",
            "scene", "PSNR", "SSIM", "dA", "dF"
        );
        for s in &self.scenes {
            let m = &s.summary;
            let _ = writeln!(
                out,
                "{:<24} {:>8.3} {:>8.4} {:>8.4} {:>8.4}",
                s.scene, m.psnr, m.ssim, m.delta_aperture, m.delta_focus
            );
        }
        let m = &self.mean;
        let _ = writeln!(
            out,
            "{:<24} {:>8.3} {:>8.4} {:>8.4} {:>8.4}",
            "mean", m.psnr, m.ssim, m.delta_aperture, m.delta_focus
        );
        out
    }
}

/// Scores test renders against the manifest's test images and fitted lens
/// parameters against the ground truth.
pub fn eval_refocus(scenes: &[SceneEval]) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::domain("nothing to evaluate"));
    }
    let mut reports = Vec::with_capacity(scenes.len());
    for scene in scenes {
        reports.push(eval_scene(scene)?);
    }
    let n = reports.len() as f64;
    let mean = EvalSummary {
        psnr: reports.iter().map(|r| r.summary.psnr).sum::<f64>() / n,
        ssim: reports.iter().map(|r| r.summary.ssim).sum::<f64>() / n,
        delta_aperture: reports
            .iter()
            .map(|r| r.summary.delta_aperture)
            .sum::<f64>()
            / n,
        delta_focus: reports.iter().map(|r| r.summary.delta_focus).sum::<f64>() / n,
    };
    Ok(EvalReport {
        scenes: reports,
        mean,
    })
}

fn eval_scene(scene: &SceneEval) -> Result<SceneReport> {
    let manifest = scene.manifest;
    if manifest.test_entries().next().is_none() {
        return Err(Error::domain(format!(
            "scene `{}` has no test entries",
            manifest.scene
        )));
    }
    let by_image: HashMap<&str, &RefocusInput> = scene
        .results
        .iter()
        .map(|r| (r.image.as_str(), r))
        .collect();
    for r in scene.results {
        if !manifest.entries.iter().any(|e| e.image == r.image) {
            return Err(Error::Missing {
                what: "manifest entry",
                name: r.image.clone(),
            });
        }
    }

    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    let mut gt = Vec::new();
    let (mut psnr_sum, mut ssim_sum, mut scored) = (0.0, 0.0, 0usize);
    for entry in &manifest.entries {
        let result = by_image.get(entry.image.as_str());
        if entry.split == Split::Test && result.and_then(|r| r.render.as_ref()).is_none() {
            return Err(Error::Missing {
                what: "test render",
                name: entry.image.clone(),
            });
        }
        let Some(result) = result else { continue };
        let (mut p, mut s) = (None, None);
        if entry.split == Split::Test {
            let render = result.render.as_ref().expect("checked above");
            let observed = io::read_png(&scene.base_dir.join(&entry.image))?;
            let value = psnr(render, &observed, 1.0)?.min(PSNR_CAP_DB);
            let structural = ssim(render, &observed, &SsimConfig::default())?.mean;
            psnr_sum += value;
            ssim_sum += structural;
            scored += 1;
            p = Some(value);
            s = Some(structural);
        }
        fitted.push(result.fitted);
        gt.push(entry.gt());
        rows.push(EvalRow {
            image: entry.image.clone(),
            split: entry.split,
            gt_aperture: entry.gt_aperture,
            gt_focus: entry.gt_focus,
            fitted_aperture: result.fitted.aperture,
            fitted_focus: result.fitted.focus,
            psnr: p,
            ssim: s,
        });
    }
    let LensError {
        delta_aperture,
        delta_focus,
    } = lens_error(&fitted, &gt)?;
    Ok(SceneReport {
        scene: manifest.scene.clone(),
        summary: EvalSummary {
            psnr: psnr_sum / scored as f64,
            ssim: ssim_sum / scored as f64,
            delta_aperture,
            delta_focus,
        },
        rows,
    })
}

/// Writes a scene directory (`images/*.png`, `depth/*.pfm`) from in-memory
/// RGB-D pairs.
pub fn write_scene(dir: &Path, frames: &[(String, Image, DepthMap)]) -> Result<()> {
    for (stem, color, depth) in frames {
        depth.matches(color)?;
        io::write_png(&dir.join("images").join(format!("{stem}.png")), color)?;
        io::write_pfm(&dir.join("depth").join(format!("{stem}.pfm")), depth)?;
    }
    Ok(())
}
