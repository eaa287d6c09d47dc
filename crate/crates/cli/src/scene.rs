//! Immutable scenes loaded into the service.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use lensdof_core::io::DepthEncoding;
use lensdof_core::LensParams;
use serde::{Deserialize, Serialize};

use crate::frame::{Frame, FrameError};

/// One image of a load request.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSource {
    pub image: PathBuf,
    pub depth: PathBuf,
    #[serde(default)]
    pub fitted: Option<LensParams>,
}

/// Body of `POST /scenes`: a scene directory or an explicit frame list.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRequest {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub scene_dir: Option<PathBuf>,
    #[serde(default)]
    pub frames: Option<Vec<FrameSource>>,
    /// Depth range of 16-bit PNG depth maps.
    #[serde(default)]
    pub depth_encoding: Option<DepthEncoding>,
}

pub struct Scene {
    pub id: String,
    pub name: String,
    frames: Vec<Frame>,
    fitted: Vec<Option<LensParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub index: usize,
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    pub fitted: Option<LensParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub id: String,
    pub name: String,
    pub frames: Vec<FrameSummary>,
}

/// `<dir>/images/*.png` with matching `<dir>/depth/<stem>.pfm`, sorted by stem.
pub fn scene_dir_sources(dir: &Path) -> Result<Vec<FrameSource>, FrameError> {
    let images = dir.join("images");
    let listing = std::fs::read_dir(&images)
        .map_err(|e| FrameError::Invalid(format!("{}: {e}", images.display())))?;
    let mut paths: Vec<PathBuf> = listing
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(FrameError::Invalid(format!(
            "{} holds no PNG images",
            images.display()
        )));
    }
    Ok(paths
        .into_iter()
        .map(|image| {
            let stem = image.file_stem().unwrap_or_default().to_os_string();
            let depth = dir.join("depth").join(stem).with_extension("pfm");
            FrameSource {
                image,
                depth,
                fitted: None,
            }
        })
        .collect())
}

impl Scene {
    pub fn load(id: String, req: &LoadRequest) -> Result<Self, FrameError> {
        let sources = match (&req.scene_dir, &req.frames) {
            (Some(dir), None) => scene_dir_sources(dir)?,
            (None, Some(frames)) if !frames.is_empty() => frames.clone(),
            (None, Some(_)) => return Err(FrameError::Invalid("frames must not be empty".into())),
            _ => {
                return Err(FrameError::Invalid(
                    "give exactly one of scene_dir or frames".into(),
                ))
            }
        };
        let mut frames = Vec::with_capacity(sources.len());
        let mut fitted = Vec::with_capacity(sources.len());
        for src in &sources {
            if let Some(lens) = &src.fitted {
                lens.validate()?;
            }
            frames.push(Frame::load(
                &src.image,
                &src.depth,
                req.depth_encoding.as_ref(),
            )?);
            fitted.push(src.fitted);
        }
        let name = req
            .name
            .clone()
            .or_else(|| {
                req.scene_dir
                    .as_ref()
                    .and_then(|d| d.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| id.clone());
        Ok(Self {
            id,
            name,
            frames,
            fitted,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Result<&Frame, FrameError> {
        self.frames.get(index).ok_or_else(|| {
            FrameError::Invalid(format!(
                "image index {index} out of range (scene has {})",
                self.frames.len()
            ))
        })
    }

    pub fn summary(&self) -> SceneSummary {
        let frames = self
            .frames
            .iter()
            .zip(&self.fitted)
            .enumerate()
            .map(|(index, (f, fitted))| {
                let range = f.depth().disparity_range();
                FrameSummary {
                    index,
                    name: f.name.clone(),
                    width: f.width(),
                    height: f.height(),
                    near: range.near,
                    far: range.far,
                    fitted: *fitted,
                }
            })
            .collect();
        SceneSummary {
            id: self.id.clone(),
            name: self.name.clone(),
            frames,
        }
    }
}

/// Scenes by id. Scenes never change after insertion.
#[derive(Default)]
pub struct SceneStore {
    next_id: AtomicU64,
    scenes: RwLock<BTreeMap<String, Arc<Scene>>>,
}

impl SceneStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&self, req: &LoadRequest) -> Result<Arc<Scene>, FrameError> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        let scene = Arc::new(Scene::load(id.clone(), req)?);
        self.scenes
            .write()
            .expect("scene store poisoned")
            .insert(id, scene.clone());
        Ok(scene)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Scene>> {
        self.scenes
            .read()
            .expect("scene store poisoned")
            .get(id)
            .cloned()
    }

    pub fn list(&self) -> Vec<SceneSummary> {
        self.scenes
            .read()
            .expect("scene store poisoned")
            .values()
            .map(|s| s.summary())
            .collect()
    }
}
