//! Synthetic dataset writer: scenes, trajectories and rendered frame pairs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::camera::LightRig;
use super::raymarch::{render_frame_with, Frame, RenderSettings};
use super::scene::{build_scene, SceneConfig};
use super::trajectory::{sample_trajectory, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::io::image::write_intensity;
use crate::io::manifest::{Manifest, ManifestEntry, ManifestPose};
use crate::io::pfm::write_pfm;
use crate::par::Exec;
use crate::seed::derive_seed;

pub const DATASET_CONFIG_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub count: usize,
    pub seed: u64,
    pub frames_per_scene: usize,
    pub scene: SceneConfig,
    pub camera: TrajectoryConfig,
    pub lights: LightRig,
    pub supersample: bool,
    /// Intensity file extension: "png" or "pgm".
    pub image_format: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 200,
            seed: 0,
            frames_per_scene: 1,
            scene: SceneConfig::default(),
            camera: TrajectoryConfig::default(),
            lights: LightRig::default(),
            supersample: true,
            image_format: "png".into(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.validate()?;
        self.lights.validate()?;
        if self.frames_per_scene == 0 {
            return Err(Error::Config("dataset.frames_per_scene must be >= 1".into()));
        }
        if !matches!(self.image_format.as_str(), "png" | "pgm") {
            return Err(Error::Config(format!("dataset.image_format {:?}", self.image_format)));
        }
        Ok(())
    }

    pub fn scene_seed(&self, scene_id: u64) -> u64 {
        derive_seed(self.seed, &[1, scene_id])
    }
}

/// Render frame `index` of the dataset; deterministic in (config, index).
pub fn render_dataset_frame(config: &DatasetConfig, index: usize, exec: Exec) -> Result<Frame> {
    let scene_id = (index / config.frames_per_scene) as u64;
    let scene_seed = config.scene_seed(scene_id);
    let scene = build_scene(scene_seed, &config.scene)?;
    let first = scene_id as usize * config.frames_per_scene;
    let in_scene = (config.count - first).min(config.frames_per_scene);
    let poses = sample_trajectory(&scene, in_scene, derive_seed(config.seed, &[2, scene_id]), &config.camera)?;
    let pose = poses[index - first];
    let settings = RenderSettings {
        supersample: config.supersample,
    };
    let mut frame = render_frame_with(&scene, &pose, &config.lights, settings, exec)?;
    frame.meta.scene_id = scene_id;
    frame.meta.seed = scene_seed;
    Ok(frame)
}

pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:05}")
}

/// Render `config.count` frames into `out`, writing the manifest last.
pub fn generate_dataset(config: &DatasetConfig, out: &Path, exec: Exec) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::Dataset {
        message: format!("cannot create {}: {e}", out.display()),
        completed: 0,
    })?;
    let cfg_path = out.join(DATASET_CONFIG_FILE);
    let mut cfg_bytes = serde_json::to_vec_pretty(config)?;
    cfg_bytes.push(b'\n');
    fs::write(&cfg_path, cfg_bytes).map_err(|e| Error::Dataset {
        message: format!("{}: {e}", cfg_path.display()),
        completed: 0,
    })?;

    let mut entries = Vec::with_capacity(config.count);
    const CHUNK: usize = 32;
    let mut start = 0;
    while start < config.count {
        let end = (start + CHUNK).min(config.count);
        // frames render in parallel; pixels within a frame stay sequential
        let frames = exec.try_map_range(end - start, |k| {
            render_dataset_frame(config, start + k, Exec::Sequential)
        })?;
        for (k, frame) in frames.iter().enumerate() {
            let index = start + k;
            let stem = frame_stem(index);
            let image = format!("{stem}.{}", config.image_format);
            let depth = format!("{stem}.pfm");
            let wrap = |e: Error| Error::Dataset {
                message: e.to_string(),
                completed: index,
            };
            write_intensity(&out.join(&image), frame.width, frame.height, &frame.intensity).map_err(wrap)?;
            write_pfm(&out.join(&depth), frame.width, frame.height, &frame.depth).map_err(wrap)?;
            entries.push(ManifestEntry {
                image,
                depth,
                seed: frame.meta.seed,
                pose: ManifestPose::from_pose(&frame.pose),
                scene_id: frame.meta.scene_id,
            });
        }
        log::info!("rendered {end}/{} frames", config.count);
        start = end;
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.write().map_err(|e| Error::Dataset {
        message: e.to_string(),
        completed: config.count,
    })?;
    Ok(manifest)
}

pub fn load_dataset_config(dir: &Path) -> Result<DatasetConfig> {
    let p = dir.join(DATASET_CONFIG_FILE);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
