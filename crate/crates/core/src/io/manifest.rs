use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::read_intensity;
use super::pfm::read_pfm;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::render::CameraPose;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPose {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
}

impl ManifestPose {
    pub fn from_pose(p: &CameraPose) -> Self {
        ManifestPose {
            position: p.position,
            forward: p.forward,
            up: p.up,
            fov_deg: p.fov_deg,
        }
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Result<CameraPose> {
        CameraPose::new(self.position, self.forward, self.up, self.fov_deg, width, height)
    }
}

/// One manifest record; `image` and `depth` are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    pub depth: String,
    pub seed: u64,
    pub pose: ManifestPose,
    pub scene_id: u64,
}

/// Intensity/depth pair loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    pub depth: Vec<f64>,
    pub pose: CameraPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn encode(entries: &[ManifestEntry]) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(entries)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, Self::encode(&self.entries)?).map_err(|e| Error::io(&path, e))
    }

    /// Load `DIR/manifest.json` (or a manifest file path directly) and check that
    /// every referenced file exists.
    pub fn load(path: &Path) -> Result<Manifest> {
        let (root, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
                path.to_path_buf(),
            )
        };
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_slice(&bytes)?;
        let m = Manifest { root, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            for rel in [&e.image, &e.depth] {
                let p = self.root.join(rel);
                if !p.is_file() {
                    return Err(Error::MissingFile(p));
                }
            }
        }
        Ok(())
    }

    pub fn load_pair(&self, idx: usize) -> Result<FramePair> {
        let e = &self.entries[idx];
        load_pair(&self.root.join(&e.image), &self.root.join(&e.depth), &e.pose)
    }
}

pub fn load_pair(image: &Path, depth: &Path, pose: &ManifestPose) -> Result<FramePair> {
    let img = read_intensity(image)?;
    let (dw, dh, d) = read_pfm(depth)?;
    if (img.width, img.height) != (dw, dh) {
        return Err(Error::Pairing {
            image: image.to_path_buf(),
            depth: depth.to_path_buf(),
            image_dims: (img.width, img.height),
            depth_dims: (dw, dh),
        });
    }
    Ok(FramePair {
        width: dw,
        height: dh,
        intensity: img.data,
        depth: d,
        pose: pose.with_resolution(dw, dh)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{image::write_intensity, pfm::write_pfm};

    fn entry(img: &str, depth: &str) -> ManifestEntry {
        ManifestEntry {
            image: img.into(),
            depth: depth.into(),
            seed: 1,
            pose: ManifestPose {
                position: Vec3::ZERO,
                forward: Vec3::Z,
                up: Vec3::Y,
                fov_deg: 120.0,
            },
            scene_id: 0,
        }
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            root: dir.path().to_path_buf(),
            entries: vec![entry("nope.png", "nope.pfm")],
        };
        m.write().unwrap();
        match Manifest::load(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("nope.png")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_pair_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write_intensity(&dir.path().join("a.png"), 2, 2, &[0.0; 4]).unwrap();
        write_pfm(&dir.path().join("a.pfm"), 3, 2, &[1.0; 6]).unwrap();
        let m = Manifest {
            root: dir.path().to_path_buf(),
            entries: vec![entry("a.png", "a.pfm")],
        };
        m.write().unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        let err = m.load_pair(0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Pairing { .. }));
        assert!(msg.contains("a.png") && msg.contains("a.pfm"), "{msg}");
    }
}
