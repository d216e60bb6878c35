//! Labelled training/evaluation samples: one frame, its superpixel graph
//! restricted to nodes with ground truth, and the camera pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::manifest::{FramePair, Manifest};
use crate::par::Exec;
use crate::render::{frame_stem, render_dataset_frame, CameraPose, DatasetConfig, Frame};
use crate::superpixel::{segment, SuperpixelConfig, SuperpixelGraph};

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    /// Per-pixel distance-depth in mm, sentinel where nothing was hit.
    pub depth: Vec<f64>,
    pub pose: CameraPose,
    /// Graph over labelled superpixels only; `gt_depth` is always present.
    pub graph: SuperpixelGraph,
}

impl Sample {
    pub fn from_pair(id: impl Into<String>, pair: FramePair, config: &SuperpixelConfig) -> Result<Sample> {
        let graph = segment(pair.width, pair.height, &pair.intensity, Some(&pair.depth), config)?.drop_unlabelled()?;
        Ok(Sample {
            id: id.into(),
            width: pair.width,
            height: pair.height,
            intensity: pair.intensity,
            depth: pair.depth,
            pose: pair.pose,
            graph,
        })
    }

    /// Build a sample straight from a rendered frame, skipping the disk.
    pub fn from_frame(id: impl Into<String>, frame: Frame, config: &SuperpixelConfig) -> Result<Sample> {
        let pair = FramePair {
            width: frame.width,
            height: frame.height,
            intensity: frame.intensity,
            depth: frame.depth,
            pose: frame.pose,
        };
        Self::from_pair(id, pair, config)
    }

    pub fn targets(&self) -> &[f64] {
        self.graph.gt_depth.as_deref().expect("samples always carry ground truth")
    }
}

/// Load and segment every frame of a manifest, in manifest order.
pub fn load_samples(manifest: &Manifest, config: &SuperpixelConfig, exec: Exec) -> Result<Vec<Sample>> {
    exec.try_map_range(manifest.entries.len(), |i| {
        let pair = manifest.load_pair(i)?;
        let id = manifest.entries[i].image.clone();
        Sample::from_pair(id, pair, config).map_err(|e| match e {
            Error::EmptyGraph => Error::Data(format!("{}: no superpixel has ground-truth depth", manifest.entries[i].image)),
            other => other,
        })
    })
}

/// Render `config.count` frames and segment them in memory.
pub fn render_samples(config: &DatasetConfig, sp: &SuperpixelConfig, exec: Exec) -> Result<Vec<Sample>> {
    config.validate()?;
    exec.try_map_range(config.count, |i| {
        let frame = render_dataset_frame(config, i, Exec::Sequential)?;
        Sample::from_frame(frame_stem(i), frame, sp)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Frame indices of each partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Contiguous split in frame order. Datasets are rendered scene by
    /// scene, so contiguous blocks keep most scenes out of more than one
    /// partition.
    pub fn contiguous(n: usize, fractions: [f64; 3]) -> Result<Split> {
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
        }
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        Ok(Split {
            train: (0..n_train).collect(),
            val: (n_train..n_train + n_val).collect(),
            test: (n_train + n_val..n).collect(),
        })
    }

    pub fn get(&self, p: Partition) -> &[usize] {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fractions_on_200() {
        let s = Split::contiguous(200, [0.55, 0.40, 0.05]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (110, 80, 10));
        assert_eq!(s.val[0], 110);
        assert_eq!(*s.test.last().unwrap(), 199);
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(Split::contiguous(10, [0.5, 0.5, 0.5]).is_err());
        assert!(Split::contiguous(10, [-0.1, 0.6, 0.5]).is_err());
    }

    #[test]
    fn small_counts_never_overflow() {
        for n in 0..12 {
            let s = Split::contiguous(n, [0.55, 0.40, 0.05]).unwrap();
            assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        }
    }
}
