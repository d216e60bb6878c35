pub mod graph;
pub mod slic;

pub use graph::{build_graph, GraphFile, GraphParams, NodeFeatures, SuperpixelGraph, UNASSIGNED};
pub use slic::{slic, SlicParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segmentation plus graph construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuperpixelConfig {
    pub slic: SlicParams,
    pub graph: GraphParams,
}

impl SuperpixelConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.slic;
        let g = &self.graph;
        if s.g_target == 0 || !(s.compactness > 0.0) {
            return Err(Error::Config("superpixel.slic: g_target and compactness must be positive".into()));
        }
        if g.bins == 0 || !(g.c_intensity >= 0.0 && g.c_histogram >= 0.0) {
            return Err(Error::Config("superpixel.graph: bins must be positive, kernel bandwidths non-negative".into()));
        }
        Ok(())
    }
}

/// Segment an image and build its graph in one call.
pub fn segment(
    width: usize,
    height: usize,
    intensity: &[f64],
    depth: Option<&[f64]>,
    config: &SuperpixelConfig,
) -> Result<SuperpixelGraph> {
    let labels = slic(intensity, width, height, &config.slic)?;
    build_graph(width, height, intensity, depth, &labels, &config.graph)
}
