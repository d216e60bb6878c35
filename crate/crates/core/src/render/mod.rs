//! Synthetic endoscopy renderer: procedural tube scenes, a pinhole camera with
//! two attached point lights, and per-pixel intensity plus distance-depth.
//!
//! Shading is Lambertian with inverse-square fall-off and no shadows. Depth is
//! the Euclidean distance from the camera center to the first hit along the
//! pixel-center ray (not the z coordinate).

pub mod camera;
pub mod dataset;
pub mod raymarch;
pub mod scene;
pub mod trajectory;

pub use camera::{CameraPose, LightRig};
pub use dataset::{frame_stem, generate_dataset, load_dataset_config, render_dataset_frame, DatasetConfig};
pub use raymarch::{render_frame, render_frame_with, render_raw, Frame, FrameMeta, RawRender, RenderSettings, DEPTH_SENTINEL};
pub use scene::{build_scene, Bump, RadiusProfile, Scene, SceneConfig, Span};
pub use trajectory::{sample_trajectory, TrajectoryConfig};
