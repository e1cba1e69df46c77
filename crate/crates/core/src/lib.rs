//! Land-cover change detection between rasterized map data and optical imagery.
//!
//! The optical side is consumed in the *segmentation domain*: a set of binary
//! masks produced by an external promptable segmenter. The map side is a class
//! raster that is turned into an instance map by connected component labeling.
//! Two strategies compare the two:
//!
//! 1. [`noprompt`] aggregates segmenter masks outward from each map instance's
//!    center and flags the instance as changed when the merged mask never
//!    reaches the overlap threshold.
//! 2. [`prompt`] exports background instances as box/mask prompts and flags the
//!    pixels the prompted segmenter left unrecognized inside them.
//!
//! [`eval`] fuses the two change maps and scores them (OA, F1, Cohen's kappa),
//! [`synth`] generates reproducible synthetic scenes with known ground truth,
//! and [`pipeline`] wires everything together for the CLI.

pub mod ccl;
pub mod error;
pub mod eval;
pub mod noprompt;
pub mod pipeline;
pub mod prompt;
pub mod raster;
pub mod rng;
pub mod synth;

pub use ccl::{label_components, Connectivity, Instance, InstanceMap, LabelParams};
pub use error::{Error, Result};
pub use eval::{evaluate, fuse, MetricsRecord};
pub use noprompt::{
    detect_changes_noprompt, hierarchical_aggregate, intersecting_masks, AggregationParams,
    InstanceVerdict,
};
pub use prompt::{
    anomaly_extract, detect_changes_prompt, export_prompts, PromptDetection, PromptSpec,
    PromptedResult, PromptedResults,
};
pub use raster::{
    BBox, BinaryMask, ChangeMap, Geometry, LabelRaster, Legend, LegendEntry, MaskSet,
};
pub use synth::{generate_scene, ObjectRole, Scene, SceneParams};
