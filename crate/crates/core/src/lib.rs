//! Streaming video object detection: spatio-temporal proposals, cross-frame
//! clustering, and label propagation.

pub mod affinity;
pub mod classifier;
pub mod clustering;
pub mod config;
pub mod edges;
pub mod error;
pub mod eval;
pub mod field;
pub mod geom;
pub mod image;
pub mod kde;
pub mod motion;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod propagation;
pub mod proposals;
pub mod segmentation;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use field::{Field2D, IntegralImage};
pub use geom::{iou, BBox, Quad};
