//! Multi-view 3D object detection pipeline below the CNN backbones.
//!
//! The crate covers everything a two-stage camera + LIDAR detector needs
//! around its feature extractors:
//!
//! - [`kitti`]: bit-exact KITTI readers and writers (velodyne, calib, labels, planes, results).
//! - [`geometry`]: oriented 3D boxes, camera projection, rotated BEV IoU and image IoU.
//! - [`bev`]: six-channel bird's eye view rasterization and BEV crops.
//! - [`mask`]: the depth-driven foreground mask applied to image feature crops.
//! - [`codec`]: four-corner box encoding used as regression targets.
//! - [`labeling`]: per-view label assignment, mini-batch sampling, discrepancy counts and AP.
//! - [`loss`]: the multi-task detection loss with per-view sub-losses and exact gradients.
//! - [`header`]: a small differentiable three-branch detection header and its ablations.
//! - [`augment`]: scene flipping and PCA colour jitter.
//! - [`synth`]: deterministic synthetic scenes, proposals and oracles.
//!
//! Boxes ([`OrientedBox3D`]) live in the LIDAR frame (x forward, y left, z up);
//! KITTI labels live in the rectified camera frame and are converted through a
//! [`CalibrationSet`].

pub mod augment;
pub mod bev;
pub mod codec;
pub mod geometry;
pub mod header;
pub mod kitti;
pub mod labeling;
pub mod loss;
pub mod mask;
pub mod raster;
pub mod resample;
pub mod synth;

pub use bev::{BevConfig, BevMap};
pub use codec::{CornerEncoding, OrientationEncoding};
pub use geometry::{AxisAlignedBox2D, BoxDims, ConvexPolygon2D, OrientedBox3D, ProjectedBox};
pub use kitti::{CalibrationSet, GroundPlane, GroundTruthLabel, Point, RawPointCloud};
pub use labeling::{LabelState, ObjectClass, Proposal, ProposalLabelSet, ThresholdTable, ViewLabel};
pub use loss::{LossBreakdown, LossWeights};
pub use mask::{ForegroundMask, MaskConfig, SparseDepthMap};
pub use raster::RgbRaster;
pub use augment::{Frame, PcaBasis};
pub use header::{ExperimentConfig, ModelConfig, ToyHeaderModel, TrainConfig};
pub use synth::{SceneSpec, SyntheticScene};
