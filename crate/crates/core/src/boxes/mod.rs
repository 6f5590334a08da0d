//! Box geometry, grid target encoding and decoding, non-maximum suppression,
//! and IoU-distance k-means anchor design.
//!
//! Coordinates are normalized to `[0, 1]` everywhere in this module; pixel
//! conversion happens only at I/O boundaries.

mod anchors;
mod bbox;
mod grid;
mod nms;

pub use anchors::{kmeans_anchors, AnchorSet, KMeansResult};
pub use bbox::{iou, iou_wh, BoundingBox};
pub(crate) use grid::MAX_LOG_SCALE;
pub use grid::{
    decode_predictions, encode_targets, DetectionTargets, GridEncoding, ScaleTargets,
    ANCHORS_PER_SCALE, FIELD_CLASS, FIELD_OBJ, FIELD_TH, FIELD_TW, FIELD_TX, FIELD_TY, NUM_SCALES,
};
pub use nms::nms;
