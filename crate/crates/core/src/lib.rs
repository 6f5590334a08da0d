//! Joint super-resolution and vehicle detection.
//!
//! A multi-scale adversarial super-resolver and a three-scale grid detector
//! trained under one weighted objective, plus the image-quality and
//! detection evaluation stack used to score them.
//!
//! The crate is `no_std` (with `alloc`). Everything touching the file system
//! lives in the `srvd` companion crate. Enable the `std` feature to let the
//! GEMM kernel use runtime CPU feature detection.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod boxes;
pub mod error;
pub mod graph;
pub mod imaging;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use boxes::{AnchorSet, BoundingBox, GridEncoding};
pub use error::{Error, Result};
pub use imaging::{ImageTensor, LabeledScene, PairedSample};
pub use losses::{LossBreakdown, LossWeights};
pub use nets::{NetConfig, ParameterSet};
pub use tensor::{Shape, Tensor};
pub use trainer::{TrainConfig, TrainState};
