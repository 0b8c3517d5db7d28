//! Identity-preserving iris deformation and matching.
//!
//! Geometry and masks live in [`geometry`] and [`raster`], the linear and
//! biomechanical texture models in [`deformation`], the iris-code matcher in
//! [`recognition`], training objectives in [`losses`], verification
//! statistics in [`evaluation`], and dataset workflows in [`pipeline`].

pub mod deformation;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod kernels;
pub mod losses;
pub mod pipeline;
pub mod raster;
pub mod recognition;
pub mod synth;

pub use deformation::{
    deform, BiomechMap, BiomechParams, DeformationModel, ExternalDeformer, NormalizedIris,
};
pub use error::{Error, Result};
pub use evaluation::{BootstrapConfig, BootstrapResult, ScoreSet};
pub use geometry::{Binning, Circle, IrisCircles, ManifestRow, PairManifest};
pub use losses::{Embedding, IdentityQuintuple};
pub use raster::{GrayImage, IrisMask};
pub use recognition::{FilterBank, IrisCode, MatchScore};
