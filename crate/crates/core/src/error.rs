use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("ratio {0} lies outside the binning range")]
    OutOfRange(f64),
    #[error("bad radius: {0}")]
    BadRadius(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("radius {r} lies outside the annulus [{lo}, {hi}]")]
    OutOfAnnulus { r: f64, lo: f64, hi: f64 },
    #[error("external deformer unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("kernel of height {kernel} exceeds the radial extent {rows}")]
    KernelTooLarge { kernel: usize, rows: usize },
    #[error("no jointly valid bits")]
    NoValidOverlap,
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("image {width}x{height} too small, need at least {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("score set has an empty {0} class")]
    EmptyClass(&'static str),
    #[error("iris radius {r} exceeds the usable crop radius {max}")]
    IrisTooLarge { r: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel file: {0}")]
    KernelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable variant name, used in service error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyMask => "EmptyMask",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::OutOfRange(_) => "OutOfRange",
            Error::BadRadius(_) => "BadRadius",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::OutOfAnnulus { .. } => "OutOfAnnulus",
            Error::ExternalUnavailable(_) => "ExternalUnavailable",
            Error::KernelTooLarge { .. } => "KernelTooLarge",
            Error::NoValidOverlap => "NoValidOverlap",
            Error::ZeroNorm => "ZeroNorm",
            Error::DimMismatch(..) => "DimMismatch",
            Error::TooSmall { .. } => "TooSmall",
            Error::EmptyClass(_) => "EmptyClass",
            Error::IrisTooLarge { .. } => "IrisTooLarge",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::KernelFormat(_) => "KernelFormat",
            Error::Io { .. } => "Io",
            Error::Image(_) => "Image",
            Error::Csv(_) => "Csv",
        }
    }

    /// True for failures caused by iris geometry rather than malformed input.
    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            Error::EmptyMask
                | Error::DegenerateGeometry(_)
                | Error::OutOfRange(_)
                | Error::BadRadius(_)
                | Error::OutOfAnnulus { .. }
                | Error::KernelTooLarge { .. }
                | Error::NoValidOverlap
                | Error::IrisTooLarge { .. }
                | Error::TooSmall { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
