use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("InsufficientAngles: need at least 3 distinct polarizer angles mod 180 deg, got {distinct}")]
    InsufficientAngles { distinct: usize },

    #[error("DuplicateAngle: polarizer angles {first_deg} deg and {second_deg} deg coincide mod 180 deg")]
    DuplicateAngle { first_deg: f64, second_deg: f64 },

    #[error("SingularTransform: affine linear part has zero determinant")]
    SingularTransform,

    #[error("RegistrationFailed: frame {frame} best shift ({dx}, {dy}) lies on the search window boundary")]
    RegistrationFailed { frame: usize, dx: i64, dy: i64 },

    #[error("OutOfDomain: {0}")]
    OutOfDomain(String),

    #[error("NoRoot: degree of polarization {rho} is above the range of the requested branch")]
    NoRoot { rho: f64 },

    #[error("NoGradientSupport: mask contains no two adjacent valid pixels")]
    NoGradientSupport,

    #[error("NoValidPixels: {0}")]
    NoValidPixels(&'static str),

    #[error("ZeroSystem: every row of the linear system is zero")]
    ZeroSystem,

    #[error("DegenerateRay: point lies on the camera plane")]
    DegenerateRay,

    #[error("NoVisiblePoints: no point of the cloud projects into the image")]
    NoVisiblePoints,

    #[error("InsufficientSamples: hole filling needs 3 non-collinear samples")]
    InsufficientSamples,

    #[error("ZeroRange: height raster is constant over its valid pixels")]
    ZeroRange,

    #[error("ZeroDistance: the two reference points coincide on the surface")]
    ZeroDistance,

    #[error("DegenerateRoi: plane fit needs 3 non-collinear valid pixels")]
    DegenerateRoi,

    #[error("DegeneratePolyline: profile needs at least 2 distinct vertices")]
    DegeneratePolyline,

    #[error("SamplingMismatch: profiles sampled differently ({0})")]
    SamplingMismatch(String),

    #[error("MissingAnchor: offset refinement requires the MVS surface and its node grid")]
    MissingAnchor,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by missing inputs or an unusable configuration,
    /// as opposed to a stage failing on valid inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Decode { .. }
                | Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::EmptyInput(_)
                | Error::InsufficientAngles { .. }
                | Error::DuplicateAngle { .. }
        )
    }
}
