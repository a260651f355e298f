use thiserror::Error;

/// Failures split by exit code: bad configuration or inputs exit with 2,
/// everything that goes wrong while computing exits with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    std::io::Error,
    pdmc_core::mesh::MeshError,
    pdmc_core::render::RenderError,
    pdmc_core::descriptor::DescriptorError,
    pdmc_core::correspond::CorrespondError,
    pdmc_core::refine::RefineError,
    pdmc_core::compress::CompressError,
    pdmc_core::metrics::MetricsError,
    serde_json::Error
);
