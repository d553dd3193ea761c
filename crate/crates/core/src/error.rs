use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape error in layer {layer}: {detail}")]
    Shape { layer: String, detail: String },

    #[error("state error: {0}")]
    State(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("training error at batch {batch}: {detail}")]
    Training { batch: usize, detail: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model file corrupted: {0}")]
    Corruption(String),

    #[error("incompatible model in layer {layer}: {detail}")]
    Incompatible { layer: String, detail: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
