use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain kind `{0}`")]
    UnknownDomain(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "requested derivative order {requested} exceeds the field's maximum order {available}"
    )]
    OrderTooHigh { requested: usize, available: usize },

    #[error("cube {0} is not in the interior Whitney family")]
    NotInFamily(String),

    #[error("no chain: cube adjacency graph is disconnected ({components} components; source in component {source_component}, target in component {target_component})")]
    NoChain {
        components: usize,
        source_component: usize,
        target_component: usize,
    },

    #[error(
        "point {0:?} lies on the domain boundary; the extension is only defined almost everywhere"
    )]
    BoundaryEvaluation(Vec<f64>),

    #[error("empty cover")]
    EmptyCover,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
