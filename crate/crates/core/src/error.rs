use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CaeError>;

#[derive(Debug, Error)]
pub enum CaeError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("non-finite value at epoch {epoch}, point {point}: {message}")]
    Numerical {
        epoch: usize,
        point: usize,
        message: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("tangent space at point {point} has rank {rank} < {dimension}")]
    DegenerateTangent {
        point: usize,
        rank: usize,
        dimension: usize,
    },

    #[error("feature column {column} is constant")]
    DegenerateFeature { column: usize },

    #[error("vector {index} is linearly dependent on its predecessors (residual {residual:e})")]
    Rank { index: usize, residual: f64 },

    #[error("all latent gradient norms are zero")]
    DegenerateModel,

    #[error("unsupported visualization: {0}")]
    UnsupportedVisualization(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CaeError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CaeError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by non-finite arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, CaeError::Numerical { .. })
    }

    /// Process exit status: 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CaeError::Shape(_) => "shape",
            CaeError::Argument(_) => "argument",
            CaeError::Config { .. } => "config",
            CaeError::Numerical { .. } => "numerical",
            CaeError::Degenerate(_) => "degenerate",
            CaeError::DegenerateTangent { .. } => "degenerate_tangent",
            CaeError::DegenerateFeature { .. } => "degenerate_feature",
            CaeError::Rank { .. } => "rank",
            CaeError::DegenerateModel => "degenerate_model",
            CaeError::UnsupportedVisualization(_) => "unsupported_visualization",
            CaeError::Parse { .. } => "parse",
            CaeError::Io { .. } => "io",
            CaeError::Json(_) => "json",
        }
    }

    /// `{"kind", "message", "path", "exit_code"}`; `path` is set for
    /// configuration errors.
    pub fn to_json(&self) -> serde_json::Value {
        let path = match self {
            CaeError::Config { path, .. } => serde_json::Value::String(path.clone()),
            _ => serde_json::Value::Null,
        };
        serde_json::json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "path": path,
            "exit_code": self.exit_code(),
        })
    }
}
