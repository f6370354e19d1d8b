use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error: missing or invalid field `{field}`{}", detail_suffix(.detail))]
    Schema { field: String, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("variant generation failed: no variant passed the similarity guard (best similarity {best:.4}, required {required:.4})")]
    Generation { best: f64, required: f64 },

    #[error("insufficient family members: need at least {needed}, found {found}")]
    InsufficientMembers { needed: usize, found: usize },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("family ids overlap between training and evaluation: {}", .0.join(", "))]
    Disjointness(Vec<String>),

    #[error("report coverage mismatch for families: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("cannot fit an index on an empty mixture")]
    EmptyMixture,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn detail_suffix(detail: &str) -> String {
    if detail.is_empty() {
        String::new()
    } else {
        format!(" ({detail})")
    }
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Converts a serde_json error into a [`Error::Parse`] carrying a byte offset into `input`.
    pub(crate) fn from_json(input: &[u8], err: serde_json::Error) -> Self {
        Error::Parse {
            offset: byte_offset(input, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

// serde_json reports 1-based line and column (column counted in bytes).
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (idx, chunk) in input.split(|&b| b == b'\n').enumerate() {
        if idx + 1 == line {
            return (offset + column.saturating_sub(1)).min(input.len());
        }
        offset += chunk.len() + 1;
    }
    input.len()
}
