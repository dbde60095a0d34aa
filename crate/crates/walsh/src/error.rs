use std::path::PathBuf;

/// Errors of the file formats and the command layer.
#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("`{field}`: {message}")]
    Field { field: String, message: String },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] walsh_core::Error),
}

impl FileError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type FileResult<T> = std::result::Result<T, FileError>;

pub fn read(path: &std::path::Path) -> FileResult<String> {
    std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &std::path::Path, contents: &str) -> FileResult<()> {
    std::fs::write(path, contents).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}
