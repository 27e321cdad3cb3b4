use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical range error at subject {subject}, taxon {taxon}: linear predictor {value} exceeds {limit}")]
    NumericalRange {
        subject: usize,
        taxon: usize,
        value: f64,
        limit: f64,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("chain aborted at iteration {iteration} (last good iteration {last_good}): {source}")]
    ChainAborted {
        iteration: usize,
        last_good: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fit with taxon {taxon} in first position failed: {source}")]
    TaxonFit {
        taxon: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Process exit status: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::DegenerateInput(_)
            | Error::Dimension(_)
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Csv { .. } => 2,
            Error::Domain(_) | Error::NumericalRange { .. } | Error::Invariant(_) => 3,
            Error::ChainAborted { source, .. } | Error::TaxonFit { source, .. } => {
                match source.exit_code() {
                    2 => 2,
                    _ => 3,
                }
            }
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
