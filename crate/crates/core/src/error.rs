use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid mass partition: {0}")]
    MassPartition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("capacity exceeded: {0}")]
    Cap(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
