use std::io;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("divergence undefined for score {score} and threshold {threshold}: need 2a_X > a_Y and 2b_X > b_Y")]
    DivergenceUndefined { score: String, threshold: String },
    #[error("bin of {size} items exceeds the enumeration budget of {max}")]
    BinTooLarge { size: usize, max: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
