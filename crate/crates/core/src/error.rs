use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the range an operation accepts.
    InvalidParameter(String),
    /// A geometry failed validation. `indices` lists offending nodes.
    InvalidGeometry { reason: String, indices: Vec<usize> },
    /// A kernel matrix failed validation.
    InvalidKernel(String),
    /// The combination of inputs is valid but not implemented.
    Unsupported(String),
    /// An iteration or integration failed to produce a usable result.
    Numerical(String),
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::InvalidGeometry { reason, indices } if indices.is_empty() => {
                write!(f, "invalid geometry: {reason}")
            }
            Error::InvalidGeometry { reason, indices } => {
                let shown: Vec<_> = indices.iter().take(16).collect();
                write!(f, "invalid geometry: {reason} (nodes {shown:?}")?;
                if indices.len() > 16 {
                    write!(f, " and {} more", indices.len() - 16)?;
                }
                write!(f, ")")
            }
            Error::InvalidKernel(m) => write!(f, "invalid kernel: {m}"),
            Error::Unsupported(m) => write!(f, "unsupported: {m}"),
            Error::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl core::error::Error for Error {}
