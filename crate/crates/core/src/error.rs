use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A primitive received operands whose shapes it cannot combine.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An index list referenced a row outside its source.
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    NonFinite(String),
    InvalidArgument(String),
    UnknownParam(String),
    DuplicateParam(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "shape mismatch in {op}: {lhs:?} vs {rhs:?}")
            }
            Error::Index { op, index, bound } => {
                write!(f, "index {index} out of bounds ({bound}) in {op}")
            }
            Error::NonFinite(ctx) => write!(f, "non-finite value: {ctx}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::UnknownParam(name) => write!(f, "unknown parameter `{name}`"),
            Error::DuplicateParam(name) => write!(f, "duplicate parameter `{name}`"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}
