use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape product does not match the number of values supplied.
    LengthMismatch { shape: Vec<usize>, len: usize },
    /// A tensor value was NaN or infinite at construction.
    NonFinite { index: usize },
    /// Operand shapes do not conform to the operation's broadcasting rule.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operation was applied with the wrong number of inputs.
    Arity {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },
    /// An index into rows (gather/scatter) or element table was out of range.
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    /// `backward` was called on a tensor with more than one element.
    NonScalarLoss { shape: Vec<usize> },
    /// Two forward evaluations of the same function disagreed.
    NonDeterministic { first: f64, second: f64 },
    /// A configuration or argument violated its precondition.
    InvalidArgument(String),
    /// Molecule or dataset invariant violated.
    InvalidData(String),
    /// Training produced a non-finite loss.
    Diverged { step: usize, value: f64 },
    /// A caller-supplied hook (checkpoint writer) failed.
    Hook(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LengthMismatch { shape, len } => {
                write!(
                    f,
                    "shape {shape:?} requires {} values, got {len}",
                    shape.iter().product::<usize>()
                )
            }
            Error::NonFinite { index } => write!(f, "non-finite value at index {index}"),
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: nonconforming shapes {lhs:?} and {rhs:?}")
            }
            Error::Arity { op, expected, got } => {
                write!(f, "{op}: expected {expected} inputs, got {got}")
            }
            Error::IndexOutOfRange { what, index, bound } => {
                write!(f, "{what} index {index} out of range (bound {bound})")
            }
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::NonDeterministic { first, second } => {
                write!(f, "function is not deterministic: {first:e} vs {second:e}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::Diverged { step, value } => {
                write!(f, "training diverged at step {step}: loss = {value}")
            }
            Error::Hook(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
