//! Error type shared by all core operations.

use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor rank outside the supported 1..=5 range.
    RankOutOfRange { rank: usize },
    /// A shape contained a zero extent or its product overflowed.
    InvalidShape { shape: Vec<usize> },
    /// Element count implied by the shape differs from the buffer length.
    SizeMismatch { expected: usize, got: usize },
    /// Two shapes that must agree do not.
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Axis index not smaller than the tensor rank.
    AxisOutOfRange { axis: usize, rank: usize },
    /// Reflect padding needs `amount <= extent - 1`.
    ReflectTooLong {
        axis: usize,
        extent: usize,
        amount: usize,
    },
    /// Trim amount must stay below the axis extent.
    TrimTooLong {
        axis: usize,
        extent: usize,
        amount: usize,
    },
    /// Inner dimensions of a matrix product disagree.
    InnerDimMismatch { lhs: usize, rhs: usize },
    /// Valid-mode convolution with an input shorter than the kernel.
    EmptyConvOutput { extent: usize, kernel: usize },
    /// Sequence length not divisible by the scan chunk length.
    ChunkContract { len: usize, chunk: usize },
    /// Configuration or weight-set violates a structural invariant.
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::RankOutOfRange { rank } => {
                write!(f, "tensor rank {rank} outside supported range 1..=5")
            }
            Error::InvalidShape { shape } => write!(f, "invalid shape {shape:?}"),
            Error::SizeMismatch { expected, got } => {
                write!(f, "shape implies {expected} elements, buffer has {got}")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected:?}, got {got:?}")
            }
            Error::AxisOutOfRange { axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank}")
            }
            Error::ReflectTooLong {
                axis,
                extent,
                amount,
            } => write!(
                f,
                "reflect padding of {amount} exceeds extent-1 ({}) on axis {axis}",
                extent - 1
            ),
            Error::TrimTooLong {
                axis,
                extent,
                amount,
            } => {
                write!(
                    f,
                    "cannot trim {amount} of {extent} elements on axis {axis}"
                )
            }
            Error::InnerDimMismatch { lhs, rhs } => {
                write!(f, "matmul inner dimensions disagree: {lhs} vs {rhs}")
            }
            Error::EmptyConvOutput { extent, kernel } => {
                write!(f, "conv input extent {extent} shorter than kernel {kernel}")
            }
            Error::ChunkContract { len, chunk } => {
                write!(f, "sequence length {len} not divisible by chunk {chunk}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
