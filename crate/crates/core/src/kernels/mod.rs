//! Kernel signatures and reference implementations.
//!
//! The reference kernels cover the BLAS/LAPACK subset exercised by the
//! experiment engine plus the utility kernels (`memset`, `gerand`, `porand`,
//! `readfile`, `writefile`). All of them are column-major with explicit
//! leading dimensions and never touch memory outside an operand's window.

pub mod blas;
mod exec;
pub mod lapack;
mod registry;
mod signature;
pub mod util;
pub mod view;

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{
    execute_kernel, execute_parallel, ArgValue, CallContext, KernelBackend, KernelCall, RawRegion,
    ReferenceBackend, ResolvedCall, Workspace,
};
pub use registry::{all_signatures, lookup_signature};
pub use signature::{
    flop_count, ArgKind, ArgSpec, DataSpec, KernelBindings, KernelOp, OperandShape, ShapeRule,
    Signature, Structure, StructureRule,
};
pub use view::{footprint, MatMut, MatRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Single,
    Double,
}

impl Dtype {
    pub fn prefix(self) -> char {
        match self {
            Dtype::Single => 's',
            Dtype::Double => 'd',
        }
    }

    pub fn from_prefix(c: char) -> Option<Self> {
        match c {
            's' => Some(Dtype::Single),
            'd' => Some(Dtype::Double),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::Single => 4,
            Dtype::Double => 8,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::Single => "single",
            Dtype::Double => "double",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("argument `{arg}`: {msg}")]
    BadArgument { arg: String, msg: String },
    #[error("leading dimension {ld} is smaller than max(1, rows = {rows})")]
    LeadingDimension { ld: usize, rows: usize },
    #[error("region holds {available} elements but {needed} are required")]
    Capacity { needed: usize, available: usize },
    #[error("operand dimensions do not agree: {0}")]
    Dimension(String),
    #[error("written operand `{0}` overlaps another operand")]
    Aliasing(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on `{path}`: {msg}")]
    Io { path: String, msg: String },
}

impl KernelError {
    /// Numerical failures are recorded as flagged measurements rather than
    /// aborting a stream.
    pub fn is_numerical(&self) -> bool {
        matches!(self, KernelError::Numerical(_))
    }
}

/// Real floating-point element type of the reference kernels.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    /// Maps 64 random bits to a value strictly inside (0, 1).
    fn open_unit(bits: u64) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const DTYPE: Dtype = Dtype::Double;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn open_unit(bits: u64) -> Self {
        // (2k + 1) / 2^53 for a 52-bit k: exact, never 0 or 1.
        ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const DTYPE: Dtype = Dtype::Single;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn open_unit(bits: u64) -> Self {
        ((bits >> 41) as f32 + 0.5) * (1.0 / (1u32 << 23) as f32)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

/// BLAS transposition flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uplo {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diag {
    NonUnit,
    Unit,
}

impl Trans {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'N' => Some(Trans::No),
            'T' | 'C' => Some(Trans::Yes),
            _ => None,
        }
    }
}

impl Uplo {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'L' => Some(Uplo::Lower),
            'U' => Some(Uplo::Upper),
            _ => None,
        }
    }
    pub fn flip(self) -> Self {
        match self {
            Uplo::Lower => Uplo::Upper,
            Uplo::Upper => Uplo::Lower,
        }
    }
}

impl Side {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'L' => Some(Side::Left),
            'R' => Some(Side::Right),
            _ => None,
        }
    }
}

impl Diag {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'N' => Some(Diag::NonUnit),
            'U' => Some(Diag::Unit),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_unit_bounds() {
        for bits in [0u64, u64::MAX, 1 << 63, 12345] {
            let d = f64::open_unit(bits);
            assert!(d > 0.0 && d < 1.0, "{d}");
            let s = f32::open_unit(bits);
            assert!(s > 0.0 && s < 1.0, "{s}");
        }
    }
}
