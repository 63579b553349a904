//! Linear algebra kernels: banded LU, small dense solves, CSR operators,
//! Sherman-Morrison-Woodbury, real embeddings of `A x + B x* = b`, and a
//! Hermitian Lanczos eigensolver.

mod band;
mod dense;
mod eigen;
mod realify;
mod smw;
mod sparse;

pub use band::{BandLu, BandMatrix};
pub use dense::{DenseLu, DenseMatrix};
pub use eigen::{lanczos_lowest, symmetric_tridiagonal_eigen, LanczosResult};
pub use realify::{ConjLinearSystem, LowRankTerm};
pub use smw::{smw_solve, SmwFactor};
pub use sparse::SparseMatrix;

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar field used by the generic solvers (`f64` or `Complex64`).
pub trait Field:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn from_real(x: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Plain Euclidean `sum conj(u) v`.
pub fn dot<T: Field>(u: &[T], v: &[T]) -> T {
    u.iter()
        .zip(v)
        .fold(T::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

/// Euclidean norm.
pub fn norm2<T: Field>(u: &[T]) -> f64 {
    u.iter().map(|a| a.modulus().powi(2)).sum::<f64>().sqrt()
}
