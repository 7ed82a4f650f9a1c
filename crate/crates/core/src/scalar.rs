use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Ring operations shared by plain reals and truncated jets.
///
/// Every coordinate formula in the crate is written once against this trait,
/// so evaluating a map on jets yields its tangent map without extra code.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn from_f64(x: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Base (real) part.
    fn re(&self) -> f64;

    /// Multiplicative inverse; requires a nonzero real part.
    fn recip(self) -> Self;

    /// Largest absolute coefficient difference.
    fn dist(&self, other: &Self) -> f64;

    fn is_finite(&self) -> bool;

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn re(&self) -> f64 {
        *self
    }

    fn recip(self) -> Self {
        1.0 / self
    }

    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// Max-norm distance between two equally long slices. A length mismatch is
/// reported as an infinite distance.
pub fn max_dist<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x.dist(y);
        if d.is_nan() || d > acc {
            d
        } else {
            acc
        }
    })
}

pub(crate) fn add_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

pub(crate) fn sub_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub(crate) fn zeros<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::zero(); n]
}
