//! Scalar abstraction shared by the grid, solver and functional code.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every literal used in this crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Gradient at a node; unused trailing components are zero in 1D.
pub type Vec2<T> = [T; 2];

/// Symmetric Hessian at a node; only `[0][0]` is meaningful in 1D.
pub type Mat2<T> = [[T; 2]; 2];

pub(crate) fn zero_vec<T: Real>() -> Vec2<T> {
    [T::zero(); 2]
}

pub(crate) fn zero_mat<T: Real>() -> Mat2<T> {
    [[T::zero(); 2]; 2]
}

/// Hilbert-Schmidt inner product of the leading `dim`×`dim` blocks.
pub fn hs_inner<T: Real>(a: &Mat2<T>, b: &Mat2<T>, dim: usize) -> T {
    let mut s = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            s = s + a[i][j] * b[i][j];
        }
    }
    s
}

/// Smallest eigenvalue of the leading `dim`×`dim` symmetric block.
pub fn min_eigenvalue<T: Real>(m: &Mat2<T>, dim: usize) -> T {
    if dim == 1 {
        return m[0][0];
    }
    let two = T::lit(2.0);
    let mean = (m[0][0] + m[1][1]) / two;
    let half_diff = (m[0][0] - m[1][1]) / two;
    let off = (m[0][1] + m[1][0]) / two;
    mean - (half_diff * half_diff + off * off).sqrt()
}

/// Pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
