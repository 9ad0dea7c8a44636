//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating-point type the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts to `f64`, for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> Cplx<T> {
    Complex::new(T::one(), T::zero())
}

/// Principal square root, flipped if needed so that the imaginary part is non-negative.
#[inline]
pub(crate) fn sqrt_upper<T: Real>(z: Cplx<T>) -> Cplx<T> {
    let r = z.sqrt();
    if r.im < T::zero() {
        -r
    } else {
        r
    }
}

/// `exp(z)` split as mantissa and an extra real log-scale: returns `exp(z - shift)`.
#[inline]
pub(crate) fn exp_shifted<T: Real>(z: Cplx<T>, shift: T) -> Cplx<T> {
    Cplx::new(z.re - shift, z.im).exp()
}
