//! Scalar abstraction for the scan kernels: real f64 or Complex64. The
//! diagonal recurrence is identical in both; only the cumulative-product
//! strategy differs (log-space prefix sums are a real-only rewrite).

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

pub trait ScanScalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    /// Multiply by a real scalar (Δ_t is always real).
    fn scale(self, k: f64) -> Self;
    /// Modulus.
    fn abs(self) -> f64;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn is_finite_val(self) -> bool;
    /// Some(v) when this value is a strictly positive real, the gate for the
    /// log-space cumulative-product path.
    fn positive_real(self) -> Option<f64>;
}

impl ScanScalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;

    fn from_f64(x: f64) -> f64 {
        x
    }
    fn scale(self, k: f64) -> f64 {
        self * k
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn positive_real(self) -> Option<f64> {
        if self > 0.0 {
            Some(self)
        } else {
            None
        }
    }
}

impl ScanScalar for Complex64 {
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    fn from_f64(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }
    fn scale(self, k: f64) -> Complex64 {
        Complex64::new(self.re * k, self.im * k)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn is_finite_val(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn positive_real(self) -> Option<f64> {
        if self.im == 0.0 && self.re > 0.0 {
            Some(self.re)
        } else {
            None
        }
    }
}
