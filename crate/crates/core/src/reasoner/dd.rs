//! Double-double arithmetic (about 32 significant digits), used only to
//! evaluate finite differences below f64 rounding.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    #[cfg(test)]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    /// ln 2 as a double-double.
    const LN_2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    /// `(k, r)` with `self = k ln 2 + r`, `|r| ≤ ln 2 / 2`.
    fn reduce(self) -> (i32, Dd) {
        let k = (self.hi / Self::LN_2.hi).round();
        (k as i32, self - Self::LN_2 * k)
    }

    /// `e^r − 1` for `|r| ≤ ln 2`: Taylor series on `r / 256`, then eight
    /// doublings `e^{2y} − 1 = (e^y − 1)(e^y + 1)`.
    fn expm1_reduced(r: Dd) -> Dd {
        let y = r * (1.0 / 256.0);
        let mut term = y;
        let mut sum = y;
        for n in 2..=12 {
            term = term * y / n as f64;
            sum += term;
        }
        for _ in 0..8 {
            sum = sum * (sum + 2.0);
        }
        sum
    }

    pub fn exp(self) -> Dd {
        let (k, r) = self.reduce();
        (Self::expm1_reduced(r) + 1.0) * 2f64.powi(k)
    }

    pub fn exp_m1(self) -> Dd {
        let (k, r) = self.reduce();
        if k == 0 {
            Self::expm1_reduced(r)
        } else {
            (Self::expm1_reduced(r) + 1.0) * 2f64.powi(k) - 1.0
        }
    }

    /// Two Newton steps on `e^y = x` from the f64 logarithm.
    pub fn ln(self) -> Dd {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - 1.0;
        }
        y
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::from(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        (a - b).abs().hi <= tol * b.abs().hi.max(f64::MIN_POSITIVE)
    }

    #[test]
    fn arithmetic_keeps_the_low_word() {
        // 0.1 (as f64) / 3, checked through the exact inverse
        let a = Dd::from(0.1) / 3.0;
        assert!(close(a * 3.0, Dd::from(0.1), 1e-31));
        let x = Dd::from(1e-9) / 3.0;
        assert!(close(((Dd::from(1.0) + x) - 1.0) / x, Dd::from(1.0), 1e-22));
        let b = Dd::from(0.7) / 7.0;
        assert!(close(a * b / b, a, 1e-31));
        // 2^-60 survives next to 1
        let tiny = Dd::from(1.0) + 2f64.powi(-60);
        assert_eq!((tiny - 1.0).hi, 2f64.powi(-60));
    }

    #[test]
    fn transcendental_accuracy() {
        for i in 0..400 {
            let x = -6.0 + i as f64 * 0.0311;
            let e = Dd::from(x).exp();
            assert!(((e.hi - x.exp()) / x.exp()).abs() < 3e-16);
            assert!((e.ln() - x).abs().hi < 1e-30);
            assert!(close(Dd::from(x).exp_m1() + 1.0, e, 1e-30));
            // exp' = exp, seen through a step far below f64 resolution
            let h = 1e-9;
            let step = Dd::from(x + h) - Dd::from(x - h);
            let n = (Dd::from(x + h).exp() - Dd::from(x - h).exp()) / step;
            assert!(((n - e) / e).abs().hi < 1e-15);
        }
        assert!(close(Dd::from(1e-20).exp_m1(), Dd::new(1e-20, 5e-41), 1e-30));
        let e1 = Dd::from(1.0).exp();
        assert!(close(e1, Dd::new(std::f64::consts::E, 1.445_646_891_729_250_2e-16), 1e-31));
    }
}
