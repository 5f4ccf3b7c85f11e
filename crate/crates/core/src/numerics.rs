//! Extended-precision arithmetic and exact combinatorial helpers.
//!
//! [`Real`] wraps an MPFR float with round-to-nearest-even semantics. Every
//! value carries its own precision; binary operations produce a result at the
//! larger of the two operand precisions, so a computation seeded at one
//! precision stays at that precision throughout.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Special;
use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

/// Default working precision in mantissa bits (about 36 decimal digits).
pub const DEFAULT_PRECISION_BITS: u32 = 120;

/// Environment variable consulted by the CLI for the working precision.
pub const PRECISION_ENV_VAR: &str = "LASTARRIVAL_PRECISION_BITS";

/// Mantissa precision in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Precision(u32);

impl Precision {
    pub const MIN_BITS: u32 = 24;
    pub const MAX_BITS: u32 = 1 << 16;

    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return domain(format!(
                "precision must lie in {}..={} bits, got {bits}",
                Self::MIN_BITS,
                Self::MAX_BITS
            ));
        }
        Ok(Precision(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Number of significant decimal digits that survive a round trip.
    pub fn decimal_digits(self) -> usize {
        (f64::from(self.0) * std::f64::consts::LOG10_2).floor() as usize
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision(DEFAULT_PRECISION_BITS)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// An extended-precision real number.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Real(Float);

impl Real {
    pub fn zero(prec: Precision) -> Self {
        Real(Float::with_val(prec.0, 0))
    }

    pub fn one(prec: Precision) -> Self {
        Real(Float::with_val(prec.0, 1))
    }

    pub fn neg_infinity(prec: Precision) -> Self {
        Real(Float::with_val(prec.0, Special::NegInfinity))
    }

    pub fn from_i64(prec: Precision, v: i64) -> Self {
        Real(Float::with_val(prec.0, v))
    }

    pub fn from_u64(prec: Precision, v: u64) -> Self {
        Real(Float::with_val(prec.0, v))
    }

    pub fn from_usize(prec: Precision, v: usize) -> Self {
        Real(Float::with_val(prec.0, v as u64))
    }

    /// Exact conversion of a hardware double (every finite `f64` is
    /// representable at 53 bits or more).
    pub fn from_f64(prec: Precision, v: f64) -> Self {
        Real(Float::with_val(prec.0, v))
    }

    /// `p / q` correctly rounded.
    pub fn ratio(prec: Precision, p: i64, q: i64) -> Self {
        Real(Float::with_val(prec.0, p)) / Real(Float::with_val(prec.0, q))
    }

    /// `1/e` at the given precision.
    pub fn inv_e(prec: Precision) -> Self {
        Real(Float::with_val(prec.0, -1).exp())
    }

    /// `e` at the given precision.
    pub fn e(prec: Precision) -> Self {
        Real(Float::with_val(prec.0, 1).exp())
    }

    /// Parses a decimal literal (`0.3529170002071955`, `3.5e-1`), a ratio of
    /// two decimal literals (`5/16`), or one of the literals `1/e`, `e^-1`,
    /// `exp(-1)`. Decimal digits are read directly at full precision.
    pub fn parse(prec: Precision, text: &str) -> Result<Self> {
        let s = text.trim();
        match s {
            "1/e" | "e^-1" | "e^(-1)" | "exp(-1)" => return Ok(Real::inv_e(prec)),
            "e" | "exp(1)" => return Ok(Real::e(prec)),
            _ => {}
        }
        if let Some((num, den)) = s.split_once('/') {
            let num = Self::parse_decimal(prec, num)?;
            let den = Self::parse_decimal(prec, den)?;
            if den.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {text:?}")));
            }
            return Ok(num / den);
        }
        Self::parse_decimal(prec, s)
    }

    fn parse_decimal(prec: Precision, s: &str) -> Result<Self> {
        let s = s.trim();
        let parsed = Float::parse(s).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        let v = Float::with_val(prec.0, parsed);
        if !v.is_finite() {
            return Err(Error::Parse(format!("{s:?} is not a finite number")));
        }
        Ok(Real(v))
    }

    pub fn precision(&self) -> Precision {
        Precision(self.0.prec())
    }

    /// Re-rounds to another precision.
    pub fn with_precision(&self, prec: Precision) -> Self {
        Real(Float::with_val(prec.0, &self.0))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    /// Decimal rendering with enough digits to recover the value exactly at
    /// its precision.
    pub fn to_decimal(&self) -> String {
        self.0.to_string_radix(10, None)
    }

    /// Decimal rendering rounded to `digits` significant digits.
    pub fn to_decimal_digits(&self, digits: usize) -> String {
        self.0.to_string_radix(10, Some(digits.max(1)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// Strictly below zero (`-inf` included).
    pub fn is_negative(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Less)
    }

    /// Strictly above zero.
    pub fn is_positive(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Greater)
    }

    pub fn abs(&self) -> Self {
        Real(self.0.clone().abs())
    }

    pub fn exp(&self) -> Self {
        Real(self.0.clone().exp())
    }

    pub fn ln(&self) -> Self {
        Real(self.0.clone().ln())
    }

    pub fn sqrt(&self) -> Self {
        Real(self.0.clone().sqrt())
    }

    pub fn powu(&self, k: u32) -> Self {
        Real(Float::with_val(self.0.prec(), (&self.0).pow(k)))
    }

    pub fn powi(&self, k: i32) -> Self {
        Real(Float::with_val(self.0.prec(), (&self.0).pow(k)))
    }

    pub fn pow(&self, exponent: &Real) -> Self {
        Real(Float::with_val(self.0.prec(), (&self.0).pow(&exponent.0)))
    }

    pub fn min<'a>(&'a self, other: &'a Real) -> &'a Real {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max<'a>(&'a self, other: &'a Real) -> &'a Real {
        if other > self {
            other
        } else {
            self
        }
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Self {
        Real(Float::with_val(self.0.prec(), 1 - &self.0))
    }

    pub fn mul_u(&self, k: u64) -> Self {
        Real(Float::with_val(self.0.prec(), &self.0 * k))
    }

    pub fn div_u(&self, k: u64) -> Self {
        Real(Float::with_val(self.0.prec(), &self.0 / k))
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({})", self.to_decimal())
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(d) => f.write_str(&self.to_decimal_digits(d)),
            None => f.write_str(&self.to_decimal()),
        }
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_decimal())
    }
}

/// Deserializes at the largest precision whose full rendering has as many
/// digits as the string (at least the default). Re-rounding to the precision
/// the string was rendered at recovers the original value.
impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let digits = s
            .split(['e', 'E'])
            .next()
            .unwrap_or("")
            .bytes()
            .filter(u8::is_ascii_digit)
            .count() as u32;
        let mut bits = DEFAULT_PRECISION_BITS;
        while bits < Precision::MAX_BITS && rendered_digits(bits + 1) <= digits {
            bits += 1;
        }
        Real::parse(Precision(bits), &s).map_err(serde::de::Error::custom)
    }
}

/// Significant digits of [`Real::to_decimal`] at `bits` of precision.
fn rendered_digits(bits: u32) -> u32 {
    1 + (f64::from(bits) * std::f64::consts::LOG10_2).ceil() as u32
}

fn joint_prec(a: &Float, b: &Float) -> u32 {
    a.prec().max(b.prec())
}

macro_rules! binop {
    ($Tr:ident, $m:ident, $TrA:ident, $ma:ident, $op:tt) => {
        impl $Tr<&Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                Real(Float::with_val(joint_prec(&self.0, &rhs.0), &self.0 $op &rhs.0))
            }
        }
        impl $Tr<Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                self $op &rhs
            }
        }
        impl $Tr<&Real> for Real {
            type Output = Real;
            fn $m(mut self, rhs: &Real) -> Real {
                self.$ma(rhs);
                self
            }
        }
        impl $Tr<Real> for Real {
            type Output = Real;
            fn $m(mut self, rhs: Real) -> Real {
                self.$ma(&rhs);
                self
            }
        }
        impl $TrA<&Real> for Real {
            fn $ma(&mut self, rhs: &Real) {
                if self.0.prec() < rhs.0.prec() {
                    self.0.set_prec(rhs.0.prec());
                }
                self.0.$ma(&rhs.0);
            }
        }
        impl $TrA<Real> for Real {
            fn $ma(&mut self, rhs: Real) {
                self.$ma(&rhs);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, +);
binop!(Sub, sub, SubAssign, sub_assign, -);
binop!(Mul, mul, MulAssign, mul_assign, *);
binop!(Div, div, DivAssign, div_assign, /);

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(-self.0)
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(Float::with_val(self.0.prec(), -&self.0))
    }
}

/// Largest `n` accepted by [`binomial`].
pub const BINOMIAL_MAX_N: u64 = 1_000_000;

/// `C(n, k)`, exact as an integer and then correctly rounded to `prec`.
pub fn binomial(prec: Precision, n: u64, k: u64) -> Result<Real> {
    if k > n {
        return domain(format!("binomial({n}, {k}): k exceeds n"));
    }
    if n > BINOMIAL_MAX_N {
        return domain(format!("binomial({n}, {k}): n exceeds {BINOMIAL_MAX_N}"));
    }
    let exact = Integer::from(Integer::binomial_u(n as u32, k as u32));
    Ok(Real(Float::with_val(prec.0, &exact)))
}

/// Largest index accepted by [`catalan`].
pub const CATALAN_MAX_N: u32 = 30;

/// The `n`-th Catalan number, exact.
pub fn catalan(n: u32) -> Result<u64> {
    if n > CATALAN_MAX_N {
        return Err(Error::Capacity(format!(
            "catalan({n}) is only provided for n <= {CATALAN_MAX_N}"
        )));
    }
    // C_{k+1} = C_k * 2(2k+1) / (k+2); the division is exact at every step.
    let mut c: u128 = 1;
    for k in 0..u128::from(n) {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    Ok(c as u64)
}

/// Both solutions `x1 <= 1 <= x2` of `x e^{-x} = theta` for
/// `0 < theta <= 1/e`.
///
/// Bisection narrows each bracket to `2^(-prec/2)`; a few Newton steps then
/// polish the root. At `theta = 1/e` (to working precision) both roots are
/// exactly 1.
pub fn solve_x_exp(theta: &Real) -> Result<(Real, Real)> {
    let prec = theta.precision();
    if !theta.is_positive() {
        return domain(format!("solve_x_exp: theta must be positive, got {theta}"));
    }
    let peak = Real::inv_e(prec);
    let ulp_slack = Real::one(prec) * ldexp(prec, -(prec.bits() as i32) + 4);
    if theta > &(&peak + &ulp_slack) {
        return Err(Error::NoSolution(format!(
            "x e^(-x) = {theta} has no solution: the maximum is 1/e"
        )));
    }
    if (theta - &peak).abs() <= ulp_slack {
        return Ok((Real::one(prec), Real::one(prec)));
    }

    let f = |x: &Real| -> Real { x * &(-x).exp() - theta };
    let half_tol = ldexp(prec, -(prec.bits() as i32) / 2);

    // f(0) = -theta < 0, f(1) > 0.
    let x1 = bisect(&f, Real::zero(prec), Real::one(prec), &half_tol);
    // f(1) > 0, and f(hi) < 0 once hi is large enough.
    let mut hi = Real::from_u64(prec, 2);
    while !f(&hi).is_negative() {
        hi = hi.mul_u(2);
    }
    let x2 = bisect(&f, Real::one(prec), hi, &half_tol);

    let polish = |mut x: Real| -> Real {
        for _ in 0..4 {
            let slope = x.one_minus() * (-&x).exp();
            if slope.is_zero() {
                break;
            }
            let step = f(&x) / slope;
            x -= step;
        }
        x
    };
    Ok((polish(x1), polish(x2)))
}

/// `2^e` at the given precision.
pub fn ldexp(prec: Precision, e: i32) -> Real {
    Real(Float::with_val(prec.0, Float::i_exp(1, e)))
}

/// Bisection for a sign change `f(lo) < 0 <= f(hi)` or `f(lo) >= 0 > f(hi)`.
fn bisect<F: Fn(&Real) -> Real>(f: &F, mut lo: Real, mut hi: Real, tol: &Real) -> Real {
    let lo_negative = f(&lo).is_negative();
    while &(&hi - &lo) > tol {
        let mid = (&lo + &hi).div_u(2);
        if f(&mid).is_negative() == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi).div_u(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Precision {
        Precision::default()
    }

    #[test]
    fn binomial_small_cases() {
        assert_eq!(binomial(p(), 4, 2).unwrap(), Real::from_u64(p(), 6));
        for n in [0, 1, 7, 1000] {
            assert_eq!(binomial(p(), n, 0).unwrap(), Real::one(p()));
        }
        assert!(matches!(binomial(p(), 3, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn binomial_matches_exact_product_quotient() {
        // Independent route: prod_{j=1..k} (n-k+j)/j over big integers.
        let (n, k) = (146u32, 24u32);
        let mut num = Integer::from(1);
        let mut den = Integer::from(1);
        for j in 1..=k {
            num *= n - k + j;
            den *= j;
        }
        let exact = num / den;
        assert_eq!(exact.to_string(), "1917750545450593517895426000");
        let got = binomial(Precision::new(200).unwrap(), u64::from(n), u64::from(k)).unwrap();
        assert_eq!(got.0.to_integer().unwrap(), exact);
    }

    #[test]
    fn pascal_identity_is_exact() {
        for n in 1..=30u64 {
            for k in 1..n {
                let lhs = binomial(p(), n, k).unwrap();
                let rhs = binomial(p(), n - 1, k - 1).unwrap() + binomial(p(), n - 1, k).unwrap();
                assert_eq!(lhs, rhs, "C({n},{k})");
            }
        }
    }

    #[test]
    fn catalan_values() {
        assert_eq!(catalan(0).unwrap(), 1);
        assert_eq!(catalan(3).unwrap(), 5);
        assert_eq!(catalan(10).unwrap(), 16796);
        // segment recurrence C_{n+1} = sum C_i C_{n-i}
        let mut c = vec![1u64];
        for n in 0..30usize {
            let next = (0..=n).map(|i| c[i] * c[n - i]).sum();
            c.push(next);
        }
        for (n, want) in c.iter().enumerate() {
            assert_eq!(catalan(n as u32).unwrap(), *want, "n = {n}");
        }
        assert!(matches!(catalan(31), Err(Error::Capacity(_))));
    }

    #[test]
    fn solve_x_exp_cases() {
        let (a, b) = solve_x_exp(&Real::inv_e(p())).unwrap();
        assert_eq!(a, Real::one(p()));
        assert_eq!(b, Real::one(p()));

        let two = Real::from_u64(p(), 2);
        let theta = &two * &(-&two).exp();
        let (x1, x2) = solve_x_exp(&theta).unwrap();
        assert!((&x2 - &two).abs() < ldexp(p(), -100));
        assert!(x1 < Real::one(p()));

        let theta = Real::parse(p(), "0.3529170002071955").unwrap();
        let (x1, x2) = solve_x_exp(&theta).unwrap();
        let tol = ldexp(p(), -60);
        for x in [&x1, &x2] {
            let r = x * &(-x).exp() - &theta;
            assert!(r.abs() < tol, "residual {r}");
        }
        // Independent oracle: plain f64 bisection on [0,1] and [1,10].
        let g = |x: f64| x * (-x).exp() - 0.3529170002071955;
        let bis = |mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (g(mid) < 0.0) == (g(lo) < 0.0) {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            lo
        };
        assert!((x1.to_f64() - bis(0.0, 1.0)).abs() < 1e-12);
        assert!((x2.to_f64() - bis(1.0, 10.0)).abs() < 1e-12);
    }

    #[test]
    fn solve_x_exp_errors() {
        assert!(matches!(
            solve_x_exp(&Real::parse(p(), "0.4").unwrap()),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(solve_x_exp(&Real::zero(p())), Err(Error::Domain(_))));
        assert!(matches!(
            solve_x_exp(&Real::parse(p(), "-0.1").unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn parse_literals() {
        let e = Real::parse(p(), "1/e").unwrap();
        assert_eq!(e, Real::inv_e(p()));
        let r = Real::parse(p(), "5/16").unwrap();
        assert_eq!(r, Real::ratio(p(), 5, 16));
        // Never routed through f64: the tail digits survive.
        let t = Real::parse(p(), "0.35291700020719550000000000001").unwrap();
        let u = Real::parse(p(), "0.3529170002071955").unwrap();
        assert!(t > u);
        assert!(Real::parse(p(), "abc").is_err());
        assert!(Real::parse(p(), "1/0").is_err());
    }

    #[test]
    fn decimal_round_trip() {
        for prec in [Precision::default(), Precision::new(240).unwrap()] {
            let x = Real::ratio(prec, 1, 3).exp();
            let back = Real::parse(prec, &x.to_decimal()).unwrap();
            assert_eq!(x, back);
        }
    }

    #[test]
    fn serde_round_trip_after_rerounding() {
        for bits in [120, 121, 160, 240, 333] {
            let prec = Precision::new(bits).unwrap();
            for k in 1..40 {
                let x = Real::ratio(prec, k, 7).exp();
                let json = serde_json::to_string(&x).unwrap();
                let back: Real = serde_json::from_str(&json).unwrap();
                assert!(back.precision().bits() >= bits);
                assert_eq!(back.with_precision(prec), x);
            }
        }
        let short: Real = serde_json::from_str("\"0.25\"").unwrap();
        assert_eq!(short.precision().bits(), DEFAULT_PRECISION_BITS);
    }

    #[test]
    fn precision_bounds() {
        assert!(Precision::new(8).is_err());
        assert_eq!(Precision::default().bits(), 120);
        assert_eq!(Precision::default().decimal_digits(), 36);
    }
}
