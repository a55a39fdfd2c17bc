//! Exact dyadic rationals `m · 2^e`.
//!
//! Every price, bid, valuation and regret sum inside the engine is a
//! [`Dyadic`]. Exploration steps `2^{-2^l}` leave the range of `f64` after a
//! handful of phases, so nothing in the game loop is ever rounded.
//!
//! Mantissas that fit in an `i64` are stored inline; anything larger spills
//! to a [`BigInt`]. The split is invisible to callers: the representation is
//! canonical (odd mantissa, or zero with exponent zero) and a big mantissa is
//! only ever used when the small one does not fit.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exponents at or above this render as a plain decimal expansion.
pub const DECIMAL_RENDER_MIN_EXPONENT: i64 = -64;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Mantissa {
    Small(i64),
    Big(BigInt),
}

/// An exact binary rational `mantissa · 2^exponent` in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: Mantissa,
    exponent: i64,
}

/// Arithmetic operator accepted by [`combine`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// Applies `op` to `a` and `b` exactly.
pub fn combine(op: ArithOp, a: &Dyadic, b: &Dyadic) -> Dyadic {
    match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
    }
}

/// Exact three-way comparison.
pub fn compare(a: &Dyadic, b: &Dyadic) -> Ordering {
    a.cmp(b)
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic {
        mantissa: Mantissa::Small(0),
        exponent: 0,
    };

    pub const ONE: Dyadic = Dyadic {
        mantissa: Mantissa::Small(1),
        exponent: 0,
    };

    pub fn zero() -> Self {
        Self::ZERO
    }

    pub fn one() -> Self {
        Self::ONE
    }

    /// Builds `mantissa · 2^exponent` and canonicalizes it.
    pub fn new(mantissa: impl Into<BigInt>, exponent: i64) -> Self {
        Self::from_big(mantissa.into(), exponent)
    }

    /// `mantissa · 2^exponent` without going through a big integer.
    pub fn from_i64(mantissa: i64, exponent: i64) -> Self {
        Self::from_i128(mantissa as i128, exponent)
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_i128(n as i128, 0)
    }

    /// `2^exponent`.
    pub fn pow2(exponent: i64) -> Self {
        Dyadic {
            mantissa: Mantissa::Small(1),
            exponent,
        }
    }

    fn from_i128(mut m: i128, mut e: i64) -> Self {
        if m == 0 {
            return Self::ZERO;
        }
        let tz = m.trailing_zeros();
        m >>= tz;
        e = e.checked_add(tz as i64).expect("dyadic exponent overflow");
        match i64::try_from(m) {
            Ok(small) => Dyadic {
                mantissa: Mantissa::Small(small),
                exponent: e,
            },
            Err(_) => Dyadic {
                mantissa: Mantissa::Big(BigInt::from(m)),
                exponent: e,
            },
        }
    }

    fn from_big(mut m: BigInt, mut e: i64) -> Self {
        if m.is_zero() {
            return Self::ZERO;
        }
        let tz = m.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            m >>= tz;
            e = e.checked_add(tz as i64).expect("dyadic exponent overflow");
        }
        match m.to_i64() {
            Some(small) => Dyadic {
                mantissa: Mantissa::Small(small),
                exponent: e,
            },
            None => Dyadic {
                mantissa: Mantissa::Big(m),
                exponent: e,
            },
        }
    }

    /// Returns the canonical form. Values are always kept canonical, so this
    /// is a clone; it exists for callers that build values from raw parts.
    pub fn canonicalize(&self) -> Self {
        match &self.mantissa {
            Mantissa::Small(m) => Self::from_i128(*m as i128, self.exponent),
            Mantissa::Big(m) => Self::from_big(m.clone(), self.exponent),
        }
    }

    pub fn mantissa(&self) -> BigInt {
        match &self.mantissa {
            Mantissa::Small(m) => BigInt::from(*m),
            Mantissa::Big(m) => m.clone(),
        }
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.mantissa, Mantissa::Small(0))
    }

    pub fn signum(&self) -> i32 {
        match &self.mantissa {
            Mantissa::Small(m) => m.signum() as i32,
            Mantissa::Big(m) => match m.sign() {
                Sign::Minus => -1,
                Sign::NoSign => 0,
                Sign::Plus => 1,
            },
        }
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Multiplies by `2^k` exactly.
    pub fn shl(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::ZERO;
        }
        Dyadic {
            mantissa: self.mantissa.clone(),
            exponent: self.exponent.checked_add(k).expect("dyadic exponent overflow"),
        }
    }

    /// Multiplies by a machine integer.
    pub fn mul_int(&self, k: i64) -> Self {
        self * &Dyadic::from_int(k)
    }

    /// Quantizes a decimal string to the nearest multiple of `2^-frac_bits`.
    ///
    /// Ties round toward zero. Accepts an optional sign, digits and an
    /// optional fractional part (`-0.125`, `3`, `.5`).
    pub fn from_decimal(text: &str, frac_bits: u32) -> Result<Self> {
        if frac_bits == 0 {
            return Err(Error::Input("frac_bits must be at least 1".into()));
        }
        let (negative, numer, scale) = parse_decimal(text)?;
        let denom = BigInt::from(10u32).pow(scale);
        let scaled = numer << frac_bits;
        let (mut q, rem) = scaled.div_rem(&denom);
        if (rem << 1u32) > denom {
            q += 1;
        }
        if negative {
            q = -q;
        }
        Ok(Self::from_big(q, -(frac_bits as i64)))
    }

    /// Parses a value that must be exactly representable: either a decimal
    /// expansion with a dyadic value or the `m*2^e` form produced by
    /// [`Display`](fmt::Display).
    pub fn parse_exact(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some((m, e)) = t.split_once("*2^") {
            let m: BigInt = m
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad mantissa in {text:?}")))?;
            let e: i64 = e
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad exponent in {text:?}")))?;
            return Ok(Self::from_big(m, e));
        }
        let (negative, numer, scale) = parse_decimal(t)?;
        // numer / 10^scale = numer / (2^scale * 5^scale): dyadic iff 5^scale | numer
        let five = BigInt::from(5u32).pow(scale);
        let (q, rem) = numer.div_rem(&five);
        if !rem.is_zero() {
            return Err(Error::Input(format!("{text:?} is not a dyadic rational")));
        }
        let q = if negative { -q } else { q };
        Ok(Self::from_big(q, -(scale as i64)))
    }

    /// The exact value of a finite `f64`.
    pub fn from_f64_exact(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Input(format!("{x} is not finite")));
        }
        if x == 0.0 {
            return Ok(Self::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 0 { 1i128 } else { -1i128 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), raw_exp - 1075)
        };
        Ok(Self::from_i128(sign * m, e))
    }

    /// Smallest multiple of `2^-frac_bits` that is `>= self`.
    pub fn ceil_to_bits(&self, frac_bits: u32) -> Self {
        let target = -(frac_bits as i64);
        if self.exponent >= target {
            return self.clone();
        }
        let shift = (target - self.exponent) as usize;
        let m = self.mantissa();
        let q = m.div_ceil(&(BigInt::one() << shift));
        Self::from_big(q, target)
    }

    /// Nearest `f64`, for reporting and float-side bound evaluation only.
    pub fn to_f64(&self) -> f64 {
        let (m, e) = match &self.mantissa {
            Mantissa::Small(m) => (*m as f64, self.exponent),
            Mantissa::Big(m) => {
                // keep the top 64 bits; the rest is below f64 resolution
                let bits = m.bits() as i64;
                let drop = (bits - 64).max(0);
                let top = (m >> drop as usize).to_f64().unwrap_or(0.0);
                (top, self.exponent + drop)
            }
        };
        scale_pow2(m, e)
    }

    /// Renders as a reduced fraction `m/2^k` (`3/16`, `-1/2`, `5`).
    pub fn to_fraction_string(&self) -> String {
        if self.exponent >= 0 {
            return (self.mantissa() << self.exponent as usize).to_string();
        }
        let denom = BigInt::one() << (-self.exponent) as usize;
        format!("{}/{}", self.mantissa(), denom)
    }

    fn cmp_magnitude_aligned(&self, other: &Self) -> Ordering {
        // both nonzero and of equal sign
        if let (Mantissa::Small(a), Mantissa::Small(b)) = (&self.mantissa, &other.mantissa) {
            let (a, b) = (*a as i128, *b as i128);
            let diff = self.exponent - other.exponent;
            if diff == 0 {
                return a.cmp(&b);
            }
            if (0..=62).contains(&diff) {
                return (a << diff).cmp(&b);
            }
            if (-62..0).contains(&diff) {
                return a.cmp(&(b << (-diff)));
            }
        }
        let e = self.exponent.min(other.exponent);
        let a = self.mantissa() << (self.exponent - e) as usize;
        let b = other.mantissa() << (other.exponent - e) as usize;
        a.cmp(&b)
    }
}

fn scale_pow2(mut x: f64, mut e: i64) -> f64 {
    // split the scaling so intermediate powers never overflow or flush early
    while e > 0 {
        let step = e.min(1000);
        x *= 2f64.powi(step as i32);
        e -= step;
        if x.is_infinite() {
            return x;
        }
    }
    while e < 0 {
        let step = (-e).min(1000);
        x *= 2f64.powi(-(step as i32));
        e += step;
        if x == 0.0 {
            return x;
        }
    }
    x
}

/// Splits `[-]digits[.digits]` into (negative, |numerator|, decimal scale).
fn parse_decimal(text: &str) -> Result<(bool, BigInt, u32)> {
    let bad = || Error::Input(format!("cannot parse {text:?} as a decimal"));
    let t = text.trim();
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    Ok((negative, numer, frac_part.len() as u32))
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<i64> for Dyadic {
    fn from(n: i64) -> Self {
        Self::from_int(n)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (sa, sb) = (self.signum(), other.signum());
        if sa != sb {
            return sa.cmp(&sb);
        }
        match sa {
            0 => Ordering::Equal,
            _ => self.cmp_magnitude_aligned(other),
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Add<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: &'a Dyadic) -> Dyadic {
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.clone();
        }
        let (lo, hi) = if self.exponent <= rhs.exponent {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shift = hi.exponent - lo.exponent;
        if let (Mantissa::Small(l), Mantissa::Small(h)) = (&lo.mantissa, &hi.mantissa) {
            if shift <= 62 {
                return Dyadic::from_i128(((*h as i128) << shift) + *l as i128, lo.exponent);
            }
        }
        let sum = (hi.mantissa() << shift as usize) + lo.mantissa();
        Dyadic::from_big(sum, lo.exponent)
    }
}

impl<'a> Sub<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &'a Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl<'a> Mul<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: &'a Dyadic) -> Dyadic {
        if self.is_zero() || rhs.is_zero() {
            return Dyadic::ZERO;
        }
        let e = self
            .exponent
            .checked_add(rhs.exponent)
            .expect("dyadic exponent overflow");
        match (&self.mantissa, &rhs.mantissa) {
            (Mantissa::Small(a), Mantissa::Small(b)) => {
                Dyadic::from_i128(*a as i128 * *b as i128, e)
            }
            _ => Dyadic::from_big(self.mantissa() * rhs.mantissa(), e),
        }
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        match &self.mantissa {
            Mantissa::Small(m) => Dyadic::from_i128(-(*m as i128), self.exponent),
            Mantissa::Big(m) => Dyadic::from_big(-m.clone(), self.exponent),
        }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        -&self
    }
}

macro_rules! forward_owned {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic { (&self).$m(&rhs) }
        }
        impl<'a> $tr<&'a Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: &'a Dyadic) -> Dyadic { (&self).$m(rhs) }
        }
        impl<'a> $tr<Dyadic> for &'a Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic { self.$m(&rhs) }
        }
    )*};
}

forward_owned!(Add add, Sub sub, Mul mul);

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |acc, x| &acc + &x)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |acc, x| &acc + x)
    }
}

/// Exact decimal expansion when the exponent is at least -64, otherwise
/// `m*2^e`.
impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent >= 0 {
            return write!(f, "{}", self.mantissa() << self.exponent as usize);
        }
        if self.exponent < DECIMAL_RENDER_MIN_EXPONENT {
            return write!(f, "{}*2^{}", self.mantissa(), self.exponent);
        }
        // m / 2^n = m * 5^n / 10^n
        let n = (-self.exponent) as u32;
        let m = self.mantissa();
        let digits = (m.abs() * BigInt::from(5u32).pow(n)).to_string();
        let n = n as usize;
        let padded = if digits.len() <= n {
            format!("{}{}", "0".repeat(n + 1 - digits.len()), digits)
        } else {
            digits
        };
        let (int_part, frac_part) = padded.split_at(padded.len() - n);
        let sign = if m.is_negative() { "-" } else { "" };
        write!(f, "{sign}{int_part}.{frac_part}")
    }
}

impl FromStr for Dyadic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_exact(s)
    }
}
