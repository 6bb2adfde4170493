//! Exact base-10 fixed-point numbers.
//!
//! Energy volumes and prices travel as [`Fixed`], a signed count of
//! millionths. Anything that comes back out of a decryption is a [`Decimal`],
//! whose exponent grows with every scalar multiplication and which never
//! rounds unless asked to.

use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use core::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Number of fractional digits carried by [`Fixed`].
pub const FIXED_SCALE: u32 = 6;
/// `10^FIXED_SCALE`.
pub const FIXED_ONE: i64 = 1_000_000;
/// Exponent of the [`Fixed`] grid.
pub const FIXED_EXPONENT: i32 = -(FIXED_SCALE as i32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseDecimalError {
    Empty,
    InvalidDigit,
    TooManyFractionDigits { max: u32 },
    OutOfRange,
}

impl fmt::Display for ParseDecimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => f.write_str("empty decimal string"),
            Self::InvalidDigit => f.write_str("invalid character in decimal string"),
            Self::TooManyFractionDigits { max } => {
                write!(f, "more than {max} fractional digits")
            }
            Self::OutOfRange => f.write_str("decimal value out of range"),
        }
    }
}

/// A signed decimal on the 10^-6 grid, stored as an integer number of
/// millionths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(i64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(FIXED_ONE);

    pub const fn from_micros(micros: i64) -> Self {
        Fixed(micros)
    }

    pub const fn from_int(value: i64) -> Self {
        Fixed(value * FIXED_ONE)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn abs(self) -> Self {
        Fixed(self.0.abs())
    }

    /// Ternary sign: -1, 0 or +1.
    pub fn signum(self) -> i8 {
        self.0.signum() as i8
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_add(self, rhs: Fixed) -> Option<Fixed> {
        self.0.checked_add(rhs.0).map(Fixed)
    }

    pub fn to_decimal(self) -> Decimal {
        Decimal::new(BigInt::from(self.0), FIXED_EXPONENT)
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::from(FIXED_ONE))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / FIXED_ONE as f64
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / FIXED_ONE as u64;
        let frac = abs % FIXED_ONE as u64;
        write!(f, "{sign}{int}.{frac:06}")
    }
}

impl FromStr for Fixed {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d: Decimal = s.parse()?;
        if d.exponent < FIXED_EXPONENT {
            return Err(ParseDecimalError::TooManyFractionDigits { max: FIXED_SCALE });
        }
        d.rescale(FIXED_EXPONENT)
            .and_then(|r| r.mantissa.to_i64())
            .map(Fixed)
            .ok_or(ParseDecimalError::OutOfRange)
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl AddAssign for Fixed {
    fn add_assign(&mut self, rhs: Fixed) {
        self.0 += rhs.0;
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl SubAssign for Fixed {
    fn sub_assign(&mut self, rhs: Fixed) {
        self.0 -= rhs.0;
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(-self.0)
    }
}

impl core::iter::Sum for Fixed {
    fn sum<I: Iterator<Item = Fixed>>(iter: I) -> Fixed {
        iter.fold(Fixed::ZERO, Add::add)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Fixed {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Fixed {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Decimal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Decimal {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An exact decimal `mantissa · 10^exponent` with unbounded mantissa.
#[derive(Debug, Clone)]
pub struct Decimal {
    mantissa: BigInt,
    exponent: i32,
}

impl Decimal {
    pub fn new(mantissa: BigInt, exponent: i32) -> Self {
        Decimal { mantissa, exponent }
    }

    pub fn zero() -> Self {
        Decimal::new(BigInt::zero(), 0)
    }

    pub fn from_int(value: i64) -> Self {
        Decimal::new(BigInt::from(value), 0)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn signum(&self) -> i8 {
        match self.mantissa.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn abs(&self) -> Decimal {
        Decimal::new(self.mantissa.abs(), self.exponent)
    }

    /// Re-express at a finer (or equal) exponent without loss. Returns
    /// `None` when `exponent` is coarser and digits would be dropped.
    pub fn rescale(&self, exponent: i32) -> Option<Decimal> {
        match exponent.cmp(&self.exponent) {
            Ordering::Equal => Some(self.clone()),
            Ordering::Less => {
                let shift = (self.exponent - exponent) as u32;
                Some(Decimal::new(&self.mantissa * pow10(shift), exponent))
            }
            Ordering::Greater => {
                let shift = (exponent - self.exponent) as u32;
                let (q, r) = self.mantissa.div_rem(&pow10(shift));
                r.is_zero().then(|| Decimal::new(q, exponent))
            }
        }
    }

    /// Round half away from zero onto the grid `10^exponent`.
    pub fn round_to(&self, exponent: i32) -> Decimal {
        if exponent <= self.exponent {
            return self.rescale(exponent).expect("finer rescale is exact");
        }
        let shift = (exponent - self.exponent) as u32;
        Decimal::new(div_round_half_away(&self.mantissa, &pow10(shift)), exponent)
    }

    /// Quantize `num / den` onto the grid `10^exponent`, rounding half away
    /// from zero. `den` must be nonzero.
    pub fn quantized_ratio(num: &Decimal, den: &Decimal, exponent: i32) -> Decimal {
        assert!(!den.is_zero(), "quantized_ratio with zero denominator");
        // num/den = (a·10^ea)/(b·10^eb); we want round(num/den · 10^-exponent).
        let shift = num.exponent - den.exponent - exponent;
        let (n, d) = if shift >= 0 {
            (&num.mantissa * pow10(shift as u32), den.mantissa.clone())
        } else {
            (num.mantissa.clone(), &den.mantissa * pow10((-shift) as u32))
        };
        Decimal::new(div_round_half_away(&n, &d), exponent)
    }

    /// Strip trailing zero digits from the mantissa.
    pub fn normalized(&self) -> Decimal {
        if self.mantissa.is_zero() {
            return Decimal::zero();
        }
        let ten = BigInt::from(10);
        let mut m = self.mantissa.clone();
        let mut e = self.exponent;
        loop {
            let (q, r) = m.div_rem(&ten);
            if !r.is_zero() {
                break;
            }
            m = q;
            e += 1;
        }
        Decimal::new(m, e)
    }

    pub fn to_rational(&self) -> BigRational {
        if self.exponent >= 0 {
            BigRational::from_integer(&self.mantissa * pow10(self.exponent as u32))
        } else {
            BigRational::new(self.mantissa.clone(), pow10((-self.exponent) as u32))
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    /// Nearest [`Fixed`], rounding half away from zero.
    pub fn to_fixed(&self) -> Option<Fixed> {
        self.round_to(FIXED_EXPONENT).mantissa.to_i64().map(Fixed)
    }

    fn aligned(&self, other: &Decimal) -> (BigInt, BigInt, i32) {
        let e = self.exponent.min(other.exponent);
        let a = self.rescale(e).expect("finer rescale is exact").mantissa;
        let b = other.rescale(e).expect("finer rescale is exact").mantissa;
        (a, b, e)
    }
}

pub(crate) fn pow10(exp: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), exp as usize)
}

fn div_round_half_away(n: &BigInt, d: &BigInt) -> BigInt {
    let negative = n.is_negative() != d.is_negative();
    let (q, r) = n.abs().div_rem(&d.abs());
    let q = if r * 2u32 >= d.abs() { q + BigInt::one() } else { q };
    if negative {
        -q
    } else {
        q
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl Add<&Decimal> for &Decimal {
    type Output = Decimal;
    fn add(self, rhs: &Decimal) -> Decimal {
        let (a, b, e) = self.aligned(rhs);
        Decimal::new(a + b, e)
    }
}

impl Sub<&Decimal> for &Decimal {
    type Output = Decimal;
    fn sub(self, rhs: &Decimal) -> Decimal {
        let (a, b, e) = self.aligned(rhs);
        Decimal::new(a - b, e)
    }
}

impl Mul<&Decimal> for &Decimal {
    type Output = Decimal;
    fn mul(self, rhs: &Decimal) -> Decimal {
        Decimal::new(&self.mantissa * &rhs.mantissa, self.exponent + rhs.exponent)
    }
}

impl Neg for Decimal {
    type Output = Decimal;
    fn neg(self) -> Decimal {
        Decimal::new(-self.mantissa, self.exponent)
    }
}

impl From<Fixed> for Decimal {
    fn from(value: Fixed) -> Self {
        value.to_decimal()
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent >= 0 {
            let v = &self.mantissa * pow10(self.exponent as u32);
            return write!(f, "{v}");
        }
        let scale = (-self.exponent) as usize;
        let digits = self.mantissa.abs().to_string();
        let sign = if self.mantissa.is_negative() { "-" } else { "" };
        let (int, frac) = if digits.len() > scale {
            let (i, fr) = digits.split_at(digits.len() - scale);
            (String::from(i), String::from(fr))
        } else {
            let mut padded = String::with_capacity(scale);
            for _ in digits.len()..scale {
                padded.push('0');
            }
            padded.push_str(&digits);
            (String::from("0"), padded)
        };
        write!(f, "{sign}{int}.{frac}")
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        if body.is_empty() {
            return Err(ParseDecimalError::Empty);
        }
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(ParseDecimalError::Empty);
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(ParseDecimalError::InvalidDigit);
        }
        let mut digits = String::with_capacity(int.len() + frac.len());
        digits.push_str(int);
        digits.push_str(frac);
        let mantissa = BigInt::parse_bytes(digits.as_bytes(), 10)
            .ok_or(ParseDecimalError::InvalidDigit)?;
        let exponent = i32::try_from(frac.len()).map_err(|_| ParseDecimalError::OutOfRange)?;
        let mantissa = if negative { -mantissa } else { mantissa };
        Ok(Decimal::new(mantissa, -exponent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_parse_and_display() {
        let x: Fixed = "-1.5".parse().unwrap();
        assert_eq!(x.micros(), -1_500_000);
        assert_eq!(x.to_string(), "-1.500000");
        assert_eq!("0.000001".parse::<Fixed>().unwrap().micros(), 1);
        assert_eq!("7".parse::<Fixed>().unwrap(), Fixed::from_int(7));
        assert!(matches!(
            "0.0000001".parse::<Fixed>(),
            Err(ParseDecimalError::TooManyFractionDigits { .. })
        ));
        assert!("1.2.3".parse::<Fixed>().is_err());
        assert!("".parse::<Fixed>().is_err());
    }

    #[test]
    fn decimal_rounding() {
        let d: Decimal = "0.6666665".parse().unwrap();
        assert_eq!(d.round_to(-6).to_string(), "0.666667");
        let d: Decimal = "-2.5".parse().unwrap();
        assert_eq!(d.round_to(0).to_string(), "-3");
        let third = Decimal::quantized_ratio(&Decimal::from_int(1), &Decimal::from_int(3), -6);
        assert_eq!(third.to_string(), "0.333333");
        let two_thirds = Decimal::quantized_ratio(&Decimal::from_int(2), &Decimal::from_int(3), -6);
        assert_eq!(two_thirds.to_string(), "0.666667");
    }

    #[test]
    fn decimal_exact_arithmetic() {
        let a: Decimal = "1.1".parse().unwrap();
        let b: Decimal = "2.2".parse().unwrap();
        assert_eq!(&a + &b, "3.3".parse().unwrap());
        assert_eq!((&a * &b).normalized().to_string(), "2.42");
        assert_eq!("3.30".parse::<Decimal>().unwrap(), "3.3".parse().unwrap());
        assert!("0.5".parse::<Decimal>().unwrap().rescale(0).is_none());
    }
}
