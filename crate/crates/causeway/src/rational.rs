//! Exact rational parsing and rendering shared by weights, scores, and
//! metrics. Equality-with-1 checks throughout the crate are exact, so
//! nothing here ever routes through floating point on the way in.

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};

/// Parses `"n/d"`, a plain integer, or a decimal string into an exact ratio.
///
/// Decimal inputs are exact: `"0.6"` becomes 3/5, not the nearest f64.
pub fn parse_ratio(text: &str) -> Option<Rational64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: i64 = num.trim().parse().ok()?;
        let den: i64 = den.trim().parse().ok()?;
        if den == 0 {
            return None;
        }
        return Some(Rational64::new(num, den));
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Option<Rational64> {
    let (sign, digits) = match text.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    // 10^18 overflows i64 one digit later; keep the mantissa comfortably inside.
    if int_part.len() + frac_part.len() > 17 {
        return None;
    }
    let mantissa: i64 = format!("{int_part}{frac_part}").parse().unwrap_or(0);
    let scale = 10i64.checked_pow(frac_part.len() as u32)?;
    Some(Rational64::new(sign * mantissa, scale))
}

/// Renders a ratio exactly: an integer when possible, a terminating decimal
/// when the reduced denominator is of the form 2^a·5^b, and `n/d` otherwise.
pub fn render_ratio(r: Rational64) -> String {
    if r.denom() == &1 {
        return r.numer().to_string();
    }
    match exact_decimal(r) {
        Some(s) => s,
        None => format!("{}/{}", r.numer(), r.denom()),
    }
}

/// Exact terminating-decimal rendering, or None when none exists.
pub fn exact_decimal(r: Rational64) -> Option<String> {
    let mut den = *r.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return None;
    }
    let places = twos.max(fives);
    let scale = 10i128.checked_pow(places)?;
    let scaled = (*r.numer() as i128 * scale) / *r.denom() as i128;
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.abs();
    let int = abs / scale;
    let frac = abs % scale;
    if places == 0 {
        Some(format!("{sign}{int}"))
    } else {
        let frac_str = format!("{:0width$}", frac, width = places as usize);
        Some(format!("{sign}{int}.{frac_str}"))
    }
}

/// Lossy view for posterior arithmetic and thresholds that tolerate floats.
pub fn ratio_to_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn is_non_negative(r: Rational64) -> bool {
    !r.is_negative()
}

pub fn ratio_is_zero(r: Rational64) -> bool {
    r.is_zero()
}

/// Serde adapter for rational fields. Serializes integers as JSON numbers
/// and everything else as an exact string; accepts numbers, decimal
/// strings, and `n/d` strings on the way in.
pub mod ratio_serde {
    use super::*;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        if r.denom() == &1 {
            s.serialize_i64(*r.numer())
        } else {
            s.serialize_str(&render_ratio(*r))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Rational64::from_integer(i)),
            Raw::Float(f) => {
                // The Display form of an f64 is its shortest round-trip
                // decimal, so `0.1` in a document really means 1/10.
                parse_decimal(&format!("{f}"))
                    .ok_or_else(|| D::Error::custom(format!("cannot represent {f} exactly")))
            }
            Raw::Text(t) => {
                parse_ratio(&t).ok_or_else(|| D::Error::custom(format!("invalid ratio `{t}`")))
            }
        }
    }
}
