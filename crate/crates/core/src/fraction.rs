//! Exact fractions for thresholds and split ratios.

use num_rational::Ratio;
use thiserror::Error;

pub type Fraction = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid fraction `{0}` (expected `p/q` or a decimal such as `0.8`)")]
pub struct FractionError(pub String);

/// Parses `"2/3"`, `"0.8"`, `"1"` or `"80%"` into an exact fraction.
/// Decimals are read digit by digit, so `"0.1"` is exactly 1/10.
pub fn parse_fraction(s: &str) -> Result<Fraction, FractionError> {
    let err = || FractionError(s.to_string());
    let t = s.trim();
    if let Some(pct) = t.strip_suffix('%') {
        return Ok(parse_fraction(pct)? / Fraction::from_integer(100));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| err())?;
        let d: u64 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Fraction::new(n, d));
    }
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return Err(err());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
    let denom = 10u64.pow(frac.len() as u32);
    let frac_num: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
    let num = int
        .checked_mul(denom)
        .and_then(|x| x.checked_add(frac_num))
        .ok_or_else(err)?;
    Ok(Fraction::new(num, denom))
}

pub fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}
