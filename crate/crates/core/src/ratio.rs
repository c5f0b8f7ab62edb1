//! Exact non-negative rationals for cycle-rate calibration.
//!
//! Rates are written in config files either as a JSON integer, a string
//! fraction `"2604/25"`, or a decimal string `"18.62"` (parsed exactly).

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(pub Ratio<u64>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rate {0:?}: expected integer, \"n/d\" or decimal")]
pub struct RateParseError(pub String);

impl Rate {
    pub fn integer(n: u64) -> Self {
        Rate(Ratio::from_integer(n))
    }

    pub fn new(numer: u64, denom: u64) -> Self {
        Rate(Ratio::new(numer, denom))
    }

    pub fn is_zero(&self) -> bool {
        *self.0.numer() == 0
    }

    /// `ceil(count * self)`.
    pub fn ceil_mul(&self, count: u64) -> u64 {
        let n = u128::from(*self.0.numer()) * u128::from(count);
        let d = u128::from(*self.0.denom());
        n.div_ceil(d) as u64
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl std::ops::Mul for Rate {
    type Output = Rate;
    fn mul(self, rhs: Rate) -> Rate {
        Rate(self.0 * rhs.0)
    }
}

impl FromStr for Rate {
    type Err = RateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RateParseError(s.to_owned());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Rate::new(n, d));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let frac_v: u64 = frac.parse().map_err(|_| bad())?;
            let denom = 10u64.pow(frac.len() as u32);
            let numer = int
                .checked_mul(denom)
                .and_then(|v| v.checked_add(frac_v))
                .ok_or_else(bad)?;
            return Ok(Rate::new(numer, denom));
        }
        s.parse::<u64>().map(Rate::integer).map_err(|_| bad())
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Rate::integer(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!("16".parse::<Rate>().unwrap(), Rate::integer(16));
        assert_eq!("2604/25".parse::<Rate>().unwrap(), Rate::new(2604, 25));
        assert_eq!("18.62".parse::<Rate>().unwrap(), Rate::new(1862, 100));
        assert_eq!(".5".parse::<Rate>().unwrap(), Rate::new(1, 2));
        assert!("1/0".parse::<Rate>().is_err());
        assert!("-3".parse::<Rate>().is_err());
        assert!("1.".parse::<Rate>().is_err());
    }

    #[test]
    fn ceil_mul_rounds_up() {
        let r = Rate::new(1862, 100);
        assert_eq!(r.ceil_mul(100), 1862);
        assert_eq!(r.ceil_mul(16), 298);
        assert_eq!(Rate::integer(3).ceil_mul(0), 0);
    }

    #[test]
    fn json_round_trip() {
        let r: Rate = serde_json::from_str("7").unwrap();
        assert_eq!(r, Rate::integer(7));
        let r: Rate = serde_json::from_str("\"3/6\"").unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), "\"1/2\"");
    }
}
