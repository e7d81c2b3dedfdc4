//! Admissible growth functions `g` and the rational exponent `τ`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive rational `num/den` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::ZeroDenominator);
        }
        let g = num.gcd(&den).max(1);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    /// `⌈(num/den)·x⌉`.
    pub fn ceil_mul(&self, x: u32) -> u32 {
        let prod = self.num as u128 * x as u128;
        prod.div_ceil(self.den as u128) as u32
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("expected NUM/DEN, got {s:?}"));
        let (n, d) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Ratio::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

/// The growth function registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Growth {
    /// `t^γ`.
    Power(Ratio),
    /// `ln(1 + t)`.
    Log,
    /// `ln(1 + t)^{1/j}`.
    LogRoot(u32),
}

impl Default for Growth {
    fn default() -> Self {
        Growth::Power(Ratio { num: 1, den: 2 })
    }
}

impl Growth {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Growth::Power(g) => t.powf(g.to_f64()),
            Growth::Log => t.ln_1p(),
            Growth::LogRoot(j) => t.ln_1p().powf(1.0 / *j as f64),
        }
    }

    /// `ln g(p^e)`, stable for large `e`.
    pub fn ln_at_power(&self, p: u64, e: u32) -> f64 {
        let lnp = (p as f64).ln();
        let ln_ln1p = || {
            // ln(1 + p^e) = e ln p + ln(1 + p^-e)
            let inner = e as f64 * lnp + (-(e as f64) * lnp).exp().ln_1p();
            inner.ln()
        };
        match self {
            Growth::Power(g) => g.to_f64() * e as f64 * lnp,
            Growth::Log => ln_ln1p(),
            Growth::LogRoot(j) => ln_ln1p() / *j as f64,
        }
    }

    /// Decides `lhs < g(p^e)`; exact for power growth.
    pub fn exceeds(&self, lhs: &BigRational, p: u64, e: u32) -> bool {
        if !lhs.is_positive() {
            return true;
        }
        match self {
            Growth::Power(g) => {
                // lhs^den < p^{num·e}
                let left = lhs.numer().pow(g.den as u32);
                let right = lhs.denom().pow(g.den as u32) * BigInt::from(p).pow((g.num * e as u64) as u32);
                left < right
            }
            _ => ln_big(lhs) < self.ln_at_power(p, e),
        }
    }

    /// Decides `p^a < g(p^e)`; exact for power growth.
    pub fn exceeds_power(&self, p: u64, a: u64, e: u32) -> bool {
        match self {
            Growth::Power(g) => g.num as u128 * e as u128 > a as u128 * g.den as u128,
            _ => (a as f64) * (p as f64).ln() < self.ln_at_power(p, e),
        }
    }
}

fn ln_big(x: &BigRational) -> f64 {
    let bits = |n: &BigInt| n.bits() as i64;
    let shift = |n: &BigInt| -> f64 {
        let b = bits(n);
        let s = (b - 60).max(0);
        let top = (n >> s as usize).to_f64().unwrap_or(f64::NAN);
        top.ln() + s as f64 * std::f64::consts::LN_2
    };
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    shift(x.numer()) - shift(x.denom())
}

impl fmt::Display for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Growth::Power(g) => write!(f, "power:{g}"),
            Growth::Log => write!(f, "log"),
            Growth::LogRoot(j) => write!(f, "logroot:{j}"),
        }
    }
}

impl FromStr for Growth {
    type Err = Error;

    /// Accepts `sqrt`, `power[:γ]`, `log`, `logroot:j`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.trim().split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s.trim(), None),
        };
        match (name, param) {
            ("sqrt", None) | ("power", None) => Ok(Growth::default()),
            ("power", Some(g)) => {
                let g: Ratio = g.parse()?;
                if g.num == 0 {
                    return Err(Error::InvalidParams("growth exponent must be positive".into()));
                }
                Ok(Growth::Power(g))
            }
            ("log", None) => Ok(Growth::Log),
            ("logroot", Some(j)) => {
                let j: u32 = j
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad logroot parameter {j:?}")))?;
                if j == 0 {
                    return Err(Error::InvalidParams("logroot needs j >= 1".into()));
                }
                Ok(Growth::LogRoot(j))
            }
            _ => Err(Error::Parse(format!("unknown growth function {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_ceiling() {
        let tau: Ratio = "5/2".parse().unwrap();
        assert_eq!(tau.ceil_mul(1), 3);
        assert_eq!(tau.ceil_mul(2), 5);
        assert_eq!(tau.ceil_mul(7), 18);
        assert_eq!("6/2".parse::<Ratio>().unwrap(), Ratio { num: 3, den: 1 });
        assert!("x/2".parse::<Ratio>().is_err());
        assert!("1/0".parse::<Ratio>().is_err());
    }

    #[test]
    fn parse_registry() {
        assert_eq!("sqrt".parse::<Growth>().unwrap(), Growth::default());
        assert_eq!("log".parse::<Growth>().unwrap(), Growth::Log);
        assert_eq!("logroot:3".parse::<Growth>().unwrap(), Growth::LogRoot(3));
        assert_eq!(
            "power:1/3".parse::<Growth>().unwrap(),
            Growth::Power(Ratio { num: 1, den: 3 })
        );
        assert!("cubic".parse::<Growth>().is_err());
        for g in ["power:1/2", "log", "logroot:2"] {
            assert_eq!(g.parse::<Growth>().unwrap().to_string(), g);
        }
    }

    #[test]
    fn exact_power_comparison() {
        let g = Growth::default();
        // 3^3 < 3^{M/2} iff M > 6
        assert!(!g.exceeds_power(3, 3, 6));
        assert!(g.exceeds_power(3, 3, 7));
        let lhs = BigRational::from_integer(27.into());
        assert!(!g.exceeds(&lhs, 3, 6));
        assert!(g.exceeds(&lhs, 3, 7));
    }

    #[test]
    fn log_growth_is_slow() {
        let g = Growth::Log;
        assert!((g.ln_at_power(3, 10) - (10.0 * 3f64.ln()).ln()).abs() < 1e-5);
        assert!(!g.exceeds_power(3, 3, 10));
    }
}
