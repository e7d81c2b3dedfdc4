use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::growth::{Growth, Ratio};
use crate::arith::validate_prime;
use crate::error::{Error, Result};

/// Scalar (`Z_p`) or `m×n` matrix (`Z_p^{mn}`) construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Matrix { m: u32, n: u32 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Matrix { m, n } => (*m * *n) as usize,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Shape::Scalar)
    }

    /// `(m, n)`, with the scalar case as `1×1`.
    pub fn mn(&self) -> (u32, u32) {
        match self {
            Shape::Scalar => (1, 1),
            Shape::Matrix { m, n } => (*m, *n),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Matrix { m, n } => write!(f, "mxn {m} {n}"),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// `scalar`, `mxn M N` or `MxN`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "scalar" {
            return Ok(Shape::Scalar);
        }
        let bad = || Error::Parse(format!("bad shape {s:?}"));
        let (m, n) = if let Some(rest) = s.strip_prefix("mxn") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match parts.as_slice() {
                [m, n] => (*m, *n),
                _ => return Err(bad()),
            }
        } else {
            s.split_once('x').ok_or_else(bad)?
        };
        let m: u32 = m.trim().parse().map_err(|_| bad())?;
        let n: u32 = n.trim().parse().map_err(|_| bad())?;
        if m == 0 || n == 0 {
            return Err(bad());
        }
        Ok(Shape::Matrix { m, n })
    }
}

/// Faithful schedules satisfy every size condition; toy schedules are
/// user-chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuildMode {
    Faithful,
    Toy(Vec<u32>),
}

impl BuildMode {
    pub fn name(&self) -> &'static str {
        match self {
            BuildMode::Faithful => "faithful",
            BuildMode::Toy(_) => "toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub prime: u64,
    pub tau: Ratio,
    pub shape: Shape,
    pub growth: Growth,
    pub depth: usize,
    pub m0: Option<u32>,
    pub mode: BuildMode,
}

impl ConstructionParams {
    pub fn scalar(prime: u64, tau: Ratio, depth: usize) -> Self {
        ConstructionParams {
            prime,
            tau,
            shape: Shape::Scalar,
            growth: Growth::default(),
            depth,
            m0: None,
            mode: BuildMode::Faithful,
        }
    }

    pub fn matrix(prime: u64, tau: Ratio, m: u32, n: u32, depth: usize) -> Self {
        ConstructionParams {
            shape: Shape::Matrix { m, n },
            ..Self::scalar(prime, tau, depth)
        }
    }

    /// Toy parameters whose depth is the length of `ms`.
    pub fn toy(prime: u64, tau: Ratio, ms: Vec<u32>) -> Self {
        ConstructionParams {
            depth: ms.len(),
            mode: BuildMode::Toy(ms),
            ..Self::scalar(prime, tau, 0)
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_growth(mut self, g: Growth) -> Self {
        self.growth = g;
        self
    }

    pub fn with_m0(mut self, m0: u32) -> Self {
        self.m0 = Some(m0);
        self
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// `M_0`, defaulting to 1 (2 when `p = 2`), lowered below `M_1` for toy
    /// lists that start at or below the default.
    pub fn m0(&self) -> u32 {
        let default = if self.prime == 2 { 2 } else { 1 };
        match (&self.m0, &self.mode) {
            (Some(m), _) => *m,
            (None, BuildMode::Toy(ms)) => ms.first().map_or(default, |&m1| default.min(m1.saturating_sub(1))),
            (None, BuildMode::Faithful) => default,
        }
    }

    /// `⌈τM⌉`.
    pub fn level_of(&self, m: u32) -> u32 {
        self.tau.ceil_mul(m)
    }

    pub fn validate(&self) -> Result<()> {
        validate_prime(self.prime)?;
        match self.shape {
            Shape::Scalar => {
                if !(self.tau.num > 2 * self.tau.den) {
                    return Err(Error::InvalidParams(format!("tau = {} must exceed 2", self.tau)));
                }
            }
            Shape::Matrix { m, n } => {
                if m == 0 || n == 0 {
                    return Err(Error::InvalidParams("matrix dimensions must be positive".into()));
                }
                // tau > (m+n)/m
                if self.tau.num as u128 * m as u128 <= (m + n) as u128 * self.tau.den as u128 {
                    return Err(Error::InvalidParams(format!(
                        "tau = {} must exceed (m+n)/m = {}/{}",
                        self.tau,
                        m + n,
                        m
                    )));
                }
            }
        }
        if self.depth == 0 {
            return Err(Error::InvalidParams("depth must be at least 1".into()));
        }
        if let BuildMode::Toy(ms) = &self.mode {
            if ms.len() != self.depth {
                return Err(Error::InvalidParams("toy M-list length must equal the depth".into()));
            }
        }
        if self.prime == 2 {
            if let Some(m) = self.m0.filter(|&m| m < 2) {
                return Err(Error::StandingAssumption { p: 2, m });
            }
            if let BuildMode::Toy(ms) = &self.mode {
                if let Some(&m) = ms.iter().find(|&&m| m < 2) {
                    return Err(Error::StandingAssumption { p: 2, m });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(s: &str) -> Ratio {
        s.parse().unwrap()
    }

    #[test]
    fn tau_thresholds() {
        assert!(ConstructionParams::scalar(3, tau("5/2"), 1).validate().is_ok());
        assert!(ConstructionParams::scalar(3, tau("2"), 1).validate().is_err());
        assert!(ConstructionParams::matrix(3, tau("2"), 2, 1, 1).validate().is_ok());
        assert!(ConstructionParams::matrix(3, tau("3/2"), 2, 1, 1).validate().is_err());
        assert!(ConstructionParams::scalar(4, tau("5/2"), 1).validate().is_err());
    }

    #[test]
    fn standing_assumption() {
        let p = ConstructionParams::scalar(2, tau("5/2"), 1).with_m0(1);
        assert!(matches!(p.validate(), Err(Error::StandingAssumption { .. })));
        assert_eq!(ConstructionParams::scalar(2, tau("5/2"), 1).m0(), 2);
    }

    #[test]
    fn shapes() {
        assert_eq!("scalar".parse::<Shape>().unwrap(), Shape::Scalar);
        assert_eq!("mxn 2 1".parse::<Shape>().unwrap(), Shape::Matrix { m: 2, n: 1 });
        assert_eq!("2x3".parse::<Shape>().unwrap(), Shape::Matrix { m: 2, n: 3 });
        assert!("mxn 2".parse::<Shape>().is_err());
        assert_eq!(Shape::Matrix { m: 2, n: 3 }.dim(), 6);
    }
}
