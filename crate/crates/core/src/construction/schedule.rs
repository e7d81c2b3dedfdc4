//! Choice of the level sequence `M_0 < M_1 < … < M_K`.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use super::params::{BuildMode, ConstructionParams, Shape};
use super::primes::{enumerable, enumerate_qm};
use crate::error::{Error, Result};

/// Largest `M` the greedy search will consider.
pub const MAX_SEARCH_M: u32 = 100_000;

#[derive(Clone, Debug)]
pub struct Level {
    pub m: u32,
    /// `⌈τM⌉`.
    pub l: u32,
    /// `Q_M` when it is small enough to enumerate.
    pub primes: Option<Arc<Vec<u64>>>,
}

impl Level {
    pub fn q_count(&self) -> Option<usize> {
        self.primes.as_ref().map(|q| q.len())
    }
}

/// Which size conditions hold at one level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionCheck {
    pub k: usize,
    /// `⌈τM_{k-1}⌉ < M_k`.
    pub separation: bool,
    /// `p^{e⌈τM_{k-1}⌉} < g(p^{M_k})`, `e = mn`.
    pub growth: bool,
    /// Product condition; scalar shape only, `None` when it cannot be evaluated.
    pub product: Option<bool>,
}

impl ConditionCheck {
    pub fn all_hold(&self) -> bool {
        self.separation && self.growth && self.product.unwrap_or(true)
    }
}

#[derive(Clone, Debug)]
pub struct LevelSchedule {
    pub prime: u64,
    pub m0: u32,
    /// `⌈τM_0⌉`.
    pub l0: u32,
    pub levels: Vec<Level>,
    pub checks: Vec<ConditionCheck>,
    pub mode: BuildMode,
}

impl LevelSchedule {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `k ≥ 1`.
    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k - 1]
    }

    pub fn ms(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.m).collect()
    }

    pub fn ls(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.l).collect()
    }

    /// `⌈τM_k⌉` with `k = 0` allowed.
    pub fn l_of(&self, k: usize) -> u32 {
        if k == 0 {
            self.l0
        } else {
            self.level(k).l
        }
    }

    pub fn m_of(&self, k: usize) -> u32 {
        if k == 0 {
            self.m0
        } else {
            self.level(k).m
        }
    }

    pub fn primes(&self, k: usize) -> Result<&Arc<Vec<u64>>> {
        self.level(k).primes.as_ref().ok_or_else(|| Error::ResolutionBudget {
            requested_depth: k,
            feasible_depth: k - 1,
            detail: format!("Q_M for M = {} cannot be enumerated", self.level(k).m),
        })
    }

    pub fn all_conditions_hold(&self) -> bool {
        self.checks.iter().all(|c| c.all_hold())
    }
}

/// `Π_{i<k} p^{L_i} / (|Q_{M_i}| p^{M_i})`, or `None` if a prime set is unknown.
fn product_term(p: u64, levels: &[Level]) -> Option<BigRational> {
    let mut acc = BigRational::one();
    for lv in levels {
        let q = lv.q_count()?;
        let num = BigInt::from(p).pow(lv.l);
        let den = BigInt::from(q) * BigInt::from(p).pow(lv.m);
        acc *= BigRational::new(num, den);
    }
    Some(acc)
}

fn growth_exponent(shape: Shape) -> u64 {
    let (m, n) = shape.mn();
    match shape {
        Shape::Scalar => 1,
        Shape::Matrix { .. } => m as u64 * n as u64,
    }
}

fn check_level(params: &ConstructionParams, prev: &[Level], l_prev: u32, m: u32, k: usize) -> ConditionCheck {
    let p = params.prime;
    let separation = l_prev < m;
    let growth = params
        .growth
        .exceeds_power(p, growth_exponent(params.shape) * l_prev as u64, m);
    let product = if params.shape.is_scalar() {
        product_term(p, prev).map(|lhs| params.growth.exceeds(&lhs, p, m))
    } else {
        None
    };
    ConditionCheck {
        k,
        separation,
        growth,
        product,
    }
}

fn make_level(params: &ConstructionParams, m: u32) -> Result<Level> {
    let primes = if enumerable(params.prime, m) {
        Some(Arc::new(enumerate_qm(params.prime, m)?))
    } else {
        None
    };
    Ok(Level {
        m,
        l: params.level_of(m),
        primes,
    })
}

/// Greedy minimal schedule (faithful) or the user's list with the conditions
/// evaluated (toy).
pub fn choose_mk(params: &ConstructionParams) -> Result<LevelSchedule> {
    params.validate()?;
    let m0 = params.m0();
    let l0 = params.level_of(m0);
    let mut levels: Vec<Level> = Vec::new();
    let mut checks = Vec::new();
    match &params.mode {
        BuildMode::Faithful => {
            for k in 1..=params.depth {
                let (m_prev, l_prev) = levels.last().map_or((m0, l0), |l: &Level| (l.m, l.l));
                if params.shape.is_scalar() && product_term(params.prime, &levels).is_none() {
                    return Err(Error::ResolutionBudget {
                        requested_depth: params.depth,
                        feasible_depth: k - 1,
                        detail: format!(
                            "choosing M_{k} needs |Q_M| for M = {m_prev}, which is beyond the enumeration limit"
                        ),
                    });
                }
                let mut found = None;
                for m in (m_prev + 1)..=MAX_SEARCH_M {
                    let c = check_level(params, &levels, l_prev, m, k);
                    if c.all_hold() {
                        found = Some((m, c));
                        break;
                    }
                }
                let (m, c) = found.ok_or_else(|| Error::ResolutionBudget {
                    requested_depth: params.depth,
                    feasible_depth: k - 1,
                    detail: format!("no admissible M_{k} up to {MAX_SEARCH_M}"),
                })?;
                levels.push(make_level(params, m)?);
                checks.push(c);
            }
        }
        BuildMode::Toy(ms) => {
            let mut prev = m0;
            for (i, &m) in ms.iter().enumerate() {
                if m <= prev {
                    return Err(Error::InvalidParams(format!(
                        "toy M-list must be strictly increasing from M_0 = {m0}"
                    )));
                }
                let l_prev = levels.last().map_or(l0, |l: &Level| l.l);
                checks.push(check_level(params, &levels, l_prev, m, i + 1));
                levels.push(make_level(params, m)?);
                prev = m;
            }
        }
    }
    Ok(LevelSchedule {
        prime: params.prime,
        m0,
        l0,
        levels,
        checks,
        mode: params.mode.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::growth::Ratio;

    fn tau(s: &str) -> Ratio {
        s.parse().unwrap()
    }

    #[test]
    fn first_level_for_three() {
        let s = choose_mk(&ConstructionParams::scalar(3, tau("5/2"), 1)).unwrap();
        assert_eq!(s.ms(), vec![7]);
        assert_eq!(s.ls(), vec![18]);
        assert!(s.all_conditions_hold());
    }

    #[test]
    fn greedy_is_minimal() {
        // exhaustive scan against both inequalities
        let params = ConstructionParams::scalar(3, tau("5/2"), 1);
        let first = (2..=20u32)
            .find(|&m| m > 3 && 27f64 < 3f64.powf(m as f64 / 2.0))
            .unwrap();
        assert_eq!(choose_mk(&params).unwrap().ms(), vec![first]);
    }

    #[test]
    fn second_level_uses_product_condition() {
        let s = choose_mk(&ConstructionParams::scalar(3, tau("5/2"), 2)).unwrap();
        assert_eq!(s.ms(), vec![7, 37]);
        assert!(s.level(2).primes.is_none());
    }

    #[test]
    fn matrix_schedule() {
        let s = choose_mk(&ConstructionParams::matrix(3, tau("2"), 2, 1, 1)).unwrap();
        assert_eq!(s.ms(), vec![9]);
        assert_eq!(s.ls(), vec![18]);
    }

    #[test]
    fn toy_reports_conditions() {
        let s = choose_mk(&ConstructionParams::toy(3, tau("5/2"), vec![1, 2])).unwrap();
        assert_eq!(s.ms(), vec![1, 2]);
        assert!(s.checks[0].separation);
        assert!(!s.checks[1].separation);
        assert!(!s.all_conditions_hold());
        let bad = ConstructionParams::toy(3, tau("5/2"), vec![2, 2]);
        assert!(choose_mk(&bad).is_err());
        let p2 = ConstructionParams::toy(2, tau("5/2"), vec![3, 4]);
        assert!(choose_mk(&p2).is_ok());
    }
}
