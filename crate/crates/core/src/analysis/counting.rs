//! Enumeration checks of the ball-counting bounds behind the regularity
//! estimate.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::arith::{checked_pow, inv_mod, mul_mod};
use crate::construction::{choose_mk, ConstructionParams, FmLevel, LevelSchedule};
use crate::error::{Error, Result};
use crate::stepfn::StepDensity;

/// Levels whose pair count squared exceeds this skip the pairwise test.
const PAIRWISE_CAP: u128 = 4_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct DisjointRow {
    pub j: usize,
    pub m: u32,
    pub distinct_fractions: usize,
    pub pairs_checked: u64,
    pub violations: u64,
    pub skipped: bool,
}

/// `J`: the number of `j`-balls meeting `B(x, p^{-ℓ})`, maximized over all
/// centers `x` mod `p^ℓ`.
#[derive(Clone, Debug, Serialize)]
pub struct NonIBallRow {
    pub j: usize,
    pub ell: u32,
    pub centers: u64,
    pub max_j: u64,
    pub bound_a: f64,
    pub bound_b: f64,
    pub violations: u64,
}

/// `k`-balls of `supp P_k` inside one `j`-ball of `supp P_j`.
#[derive(Clone, Debug, Serialize)]
pub struct IBallRow {
    pub j: usize,
    pub k: usize,
    pub j_balls: usize,
    pub max_count: u64,
    pub min_count: u64,
    pub bound: f64,
    pub violations: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingReport {
    pub prime: u64,
    pub ms: Vec<u32>,
    pub ls: Vec<u32>,
    pub disjoint: Vec<DisjointRow>,
    pub non_i_ball: Vec<NonIBallRow>,
    pub i_ball: Vec<IBallRow>,
}

impl CountingReport {
    pub fn violations(&self) -> u64 {
        self.disjoint.iter().map(|r| r.violations).sum::<u64>()
            + self.non_i_ball.iter().map(|r| r.violations).sum::<u64>()
            + self.i_ball.iter().map(|r| r.violations).sum::<u64>()
    }
}

fn level_primes(schedule: &LevelSchedule, j: usize) -> Result<&[u64]> {
    Ok(schedule.primes(j)?.as_slice())
}

/// `|r/q - r'/q'|_p > p^{-2M}` for distinct fractions: `v_p(rq' - r'q) < 2M`.
fn disjoint_check(p: u64, j: usize, m: u32, primes: &[u64]) -> Result<DisjointRow> {
    let rm = checked_pow(p, m).ok_or(Error::LevelOverflow { prime: p, level: m })?;
    let mut fracs: BTreeSet<BigRational> = BTreeSet::new();
    for &q in primes {
        for r in 0..rm {
            fracs.insert(BigRational::new(BigInt::from(r), BigInt::from(q)));
        }
    }
    let n = fracs.len() as u128;
    let mut row = DisjointRow {
        j,
        m,
        distinct_fractions: fracs.len(),
        pairs_checked: 0,
        violations: 0,
        skipped: n * n > PAIRWISE_CAP,
    };
    if row.skipped {
        return Ok(row);
    }
    let fracs: Vec<BigRational> = fracs.into_iter().collect();
    let bound = BigInt::from(p).pow(2 * m);
    for (i, a) in fracs.iter().enumerate() {
        for b in &fracs[i + 1..] {
            row.pairs_checked += 1;
            let cross = a.numer() * b.denom() - b.numer() * a.denom();
            if (&cross % &bound) == BigInt::from(0) {
                row.violations += 1;
            }
        }
    }
    Ok(row)
}

/// Distinct centers `r q^{-1}` mod `p^{L}` of the level's balls.
fn ball_centers(p: u64, m: u32, l: u32, primes: &[u64]) -> Result<BTreeSet<u64>> {
    let modulus = checked_pow(p, l).ok_or(Error::LevelOverflow { prime: p, level: l })?;
    let rm = checked_pow(p, m).ok_or(Error::LevelOverflow { prime: p, level: m })?;
    let mut out = BTreeSet::new();
    for &q in primes {
        let qi = inv_mod(q % modulus, modulus).expect("q is a unit");
        for r in 0..rm {
            out.insert(mul_mod(r, qi, modulus));
        }
    }
    Ok(out)
}

fn non_i_ball_rows(p: u64, j: usize, m: u32, l: u32, primes: &[u64]) -> Result<Vec<NonIBallRow>> {
    let centers = ball_centers(p, m, l, primes)?;
    let mut rows = Vec::new();
    for ell in 1..=l {
        let modulus = checked_pow(p, ell).expect("ℓ ≤ L");
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for c in &centers {
            *counts.entry(c % modulus).or_insert(0) += 1;
        }
        let bound_a = (p as f64).powi(2 * m as i32 - ell as i32).max(1.0);
        let bound_b = (p as f64).powi(m as i32 - ell as i32).max(1.0) * primes.len() as f64;
        let violations = counts
            .values()
            .filter(|&&c| c as f64 > bound_a || c as f64 > bound_b)
            .count() as u64;
        rows.push(NonIBallRow {
            j,
            ell,
            centers: modulus,
            max_j: counts.values().copied().max().unwrap_or(0),
            bound_a,
            bound_b,
            violations,
        });
    }
    Ok(rows)
}

/// Supports of `P_k = F_{M_1} ⋯ F_{M_k}` for `k = 1..=K`, without `ψ_0`.
fn product_supports(params: &ConstructionParams, schedule: &LevelSchedule) -> Result<Vec<StepDensity>> {
    let mut out: Vec<StepDensity> = Vec::new();
    for k in 1..=schedule.depth() {
        let lv = schedule.level(k);
        let fm = FmLevel::with_primes(params, lv.m, schedule.primes(k)?.clone());
        let f = fm.density(crate::stepfn::DEFAULT_CELL_BUDGET)?;
        let next = match out.last() {
            Some(prev) => prev.multiply(&f)?,
            None => f,
        };
        out.push(next);
    }
    Ok(out)
}

fn i_ball_rows(p: u64, schedule: &LevelSchedule, supports: &[StepDensity]) -> Result<Vec<IBallRow>> {
    let mut rows = Vec::new();
    for j in 1..=supports.len() {
        let lj = schedule.l_of(j);
        let mj = checked_pow(p, lj).ok_or(Error::LevelOverflow { prime: p, level: lj })?;
        let j_balls: Vec<u64> = supports[j - 1].iter().map(|(c, _)| c[0]).collect();
        let mut bound = 1.0;
        for k in j..=supports.len() {
            if k > j {
                let mi = schedule.m_of(k);
                let lprev = schedule.l_of(k - 1);
                let q = schedule.level(k).q_count().unwrap_or(0) as f64;
                bound *= (p as f64).powi(mi as i32 - lprev as i32).max(1.0) * q;
            }
            let mut counts: HashMap<u64, u64> = j_balls.iter().map(|&c| (c, 0)).collect();
            for (c, _) in supports[k - 1].iter() {
                if let Some(n) = counts.get_mut(&(c[0] % mj)) {
                    *n += 1;
                }
            }
            let violations = counts.values().filter(|&&n| n as f64 > bound).count() as u64
                + if k == j {
                    counts.values().filter(|&&n| n != 1).count() as u64
                } else {
                    0
                };
            rows.push(IBallRow {
                j,
                k,
                j_balls: j_balls.len(),
                max_count: counts.values().copied().max().unwrap_or(0),
                min_count: counts.values().copied().min().unwrap_or(0),
                bound,
                violations,
            });
        }
    }
    Ok(rows)
}

/// Separation of distinct fractions, the two bounds on `J`, and the nested
/// ball counts, on every level of a scalar schedule that can be enumerated.
pub fn counting_checks(params: &ConstructionParams) -> Result<CountingReport> {
    if !params.shape.is_scalar() {
        return Err(Error::InvalidParams("counting checks need the scalar shape".into()));
    }
    let schedule = choose_mk(params)?;
    let p = params.prime;
    let mut disjoint = Vec::new();
    let mut non_i_ball = Vec::new();
    for j in 1..=schedule.depth() {
        let primes = level_primes(&schedule, j)?;
        let m = schedule.m_of(j);
        disjoint.push(disjoint_check(p, j, m, primes)?);
        non_i_ball.extend(non_i_ball_rows(p, j, m, schedule.l_of(j), primes)?);
    }
    let supports = product_supports(params, &schedule)?;
    let i_ball = i_ball_rows(p, &schedule, &supports)?;
    Ok(CountingReport {
        prime: p,
        ms: schedule.ms(),
        ls: schedule.ls(),
        disjoint,
        non_i_ball,
        i_ball,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(ms: Vec<u32>) -> ConstructionParams {
        ConstructionParams::toy(3, "5/2".parse().unwrap(), ms)
    }

    #[test]
    fn fractions_for_m1() {
        // Q_1 = {2}: fractions 0, 1/2, 1, pairwise 3-adic distance > 3^-2
        let row = disjoint_check(3, 1, 1, &[2]).unwrap();
        assert_eq!(row.distinct_fractions, 3);
        assert_eq!(row.pairs_checked, 3);
        assert_eq!(row.violations, 0);
    }

    #[test]
    fn small_schedules_have_no_violations() {
        for ms in [vec![1, 4], vec![2, 6]] {
            let r = counting_checks(&toy(ms.clone())).unwrap();
            assert_eq!(r.violations(), 0, "{ms:?}: {r:?}");
        }
    }

    #[test]
    fn deep_shells_meet_one_ball() {
        let r = counting_checks(&toy(vec![1, 4])).unwrap();
        for row in r.non_i_ball.iter().filter(|row| row.j == 1 && row.ell >= 2) {
            assert!(row.max_j <= 1);
        }
    }

    #[test]
    fn base_step_counts_each_ball_once() {
        let r = counting_checks(&toy(vec![1, 4])).unwrap();
        let base = r.i_ball.iter().find(|row| row.j == 1 && row.k == 1).unwrap();
        assert_eq!((base.min_count, base.max_count), (1, 1));
    }
}
