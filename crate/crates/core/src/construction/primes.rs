//! The prime sets `Q_M = {q prime : p^M/2 ≤ q < p^M, p ∤ q}`.

use crate::arith::checked_pow;
use crate::error::{Error, Result};

/// Largest `p^M` whose prime set is enumerated.
pub const ENUMERATION_LIMIT: u64 = 1 << 28;

const SEGMENT: u64 = 1 << 18;

/// Sorted primes of `Q_M` by a segmented sieve of Eratosthenes.
pub fn enumerate_qm(p: u64, m: u32) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(Error::InvalidParams("M must be at least 1".into()));
    }
    if p == 2 && m == 1 {
        return Err(Error::StandingAssumption { p, m });
    }
    let hi = checked_pow(p, m)
        .filter(|&h| h <= ENUMERATION_LIMIT)
        .ok_or_else(|| Error::ResolutionBudget {
            requested_depth: 0,
            feasible_depth: 0,
            detail: format!("prime set for p^M = {p}^{m} exceeds the enumeration limit {ENUMERATION_LIMIT}"),
        })?;
    let lo = hi.div_ceil(2);
    let out: Vec<u64> = primes_in(lo, hi).into_iter().filter(|q| q % p != 0).collect();
    if out.is_empty() {
        return Err(Error::EmptyPrimeSet { p, m });
    }
    Ok(out)
}

/// Whether `Q_M` can be enumerated within [`ENUMERATION_LIMIT`].
pub fn enumerable(p: u64, m: u32) -> bool {
    checked_pow(p, m).is_some_and(|h| h <= ENUMERATION_LIMIT)
}

fn small_primes(limit: u64) -> Vec<u64> {
    let n = limit as usize + 1;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Primes in `[lo, hi)`.
fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    let lo = lo.max(2);
    if lo >= hi {
        return Vec::new();
    }
    let base = small_primes((hi as f64).sqrt() as u64 + 1);
    let mut out = Vec::new();
    let mut start = lo;
    let mut sieve = vec![true; SEGMENT as usize];
    while start < hi {
        let end = (start + SEGMENT).min(hi);
        let len = (end - start) as usize;
        sieve[..len].iter_mut().for_each(|b| *b = true);
        for &q in &base {
            if q * q >= end {
                break;
            }
            let mut j = (start.div_ceil(q) * q).max(q * q);
            while j < end {
                sieve[(j - start) as usize] = false;
                j += q;
            }
        }
        out.extend((0..len).filter(|&i| sieve[i]).map(|i| start + i as u64));
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::is_prime_u64;

    #[test]
    fn small_sets() {
        assert_eq!(enumerate_qm(3, 1).unwrap(), vec![2]);
        assert_eq!(enumerate_qm(3, 2).unwrap(), vec![5, 7]);
        assert_eq!(enumerate_qm(5, 1).unwrap(), vec![3]);
        assert_eq!(enumerate_qm(2, 2).unwrap(), vec![3]);
        assert!(matches!(enumerate_qm(2, 1), Err(Error::StandingAssumption { .. })));
    }

    #[test]
    fn sieve_matches_trial_division() {
        for (p, m) in [(3u64, 7u32), (5, 5), (7, 4), (2, 13)] {
            let hi = p.pow(m);
            let want: Vec<u64> = (hi.div_ceil(2)..hi)
                .filter(|&q| is_prime_u64(q) && q % p != 0)
                .collect();
            assert_eq!(enumerate_qm(p, m).unwrap(), want);
        }
    }

    #[test]
    fn q7_for_three() {
        let q = enumerate_qm(3, 7).unwrap();
        assert_eq!(q.len(), 144);
        assert!(q.iter().all(|&x| 2 * x >= 2187 && x < 2187));
    }
}
