//! Machine-integer number theory used by the hot kernels.
//!
//! Everything here works on residues below `p^L < 2^63`, so products fit in
//! `u128` without overflow.

use crate::error::{Error, Result};

/// Largest modulus the machine kernels accept.
pub const MACHINE_MODULUS_LIMIT: u64 = 1 << 63;

/// `p^e` if it stays below [`MACHINE_MODULUS_LIMIT`].
pub fn checked_pow(p: u64, e: u32) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(p)?;
        if acc >= MACHINE_MODULUS_LIMIT {
            return None;
        }
    }
    Some(acc)
}

/// `p^e` or an overflow error naming the offending level.
pub fn pow_or_err(p: u64, e: u32) -> Result<u64> {
    checked_pow(p, e).ok_or(Error::LevelOverflow { prime: p, level: e })
}

/// Multiplies modulo `m` through a `u128` intermediate.
#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = (a as i128 % m as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Exponent of `p` in a nonzero `n`.
pub fn val_u64(mut n: u64, p: u64) -> u32 {
    debug_assert!(n != 0);
    let mut v = 0;
    while n.is_multiple_of(p) {
        n /= p;
        v += 1;
    }
    v
}

/// Deterministic primality by trial division; used only on the small prime `p`.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Rejects anything that is not a prime usable as the base of the field.
pub fn validate_prime(p: u64) -> Result<()> {
    if !is_prime_u64(p) || p >= 1 << 31 {
        return Err(Error::InvalidPrime(p));
    }
    Ok(())
}

/// Residue `a` at level `from` reinterpreted at the finer level `to`
/// (the fraction `a/p^from` written over `p^to`).
#[inline]
pub fn lift_index(a: u64, p: u64, from: u32, to: u32) -> u64 {
    debug_assert!(to >= from);
    let mut a = a;
    for _ in from..to {
        a *= p;
    }
    a
}

/// Signed distance of `a/n` to the nearest integer, as an `f64` in `[-1/2, 1/2)`.
#[inline]
pub fn centered_fraction(a: u64, n: u64) -> f64 {
    let a = a % n;
    if a >= n - a {
        -((n - a) as f64 / n as f64)
    } else {
        a as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_two_mod_nine_and_27() {
        assert_eq!(inv_mod(2, 9), Some(5));
        assert_eq!(inv_mod(2, 27), Some(14));
        assert_eq!(inv_mod(3, 9), None);
    }

    #[test]
    fn pow_limits() {
        assert_eq!(checked_pow(3, 0), Some(1));
        assert_eq!(checked_pow(3, 5), Some(243));
        assert!(checked_pow(3, 39).is_some());
        assert!(checked_pow(3, 40).is_none());
        assert!(checked_pow(2, 63).is_none());
    }

    #[test]
    fn primes() {
        let small: Vec<u64> = (0..30).filter(|&n| is_prime_u64(n)).collect();
        assert_eq!(small, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(validate_prime(4).is_err());
    }

    #[test]
    fn centered() {
        assert_eq!(centered_fraction(1, 4), 0.25);
        assert_eq!(centered_fraction(3, 4), -0.25);
        assert_eq!(centered_fraction(2, 4), -0.5);
    }
}
