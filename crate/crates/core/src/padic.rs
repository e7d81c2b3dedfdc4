//! Exact rational representatives of p-adic numbers.
//!
//! Every p-adic quantity in the construction (the fractions `r/q`, the dual
//! points `a/p^l`, the cell centers) is rational, so elements of `Q_p` are
//! carried as reduced fractions together with the prime. Valuations,
//! absolute values and the fractional/integral split are then exact.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// p-adic valuation; `Infinite` is the valuation of zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

/// A rational number viewed as an element of `Q_p`.
#[derive(Clone)]
pub struct PadicRational {
    value: BigRational,
    prime: u64,
    valuation: OnceLock<Valuation>,
}

impl PadicRational {
    pub fn new(value: BigRational, prime: u64) -> Self {
        PadicRational {
            value,
            prime,
            valuation: OnceLock::new(),
        }
    }

    pub fn from_integer(n: impl Into<BigInt>, prime: u64) -> Self {
        Self::new(BigRational::from_integer(n.into()), prime)
    }

    pub fn from_ratio(num: impl Into<BigInt>, den: impl Into<BigInt>, prime: u64) -> Result<Self> {
        let den = den.into();
        if den.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Self::new(BigRational::new(num.into(), den), prime))
    }

    pub fn zero(prime: u64) -> Self {
        Self::new(BigRational::zero(), prime)
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn numer(&self) -> &BigInt {
        self.value.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.value.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    /// `v_p(num) - v_p(den)`, cached after the first call.
    pub fn valuation(&self) -> Valuation {
        *self.valuation.get_or_init(|| {
            if self.value.is_zero() {
                Valuation::Infinite
            } else {
                let p = BigInt::from(self.prime);
                Valuation::Finite(
                    big_val(self.value.numer(), &p) as i64 - big_val(self.value.denom(), &p) as i64,
                )
            }
        })
    }

    /// `|x|_p = p^{-v}` as an exact rational (zero for `x = 0`).
    pub fn abs_p(&self) -> BigRational {
        match self.valuation() {
            Valuation::Infinite => BigRational::zero(),
            Valuation::Finite(v) => rational_pow(self.prime, -v),
        }
    }

    /// `|x|_p ≤ 1`.
    pub fn is_integral(&self) -> bool {
        match self.valuation() {
            Valuation::Infinite => true,
            Valuation::Finite(v) => v >= 0,
        }
    }

    /// The p-adic fractional part `{x}_p`: a rational in `[0, 1)` whose
    /// denominator is a power of `p`, with `x - {x}_p ∈ Z_p`.
    pub fn frac_part(&self) -> PadicRational {
        let (index, level) = self.frac_index();
        let den = BigInt::from(self.prime).pow(level);
        PadicRational::new(BigRational::new(BigInt::from_biguint(Sign::Plus, index), den), self.prime)
    }

    /// Rational representative of the p-adic integral part, `x - {x}_p`.
    pub fn int_part(&self) -> PadicRational {
        let frac = self.frac_part();
        PadicRational::new(&self.value - &frac.value, self.prime)
    }

    /// Exact phase `e({x}_p)`.
    pub fn char_phase(&self) -> UnitRootPhase {
        let (index, level) = self.frac_index();
        UnitRootPhase::new(index, level, self.prime)
    }

    /// `{x}_p = a / p^l` as `(a, l)`, with `a` coprime to `p` unless `a = 0, l = 0`.
    fn frac_index(&self) -> (BigUint, u32) {
        let v = match self.valuation() {
            Valuation::Infinite => return (BigUint::zero(), 0),
            Valuation::Finite(v) if v >= 0 => return (BigUint::zero(), 0),
            Valuation::Finite(v) => v,
        };
        let level = (-v) as u32;
        let p = BigInt::from(self.prime);
        let modulus = p.pow(level);
        // x = a / (b p^l) with gcd(b, p) = 1
        let b = self.value.denom() / &modulus;
        let b_inv = inv_mod_big(&b, &modulus).expect("denominator cofactor is coprime to p");
        let a = self.value.numer().mod_floor(&modulus);
        let idx = (a * b_inv).mod_floor(&modulus);
        (idx.to_biguint().expect("nonnegative residue"), level)
    }

    fn check_prime(&self, other: &Self) {
        assert_eq!(
            self.prime, other.prime,
            "arithmetic between p-adic numbers of different primes"
        );
    }

    /// `p^k` as an element of `Q_p`; `k` may be negative.
    pub fn prime_power(prime: u64, k: i64) -> Self {
        Self::new(rational_pow(prime, k), prime)
    }

    /// Residue of an integral `x` modulo `p^level` (the level-`level` cell
    /// containing `x`); `None` when `x ∉ Z_p`.
    pub fn residue(&self, level: u32) -> Option<u64> {
        if !self.is_integral() {
            return None;
        }
        let modulus = BigInt::from(self.prime).pow(level);
        let den_inv = inv_mod_big(self.value.denom(), &modulus)?;
        let r = (self.value.numer() * den_inv).mod_floor(&modulus);
        r.to_u64()
    }

    pub fn to_f64(&self) -> f64 {
        self.value.to_f64().unwrap_or(f64::NAN)
    }
}

impl PartialEq for PadicRational {
    fn eq(&self, other: &Self) -> bool {
        self.prime == other.prime && self.value == other.value
    }
}

impl Eq for PadicRational {}

impl fmt::Debug for PadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (p={})", self.value, self.prime)
    }
}

impl fmt::Display for PadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<'a> $tr<&'a PadicRational> for &'a PadicRational {
            type Output = PadicRational;
            fn $m(self, rhs: &'a PadicRational) -> PadicRational {
                self.check_prime(rhs);
                PadicRational::new(&self.value $op &rhs.value, self.prime)
            }
        }
        impl $tr for PadicRational {
            type Output = PadicRational;
            fn $m(self, rhs: PadicRational) -> PadicRational {
                (&self).$m(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &PadicRational {
    type Output = PadicRational;
    fn neg(self) -> PadicRational {
        PadicRational::new(-&self.value, self.prime)
    }
}

/// Exact root of unity `e(index / p^level)` with `e(z) = exp(2πiz)`.
///
/// Stored canonically: `0 ≤ index < p^level` and `p ∤ index` unless the phase
/// is the identity `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnitRootPhase {
    index: BigUint,
    level: u32,
    prime: u64,
}

impl UnitRootPhase {
    pub fn new(index: BigUint, level: u32, prime: u64) -> Self {
        let p = BigUint::from(prime);
        let mut index = index % p.pow(level);
        let mut level = level;
        while level > 0 && (&index % &p).is_zero() {
            index /= &p;
            level -= 1;
        }
        if index.is_zero() {
            level = 0;
        }
        UnitRootPhase { index, level, prime }
    }

    pub fn identity(prime: u64) -> Self {
        UnitRootPhase {
            index: BigUint::zero(),
            level: 0,
            prime,
        }
    }

    pub fn index(&self) -> &BigUint {
        &self.index
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn is_identity(&self) -> bool {
        self.index.is_zero()
    }

    /// Product of two phases: indices add modulo the common level.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.prime, other.prime, "phases of different primes");
        let level = self.level.max(other.level);
        let p = BigUint::from(self.prime);
        let a = &self.index * p.pow(level - self.level);
        let b = &other.index * p.pow(level - other.level);
        Self::new(a + b, level, self.prime)
    }

    pub fn conj(&self) -> Self {
        let modulus = BigUint::from(self.prime).pow(self.level);
        Self::new((&modulus - &self.index) % &modulus, self.level, self.prime)
    }

    /// The fraction `index / p^level ∈ [0, 1)`.
    pub fn as_fraction(&self) -> BigRational {
        BigRational::new(
            BigInt::from_biguint(Sign::Plus, self.index.clone()),
            BigInt::from(self.prime).pow(self.level),
        )
    }

    pub fn to_complex(&self) -> num_complex::Complex64 {
        let frac = self.as_fraction();
        let mut t = frac.to_f64().unwrap_or(0.0);
        if t >= 0.5 {
            t -= 1.0;
        }
        let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
        num_complex::Complex64::new(c, s)
    }
}

/// `p^k` as a rational, for any sign of `k`.
pub fn rational_pow(p: u64, k: i64) -> BigRational {
    let base = BigInt::from(p).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

fn big_val(n: &BigInt, p: &BigInt) -> u64 {
    if n.is_zero() {
        return 0;
    }
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// Modular inverse on big integers via the extended Euclidean algorithm.
pub fn inv_mod_big(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let a = a.mod_floor(m);
    let egcd = a.extended_gcd(m);
    if !egcd.gcd.is_one() {
        return None;
    }
    Some(egcd.x.mod_floor(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64, p: u64) -> PadicRational {
        PadicRational::from_ratio(n, d, p).unwrap()
    }

    #[test]
    fn valuations() {
        assert_eq!(q(18, 1, 3).valuation(), Valuation::Finite(2));
        assert_eq!(q(5, 9, 3).valuation(), Valuation::Finite(-2));
        assert_eq!(q(0, 1, 3).valuation(), Valuation::Infinite);
        assert_eq!(q(0, 1, 3).abs_p(), BigRational::zero());
        assert_eq!(q(5, 9, 3).abs_p(), BigRational::from_integer(9.into()));
    }

    #[test]
    fn fractional_parts() {
        assert_eq!(q(5, 9, 3).frac_part(), q(5, 9, 3));
        assert_eq!(q(7, 2, 3).frac_part(), q(0, 1, 3));
        // 2^{-1} ≡ 5 (mod 9)
        assert_eq!(q(1, 18, 3).frac_part(), q(5, 9, 3));
        assert_eq!(q(-1, 3, 3).frac_part(), q(2, 3, 3));
    }

    #[test]
    fn phases() {
        assert!(q(0, 1, 3).char_phase().is_identity());
        let ph = q(5, 9, 3).char_phase();
        assert_eq!((ph.index().clone(), ph.level()), (BigUint::from(5u32), 2));
        assert_eq!(q(1, 18, 3).char_phase(), ph);
        // 3/9 canonicalizes to 1/3
        let third = UnitRootPhase::new(BigUint::from(3u32), 2, 3);
        assert_eq!((third.index().clone(), third.level()), (BigUint::from(1u32), 1));
        assert!(third.mul(&third.conj()).is_identity());
    }

    #[test]
    fn int_part_is_integral() {
        let x = q(1, 18, 3);
        let ip = x.int_part();
        assert!(ip.is_integral());
        assert_eq!(&ip + &x.frac_part(), x);
    }
}
