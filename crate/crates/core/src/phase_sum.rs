//! Exact sums `Σ c_j e(j / p^L)` with rational coefficients.
//!
//! Coefficients are bucketed by root-of-unity index, so an exponential sum
//! is an element of the cyclotomic field `Q(ζ_{p^L})`. Equality and
//! vanishing are decided exactly: since `Φ_{p^L}(x) = Σ_{i<p} x^{i p^{L-1}}`,
//! a bucket vector is zero in the field iff, for every residue `u` modulo
//! `p^{L-1}`, the `p` coefficients at `u + i p^{L-1}` coincide.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::arith::{self, pow_or_err};
use crate::error::Result;
use crate::numeric::NeumaierSum;

#[derive(Clone, Debug)]
pub struct PhaseSum {
    prime: u64,
    level: u32,
    modulus: u64,
    buckets: BTreeMap<u64, BigRational>,
}

impl PhaseSum {
    pub fn zero(prime: u64) -> Self {
        PhaseSum {
            prime,
            level: 0,
            modulus: 1,
            buckets: BTreeMap::new(),
        }
    }

    pub fn constant(prime: u64, c: BigRational) -> Self {
        let mut s = Self::zero(prime);
        if !c.is_zero() {
            s.buckets.insert(0, c);
        }
        s
    }

    pub fn one(prime: u64) -> Self {
        Self::constant(prime, BigRational::one())
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn term_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, &BigRational)> {
        self.buckets.iter().map(|(k, v)| (*k, v))
    }

    /// Moves the sum to a finer level so that `e(j/p^L)` becomes
    /// `e(j p^{L'-L} / p^{L'})`.
    pub fn lift_to(&mut self, level: u32) -> Result<()> {
        if level <= self.level {
            return Ok(());
        }
        let modulus = pow_or_err(self.prime, level)?;
        let old = std::mem::take(&mut self.buckets);
        for (k, v) in old {
            self.buckets
                .insert(arith::lift_index(k, self.prime, self.level, level), v);
        }
        self.level = level;
        self.modulus = modulus;
        Ok(())
    }

    /// Adds `coeff · e(index / p^level)`.
    pub fn add_term(&mut self, index: u64, level: u32, coeff: &BigRational) -> Result<()> {
        if coeff.is_zero() {
            return Ok(());
        }
        self.lift_to(level)?;
        let idx = arith::lift_index(index % arith::pow_or_err(self.prime, level)?, self.prime, level, self.level);
        let slot = self.buckets.entry(idx).or_insert_with(BigRational::zero);
        *slot += coeff;
        if slot.is_zero() {
            self.buckets.remove(&idx);
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &PhaseSum) -> Result<()> {
        assert_eq!(self.prime, other.prime);
        for (k, v) in &other.buckets {
            self.add_term(*k, other.level, v)?;
        }
        Ok(())
    }

    pub fn sub(&self, other: &PhaseSum) -> Result<PhaseSum> {
        let mut out = self.clone();
        for (k, v) in &other.buckets {
            out.add_term(*k, other.level, &-v)?;
        }
        Ok(out)
    }

    pub fn scale(&mut self, c: &BigRational) {
        if c.is_zero() {
            self.buckets.clear();
            return;
        }
        for v in self.buckets.values_mut() {
            *v *= c;
        }
    }

    /// Product in the cyclotomic field.
    pub fn mul(&self, other: &PhaseSum) -> Result<PhaseSum> {
        assert_eq!(self.prime, other.prime);
        let level = self.level.max(other.level);
        let modulus = pow_or_err(self.prime, level)?;
        let mut out = PhaseSum::zero(self.prime);
        out.lift_to(level)?;
        for (a, x) in &self.buckets {
            let a = arith::lift_index(*a, self.prime, self.level, level);
            for (b, y) in &other.buckets {
                let b = arith::lift_index(*b, self.prime, other.level, level);
                out.add_term((a + b) % modulus, level, &(x * y))?;
            }
        }
        Ok(out)
    }

    /// Exact test for the value being zero in `Q(ζ_{p^L})`.
    pub fn is_zero(&self) -> bool {
        if self.buckets.is_empty() {
            return true;
        }
        if self.level == 0 {
            return self.buckets.values().all(|v| v.is_zero());
        }
        let stride = self.modulus / self.prime;
        let mut residues: BTreeMap<u64, Vec<&BigRational>> = BTreeMap::new();
        for (k, v) in &self.buckets {
            residues.entry(k % stride).or_default().push(v);
        }
        residues.values().all(|group| {
            if group.len() as u64 == self.prime {
                group.iter().all(|v| *v == group[0])
            } else {
                group.iter().all(|v| v.is_zero())
            }
        })
    }

    /// Exact equality of the two field elements.
    pub fn eq_exact(&self, other: &PhaseSum) -> Result<bool> {
        Ok(self.sub(other)?.is_zero())
    }

    pub fn is_one(&self) -> Result<bool> {
        self.eq_exact(&PhaseSum::one(self.prime))
    }

    pub fn to_complex(&self) -> Complex64 {
        let mut acc = NeumaierSum::default();
        for (k, v) in &self.buckets {
            let c = v.to_f64().unwrap_or(f64::NAN);
            let t = arith::centered_fraction(*k, self.modulus);
            let (s, co) = (2.0 * std::f64::consts::PI * t).sin_cos();
            acc.add(Complex64::new(c * co, c * s));
        }
        acc.total()
    }
}
