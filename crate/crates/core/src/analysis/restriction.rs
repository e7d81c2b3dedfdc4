//! Empirical restriction ratios `(∫|F̂|² dμ)^{1/2} / ‖F‖_q` over a seeded
//! family of step functions.
//!
//! A test function `f` of level `T` on `Z_p^d` is dilated to
//! `F(y) = f(p^T y)`, supported on `p^{-T} Z_p^d`, so that
//! `F̂(x) = p^{dT} f̂(x / p^T)` is a nontrivial function on the support of `μ`
//! and `‖F‖_q = p^{dT/q} ‖f‖_q`.

use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{checked_pow, mul_mod, pow_or_err};
use crate::construction::Ratio;
use crate::error::{Error, Result};
use crate::fourier::dense_transform;
use crate::numeric::root_of_unity;
use crate::stepfn::{advance, StepMeasure};

/// Largest grid `p^{dT}` used for the test functions by default.
pub const DEFAULT_TEST_GRID: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TestFunction {
    /// `1_{Z_p^d}`.
    Unit,
    Ball { center: Vec<u64>, level: u32 },
    /// `e(a·y / p^T) 1_{B(c, p^{-j})}`.
    Modulated { center: Vec<u64>, level: u32, freq: Vec<u64> },
    /// `Σ ±1_{B(c_i, p^{-j_i})}`.
    Signs { balls: Vec<(Vec<u64>, u32, i8)> },
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Unit => write!(f, "unit"),
            TestFunction::Ball { center, level } => write!(f, "ball c={center:?} j={level}"),
            TestFunction::Modulated { center, level, freq } => {
                write!(f, "modulated c={center:?} j={level} a={freq:?}")
            }
            TestFunction::Signs { balls } => {
                write!(f, "signs")?;
                for (c, j, s) in balls {
                    write!(f, " {}{c:?}@{j}", if *s > 0 { '+' } else { '-' })?;
                }
                Ok(())
            }
        }
    }
}

impl TestFunction {
    /// Native level `T` of the dilation.
    fn level(&self, test_level: u32) -> u32 {
        match self {
            TestFunction::Unit => 0,
            _ => test_level,
        }
    }

    /// Values on the dense row-major `[p^T; d]` grid.
    fn values(&self, p: u64, dim: usize, t: u32) -> Result<Vec<Complex64>> {
        let n = pow_or_err(p, t)?;
        let size = (n as usize).pow(dim as u32);
        let mut out = vec![Complex64::new(0.0, 0.0); size];
        let in_ball = |y: &[u64], c: &[u64], j: u32| -> bool {
            let m = p.pow(j);
            y.iter().zip(c).all(|(a, b)| a % m == b % m)
        };
        let mut digits = vec![0u64; dim];
        let mut idx = 0usize;
        loop {
            // digits[0] is the last coordinate in row-major order
            let y: Vec<u64> = digits.iter().rev().copied().collect();
            out[idx] = match self {
                TestFunction::Unit => Complex64::new(1.0, 0.0),
                TestFunction::Ball { center, level } => {
                    if in_ball(&y, center, *level) {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                TestFunction::Modulated { center, level, freq } => {
                    if in_ball(&y, center, *level) {
                        let dot = y.iter().zip(freq).fold(0u64, |acc, (a, b)| (acc + mul_mod(*a, *b, n)) % n);
                        root_of_unity(dot, n)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                TestFunction::Signs { balls } => {
                    let mut v = 0.0;
                    for (c, j, s) in balls {
                        if in_ball(&y, c, *j) {
                            v += *s as f64;
                        }
                    }
                    Complex64::new(v, 0.0)
                }
            };
            idx += 1;
            if !advance(&mut digits, n) {
                break;
            }
        }
        Ok(out)
    }
}

/// `1_{Z_p^d}` first, then balls, modulated balls and signed sums in turn.
pub fn test_family(p: u64, dim: usize, test_level: u32, count: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.pow(test_level);
    let point = |rng: &mut ChaCha8Rng| -> Vec<u64> { (0..dim).map(|_| rng.gen_range(0..n.max(1))).collect() };
    let mut out = vec![TestFunction::Unit];
    let mut kind = 0usize;
    while out.len() < count {
        let level = if test_level == 0 {
            0
        } else {
            rng.gen_range(1..=test_level)
        };
        let f = match kind % 3 {
            0 => TestFunction::Ball {
                center: point(&mut rng),
                level,
            },
            1 => TestFunction::Modulated {
                center: point(&mut rng),
                level,
                freq: point(&mut rng),
            },
            _ => {
                let terms = rng.gen_range(2..=4);
                TestFunction::Signs {
                    balls: (0..terms)
                        .map(|_| {
                            let j = if test_level == 0 { 0 } else { rng.gen_range(1..=test_level) };
                            let s = if rng.gen_bool(0.5) { 1 } else { -1 };
                            (point(&mut rng), j, s)
                        })
                        .collect(),
                }
            }
        };
        out.push(f);
        kind += 1;
    }
    out.truncate(count.max(1));
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RestrictionRow {
    pub index: usize,
    pub function: String,
    pub level: u32,
    /// `(∫ |F̂|² dμ)^{1/2}`.
    pub l2_mu: f64,
    /// `‖F‖_q`.
    pub lq_norm: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RestrictionReport {
    pub q: f64,
    pub seed: u64,
    pub test_level: u32,
    pub count: usize,
    pub max_ratio: f64,
    pub argmax: String,
    pub rows: Vec<RestrictionRow>,
}

fn row_for(mu: &StepMeasure, masses: &[Vec<f64>], f: &TestFunction, index: usize, q: f64, test_level: u32) -> Result<RestrictionRow> {
    let p = mu.prime();
    let d = mu.dim();
    let t = f.level(test_level);
    let mut values = f.values(p, d, t)?;
    let vol = (p as f64).powi(-((d as u32 * t) as i32));
    let lq = (values.iter().map(|v| v.norm().powf(q)).sum::<f64>() * vol).powf(1.0 / q);
    dense_transform(&mut values, p, t, d)?;
    let integral: f64 = values
        .iter()
        .zip(&masses[t as usize])
        .map(|(v, m)| m * v.norm_sqr())
        .sum();
    let scale = (p as f64).powf(d as f64 * t as f64);
    let l2_mu = scale * integral.sqrt();
    let lq_norm = scale.powf(1.0 / q) * lq;
    Ok(RestrictionRow {
        index,
        function: f.to_string(),
        level: t,
        l2_mu,
        lq_norm,
        ratio: if lq_norm > 0.0 { l2_mu / lq_norm } else { 0.0 },
    })
}

/// `μ(B)` for every level-`t` ball, on the dense row-major grid.
fn dense_masses(mu: &StepMeasure, t: u32) -> Result<Vec<f64>> {
    let p = mu.prime();
    let n = pow_or_err(p, t)? as usize;
    let mut out = vec![0.0; n.pow(mu.dim() as u32)];
    for (key, v) in mu.density().ball_masses(t)? {
        let idx = key.iter().fold(0usize, |acc, &a| acc * n + a as usize);
        out[idx] = v.to_f64().unwrap_or(f64::NAN);
    }
    Ok(out)
}

/// Largest `T ≤ L_μ` with `p^{dT}` within the grid cap.
pub fn default_test_level(mu: &StepMeasure, grid: u64) -> u32 {
    let mut t = 0;
    while t < mu.level() && checked_pow(mu.prime(), mu.dim() as u32 * (t + 1)).is_some_and(|n| n <= grid) {
        t += 1;
    }
    t
}

/// Maximum ratio over `count` seeded test functions of level at most
/// `test_level` (which must not exceed the level of `μ`).
pub fn restriction_ratio(mu: &StepMeasure, q: f64, test_level: u32, count: usize, seed: u64) -> Result<RestrictionReport> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent(format!("q = {q} must be at least 1")));
    }
    if test_level > mu.level() {
        return Err(Error::Resolution {
            requested: test_level,
            available: mu.level(),
        });
    }
    let family = test_family(mu.prime(), mu.dim(), test_level, count, seed);
    let masses: Vec<Vec<f64>> = (0..=test_level).map(|t| dense_masses(mu, t)).collect::<Result<_>>()?;
    let rows: Vec<RestrictionRow> = family
        .par_iter()
        .enumerate()
        .map(|(i, f)| row_for(mu, &masses, f, i, q, test_level))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.ratio > rows[best].ratio {
            best = i;
        }
    }
    Ok(RestrictionReport {
        q,
        seed,
        test_level,
        count: rows.len(),
        max_ratio: rows[best].ratio,
        argmax: rows[best].function.clone(),
        rows,
    })
}

/// `1 + β / (4d - 4α + β)`.
pub fn restriction_endpoint(alpha: &BigRational, beta: &BigRational, dim: usize) -> Result<BigRational> {
    let d = BigRational::from_integer(BigInt::from(dim));
    let four = BigRational::from_integer(BigInt::from(4));
    let den = &four * &d - &four * alpha + beta;
    if den <= BigRational::zero() {
        return Err(Error::InvalidExponent(format!("4d - 4α + β = {den} must be positive")));
    }
    Ok(BigRational::one() + beta / den)
}

/// The scalar endpoint with `α = β = 2/τ`, which equals `1 + 1/(2τ - 3)`.
pub fn scalar_endpoint(tau: Ratio) -> Result<BigRational> {
    let two_over_tau = BigRational::from_integer(BigInt::from(2)) / tau.to_big();
    restriction_endpoint(&two_over_tau, &two_over_tau, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepfn::StepDensity;

    fn measure() -> StepMeasure {
        let mut f = StepDensity::new(3, 1, 3).unwrap();
        for (c, v) in [(1u64, 9i64), (4, 9), (13, 9)] {
            f.set(&[c], BigRational::from_integer(v.into())).unwrap();
        }
        StepMeasure::new(f)
    }

    #[test]
    fn unit_function_has_ratio_one() {
        let mu = measure();
        assert_eq!(mu.total_mass(), BigRational::one());
        let r = restriction_ratio(&mu, 1.4, 3, 20, 1).unwrap();
        assert_eq!(r.rows[0].function, "unit");
        assert_eq!(r.rows[0].ratio, 1.0);
    }

    #[test]
    fn endpoint_formulas() {
        let tau: Ratio = "5/2".parse().unwrap();
        assert_eq!(scalar_endpoint(tau).unwrap(), BigRational::new(3.into(), 2.into()));
        for (num, den) in [(3u64, 1u64), (7, 2), (4, 1)] {
            let tau = Ratio::new(num, den).unwrap();
            let want = BigRational::one()
                + BigRational::one() / (BigRational::from_integer(2.into()) * tau.to_big() - BigRational::from_integer(3.into()));
            assert_eq!(scalar_endpoint(tau).unwrap(), want);
        }
        let a = BigRational::new(1.into(), 2.into());
        let b = BigRational::new(1.into(), 3.into());
        assert_eq!(
            restriction_endpoint(&a, &b, 2).unwrap(),
            BigRational::new(20.into(), 19.into())
        );
    }

    #[test]
    fn family_is_seeded() {
        let a = test_family(3, 1, 3, 30, 5);
        let b = test_family(3, 1, 3, 30, 5);
        assert_eq!(a, b);
        assert_ne!(a, test_family(3, 1, 3, 30, 6));
        assert_eq!(a[0], TestFunction::Unit);
    }

    #[test]
    fn q_below_one_is_rejected() {
        assert!(restriction_ratio(&measure(), 0.5, 1, 5, 0).is_err());
    }

    #[test]
    fn ball_ratio_by_hand() {
        // f = 1_{B(0,1/3)}, T = 1: f̂(a/3) = 1/3 for all a, so ∫|F̂|² dμ = 1
        // and ‖F‖_q = 3^{1/q} (1/3)^{1/q} = 1
        let mu = measure();
        let masses: Vec<Vec<f64>> = (0..=1).map(|t| dense_masses(&mu, t).unwrap()).collect();
        let f = TestFunction::Ball {
            center: vec![0],
            level: 1,
        };
        let row = row_for(&mu, &masses, &f, 0, 1.5, 1).unwrap();
        assert!((row.ratio - 1.0).abs() < 1e-12);
    }
}
