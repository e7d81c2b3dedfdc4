//! Deterministic choice of dual points on a shell `|s|_p = p^ℓ`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arith::{mul_mod, pow_or_err};
use crate::construction::FmLevel;
use crate::error::Result;
use crate::fourier::{shell_size, DualPoint};
use crate::stepfn::advance;

/// Shells with at most this many points are scanned exhaustively.
pub const DEFAULT_SHELL_CAP: u128 = 100_000;

/// Uniform draws per shell above the cap.
pub const DEFAULT_SHELL_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug)]
pub struct Sampling {
    pub cap: u128,
    pub samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            cap: DEFAULT_SHELL_CAP,
            samples: DEFAULT_SHELL_SAMPLES,
            seed: 0,
        }
    }
}

/// Independent stream per shell, so results do not depend on scan order.
pub fn shell_rng(seed: u64, ell: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (ell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Points of the shell: all of them when it is small, otherwise seeded
/// uniform draws followed by the structured candidates that lie on it.
pub fn shell_points_sampled(
    p: u64,
    dim: usize,
    ell: u32,
    sampling: &Sampling,
    structured: &[DualPoint],
) -> Result<(Vec<DualPoint>, bool)> {
    let size = shell_size(p, dim, ell);
    let modulus = pow_or_err(p, ell)?;
    if size <= sampling.cap {
        let mut out = Vec::with_capacity(size as usize);
        let mut digits = vec![0u64; dim];
        loop {
            if digits.iter().any(|d| d % p != 0) || ell == 0 {
                let nums: Vec<u64> = digits.iter().rev().copied().collect();
                out.push(DualPoint::from_level(p, ell, &nums)?);
            }
            if !advance(&mut digits, modulus) {
                break;
            }
        }
        return Ok((out, true));
    }
    let mut rng = shell_rng(sampling.seed, ell);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(sampling.samples + structured.len());
    let target = (sampling.samples as u128).min(size) as usize;
    while out.len() < target {
        let nums: Vec<u64> = (0..dim).map(|_| rng.gen_range(0..modulus)).collect();
        let s = DualPoint::from_level(p, ell, &nums)?;
        if s.level() == ell && seen.insert(s.clone()) {
            out.push(s);
        }
    }
    for s in structured {
        if s.level() == ell && seen.insert(s.clone()) {
            out.push(s.clone());
        }
    }
    Ok((out, false))
}

/// Uniform draws from the shell without the exhaustive branch.
pub fn random_shell_points(p: u64, dim: usize, ell: u32, count: usize, seed: u64) -> Result<Vec<DualPoint>> {
    let modulus = pow_or_err(p, ell)?;
    let mut rng = shell_rng(seed, ell);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let nums: Vec<u64> = (0..dim).map(|_| rng.gen_range(0..modulus)).collect();
        let s = DualPoint::from_level(p, ell, &nums)?;
        if s.level() == ell {
            out.push(s);
        }
    }
    Ok(out)
}

/// Points where `F̂_M` peaks on the shell: every entry `b q mod p^ℓ` for a
/// few `q ∈ Q_M` and small `|b|`, so that `s q^{-1}` is real-small.
pub fn spike_points(fm: &FmLevel, ell: u32, per_shell: usize) -> Result<Vec<DualPoint>> {
    let modulus = pow_or_err(fm.prime, ell)?;
    let dim = fm.dim();
    let mut out = Vec::new();
    if modulus < 3 {
        return Ok(out);
    }
    for &q in fm.primes.iter().take(per_shell.max(1)) {
        for b in [1, 2, modulus - 1, modulus - 2] {
            if b == 0 || b >= modulus {
                continue;
            }
            let a = mul_mod(q % modulus, b, modulus);
            let s = DualPoint::from_level(fm.prime, ell, &vec![a; dim])?;
            if s.level() == ell {
                out.push(s);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_small_shell() {
        let (pts, all) = shell_points_sampled(3, 2, 1, &Sampling::default(), &[]).unwrap();
        assert!(all);
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|s| s.level() == 1));
    }

    #[test]
    fn sampled_shell_is_seeded() {
        let sampling = Sampling {
            cap: 10,
            samples: 50,
            seed: 7,
        };
        let extra = [DualPoint::from_level(3, 4, &[1]).unwrap()];
        let (a, all) = shell_points_sampled(3, 1, 4, &sampling, &extra).unwrap();
        let (b, _) = shell_points_sampled(3, 1, 4, &sampling, &extra).unwrap();
        assert!(!all);
        assert_eq!(a, b);
        assert!(a.contains(&extra[0]));
        assert!(a.len() >= 50);
    }
}
