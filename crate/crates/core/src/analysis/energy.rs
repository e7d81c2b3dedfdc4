//! Riesz energies of step measures on `Z_p^d` in the max-norm ultrametric.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::pow_or_err;
use crate::error::{Error, Result};
use crate::fourier::ft_table_with_budget;
use crate::stepfn::StepMeasure;

#[derive(Clone, Debug, Serialize)]
pub struct RieszEnergy {
    pub alpha: f64,
    pub level: u32,
    pub energy: f64,
    /// Same-cell pairs were assigned distance `p^{-L}`.
    pub truncated: bool,
    /// `S_L`: the mass of the same-cell pairs.
    pub same_cell_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierEnergy {
    pub alpha: f64,
    pub level: u32,
    /// `Σ_{0<|s|≤p^L} |μ̂(s)|² |s|^{α-d}`.
    pub energy: f64,
    /// `table` or `ball-mass identity`.
    pub method: String,
}

fn check_alpha(alpha: f64, dim: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < dim as f64) {
        return Err(Error::InvalidExponent(format!("alpha = {alpha} must lie in (0, {dim})")));
    }
    Ok(())
}

/// `S_ℓ = Σ_B μ(B)²` over the level-`ℓ` balls, exact.
pub fn pair_masses(mu: &StepMeasure, ell: u32) -> Result<BigRational> {
    let f = mu.density();
    if let Some(view) = f.int_view() {
        let m = pow_or_err(f.prime(), ell)?;
        let mut sums: HashMap<Vec<u64>, BigInt> = HashMap::new();
        for i in 0..view.len() {
            let key: Vec<u64> = view.cell(i).iter().map(|c| c % m).collect();
            *sums.entry(key).or_insert_with(BigInt::zero) += view.numerators[i];
        }
        let total: BigInt = sums.values().map(|v| v * v).sum();
        let scale = f.cell_volume() / BigRational::from_integer(view.denominator.clone());
        return Ok(BigRational::from_integer(total) * &scale * &scale);
    }
    let masses = f.ball_masses(ell)?;
    Ok(masses.values().map(|v| v * v).sum())
}

/// `Σ_{c,c'} μ(c)μ(c') dist(c,c')^{-α}` with same-cell pairs at distance
/// `p^{-L}`: `Σ_{ℓ<L} (S_ℓ - S_{ℓ+1}) p^{ℓα} + S_L p^{Lα}`.
pub fn riesz_energy(mu: &StepMeasure, alpha: f64) -> Result<RieszEnergy> {
    check_alpha(alpha, mu.dim())?;
    let l = mu.level();
    let p = mu.prime() as f64;
    let s: Vec<BigRational> = (0..=l).map(|ell| pair_masses(mu, ell)).collect::<Result<_>>()?;
    let mut energy = 0.0;
    for ell in 0..l as usize {
        let shell = (&s[ell] - &s[ell + 1]).to_f64().unwrap_or(f64::NAN);
        energy += shell * p.powf(ell as f64 * alpha);
    }
    let same = s[l as usize].to_f64().unwrap_or(f64::NAN);
    energy += same * p.powf(l as f64 * alpha);
    Ok(RieszEnergy {
        alpha,
        level: l,
        energy,
        truncated: true,
        same_cell_mass: same,
    })
}

/// Fourier-side counterpart. Uses the dense table when it fits the budget,
/// otherwise `Σ_{|s|≤p^ℓ} |μ̂(s)|² = p^{dℓ} S_ℓ` shell by shell.
pub fn riesz_energy_fourier(mu: &StepMeasure, alpha: f64, table_budget: u128) -> Result<FourierEnergy> {
    let d = mu.dim();
    check_alpha(alpha, d)?;
    let l = mu.level();
    let p = mu.prime() as f64;
    let weight = |ell: u32| p.powf(ell as f64 * (alpha - d as f64));
    if let Ok(table) = ft_table_with_budget(mu.density(), table_budget) {
        let mut energy = 0.0;
        for (s, v) in table.iter() {
            if !s.is_zero() {
                energy += v.norm_sqr() * weight(s.level());
            }
        }
        return Ok(FourierEnergy {
            alpha,
            level: l,
            energy,
            method: "table".into(),
        });
    }
    let mut energy = 0.0;
    let mut prev = pair_masses(mu, 0)?;
    for ell in 1..=l {
        let cur = pair_masses(mu, ell)?;
        let inner = BigRational::from_integer(BigInt::from(mu.prime()).pow(d as u32 * ell)) * &cur
            - BigRational::from_integer(BigInt::from(mu.prime()).pow(d as u32 * (ell - 1))) * &prev;
        energy += inner.to_f64().unwrap_or(f64::NAN) * weight(ell);
        prev = cur;
    }
    Ok(FourierEnergy {
        alpha,
        level: l,
        energy,
        method: "ball-mass identity".into(),
    })
}

/// `Σ_{ℓ<L} (1 - 1/p) p^{ℓ(α-1)} + p^{-L} p^{Lα}`: the truncated energy of
/// Haar measure on `Z_p`.
pub fn haar_energy_truncated(p: u64, alpha: f64, level: u32) -> f64 {
    let p = p as f64;
    let mut e = 0.0;
    for ell in 0..level {
        e += (1.0 - 1.0 / p) * p.powf(ell as f64 * (alpha - 1.0));
    }
    e + p.powf(level as f64 * (alpha - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepfn::StepDensity;
    use num_traits::One;

    fn haar(p: u64, level: u32) -> StepMeasure {
        let f = StepDensity::constant(p, 1, BigRational::one()).unwrap().refine(level).unwrap();
        StepMeasure::new(f)
    }

    #[test]
    fn haar_matches_series() {
        for l in [1, 4, 8] {
            let e = riesz_energy(&haar(3, l), 0.5).unwrap();
            assert!((e.energy - haar_energy_truncated(3, 0.5, l)).abs() < 1e-12);
        }
    }

    #[test]
    fn small_alpha_tends_to_mass_squared() {
        let e = riesz_energy(&haar(3, 4), 1e-9).unwrap();
        assert!((e.energy - 1.0).abs() < 1e-6);
    }

    #[test]
    fn alpha_range() {
        assert!(riesz_energy(&haar(3, 2), 1.0).is_err());
        assert!(riesz_energy(&haar(3, 2), 0.0).is_err());
    }

    #[test]
    fn fourier_sides_agree() {
        let mut f = StepDensity::new(3, 1, 4).unwrap();
        for (c, v) in [(1u64, 3i64), (10, 1), (28, 5), (55, 2)] {
            f.set(&[c], BigRational::from_integer(v.into())).unwrap();
        }
        let mu = StepMeasure::new(f);
        let by_table = riesz_energy_fourier(&mu, 0.7, 1 << 20).unwrap();
        let by_identity = riesz_energy_fourier(&mu, 0.7, 1).unwrap();
        assert_eq!(by_table.method, "table");
        assert_eq!(by_identity.method, "ball-mass identity");
        assert!((by_table.energy - by_identity.energy).abs() < 1e-10 * by_table.energy.max(1.0));
    }
}
