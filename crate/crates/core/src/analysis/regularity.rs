//! Maximal ball masses of `μ_k` against `p^{-2ℓ/τ} ln(p^ℓ) g(p^ℓ)`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::pow_or_err;
use crate::construction::{KaufmanMeasure, LevelSchedule};
use crate::error::Result;
use crate::stepfn::StepDensity;

#[derive(Clone, Debug, Serialize)]
pub struct RegularityRow {
    pub ell: u32,
    pub max_mass: f64,
    /// Exact maximal mass as a reduced fraction.
    pub max_mass_exact: String,
    /// Residues of the heaviest ball (smallest on ties).
    pub argmax_center: Vec<u64>,
    pub bound: f64,
    pub ratio: f64,
    /// `base` (ℓ ≤ L_0), or for the level `j` with `L_{j-1} < ℓ ≤ L_j`:
    /// `shallow` (ℓ ≤ M_j), `middle` (M_j < ℓ ≤ 2M_j), `deep` (2M_j < ℓ).
    pub case: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub k: usize,
    pub rows: Vec<RegularityRow>,
    /// `max ratio` over `ℓ ≥ 1`.
    pub constant: f64,
    pub ln_convention: String,
}

/// `p^{-2ℓ/τ} ln(p^ℓ) g(p^ℓ)`, with `ln 2` in place of `ln 1` at `ℓ = 0`.
pub fn regularity_bound(km: &KaufmanMeasure, ell: u32) -> f64 {
    let p = km.prime() as f64;
    let tau = km.params().tau.to_f64();
    let t = p.powi(ell as i32);
    let ln = if ell == 0 { 2f64.ln() } else { t.ln() };
    p.powf(-2.0 * ell as f64 / tau) * ln * km.params().growth.eval(t)
}

pub fn case_tag(schedule: &LevelSchedule, ell: u32) -> String {
    if ell <= schedule.l0 {
        return "base".into();
    }
    let j = (1..=schedule.depth())
        .find(|&j| ell <= schedule.l_of(j))
        .unwrap_or(schedule.depth());
    let m = schedule.m_of(j);
    let tag = if ell > 2 * m {
        "deep"
    } else if ell > m {
        "middle"
    } else {
        "shallow"
    };
    format!("{tag} (j={j})")
}

/// Largest level-`ℓ` ball mass, exact.
fn max_ball_mass(f: &StepDensity, ell: u32) -> Result<(BigRational, Vec<u64>)> {
    let m = pow_or_err(f.prime(), ell)?;
    let key = |c: &[u64]| -> Vec<u64> { c.iter().map(|x| x % m).collect() };
    let pick = |best: &mut Option<(Vec<u64>, BigRational)>, k: Vec<u64>, v: BigRational| {
        let better = match best {
            None => true,
            Some((bk, bv)) => v > *bv || (v == *bv && k < *bk),
        };
        if better {
            *best = Some((k, v));
        }
    };
    let mut best: Option<(Vec<u64>, BigRational)> = None;
    if let Some(view) = f.int_view() {
        let mut sums: HashMap<Vec<u64>, i128> = HashMap::new();
        let mut overflow = false;
        for i in 0..view.len() {
            let slot = sums.entry(key(view.cell(i))).or_insert(0);
            match slot.checked_add(view.numerators[i]) {
                Some(v) => *slot = v,
                None => {
                    overflow = true;
                    break;
                }
            }
        }
        if !overflow {
            let scale = f.cell_volume() / BigRational::from_integer(view.denominator.clone());
            for (k, v) in sums {
                pick(&mut best, k, BigRational::from_integer(BigInt::from(v)) * &scale);
            }
            return Ok(best.map(|(k, v)| (v, k)).unwrap_or((BigRational::zero(), vec![0; f.dim()])));
        }
    }
    for (k, v) in f.ball_masses(ell)? {
        pick(&mut best, k, v);
    }
    Ok(best.map(|(k, v)| (v, k)).unwrap_or((BigRational::zero(), vec![0; f.dim()])))
}

/// Exact maximal ball masses for `0 ≤ ℓ ≤ ⌈τM_k⌉`.
pub fn regularity_scan(km: &KaufmanMeasure, k: usize) -> Result<RegularityReport> {
    let mu = km.mu_required(k)?;
    let top = km.schedule().l_of(k).min(mu.level());
    let mut rows = Vec::new();
    for ell in 0..=top {
        let (mass, center) = max_ball_mass(mu.density(), ell)?;
        let max_mass = mass.to_f64().unwrap_or(f64::NAN);
        let bound = regularity_bound(km, ell);
        rows.push(RegularityRow {
            ell,
            max_mass,
            max_mass_exact: mass.to_string(),
            argmax_center: center,
            bound,
            ratio: max_mass / bound,
            case: case_tag(km.schedule(), ell),
        });
    }
    let constant = rows.iter().filter(|r| r.ell >= 1).map(|r| r.ratio).fold(0.0, f64::max);
    Ok(RegularityReport {
        k,
        rows,
        constant,
        ln_convention: "natural log; ln 2 used for ln(p^0)".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{BuildOptions, ConstructionParams};

    fn toy(ms: Vec<u32>) -> KaufmanMeasure {
        let params = ConstructionParams::toy(3, "5/2".parse().unwrap(), ms);
        KaufmanMeasure::build(&params, BuildOptions::default()).unwrap()
    }

    #[test]
    fn level_zero_is_total_mass() {
        let km = toy(vec![2, 3]);
        let r = regularity_scan(&km, 1).unwrap();
        assert_eq!(r.rows[0].max_mass_exact, "1");
        assert!(r.rows[0].bound >= 0.5);
        assert_eq!(r.rows[0].case, "base");
    }

    #[test]
    fn deepest_level_is_heaviest_cell() {
        let km = toy(vec![2, 3]);
        let r = regularity_scan(&km, 1).unwrap();
        let mu = km.mu(1).unwrap().density();
        let heaviest = mu.max_value() * mu.cell_volume();
        assert_eq!(r.rows.last().unwrap().max_mass_exact, heaviest.to_string());
    }

    #[test]
    fn int_and_rational_paths_agree() {
        let km = toy(vec![2, 3]);
        let mu = km.mu(1).unwrap().density();
        for ell in 0..=mu.level() {
            let (a, _) = max_ball_mass(mu, ell).unwrap();
            let b = mu.ball_masses(ell).unwrap().into_values().max().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn case_tags_follow_the_schedule() {
        let km = toy(vec![2, 3]);
        let s = km.schedule();
        assert_eq!(case_tag(s, s.l0), "base");
        assert_eq!(case_tag(s, 2 * s.m_of(1) + 1), "deep (j=1)");
    }
}
