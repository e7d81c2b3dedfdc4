//! Per-shell maxima of `|μ̂_k|` and the regression estimate of the decay
//! exponent.

use rayon::prelude::*;
use serde::Serialize;

use super::decay_exponents;
use super::sampling::{shell_points_sampled, spike_points, Sampling};
use crate::construction::KaufmanMeasure;
use crate::error::{Error, Result};
use crate::fourier::DualPoint;
use crate::numeric::least_squares;

/// Shells whose maximum is at most this are treated as exact zeros.
pub const ZERO_SHELL_TOLERANCE: f64 = 1e-12;

/// Spike candidates per `q` and number of lower-level shifts in the
/// structured sample.
const SPIKE_PRIMES: usize = 8;
const SPIKE_SHIFTS: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct ShellStat {
    pub ell: u32,
    pub max_abs: f64,
    pub argmax: String,
    pub samples: usize,
    pub exhaustive: bool,
    /// `max |μ̂| · |s|^β / (ln^e(1+|s|) g(|s|))`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayProfile {
    pub prime: u64,
    pub dim: usize,
    pub k: usize,
    pub m_k: u32,
    pub l_k: u32,
    pub beta: f64,
    pub log_power: u32,
    pub growth: String,
    /// False for toy schedules: the ratio is then not a theorem constant.
    pub theorem: bool,
    pub seed: u64,
    pub shells: Vec<ShellStat>,
}

impl DecayProfile {
    /// Largest normalized ratio over `M_k < ℓ ≤ L_k`.
    pub fn window_constant(&self) -> f64 {
        self.shells
            .iter()
            .filter(|s| s.ell > self.m_k && s.ell <= self.l_k)
            .map(|s| s.ratio)
            .fold(0.0, f64::max)
    }
}

fn envelope(km: &KaufmanMeasure, ell: u32, beta: f64, e: u32) -> f64 {
    let t = (km.prime() as f64).powi(ell as i32);
    let g = km.params().growth.eval(t);
    t.powf(-beta) * (1.0 + t).ln().powi(e as i32) * g
}

/// Peak candidates for `μ̂_k` on shell `ℓ`: spikes of `F̂_{M_k}` shifted by
/// the largest entries of the cached `μ̂_{k-1}`.
fn structured_points(km: &KaufmanMeasure, k: usize, ell: u32) -> Result<Vec<DualPoint>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let spikes = spike_points(km.fm(k), ell, SPIKE_PRIMES)?;
    let mut shifts: Vec<DualPoint> = vec![DualPoint::zero(km.prime(), km.dim())];
    if let Some(cache) = km.dual(k - 1) {
        let mut top: Vec<(f64, &DualPoint)> = cache
            .entries()
            .iter()
            .filter(|(t, v)| !t.is_zero() && v.norm() > ZERO_SHELL_TOLERANCE)
            .map(|(t, v)| (v.norm(), t))
            .collect();
        top.sort_by(|a, b| b.0.total_cmp(&a.0));
        shifts.extend(top.into_iter().take(SPIKE_SHIFTS).map(|(_, t)| t.clone()));
    }
    let mut out = Vec::with_capacity(spikes.len() * shifts.len());
    for s in &spikes {
        for t in &shifts {
            let u = s.add(t)?;
            if u.level() == ell {
                out.push(u);
            }
        }
    }
    Ok(out)
}

/// Maximum of `|μ̂_k|` over the (sampled) shell `|s|_p = p^ℓ`.
pub fn shell_stat(km: &KaufmanMeasure, k: usize, ell: u32, sampling: &Sampling) -> Result<ShellStat> {
    let (beta, e) = decay_exponents(km.params().shape, km.params().tau);
    let structured = structured_points(km, k, ell)?;
    let (points, exhaustive) = shell_points_sampled(km.prime(), km.dim(), ell, sampling, &structured)?;
    let values: Vec<f64> = points
        .par_iter()
        .map(|s| km.ft_mu(k, s).map(|v| v.norm()))
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let max_abs = values.get(best).copied().unwrap_or(0.0);
    Ok(ShellStat {
        ell,
        max_abs,
        argmax: points.get(best).map(|s| s.to_string()).unwrap_or_default(),
        samples: points.len(),
        exhaustive,
        ratio: max_abs / envelope(km, ell, beta, e),
    })
}

/// Shell maxima for `0 ≤ ℓ ≤` the dual radius of `μ_k`.
pub fn decay_profile(km: &KaufmanMeasure, k: usize, sampling: &Sampling) -> Result<DecayProfile> {
    let (beta, e) = decay_exponents(km.params().shape, km.params().tau);
    let top = km.dual_level(k);
    let shells = (0..=top)
        .map(|ell| shell_stat(km, k, ell, sampling))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayProfile {
        prime: km.prime(),
        dim: km.dim(),
        k,
        m_k: km.schedule().m_of(k),
        l_k: km.schedule().l_of(k),
        beta,
        log_power: e,
        growth: km.params().growth.to_string(),
        theorem: !km.is_toy(),
        seed: sampling.seed,
        shells,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DimEstimate {
    pub shells_used: Vec<u32>,
    pub excluded_zero_shells: Vec<u32>,
    /// Slope of `ln max|μ̂|` against `ln |s|`.
    pub raw_slope: f64,
    /// Same after dividing out `ln^e(1+|s|)`.
    pub corrected_slope: f64,
    pub raw_exponent: f64,
    pub corrected_exponent: f64,
    /// `2 ×` the exponents: Fourier-dimension estimates.
    pub dim_raw: f64,
    pub dim_corrected: f64,
    pub target_exponent: f64,
}

/// Least-squares decay exponent over the shells `M_k < ℓ ≤ L_k`.
pub fn fourier_dim_estimate(profile: &DecayProfile) -> Result<DimEstimate> {
    let ln_p = (profile.prime as f64).ln();
    let mut used = Vec::new();
    let mut zeros = Vec::new();
    let (mut xs, mut ys, mut yc) = (Vec::new(), Vec::new(), Vec::new());
    for s in profile.shells.iter().filter(|s| s.ell > profile.m_k && s.ell <= profile.l_k) {
        if s.max_abs <= ZERO_SHELL_TOLERANCE {
            zeros.push(s.ell);
            continue;
        }
        let x = s.ell as f64 * ln_p;
        let log_corr = profile.log_power as f64 * (1.0 + x.exp()).ln().ln();
        used.push(s.ell);
        xs.push(x);
        ys.push(s.max_abs.ln());
        yc.push(s.max_abs.ln() - log_corr);
    }
    if used.len() < 3 {
        return Err(Error::InsufficientShells {
            found: used.len(),
            needed: 3,
        });
    }
    let (raw_slope, _) = least_squares(&xs, &ys).expect("at least three points");
    let (corrected_slope, _) = least_squares(&xs, &yc).expect("at least three points");
    Ok(DimEstimate {
        shells_used: used,
        excluded_zero_shells: zeros,
        raw_slope,
        corrected_slope,
        raw_exponent: -raw_slope,
        corrected_exponent: -corrected_slope,
        dim_raw: -2.0 * raw_slope,
        dim_corrected: -2.0 * corrected_slope,
        target_exponent: profile.beta,
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
    fn shell_zero_is_total_mass() {
        let km = toy(vec![2, 3]);
        let prof = decay_profile(&km, 1, &Sampling::default()).unwrap();
        assert!((prof.shells[0].max_abs - 1.0).abs() < 1e-12);
        assert!(prof.shells.iter().all(|s| s.ratio.is_finite()));
        assert!(!prof.theorem);
    }

    #[test]
    fn low_shells_follow_psi0() {
        // ψ̂_0 is 1 on |s| ≤ p and -1/(p-1) on |s| = p^2
        let km = toy(vec![2, 3]);
        let prof = decay_profile(&km, 1, &Sampling::default()).unwrap();
        assert!((prof.shells[1].max_abs - 1.0).abs() < 1e-12);
        assert!((prof.shells[2].max_abs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn estimate_needs_three_shells() {
        let km = toy(vec![2, 3]);
        let mut prof = decay_profile(&km, 1, &Sampling::default()).unwrap();
        prof.shells.retain(|s| s.ell <= prof.m_k + 1);
        assert!(matches!(
            fourier_dim_estimate(&prof),
            Err(Error::InsufficientShells { .. })
        ));
    }

    #[test]
    fn zero_shells_are_excluded() {
        let prof = DecayProfile {
            prime: 3,
            dim: 1,
            k: 1,
            m_k: 1,
            l_k: 6,
            beta: 0.4,
            log_power: 2,
            growth: "sqrt".into(),
            theorem: true,
            seed: 0,
            shells: (0..=6)
                .map(|ell| ShellStat {
                    ell,
                    max_abs: if ell == 4 { 0.0 } else { 3f64.powf(-0.5 * ell as f64) },
                    argmax: String::new(),
                    samples: 1,
                    exhaustive: true,
                    ratio: 1.0,
                })
                .collect(),
        };
        let est = fourier_dim_estimate(&prof).unwrap();
        assert_eq!(est.excluded_zero_shells, vec![4]);
        assert_eq!(est.shells_used, vec![2, 3, 5, 6]);
        assert!((est.raw_exponent - 0.5).abs() < 1e-12);
    }
}
