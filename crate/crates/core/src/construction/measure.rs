//! The measures `dμ_k = ψ_0 F_{M_1} ⋯ F_{M_k} dx` and their transforms.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::fm::{build_psi0, psi0_level, FmLevel};
use super::params::{BuildMode, ConstructionParams, Shape};
use super::schedule::{choose_mk, LevelSchedule};
use crate::arith::{checked_pow, mul_mod};
use crate::error::{Error, Result};
use crate::fourier::{ft_point, ft_point_with, ft_table_with_budget, DualPoint, SumMode, DEFAULT_TABLE_BUDGET};
use crate::numeric::NeumaierSum;
use crate::phase_sum::PhaseSum;
use crate::stepfn::{StepDensity, StepMeasure, DEFAULT_CELL_BUDGET};

#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    /// Cap on `(q, r, free coordinate)` placements per `F_M` density.
    pub cell_budget: u128,
    /// Cap on dense transform tables kept for the convolution recursion.
    pub table_budget: u128,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            cell_budget: DEFAULT_CELL_BUDGET,
            table_budget: DEFAULT_TABLE_BUDGET,
        }
    }
}

/// `μ̂_k` on the ball `|t|_p ≤ p^{level}`.
#[derive(Clone, Debug)]
pub struct DualCache {
    pub level: u32,
    entries: Vec<(DualPoint, Complex64)>,
    index: HashMap<DualPoint, usize>,
}

impl DualCache {
    fn from_entries(level: u32, entries: Vec<(DualPoint, Complex64)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
        DualCache { level, entries, index }
    }

    pub fn get(&self, s: &DualPoint) -> Complex64 {
        self.index
            .get(s)
            .map_or(Complex64::new(0.0, 0.0), |&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(DualPoint, Complex64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct KaufmanMeasure {
    params: ConstructionParams,
    schedule: LevelSchedule,
    psi0: StepDensity,
    fms: Vec<FmLevel>,
    fm_densities: Vec<Option<StepDensity>>,
    /// `mus[0] = ψ_0 dx`.
    mus: Vec<Option<StepMeasure>>,
    duals: Vec<Option<DualCache>>,
}

impl KaufmanMeasure {
    /// Builds every level of the schedule, failing if any is out of reach.
    pub fn build(params: &ConstructionParams, opts: BuildOptions) -> Result<Self> {
        let (m, err) = Self::build_truncated(params, opts)?;
        match err {
            Some(e) => Err(e),
            None => Ok(m),
        }
    }

    /// Builds as many levels as the resolution limits allow; the error that
    /// stopped the build is returned alongside.
    pub fn build_truncated(params: &ConstructionParams, opts: BuildOptions) -> Result<(Self, Option<Error>)> {
        let schedule = match choose_mk(params) {
            Ok(s) => s,
            Err(Error::ResolutionBudget {
                feasible_depth, ..
            }) if feasible_depth > 0 => {
                let mut shallow = params.clone();
                shallow.depth = feasible_depth;
                let (m, _) = Self::build_truncated(&shallow, opts)?;
                let err = Error::ResolutionBudget {
                    requested_depth: params.depth,
                    feasible_depth,
                    detail: "the level schedule cannot be chosen past this depth".into(),
                };
                return Ok((m, Some(err)));
            }
            Err(e) => return Err(e),
        };
        if params.shape.is_scalar() && schedule.l_of(1) < 2 {
            return Err(Error::InvalidParams(
                "psi_0 must vanish on |x|_p <= p^-ceil(tau M_1); needs ceil(tau M_1) >= 2".into(),
            ));
        }
        let psi0 = build_psi0(params)?;
        let mu0 = StepMeasure::new(psi0.clone());
        let dual0 = dual_from_density(&psi0, opts.table_budget);
        let mut out = KaufmanMeasure {
            params: params.clone(),
            schedule,
            psi0,
            fms: Vec::new(),
            fm_densities: Vec::new(),
            mus: vec![Some(mu0)],
            duals: vec![dual0],
        };
        for k in 1..=params.depth {
            let level = out.schedule.level(k);
            let primes = match &level.primes {
                Some(q) => q.clone(),
                None => {
                    let err = Error::ResolutionBudget {
                        requested_depth: params.depth,
                        feasible_depth: k - 1,
                        detail: format!(
                            "level {k} has M = {}, L = {}; Q_M has roughly p^M/(2 ln p^M) primes and cannot be enumerated",
                            level.m, level.l
                        ),
                    };
                    out.schedule.levels.truncate(k - 1);
                    out.schedule.checks.truncate(k - 1);
                    return Ok((out, Some(err)));
                }
            };
            let fm = FmLevel::with_primes(params, level.m, primes);
            let within_machine = checked_pow(params.prime, fm.l).is_some();
            let density = if within_machine && fm.placement_count() <= opts.cell_budget {
                Some(fm.density(opts.cell_budget)?)
            } else {
                None
            };
            let mu = match (&out.mus[k - 1], &density) {
                (Some(prev), Some(f)) => Some(StepMeasure::new(prev.density().multiply(f)?)),
                _ => None,
            };
            let dual = mu
                .as_ref()
                .and_then(|m| dual_from_density(m.density(), opts.table_budget));
            out.fms.push(fm);
            out.fm_densities.push(density);
            out.mus.push(mu);
            out.duals.push(dual);
        }
        Ok((out, None))
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.params
    }

    pub fn schedule(&self) -> &LevelSchedule {
        &self.schedule
    }

    pub fn prime(&self) -> u64 {
        self.params.prime
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Number of built levels.
    pub fn depth(&self) -> usize {
        self.fms.len()
    }

    pub fn is_toy(&self) -> bool {
        matches!(self.params.mode, BuildMode::Toy(_))
    }

    pub fn psi0(&self) -> &StepDensity {
        &self.psi0
    }

    /// `F_{M_k}`, `k ≥ 1`.
    pub fn fm(&self, k: usize) -> &FmLevel {
        &self.fms[k - 1]
    }

    pub fn fm_density(&self, k: usize) -> Option<&StepDensity> {
        self.fm_densities[k - 1].as_ref()
    }

    pub fn mu(&self, k: usize) -> Option<&StepMeasure> {
        self.mus.get(k).and_then(|m| m.as_ref())
    }

    pub fn mu_required(&self, k: usize) -> Result<&StepMeasure> {
        self.mu(k)
            .ok_or_else(|| Error::MissingCache(format!("no spatial density for mu_{k} (dual-only level)")))
    }

    pub fn dual(&self, k: usize) -> Option<&DualCache> {
        self.duals.get(k).and_then(|d| d.as_ref())
    }

    /// Radius exponent beyond which `μ̂_k` vanishes.
    pub fn dual_level(&self, k: usize) -> u32 {
        if k == 0 {
            psi0_level(self.params.shape)
        } else {
            self.fm(k).l.max(self.dual_level(k - 1))
        }
    }

    /// `M_k ≥` the dual radius exponent of `μ_{k-1}`: the separation under
    /// which `μ̂_k = μ̂_{k-1}` on `0 < |s|_p ≤ p^{M_k}` and `μ̂_k(0) = 1`.
    pub fn dual_separated(&self, k: usize) -> bool {
        self.fm(k).m >= self.dual_level(k - 1)
    }

    /// `μ̂_k(s)` from the cheapest available representation.
    pub fn ft_mu(&self, k: usize, s: &DualPoint) -> Result<Complex64> {
        if s.level() > self.dual_level(k) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if k == 0 {
            return Ok(ft_point(&self.psi0, s)?.value);
        }
        if let Some(d) = self.dual(k) {
            return Ok(d.get(s));
        }
        if self.dual(k - 1).is_some() {
            return self.ft_mu_recursive(k, s);
        }
        match self.mu(k) {
            Some(m) => Ok(ft_point(m.density(), s)?.value),
            None => Err(Error::MissingCache(format!("no representation of mu_{k} reaches s = {s}"))),
        }
    }

    /// `μ̂_k(s) = Σ_t F̂_{M_k}(s - t) μ̂_{k-1}(t)` over the cached dual ball of
    /// `μ_{k-1}`.
    pub fn ft_mu_recursive(&self, k: usize, s: &DualPoint) -> Result<Complex64> {
        let cache = self
            .dual(k - 1)
            .ok_or_else(|| Error::MissingCache(format!("transform table of mu_{}", k - 1)))?;
        let fm = self.fm(k);
        let mut acc = NeumaierSum::default();
        for (t, v) in cache.entries() {
            if *v == Complex64::new(0.0, 0.0) {
                continue;
            }
            acc.add(fm.ft(&s.sub(t)?)? * v);
        }
        Ok(acc.total())
    }

    /// Transform of the product density, evaluated cell by cell.
    pub fn ft_mu_direct(&self, k: usize, s: &DualPoint) -> Result<Complex64> {
        Ok(ft_point(self.mu_required(k)?.density(), s)?.value)
    }

    pub fn ft_mu_exact(&self, k: usize, s: &DualPoint) -> Result<PhaseSum> {
        let v = ft_point_with(self.mu_required(k)?.density(), s, SumMode::Exact)?;
        Ok(v.exact.expect("exact mode"))
    }

    /// Checks that every support cell of `μ_k` lies in a ball
    /// `|xq - r|_p ≤ p^{-⌈τM_i⌉}` for each `i ≤ k`.
    pub fn support_wellapprox_check(&self, k: usize, table_rows: usize) -> Result<WitnessReport> {
        let mu = self.mu_required(k)?;
        let cells: Vec<&[u64]> = mu.density().iter().map(|(c, _)| c).collect();
        let (m, n) = self.params.shape.mn();
        let results: Vec<(Vec<u64>, Option<Vec<Witness>>)> = cells
            .par_iter()
            .map(|c| {
                let mut layers = Vec::with_capacity(k);
                for i in 1..=k {
                    match self.find_witness(c, i, m as usize, n as usize) {
                        Some(w) => layers.push(w),
                        None => return (c.to_vec(), None),
                    }
                }
                (c.to_vec(), Some(layers))
            })
            .collect();
        let mut report = WitnessReport {
            k,
            cells_checked: results.len(),
            failures: Vec::new(),
            table: Vec::new(),
        };
        for (c, w) in results {
            match w {
                None => report.failures.push(c),
                Some(w) => {
                    if report.table.len() < table_rows {
                        report.table.push(WitnessRow { cell: c, witnesses: w });
                    }
                }
            }
        }
        if !report.failures.is_empty() {
            return Err(Error::LemmaViolation(format!(
                "{} support cells of mu_{k} have no (q, r) witness",
                report.failures.len()
            )));
        }
        Ok(report)
    }

    fn find_witness(&self, x: &[u64], i: usize, m: usize, n: usize) -> Option<Witness> {
        let fm = self.fm(i);
        let p = self.params.prime;
        let modulus = checked_pow(p, fm.l)?;
        let rm = checked_pow(p, fm.m)?;
        let qs = &fm.primes;
        let mut digits = vec![0u64; n];
        loop {
            let q: Vec<u64> = digits.iter().map(|&d| qs[d as usize]).collect();
            let r: Vec<u64> = (0..m)
                .map(|row| {
                    (0..n).fold(0u64, |acc, j| (acc + mul_mod(x[row * n + j] % modulus, q[j], modulus)) % modulus)
                })
                .collect();
            if r.iter().all(|&ri| ri < rm) {
                let height = q.iter().chain(&r).copied().max().unwrap_or(0);
                // height^τ ≤ p^L, i.e. height^num ≤ p^{L·den}
                let tau = self.params.tau;
                let compatible = BigInt::from(height).pow(tau.num as u32)
                    <= BigInt::from(p).pow(fm.l * tau.den as u32);
                return Some(Witness {
                    level: i,
                    q,
                    r,
                    compatible,
                });
            }
            if !crate::stepfn::advance(&mut digits, qs.len() as u64) {
                return None;
            }
        }
    }

    /// Reproducibility record: parameters, schedule, prime counts, supports.
    pub fn manifest(&self) -> Value {
        let p = &self.params;
        let levels: Vec<Value> = (1..=self.depth())
            .map(|k| {
                let lv = self.schedule.level(k);
                json!({
                    "k": k,
                    "M": lv.m,
                    "L": lv.l,
                    "Q_count": lv.q_count(),
                    "conditions": self.schedule.checks.get(k - 1),
                    "fm_support": self.fm_density(k).map(|f| f.support_len()),
                    "mu_support": self.mu(k).map(|m| m.density().support_len()),
                    "dual_table": self.dual(k).map(|d| d.len()),
                    "representation": if self.mu(k).is_some() { "spatial" } else { "dual-only" },
                })
            })
            .collect();
        let shape = match p.shape {
            Shape::Scalar => json!({"kind": "scalar"}),
            Shape::Matrix { m, n } => json!({"kind": "matrix", "m": m, "n": n}),
        };
        json!({
            "prime": p.prime,
            "tau": p.tau.to_string(),
            "shape": shape,
            "growth": p.growth.to_string(),
            "requested_depth": p.depth,
            "built_depth": self.depth(),
            "mode": p.mode.name(),
            "toy_m_list": match &p.mode { BuildMode::Toy(ms) => json!(ms), BuildMode::Faithful => Value::Null },
            "M0": self.schedule.m0,
            "L0": self.schedule.l0,
            "psi0_level": psi0_level(p.shape),
            "psi0_support": self.psi0.support_len(),
            "schedule_conditions_hold": self.schedule.all_conditions_hold(),
            "levels": levels,
        })
    }

    /// SHA-256 of the compact manifest serialization.
    pub fn manifest_hash(&self) -> String {
        manifest_hash(&self.manifest())
    }
}

pub fn manifest_hash(manifest: &Value) -> String {
    let text = serde_json::to_string(manifest).expect("manifest serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn dual_from_density(f: &StepDensity, budget: u128) -> Option<DualCache> {
    let table = ft_table_with_budget(f, budget).ok()?;
    Some(DualCache::from_entries(table.level(), table.iter().collect()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub level: usize,
    pub q: Vec<u64>,
    pub r: Vec<u64>,
    /// `max(|q|, |r|)^τ ≤ p^{⌈τM⌉}`.
    pub compatible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessRow {
    pub cell: Vec<u64>,
    pub witnesses: Vec<Witness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub k: usize,
    pub cells_checked: usize,
    pub failures: Vec<Vec<u64>>,
    pub table: Vec<WitnessRow>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::growth::Ratio;
    use crate::fourier::dual_points_up_to;
    use num_rational::BigRational;
    use num_traits::One;

    fn toy(ms: Vec<u32>) -> KaufmanMeasure {
        let params = ConstructionParams::toy(3, "5/2".parse::<Ratio>().unwrap(), ms);
        KaufmanMeasure::build(&params, BuildOptions::default()).unwrap()
    }

    #[test]
    fn toy_one_two() {
        let km = toy(vec![1, 2]);
        assert_eq!(km.schedule().m0, 0);
        // F_1 lives on 0, 1, 14 mod 27 and ψ_0 on 3, 6 mod 9
        assert_eq!(km.mu(1).unwrap().density().support_len(), 0);
        assert!(!km.dual_separated(1));
    }

    #[test]
    fn toy_two_three() {
        let km = toy(vec![2, 3]);
        let mu1 = km.mu(1).unwrap();
        assert_eq!(mu1.density().support_len(), 4);
        assert_eq!(mu1.total_mass(), BigRational::one());
        let mu2 = km.mu(2).unwrap();
        let s1: Vec<Vec<u64>> = mu1.density().iter().map(|(c, _)| c.to_vec()).collect();
        let m1 = mu1.density().modulus();
        for (c, _) in mu2.density().iter() {
            assert!(s1.contains(&vec![c[0] % m1]));
        }
        for s in dual_points_up_to(3, 1, 4).unwrap() {
            let rec = km.ft_mu_recursive(2, &s).unwrap();
            let direct = km.ft_mu_direct(2, &s).unwrap();
            assert!((rec - direct).norm() < 1e-12, "{s}");
        }
        let report = km.support_wellapprox_check(2, 5).unwrap();
        assert_eq!(report.table.len().min(5), report.table.len());
        assert!(report.table.iter().all(|r| r.witnesses.len() == 2));
    }

    #[test]
    fn faithful_scalar_first_level() {
        let params = ConstructionParams::scalar(3, "5/2".parse::<Ratio>().unwrap(), 1);
        let km = KaufmanMeasure::build(&params, BuildOptions::default()).unwrap();
        assert_eq!(km.fm(1).m, 7);
        let mu = km.mu(1).unwrap();
        assert_eq!(mu.total_mass(), BigRational::one());
        assert!(km.dual(1).is_none());
        let s = DualPoint::from_level(3, 9, &[1234]).unwrap();
        let rec = km.ft_mu(1, &s).unwrap();
        let direct = km.ft_mu_direct(1, &s).unwrap();
        assert!((rec - direct).norm() < 1e-12);
    }

    #[test]
    fn faithful_depth_two_is_truncated() {
        let params = ConstructionParams::scalar(3, "5/2".parse::<Ratio>().unwrap(), 2);
        let (km, err) = KaufmanMeasure::build_truncated(&params, BuildOptions::default()).unwrap();
        assert_eq!(km.depth(), 1);
        assert!(matches!(err, Some(Error::ResolutionBudget { feasible_depth: 1, .. })));
    }

    #[test]
    fn manifest_is_stable() {
        let a = toy(vec![2, 3]);
        let b = toy(vec![2, 3]);
        assert_eq!(a.manifest_hash(), b.manifest_hash());
        assert_eq!(a.manifest()["levels"][1]["M"], 3);
    }
}
