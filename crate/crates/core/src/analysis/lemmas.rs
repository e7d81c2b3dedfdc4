//! Exact checks of the transform identities for `F_M` and `μ_k`, with the
//! measured decay constants.

use std::borrow::Cow;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use super::decay::shell_stat;
use super::decay_exponents;
use super::sampling::{random_shell_points, shell_points_sampled, spike_points, Sampling};
use crate::arith::{checked_pow, inv_mod, mul_mod};
use crate::construction::{ConstructionParams, FmLevel, KaufmanMeasure};
use crate::error::{Error, Result};
use crate::fourier::{
    ft_point_with, subdivided_ft_exact, subdivided_ft_vanishes, DualPoint, SumMode, DEFAULT_ORACLE_CAP,
};
use crate::padic::PadicRational;
use crate::phase_sum::PhaseSum;
use crate::stepfn::{StepDensity, DEFAULT_CELL_BUDGET};

/// Closed-form exact sums are used while `p^ℓ` stays below this; beyond it
/// the floating closed form is compared against [`FLOAT_TOLERANCE`].
const EXACT_CLOSED_LIMIT: u64 = 729;
const FLOAT_TOLERANCE: f64 = 1e-12;
/// Failures kept verbatim in a clause report.
const FAILURE_SAMPLE: usize = 20;
/// Cap on `|Q_M||R_M|` × points for the single-pair transform check.
const PAIR_WORK_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug)]
pub struct LemmaOptions {
    /// Shells up to this size are checked exhaustively by the exact clauses.
    pub exact_shell_cap: u128,
    /// Points per larger shell for the exact clauses.
    pub exact_samples: usize,
    /// Points beyond the cutoff.
    pub beyond_samples: usize,
    pub oracle_cap: u128,
    pub cell_budget: u128,
    /// Sampling for the measured constants.
    pub decay: Sampling,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        LemmaOptions {
            exact_shell_cap: 4096,
            exact_samples: 32,
            beyond_samples: 100,
            oracle_cap: DEFAULT_ORACLE_CAP,
            cell_budget: DEFAULT_CELL_BUDGET,
            decay: Sampling::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClauseReport {
    pub name: String,
    pub points: usize,
    pub exhaustive: bool,
    pub method: String,
    /// A failing hard clause is a construction bug; soft ones are reported.
    pub hard: bool,
    pub failures: Vec<String>,
    pub failure_count: usize,
}

impl ClauseReport {
    fn new(name: &str, method: &str, hard: bool) -> Self {
        ClauseReport {
            name: name.into(),
            points: 0,
            exhaustive: true,
            method: method.into(),
            hard,
            failures: Vec::new(),
            failure_count: 0,
        }
    }

    fn fail(&mut self, what: String) {
        self.failure_count += 1;
        if self.failures.len() < FAILURE_SAMPLE {
            self.failures.push(what);
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantShell {
    pub ell: u32,
    pub samples: usize,
    pub exhaustive: bool,
    pub max_abs: f64,
    pub argmax: String,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FmLemmaReport {
    pub prime: u64,
    pub shape: String,
    pub m: u32,
    pub l: u32,
    pub q_count: usize,
    pub clauses: Vec<ClauseReport>,
    /// `max |F̂_M(s)| |s|^β / ln^e |s|` over `p^M < |s| ≤ p^L`.
    pub constant: f64,
    pub constant_shells: Vec<ConstantShell>,
}

impl FmLemmaReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| !c.hard || c.passed())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MukLemmaReport {
    pub k: usize,
    pub m_k: u32,
    pub l_k: u32,
    pub dual_separated: bool,
    pub clauses: Vec<ClauseReport>,
    /// `max |μ̂_k(s)| |s|^β / (ln^e(1+|s|) g(|s|))` over `p^{M_k} < |s| ≤ p^{L_k}`.
    pub constant: f64,
    /// "theorem" for faithful schedules, "non-theorem (toy)" otherwise.
    pub constant_label: String,
    pub constant_shells: Vec<ConstantShell>,
}

impl MukLemmaReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| !c.hard || c.passed())
    }
}

/// A transform value either as an exact cyclotomic sum or a float.
enum Value {
    Exact(PhaseSum),
    Float(Complex64),
}

impl Value {
    fn is_zero(&self) -> bool {
        match self {
            Value::Exact(v) => v.is_zero(),
            Value::Float(v) => v.norm() <= FLOAT_TOLERANCE,
        }
    }

    fn is_one(&self) -> bool {
        match self {
            Value::Exact(v) => v.is_one().unwrap_or(false),
            Value::Float(v) => (v - Complex64::new(1.0, 0.0)).norm() <= FLOAT_TOLERANCE,
        }
    }

    fn equals(&self, other: &Value) -> Result<bool> {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a.eq_exact(b),
            _ => Ok((self.to_complex() - other.to_complex()).norm() <= FLOAT_TOLERANCE),
        }
    }

    fn to_complex(&self) -> Complex64 {
        match self {
            Value::Exact(v) => v.to_complex(),
            Value::Float(v) => *v,
        }
    }

    fn describe(&self) -> String {
        let z = self.to_complex();
        format!("{:.3e}{:+.3e}i", z.re, z.im)
    }
}

/// Exact transform of a density: bucketed at or below its level, by
/// subdivision above.
fn density_exact(f: &StepDensity, s: &DualPoint, cap: u128) -> Result<PhaseSum> {
    if s.level() <= f.level() {
        Ok(ft_point_with(f, s, SumMode::Exact)?.exact.expect("exact mode"))
    } else {
        subdivided_ft_exact(f, s, cap)
    }
}

/// `f` averaged down to level `ell` when it is finer; same transform on
/// `|s|_p ≤ p^{ell}`.
fn coarse_at(f: &StepDensity, ell: u32) -> Result<Cow<'_, StepDensity>> {
    if ell >= f.level() {
        Ok(Cow::Borrowed(f))
    } else {
        Ok(Cow::Owned(f.coarsen(ell)?))
    }
}

/// Zero test past the level of `f`, describing the value on failure.
fn beyond_failure(f: &StepDensity, s: &DualPoint, cap: u128, label: &str) -> Result<Option<String>> {
    if subdivided_ft_vanishes(f, s, cap)? {
        return Ok(None);
    }
    let v = Value::Exact(density_exact(f, s, cap)?);
    Ok(Some(format!("{label}({s}) = {}", v.describe())))
}

fn closed_exact_affordable(p: u64, s: &DualPoint) -> bool {
    checked_pow(p, s.level()).is_some_and(|n| n <= EXACT_CLOSED_LIMIT)
}

fn fm_value(fm: &FmLevel, density: Option<&StepDensity>, s: &DualPoint, cap: u128) -> Result<(Value, &'static str)> {
    if let Some(f) = density {
        return Ok((Value::Exact(density_exact(f, s, cap)?), "exact density sum"));
    }
    if s.level() > fm.l {
        return Ok((Value::Exact(fm.ft_exact(s)?), "cutoff"));
    }
    if closed_exact_affordable(fm.prime, s) {
        Ok((Value::Exact(fm.ft_exact(s)?), "exact closed form"))
    } else {
        Ok((Value::Float(fm.ft(s)?), "closed form, float tolerance 1e-12"))
    }
}

fn shell_points_exact(p: u64, dim: usize, ell: u32, opts: &LemmaOptions, salt: u64) -> Result<(Vec<DualPoint>, bool)> {
    let sampling = Sampling {
        cap: opts.exact_shell_cap,
        samples: opts.exact_samples,
        seed: opts.decay.seed ^ salt,
    };
    shell_points_sampled(p, dim, ell, &sampling, &[])
}

/// Points split between the two shells past `level`.
fn beyond_points(p: u64, dim: usize, level: u32, count: usize, seed: u64) -> Result<Vec<DualPoint>> {
    let first = count.div_ceil(2);
    let mut pts = random_shell_points(p, dim, level + 1, first, seed)?;
    if checked_pow(p, level + 2).is_some() {
        pts.extend(random_shell_points(p, dim, level + 2, count - first, seed)?);
    } else {
        pts.extend(random_shell_points(p, dim, level + 1, count - first, seed ^ 1)?);
    }
    Ok(pts)
}

/// Runs `check` on each point in parallel and records failures in order.
fn run_clause<F>(clause: &mut ClauseReport, points: &[DualPoint], check: F) -> Result<()>
where
    F: Fn(&DualPoint) -> Result<Option<String>> + Sync,
{
    let results: Vec<Option<String>> = points.par_iter().map(&check).collect::<Result<_>>()?;
    clause.points += points.len();
    for r in results.into_iter().flatten() {
        clause.fail(r);
    }
    Ok(())
}

/// Checks `F̂_M(0) = 1`, `F̂_M = 0` on `0 < |s| ≤ p^M` and beyond `p^L`,
/// the single-pair transforms, the pointwise bound, and measures the decay
/// constant on `p^M < |s| ≤ p^L`.
pub fn verify_lemma_fm(params: &ConstructionParams, m: u32, opts: &LemmaOptions) -> Result<FmLemmaReport> {
    params.validate()?;
    let fm = FmLevel::new(params, m)?;
    let p = fm.prime;
    let dim = fm.dim();
    let density = if checked_pow(p, fm.l).is_some() && fm.placement_count() <= opts.cell_budget {
        Some(fm.density(opts.cell_budget)?)
    } else {
        None
    };
    let dens = density.as_ref();
    let cap = opts.oracle_cap;
    let mut clauses = Vec::new();

    let zero = DualPoint::zero(p, dim);
    let (v0, method) = fm_value(&fm, dens, &zero, cap)?;
    let mut c1 = ClauseReport::new("FM1", method, true);
    c1.points = 1;
    if !v0.is_one() {
        c1.fail(format!("F(0) = {}", v0.describe()));
    }
    clauses.push(c1);

    let mut c2 = ClauseReport::new("FM2", "", true);
    for ell in 1..=m {
        let (pts, all) = shell_points_exact(p, dim, ell, opts, 2)?;
        c2.exhaustive &= all;
        let coarse = dens.map(|f| f.coarsen(ell)).transpose()?;
        run_clause(&mut c2, &pts, |s| {
            let (v, _) = fm_value(&fm, coarse.as_ref(), s, cap)?;
            Ok((!v.is_zero()).then(|| format!("F({s}) = {}", v.describe())))
        })?;
        c2.method = fm_value(&fm, dens, &pts[0], cap)?.1.into();
    }
    clauses.push(c2);

    let pts = beyond_points(p, dim, fm.l, opts.beyond_samples, opts.decay.seed ^ 4)?;
    let method = if dens.is_some() {
        "subdivided exact oracle"
    } else {
        "cutoff"
    };
    let mut c4 = ClauseReport::new("FM4", method, true);
    c4.exhaustive = false;
    run_clause(&mut c4, &pts, |s| {
        if let Some(f) = dens {
            return beyond_failure(f, s, cap, "F");
        }
        let (v, _) = fm_value(&fm, dens, s, cap)?;
        Ok((!v.is_zero()).then(|| format!("F({s}) = {}", v.describe())))
    })?;
    clauses.push(c4);

    if let (Some(f), true) = (dens, params.shape.is_scalar()) {
        clauses.push(single_pair_clause(&fm, opts)?);
        clauses.push(pointwise_bound_clause(&fm, f));
    }

    let (beta, e) = decay_exponents(params.shape, params.tau);
    let mut constant_shells = Vec::new();
    for ell in (m + 1)..=fm.l {
        let spikes = spike_points(&fm, ell, 8)?;
        let (pts, all) = shell_points_sampled(p, dim, ell, &opts.decay, &spikes)?;
        let vals: Vec<f64> = pts.par_iter().map(|s| fm.ft(s).map(|v| v.norm())).collect::<Result<_>>()?;
        let best = argmax(&vals);
        let t = (p as f64).powi(ell as i32);
        let max_abs = vals.get(best).copied().unwrap_or(0.0);
        constant_shells.push(ConstantShell {
            ell,
            samples: pts.len(),
            exhaustive: all,
            max_abs,
            argmax: pts.get(best).map(|s| s.to_string()).unwrap_or_default(),
            ratio: max_abs * t.powf(beta) / t.ln().powi(e as i32),
        });
    }
    let constant = constant_shells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(FmLemmaReport {
        prime: p,
        shape: params.shape.to_string(),
        m,
        l: fm.l,
        q_count: fm.primes.len(),
        clauses,
        constant,
        constant_shells,
    })
}

fn argmax(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    best
}

/// `φ̂_{q,r}(s) = e({rs/q}_p)` for `|s| ≤ p^L`: transform of the single ball
/// against the fractional part of the rational `rs/q`.
fn single_pair_clause(fm: &FmLevel, opts: &LemmaOptions) -> Result<ClauseReport> {
    let p = fm.prime;
    let l = fm.l;
    let modulus = checked_pow(p, l).ok_or(Error::LevelOverflow { prime: p, level: l })?;
    let rm = checked_pow(p, fm.m).ok_or(Error::LevelOverflow { prime: p, level: fm.m })?;
    let mut points = Vec::new();
    let mut exhaustive = true;
    for ell in 0..=l {
        let (pts, all) = shell_points_exact(p, 1, ell, opts, 6)?;
        exhaustive &= all;
        points.extend(pts);
    }
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    'outer: for &q in fm.primes.iter() {
        for r in 0..rm {
            if (pairs.len() + 1) * points.len() > PAIR_WORK_CAP {
                exhaustive = false;
                break 'outer;
            }
            pairs.push((q, r));
        }
    }
    let mut clause = ClauseReport::new("single pair", "exact cell sum vs fractional part", true);
    clause.exhaustive = exhaustive;
    let height = BigRational::from_integer(BigInt::from(modulus));
    for (q, r) in pairs {
        let center = mul_mod(r % modulus, inv_mod(q, modulus).expect("q is a unit"), modulus);
        let phi = StepDensity::ball_indicator(p, &[center], l, height.clone())?;
        run_clause(&mut clause, &points, |s| {
            let got = ft_point_with(&phi, s, SumMode::Exact)?.exact.expect("exact mode");
            let (a, ls) = s.coords()[0];
            let x = PadicRational::from_ratio(BigInt::from(r) * BigInt::from(a), BigInt::from(q) * BigInt::from(p).pow(ls), p)?;
            let ph = x.char_phase();
            let mut want = PhaseSum::zero(p);
            want.add_term(
                ph.index().try_into().map_err(|_| Error::LevelOverflow { prime: p, level: ph.level() })?,
                ph.level(),
                &BigRational::from_integer(1.into()),
            )?;
            Ok((!got.eq_exact(&want)?).then(|| format!("q={q}, r={r}, s={s}")))
        })?;
    }
    Ok(clause)
}

/// `F_M(x) ≤ p^L / (|Q_M||R_M|)` on `p^{-L} < |x|_p < 1`.
fn pointwise_bound_clause(fm: &FmLevel, f: &StepDensity) -> ClauseReport {
    let p = fm.prime;
    let bound = fm.unit_density();
    let mut clause = ClauseReport::new("pointwise bound", "all support cells", true);
    for (cell, v) in f.iter() {
        let x = cell[0];
        if x != 0 && x % p == 0 {
            clause.points += 1;
            if *v > bound {
                clause.fail(format!("F({x}) = {v} > {bound}"));
            }
        }
    }
    clause
}

/// Exact `μ̂_k(s)`; the matrix `μ_1` without a density is `F_{M_1}` itself.
fn mu_value(km: &KaufmanMeasure, k: usize, s: &DualPoint, cap: u128) -> Result<(Value, &'static str)> {
    if let Some(mu) = km.mu(k) {
        return Ok((Value::Exact(density_exact(mu.density(), s, cap)?), "exact density sum"));
    }
    if k == 1 && !km.params().shape.is_scalar() {
        return fm_value(km.fm(1), None, s, cap);
    }
    Err(Error::MissingCache(format!("no exact representation of mu_{k}")))
}

/// Checks `μ̂_k(0) = 1`, `μ̂_k = μ̂_{k-1}` on `0 < |s| ≤ p^{M_k}`, the cutoff
/// past the dual radius, and measures the decay constant.
pub fn verify_lemma_muk(km: &KaufmanMeasure, k: usize, opts: &LemmaOptions) -> Result<MukLemmaReport> {
    if k == 0 || k > km.depth() {
        return Err(Error::InvalidParams(format!("level {k} is not built (depth {})", km.depth())));
    }
    let p = km.prime();
    let dim = km.dim();
    let cap = opts.oracle_cap;
    let separated = km.dual_separated(k);
    let mut clauses = Vec::new();

    let (v0, method) = mu_value(km, k, &DualPoint::zero(p, dim), cap)?;
    let mut c1 = ClauseReport::new("mu-k 1", method, separated);
    c1.points = 1;
    if !v0.is_one() {
        c1.fail(format!("mu_{k}(0) = {}", v0.describe()));
    }
    clauses.push(c1);

    let m_k = km.schedule().m_of(k);
    let mut c2 = ClauseReport::new("mu-k 2", "", separated);
    for ell in 1..=m_k {
        let (pts, all) = shell_points_exact(p, dim, ell, opts, 8)?;
        c2.exhaustive &= all;
        let coarse = |j: usize| km.mu(j).map(|mu| coarse_at(mu.density(), ell)).transpose();
        let (ca, cb) = (coarse(k)?, coarse(k - 1)?);
        let value = |c: &Option<Cow<StepDensity>>, j: usize, s: &DualPoint| match c {
            Some(f) => Ok(Value::Exact(density_exact(f, s, cap)?)),
            None => mu_value(km, j, s, cap).map(|v| v.0),
        };
        run_clause(&mut c2, &pts, |s| {
            let a = value(&ca, k, s)?;
            let b = value(&cb, k - 1, s)?;
            Ok((!a.equals(&b)?).then(|| format!("s={s}: {} vs {}", a.describe(), b.describe())))
        })?;
        c2.method = mu_value(km, k, &pts[0], cap)?.1.into();
    }
    clauses.push(c2);

    let top = km.dual_level(k);
    let pts = random_shell_points(p, dim, top + 1, opts.beyond_samples, opts.decay.seed ^ 16)?;
    let method = if km.mu(k).is_some() {
        "subdivided exact oracle"
    } else {
        "cutoff"
    };
    let mut c4 = ClauseReport::new("mu-k 4", method, true);
    c4.exhaustive = false;
    run_clause(&mut c4, &pts, |s| {
        if let Some(mu) = km.mu(k) {
            return beyond_failure(mu.density(), s, cap, &format!("mu_{k}"));
        }
        let (v, _) = mu_value(km, k, s, cap)?;
        Ok((!v.is_zero()).then(|| format!("mu_{k}({s}) = {}", v.describe())))
    })?;
    clauses.push(c4);

    let l_k = km.schedule().l_of(k);
    let mut constant_shells = Vec::new();
    for ell in (m_k + 1)..=l_k {
        let st = shell_stat(km, k, ell, &opts.decay)?;
        constant_shells.push(ConstantShell {
            ell,
            samples: st.samples,
            exhaustive: st.exhaustive,
            max_abs: st.max_abs,
            argmax: st.argmax,
            ratio: st.ratio,
        });
    }
    let constant = constant_shells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(MukLemmaReport {
        k,
        m_k,
        l_k,
        dual_separated: separated,
        clauses,
        constant,
        constant_label: if km.is_toy() {
            "non-theorem (toy)".into()
        } else {
            "theorem".into()
        },
        constant_shells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{BuildOptions, Ratio};

    fn tau(s: &str) -> Ratio {
        s.parse().unwrap()
    }

    #[test]
    fn fm_lemma_small_scalar() {
        let params = ConstructionParams::scalar(3, tau("5/2"), 1);
        let r = verify_lemma_fm(&params, 1, &LemmaOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.clauses);
        let fm2 = r.clauses.iter().find(|c| c.name == "FM2").unwrap();
        assert_eq!(fm2.points, 2);
        assert!(fm2.exhaustive);
        assert!(r.clauses.iter().any(|c| c.name == "single pair" && c.points > 0));
    }

    #[test]
    fn fm_constant_is_finite_positive() {
        let params = ConstructionParams::scalar(3, tau("5/2"), 1);
        let r = verify_lemma_fm(&params, 2, &LemmaOptions::default()).unwrap();
        assert!(r.passed());
        assert!(r.constant.is_finite() && r.constant > 0.0);
    }

    #[test]
    fn matrix_fm_lemma() {
        let params = ConstructionParams::matrix(3, tau("2"), 2, 1, 1);
        let r = verify_lemma_fm(&params, 1, &LemmaOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.clauses);
    }

    #[test]
    fn muk_lemma_toy() {
        let params = ConstructionParams::toy(3, tau("5/2"), vec![2, 3]);
        let km = KaufmanMeasure::build(&params, BuildOptions::default()).unwrap();
        for k in 1..=2 {
            let r = verify_lemma_muk(&km, k, &LemmaOptions::default()).unwrap();
            assert!(r.passed(), "k={k}: {:?}", r.clauses);
            assert_eq!(r.constant_label, "non-theorem (toy)");
        }
    }

    #[test]
    fn unseparated_levels_are_informational() {
        let params = ConstructionParams::toy(3, tau("5/2"), vec![1, 2]);
        let km = KaufmanMeasure::build(&params, BuildOptions::default()).unwrap();
        let r = verify_lemma_muk(&km, 2, &LemmaOptions::default()).unwrap();
        assert!(!r.dual_separated);
        assert!(r.clauses.iter().filter(|c| c.name != "mu-k 4").all(|c| !c.hard));
        assert!(r.passed());
    }
}
