//! Fourier transforms of step densities on `Z_p^d`.
//!
//! The transform is `f̂(s) = ∫ e({x·s}_p) f(x) dx` for `s ∈ (Q_p/Z_p)^d`.
//! For a density constant on level-`L` cells, the integral over one cell is
//! `p^{-dL} e({c·s}_p)` when `|s|_p ≤ p^L` and vanishes otherwise, which
//! gives the exact evaluator [`ft_point`]. [`ft_table`] evaluates every dual
//! point at once with a radix-`p` transform along each axis, and the
//! `brute_*` oracles integrate characters by direct subdivision without
//! using the cancellation argument.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use num_bigint::{BigInt, ToBigInt};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::{self, mul_mod, pow_or_err};
use crate::error::{Error, Result};
use crate::numeric::{fmt_f64, root_of_unity, NeumaierSum};
use crate::padic::{rational_pow, PadicRational, UnitRootPhase, Valuation};
use crate::phase_sum::PhaseSum;
use crate::stepfn::{advance, StepDensity};

/// Above this many roots of unity the automatic mode sums in floating point.
pub const DEFAULT_BUCKET_THRESHOLD: u64 = 1_000_000;

/// Default number of table entries [`ft_table`] may allocate.
pub const DEFAULT_TABLE_BUDGET: u128 = 1 << 24;

/// Default cap on subcell evaluations in the brute-force oracles.
pub const DEFAULT_ORACLE_CAP: u128 = 1 << 22;

/// Absolute tolerance used when comparing complex transform values.
pub const COMPLEX_TOLERANCE: f64 = 1e-12;

/// A point of `(Q_p/Z_p)^d`; coordinate `i` is `index_i / p^{level_i}` in
/// lowest terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualPoint {
    prime: u64,
    coords: Vec<(u64, u32)>,
}

impl DualPoint {
    pub fn zero(prime: u64, dim: usize) -> Self {
        DualPoint {
            prime,
            coords: vec![(0, 0); dim],
        }
    }

    /// Canonical point from numerators over the common denominator `p^level`.
    pub fn from_level(prime: u64, level: u32, numerators: &[u64]) -> Result<Self> {
        let m = pow_or_err(prime, level)?;
        let coords = numerators
            .iter()
            .map(|&a| reduce(a % m, level, prime))
            .collect();
        Ok(DualPoint { prime, coords })
    }

    /// The class of arbitrary rationals modulo `Z_p^d`.
    pub fn from_rationals(s: &[PadicRational]) -> Result<Self> {
        let prime = s
            .first()
            .map(|x| x.prime())
            .ok_or_else(|| Error::InvalidParams("empty dual point".into()))?;
        let mut coords = Vec::with_capacity(s.len());
        for x in s {
            let ph = x.char_phase();
            pow_or_err(prime, ph.level())?;
            let idx = ph
                .index()
                .to_u64()
                .ok_or(Error::LevelOverflow { prime, level: ph.level() })?;
            coords.push((idx, ph.level()));
        }
        Ok(DualPoint { prime, coords })
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(u64, u32)] {
        &self.coords
    }

    /// `ℓ` with `|s|_p = p^ℓ` (0 for `s = 0`).
    pub fn level(&self) -> u32 {
        self.coords.iter().map(|c| c.1).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.0 == 0)
    }

    /// Numerators over the common denominator `p^level`, `level ≥ self.level()`.
    pub fn numerators_at(&self, level: u32) -> Vec<u64> {
        debug_assert!(level >= self.level());
        self.coords
            .iter()
            .map(|&(a, l)| arith::lift_index(a, self.prime, l, level))
            .collect()
    }

    pub fn to_rationals(&self) -> Vec<PadicRational> {
        self.coords
            .iter()
            .map(|&(a, l)| {
                PadicRational::new(
                    BigRational::new(BigInt::from(a), BigInt::from(self.prime).pow(l)),
                    self.prime,
                )
            })
            .collect()
    }

    pub fn neg(&self) -> DualPoint {
        let l = self.level();
        let m = arith::checked_pow(self.prime, l).expect("level validated at construction");
        let nums: Vec<u64> = self.numerators_at(l).iter().map(|a| (m - a) % m).collect();
        DualPoint::from_level(self.prime, l, &nums).expect("same level")
    }

    pub fn add(&self, other: &DualPoint) -> Result<DualPoint> {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &DualPoint) -> Result<DualPoint> {
        self.combine(other, true)
    }

    fn combine(&self, other: &DualPoint, negate: bool) -> Result<DualPoint> {
        if self.prime != other.prime {
            return Err(Error::PrimeMismatch {
                left: self.prime,
                right: other.prime,
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        let l = self.level().max(other.level());
        let m = pow_or_err(self.prime, l)?;
        let a = self.numerators_at(l);
        let b = other.numerators_at(l);
        let nums: Vec<u64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| if negate { (x + m - y) % m } else { (x + y) % m })
            .collect();
        DualPoint::from_level(self.prime, l, &nums)
    }
}

fn reduce(mut a: u64, mut level: u32, p: u64) -> (u64, u32) {
    if a == 0 {
        return (0, 0);
    }
    while level > 0 && a.is_multiple_of(p) {
        a /= p;
        level -= 1;
    }
    (a, level)
}

impl fmt::Display for DualPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, &(a, l)) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", coordinate_label(a, l, self.prime))?;
        }
        write!(f, ")")
    }
}

/// `a/p^ℓ` label used in reports.
pub fn coordinate_label(a: u64, l: u32, p: u64) -> String {
    if a == 0 {
        "0".to_string()
    } else {
        format!("{a}/{p}^{l}")
    }
}

/// Every dual point with `|s|_p ≤ p^level`, in radix-lexicographic order of
/// the numerators over `p^level`.
pub fn dual_points_up_to(prime: u64, dim: usize, level: u32) -> Result<Vec<DualPoint>> {
    let m = pow_or_err(prime, level)?;
    let count = (m as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if count > DEFAULT_TABLE_BUDGET {
        return Err(Error::TableTooLarge {
            cells: count,
            budget: DEFAULT_TABLE_BUDGET,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0u64; dim];
    loop {
        let nums: Vec<u64> = digits.iter().rev().copied().collect();
        out.push(DualPoint::from_level(prime, level, &nums)?);
        if !advance(&mut digits, m) {
            break;
        }
    }
    Ok(out)
}

/// Dual points with `|s|_p = p^level` exactly.
pub fn shell_points(prime: u64, dim: usize, level: u32) -> Result<Vec<DualPoint>> {
    Ok(dual_points_up_to(prime, dim, level)?
        .into_iter()
        .filter(|s| s.level() == level)
        .collect())
}

/// Number of dual points on the shell `|s|_p = p^level`.
pub fn shell_size(prime: u64, dim: usize, level: u32) -> u128 {
    if level == 0 {
        return 1;
    }
    let outer = (prime as u128).pow(dim as u32 * level);
    let inner = (prime as u128).pow(dim as u32 * (level - 1));
    outer - inner
}

/// `p^{-dk} e({s·a}_p)` as an exact scale and phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledPhase {
    pub scale: BigRational,
    pub phase: UnitRootPhase,
}

impl ScaledPhase {
    pub fn to_complex(&self) -> Complex64 {
        self.phase.to_complex() * self.scale.to_f64().unwrap_or(f64::NAN)
    }
}

/// `∫_{B(a, p^{-k})} e({s·x}_p) dx`: `p^{-dk} e({s·a}_p)` if `|s|_p ≤ p^k`,
/// otherwise zero (`None`).
pub fn ft_ball_indicator(a: &[PadicRational], k: i64, s: &DualPoint) -> Result<Option<ScaledPhase>> {
    if a.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: s.dim(),
        });
    }
    let p = s.prime();
    if (s.level() as i64) > k {
        return Ok(None);
    }
    let mut dot = PadicRational::zero(p);
    for (ai, si) in a.iter().zip(s.to_rationals()) {
        dot = &dot + &(ai * &si);
    }
    Ok(Some(ScaledPhase {
        scale: rational_pow(p, -(a.len() as i64) * k),
        phase: dot.char_phase(),
    }))
}

/// Which accumulator [`ft_point_with`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumMode {
    /// Exact when `|s|_p` is at most the threshold, floating point above.
    Auto(u64),
    Exact,
    Float,
}

impl Default for SumMode {
    fn default() -> Self {
        SumMode::Auto(DEFAULT_BUCKET_THRESHOLD)
    }
}

/// A transform value, with its exact cyclotomic form when it was computed.
#[derive(Clone, Debug)]
pub struct FourierValue {
    pub value: Complex64,
    pub exact: Option<PhaseSum>,
}

impl FourierValue {
    pub fn exact_zero(prime: u64) -> Self {
        FourierValue {
            value: Complex64::new(0.0, 0.0),
            exact: Some(PhaseSum::zero(prime)),
        }
    }

    /// `Some(true/false)` when the exact form is known.
    pub fn is_exactly_zero(&self) -> Option<bool> {
        self.exact.as_ref().map(|e| e.is_zero())
    }

    pub fn is_exactly_one(&self) -> Option<bool> {
        self.exact.as_ref().map(|e| e.is_one().unwrap_or(false))
    }
}

/// `f̂(s)` with the default accumulator.
pub fn ft_point(f: &StepDensity, s: &DualPoint) -> Result<FourierValue> {
    ft_point_with(f, s, SumMode::default())
}

pub fn ft_point_with(f: &StepDensity, s: &DualPoint, mode: SumMode) -> Result<FourierValue> {
    check_shape(f, s)?;
    let p = f.prime();
    let l = s.level();
    if l > f.level() {
        return Ok(FourierValue::exact_zero(p));
    }
    let m = pow_or_err(p, l)?;
    let nums = s.numerators_at(l);
    let exact = match mode {
        SumMode::Exact => true,
        SumMode::Float => false,
        SumMode::Auto(threshold) => m <= threshold,
    };
    if exact {
        if let Some(sum) = exact_int_sum(f, &nums, m, l)? {
            return Ok(FourierValue {
                value: sum.to_complex(),
                exact: Some(sum),
            });
        }
        let mut buckets: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (cell, v) in f.iter() {
            let idx = dot_mod(cell, &nums, m);
            *buckets.entry(idx).or_insert_with(BigRational::zero) += v;
        }
        let vol = f.cell_volume();
        let mut sum = PhaseSum::zero(p);
        for (idx, v) in buckets {
            sum.add_term(idx, l, &(v * &vol))?;
        }
        Ok(FourierValue {
            value: sum.to_complex(),
            exact: Some(sum),
        })
    } else {
        let view = f.float_view();
        let mut acc = NeumaierSum::default();
        for i in 0..view.len() {
            let idx = dot_mod(view.cell(i), &nums, m);
            acc.add(root_of_unity(idx, m) * view.values[i]);
        }
        let vol = (p as f64).powi(-((f.dim() as u32 * f.level()) as i32));
        Ok(FourierValue {
            value: acc.total() * vol,
            exact: None,
        })
    }
}

/// Exact bucketed sum over the integer view; `None` on `i128` overflow.
fn exact_int_sum(f: &StepDensity, nums: &[u64], m: u64, l: u32) -> Result<Option<PhaseSum>> {
    let Some(view) = f.int_view() else {
        return Ok(None);
    };
    let mut buckets: HashMap<u64, i128> = HashMap::new();
    for i in 0..view.len() {
        let idx = dot_mod(view.cell(i), nums, m);
        let slot = buckets.entry(idx).or_insert(0);
        match slot.checked_add(view.numerators[i]) {
            Some(v) => *slot = v,
            None => return Ok(None),
        }
    }
    let scale = f.cell_volume() / BigRational::from_integer(view.denominator.clone());
    let mut sum = PhaseSum::zero(f.prime());
    for (idx, v) in buckets {
        if v != 0 {
            sum.add_term(idx, l, &(BigRational::from_integer(BigInt::from(v)) * &scale))?;
        }
    }
    Ok(Some(sum))
}

#[inline]
fn dot_mod(cell: &[u64], nums: &[u64], m: u64) -> u64 {
    let mut acc = 0u64;
    for (c, a) in cell.iter().zip(nums) {
        acc = (acc + mul_mod(*c, *a, m)) % m;
    }
    acc
}

fn check_shape(f: &StepDensity, s: &DualPoint) -> Result<()> {
    if f.prime() != s.prime() {
        return Err(Error::PrimeMismatch {
            left: f.prime(),
            right: s.prime(),
        });
    }
    if f.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            left: f.dim(),
            right: s.dim(),
        });
    }
    Ok(())
}

/// Dense transform table over all `|s|_p ≤ p^L`.
#[derive(Clone, Debug)]
pub struct FourierTable {
    prime: u64,
    dim: usize,
    level: u32,
    modulus: u64,
    values: Vec<Complex64>,
}

impl FourierTable {
    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn offset(&self, nums: &[u64]) -> usize {
        nums.iter()
            .fold(0usize, |acc, &a| acc * self.modulus as usize + a as usize)
    }

    /// The entry at `s`; zero beyond the table's radius.
    pub fn get(&self, s: &DualPoint) -> Complex64 {
        if s.level() > self.level {
            return Complex64::new(0.0, 0.0);
        }
        self.values[self.offset(&s.numerators_at(self.level))]
    }

    /// Entries in radix-lexicographic order of the numerators.
    pub fn iter(&self) -> impl Iterator<Item = (DualPoint, Complex64)> + '_ {
        let d = self.dim;
        let m = self.modulus;
        self.values.iter().enumerate().map(move |(i, v)| {
            let mut nums = vec![0u64; d];
            let mut rest = i as u64;
            for slot in nums.iter_mut().rev() {
                *slot = rest % m;
                rest /= m;
            }
            (
                DualPoint::from_level(self.prime, self.level, &nums).expect("level fits"),
                *v,
            )
        })
    }

    /// Reconstructs the cell values `f(c) = Σ_s f̂(s) e(-{c·s}_p)`, indexed
    /// like the table.
    pub fn inverse(&self) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = self.values.iter().map(|v| v.conj()).collect();
        transform_axes(&mut data, self.prime, self.level, self.dim);
        data.iter_mut().for_each(|v| *v = v.conj());
        data
    }

    /// CSV with columns `s_1..s_d, real, imag, abs, norm_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|i| format!("s{i}")).collect();
        writeln!(w, "{},real,imag,abs,norm_s", cols.join(","))?;
        for (s, v) in self.iter() {
            let labels: Vec<String> = s
                .coords()
                .iter()
                .map(|&(a, l)| coordinate_label(a, l, self.prime))
                .collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                labels.join(","),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_f64(v.norm()),
                (self.prime as u128).pow(s.level())
            )?;
        }
        Ok(())
    }
}

/// Full table of `f̂` over `|s|_p ≤ p^{f.level}`.
pub fn ft_table(f: &StepDensity) -> Result<FourierTable> {
    ft_table_with_budget(f, DEFAULT_TABLE_BUDGET)
}

pub fn ft_table_with_budget(f: &StepDensity, budget: u128) -> Result<FourierTable> {
    let m = f.modulus();
    let cells = (m as u128).checked_pow(f.dim() as u32).unwrap_or(u128::MAX);
    if cells > budget {
        return Err(Error::TableTooLarge { cells, budget });
    }
    let mut table = FourierTable {
        prime: f.prime(),
        dim: f.dim(),
        level: f.level(),
        modulus: m,
        values: vec![Complex64::new(0.0, 0.0); cells as usize],
    };
    let view = f.float_view();
    for i in 0..view.len() {
        let off = table.offset(view.cell(i));
        table.values[off] = Complex64::new(view.values[i], 0.0);
    }
    transform_axes(&mut table.values, f.prime(), f.level(), f.dim());
    let vol = (f.prime() as f64).powi(-((f.dim() as u32 * f.level()) as i32));
    table.values.iter_mut().for_each(|v| *v *= vol);
    Ok(table)
}

/// Transform of complex cell values on a dense row-major `[p^L; d]` grid,
/// scaled by the cell volume so the result is `f̂` on `|s|_p ≤ p^L`.
pub fn dense_transform(values: &mut [Complex64], p: u64, level: u32, dim: usize) -> Result<()> {
    let m = pow_or_err(p, level)? as usize;
    if values.len() != m.pow(dim as u32) {
        return Err(Error::DimensionMismatch {
            left: m.pow(dim as u32),
            right: values.len(),
        });
    }
    transform_axes(values, p, level, dim);
    let vol = (p as f64).powi(-((dim as u32 * level) as i32));
    values.iter_mut().for_each(|v| *v *= vol);
    Ok(())
}

/// In-place `X[k] = Σ_n x[n] e(n·k / p^L)` along every axis of a row-major
/// `[p^L; d]` array.
fn transform_axes(data: &mut [Complex64], p: u64, level: u32, dim: usize) {
    let n = arith::checked_pow(p, level).expect("validated level") as usize;
    if n == 1 {
        return;
    }
    let roots: Vec<Complex64> = (0..n as u64).map(|i| root_of_unity(i, n as u64)).collect();
    let perm = digit_reversal(p as usize, level);
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let lines = data.len() / n;
        let transformed: Vec<Vec<Complex64>> = (0..lines)
            .into_par_iter()
            .map(|line| {
                let outer = line / stride;
                let inner = line % stride;
                let base = outer * n * stride + inner;
                let mut buf: Vec<Complex64> = (0..n).map(|j| data[base + perm[j] * stride]).collect();
                radix_p_stages(&mut buf, p as usize, level, &roots);
                buf
            })
            .collect();
        for (line, buf) in transformed.into_iter().enumerate() {
            let outer = line / stride;
            let inner = line % stride;
            let base = outer * n * stride + inner;
            for (j, v) in buf.into_iter().enumerate() {
                data[base + j * stride] = v;
            }
        }
    }
}

fn digit_reversal(p: usize, level: u32) -> Vec<usize> {
    let n = p.pow(level);
    (0..n)
        .map(|mut i| {
            let mut r = 0;
            for _ in 0..level {
                r = r * p + i % p;
                i /= p;
            }
            r
        })
        .collect()
}

/// Decimation-in-time butterflies on digit-reversed input. Twiddles are
/// read from the exact-index root table.
fn radix_p_stages(buf: &mut [Complex64], p: usize, level: u32, roots: &[Complex64]) {
    let n = buf.len();
    let mut scratch = vec![Complex64::new(0.0, 0.0); p];
    let mut sub = 1usize;
    for _ in 0..level {
        let size = sub * p;
        let tw_step = n / size;
        for start in (0..n).step_by(size) {
            for j in 0..sub {
                for (k, out) in scratch.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r in 0..p {
                        // ω_size^{(j + k·sub)·r}
                        let e = ((j + k * sub) * r * tw_step) % n;
                        acc += buf[start + j + r * sub] * roots[e];
                    }
                    *out = acc;
                }
                for (k, v) in scratch.iter().enumerate() {
                    buf[start + j + k * sub] = *v;
                }
            }
        }
        sub = size;
    }
}

/// `{y·s}_p` phase for an integral cell point `y` and raw rationals `s`.
fn raw_phase(y: &[u64], s: &[PadicRational]) -> UnitRootPhase {
    let p = s[0].prime();
    let mut dot = BigRational::zero();
    for (yi, si) in y.iter().zip(s) {
        dot += si.value() * BigRational::from_integer(BigInt::from(*yi));
    }
    PadicRational::new(dot, p).char_phase()
}

fn raw_level(s: &[PadicRational]) -> u32 {
    s.iter()
        .map(|x| match x.valuation() {
            Valuation::Finite(v) if v < 0 => (-v) as u32,
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

/// Visits every subcell of every support cell at level `max(L, ℓ_s)`.
fn for_each_subcell<F: FnMut(&[u64], &BigRational)>(
    f: &StepDensity,
    s_level: u32,
    cap: u128,
    mut visit: F,
) -> Result<u32> {
    let fine = f.level().max(s_level);
    let per_axis = pow_or_err(f.prime(), fine - f.level())?;
    let sub = (per_axis as u128).pow(f.dim() as u32);
    let work = sub.saturating_mul(f.support_len() as u128);
    if work > cap {
        return Err(Error::OracleCapExceeded { work, cap });
    }
    let m = f.modulus();
    let mut y = vec![0u64; f.dim()];
    for (cell, v) in f.iter() {
        let mut digits = vec![0u64; f.dim()];
        loop {
            for i in 0..f.dim() {
                y[i] = cell[i] + digits[i] * m;
            }
            visit(&y, v);
            if !advance(&mut digits, per_axis) {
                break;
            }
        }
    }
    Ok(fine)
}

/// Direct-summation oracle: integrates the character over every cell by
/// splitting it into subcells on which `x ↦ e({x·s}_p)` is constant, using
/// only fractional parts and complex exponentials. `s` may be any rational
/// representative.
pub fn brute_ft_oracle(f: &StepDensity, s: &[PadicRational], cap: u128) -> Result<Complex64> {
    check_raw(f, s)?;
    let mut acc = NeumaierSum::default();
    let mut terms: Vec<(Vec<u64>, f64)> = Vec::new();
    let fine = for_each_subcell(f, raw_level(s), cap, |y, v| {
        terms.push((y.to_vec(), v.to_f64().unwrap_or(f64::NAN)));
    })?;
    for (y, v) in terms {
        let frac = raw_phase(&y, s).as_fraction().to_f64().unwrap_or(f64::NAN);
        let (sn, cs) = (2.0 * std::f64::consts::PI * frac).sin_cos();
        acc.add(Complex64::new(cs, sn) * v);
    }
    let vol = (f.prime() as f64).powi(-((f.dim() as u32 * fine) as i32));
    Ok(acc.total() * vol)
}

/// Exact counterpart of [`brute_ft_oracle`].
pub fn brute_ft_exact(f: &StepDensity, s: &[PadicRational], cap: u128) -> Result<PhaseSum> {
    check_raw(f, s)?;
    let p = f.prime();
    let mut buckets: BTreeMap<(u32, num_bigint::BigUint), BigRational> = BTreeMap::new();
    let fine = for_each_subcell(f, raw_level(s), cap, |y, v| {
        let ph = raw_phase(y, s);
        *buckets
            .entry((ph.level(), ph.index().clone()))
            .or_insert_with(BigRational::zero) += v;
    })?;
    let vol = rational_pow(p, -(f.dim() as i64 * fine as i64));
    let mut sum = PhaseSum::zero(p);
    for ((level, idx), v) in buckets {
        let idx = idx.to_u64().ok_or(Error::LevelOverflow { prime: p, level })?;
        sum.add_term(idx, level, &(v * &vol))?;
    }
    Ok(sum)
}

/// Exact transform by splitting every cell into its level-`max(L, ℓ)`
/// subcells and summing the characters there; machine-integer indices, no
/// use of the ball formula.
pub fn subdivided_ft_exact(f: &StepDensity, s: &DualPoint, cap: u128) -> Result<PhaseSum> {
    let sub = Subdivision::new(f, s, cap)?;
    let mut sum = PhaseSum::zero(sub.p);
    if let Some((buckets, scale)) = sub.int_buckets(f)? {
        for (idx, v) in buckets {
            if v != 0 {
                sum.add_term(idx, sub.l, &(BigRational::from_integer(BigInt::from(v)) * &scale))?;
            }
        }
        return Ok(sum);
    }
    let mut buckets: BTreeMap<u64, BigRational> = BTreeMap::new();
    let mut digits = vec![0u64; sub.d];
    for (cell, v) in f.iter() {
        digits.iter_mut().for_each(|x| *x = 0);
        loop {
            *buckets.entry(sub.index_of(cell, &digits)).or_insert_with(BigRational::zero) += v;
            if !advance(&mut digits, sub.sub_mod) {
                break;
            }
        }
    }
    for (idx, v) in buckets {
        sum.add_term(idx, sub.l, &(v * &sub.vol))?;
    }
    Ok(sum)
}

/// Whether [`subdivided_ft_exact`] is zero, decided on integer buckets when
/// they fit: `Σ c_j e(j/p^ℓ)` vanishes iff `c` is constant on the classes
/// `j + p^{ℓ-1}Z` modulo `p^ℓ`.
pub fn subdivided_ft_vanishes(f: &StepDensity, s: &DualPoint, cap: u128) -> Result<bool> {
    let sub = Subdivision::new(f, s, cap)?;
    if sub.l == 0 {
        return Ok(subdivided_ft_exact(f, s, cap)?.is_zero());
    }
    match sub.int_buckets(f)? {
        Some((buckets, _)) => Ok(integer_phases_vanish(&buckets, sub.p, sub.l)),
        None => Ok(subdivided_ft_exact(f, s, cap)?.is_zero()),
    }
}

fn integer_phases_vanish(buckets: &HashMap<u64, i128>, p: u64, l: u32) -> bool {
    let m = p.pow(l);
    let coset = m / p;
    let get = |j: u64| buckets.get(&j).copied().unwrap_or(0);
    buckets.iter().all(|(&j, &v)| get((j + coset) % m) == v)
}

/// Cells of `f` split to the level of `s` (or kept, when `s` is coarser).
struct Subdivision {
    p: u64,
    d: usize,
    l: u32,
    m: u64,
    step: u64,
    nums: Vec<u64>,
    sub_mod: u64,
    vol: BigRational,
}

impl Subdivision {
    fn new(f: &StepDensity, s: &DualPoint, cap: u128) -> Result<Self> {
        check_shape(f, s)?;
        let p = f.prime();
        let l = s.level();
        let fine = f.level().max(l);
        let sub_level = fine - f.level();
        let d = f.dim();
        let per_cell = (p as u128).saturating_pow(d as u32 * sub_level);
        let work = per_cell.saturating_mul(f.support_len() as u128);
        if work > cap {
            return Err(Error::OracleCapExceeded { work, cap });
        }
        let m = pow_or_err(p, l)?;
        Ok(Subdivision {
            p,
            d,
            l,
            m,
            step: pow_or_err(p, f.level())? % m.max(1),
            nums: s.numerators_at(l),
            sub_mod: pow_or_err(p, sub_level)?,
            vol: rational_pow(p, -(d as i64 * fine as i64)),
        })
    }

    fn index_of(&self, cell: &[u64], digits: &[u64]) -> u64 {
        let m = self.m;
        let mut idx = 0u64;
        for i in 0..self.d {
            let y = (cell[i] % m + mul_mod(digits[i], self.step, m)) % m;
            idx = (idx + mul_mod(y, self.nums[i], m)) % m;
        }
        idx
    }

    /// Integer phase buckets and the common scale, when `f` has an integer
    /// view.
    fn int_buckets(&self, f: &StepDensity) -> Result<Option<(HashMap<u64, i128>, BigRational)>> {
        let Some(view) = f.int_view() else {
            return Ok(None);
        };
        let mut buckets: HashMap<u64, i128> = HashMap::new();
        let mut digits = vec![0u64; self.d];
        for i in 0..view.len() {
            digits.iter_mut().for_each(|x| *x = 0);
            loop {
                let slot = buckets.entry(self.index_of(view.cell(i), &digits)).or_insert(0);
                *slot = slot.checked_add(view.numerators[i]).ok_or_else(|| Error::MemoryBudget {
                    what: "i128 bucket".into(),
                    needed: u128::MAX,
                    budget: i128::MAX as u128,
                })?;
                if !advance(&mut digits, self.sub_mod) {
                    break;
                }
            }
        }
        let scale = &self.vol / BigRational::from_integer(view.denominator.clone());
        Ok(Some((buckets, scale)))
    }
}

fn check_raw(f: &StepDensity, s: &[PadicRational]) -> Result<()> {
    if s.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            left: f.dim(),
            right: s.len(),
        });
    }
    if let Some(x) = s.iter().find(|x| x.prime() != f.prime()) {
        return Err(Error::PrimeMismatch {
            left: f.prime(),
            right: x.prime(),
        });
    }
    Ok(())
}

/// Rational for the integer `n` at prime `p`.
pub fn int_rational(n: i64, p: u64) -> PadicRational {
    PadicRational::new(BigRational::from_integer(n.to_bigint().expect("i64")), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn q(n: i64, d: i64) -> PadicRational {
        PadicRational::from_ratio(n, d, 3).unwrap()
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn ball_lemma_cases() {
        let s0 = DualPoint::zero(3, 1);
        let v = ft_ball_indicator(&[q(0, 1)], 0, &s0).unwrap().unwrap();
        assert_eq!(v.scale, BigRational::one());
        assert!(v.phase.is_identity());
        let s = DualPoint::from_rationals(&[q(1, 3)]).unwrap();
        assert!(ft_ball_indicator(&[q(0, 1)], 0, &s).unwrap().is_none());
        let v = ft_ball_indicator(&[q(2, 1)], 1, &s).unwrap().unwrap();
        assert_eq!(v.scale, r(1, 3));
        assert_eq!(v.phase, q(2, 3).char_phase());
        assert!(ft_ball_indicator(&[q(2, 1)], -1, &s).unwrap().is_none());
    }

    #[test]
    fn dual_point_arithmetic() {
        let s = DualPoint::from_rationals(&[q(1, 18)]).unwrap();
        assert_eq!(s.coords(), &[(5, 2)]);
        assert_eq!(s.level(), 2);
        assert!(s.add(&s.neg()).unwrap().is_zero());
        let t = DualPoint::from_level(3, 2, &[3]).unwrap();
        assert_eq!(t.coords(), &[(1, 1)]);
        assert_eq!(shell_points(3, 1, 2).unwrap().len() as u128, shell_size(3, 1, 2));
        assert_eq!(shell_size(3, 2, 1), 8);
    }

    #[test]
    fn integer_zero_test_matches_exact_sum() {
        let mut sparse = StepDensity::new(3, 1, 2).unwrap();
        for (c, v) in [(1u64, 2i64), (4, 2), (7, 2), (5, 3)] {
            sparse.set(&[c], r(v, 1)).unwrap();
        }
        let mut plane = StepDensity::new(3, 2, 1).unwrap();
        plane.set(&[0, 1], r(1, 2)).unwrap();
        plane.set(&[2, 1], r(5, 7)).unwrap();
        let cases = [
            (StepDensity::constant(3, 1, BigRational::one()).unwrap().refine(2).unwrap(), 4),
            (StepDensity::ball_indicator(3, &[5], 2, r(9, 1)).unwrap(), 4),
            (sparse, 4),
            (plane, 3),
        ];
        let (mut zeros, mut nonzeros) = (0, 0);
        for (f, top) in &cases {
            for s in dual_points_up_to(3, f.dim(), *top).unwrap() {
                let exact = subdivided_ft_exact(f, &s, 1 << 20).unwrap().is_zero();
                assert_eq!(subdivided_ft_vanishes(f, &s, 1 << 20).unwrap(), exact, "{s}");
                if exact {
                    zeros += 1;
                } else {
                    nonzeros += 1;
                }
            }
        }
        assert!(zeros > 0 && nonzeros > 0);
    }

    #[test]
    fn constant_density_transform() {
        let f = StepDensity::constant(3, 1, BigRational::one()).unwrap().refine(2).unwrap();
        let t = ft_table(&f).unwrap();
        for (s, v) in t.iter() {
            let expect = if s.is_zero() { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-14, "{s} {v}");
        }
    }

    #[test]
    fn scaled_small_ball_vanishes_past_cutoff() {
        let f = StepDensity::ball_indicator(3, &[0], 1, r(3, 1)).unwrap();
        let s = DualPoint::from_rationals(&[q(1, 9)]).unwrap();
        assert_eq!(ft_point(&f, &s).unwrap().is_exactly_zero(), Some(true));
        assert!((ft_point(&f, &DualPoint::zero(3, 1)).unwrap().value.re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_matches_points_and_inverts() {
        let mut f = StepDensity::new(3, 2, 2).unwrap();
        f.set(&[1, 4], r(2, 1)).unwrap();
        f.set(&[7, 0], r(1, 3)).unwrap();
        f.set(&[8, 8], r(5, 2)).unwrap();
        let t = ft_table(&f).unwrap();
        for (s, v) in t.iter() {
            let direct = ft_point(&f, &s).unwrap().value;
            assert!((direct - v).norm() < 1e-13);
        }
        let back = t.inverse();
        for (i, v) in back.iter().enumerate() {
            let cell = [(i / 9) as u64, (i % 9) as u64];
            let want = f.value_at(&cell).to_f64().unwrap();
            assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn brute_oracles_agree_with_ball_lemma() {
        let mut f = StepDensity::new(3, 1, 2).unwrap();
        f.set(&[4], r(9, 2)).unwrap();
        f.set(&[5], r(1, 1)).unwrap();
        for s in dual_points_up_to(3, 1, 3).unwrap() {
            let raw = s.to_rationals();
            let exact = brute_ft_exact(&f, &raw, DEFAULT_ORACLE_CAP).unwrap();
            let fast = ft_point_with(&f, &s, SumMode::Exact).unwrap();
            assert!(exact.eq_exact(fast.exact.as_ref().unwrap()).unwrap());
            let float = brute_ft_oracle(&f, &raw, DEFAULT_ORACLE_CAP).unwrap();
            assert!((float - fast.value).norm() < 1e-13);
        }
    }

    #[test]
    fn oracle_cap() {
        let f = StepDensity::constant(3, 1, BigRational::one()).unwrap();
        let s = [q(1, 3i64.pow(10))];
        assert!(matches!(
            brute_ft_oracle(&f, &s, 100),
            Err(Error::OracleCapExceeded { .. })
        ));
    }

    #[test]
    fn csv_rows_are_ordered() {
        let f = StepDensity::ball_indicator(3, &[1], 1, r(3, 1)).unwrap();
        let mut out = Vec::new();
        ft_table(&f).unwrap().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s1,real,imag,abs,norm_s");
        assert!(lines[1].starts_with("0,1"));
        assert!(lines[2].starts_with("1/3^1,"));
        assert!(lines[3].starts_with("2/3^1,"));
    }
}
