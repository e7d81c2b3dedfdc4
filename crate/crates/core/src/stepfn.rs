//! Functions and measures on `Z_p^d` that are constant on the cells
//! `B(c, p^{-L})`.
//!
//! A level-`L` cell is named by the residues of its points modulo `p^L`, one
//! per coordinate. The ancestor of a cell at a coarser level `l` is obtained
//! by reducing every coordinate modulo `p^l`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{pow_or_err, validate_prime};
use crate::error::{Error, Result};
use crate::padic::{rational_pow, PadicRational};

/// Default cap on the number of stored cells produced by [`StepDensity::refine`].
pub const DEFAULT_CELL_BUDGET: u128 = 1 << 24;

/// A cell `B(c, p^{-level})` of `Z_p^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub coords: Vec<u64>,
    pub level: u32,
    pub prime: u64,
}

impl CellIndex {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The coarser cell of level `level` containing this one.
    pub fn ancestor(&self, level: u32) -> Result<CellIndex> {
        if level > self.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.level,
            });
        }
        let m = pow_or_err(self.prime, level)?;
        Ok(CellIndex {
            coords: self.coords.iter().map(|c| c % m).collect(),
            level,
            prime: self.prime,
        })
    }

    /// The canonical center as p-adic rationals.
    pub fn center(&self) -> Vec<PadicRational> {
        self.coords
            .iter()
            .map(|&c| PadicRational::from_integer(c, self.prime))
            .collect()
    }
}

/// A nonnegative step density on `Z_p^d`, stored sparsely at a fixed level.
#[derive(Clone, Debug)]
pub struct StepDensity {
    prime: u64,
    dim: usize,
    level: u32,
    modulus: u64,
    cells: BTreeMap<Vec<u64>, BigRational>,
    float_view: OnceLock<Arc<FloatView>>,
    int_view: OnceLock<Option<Arc<IntView>>>,
}

/// Cell values over a common denominator, when the numerators fit `i128`.
#[derive(Debug)]
pub struct IntView {
    pub coords: Vec<u64>,
    pub numerators: Vec<i128>,
    pub denominator: BigInt,
    pub dim: usize,
}

impl IntView {
    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn cell(&self, i: usize) -> &[u64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// Flattened `f64` copy of the stored cells, for the floating-point kernels.
#[derive(Debug)]
pub struct FloatView {
    pub coords: Vec<u64>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl FloatView {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell(&self, i: usize) -> &[u64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

impl PartialEq for StepDensity {
    fn eq(&self, other: &Self) -> bool {
        self.prime == other.prime
            && self.dim == other.dim
            && self.level == other.level
            && self.cells == other.cells
    }
}

impl StepDensity {
    pub fn new(prime: u64, dim: usize, level: u32) -> Result<Self> {
        validate_prime(prime)?;
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let modulus = pow_or_err(prime, level)?;
        Ok(StepDensity {
            prime,
            dim,
            level,
            modulus,
            cells: BTreeMap::new(),
            float_view: OnceLock::new(),
            int_view: OnceLock::new(),
        })
    }

    /// The constant density `value` on all of `Z_p^d`.
    pub fn constant(prime: u64, dim: usize, value: BigRational) -> Result<Self> {
        let mut f = Self::new(prime, dim, 0)?;
        f.set(&vec![0; dim], value)?;
        Ok(f)
    }

    /// `value · 1_{B(center, p^{-level})}`.
    pub fn ball_indicator(prime: u64, center: &[u64], level: u32, value: BigRational) -> Result<Self> {
        let mut f = Self::new(prime, center.len(), level)?;
        f.set(center, value)?;
        Ok(f)
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `p^level`, the number of cells per axis.
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn support_len(&self) -> usize {
        self.cells.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u64], &BigRational)> {
        self.cells.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.cells.keys().map(|k| CellIndex {
            coords: k.clone(),
            level: self.level,
            prime: self.prime,
        })
    }

    fn normalize(&self, coords: &[u64]) -> Result<Vec<u64>> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: coords.len(),
            });
        }
        Ok(coords.iter().map(|c| c % self.modulus).collect())
    }

    /// Overwrites the value on a cell; zero removes it from the support.
    pub fn set(&mut self, coords: &[u64], value: BigRational) -> Result<()> {
        if value.is_negative() {
            return Err(Error::InvalidParams("densities are nonnegative".into()));
        }
        let key = self.normalize(coords)?;
        self.float_view = OnceLock::new();
        self.int_view = OnceLock::new();
        if value.is_zero() {
            self.cells.remove(&key);
        } else {
            self.cells.insert(key, value);
        }
        Ok(())
    }

    /// Adds to the value on a cell.
    pub fn add(&mut self, coords: &[u64], value: &BigRational) -> Result<()> {
        if value.is_negative() {
            return Err(Error::InvalidParams("densities are nonnegative".into()));
        }
        if value.is_zero() {
            return Ok(());
        }
        let key = self.normalize(coords)?;
        self.float_view = OnceLock::new();
        self.int_view = OnceLock::new();
        *self.cells.entry(key).or_insert_with(BigRational::zero) += value;
        Ok(())
    }

    /// Value on the cell containing the point whose level-`L'` residues
    /// (`L' ≥ level`) are `coords`.
    pub fn value_at(&self, coords: &[u64]) -> BigRational {
        let key: Vec<u64> = coords.iter().map(|c| c % self.modulus).collect();
        self.cells.get(&key).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Haar measure of one cell, `p^{-d L}`.
    pub fn cell_volume(&self) -> BigRational {
        rational_pow(self.prime, -(self.dim as i64 * self.level as i64))
    }

    /// `∫ f dx` against Haar measure on `Z_p^d`.
    pub fn integral(&self) -> BigRational {
        let total: BigRational = self.cells.values().sum();
        total * self.cell_volume()
    }

    pub fn max_value(&self) -> BigRational {
        self.cells.values().max().cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn float_view(&self) -> Arc<FloatView> {
        self.float_view
            .get_or_init(|| {
                let mut coords = Vec::with_capacity(self.cells.len() * self.dim);
                let mut values = Vec::with_capacity(self.cells.len());
                for (k, v) in &self.cells {
                    coords.extend_from_slice(k);
                    values.push(v.to_f64().unwrap_or(f64::NAN));
                }
                Arc::new(FloatView {
                    coords,
                    values,
                    dim: self.dim,
                })
            })
            .clone()
    }

    /// Integer numerators over the lcm of the cell denominators, or `None`
    /// when some numerator does not fit `i128`.
    pub fn int_view(&self) -> Option<Arc<IntView>> {
        self.int_view
            .get_or_init(|| {
                let mut den = BigInt::one();
                for v in self.cells.values() {
                    den = den.lcm(v.denom());
                }
                let mut coords = Vec::with_capacity(self.cells.len() * self.dim);
                let mut numerators = Vec::with_capacity(self.cells.len());
                for (k, v) in &self.cells {
                    let n = v.numer() * (&den / v.denom());
                    numerators.push(n.to_i128()?);
                    coords.extend_from_slice(k);
                }
                Some(Arc::new(IntView {
                    coords,
                    numerators,
                    denominator: den,
                    dim: self.dim,
                }))
            })
            .clone()
    }

    /// Re-expresses the density on the finer grid of level `level`.
    pub fn refine(&self, level: u32) -> Result<StepDensity> {
        self.refine_with_budget(level, DEFAULT_CELL_BUDGET)
    }

    pub fn refine_with_budget(&self, level: u32, budget: u128) -> Result<StepDensity> {
        if level < self.level {
            return Err(Error::RefineBelowLevel {
                from: self.level,
                to: level,
            });
        }
        let mut out = StepDensity::new(self.prime, self.dim, level)?;
        if level == self.level {
            out.cells = self.cells.clone();
            return Ok(out);
        }
        let per_axis = out.modulus / self.modulus;
        let children = (per_axis as u128).checked_pow(self.dim as u32).unwrap_or(u128::MAX);
        let needed = children.saturating_mul(self.cells.len() as u128);
        if needed > budget {
            return Err(Error::MemoryBudget {
                what: "refinement".into(),
                needed,
                budget,
            });
        }
        for (key, v) in &self.cells {
            let mut digits = vec![0u64; self.dim];
            loop {
                let child: Vec<u64> = key
                    .iter()
                    .zip(&digits)
                    .map(|(c, t)| c + t * self.modulus)
                    .collect();
                out.cells.insert(child, v.clone());
                if !advance(&mut digits, per_axis) {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise product at level `max(L_f, L_g)`. Only cells of the finer
    /// factor are visited, so the coarser one is never expanded.
    pub fn multiply(&self, other: &StepDensity) -> Result<StepDensity> {
        if self.prime != other.prime {
            return Err(Error::PrimeMismatch {
                left: self.prime,
                right: other.prime,
            });
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let (fine, coarse) = if self.level >= other.level {
            (self, other)
        } else {
            (other, self)
        };
        let mut out = StepDensity::new(self.prime, self.dim, fine.level)?;
        if fine.level == coarse.level && coarse.cells.len() < fine.cells.len() {
            for (k, v) in &coarse.cells {
                if let Some(w) = fine.cells.get(k) {
                    out.cells.insert(k.clone(), v * w);
                }
            }
            return Ok(out);
        }
        let mut anc = vec![0u64; self.dim];
        for (k, v) in &fine.cells {
            for (a, c) in anc.iter_mut().zip(k) {
                *a = c % coarse.modulus;
            }
            if let Some(w) = coarse.cells.get(&anc) {
                let prod = v * w;
                if !prod.is_zero() {
                    out.cells.insert(k.clone(), prod);
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: &BigRational) -> StepDensity {
        let mut out = StepDensity::new(self.prime, self.dim, self.level).expect("same shape");
        if !c.is_zero() {
            for (k, v) in &self.cells {
                out.cells.insert(k.clone(), v * c);
            }
        }
        out
    }

    /// Haar-integral of the density over every level-`level` ball meeting the
    /// support, keyed by the ball's residues.
    pub fn ball_masses(&self, level: u32) -> Result<HashMap<Vec<u64>, BigRational>> {
        if level > self.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.level,
            });
        }
        let m = pow_or_err(self.prime, level)?;
        let mut sums: HashMap<Vec<u64>, BigRational> = HashMap::new();
        for (k, v) in &self.cells {
            let key: Vec<u64> = k.iter().map(|c| c % m).collect();
            *sums.entry(key).or_insert_with(BigRational::zero) += v;
        }
        let vol = self.cell_volume();
        for v in sums.values_mut() {
            *v *= &vol;
        }
        Ok(sums)
    }

    /// Averages over the level-`level` balls. The transform is unchanged on
    /// `|s|_p ≤ p^{level}`, where characters are constant on those balls.
    pub fn coarsen(&self, level: u32) -> Result<StepDensity> {
        if level > self.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.level,
            });
        }
        let m = pow_or_err(self.prime, level)?;
        let mut out = StepDensity::new(self.prime, self.dim, level)?;
        let ratio = rational_pow(self.prime, -(self.dim as i64 * (self.level - level) as i64));
        if let Some(view) = self.int_view() {
            let mut sums: HashMap<Vec<u64>, i128> = HashMap::new();
            let mut overflow = false;
            for i in 0..view.len() {
                let key: Vec<u64> = view.cell(i).iter().map(|c| c % m).collect();
                let slot = sums.entry(key).or_insert(0);
                match slot.checked_add(view.numerators[i]) {
                    Some(v) => *slot = v,
                    None => {
                        overflow = true;
                        break;
                    }
                }
            }
            if !overflow {
                let scale = &ratio / BigRational::from_integer(view.denominator.clone());
                for (k, v) in sums {
                    out.set(&k, BigRational::from_integer(BigInt::from(v)) * &scale)?;
                }
                return Ok(out);
            }
        }
        let mut sums: HashMap<Vec<u64>, BigRational> = HashMap::new();
        for (k, v) in &self.cells {
            let key: Vec<u64> = k.iter().map(|c| c % m).collect();
            *sums.entry(key).or_insert_with(BigRational::zero) += v;
        }
        for (k, v) in sums {
            out.set(&k, v * &ratio)?;
        }
        Ok(out)
    }

    /// Writes the line-oriented text format: a header
    /// `p=<p> d=<d> L=<L> count=<n>` followed by one record per stored cell,
    /// `c_1 … c_d numerator denominator`, in lexicographic cell order.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "p={} d={} L={} count={}",
            self.prime,
            self.dim,
            self.level,
            self.cells.len()
        )?;
        for (k, v) in &self.cells {
            for c in k {
                write!(w, "{c} ")?;
            }
            writeln!(w, "{} {}", v.numer(), v.denom())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<StepDensity> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty density file".into()))??;
        let mut fields: HashMap<&str, u64> = HashMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {tok:?}")))?;
            let v = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad header value {tok:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("header missing {k}")))
        };
        let (p, d, level, count) = (get("p")?, get("d")? as usize, get("L")? as u32, get("count")?);
        let mut out = StepDensity::new(p, d, level)?;
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated density file".into()))??;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != d + 2 {
                return Err(Error::Parse(format!("bad record {line:?}")));
            }
            let coords = toks[..d]
                .iter()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse(format!("bad coordinates in {line:?}")))?;
            if coords.iter().any(|&c| c >= out.modulus) {
                return Err(Error::Parse(format!("coordinate out of range in {line:?}")));
            }
            let num: BigInt = toks[d]
                .parse()
                .map_err(|_| Error::Parse(format!("bad numerator in {line:?}")))?;
            let den: BigInt = toks[d + 1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad denominator in {line:?}")))?;
            if den.is_zero() {
                return Err(Error::ZeroDenominator);
            }
            out.set(&coords, BigRational::new(num, den))?;
        }
        Ok(out)
    }
}

/// Odometer over `[0, base)^d`; returns false after the last tuple.
pub(crate) fn advance(digits: &mut [u64], base: u64) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// A finite measure `dμ = f dx` with a step density `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMeasure {
    density: StepDensity,
}

impl StepMeasure {
    pub fn new(density: StepDensity) -> Self {
        StepMeasure { density }
    }

    pub fn density(&self) -> &StepDensity {
        &self.density
    }

    pub fn into_density(self) -> StepDensity {
        self.density
    }

    pub fn level(&self) -> u32 {
        self.density.level
    }

    pub fn prime(&self) -> u64 {
        self.density.prime
    }

    pub fn dim(&self) -> usize {
        self.density.dim
    }

    pub fn total_mass(&self) -> BigRational {
        self.density.integral()
    }

    /// `μ(B(x, p^{-level}))`, exact. Balls finer than the step resolution are
    /// rejected rather than extrapolated.
    pub fn ball_mass(&self, x: &[PadicRational], level: u32) -> Result<BigRational> {
        if level > self.density.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.density.level,
            });
        }
        if x.len() != self.density.dim {
            return Err(Error::DimensionMismatch {
                left: self.density.dim,
                right: x.len(),
            });
        }
        let mut center = Vec::with_capacity(x.len());
        for xi in x {
            if xi.prime() != self.density.prime {
                return Err(Error::PrimeMismatch {
                    left: self.density.prime,
                    right: xi.prime(),
                });
            }
            match xi.residue(level) {
                Some(r) => center.push(r),
                // a ball of radius ≤ 1 around a point outside Z_p^d misses Z_p^d
                None => return Ok(BigRational::zero()),
            }
        }
        self.ball_mass_at(&center, level)
    }

    /// Ball mass for a center given by its level-`level` residues.
    pub fn ball_mass_at(&self, center: &[u64], level: u32) -> Result<BigRational> {
        if level > self.density.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.density.level,
            });
        }
        let m = pow_or_err(self.density.prime, level)?;
        let sum: BigRational = self
            .density
            .cells
            .iter()
            .filter(|(k, _)| k.iter().zip(center).all(|(c, x)| c % m == x % m))
            .map(|(_, v)| v)
            .sum();
        Ok(sum * self.density.cell_volume())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn refine_constant() {
        let f = StepDensity::constant(3, 1, BigRational::one()).unwrap();
        let g = f.refine(1).unwrap();
        assert_eq!(g.support_len(), 3);
        assert!(g.iter().all(|(_, v)| v.is_one()));
        assert_eq!(f.refine(0).unwrap(), f);
        assert!(matches!(g.refine(0), Err(Error::RefineBelowLevel { .. })));
        assert_eq!(g.integral(), BigRational::one());
    }

    #[test]
    fn multiply_identities() {
        let f = StepDensity::ball_indicator(3, &[4], 2, r(9, 1)).unwrap();
        let one = StepDensity::constant(3, 1, BigRational::one()).unwrap();
        assert_eq!(f.multiply(&one).unwrap(), f);
        let g = StepDensity::ball_indicator(3, &[5], 2, r(9, 1)).unwrap();
        assert_eq!(f.multiply(&g).unwrap().support_len(), 0);
        let h = StepDensity::ball_indicator(3, &[1], 1, r(2, 1)).unwrap();
        assert_eq!(f.multiply(&h).unwrap().integral(), r(2, 1));
        assert_eq!(f.multiply(&h).unwrap(), h.multiply(&f).unwrap());
    }

    #[test]
    fn ball_masses() {
        let f = StepDensity::ball_indicator(3, &[4], 2, r(9, 1)).unwrap();
        let mu = StepMeasure::new(f);
        let zero = PadicRational::zero(3);
        assert_eq!(mu.ball_mass(std::slice::from_ref(&zero), 0).unwrap(), BigRational::one());
        assert_eq!(mu.ball_mass(&[zero], 1).unwrap(), BigRational::zero());
        let four = PadicRational::from_integer(4, 3);
        assert_eq!(mu.ball_mass(std::slice::from_ref(&four), 2).unwrap(), BigRational::one());
        assert!(matches!(mu.ball_mass(&[four], 3), Err(Error::Resolution { .. })));
        let outside = PadicRational::from_ratio(1, 3, 3).unwrap();
        assert_eq!(mu.ball_mass(&[outside], 0).unwrap(), BigRational::zero());
    }

    #[test]
    fn text_round_trip() {
        let mut f = StepDensity::new(5, 2, 2).unwrap();
        f.set(&[3, 24], r(7, 3)).unwrap();
        f.set(&[0, 1], r(1, 1)).unwrap();
        let text = f.to_text();
        assert!(text.starts_with("p=5 d=2 L=2 count=2\n"));
        let g = StepDensity::read_text(text.as_bytes()).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.to_text(), text);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(StepDensity::read_text("p=3 d=1 L=1 count=2\n0 1 1\n".as_bytes()).is_err());
        assert!(StepDensity::read_text("p=3 d=1 L=1 count=1\n5 1 1\n".as_bytes()).is_err());
        assert!(StepDensity::read_text("p=3 d=1 L=1 count=1\n1 1 0\n".as_bytes()).is_err());
    }

    #[test]
    fn coarsening_keeps_low_frequencies() {
        use crate::fourier::{dual_points_up_to, ft_point_with, SumMode};
        let mut f = StepDensity::new(3, 1, 3).unwrap();
        for (c, n, d) in [(1u64, 2i64, 1i64), (10, 1, 3), (19, 5, 2), (8, 7, 1)] {
            f.set(&[c], BigRational::new(n.into(), d.into())).unwrap();
        }
        for level in 0..=3 {
            let g = f.coarsen(level).unwrap();
            assert_eq!(g.level(), level);
            assert_eq!(g.ball_masses(level).unwrap(), f.ball_masses(level).unwrap());
            for s in dual_points_up_to(3, 1, level).unwrap() {
                let a = ft_point_with(&f, &s, SumMode::Exact).unwrap().exact.unwrap();
                let b = ft_point_with(&g, &s, SumMode::Exact).unwrap().exact.unwrap();
                assert!(a.eq_exact(&b).unwrap(), "level {level}, s = {s}");
            }
        }
        assert!(f.coarsen(4).is_err());
    }
}
