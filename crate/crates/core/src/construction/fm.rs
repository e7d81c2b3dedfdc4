//! The averaged bump functions `F_M`, the base density `ψ_0`, and their
//! closed-form transforms.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;

use super::params::{ConstructionParams, Shape};
use super::primes::enumerate_qm;
use crate::arith::{checked_pow, inv_mod, mul_mod, pow_or_err, val_u64};
use crate::error::{Error, Result};
use crate::fourier::DualPoint;
use crate::numeric::{root_of_unity, NeumaierSum};
use crate::padic::PadicRational;
use crate::phase_sum::PhaseSum;
use crate::stepfn::{advance, StepDensity};

/// One level `M` of the construction: `Q_M`, `R_M = [0, p^M)`, `L = ⌈τM⌉`.
#[derive(Clone, Debug)]
pub struct FmLevel {
    pub prime: u64,
    pub shape: Shape,
    pub m: u32,
    pub l: u32,
    pub primes: Arc<Vec<u64>>,
    inverses: Arc<OnceLock<Option<Vec<u64>>>>,
}

impl FmLevel {
    pub fn new(params: &ConstructionParams, m: u32) -> Result<Self> {
        Ok(FmLevel {
            prime: params.prime,
            shape: params.shape,
            m,
            l: params.level_of(m),
            primes: Arc::new(enumerate_qm(params.prime, m)?),
            inverses: Arc::default(),
        })
    }

    pub fn with_primes(params: &ConstructionParams, m: u32, primes: Arc<Vec<u64>>) -> Self {
        FmLevel {
            prime: params.prime,
            shape: params.shape,
            m,
            l: params.level_of(m),
            primes,
            inverses: Arc::default(),
        }
    }

    /// `q_idx^{-1} mod p^ℓ`, reduced from a table modulo `p^L` when it fits.
    fn inverse(&self, idx: usize, modulus: u64) -> u64 {
        let top = checked_pow(self.prime, self.l);
        let table = self.inverses.get_or_init(|| {
            let top = top?;
            Some(self.primes.iter().map(|&q| inv_mod(q % top, top).expect("q is a unit")).collect())
        });
        match (table, top) {
            (Some(t), Some(top)) if top % modulus == 0 => t[idx] % modulus,
            _ => inv_mod(self.primes[idx] % modulus, modulus).expect("q is a unit"),
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// `|Q_M|^n |R_M|^m` as an exact integer.
    pub fn pair_count(&self) -> BigInt {
        let (mm, n) = self.shape.mn();
        BigInt::from(self.primes.len()).pow(n) * BigInt::from(self.prime).pow(mm * self.m)
    }

    /// Number of `(q, r, free coordinates)` placements the density build visits.
    pub fn placement_count(&self) -> u128 {
        let (mm, n) = self.shape.mn();
        let p = self.prime as u128;
        let q = (self.primes.len() as u128).saturating_pow(n);
        let r = p.saturating_pow(mm * self.m);
        let free = p.saturating_pow(mm * (n - 1) * self.l);
        q.saturating_mul(r).saturating_mul(free)
    }

    /// The density `p^{mL} / (|Q_M|^n |R_M|^m)` contributed by one pair.
    pub fn unit_density(&self) -> BigRational {
        let (mm, _) = self.shape.mn();
        BigRational::new(BigInt::from(self.prime).pow(mm * self.l), self.pair_count())
    }

    /// Sparse level-`L` density of `F_M`.
    pub fn density(&self, budget: u128) -> Result<StepDensity> {
        let work = self.placement_count();
        if work > budget {
            return Err(Error::MemoryBudget {
                what: format!("F_M density for M = {}", self.m),
                needed: work,
                budget,
            });
        }
        let modulus = pow_or_err(self.prime, self.l)?;
        let counts = match self.shape {
            Shape::Scalar => self.scalar_counts(modulus),
            Shape::Matrix { m, n } => self.matrix_counts(modulus, m as usize, n as usize),
        };
        let unit = self.unit_density();
        let mut f = StepDensity::new(self.prime, self.dim(), self.l)?;
        let mut cells: Vec<(Vec<u64>, u64)> = counts.into_iter().collect();
        cells.sort_unstable();
        for (c, k) in cells {
            f.set(&c, &unit * BigInt::from(k))?;
        }
        Ok(f)
    }

    fn scalar_counts(&self, modulus: u64) -> HashMap<Vec<u64>, u64> {
        let rm = checked_pow(self.prime, self.m).expect("M below L");
        let per_q: Vec<Vec<u64>> = self
            .primes
            .par_iter()
            .map(|&q| {
                let qi = inv_mod(q, modulus).expect("q is a unit");
                (0..rm).map(|r| mul_mod(r, qi, modulus)).collect()
            })
            .collect();
        let mut counts = HashMap::new();
        for cell in per_q.into_iter().flatten() {
            *counts.entry(vec![cell]).or_insert(0u64) += 1;
        }
        counts
    }

    /// Solves `x_{i·}·q ≡ r_i (mod p^L)` for each row: the coordinates
    /// `x_{i1..}` are free and `x_{i0}` is determined.
    fn matrix_counts(&self, modulus: u64, m: usize, n: usize) -> HashMap<Vec<u64>, u64> {
        let rm = checked_pow(self.prime, self.m).expect("M below L");
        let nq = self.primes.len() as u64;
        let mut counts = HashMap::new();
        let mut qdigits = vec![0u64; n];
        loop {
            let q: Vec<u64> = qdigits.iter().map(|&i| self.primes[i as usize]).collect();
            let q0i = inv_mod(q[0], modulus).expect("q is a unit");
            let mut rdigits = vec![0u64; m];
            loop {
                let mut free = vec![0u64; m * (n - 1)];
                loop {
                    let mut x = vec![0u64; m * n];
                    for i in 0..m {
                        let mut rest = rdigits[i] % modulus;
                        for j in 1..n {
                            let v = free[i * (n - 1) + j - 1];
                            x[i * n + j] = v;
                            rest = (rest + modulus - mul_mod(v, q[j], modulus)) % modulus;
                        }
                        x[i * n] = mul_mod(rest, q0i, modulus);
                    }
                    *counts.entry(x).or_insert(0u64) += 1;
                    if !advance(&mut free, modulus) {
                        break;
                    }
                }
                if !advance(&mut rdigits, rm) {
                    break;
                }
            }
            if !advance(&mut qdigits, nq) {
                break;
            }
        }
        counts
    }

    /// `F̂_M(s)` from the geometric-sum closed form; `O(n·m·|Q_M|)` work.
    pub fn ft(&self, s: &DualPoint) -> Result<Complex64> {
        self.check(s)?;
        let ell = s.level();
        if ell > self.l {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if s.is_zero() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let modulus = pow_or_err(self.prime, ell)?;
        let nums = s.numerators_at(ell);
        let (m, n) = self.shape.mn();
        let (m, n) = (m as usize, n as usize);
        let counts = self.column_matches(&nums, modulus, m, n);
        let mut acc = NeumaierSum::default();
        for idx in 0..self.primes.len() {
            let w = counts.as_ref().map_or(1, |c| c[idx]);
            if w == 0 {
                continue;
            }
            let qi = self.inverse(idx, modulus);
            let mut term = Complex64::new(w as f64, 0.0);
            for i in 0..m {
                term *= geometric_sum(self.prime, self.m, mul_mod(nums[i * n], qi, modulus), ell);
                if term == Complex64::new(0.0, 0.0) {
                    break;
                }
            }
            acc.add(term);
        }
        Ok(acc.total() / self.pair_count_f64())
    }

    /// Exact counterpart of [`FmLevel::ft`], summing every root of unity;
    /// `O(|Q_M| p^{mM})` work.
    pub fn ft_exact(&self, s: &DualPoint) -> Result<PhaseSum> {
        self.check(s)?;
        let ell = s.level();
        if ell > self.l {
            return Ok(PhaseSum::zero(self.prime));
        }
        if s.is_zero() {
            return Ok(PhaseSum::one(self.prime));
        }
        let modulus = pow_or_err(self.prime, ell)?;
        let nums = s.numerators_at(ell);
        let (m, n) = self.shape.mn();
        let (m, n) = (m as usize, n as usize);
        let counts = self.column_matches(&nums, modulus, m, n);
        let mut total = PhaseSum::zero(self.prime);
        for idx in 0..self.primes.len() {
            let w = counts.as_ref().map_or(1, |c| c[idx]);
            if w == 0 {
                continue;
            }
            let qi = self.inverse(idx, modulus);
            let mut term = PhaseSum::constant(self.prime, BigRational::from_integer(w.into()));
            for i in 0..m {
                let g = geometric_sum_exact(self.prime, self.m, mul_mod(nums[i * n], qi, modulus), ell)?;
                if g.is_zero() {
                    term = PhaseSum::zero(self.prime);
                    break;
                }
                term = term.mul(&g)?;
            }
            total.add_assign(&term)?;
        }
        total.scale(&BigRational::new(BigInt::one(), self.pair_count()));
        Ok(total)
    }

    fn pair_count_f64(&self) -> f64 {
        let (m, n) = self.shape.mn();
        (self.primes.len() as f64).powi(n as i32) * (self.prime as f64).powi((m * self.m) as i32)
    }

    /// For `n ≥ 2`: per `q_0 ∈ Q_M`, the number of `(q_1..q_{n-1})` completing
    /// it to an element of `D(s)`.
    fn column_matches(&self, nums: &[u64], modulus: u64, m: usize, n: usize) -> Option<Vec<u64>> {
        if n < 2 {
            return None;
        }
        let key = |j: usize, q: u64| -> Vec<u64> {
            let qi = inv_mod(q, modulus).expect("q is a unit");
            (0..m).map(|i| mul_mod(nums[i * n + j], qi, modulus)).collect()
        };
        let tables: Vec<HashMap<Vec<u64>, u64>> = (1..n)
            .map(|j| {
                let mut t = HashMap::new();
                for &q in self.primes.iter() {
                    *t.entry(key(j, q)).or_insert(0) += 1;
                }
                t
            })
            .collect();
        Some(
            self.primes
                .iter()
                .map(|&q0| {
                    let k0 = key(0, q0);
                    tables.iter().map(|t| t.get(&k0).copied().unwrap_or(0)).product()
                })
                .collect(),
        )
    }

    fn check(&self, s: &DualPoint) -> Result<()> {
        if s.prime() != self.prime {
            return Err(Error::PrimeMismatch {
                left: self.prime,
                right: s.prime(),
            });
        }
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: s.dim(),
            });
        }
        Ok(())
    }
}

/// `sin(π a / n)` for `0 ≤ a < 2n`.
fn sin_pi(a: u64, n: u64) -> f64 {
    if a >= n {
        return -sin_pi(a - n, n);
    }
    let b = a.min(n - a);
    (std::f64::consts::PI * b as f64 / n as f64).sin()
}

/// `Σ_{0 ≤ r < p^M} e(r b / p^ℓ)`, evaluated as
/// `e((p^M - 1)x/2) sin(π p^M x) / sin(π x)` with `x = b/p^ℓ`.
pub fn geometric_sum(p: u64, m: u32, b: u64, ell: u32) -> Complex64 {
    let rm = p.pow(m) as f64;
    if b == 0 {
        return Complex64::new(rm, 0.0);
    }
    let v = val_u64(b, p);
    if v >= ell {
        return Complex64::new(rm, 0.0);
    }
    let lev = ell - v;
    if lev <= m {
        return Complex64::new(0.0, 0.0);
    }
    let b = b / p.pow(v);
    let n = p.pow(lev);
    let two_n = 2 * n;
    let pm = p.pow(m);
    let num = sin_pi(mul_mod(pm % two_n, b, two_n), n);
    let den = sin_pi(b, n);
    let phase = root_of_unity(mul_mod((pm - 1) % two_n, b, two_n), two_n);
    phase * (num / den)
}

/// The same sum as an exact cyclotomic element.
pub fn geometric_sum_exact(p: u64, m: u32, b: u64, ell: u32) -> Result<PhaseSum> {
    let modulus = pow_or_err(p, ell)?;
    let rm = pow_or_err(p, m)?;
    let v = if b == 0 { ell } else { val_u64(b, p).min(ell) };
    let lev = ell - v;
    if lev <= m {
        // r ↦ rb runs over the multiples of p^v mod p^ℓ, each p^{M-lev} times
        let step = pow_or_err(p, v)?;
        let count = BigRational::from_integer(pow_or_err(p, m - lev)?.into());
        let mut out = PhaseSum::zero(p);
        for j in 0..pow_or_err(p, lev)? {
            out.add_term(j * step, ell, &count)?;
        }
        return Ok(out);
    }
    let mut idx: HashMap<u64, u64> = HashMap::new();
    for r in 0..rm {
        *idx.entry(mul_mod(r, b, modulus)).or_insert(0) += 1;
    }
    let mut out = PhaseSum::zero(p);
    for (k, c) in idx {
        out.add_term(k, ell, &BigRational::from_integer(c.into()))?;
    }
    Ok(out)
}

/// Level-2 base density `(p^{-1} - p^{-2})^{-1}(1_{B(0,p^{-1})} - 1_{B(0,p^{-2})})`
/// for the scalar case, `1_{Z_p^{mn}}` for matrices.
pub fn build_psi0(params: &ConstructionParams) -> Result<StepDensity> {
    let p = params.prime;
    match params.shape {
        Shape::Scalar => {
            let mut f = StepDensity::new(p, 1, 2)?;
            let height = BigRational::new(BigInt::from(p * p), BigInt::from(p - 1));
            for u in 1..p {
                f.set(&[u * p], height.clone())?;
            }
            Ok(f)
        }
        Shape::Matrix { .. } => StepDensity::constant(p, params.dim(), BigRational::one()),
    }
}

/// Level of `ψ_0`'s cells (its transform vanishes beyond `p^{level}`).
pub fn psi0_level(shape: Shape) -> u32 {
    match shape {
        Shape::Scalar => 2,
        Shape::Matrix { .. } => 0,
    }
}

/// Sparse density of `F_M`.
pub fn build_fm(params: &ConstructionParams, m: u32) -> Result<StepDensity> {
    FmLevel::new(params, m)?.density(crate::stepfn::DEFAULT_CELL_BUDGET)
}

/// `F̂_M(s)` by the closed form.
pub fn ft_fm_closed(params: &ConstructionParams, m: u32, s: &DualPoint) -> Result<Complex64> {
    FmLevel::new(params, m)?.ft(s)
}

/// `s ∈ D(q)`: `{s_ij/q_j}_p` independent of `j` for every row `i`.
/// Decided by fractional parts and cross-checked against the congruence
/// `a_ij q_j' ≡ a_ij' q_j (mod p^ℓ)`.
pub fn membership_d(s: &DualPoint, m: usize, n: usize, q: &[u64]) -> Result<bool> {
    if s.dim() != m * n || q.len() != n {
        return Err(Error::DimensionMismatch {
            left: m * n,
            right: s.dim(),
        });
    }
    let p = s.prime();
    if q.iter().any(|&x| x % p == 0) {
        return Err(Error::InvalidParams("q_j must be p-adic units".into()));
    }
    let rats = s.to_rationals();
    let mut direct = true;
    for i in 0..m {
        let fr: Vec<PadicRational> = (0..n)
            .map(|j| {
                let qj = PadicRational::from_integer(q[j], p);
                let inv = PadicRational::new(qj.value().recip(), p);
                (&rats[i * n + j] * &inv).frac_part()
            })
            .collect();
        if fr.iter().any(|f| f != &fr[0]) {
            direct = false;
        }
    }
    let ell = s.level();
    let modulus = pow_or_err(p, ell)?;
    let nums = s.numerators_at(ell);
    let congruent = (0..m).all(|i| {
        (1..n).all(|j| {
            mul_mod(nums[i * n], q[j] % modulus, modulus) == mul_mod(nums[i * n + j], q[0] % modulus, modulus)
        })
    });
    if direct != congruent {
        return Err(Error::LemmaViolation(format!(
            "D(s) membership disagrees between fractional parts and congruences at s = {s}"
        )));
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::growth::Ratio;
    use crate::fourier::{dual_points_up_to, ft_point_with, SumMode};
    use num_traits::{ToPrimitive, Zero};

    fn scalar(p: u64, tau: &str) -> ConstructionParams {
        ConstructionParams::scalar(p, tau.parse::<Ratio>().unwrap(), 1)
    }

    #[test]
    fn fm_support_and_mass() {
        let params = scalar(3, "5/2");
        let f = build_fm(&params, 1).unwrap();
        assert_eq!(f.level(), 3);
        let cells: Vec<u64> = f.iter().map(|(c, _)| c[0]).collect();
        assert_eq!(cells, vec![0, 1, 14]);
        assert_eq!(f.integral(), BigRational::one());
        assert_eq!(f.value_at(&[14]), BigRational::from_integer(9.into()));
    }

    #[test]
    fn closed_form_example() {
        let params = scalar(3, "5/2");
        let lvl = FmLevel::new(&params, 1).unwrap();
        let s = DualPoint::from_level(3, 2, &[1]).unwrap();
        let want = (Complex64::new(1.0, 0.0) + root_of_unity(5, 9) + root_of_unity(1, 9)) / 3.0;
        assert!((lvl.ft(&s).unwrap() - want).norm() < 1e-15);
        let s = DualPoint::from_level(3, 1, &[1]).unwrap();
        assert!(lvl.ft_exact(&s).unwrap().is_zero());
        assert_eq!(lvl.ft(&s).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn closed_forms_match_density() {
        for (p, tau, m) in [(3, "5/2", 2), (5, "3", 1), (2, "5/2", 2)] {
            let params = scalar(p, tau);
            let lvl = FmLevel::new(&params, m).unwrap();
            let f = lvl.density(1 << 20).unwrap();
            for s in dual_points_up_to(p, 1, lvl.l + 1).unwrap() {
                let direct = ft_point_with(&f, &s, SumMode::Exact).unwrap();
                let exact = lvl.ft_exact(&s).unwrap();
                assert!(exact.eq_exact(direct.exact.as_ref().unwrap()).unwrap(), "{s}");
                assert!((lvl.ft(&s).unwrap() - direct.value).norm() < 1e-12, "{s}");
            }
        }
    }

    #[test]
    fn geometric_identity() {
        for b in 1..243u64 {
            let exact = geometric_sum_exact(3, 2, b, 5).unwrap().to_complex();
            assert!((geometric_sum(3, 2, b, 5) - exact).norm() < 1e-12, "b = {b}");
        }
    }

    #[test]
    fn psi0_transform() {
        let psi = build_psi0(&scalar(3, "5/2")).unwrap();
        assert_eq!(psi.integral(), BigRational::one());
        assert_eq!(psi.value_at(&[0]), BigRational::zero());
        assert_eq!(psi.value_at(&[1]), BigRational::zero());
        let s = DualPoint::from_level(3, 2, &[1]).unwrap();
        let v = ft_point_with(&psi, &s, SumMode::Exact).unwrap();
        assert!((v.value.re + 0.5).abs() < 1e-15);
        let s3 = DualPoint::from_level(3, 3, &[1]).unwrap();
        assert_eq!(ft_point_with(&psi, &s3, SumMode::Exact).unwrap().is_exactly_zero(), Some(true));
        assert_eq!(psi.max_value().to_f64().unwrap(), 4.5);
    }

    #[test]
    fn matrix_density_and_transform() {
        let params = ConstructionParams::matrix(3, "2".parse().unwrap(), 2, 1, 1);
        let lvl = FmLevel::new(&params, 1).unwrap();
        let f = lvl.density(1 << 20).unwrap();
        assert_eq!(f.support_len(), 9);
        assert_eq!(f.integral(), BigRational::one());
        for s in dual_points_up_to(3, 2, 3).unwrap() {
            let direct = ft_point_with(&f, &s, SumMode::Exact).unwrap();
            assert!(lvl.ft_exact(&s).unwrap().eq_exact(direct.exact.as_ref().unwrap()).unwrap());
            assert!((lvl.ft(&s).unwrap() - direct.value).norm() < 1e-12);
        }
    }

    #[test]
    fn wide_matrix_uses_d_of_s() {
        let params = ConstructionParams::matrix(3, "2".parse().unwrap(), 1, 2, 1);
        let lvl = FmLevel::new(&params, 2).unwrap();
        let f = lvl.density(1 << 22).unwrap();
        assert_eq!(f.integral(), BigRational::one());
        let mut rng = 17u64;
        for _ in 0..60 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (rng >> 20) % 81;
            let b = (rng >> 40) % 81;
            let s = DualPoint::from_level(3, 4, &[a, b]).unwrap();
            let direct = ft_point_with(&f, &s, SumMode::Exact).unwrap();
            assert!((lvl.ft(&s).unwrap() - direct.value).norm() < 1e-12, "{s}");
            assert!(lvl.ft_exact(&s).unwrap().eq_exact(direct.exact.as_ref().unwrap()).unwrap());
        }
    }

    #[test]
    fn d_of_s_membership() {
        let s = DualPoint::from_level(3, 2, &[1, 1]).unwrap();
        // {1/18}_3 = 5/9 and {1/45}_3 = 2/9
        assert!(!membership_d(&s, 1, 2, &[2, 5]).unwrap());
        assert!(membership_d(&s, 1, 2, &[5, 5]).unwrap());
        let t = DualPoint::from_level(3, 2, &[1, 2]).unwrap();
        assert!(membership_d(&t, 2, 1, &[7]).unwrap());
    }
}
