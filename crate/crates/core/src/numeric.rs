//! Small floating-point helpers shared by the kernels and reports.

use num_complex::Complex64;

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: Complex64,
    comp: Complex64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: Complex64) {
        let (re, cre) = two_sum(self.sum.re, x.re);
        let (im, cim) = two_sum(self.sum.im, x.im);
        self.sum = Complex64::new(re, im);
        self.comp += Complex64::new(cre, cim);
    }

    pub fn total(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let c = if a.abs() >= b.abs() {
        (a - s) + b
    } else {
        (b - s) + a
    };
    (s, c)
}

/// `e(a / n) = exp(2πi a/n)` evaluated from the centered fraction.
#[inline]
pub fn root_of_unity(a: u64, n: u64) -> Complex64 {
    let t = crate::arith::centered_fraction(a, n);
    let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
    Complex64::new(c, s)
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// Ordinary least-squares slope and intercept.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = NeumaierSum::default();
        acc.add(Complex64::new(1e16, 0.0));
        acc.add(Complex64::new(1.0, 0.0));
        acc.add(Complex64::new(-1e16, 0.0));
        assert_eq!(acc.total().re, 1.0);
    }

    #[test]
    fn regression_line() {
        let (m, b) = least_squares(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }
}
