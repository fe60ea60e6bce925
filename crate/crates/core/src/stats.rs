//! Small statistics and interpolation helpers.

use crate::error::{precondition, Result};

/// Normal 95% quantile.
pub const Z95: f64 = 1.96;

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
pub fn ks_critical_01(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

/// Least-squares `C` in `e ≈ C / x` through the origin.
pub fn fit_inverse(xs: &[f64], errs: &[f64]) -> f64 {
    let num: f64 = xs.iter().zip(errs).map(|(x, e)| e / x).sum();
    let den: f64 = xs.iter().map(|x| 1.0 / (x * x)).sum();
    num / den
}

/// Least-squares fit `v(N) = v∞ + c/N`; returns `(v∞, c)`.
pub fn fit_limit_inverse(ns: &[f64], vs: &[f64]) -> Option<(f64, f64)> {
    if ns.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|n| 1.0 / n).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let mv = vs.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxv: f64 = xs.iter().zip(vs).map(|(x, v)| (x - mx) * (v - mv)).sum();
    let c = sxv / sxx;
    Some((mv - c * mx, c))
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return precondition("interpolation needs at least two matching nodes");
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || y.iter().any(|v| !v.is_finite()) {
            return precondition("interpolation nodes must be increasing with finite values");
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m[0] = s[0];
            m[1] = s[0];
        } else {
            for k in 1..n - 1 {
                if s[k - 1] * s[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    m[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
                }
            }
            m[0] = end_slope(h[0], h[1], s[0], s[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Ok(Pchip { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Value at `t`, or `None` outside the node range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let k = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(k) => return Some(self.y[k]),
            Err(k) => k - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u).powi(2);
        let h10 = u * (1.0 - u).powi(2);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        Some(h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1])
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a: Vec<f64> = (0..100).map(|k| k as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|k| k as f64 + 1000.0).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    #[test]
    fn inverse_fit_recovers_exact_rate() {
        let xs = [250.0, 500.0, 1000.0, 2000.0];
        let es: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((fit_inverse(&xs, &es) - 3.0).abs() < 1e-12);
        let vs: Vec<f64> = xs.iter().map(|x| -1.0 + 2.0 / x).collect();
        let (v, c) = fit_limit_inverse(&xs, &vs).unwrap();
        assert!((v + 1.0).abs() < 1e-12 && (c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pchip_reproduces_nodes_and_lines() {
        let x = [0.0, 1.0, 2.5, 3.0];
        let y = [1.0, 3.0, 6.0, 7.0];
        let p = Pchip::new(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), Some(*b));
        }
        assert!(p.eval(3.5).is_none());
        let line = Pchip::new(&[0.0, 1.0, 2.0], &[0.0, 2.0, 4.0]).unwrap();
        assert!((line.eval(1.3).unwrap() - 2.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pchip_preserves_monotone_data(steps in proptest::collection::vec((0.1f64..2.0, 0.0f64..3.0), 3..10)) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() - dy);
            }
            let p = Pchip::new(&x, &y).unwrap();
            let (lo, hi) = p.range();
            let mut prev = f64::INFINITY;
            for k in 0..=400 {
                let v = p.eval((lo + (hi - lo) * k as f64 / 400.0).min(hi)).unwrap();
                prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
}
