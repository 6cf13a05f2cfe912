//! Log-domain reductions and small numerical helpers shared by the estimators.

use std::f64::consts::{PI, SQRT_2};

/// ½·ln(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log Σ exp(x_i)`. Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// `log((1/n) Σ exp(x_i))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Normalized weights `exp(x_i) / Σ exp(x_j)`. The max is subtracted first.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

#[inline]
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - mean) / (sd * SQRT_2))
}

/// Log-density of the standard Student-t with `nu` degrees of freedom.
#[inline]
pub fn student_t_log_pdf(z: f64, nu: f64) -> f64 {
    student_t_log_norm(nu) - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// `ln Γ((ν+1)/2) − ln Γ(ν/2) − ½ ln(νπ)`
pub fn student_t_log_norm(nu: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
}

pub fn student_t_cdf(z: f64, nu: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    StudentsT::new(0.0, 1.0, nu)
        .expect("nu validated positive")
        .cdf(z)
}

/// Sample mean and unbiased standard deviation.
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Uniform 1-D grid used by the trapezoid rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Grid { lo, hi, points }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.points).map(move |i| self.lo + h * i as f64)
    }
}

/// Trapezoid rule over uniformly spaced samples `ys` with spacing `h`.
pub fn trapezoid(ys: &[f64], h: f64) -> f64 {
    match ys.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (ys[0] + ys[n - 1]) + ys[1..n - 1].iter().sum::<f64>()),
    }
}

/// `log ∫ exp(f)` by the trapezoid rule, given `log_ys = f(x_i)` on a uniform grid.
pub fn log_trapezoid(log_ys: &[f64], h: f64) -> f64 {
    let n = log_ys.len();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let half = 0.5f64.ln();
    let weighted: Vec<f64> = log_ys
        .iter()
        .enumerate()
        .map(|(i, &y)| if i == 0 || i == n - 1 { y + half } else { y })
        .collect();
    log_sum_exp(&weighted) + h.ln()
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n(x) − F(x)|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_mean_exp_of_single_value_is_identity() {
        assert_eq!(log_mean_exp(&[-3.25]), -3.25);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-30.0, -2.0, 0.0, 1.5, 30.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert_eq!(softplus(1e4), 1e4);
    }

    #[test]
    fn student_t_constant_at_nu_ten() {
        use statrs::function::gamma::ln_gamma;
        let expected = ln_gamma(5.5) - ln_gamma(5.0) - 0.5 * (10.0 * PI).ln();
        assert!((student_t_log_pdf(0.0, 10.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_integrates_normal() {
        let g = Grid::new(-10.0, 10.0, 2001);
        let ys: Vec<f64> = g.nodes().map(|x| normal_log_pdf(x, 0.0, 1.0).exp()).collect();
        assert!((trapezoid(&ys, g.step()) - 1.0).abs() < 1e-10);
        let logs: Vec<f64> = g.nodes().map(|x| normal_log_pdf(x, 0.0, 1.0)).collect();
        assert!(log_trapezoid(&logs, g.step()).abs() < 1e-10);
    }

    #[test]
    fn ks_of_perfect_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }
}
