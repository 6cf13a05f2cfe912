//! Stage 2: threshold selection and the smoothed rejection sampler.
//!
//! A proposal `x ~ q` with `L = log q(x) − log p̃(x)` is accepted with
//! probability
//!
//! ```text
//! a(x | T) = (1 + exp(t·(L − T)))^(−1/t)
//! ```
//!
//! which is the logistic acceptance at `t = 1` and tends to the exact
//! rejection-sampling rule `min(1, exp(T − L))` as `t → ∞`. Accepted points
//! follow `r(x) = q(x)·a(x|T) / Z_R`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::distributions::{SampleMatrix, TargetDensity, VariationalDist};
use crate::divergence::{DivergenceEstimate, WeightedBatch};
use crate::error::{Error, Result};
use crate::numerics::{log_mean_exp, softplus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// `T = −D̂_α(p‖q)`.
    #[default]
    LowDim,
    /// `T` = empirical γ-quantile of `L` over proposal samples.
    Quantile,
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdRule::LowDim => "low-dim",
            ThresholdRule::Quantile => "quantile",
        })
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low-dim" => Ok(ThresholdRule::LowDim),
            "quantile" => Ok(ThresholdRule::Quantile),
            other => Err(Error::validation(format!(
                "unknown threshold rule `{other}` (expected low-dim or quantile)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinementConfig {
    pub alpha: f64,
    /// `T = −log M`.
    pub threshold: f64,
    /// Softmin temperature `t`; `f64::INFINITY` selects the hard rule.
    pub softmin_t: f64,
    pub gamma: f64,
    pub rule: ThresholdRule,
}

impl RefinementConfig {
    pub fn low_dim(alpha: f64, threshold: f64) -> Self {
        RefinementConfig {
            alpha,
            threshold,
            softmin_t: 1.0,
            gamma: 0.1,
            rule: ThresholdRule::LowDim,
        }
    }

    pub fn quantile(alpha: f64, threshold: f64, gamma: f64) -> Self {
        RefinementConfig {
            alpha,
            threshold,
            softmin_t: 1.0,
            gamma,
            rule: ThresholdRule::Quantile,
        }
    }

    pub fn with_softmin(mut self, t: f64) -> Self {
        self.softmin_t = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.softmin_t > 0.0) {
            return Err(Error::validation(format!(
                "softmin temperature must be positive, got {}",
                self.softmin_t
            )));
        }
        if self.threshold.is_nan() {
            return Err(Error::validation("threshold T is NaN"));
        }
        if self.rule == ThresholdRule::Quantile && !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

pub fn select_t_low_dim(div: &DivergenceEstimate) -> f64 {
    -div.value
}

/// Nearest-rank γ-quantile: the element at 1-based rank `⌈γ·S⌉`, clamped to `[1, S]`.
pub fn select_t_quantile(l_vals: &[f64], gamma: f64) -> Result<f64> {
    if l_vals.is_empty() {
        return Err(Error::validation("cannot take a quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::validation(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let mut sorted = l_vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((gamma * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// Draws `pilot_count` proposals from `q` and returns the γ-quantile of their `L` values.
pub fn select_t_pilot<R: Rng + ?Sized>(
    q: &VariationalDist,
    target: &TargetDensity,
    gamma: f64,
    pilot_count: usize,
    rng: &mut R,
) -> Result<f64> {
    let batch = WeightedBatch::draw(q, target, rng, pilot_count)?;
    select_t_quantile(batch.l_vals(), gamma)
}

/// `log a(x|T)` given `L = log q − log p̃`.
#[inline]
pub fn log_acceptance_prob(l: f64, threshold: f64, softmin_t: f64) -> f64 {
    let z = l - threshold;
    if softmin_t.is_infinite() {
        (-z).min(0.0)
    } else {
        -softplus(softmin_t * z) / softmin_t
    }
}

pub fn acceptance_prob(log_p_tilde: f64, log_q: f64, threshold: f64, softmin_t: f64) -> f64 {
    log_acceptance_prob(log_q - log_p_tilde, threshold, softmin_t).exp()
}

#[derive(Clone, Debug)]
pub struct RefinedSampleSet {
    pub accepted: SampleMatrix,
    /// Zero-based position of each accepted point in the proposal stream.
    pub accepted_indices: Vec<usize>,
    pub proposals_used: usize,
    pub acceptance_rate: f64,
    /// `log` of the mean acceptance probability over every proposal.
    pub log_z_r_hat: f64,
    pub threshold: f64,
    pub alpha: f64,
}

impl RefinedSampleSet {
    pub fn len(&self) -> usize {
        self.accepted.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "# acceptance_rate={:.6},log_z_r_hat={:.6},T={:.6},alpha={}",
            self.acceptance_rate, self.log_z_r_hat, self.threshold, self.alpha
        )
    }

    /// Sample rows (`x0,x1,...`) followed by the summary line.
    pub fn to_csv(&self) -> String {
        let dim = self.accepted.dim();
        let header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        let mut out = header.join(",");
        out.push('\n');
        for row in self.accepted.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }
}

/// Runs the approximate rejection sampler until `n_accept_goal` points are
/// accepted or `max_proposals` (default `200 × n_accept_goal`) are spent.
pub fn refine<R: Rng + ?Sized>(
    q: &VariationalDist,
    target: &TargetDensity,
    config: &RefinementConfig,
    rng: &mut R,
    n_accept_goal: usize,
    max_proposals: Option<usize>,
) -> Result<RefinedSampleSet> {
    config.validate()?;
    if n_accept_goal == 0 {
        return Err(Error::validation("n_accept_goal must be at least 1"));
    }
    if target.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: target.dim(),
        });
    }
    let max_proposals = max_proposals.unwrap_or(200 * n_accept_goal);
    let dim = q.dim();
    let mut accepted = SampleMatrix::with_capacity(dim, n_accept_goal);
    let mut accepted_indices = Vec::with_capacity(n_accept_goal);
    let mut log_a = Vec::new();
    let mut l_sum = 0.0;
    let mut l_min = f64::INFINITY;
    let mut noise = vec![0.0; dim];
    let mut x = vec![0.0; dim];

    let mut used = 0;
    while used < max_proposals && accepted_indices.len() < n_accept_goal {
        for e in noise.iter_mut() {
            *e = q.draw_base_noise(rng);
        }
        q.transform(&noise, &mut x);
        let l = q.log_q_unchecked(&x) - target.log_unnorm(&x);
        let la = log_acceptance_prob(l, config.threshold, config.softmin_t);
        let u: f64 = rng.random();
        if u < la.exp() {
            accepted.push_row(&x);
            accepted_indices.push(used);
        }
        log_a.push(la);
        l_sum += l;
        l_min = l_min.min(l);
        used += 1;
    }

    if accepted_indices.is_empty() {
        return Err(Error::NoAcceptances {
            proposals: used,
            min_l: l_min,
            mean_l: l_sum / used.max(1) as f64,
            threshold: config.threshold,
        });
    }
    Ok(RefinedSampleSet {
        acceptance_rate: accepted_indices.len() as f64 / used as f64,
        accepted,
        accepted_indices,
        proposals_used: used,
        log_z_r_hat: log_mean_exp(&log_a),
        threshold: config.threshold,
        alpha: config.alpha,
    })
}

/// Applies the acceptance test to an existing proposal batch. Returns the
/// indices of accepted rows.
pub fn accept_from_batch<R: Rng + ?Sized>(
    batch: &WeightedBatch,
    config: &RefinementConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    config.validate()?;
    Ok(batch
        .l_vals()
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| {
            let a = log_acceptance_prob(l, config.threshold, config.softmin_t).exp();
            let u: f64 = rng.random();
            (u < a).then_some(i)
        })
        .collect())
}

/// Area-normalized histogram over uniform bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,density\n");
        for (i, d) in self.density.iter().enumerate() {
            out.push_str(&format!("{:.6},{:.6},{:.9}\n", self.edges[i], self.edges[i + 1], d));
        }
        out
    }
}

/// Samples outside `range` are dropped; the rest are normalized to unit area.
pub fn empirical_pdf(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(Error::validation("histogram needs at least one bin and lo < hi"));
    }
    if samples.is_empty() {
        return Err(Error::validation("cannot build a histogram from zero samples"));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut inside = 0usize;
    for &x in samples {
        if x < lo || x > hi || x.is_nan() {
            continue;
        }
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
        inside += 1;
    }
    if inside == 0 {
        return Err(Error::validation("no samples fall inside the histogram range"));
    }
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let density = counts
        .iter()
        .map(|&c| c as f64 / (inside as f64 * width))
        .collect();
    Ok(Histogram { edges, density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_log_pdf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn low_dim_threshold_negates_divergence() {
        let mk = |v| DivergenceEstimate {
            alpha: 2.0,
            value: v,
            std_error: 0.0,
            sample_count: 1,
            warning: None,
        };
        assert_eq!(select_t_low_dim(&mk(0.98)), -0.98);
        assert_eq!(select_t_low_dim(&mk(0.0)), 0.0);
        assert_eq!(select_t_low_dim(&mk(1.46)), -1.46);
    }

    #[test]
    fn nearest_rank_quantile() {
        assert_eq!(select_t_quantile(&[4.0, 2.0, 3.0, 1.0], 0.5).unwrap(), 2.0);
        let l = [3.0, -1.0, 7.5, 2.0];
        assert_eq!(select_t_quantile(&l, 1.0).unwrap(), 7.5);
        assert_eq!(select_t_quantile(&l, 0.0).unwrap(), -1.0);
        assert!(select_t_quantile(&[], 0.5).is_err());
        assert!(select_t_quantile(&l, 1.5).is_err());
    }

    #[test]
    fn quantile_of_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let t = select_t_quantile(&l, 0.1).unwrap();
        assert!((t + 1.2816).abs() < 0.02, "{t}");
    }

    #[test]
    fn acceptance_values() {
        assert!((acceptance_prob(0.0, 0.5, 0.5, 1.0) - 0.5).abs() < 1e-15);
        // L − T = −ln 3
        let a = acceptance_prob(3f64.ln(), 0.0, 0.0, 1.0);
        assert!((a - 0.75).abs() < 1e-15);
        assert_eq!(acceptance_prob(-5.0, 2.0, 1e6, 1.0), 1.0);
        // hard rule reproduces p̃/(M q) below the threshold
        let (lp, lq, t): (f64, f64, f64) = (-3.0, -1.0, -4.0);
        let exact = (lp - lq + t).exp();
        assert!((acceptance_prob(lp, lq, t, f64::INFINITY) - exact).abs() < 1e-15);
        assert!((acceptance_prob(lp, lq, t, 200.0) - exact).abs() < 1e-6);
    }

    #[test]
    fn acceptance_saturates_without_overflow() {
        for &z in &[-1e300, -800.0, 800.0, 1e300] {
            let a = acceptance_prob(0.0, z, 0.0, 1.0);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    proptest! {
        #[test]
        fn acceptance_monotone_in_ratio_and_threshold(
            lp in -20.0f64..20.0, dl in 0.01f64..5.0, t in -10.0f64..10.0, dt in 0.01f64..5.0,
            temp in prop_oneof![Just(1.0), Just(3.0), Just(0.5)],
        ) {
            // strict in log space; the probability itself saturates at 1.0 in f64
            let l = -lp;
            prop_assert!(log_acceptance_prob(l - dl, t, temp) > log_acceptance_prob(l, t, temp));
            prop_assert!(log_acceptance_prob(l, t + dt, temp) > log_acceptance_prob(l, t, temp));
            prop_assert!(acceptance_prob(lp + dl, 0.0, t, temp) >= acceptance_prob(lp, 0.0, t, temp));
            let a = acceptance_prob(lp, 0.0, t, temp);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }

    #[test]
    fn infinite_threshold_accepts_everything() {
        let q = VariationalDist::gaussian(vec![0.0], vec![0.0]).unwrap();
        let p = TargetDensity::gaussian(vec![0.5], vec![1.5]).unwrap();
        let cfg = RefinementConfig::low_dim(2.0, 50.0);
        let r = refine(&q, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(2), 500, None).unwrap();
        assert_eq!(r.acceptance_rate, 1.0);
        assert_eq!(r.proposals_used, 500);
        assert!(r.log_z_r_hat.abs() < 1e-12);
    }

    #[test]
    fn hopeless_threshold_reports_diagnostics() {
        let q = VariationalDist::gaussian(vec![0.0], vec![0.0]).unwrap();
        let p = TargetDensity::gaussian(vec![0.0], vec![1.0]).unwrap();
        let cfg = RefinementConfig::low_dim(2.0, -800.0);
        let err = refine(&q, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(2), 5, Some(100)).unwrap_err();
        match err {
            Error::NoAcceptances { proposals, threshold, .. } => {
                assert_eq!(proposals, 100);
                assert_eq!(threshold, -800.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn refine_counts_proposals_exactly() {
        let q = VariationalDist::gaussian(vec![0.0], vec![1.0]).unwrap();
        let p = TargetDensity::gaussian(vec![0.0], vec![1.0]).unwrap();
        let cfg = RefinementConfig::low_dim(2.0, 0.0);
        let r = refine(&q, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(4), 300, None).unwrap();
        assert_eq!(r.len(), 300);
        assert_eq!(*r.accepted_indices.last().unwrap() + 1, r.proposals_used);
        assert!((r.acceptance_rate - 300.0 / r.proposals_used as f64).abs() < 1e-15);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 302);
        assert!(csv.lines().last().unwrap().starts_with("# acceptance_rate="));
    }

    #[test]
    fn histogram_of_constant_samples() {
        let h = empirical_pdf(&[2.0; 50], 10, (0.0, 5.0)).unwrap();
        let nonzero: Vec<_> = h.density.iter().filter(|d| **d > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0] * h.bin_width() - 1.0).abs() < 1e-12);
        assert!(empirical_pdf(&[], 10, (0.0, 1.0)).is_err());
    }

    #[test]
    fn histogram_of_normals_matches_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let h = empirical_pdf(&xs, 100, (-5.0, 5.0)).unwrap();
        let area: f64 = h.density.iter().sum::<f64>() * h.bin_width();
        assert!((area - 1.0).abs() < 1e-12);
        let worst = h
            .centers()
            .iter()
            .zip(&h.density)
            .map(|(&c, &d)| (d - normal_log_pdf(c, 0.0, 1.0).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn rule_parses() {
        assert_eq!("quantile".parse::<ThresholdRule>().unwrap(), ThresholdRule::Quantile);
        assert_eq!("low-dim".parse::<ThresholdRule>().unwrap(), ThresholdRule::LowDim);
        assert!("median".parse::<ThresholdRule>().is_err());
    }
}
