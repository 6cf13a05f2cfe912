//! Monte-Carlo and quadrature estimators of Rényi α-divergences.
//!
//! All reductions are done with log-sum-exp over `log p̃ − log q`; the raw
//! ratios are never exponentiated before the max is subtracted.

use std::fmt;

use rand::Rng;

use crate::distributions::{SampleMatrix, TargetDensity, VariationalDist};
use crate::drs::{log_acceptance_prob, RefinementConfig};
use crate::error::{Error, Result};
use crate::numerics::{log_mean_exp, log_trapezoid, mean_and_sd, softmax, Grid};

/// Proposal samples with cached log-densities.
#[derive(Clone, Debug)]
pub struct WeightedBatch {
    points: SampleMatrix,
    log_q: Vec<f64>,
    log_p_tilde: Vec<f64>,
    l_vals: Vec<f64>,
}

impl WeightedBatch {
    pub fn new(points: SampleMatrix, log_q: Vec<f64>, log_p_tilde: Vec<f64>) -> Result<Self> {
        let s = points.rows();
        if s == 0 {
            return Err(Error::validation("batch must contain at least one sample"));
        }
        if log_q.len() != s || log_p_tilde.len() != s {
            return Err(Error::validation(format!(
                "batch arrays disagree in length: {s} points, {} log q, {} log p",
                log_q.len(),
                log_p_tilde.len()
            )));
        }
        let l_vals = log_q.iter().zip(&log_p_tilde).map(|(q, p)| q - p).collect();
        Ok(WeightedBatch {
            points,
            log_q,
            log_p_tilde,
            l_vals,
        })
    }

    /// Evaluates `q` and `target` on existing points.
    pub fn evaluate(q: &VariationalDist, target: &TargetDensity, points: SampleMatrix) -> Result<Self> {
        if points.dim() != q.dim() || target.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: q.dim(),
                got: if points.dim() != q.dim() { points.dim() } else { target.dim() },
            });
        }
        let log_q = points.iter_rows().map(|x| q.log_q_unchecked(x)).collect();
        let log_p = points.iter_rows().map(|x| target.log_unnorm(x)).collect();
        Self::new(points, log_q, log_p)
    }

    pub fn draw<R: Rng + ?Sized>(
        q: &VariationalDist,
        target: &TargetDensity,
        rng: &mut R,
        count: usize,
    ) -> Result<Self> {
        let sample = q.sample_reparam(rng, count)?;
        Self::evaluate(q, target, sample.points)
    }

    pub fn len(&self) -> usize {
        self.log_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_q.is_empty()
    }

    pub fn points(&self) -> &SampleMatrix {
        &self.points
    }

    pub fn log_q_vals(&self) -> &[f64] {
        &self.log_q
    }

    pub fn log_p_tilde_vals(&self) -> &[f64] {
        &self.log_p_tilde
    }

    /// `L_s = log q(x_s) − log p̃(x_s)`.
    pub fn l_vals(&self) -> &[f64] {
        &self.l_vals
    }

    /// `log p̃(x_s) − log q(x_s)`.
    pub fn log_weights(&self) -> Vec<f64> {
        self.l_vals.iter().map(|l| -l).collect()
    }

    /// Concatenates two batches drawn from the same proposal.
    pub fn concat(&self, other: &WeightedBatch) -> Result<Self> {
        if self.points.dim() != other.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points.dim(),
                got: other.points.dim(),
            });
        }
        let mut data = self.points.as_slice().to_vec();
        data.extend_from_slice(other.points.as_slice());
        Self::new(
            SampleMatrix::new(self.points.dim(), data)?,
            [self.log_q.as_slice(), &other.log_q].concat(),
            [self.log_p_tilde.as_slice(), &other.log_p_tilde].concat(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimateWarning {
    /// Importance weights concentrated on fewer than ten effective samples.
    LowEffectiveSampleSize(f64),
}

/// A divergence value in nats together with its Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceEstimate {
    pub alpha: f64,
    pub value: f64,
    pub std_error: f64,
    pub sample_count: usize,
    pub warning: Option<EstimateWarning>,
}

pub const REPORT_HEADER: &str = "alpha,value,std_error,sample_count";

impl DivergenceEstimate {
    /// One comma-separated row matching [`REPORT_HEADER`].
    pub fn report_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{}",
            self.alpha, self.value, self.std_error, self.sample_count
        )
    }

    pub fn parse_report_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::validation(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::validation(format!("`{s}` is not a number")))
        };
        Ok(DivergenceEstimate {
            alpha: num(fields[0])?,
            value: num(fields[1])?,
            std_error: num(fields[2])?,
            sample_count: fields[3]
                .parse()
                .map_err(|_| Error::validation(format!("`{}` is not a count", fields[3])))?,
            warning: None,
        })
    }
}

impl fmt::Display for DivergenceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "D_{}: {:.4} ± {:.4} (S = {})",
            self.alpha, self.value, self.std_error, self.sample_count
        )
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation(format!("alpha must be positive, got {alpha}")));
    }
    if alpha == 1.0 {
        return Err(Error::validation(
            "alpha = 1 is singular for the Rényi estimator; use estimate_kl_limit",
        ));
    }
    Ok(())
}

/// Delta-method standard error of `log mean(exp(terms))`.
fn log_mean_std_error(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = terms.iter().map(|&t| (t - m).exp()).collect();
    let (mean, sd) = mean_and_sd(&scaled);
    sd / ((terms.len() as f64).sqrt() * mean)
}

fn non_degenerate(terms: &[f64]) -> Result<()> {
    if terms.iter().all(|t| *t == f64::NEG_INFINITY) {
        return Err(Error::DegenerateBatch("every importance weight is zero".into()));
    }
    if terms.iter().any(|t| t.is_nan() || *t == f64::INFINITY) {
        return Err(Error::DegenerateBatch("importance weights contain NaN or +inf".into()));
    }
    Ok(())
}

/// `D_α(p‖q)` from samples of `q`.
pub fn estimate_renyi(alpha: f64, batch: &WeightedBatch, log_z_p: f64) -> Result<DivergenceEstimate> {
    check_alpha(alpha)?;
    let terms: Vec<f64> = batch.l_vals().iter().map(|l| -alpha * l).collect();
    non_degenerate(&terms)?;
    let scale = 1.0 / (alpha - 1.0);
    let value = scale * log_mean_exp(&terms) - alpha * scale * log_z_p;
    Ok(DivergenceEstimate {
        alpha,
        value,
        std_error: log_mean_std_error(&terms) * scale.abs(),
        sample_count: batch.len(),
        warning: None,
    })
}

/// Direction of the α → 1 limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KlDirection {
    /// `KL(p‖q)`, the α → 1 limit of `D_α(p‖q)`.
    #[default]
    Inclusive,
    /// `KL(q‖p)`, the usual evidence-lower-bound direction.
    Exclusive,
}

/// KL divergence from samples of `q`. With `log_z_p = None` the normalizer is
/// replaced by its importance-sampling estimate.
pub fn estimate_kl_limit(
    batch: &WeightedBatch,
    log_z_p: Option<f64>,
    direction: KlDirection,
) -> Result<DivergenceEstimate> {
    let log_w = batch.log_weights();
    non_degenerate(&log_w)?;
    let log_z = log_z_p.unwrap_or_else(|| log_mean_exp(&log_w));
    let s = batch.len();
    let (value, std_error, warning) = match direction {
        KlDirection::Inclusive => {
            let w = softmax(&log_w);
            let weighted: f64 = w
                .iter()
                .zip(&log_w)
                .filter(|(wi, _)| **wi > 0.0)
                .map(|(wi, lw)| wi * lw)
                .sum();
            let var: f64 = w
                .iter()
                .zip(&log_w)
                .filter(|(wi, _)| **wi > 0.0)
                .map(|(wi, lw)| wi * wi * (lw - weighted) * (lw - weighted))
                .sum();
            let ess = 1.0 / w.iter().map(|wi| wi * wi).sum::<f64>();
            let warning = (ess < 10.0).then_some(EstimateWarning::LowEffectiveSampleSize(ess));
            (weighted - log_z, var.sqrt(), warning)
        }
        KlDirection::Exclusive => {
            let (mean, sd) = mean_and_sd(&log_w);
            (log_z - mean, sd / (s as f64).sqrt(), None)
        }
    };
    Ok(DivergenceEstimate {
        alpha: 1.0,
        value,
        std_error,
        sample_count: s,
        warning,
    })
}

/// `D_α(p‖r)` for the refined law `r ∝ q·a(·|T)`, estimated from the same
/// proposal samples used for `D_α(p‖q)`.
pub fn estimate_renyi_refined(
    alpha: f64,
    batch: &WeightedBatch,
    config: &RefinementConfig,
    log_z_p: f64,
) -> Result<DivergenceEstimate> {
    check_alpha(alpha)?;
    let log_a: Vec<f64> = batch
        .l_vals()
        .iter()
        .map(|&l| log_acceptance_prob(l, config.threshold, config.softmin_t))
        .collect();
    let terms: Vec<f64> = batch
        .l_vals()
        .iter()
        .zip(&log_a)
        .map(|(&l, &la)| {
            // a = 0 with α > 1 would give 0·∞; such a point has r = 0 and contributes nothing.
            if la == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                -alpha * l + (1.0 - alpha) * la
            }
        })
        .collect();
    non_degenerate(&terms)?;
    non_degenerate(&log_a)?;
    let scale = 1.0 / (alpha - 1.0);
    let log_z_r = log_mean_exp(&log_a);
    let log_mean_terms = log_mean_exp(&terms);
    let value = log_z_r + scale * log_mean_terms - alpha * scale * log_z_p;

    // Delta method for f(ā, b̄) = ln ā + ln b̄ /(α−1) with correlated per-sample terms.
    let influence: Vec<f64> = log_a
        .iter()
        .zip(&terms)
        .map(|(&la, &t)| (la - log_z_r).exp() + scale * (t - log_mean_terms).exp())
        .collect();
    let (_, sd) = mean_and_sd(&influence);
    Ok(DivergenceEstimate {
        alpha,
        value,
        std_error: sd / (batch.len() as f64).sqrt(),
        sample_count: batch.len(),
        warning: None,
    })
}

/// `max_s (log p̃ − log q)(x_s)`, a lower bound on `log M = sup_x log(p̃/q)`.
pub fn estimate_log_m(batch: &WeightedBatch) -> f64 {
    batch
        .l_vals()
        .iter()
        .map(|l| -l)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(1/(α−1)) log ∫ p^α r^{1−α}` by the trapezoid rule after normalizing both
/// densities on the grid.
pub fn quadrature_renyi_1d(
    log_p: impl Fn(f64) -> f64,
    log_r_unnorm: impl Fn(f64) -> f64,
    alpha: f64,
    grid: Grid,
) -> Result<f64> {
    check_alpha(alpha)?;
    if grid.points < 3 || !(grid.hi > grid.lo) {
        return Err(Error::validation("quadrature grid needs at least 3 points on a non-empty interval"));
    }
    let xs: Vec<f64> = grid.nodes().collect();
    let lp: Vec<f64> = xs.iter().map(|&x| log_p(x)).collect();
    let lr: Vec<f64> = xs.iter().map(|&x| log_r_unnorm(x)).collect();
    let h = grid.step();
    let log_z_p = checked_log_normalizer(&lp, h)?;
    let log_z_r = checked_log_normalizer(&lr, h)?;
    let integrand: Vec<f64> = lp
        .iter()
        .zip(&lr)
        .map(|(&p, &r)| {
            if p == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                alpha * (p - log_z_p) + (1.0 - alpha) * (r - log_z_r)
            }
        })
        .collect();
    Ok(log_trapezoid(&integrand, h) / (alpha - 1.0))
}

/// Normalizer on the full grid, checked against the grid with every other node.
fn checked_log_normalizer(log_ys: &[f64], h: f64) -> Result<f64> {
    let fine = log_trapezoid(log_ys, h);
    let coarse_len = if log_ys.len() % 2 == 1 { log_ys.len() } else { log_ys.len() - 1 };
    let coarse: Vec<f64> = log_ys[..coarse_len].iter().step_by(2).copied().collect();
    let coarse_fine = log_trapezoid(&log_ys[..coarse_len], h);
    let coarse = log_trapezoid(&coarse, 2.0 * h);
    if !fine.is_finite() {
        return Err(Error::validation("density has no mass on the quadrature grid"));
    }
    let rel = (coarse - coarse_fine).exp_m1().abs();
    if rel > 1e-4 {
        return Err(Error::GridTooCoarse(rel));
    }
    Ok(fine)
}
