//! Bayesian regression with a one-hidden-layer ReLU network.
//!
//! Weights `δ = (W1, b1, W2, b2)` get a standard-normal prior and a fully
//! factorized Gaussian posterior fitted by [`crate::rdvi`]. Refinement runs the
//! sampler of [`crate::drs`] directly in weight space, scoring proposals on the
//! full training split.
//!
//! Parameter layout inside a flat `δ`: `W1` row-major as `input × hidden`, then
//! `b1`, then `W2`, then the output bias `b2`.

use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{LogDensity, SampleMatrix, TargetDensity, VariationalDist};
use crate::divergence::KlDirection;
use crate::drs::{refine, select_t_quantile, RefinedSampleSet, RefinementConfig};
use crate::error::{Error, Result};
use crate::numerics::{log_mean_exp, normal_log_pdf, HALF_LN_2PI};
use crate::rdvi::{evaluate_with_noise, Adam, Checkpoint, FitTrace, Objective, OptimizerConfig};
use crate::streams::{substream, Substream};
use crate::WeightedBatch;

pub const DEFAULT_HIDDEN: usize = 50;

/// Features stored row-major, one target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    dim: usize,
}

impl RegressionDataset {
    pub fn new(features: Vec<f64>, targets: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("a dataset needs at least one feature column"));
        }
        if features.len() != targets.len() * dim {
            return Err(Error::validation(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                targets.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::validation("dataset contains non-finite values"));
        }
        Ok(RegressionDataset {
            features,
            targets,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        RegressionDataset {
            features,
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            dim: self.dim,
        }
    }
}

/// Parses a numeric table. Cells are split on commas when a line contains one
/// and on whitespace otherwise; blank lines and `#` comments are skipped. The
/// target is `target_column` (zero-based) or the last column when `None`.
pub fn parse_dataset(text: &str, target_column: Option<usize>, source: &Path) -> Result<RegressionDataset> {
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        row,
        column,
        message,
    };
    let mut width = None;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(parse_err(
                row,
                cells.len().min(w) + 1,
                format!("expected {w} columns, found {}", cells.len()),
            ));
        }
        if w < 2 {
            return Err(parse_err(row, 1, "need at least one feature and one target column".into()));
        }
        let target = target_column.unwrap_or(w - 1);
        if target >= w {
            return Err(Error::validation(format!(
                "target column {target} out of range for {w} columns"
            )));
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, j + 1, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, j + 1, format!("`{cell}` is not finite")));
            }
            if j == target {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let Some(w) = width else {
        return Err(parse_err(0, 0, "no data rows".into()));
    };
    RegressionDataset::new(features, targets, w - 1)
}

pub fn load_dataset(path: impl AsRef<Path>, target_column: Option<usize>) -> Result<RegressionDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, target_column, path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: RegressionDataset,
    pub test: RegressionDataset,
}

/// Random partition with `round(N·test_fraction)` test rows (at least one of each).
pub fn train_test_split<R: Rng + ?Sized>(
    data: &RegressionDataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<Split> {
    let n = data.len();
    if n < 2 {
        return Err(Error::validation("need at least two rows to split"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let perm = index::sample(rng, n, n).into_vec();
    Ok(Split {
        test: data.subset(&perm[..n_test]),
        train: data.subset(&perm[n_test..]),
    })
}

/// Per-column affine standardization with statistics from the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    // constant columns are left unscaled
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, sd)
}

impl Standardizer {
    pub fn fit(train: &RegressionDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::validation("cannot standardize an empty dataset"));
        }
        let d = train.dim();
        let (mut x_mean, mut x_std) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for j in 0..d {
            let (m, s) = mean_std(train.features.iter().skip(j).step_by(d).copied());
            x_mean.push(m);
            x_std.push(s);
        }
        let (y_mean, y_std) = mean_std(train.targets.iter().copied());
        Ok(Standardizer {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            x_mean: vec![0.0; dim],
            x_std: vec![1.0; dim],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn apply(&self, data: &RegressionDataset) -> Result<RegressionDataset> {
        if data.dim() != self.x_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x_mean.len(),
                got: data.dim(),
            });
        }
        let d = data.dim();
        let features = data
            .features
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - self.x_mean[k % d]) / self.x_std[k % d])
            .collect();
        let targets = data.targets.iter().map(|&y| self.standardize_y(y)).collect();
        RegressionDataset::new(features, targets, d)
    }

    pub fn standardize_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn destandardize_y(&self, z: f64) -> f64 {
        z * self.y_std + self.y_mean
    }
}

/// Network shape plus the point-estimated observation noise.
#[derive(Clone, Debug, PartialEq)]
pub struct BnnModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub log_noise_var: f64,
}

impl BnnModel {
    pub fn new(input_dim: usize, hidden: usize) -> Self {
        BnnModel {
            input_dim,
            hidden,
            log_noise_var: 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden + 2 * self.hidden + 1
    }

    fn check(&self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: delta.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, delta: &[f64], x: &[f64]) -> f64 {
        let (d, h) = (self.input_dim, self.hidden);
        let (w1, rest) = delta.split_at(d * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut act = b1.to_vec();
        hidden_pre_activation(w1, x, &mut act);
        b2[0] + act.iter().zip(w2).map(|(&a, &w)| a.max(0.0) * w).sum::<f64>()
    }

    /// Gaussian log-likelihood of the chosen rows (all when `rows` is `None`).
    /// When `grad` is given, the likelihood gradient with respect to `δ` is
    /// added into it. Also returns the residual sum of squares.
    fn log_lik(
        &self,
        delta: &[f64],
        data: &RegressionDataset,
        rows: Option<&[usize]>,
        mut grad: Option<&mut [f64]>,
    ) -> (f64, f64) {
        let (d, h) = (self.input_dim, self.hidden);
        let (w1, rest) = delta.split_at(d * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let var = self.log_noise_var.exp();
        let mut act = vec![0.0; h];
        let mut gh = vec![0.0; h];
        let mut rss = 0.0;
        let count = rows.map_or(data.len(), <[usize]>::len);
        for k in 0..count {
            let n = rows.map_or(k, |r| r[k]);
            let x = data.row(n);
            act.copy_from_slice(b1);
            hidden_pre_activation(w1, x, &mut act);
            let mut out = b2[0];
            for j in 0..h {
                act[j] = act[j].max(0.0);
                out += act[j] * w2[j];
            }
            let r = data.targets[n] - out;
            rss += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let dy = r / var;
                let (g_w1, g_rest) = g.split_at_mut(d * h);
                let (g_b1, g_rest) = g_rest.split_at_mut(h);
                let (g_w2, g_b2) = g_rest.split_at_mut(h);
                g_b2[0] += dy;
                for j in 0..h {
                    g_w2[j] += dy * act[j];
                    gh[j] = if act[j] > 0.0 { dy * w2[j] } else { 0.0 };
                    g_b1[j] += gh[j];
                }
                for (i, &xi) in x.iter().enumerate() {
                    for (g, &gj) in g_w1[i * h..(i + 1) * h].iter_mut().zip(&gh) {
                        *g += gj * xi;
                    }
                }
            }
        }
        let ll = -(count as f64) * (HALF_LN_2PI + 0.5 * self.log_noise_var) - 0.5 * rss / var;
        (ll, rss)
    }

    /// Residual sum of squares over the chosen rows.
    pub fn residual_sum_of_squares(&self, delta: &[f64], data: &RegressionDataset, rows: Option<&[usize]>) -> f64 {
        self.log_lik(delta, data, rows, None).1
    }
}

/// Adds `x·W1` into `act`, with `W1` stored input-major.
#[inline]
fn hidden_pre_activation(w1: &[f64], x: &[f64], act: &mut [f64]) {
    let h = act.len();
    for (i, &xi) in x.iter().enumerate() {
        for (a, &w) in act.iter_mut().zip(&w1[i * h..(i + 1) * h]) {
            *a += xi * w;
        }
    }
}

fn log_prior(delta: &[f64]) -> f64 {
    -(delta.len() as f64) * HALF_LN_2PI - 0.5 * delta.iter().map(|v| v * v).sum::<f64>()
}

fn minibatch_scale(data: &RegressionDataset, rows: Option<&[usize]>) -> f64 {
    rows.map_or(1.0, |r| data.len() as f64 / r.len() as f64)
}

/// `log p(y | x, δ) + log p(δ)`, with the likelihood of a minibatch rescaled by `N / |batch|`.
pub fn log_p_tilde_weights(
    model: &BnnModel,
    delta: &[f64],
    data: &RegressionDataset,
    minibatch: Option<&[usize]>,
) -> Result<f64> {
    model.check(delta)?;
    if data.dim() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: data.dim(),
        });
    }
    if let Some(rows) = minibatch {
        if rows.is_empty() || rows.iter().any(|&i| i >= data.len()) {
            return Err(Error::validation("minibatch rows must be non-empty and in range"));
        }
    }
    let (ll, _) = model.log_lik(delta, data, minibatch, None);
    Ok(minibatch_scale(data, minibatch) * ll + log_prior(delta))
}

/// Weight-space posterior density as a [`LogDensity`].
#[derive(Clone, Debug)]
pub struct BnnTarget {
    model: BnnModel,
    data: Arc<RegressionDataset>,
    rows: Option<Vec<usize>>,
}

impl BnnTarget {
    pub fn new(model: BnnModel, data: Arc<RegressionDataset>, rows: Option<Vec<usize>>) -> Result<Self> {
        if data.dim() != model.input_dim {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim,
                got: data.dim(),
            });
        }
        Ok(BnnTarget { model, data, rows })
    }

    pub fn into_target(self) -> TargetDensity {
        TargetDensity::new(self, None)
    }
}

impl LogDensity for BnnTarget {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let rows = self.rows.as_deref();
        let (ll, _) = self.model.log_lik(x, &self.data, rows, None);
        minibatch_scale(&self.data, rows) * ll + log_prior(x)
    }

    fn grad_log_unnorm(&self, x: &[f64], grad: &mut [f64]) {
        self.log_unnorm_and_grad(x, grad);
    }

    fn log_unnorm_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let rows = self.rows.as_deref();
        grad.fill(0.0);
        let (ll, _) = self.model.log_lik(x, &self.data, rows, Some(grad));
        let scale = minibatch_scale(&self.data, rows);
        for (g, &v) in grad.iter_mut().zip(x) {
            *g = scale * *g - v;
        }
        scale * ll + log_prior(x)
    }
}

/// Mean-field Gaussian over the network weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BnnPosterior {
    pub model: BnnModel,
    pub q: VariationalDist,
}

impl BnnPosterior {
    pub fn new(model: BnnModel, mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != model.param_count() {
            return Err(Error::DimensionMismatch {
                expected: model.param_count(),
                got: mean.len(),
            });
        }
        let q = VariationalDist::gaussian(mean, log_var)?;
        Ok(BnnPosterior { model, q })
    }

    /// He-scaled random means, zero biases, and a common small log-variance.
    pub fn init<R: Rng + ?Sized>(model: BnnModel, init_log_var: f64, rng: &mut R) -> Result<Self> {
        let (d, h) = (model.input_dim, model.hidden);
        let mut mean = Vec::with_capacity(model.param_count());
        let s1 = (2.0 / d as f64).sqrt();
        mean.extend((0..d * h).map(|_| s1 * rng.sample::<f64, _>(StandardNormal)));
        mean.extend(std::iter::repeat_n(0.0, h));
        let s2 = (2.0 / h as f64).sqrt();
        mean.extend((0..h).map(|_| s2 * rng.sample::<f64, _>(StandardNormal)));
        mean.push(0.0);
        let n = mean.len();
        Self::new(model, mean, vec![init_log_var; n])
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<SampleMatrix> {
        Ok(self.q.sample_reparam(rng, count)?.points)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnTrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    /// Step size, iteration count, samples per step, α, seed and Adam settings.
    pub optimizer: OptimizerConfig,
    pub init_log_var: f64,
    pub init_log_noise_var: f64,
    /// Start from this posterior (and its noise level) instead of a random init.
    pub warm_start: Option<BnnPosterior>,
}

impl Default for BnnTrainConfig {
    fn default() -> Self {
        BnnTrainConfig {
            hidden: DEFAULT_HIDDEN,
            batch_size: 32,
            optimizer: OptimizerConfig {
                iterations: 3000,
                alpha: 1.0,
                kl_direction: KlDirection::Exclusive,
                ..OptimizerConfig::default()
            },
            init_log_var: -9.0,
            init_log_noise_var: 0.0,
            warm_start: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BnnFit {
    pub posterior: BnnPosterior,
    pub trace: FitTrace,
    pub log_noise_var_trace: Vec<f64>,
}

const DIVERGENCE_PATIENCE: usize = 10;

/// Fits the mean-field posterior on a standardized training split.
///
/// The noise log-variance is a point parameter. Its update ascends the
/// log-likelihood averaged under the same normalized sample weights that the
/// objective assigns to each weight draw.
pub fn fit_bnn(train: &RegressionDataset, config: &BnnTrainConfig) -> Result<BnnFit> {
    let opt = &config.optimizer;
    opt.validate()?;
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::validation("batch size and hidden width must be positive"));
    }
    if train.is_empty() {
        return Err(Error::validation("empty training set"));
    }
    let objective = Objective::for_alpha(opt.alpha, opt.kl_direction)?;
    let mut rng = substream(opt.seed, Substream::Fit);
    let (mut model, init) = match &config.warm_start {
        Some(post) => {
            if post.model.input_dim != train.dim() {
                return Err(Error::DimensionMismatch {
                    expected: post.model.input_dim,
                    got: train.dim(),
                });
            }
            (post.model.clone(), post.clone())
        }
        None => {
            let mut model = BnnModel::new(train.dim(), config.hidden);
            model.log_noise_var = config.init_log_noise_var;
            let init = BnnPosterior::init(model.clone(), config.init_log_var, &mut rng)?;
            (model, init)
        }
    };
    let p = model.param_count();
    let data = Arc::new(train.clone());
    let batch = config.batch_size.min(train.len());

    let mut q = init.q;
    let mut params: Vec<f64> = q.mu().iter().chain(q.log_var()).copied().collect();
    params.push(model.log_noise_var);
    let mut adam = Adam::new(2 * p + 1, opt.step_size, opt.adam_betas, opt.adam_eps);
    let mut flat = vec![0.0; 2 * p + 1];
    let mut trace = FitTrace {
        objective: Vec::with_capacity(opt.iterations),
        checkpoints: Vec::new(),
        final_q: q.clone(),
    };
    let mut noise_trace = Vec::with_capacity(opt.iterations);
    let mut bad_streak = 0;

    for it in 0..opt.iterations {
        if it % opt.checkpoint_every == 0 {
            trace.checkpoints.push(Checkpoint { iteration: it, q: q.clone() });
        }
        let rows = index::sample(&mut rng, train.len(), batch).into_vec();
        let scale = train.len() as f64 / rows.len() as f64;
        let target = BnnTarget::new(model.clone(), Arc::clone(&data), Some(rows.clone()))?.into_target();
        let noise = q.sample_base_noise(&mut rng, opt.samples_per_step)?;
        match evaluate_with_noise(&q, &target, objective, &noise) {
            Ok(step) if step.loss.is_finite() => {
                bad_streak = 0;
                trace.objective.push(step.loss);
                // d/d log v of the batch log-likelihood is −n/2 + RSS/(2v); RSS/(2v)
                // is recovered from log p̃ = log w + log q without another pass.
                let n_b = rows.len() as f64;
                let mut d_lnv = 0.0;
                for (s, &w) in step.sample_weights.iter().enumerate() {
                    if w > 0.0 {
                        let delta = step.points.row(s);
                        let lp = step.log_weights[s] + q.log_q_unchecked(delta);
                        let ll = (lp - log_prior(delta)) / scale;
                        let half_rss_over_v = -ll - n_b * (HALF_LN_2PI + 0.5 * model.log_noise_var);
                        d_lnv -= w * scale * (-0.5 * n_b + half_rss_over_v);
                    }
                }
                flat[..p].copy_from_slice(&step.gradient.d_mu);
                flat[p..2 * p].copy_from_slice(&step.gradient.d_log_var);
                flat[2 * p] = d_lnv;
                adam.step(&mut params, &flat);
                model.log_noise_var = params[2 * p];
                noise_trace.push(model.log_noise_var);
                match q.with_params(params[..p].to_vec(), params[p..2 * p].to_vec()) {
                    Ok(next) if model.log_noise_var.is_finite() => q = next,
                    _ => {
                        trace.final_q = q;
                        return Err(Error::Diverged { iteration: it, trace: Box::new(trace) });
                    }
                }
            }
            Ok(step) => {
                trace.objective.push(step.loss);
                bad_streak += 1;
            }
            Err(Error::NonFiniteGradient { .. }) => {
                trace.objective.push(f64::INFINITY);
                bad_streak += 1;
            }
            Err(e) => return Err(e),
        }
        if bad_streak >= DIVERGENCE_PATIENCE {
            trace.final_q = q;
            return Err(Error::Diverged { iteration: it, trace: Box::new(trace) });
        }
    }
    trace.final_q = q.clone();
    Ok(BnnFit {
        posterior: BnnPosterior { model, q },
        trace,
        log_noise_var_trace: noise_trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnRefineConfig {
    /// Recorded on the refined set; the fit's α.
    pub alpha: f64,
    pub gamma: f64,
    pub n_accept_goal: usize,
    pub softmin_t: f64,
    pub pilot_draws: usize,
    pub max_proposals: Option<usize>,
}

impl Default for BnnRefineConfig {
    fn default() -> Self {
        BnnRefineConfig {
            alpha: 1.0,
            gamma: 0.1,
            n_accept_goal: 100,
            softmin_t: 1.0,
            pilot_draws: 1000,
            max_proposals: None,
        }
    }
}

/// Full-data weight-space target for the posterior's model.
pub fn full_data_target(posterior: &BnnPosterior, train: &RegressionDataset) -> Result<TargetDensity> {
    Ok(BnnTarget::new(posterior.model.clone(), Arc::new(train.clone()), None)?.into_target())
}

/// Picks `T` as the γ-quantile of `L` over a pilot batch, then refines.
pub fn refine_bnn<R: Rng + ?Sized>(
    posterior: &BnnPosterior,
    train: &RegressionDataset,
    config: &BnnRefineConfig,
    rng: &mut R,
) -> Result<RefinedSampleSet> {
    if config.pilot_draws == 0 {
        return Err(Error::validation("pilot_draws must be at least 1"));
    }
    let target = full_data_target(posterior, train)?;
    let pilot = WeightedBatch::draw(&posterior.q, &target, rng, config.pilot_draws)?;
    let threshold = select_t_quantile(pilot.l_vals(), config.gamma)?;
    let rc = RefinementConfig::quantile(config.alpha, threshold, config.gamma).with_softmin(config.softmin_t);
    refine(&posterior.q, &target, &rc, rng, config.n_accept_goal, config.max_proposals)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub rmse: f64,
    pub avg_test_ll: f64,
}

/// `log (1/S) Σ_s N(y | f_s, var)`.
pub fn predictive_log_density(predictions: &[f64], y: f64, var: f64) -> f64 {
    let terms: Vec<f64> = predictions.iter().map(|&f| normal_log_pdf(y, f, var)).collect();
    log_mean_exp(&terms)
}

/// RMSE of the predictive mean and average predictive log-likelihood, both in
/// original target units. `test` is the standardized split; `stats` undoes it.
pub fn evaluate(
    model: &BnnModel,
    weights: &SampleMatrix,
    test: &RegressionDataset,
    stats: &Standardizer,
) -> Result<Evaluation> {
    if weights.rows() < 2 {
        return Err(Error::validation(format!(
            "evaluation needs at least 2 weight samples, got {}",
            weights.rows()
        )));
    }
    if weights.dim() != model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            got: weights.dim(),
        });
    }
    if test.is_empty() {
        return Err(Error::validation("empty test set"));
    }
    let var = model.log_noise_var.exp() * stats.y_std * stats.y_std;
    let mut preds = vec![0.0; weights.rows()];
    let (mut sq, mut ll) = (0.0, 0.0);
    for n in 0..test.len() {
        let x = test.row(n);
        for (s, delta) in weights.iter_rows().enumerate() {
            preds[s] = stats.destandardize_y(model.predict(delta, x));
        }
        let y = stats.destandardize_y(test.targets()[n]);
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        sq += (y - mean) * (y - mean);
        ll += predictive_log_density(&preds, y, var);
    }
    let n = test.len() as f64;
    Ok(Evaluation {
        rmse: (sq / n).sqrt(),
        avg_test_ll: ll / n,
    })
}
