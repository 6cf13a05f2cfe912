//! Stage 1: fit `q_θ` by stochastic gradient descent on the Monte-Carlo
//! α-divergence objective.
//!
//! The objective is kept in log form, `J(θ) = log (1/S) Σ_s (p̃(x_s)/q_θ(x_s))^α`
//! with `x_s = μ + σ ⊙ ε_s`. Its pathwise gradient is a softmax-weighted sum of
//! per-sample gradients of `log w_s = log p̃(x_s) − log q_θ(x_s)`. For a
//! location-scale family `log q_θ(x_s) = log f(ε_s) − Σ_i ½ log σ_i²`, so
//!
//! ```text
//! ∂ log w_s / ∂μ_i       = ∂_i log p̃(x_s)
//! ∂ log w_s / ∂log σ_i²  = ½ σ_i ε_si ∂_i log p̃(x_s) + ½
//! ```

use rand::Rng;

use crate::distributions::{SampleMatrix, TargetDensity, VariationalDist};
use crate::divergence::{KlDirection, WeightedBatch};
use crate::error::{Error, Result};
use crate::numerics::{log_mean_exp, softmax};
use crate::streams::{substream, Substream};

/// `log (1/S) Σ_s exp(α·(log p̃ − log q)_s)`.
pub fn objective(alpha: f64, batch: &WeightedBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("objective of an empty batch"));
    }
    let terms: Vec<f64> = batch.l_vals().iter().map(|l| -alpha * l).collect();
    Ok(log_mean_exp(&terms))
}

/// What a fit minimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `J` for α > 1 and `J/(α−1)` for α < 1.
    Renyi { alpha: f64 },
    /// The α = 1 limit, in the given direction.
    Kl(KlDirection),
}

impl Objective {
    pub fn for_alpha(alpha: f64, direction: KlDirection) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::validation(format!("alpha must be positive, got {alpha}")));
        }
        Ok(if alpha == 1.0 {
            Objective::Kl(direction)
        } else {
            Objective::Renyi { alpha }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub d_mu: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

impl Gradient {
    fn zeros(dim: usize) -> Self {
        Gradient {
            d_mu: vec![0.0; dim],
            d_log_var: vec![0.0; dim],
        }
    }

    pub fn norm(&self) -> f64 {
        self.d_mu
            .iter()
            .chain(&self.d_log_var)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Loss, gradient and per-sample weights for one batch of base noise.
#[derive(Clone, Debug)]
pub struct StepEvaluation {
    pub loss: f64,
    pub gradient: Gradient,
    /// Normalized weight each sample carries in the gradient.
    pub sample_weights: Vec<f64>,
    pub points: SampleMatrix,
    pub log_weights: Vec<f64>,
}

/// Evaluates the loss and its gradient with the base noise held fixed.
pub fn evaluate_with_noise(
    q: &VariationalDist,
    target: &TargetDensity,
    objective: Objective,
    noise: &SampleMatrix,
) -> Result<StepEvaluation> {
    let dim = q.dim();
    if target.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: target.dim(),
        });
    }
    let points = q.points_from_noise(noise)?;
    let s = points.rows();
    let mut target_grads = SampleMatrix::with_capacity(dim, s);
    let mut log_w = Vec::with_capacity(s);
    let mut g = vec![0.0; dim];
    for x in points.iter_rows() {
        let lp = target.log_unnorm_and_grad(x, &mut g);
        log_w.push(lp - q.log_q_unchecked(x));
        target_grads.push_row(&g);
    }

    let (loss, weights, coef) = match objective {
        Objective::Renyi { alpha } => {
            let scaled: Vec<f64> = log_w.iter().map(|lw| alpha * lw).collect();
            let j = log_mean_exp(&scaled);
            let w = softmax(&scaled);
            if alpha > 1.0 {
                (j, w, alpha)
            } else {
                (j / (alpha - 1.0), w, alpha / (alpha - 1.0))
            }
        }
        Objective::Kl(KlDirection::Inclusive) => {
            let w = softmax(&log_w);
            let e_lw: f64 = w
                .iter()
                .zip(&log_w)
                .filter(|(wi, _)| **wi > 0.0)
                .map(|(wi, lw)| wi * lw)
                .sum();
            (e_lw - log_mean_exp(&log_w), w, -1.0)
        }
        Objective::Kl(KlDirection::Exclusive) => {
            let mean = log_w.iter().sum::<f64>() / s as f64;
            (-mean, vec![1.0 / s as f64; s], -1.0)
        }
    };

    let mut grad = Gradient::zeros(dim);
    let (mut sm, mut sl) = (vec![0.0; dim], vec![0.0; dim]);
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let c = coef * w;
        match objective {
            Objective::Kl(KlDirection::Inclusive) => {
                // score-function form: ∇ KL(p‖q) = −E_p[∇θ log q(x)] with x held fixed
                q.score(points.row(i), &mut sm, &mut sl);
                for k in 0..dim {
                    grad.d_mu[k] += c * sm[k];
                    grad.d_log_var[k] += c * sl[k];
                }
            }
            _ => {
                let tg = target_grads.row(i);
                let eps = noise.row(i);
                for k in 0..dim {
                    if !tg[k].is_finite() {
                        return Err(Error::NonFiniteGradient {
                            sample: i,
                            component: k,
                        });
                    }
                    grad.d_mu[k] += c * tg[k];
                    grad.d_log_var[k] += c * (0.5 * q.sigma(k) * eps[k] * tg[k] + 0.5);
                }
            }
        }
    }
    if let Some(k) = grad
        .d_mu
        .iter()
        .chain(&grad.d_log_var)
        .position(|g| !g.is_finite())
    {
        let sample = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        return Err(Error::NonFiniteGradient {
            sample,
            component: k % dim,
        });
    }
    Ok(StepEvaluation {
        loss,
        gradient: grad,
        sample_weights: weights,
        points,
        log_weights: log_w,
    })
}

/// Loss only, for finite-difference checks.
pub fn loss_with_noise(
    q: &VariationalDist,
    target: &TargetDensity,
    objective: Objective,
    noise: &SampleMatrix,
) -> Result<f64> {
    let points = q.points_from_noise(noise)?;
    let log_w: Vec<f64> = points
        .iter_rows()
        .map(|x| target.log_unnorm(x) - q.log_q_unchecked(x))
        .collect();
    Ok(match objective {
        Objective::Renyi { alpha } => {
            let scaled: Vec<f64> = log_w.iter().map(|lw| alpha * lw).collect();
            let j = log_mean_exp(&scaled);
            if alpha > 1.0 {
                j
            } else {
                j / (alpha - 1.0)
            }
        }
        Objective::Kl(KlDirection::Inclusive) => {
            let w = softmax(&log_w);
            let e_lw: f64 = w.iter().zip(&log_w).map(|(wi, lw)| wi * lw).sum();
            e_lw - log_mean_exp(&log_w)
        }
        Objective::Kl(KlDirection::Exclusive) => -log_w.iter().sum::<f64>() / log_w.len() as f64,
    })
}

/// Reparameterized gradient of the loss minimized at this α (for α > 1 this is
/// the gradient of [`objective`]). α = 1 uses the inclusive KL.
pub fn gradient<R: Rng + ?Sized>(
    q: &VariationalDist,
    target: &TargetDensity,
    alpha: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Gradient> {
    let objective = Objective::for_alpha(alpha, KlDirection::Inclusive)?;
    let noise = q.sample_base_noise(rng, samples)?;
    Ok(evaluate_with_noise(q, target, objective, &noise)?.gradient)
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, step_size: f64, betas: (f64, f64), eps: f64) -> Self {
        Adam {
            step_size,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One descent step on `params` given `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub samples_per_step: usize,
    pub alpha: f64,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Only consulted when `alpha == 1`.
    pub kl_direction: KlDirection,
    /// Parameter snapshots are kept every this many iterations.
    pub checkpoint_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 1e-2,
            iterations: 5000,
            samples_per_step: 100,
            alpha: 2.0,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            kl_direction: KlDirection::Inclusive,
            checkpoint_every: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::validation("step_size must be positive"));
        }
        if self.samples_per_step < 2 {
            return Err(Error::validation("samples_per_step must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::validation("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::validation("adam_eps must be positive"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::validation("checkpoint_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub q: VariationalDist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitTrace {
    /// Loss at the parameters entering each iteration.
    pub objective: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_q: VariationalDist,
}

impl FitTrace {
    /// `iteration,objective,mu0..,log_var0..` for every checkpoint.
    pub fn to_csv(&self) -> String {
        let dim = self.final_q.dim();
        let mut header = vec!["iteration".to_string(), "objective".to_string()];
        header.extend((0..dim).map(|i| format!("mu{i}")));
        header.extend((0..dim).map(|i| format!("log_var{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for cp in &self.checkpoints {
            let obj = self.objective.get(cp.iteration).copied().unwrap_or(f64::NAN);
            let mut row = vec![cp.iteration.to_string(), format!("{obj:.9}")];
            row.extend(cp.q.mu().iter().map(|v| format!("{v:.9}")));
            row.extend(cp.q.log_var().iter().map(|v| format!("{v:.9}")));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

const DIVERGENCE_PATIENCE: usize = 10;

/// Minimizes the α-objective from `init_q` with Adam.
pub fn fit(target: &TargetDensity, init_q: &VariationalDist, config: &OptimizerConfig) -> Result<FitTrace> {
    config.validate()?;
    let objective = Objective::for_alpha(config.alpha, config.kl_direction)?;
    let dim = init_q.dim();
    let mut rng = substream(config.seed, Substream::Fit);
    let mut params: Vec<f64> = init_q.mu().iter().chain(init_q.log_var()).copied().collect();
    let mut adam = Adam::new(2 * dim, config.step_size, config.adam_betas, config.adam_eps);
    let mut q = init_q.clone();
    let mut trace = FitTrace {
        objective: Vec::with_capacity(config.iterations),
        checkpoints: Vec::new(),
        final_q: q.clone(),
    };
    let mut bad_streak = 0;
    let mut flat_grad = vec![0.0; 2 * dim];

    for it in 0..config.iterations {
        if it % config.checkpoint_every == 0 {
            trace.checkpoints.push(Checkpoint {
                iteration: it,
                q: q.clone(),
            });
        }
        let noise = q.sample_base_noise(&mut rng, config.samples_per_step)?;
        match evaluate_with_noise(&q, target, objective, &noise) {
            Ok(step) if step.loss.is_finite() => {
                bad_streak = 0;
                trace.objective.push(step.loss);
                flat_grad[..dim].copy_from_slice(&step.gradient.d_mu);
                flat_grad[dim..].copy_from_slice(&step.gradient.d_log_var);
                adam.step(&mut params, &flat_grad);
                match q.with_params(params[..dim].to_vec(), params[dim..].to_vec()) {
                    Ok(next) => q = next,
                    Err(_) => {
                        trace.final_q = q;
                        return Err(Error::Diverged {
                            iteration: it,
                            trace: Box::new(trace),
                        });
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
            return Err(Error::Diverged {
                iteration: it,
                trace: Box::new(trace),
            });
        }
    }
    trace.final_q = q;
    Ok(trace)
}
