//! Target densities and reparameterizable variational families.
//!
//! Every density is handled in log space. A [`TargetDensity`] only needs to
//! know `log p̃(x)` up to an additive constant; when the normalizer is known
//! it is carried alongside as `log_z`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{
    log_sum_exp, normal_cdf, normal_log_pdf, student_t_cdf, student_t_log_norm, HALF_LN_2PI,
};

/// Anything that can evaluate an unnormalized log-density on `R^dim`.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_unnorm(&self, x: &[f64]) -> f64;

    /// Gradient of `log_unnorm` with respect to `x`. The default falls back to
    /// central differences, which is adequate for smooth low-dimensional targets.
    fn grad_log_unnorm(&self, x: &[f64], grad: &mut [f64]) {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = self.log_unnorm(&probe);
            probe[i] = x[i] - h;
            let down = self.log_unnorm(&probe);
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * h);
        }
    }

    /// Value and gradient together; override when they share work.
    fn log_unnorm_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.grad_log_unnorm(x, grad);
        self.log_unnorm(x)
    }
}

/// Unnormalized target `p̃(x)` with an optional known `log Z_p`.
#[derive(Clone)]
pub struct TargetDensity {
    inner: Arc<dyn LogDensity>,
    log_z: Option<f64>,
    log_scale: f64,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("dim", &self.dim())
            .field("log_z", &self.log_z)
            .field("log_scale", &self.log_scale)
            .finish()
    }
}

impl TargetDensity {
    pub fn new(density: impl LogDensity + 'static, log_z: Option<f64>) -> Self {
        Self::from_arc(Arc::new(density), log_z)
    }

    pub fn from_arc(density: Arc<dyn LogDensity>, log_z: Option<f64>) -> Self {
        TargetDensity {
            inner: density,
            log_z,
            log_scale: 0.0,
        }
    }

    /// Wraps a closure; gradients are taken by central differences.
    pub fn from_fn(
        dim: usize,
        log_unnorm: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        log_z: Option<f64>,
    ) -> Self {
        Self::new(FnDensity { dim, f: log_unnorm }, log_z)
    }

    /// Normalized diagonal Gaussian target.
    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Ok(Self::new(DiagGaussianDensity::new(mean, var)?, Some(0.0)))
    }

    /// Same density multiplied by the constant `c > 0`; `log_z` shifts by `ln c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::validation(format!("scale must be positive, got {c}")));
        }
        Ok(TargetDensity {
            inner: Arc::clone(&self.inner),
            log_z: self.log_z.map(|z| z + c.ln()),
            log_scale: self.log_scale + c.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn log_z(&self) -> Option<f64> {
        self.log_z
    }

    pub fn log_unnorm(&self, x: &[f64]) -> f64 {
        self.inner.log_unnorm(x) + self.log_scale
    }

    pub fn grad_log_unnorm(&self, x: &[f64], grad: &mut [f64]) {
        self.inner.grad_log_unnorm(x, grad)
    }

    pub fn log_unnorm_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.inner.log_unnorm_and_grad(x, grad) + self.log_scale
    }
}

struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Clone, Debug)]
pub struct DiagGaussianDensity {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussianDensity {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::validation("gaussian mean/variance lengths differ or are empty"));
        }
        if var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("gaussian variances must be positive"));
        }
        Ok(DiagGaussianDensity { mean, var })
    }
}

impl LogDensity for DiagGaussianDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((&x, &m), &v)| normal_log_pdf(x, m, v))
            .sum()
    }

    fn grad_log_unnorm(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..x.len() {
            grad[i] = -(x[i] - self.mean[i]) / self.var[i];
        }
    }
}

/// One-dimensional Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GmmSpec {
    /// Equal-weight mixture of four modes at −12, −6, 0, 6 with variance 0.64.
    pub fn four_modes() -> Self {
        GmmSpec {
            weights: vec![0.25; 4],
            means: vec![-12.0, -6.0, 0.0, 6.0],
            variances: vec![0.64; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::validation(
                "gmm weights, means and variances must be non-empty and equally long",
            ));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::validation("gmm weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("gmm weights sum to {total}, not 1")));
        }
        if self.variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("gmm variances must be positive"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::validation("gmm means must be finite"));
        }
        Ok(())
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| w.ln() + normal_log_pdf(x, m, v))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| w * normal_cdf(x, m, v.sqrt()))
            .sum()
    }

    /// Parses `key = v1, v2, ...` lines for `weights`, `means` and `variances`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut weights = None;
        let mut means = None;
        let mut variances = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| {
                    Error::validation(format!("line {}: expected `key = values`", lineno + 1))
                })?;
            let values = value
                .split(',')
                .map(|v| v.trim())
                .filter(|v| !v.is_empty())
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::validation(format!("line {}: `{v}` is not a number", lineno + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match key.trim() {
                "weights" => weights = Some(values),
                "means" => means = Some(values),
                "variances" => variances = Some(values),
                other => {
                    return Err(Error::validation(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        let missing = |name: &str| Error::validation(format!("gmm config is missing `{name}`"));
        let spec = GmmSpec {
            weights: weights.ok_or_else(|| missing("weights"))?,
            means: means.ok_or_else(|| missing("means"))?,
            variances: variances.ok_or_else(|| missing("variances"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_config(&text)
    }
}

struct GmmDensity(GmmSpec);

impl LogDensity for GmmDensity {
    fn dim(&self) -> usize {
        1
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        self.0.log_pdf(x[0])
    }

    fn grad_log_unnorm(&self, x: &[f64], grad: &mut [f64]) {
        let spec = &self.0;
        let x = x[0];
        let log_terms: Vec<f64> = spec
            .weights
            .iter()
            .zip(&spec.means)
            .zip(&spec.variances)
            .map(|((&w, &m), &v)| w.ln() + normal_log_pdf(x, m, v))
            .collect();
        let lse = log_sum_exp(&log_terms);
        grad[0] = log_terms
            .iter()
            .zip(&spec.means)
            .zip(&spec.variances)
            .map(|((&lt, &m), &v)| (lt - lse).exp() * (m - x) / v)
            .sum();
    }
}

/// Normalized 1-D mixture target (`log_z = 0`).
pub fn make_gmm_target(spec: &GmmSpec) -> Result<TargetDensity> {
    spec.validate()?;
    Ok(TargetDensity::new(GmmDensity(spec.clone()), Some(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    DiagGaussian,
    /// Independent location-scale Student-t per coordinate with fixed `nu`.
    StudentT { nu: f64 },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::DiagGaussian => write!(f, "diag-gaussian"),
            Family::StudentT { nu } => write!(f, "student-t({nu})"),
        }
    }
}

/// Row-major `rows × dim` matrix of sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "sample buffer of length {} does not divide into rows of {dim}",
                data.len()
            )));
        }
        Ok(SampleMatrix { dim, data })
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        SampleMatrix {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::validation("rows have differing lengths"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// First coordinate of every row.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }
}

/// Points drawn by [`VariationalDist::sample_reparam`] together with the base
/// noise that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ReparamSample {
    pub points: SampleMatrix,
    pub base_noise: SampleMatrix,
}

/// Variational distribution `q_θ` with `θ = (μ, log σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalDist {
    family: Family,
    mu: Vec<f64>,
    log_var: Vec<f64>,
}

impl VariationalDist {
    pub fn new(family: Family, mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != log_var.len() {
            return Err(Error::validation("mu and log_var must be non-empty and equally long"));
        }
        if let Family::StudentT { nu } = family {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::validation(format!("degrees of freedom must be positive, got {nu}")));
            }
        }
        if mu.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::validation("mu and log_var must be finite"));
        }
        Ok(VariationalDist {
            family,
            mu,
            log_var,
        })
    }

    pub fn gaussian(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        Self::new(Family::DiagGaussian, mu, log_var)
    }

    pub fn student_t(nu: f64, mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        Self::new(Family::StudentT { nu }, mu, log_var)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn sigma(&self, i: usize) -> f64 {
        (0.5 * self.log_var[i]).exp()
    }

    /// Same family with replaced parameters. Lengths must match.
    pub fn with_params(&self, mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != self.dim() || log_var.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: mu.len().max(log_var.len()),
            });
        }
        Self::new(self.family, mu, log_var)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn log_q(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_q_unchecked(x))
    }

    pub(crate) fn log_q_unchecked(&self, x: &[f64]) -> f64 {
        let half_log_var: f64 = 0.5 * self.log_var.iter().sum::<f64>();
        let d = self.dim() as f64;
        match self.family {
            Family::DiagGaussian => {
                let quad: f64 = x
                    .iter()
                    .zip(&self.mu)
                    .zip(&self.log_var)
                    .map(|((&x, &m), &lv)| (x - m) * (x - m) * (-lv).exp())
                    .sum();
                -d * HALF_LN_2PI - half_log_var - 0.5 * quad
            }
            Family::StudentT { nu } => {
                let tail: f64 = (0..self.dim())
                    .map(|i| {
                        let z = (x[i] - self.mu[i]) / self.sigma(i);
                        (z * z / nu).ln_1p()
                    })
                    .sum();
                d * student_t_log_norm(nu) - half_log_var - 0.5 * (nu + 1.0) * tail
            }
        }
    }

    /// Derivatives of `log q_θ(x)` with respect to `(μ, log σ²)` holding `x` fixed.
    pub(crate) fn score(&self, x: &[f64], d_mu: &mut [f64], d_log_var: &mut [f64]) {
        for i in 0..self.dim() {
            let sigma = self.sigma(i);
            let z = (x[i] - self.mu[i]) / sigma;
            let (dz_weight, z2_term) = match self.family {
                Family::DiagGaussian => (z, z * z),
                Family::StudentT { nu } => {
                    let s = (nu + 1.0) / (nu + z * z);
                    (s * z, s * z * z)
                }
            };
            d_mu[i] = dz_weight / sigma;
            d_log_var[i] = -0.5 + 0.5 * z2_term;
        }
    }

    /// CDF of a one-dimensional distribution.
    pub fn cdf_1d(&self, x: f64) -> f64 {
        let z = (x - self.mu[0]) / self.sigma(0);
        match self.family {
            Family::DiagGaussian => normal_cdf(z, 0.0, 1.0),
            Family::StudentT { nu } => student_t_cdf(z, nu),
        }
    }

    pub fn draw_base_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::DiagGaussian => rng.sample(StandardNormal),
            Family::StudentT { nu } => {
                let z: f64 = rng.sample(StandardNormal);
                let chi2 = ChiSquared::new(nu).expect("nu validated positive");
                z / (chi2.sample(rng) / nu).sqrt()
            }
        }
    }

    /// Maps standardized noise through `x = μ + σ ⊙ ε`.
    pub fn transform(&self, noise: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = self.mu[i] + self.sigma(i) * noise[i];
        }
    }

    pub fn points_from_noise(&self, noise: &SampleMatrix) -> Result<SampleMatrix> {
        if noise.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: noise.dim(),
            });
        }
        let mut points = SampleMatrix::with_capacity(self.dim(), noise.rows());
        let mut x = vec![0.0; self.dim()];
        for eps in noise.iter_rows() {
            self.transform(eps, &mut x);
            points.push_row(&x);
        }
        Ok(points)
    }

    pub fn sample_base_noise<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<SampleMatrix> {
        if count == 0 {
            return Err(Error::validation("sample count must be at least 1"));
        }
        let data = (0..count * self.dim())
            .map(|_| self.draw_base_noise(rng))
            .collect();
        SampleMatrix::new(self.dim(), data)
    }

    pub fn sample_reparam<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<ReparamSample> {
        let base_noise = self.sample_base_noise(rng, count)?;
        let points = self.points_from_noise(&base_noise)?;
        Ok(ReparamSample { points, base_noise })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{trapezoid, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;
    use std::f64::consts::PI;

    #[test]
    fn gmm_density_at_zero_is_dominated_by_central_mode() {
        let target = make_gmm_target(&GmmSpec::four_modes()).unwrap();
        let expected = 0.25 * normal_log_pdf(0.0, 0.0, 0.64).exp();
        let got = target.log_unnorm(&[0.0]).exp();
        assert!((got - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn single_component_is_standard_normal() {
        let spec = GmmSpec {
            weights: vec![1.0],
            means: vec![0.0],
            variances: vec![1.0],
        };
        let t = make_gmm_target(&spec).unwrap();
        assert!((t.log_unnorm(&[0.0]) + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn gmm_integrates_to_one() {
        let t = make_gmm_target(&GmmSpec::four_modes()).unwrap();
        let g = Grid::new(-20.0, 20.0, 100_000);
        let ys: Vec<f64> = g.nodes().map(|x| t.log_unnorm(&[x]).exp()).collect();
        assert!((trapezoid(&ys, g.step()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gmm_modes_are_local_maxima() {
        let t = make_gmm_target(&GmmSpec::four_modes()).unwrap();
        for m in [-12.0, -6.0, 0.0, 6.0] {
            let c = t.log_unnorm(&[m]);
            assert!(c > t.log_unnorm(&[m - 0.01]));
            assert!(c > t.log_unnorm(&[m + 0.01]));
        }
    }

    #[test]
    fn gmm_gradient_matches_finite_differences() {
        let t = make_gmm_target(&GmmSpec::four_modes()).unwrap();
        for &x in &[-13.0, -7.7, -3.0, 0.4, 9.0] {
            let mut g = [0.0];
            t.grad_log_unnorm(&[x], &mut g);
            let h = 1e-6;
            let fd = (t.log_unnorm(&[x + h]) - t.log_unnorm(&[x - h])) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn invalid_gmm_specs_are_rejected() {
        let mut s = GmmSpec::four_modes();
        s.weights[0] = 0.3;
        assert!(matches!(make_gmm_target(&s), Err(Error::Validation(_))));
        let mut s = GmmSpec::four_modes();
        s.variances[2] = 0.0;
        assert!(make_gmm_target(&s).is_err());
        let mut s = GmmSpec::four_modes();
        s.means.pop();
        assert!(make_gmm_target(&s).is_err());
    }

    #[test]
    fn gmm_config_file_parses() {
        let text = "# four modes\nweights = 0.25, 0.25, 0.25, 0.25\nmeans = -12, -6, 0, 6\nvariances = 0.64,0.64,0.64,0.64\n";
        assert_eq!(GmmSpec::parse_config(text).unwrap(), GmmSpec::four_modes());
        assert!(GmmSpec::parse_config("weights = 1\nmeans = 0\n").is_err());
        assert!(GmmSpec::parse_config("weights = 1\nmeans = x\nvariances = 1").is_err());
    }

    #[test]
    fn standard_gaussian_log_q_at_origin() {
        for dim in 1..4 {
            let q = VariationalDist::gaussian(vec![0.0; dim], vec![0.0; dim]).unwrap();
            let v = q.log_q(&vec![0.0; dim]).unwrap();
            assert!((v + 0.5 * dim as f64 * (2.0 * PI).ln()).abs() < 1e-13);
        }
    }

    #[test]
    fn student_t_log_q_at_origin() {
        let q = VariationalDist::student_t(10.0, vec![0.0], vec![0.0]).unwrap();
        let expected = ln_gamma(5.5) - ln_gamma(5.0) - 0.5 * (10.0 * PI).ln();
        assert!((q.log_q(&[0.0]).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn log_q_is_shift_invariant() {
        for family in [Family::DiagGaussian, Family::StudentT { nu: 10.0 }] {
            let c = 3.7;
            let d = -1.3;
            let q0 = VariationalDist::new(family, vec![0.0], vec![0.4]).unwrap();
            let qc = VariationalDist::new(family, vec![c], vec![0.4]).unwrap();
            let a = q0.log_q(&[d]).unwrap();
            let b = qc.log_q(&[c + d]).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn log_q_rejects_wrong_dimension() {
        let q = VariationalDist::gaussian(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            q.log_q(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn log_q_normalizes_on_grid() {
        for family in [Family::DiagGaussian, Family::StudentT { nu: 10.0 }] {
            let q = VariationalDist::new(family, vec![0.5], vec![0.0]).unwrap();
            let g = Grid::new(-400.0, 400.0, 800_001);
            let ys: Vec<f64> = g.nodes().map(|x| q.log_q(&[x]).unwrap().exp()).collect();
            assert!((trapezoid(&ys, g.step()) - 1.0).abs() < 1e-6, "{family}");
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        for family in [Family::DiagGaussian, Family::StudentT { nu: 10.0 }] {
            let q = VariationalDist::new(family, vec![0.3, -1.0], vec![0.2, -0.5]).unwrap();
            let x = [1.1, -2.0];
            let (mut dm, mut dl) = ([0.0; 2], [0.0; 2]);
            q.score(&x, &mut dm, &mut dl);
            let h = 1e-6;
            for i in 0..2 {
                let mut mu = q.mu().to_vec();
                mu[i] += h;
                let up = q.with_params(mu.clone(), q.log_var().to_vec()).unwrap().log_q(&x).unwrap();
                mu[i] -= 2.0 * h;
                let down = q.with_params(mu, q.log_var().to_vec()).unwrap().log_q(&x).unwrap();
                assert!((dm[i] - (up - down) / (2.0 * h)).abs() < 1e-7);
                let mut lv = q.log_var().to_vec();
                lv[i] += h;
                let up = q.with_params(q.mu().to_vec(), lv.clone()).unwrap().log_q(&x).unwrap();
                lv[i] -= 2.0 * h;
                let down = q.with_params(q.mu().to_vec(), lv).unwrap().log_q(&x).unwrap();
                assert!((dl[i] - (up - down) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn degenerate_scale_collapses_to_mean() {
        let q = VariationalDist::gaussian(vec![1.5, -2.0], vec![-50.0, -50.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = q.sample_reparam(&mut rng, 20).unwrap();
        for row in s.points.iter_rows() {
            assert!((row[0] - 1.5).abs() < 1e-9 && (row[1] + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let q = VariationalDist::student_t(10.0, vec![0.0], vec![0.0]).unwrap();
        let a = q.sample_reparam(&mut ChaCha8Rng::seed_from_u64(7), 3).unwrap();
        let b = q.sample_reparam(&mut ChaCha8Rng::seed_from_u64(7), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_sample_mean_converges() {
        let q = VariationalDist::gaussian(vec![2.0], vec![0.0]).unwrap();
        let s = q.sample_reparam(&mut ChaCha8Rng::seed_from_u64(11), 100_000).unwrap();
        let mean = s.points.as_slice().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 2.0).abs() < 0.02);
    }

    #[test]
    fn shifting_mu_shifts_every_point() {
        let q = VariationalDist::student_t(10.0, vec![0.0, 1.0], vec![0.3, -0.2]).unwrap();
        let s = q.sample_reparam(&mut ChaCha8Rng::seed_from_u64(3), 50).unwrap();
        let delta = 0.75;
        let moved = q
            .with_params(vec![delta, 1.0 + delta], q.log_var().to_vec())
            .unwrap()
            .points_from_noise(&s.base_noise)
            .unwrap();
        for (a, b) in s.points.iter_rows().zip(moved.iter_rows()) {
            assert!((b[0] - a[0] - delta).abs() < 1e-12);
            assert!((b[1] - a[1] - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_is_an_error() {
        let q = VariationalDist::gaussian(vec![0.0], vec![0.0]).unwrap();
        assert!(q.sample_reparam(&mut ChaCha8Rng::seed_from_u64(0), 0).is_err());
    }

    #[test]
    fn scaling_shifts_log_density_uniformly() {
        let t = make_gmm_target(&GmmSpec::four_modes()).unwrap();
        let s = t.scaled(10.0).unwrap();
        for &x in &[-9.0, 0.1, 4.0] {
            assert!((s.log_unnorm(&[x]) - t.log_unnorm(&[x]) - 10f64.ln()).abs() < 1e-12);
        }
        assert!((s.log_z().unwrap() - 10f64.ln()).abs() < 1e-15);
    }
}
