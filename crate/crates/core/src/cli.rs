//! Command-line front end: the mixture demo, the BNN benchmark and an
//! estimator self-check. Every output is a pure function of the parsed flags.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 for a failed run or a
//! failed self-check case.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bnn::{
    evaluate, fit_bnn, load_dataset, train_test_split, BnnRefineConfig, BnnTrainConfig, Standardizer,
};
use crate::distributions::{make_gmm_target, Family, GmmSpec, TargetDensity, VariationalDist};
use crate::divergence::{
    estimate_log_m, estimate_renyi, estimate_renyi_refined, quadrature_renyi_1d, DivergenceEstimate,
    KlDirection, WeightedBatch,
};
use crate::drs::{empirical_pdf, refine, select_t_low_dim, select_t_quantile, RefinedSampleSet, RefinementConfig, ThresholdRule};
use crate::error::{Error, Result};
use crate::numerics::{mean_and_sd, normal_log_pdf, student_t_log_pdf, Grid};
use crate::rdvi::{evaluate_with_noise, fit, loss_with_noise, Objective, OptimizerConfig};
use crate::streams::{substream, Substream};

#[derive(Debug, Parser)]
#[command(name = "alpha-drs", version, about = "Rényi-divergence VI with rejection-sampling refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a Student-t to the four-mode mixture, refine it, and write the
    /// divergence table and histograms of refined samples.
    GmmDemo(GmmDemoConfig),
    /// Train, refine and evaluate the Bayesian neural network on a regression table.
    Bnn(BnnConfig),
    /// Check the Monte-Carlo estimators against quadrature and the gradients
    /// against finite differences.
    DivergenceCheck(CheckConfig),
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn non_negative_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite non-negative number, got {v}"))
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

fn kl_direction(s: &str) -> std::result::Result<KlDirection, String> {
    match s {
        "inclusive" => Ok(KlDirection::Inclusive),
        "exclusive" => Ok(KlDirection::Exclusive),
        other => Err(format!("expected inclusive or exclusive, got `{other}`")),
    }
}

#[derive(Clone, Debug, Args)]
pub struct GmmDemoConfig {
    /// Comma-separated α values, one table row each.
    #[arg(long, value_delimiter = ',', default_value = "2,11,16,21", value_parser = positive_f64, allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Proposal samples behind each divergence estimate.
    #[arg(long, default_value_t = 3000)]
    pub samples: usize,
    /// Monte-Carlo samples per gradient step.
    #[arg(long, default_value_t = 100)]
    pub fit_samples: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2, value_parser = positive_f64, allow_hyphen_values = true)]
    pub step_size: f64,
    #[arg(long, default_value_t = ThresholdRule::LowDim)]
    pub t_rule: ThresholdRule,
    #[arg(long, default_value_t = 0.1, value_parser = unit_interval, allow_hyphen_values = true)]
    pub gamma: f64,
    /// Softmin temperature of the acceptance function; `inf` gives the hard rule.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64, allow_hyphen_values = true)]
    pub softmin_t: f64,
    /// Accepted samples to collect for the histogram.
    #[arg(long, default_value_t = 10_000)]
    pub accept: usize,
    #[arg(long, default_value_t = 90)]
    pub bins: usize,
    /// Mixture definition file (`weights = ...`, `means = ...`, `variances = ...`).
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl Default for GmmDemoConfig {
    fn default() -> Self {
        GmmDemoConfig {
            alpha: vec![2.0, 11.0, 16.0, 21.0],
            seed: 0,
            samples: 3000,
            fit_samples: 100,
            iters: 5000,
            step_size: 1e-2,
            t_rule: ThresholdRule::LowDim,
            gamma: 0.1,
            softmin_t: 1.0,
            accept: 10_000,
            bins: 90,
            gmm: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct BnnConfig {
    /// Whitespace- or comma-separated numeric table; the last column is the target.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Zero-based target column, when it is not the last.
    #[arg(long)]
    pub target_column: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2", value_parser = positive_f64, allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    /// First seed; runs use `seed, seed+1, ...`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.1, value_parser = unit_interval, allow_hyphen_values = true)]
    pub gamma: f64,
    /// Weight samples per gradient step.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 3000)]
    pub iters: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-2, value_parser = positive_f64, allow_hyphen_values = true)]
    pub step_size: f64,
    /// Weight samples used for evaluation, and accepted samples to collect.
    #[arg(long, default_value_t = 100)]
    pub eval_samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub pilot: usize,
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64, allow_hyphen_values = true)]
    pub softmin_t: f64,
    /// Objective used at α = 1.
    #[arg(long, default_value = "exclusive", value_parser = kl_direction)]
    pub kl: KlDirection,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl BnnConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        BnnConfig {
            dataset: dataset.into(),
            target_column: None,
            alpha: vec![1.0, 2.0],
            seed: 0,
            runs: 1,
            gamma: 0.1,
            samples: 100,
            iters: 3000,
            batch: 32,
            hidden: 50,
            step_size: 1e-2,
            eval_samples: 100,
            pilot: 1000,
            softmin_t: 1.0,
            kl: KlDirection::Exclusive,
            test_fraction: 0.1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct CheckConfig {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Proposal samples per Monte-Carlo estimate.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Allowed Monte-Carlo deviation, in standard errors.
    #[arg(long, default_value_t = 3.0, value_parser = non_negative_f64, allow_hyphen_values = true)]
    pub tolerance: f64,
    /// Allowed relative error of gradients against finite differences.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative_f64, allow_hyphen_values = true)]
    pub fd_tolerance: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 0,
            samples: 20_000,
            tolerance: 3.0,
            fd_tolerance: 1e-4,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::GmmDemo(cfg) => cmd_gmm_demo(cfg).map(|report| {
            print!("{}", report.table_csv());
            true
        }),
        Command::Bnn(cfg) => cmd_bnn(cfg).map(|report| {
            print!("{}", report.to_csv());
            true
        }),
        Command::DivergenceCheck(cfg) => cmd_divergence_check(cfg).map(|report| {
            for case in &report.cases {
                println!("{case}");
            }
            report.all_passed()
        }),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `2` → `2`, `0.5` → `0.5`; used in file names.
fn alpha_label(alpha: f64) -> String {
    format!("{alpha}")
}

#[derive(Clone, Debug)]
pub struct GmmRow {
    pub alpha: f64,
    pub q: VariationalDist,
    pub d_pq: DivergenceEstimate,
    pub d_pr: DivergenceEstimate,
    pub threshold: f64,
    pub log_m: f64,
    pub refined: RefinedSampleSet,
}

#[derive(Clone, Debug)]
pub struct GmmReport {
    pub rows: Vec<GmmRow>,
    pub files: Vec<PathBuf>,
}

pub const GMM_TABLE_HEADER: &str =
    "alpha,d_pq,d_pq_se,d_pr,d_pr_se,acceptance_pct,threshold,log_m,mu,log_var";

impl GmmReport {
    pub fn table_csv(&self) -> String {
        let mut out = format!("{GMM_TABLE_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.3},{:.6},{:.6},{:.6},{:.6}",
                r.alpha,
                r.d_pq.value,
                r.d_pq.std_error,
                r.d_pr.value,
                r.d_pr.std_error,
                100.0 * r.refined.acceptance_rate,
                r.threshold,
                r.log_m,
                r.q.mu()[0],
                r.q.log_var()[0],
            );
        }
        out
    }
}

fn gmm_spec(cfg: &GmmDemoConfig) -> Result<GmmSpec> {
    match &cfg.gmm {
        Some(path) => GmmSpec::from_file(path),
        None => Ok(GmmSpec::four_modes()),
    }
}

/// Starting point of every mixture fit: `t(10)` centred at 0 with variance 25.
pub fn gmm_initial_q() -> VariationalDist {
    VariationalDist::student_t(10.0, vec![0.0], vec![25f64.ln()]).expect("valid constants")
}

/// Fit, threshold selection, divergence estimates and refinement for one α.
pub fn gmm_row(cfg: &GmmDemoConfig, spec: &GmmSpec, alpha: f64) -> Result<GmmRow> {
    if alpha == 1.0 {
        return Err(Error::validation("the mixture table needs α ≠ 1"));
    }
    let target = make_gmm_target(spec)?;
    let log_z = target.log_z().unwrap_or(0.0);
    let opt = OptimizerConfig {
        step_size: cfg.step_size,
        iterations: cfg.iters,
        samples_per_step: cfg.fit_samples,
        alpha,
        seed: cfg.seed,
        ..OptimizerConfig::default()
    };
    let q = fit(&target, &gmm_initial_q(), &opt)?.final_q;
    let batch = WeightedBatch::draw(&q, &target, &mut substream(cfg.seed, Substream::Eval), cfg.samples)?;
    let d_pq = estimate_renyi(alpha, &batch, log_z)?;
    let rc = match cfg.t_rule {
        ThresholdRule::LowDim => RefinementConfig::low_dim(alpha, select_t_low_dim(&d_pq)),
        ThresholdRule::Quantile => {
            RefinementConfig::quantile(alpha, select_t_quantile(batch.l_vals(), cfg.gamma)?, cfg.gamma)
        }
    }
    .with_softmin(cfg.softmin_t);
    let d_pr = estimate_renyi_refined(alpha, &batch, &rc, log_z)?;
    let refined = refine(&q, &target, &rc, &mut substream(cfg.seed, Substream::Refine), cfg.accept, None)?;
    Ok(GmmRow {
        alpha,
        q,
        d_pq,
        d_pr,
        threshold: rc.threshold,
        log_m: estimate_log_m(&batch),
        refined,
    })
}

pub const GMM_HIST_RANGE: (f64, f64) = (-25.0, 20.0);

/// Histogram of refined samples next to the target and proposal densities at bin centres.
pub fn gmm_histogram_csv(row: &GmmRow, spec: &GmmSpec, bins: usize) -> Result<String> {
    let xs = row.refined.accepted.column(0);
    let hist = empirical_pdf(&xs, bins, GMM_HIST_RANGE)?;
    let mut out = String::from("bin_left,bin_right,refined_density,target_density,proposal_density\n");
    for (i, c) in hist.centers().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.4},{:.4},{:.9},{:.9},{:.9}",
            hist.edges[i],
            hist.edges[i + 1],
            hist.density[i],
            spec.log_pdf(*c).exp(),
            row.q.log_q(&[*c])?.exp(),
        );
    }
    Ok(out)
}

/// Runs every α and writes `gmm_table.csv` plus one `gmm_hist_alpha<α>.csv` per row.
pub fn cmd_gmm_demo(cfg: &GmmDemoConfig) -> Result<GmmReport> {
    if cfg.alpha.is_empty() {
        return Err(Error::validation("no α values given"));
    }
    if cfg.samples < 2 || cfg.accept == 0 || cfg.bins == 0 {
        return Err(Error::validation("--samples must be ≥ 2 and --accept, --bins ≥ 1"));
    }
    let spec = gmm_spec(cfg)?;
    spec.validate()?;
    let mut report = GmmReport {
        rows: Vec::new(),
        files: Vec::new(),
    };
    for &alpha in &cfg.alpha {
        report.rows.push(gmm_row(cfg, &spec, alpha)?);
    }
    let table = cfg.out.join("gmm_table.csv");
    write_file(&table, &report.table_csv())?;
    report.files.push(table);
    for row in &report.rows {
        let path = cfg.out.join(format!("gmm_hist_alpha{}.csv", alpha_label(row.alpha)));
        write_file(&path, &gmm_histogram_csv(row, &spec, cfg.bins)?)?;
        report.files.push(path);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnRow {
    pub dataset: String,
    pub method: &'static str,
    pub alpha: f64,
    pub seed: u64,
    pub rmse: f64,
    pub test_ll: f64,
    /// Empirical acceptance rate of the refinement; `None` for the unrefined posterior.
    pub acceptance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnReport {
    pub rows: Vec<BnnRow>,
    pub runs: usize,
}

pub const BNN_HEADER: &str = "dataset,method,alpha,seed,rmse,test_ll,acceptance";
pub const METHOD_RDVI: &str = "rdvi";
pub const METHOD_DRS: &str = "alpha-drs";

/// Mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_and_sd(xs);
    (m, sd / (xs.len() as f64).sqrt())
}

impl BnnReport {
    /// Rows for one (method, α) pair, in run order.
    pub fn select(&self, method: &str, alpha: f64) -> Vec<&BnnRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.alpha == alpha)
            .collect()
    }

    /// One row per run, followed by `mean` and `stderr` rows per (method, α)
    /// when there is more than one run.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BNN_HEADER}\n");
        let acc = |a: Option<f64>| a.map_or(String::new(), |a| format!("{a:.4}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{}",
                r.dataset,
                r.method,
                r.alpha,
                r.seed,
                r.rmse,
                r.test_ll,
                acc(r.acceptance)
            );
        }
        if self.runs > 1 {
            let mut groups: Vec<(&str, f64, &str)> = Vec::new();
            for r in &self.rows {
                if !groups.iter().any(|g| g.0 == r.method && g.1 == r.alpha) {
                    groups.push((r.method, r.alpha, &r.dataset));
                }
            }
            for (method, alpha, dataset) in groups {
                let rows = self.select(method, alpha);
                let rmse: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
                let ll: Vec<f64> = rows.iter().map(|r| r.test_ll).collect();
                let accs: Vec<f64> = rows.iter().filter_map(|r| r.acceptance).collect();
                let (rm, rs) = mean_and_stderr(&rmse);
                let (lm, ls) = mean_and_stderr(&ll);
                let (am, as_) = if accs.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_and_stderr(&accs);
                    (Some(m), Some(s))
                };
                let _ = writeln!(out, "{dataset},{method},{alpha},mean,{rm:.6},{lm:.6},{}", acc(am));
                let _ = writeln!(out, "{dataset},{method},{alpha},stderr,{rs:.6},{ls:.6},{}", acc(as_));
            }
        }
        out
    }
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Both methods for one (α, seed) on a fixed dataset.
pub fn bnn_run(cfg: &BnnConfig, data: &crate::bnn::RegressionDataset, alpha: f64, seed: u64) -> Result<[BnnRow; 2]> {
    let split = train_test_split(data, cfg.test_fraction, &mut substream(seed, Substream::Split))?;
    let stats = Standardizer::fit(&split.train)?;
    let train = stats.apply(&split.train)?;
    let test = stats.apply(&split.test)?;
    let train_cfg = BnnTrainConfig {
        hidden: cfg.hidden,
        batch_size: cfg.batch,
        optimizer: OptimizerConfig {
            step_size: cfg.step_size,
            iterations: cfg.iters,
            samples_per_step: cfg.samples,
            alpha,
            seed,
            kl_direction: cfg.kl,
            ..OptimizerConfig::default()
        },
        ..BnnTrainConfig::default()
    };
    let fitted = fit_bnn(&train, &train_cfg)?;
    let post = fitted.posterior;
    let weights = post.sample_weights(cfg.eval_samples, &mut substream(seed, Substream::Eval))?;
    let plain = evaluate(&post.model, &weights, &test, &stats)?;
    let refine_cfg = BnnRefineConfig {
        alpha,
        gamma: cfg.gamma,
        n_accept_goal: cfg.eval_samples,
        softmin_t: cfg.softmin_t,
        pilot_draws: cfg.pilot,
        max_proposals: None,
    };
    let refined = crate::bnn::refine_bnn(&post, &train, &refine_cfg, &mut substream(seed, Substream::Refine))?;
    let drs = evaluate(&post.model, &refined.accepted, &test, &stats)?;
    let name = dataset_label(&cfg.dataset);
    Ok([
        BnnRow {
            dataset: name.clone(),
            method: METHOD_RDVI,
            alpha,
            seed,
            rmse: plain.rmse,
            test_ll: plain.avg_test_ll,
            acceptance: None,
        },
        BnnRow {
            dataset: name,
            method: METHOD_DRS,
            alpha,
            seed,
            rmse: drs.rmse,
            test_ll: drs.avg_test_ll,
            acceptance: Some(refined.acceptance_rate),
        },
    ])
}

/// Writes `bnn_<dataset>.csv` into the output directory.
pub fn cmd_bnn(cfg: &BnnConfig) -> Result<BnnReport> {
    if cfg.alpha.is_empty() || cfg.runs == 0 {
        return Err(Error::validation("need at least one α and one run"));
    }
    if !cfg.dataset.exists() {
        return Err(Error::validation(format!(
            "dataset file {} not found (pass --dataset with a numeric table, e.g. crates/core/data/housing.data)",
            cfg.dataset.display()
        )));
    }
    let data = load_dataset(&cfg.dataset, cfg.target_column)?;
    let mut report = BnnReport {
        rows: Vec::new(),
        runs: cfg.runs,
    };
    for &alpha in &cfg.alpha {
        for run in 0..cfg.runs {
            report.rows.extend(bnn_run(cfg, &data, alpha, cfg.seed + run as u64)?);
        }
    }
    let path = cfg.out.join(format!("bnn_{}.csv", dataset_label(&cfg.dataset)));
    write_file(&path, &report.to_csv())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckCase {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} ({})", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub cases: Vec<CheckCase>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

/// A one-dimensional target/proposal pair with a quadrature reference.
pub struct OraclePair {
    pub name: &'static str,
    pub alpha: f64,
    pub target: TargetDensity,
    pub log_p: Box<dyn Fn(f64) -> f64>,
    pub q: VariationalDist,
    /// Closed form, when one exists.
    pub exact: Option<f64>,
}

/// `D_α(N(m1, v1) ‖ N(m2, v2))`.
pub fn gaussian_renyi(alpha: f64, m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let va = alpha * v2 + (1.0 - alpha) * v1;
    0.5 * (v2 / v1).ln() + (v2 / va).ln() / (2.0 * (alpha - 1.0)) + alpha * (m1 - m2).powi(2) / (2.0 * va)
}

fn gaussian_pair(name: &'static str, alpha: f64, mp: f64, vp: f64, q: VariationalDist) -> OraclePair {
    let exact = match q.family() {
        Family::DiagGaussian => Some(gaussian_renyi(alpha, mp, vp, q.mu()[0], q.log_var()[0].exp())),
        Family::StudentT { .. } => None,
    };
    OraclePair {
        name,
        alpha,
        target: TargetDensity::gaussian(vec![mp], vec![vp]).expect("valid constants"),
        log_p: Box::new(move |x| normal_log_pdf(x, mp, vp)),
        q,
        exact,
    }
}

/// Six reference pairs: four Gaussian targets (three with closed forms), the
/// four-mode mixture, and a Student-t target.
pub fn oracle_pairs() -> Vec<OraclePair> {
    let g = |m: f64, v: f64| VariationalDist::gaussian(vec![m], vec![v.ln()]).expect("valid constants");
    let t = |m: f64, v: f64| VariationalDist::student_t(10.0, vec![m], vec![v.ln()]).expect("valid constants");
    let spec = GmmSpec::four_modes();
    let spec_for_pdf = spec.clone();
    let t5_scale: f64 = 1.5;
    vec![
        gaussian_pair("N(0,1) vs N(1,1), alpha=2", 2.0, 0.0, 1.0, g(1.0, 1.0)),
        gaussian_pair("N(0,1) vs N(0.5,2.25), alpha=0.5", 0.5, 0.0, 1.0, g(0.5, 2.25)),
        gaussian_pair("N(2,0.5) vs N(0,4), alpha=3", 3.0, 2.0, 0.5, g(0.0, 4.0)),
        gaussian_pair("N(0,1) vs t10(0.3,1.44), alpha=2", 2.0, 0.0, 1.0, t(0.3, 1.44)),
        OraclePair {
            name: "four-mode mixture vs t10(-3,81), alpha=2",
            alpha: 2.0,
            target: make_gmm_target(&spec).expect("valid constants"),
            log_p: Box::new(move |x| spec_for_pdf.log_pdf(x)),
            q: t(-3.0, 81.0),
            exact: None,
        },
        OraclePair {
            name: "t5(0,2.25) vs N(0.5,4), alpha=0.5",
            alpha: 0.5,
            target: TargetDensity::from_fn(
                1,
                move |x: &[f64]| student_t_log_pdf(x[0] / t5_scale, 5.0) - t5_scale.ln(),
                Some(0.0),
            ),
            log_p: Box::new(move |x| student_t_log_pdf(x / t5_scale, 5.0) - t5_scale.ln()),
            q: g(0.5, 4.0),
            exact: None,
        },
    ]
}

pub const ORACLE_GRID: Grid = Grid {
    lo: -80.0,
    hi: 80.0,
    points: 32_001,
};

/// Result of comparing one Monte-Carlo estimate with its quadrature reference.
#[derive(Clone, Debug)]
pub struct OracleComparison {
    pub name: &'static str,
    pub estimate: DivergenceEstimate,
    pub quadrature: f64,
    pub exact: Option<f64>,
}

pub fn compare_with_quadrature(pair: &OraclePair, samples: usize, seed: u64) -> Result<OracleComparison> {
    let batch = WeightedBatch::draw(&pair.q, &pair.target, &mut substream(seed, Substream::Eval), samples)?;
    let estimate = estimate_renyi(pair.alpha, &batch, pair.target.log_z().unwrap_or(0.0))?;
    let q = pair.q.clone();
    let quadrature = quadrature_renyi_1d(&pair.log_p, move |x| q.log_q_unchecked(&[x]), pair.alpha, ORACLE_GRID)?;
    Ok(OracleComparison {
        name: pair.name,
        estimate,
        quadrature,
        exact: pair.exact,
    })
}

/// Largest relative error between the analytic gradient and central
/// differences of the loss, with the base noise held fixed.
pub fn gradient_fd_error(
    q: &VariationalDist,
    target: &TargetDensity,
    objective: Objective,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let noise = q.sample_base_noise(&mut substream(seed, Substream::Fit), samples)?;
    let step = evaluate_with_noise(q, target, objective, &noise)?;
    let d = q.dim();
    let analytic: Vec<f64> = step.gradient.d_mu.iter().chain(&step.gradient.d_log_var).copied().collect();
    let params: Vec<f64> = q.mu().iter().chain(q.log_var()).copied().collect();
    let mut worst: f64 = 0.0;
    for k in 0..2 * d {
        let h = 1e-5 * params[k].abs().max(1.0);
        let at = |v: f64| -> Result<f64> {
            let mut p = params.clone();
            p[k] = v;
            let q2 = q.with_params(p[..d].to_vec(), p[d..].to_vec())?;
            loss_with_noise(&q2, target, objective, &noise)
        };
        let fd = (at(params[k] + h)? - at(params[k] - h)?) / (2.0 * h);
        let scale = analytic[k].abs().max(fd.abs()).max(1e-3);
        worst = worst.max((analytic[k] - fd).abs() / scale);
    }
    Ok(worst)
}

/// The ten (θ, α, seed) cases of the gradient check.
pub fn gradient_cases(seed: u64) -> Vec<(VariationalDist, Objective, u64)> {
    let mut rng = substream(seed, Substream::Split);
    let alphas = [0.5, 2.0, 11.0, 16.0, 21.0, 1.0, 3.0, 0.8, 2.0, 5.0];
    alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let mu = 6.0 * rng.random::<f64>() - 3.0;
            let log_var = 2.0 + 2.0 * rng.sample::<f64, _>(StandardNormal).clamp(-1.0, 1.0);
            let q = if i % 2 == 0 {
                VariationalDist::student_t(10.0, vec![mu], vec![log_var])
            } else {
                VariationalDist::gaussian(vec![mu], vec![log_var])
            }
            .expect("finite parameters");
            let objective = if alpha == 1.0 {
                Objective::Kl(KlDirection::Exclusive)
            } else {
                Objective::Renyi { alpha }
            };
            (q, objective, seed + i as u64)
        })
        .collect()
}

pub fn cmd_divergence_check(cfg: &CheckConfig) -> Result<CheckReport> {
    if cfg.samples < 2 {
        return Err(Error::validation("--samples must be at least 2"));
    }
    let mut report = CheckReport::default();
    for pair in oracle_pairs() {
        let c = compare_with_quadrature(&pair, cfg.samples, cfg.seed)?;
        let dev = (c.estimate.value - c.quadrature).abs();
        let mut passed = dev <= cfg.tolerance * c.estimate.std_error;
        let mut detail = format!(
            "mc={:.5} se={:.5} quad={:.6}",
            c.estimate.value, c.estimate.std_error, c.quadrature
        );
        if let Some(exact) = c.exact {
            passed &= (c.quadrature - exact).abs() < 1e-6;
            let _ = write!(detail, " exact={exact:.6}");
        }
        report.cases.push(CheckCase {
            name: format!("renyi {}", c.name),
            passed,
            detail,
        });
    }
    let target = make_gmm_target(&GmmSpec::four_modes())?;
    for (i, (q, objective, seed)) in gradient_cases(cfg.seed).into_iter().enumerate() {
        let err = gradient_fd_error(&q, &target, objective, 64, seed)?;
        report.cases.push(CheckCase {
            name: format!("gradient case {i} ({objective:?}, {})", q.family()),
            passed: err < cfg.fd_tolerance,
            detail: format!("max relative error {err:.2e}"),
        });
    }
    Ok(report)
}
