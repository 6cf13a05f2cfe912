use alpha_drs::cli::gmm_initial_q;
use alpha_drs::divergence::{estimate_log_m, estimate_renyi, quadrature_renyi_1d};
use alpha_drs::drs::{log_acceptance_prob, refine, select_t_pilot, RefinementConfig};
use alpha_drs::numerics::{ks_statistic, Grid};
use alpha_drs::rdvi::fit;
use alpha_drs::{make_gmm_target, GmmSpec, OptimizerConfig, TargetDensity, VariationalDist, WeightedBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn short_fit(target: &TargetDensity, alpha: f64) -> alpha_drs::FitTrace {
    let cfg = OptimizerConfig {
        iterations: 400,
        alpha,
        seed: 11,
        ..OptimizerConfig::default()
    };
    fit(target, &gmm_initial_q(), &cfg).unwrap()
}

#[test]
fn fit_does_not_depend_on_the_target_normalizer() {
    let target = make_gmm_target(&GmmSpec::four_modes()).unwrap();
    let c = 3f64.exp();
    for alpha in [0.5, 2.0] {
        let a = short_fit(&target, alpha);
        let b = short_fit(&target.scaled(c).unwrap(), alpha);
        let (mu_a, mu_b) = (a.final_q.mu()[0], b.final_q.mu()[0]);
        let (lv_a, lv_b) = (a.final_q.log_var()[0], b.final_q.log_var()[0]);
        assert!((mu_a - mu_b).abs() < 1e-9 && (lv_a - lv_b).abs() < 1e-9, "{mu_a} {mu_b} {lv_a} {lv_b}");
        // J shifts by α·ln c for α > 1; J/(α−1) by α/(α−1)·ln c below 1
        let shift = if alpha > 1.0 { alpha * 3.0 } else { alpha / (alpha - 1.0) * 3.0 };
        for (x, y) in a.objective.iter().zip(&b.objective) {
            assert!((y - x - shift).abs() < 1e-9);
        }
    }
}

/// CDF of `r ∝ q·a(·|T)` by cumulative trapezoid on a fine grid.
fn refined_cdf(q: &VariationalDist, target: &TargetDensity, t: f64, softmin_t: f64) -> impl Fn(f64) -> f64 {
    let grid = Grid::new(-120.0, 120.0, 240_001);
    let xs: Vec<f64> = grid.nodes().collect();
    let dens: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let lq = q.log_q(&[x]).unwrap();
            (lq + log_acceptance_prob(lq - target.log_unnorm(&[x]), t, softmin_t)).exp()
        })
        .collect();
    let h = grid.step();
    let mut cum = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
    }
    let total = *cum.last().unwrap();
    move |x: f64| {
        if x <= grid.lo {
            return 0.0;
        }
        if x >= grid.hi {
            return 1.0;
        }
        let k = ((x - grid.lo) / h) as usize;
        let frac = (x - xs[k]) / h;
        (cum[k] + frac * (cum[k + 1] - cum[k])) / total
    }
}

#[test]
fn accepted_samples_follow_the_refined_law() {
    let spec = GmmSpec::four_modes();
    let target = make_gmm_target(&spec).unwrap();
    let q = VariationalDist::student_t(10.0, vec![-3.0], vec![55f64.ln()]).unwrap();
    for (t, softmin) in [(-1.0, 1.0), (-0.5, f64::INFINITY), (0.5, 4.0)] {
        let rc = RefinementConfig::low_dim(2.0, t).with_softmin(softmin);
        let set = refine(&q, &target, &rc, &mut ChaCha8Rng::seed_from_u64(2), 10_000, None).unwrap();
        let cdf = refined_cdf(&q, &target, t, softmin);
        let ks = ks_statistic(&set.accepted.column(0), cdf);
        assert!(ks < 0.03, "T={t}, t={softmin}: KS {ks}");
        // acceptance-rate accounting
        assert_eq!(set.accepted.rows() as f64, (set.acceptance_rate * set.proposals_used as f64).round());
    }
}

#[test]
fn refinement_lowers_the_divergence_under_quadrature() {
    let spec = GmmSpec::four_modes();
    let target = make_gmm_target(&spec).unwrap();
    let q = VariationalDist::student_t(10.0, vec![-3.0], vec![55f64.ln()]).unwrap();
    let grid = Grid::new(-120.0, 120.0, 48_001);
    let s2 = spec.clone();
    let q2 = q.clone();
    for alpha in [0.5, 2.0, 11.0] {
        let d_q = quadrature_renyi_1d(|x| s2.log_pdf(x), |x| q2.log_q(&[x]).unwrap(), alpha, grid).unwrap();
        for t in [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0] {
            let log_r = |x: f64| {
                let lq = q.log_q(&[x]).unwrap();
                lq + log_acceptance_prob(lq - target.log_unnorm(&[x]), t, 1.0)
            };
            let d_r = quadrature_renyi_1d(|x| s2.log_pdf(x), log_r, alpha, grid).unwrap();
            assert!(d_r <= d_q + 1e-9, "alpha {alpha}, T {t}: {d_r} > {d_q}");
        }
    }
}

#[test]
fn log_m_estimate_is_a_lower_bound() {
    let spec = GmmSpec::four_modes();
    let target = make_gmm_target(&spec).unwrap();
    let q = VariationalDist::student_t(10.0, vec![-3.0], vec![55f64.ln()]).unwrap();
    let batch = WeightedBatch::draw(&q, &target, &mut ChaCha8Rng::seed_from_u64(4), 5000).unwrap();
    let sup = (0..=200_000)
        .map(|i| -100.0 + 200.0 * i as f64 / 200_000.0)
        .map(|x| spec.log_pdf(x) - q.log_q(&[x]).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let est = estimate_log_m(&batch);
    assert!(est <= sup + 1e-9 && est > sup - 0.1, "{est} vs {sup}");
    // D_α ≤ log M for every α
    let d = estimate_renyi(21.0, &batch, 0.0).unwrap();
    assert!(d.value <= sup);
}

#[test]
fn pilot_threshold_is_reproducible() {
    let target = TargetDensity::gaussian(vec![0.0], vec![1.0]).unwrap();
    let q = VariationalDist::gaussian(vec![0.5], vec![0.3]).unwrap();
    let a = select_t_pilot(&q, &target, 0.1, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = select_t_pilot(&q, &target, 0.1, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    let hi = select_t_pilot(&q, &target, 0.9, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(hi > a);
}
