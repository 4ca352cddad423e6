use fplsr::ffrm::FitMethod;
use fplsr::simlab::{
    draw_error_coefficients, gen_dataset, run_experiment, run_replication, ExperimentConfig, SimConfig, Stream,
};

#[test]
fn error_coefficients_have_banded_covariance() {
    let (n, k, rho) = (100_000, 10, 4.0);
    let e = draw_error_coefficients(n, rho, k, Stream::new(99, 0)).unwrap();
    for a in 0..k {
        for b in 0..k {
            let cov = e.column(a).dot(&e.column(b)) / n as f64;
            let want = rho * 0.5f64.powi((a as i32 - b as i32).abs());
            assert!((cov - want).abs() < 0.05, "({a},{b}): {cov} vs {want}");
        }
    }
}

#[test]
fn predictor_mean_follows_mean_function() {
    let d = gen_dataset(10_000, 1.0, 25, 10, Stream::new(3, 0)).unwrap();
    for (j, s) in d.s.iter().enumerate() {
        let mean = d.x.column(j).mean();
        let want = (2.0 * s).exp().cos() - 3.0 * s;
        assert!((mean - want).abs() < 0.05, "s={s}: {mean} vs {want}");
    }
}

#[test]
fn replications_are_reproducible_and_nondegenerate() {
    let mut cfg = SimConfig::new(0.5, 10, 17);
    cfg.mc = 1;
    let a = run_replication(&cfg, 0).unwrap();
    let b = run_replication(&cfg, 0).unwrap();
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(x.amse.to_bits(), y.amse.to_bits());
        assert_eq!(x.amse_p.to_bits(), y.amse_p.to_bits());
    }
    for o in &a.outcomes {
        assert!(o.failure.is_none(), "{:?}", o.failure);
        assert!(o.amse_p.is_finite() && o.amse_p > 0.0);
        assert!(o.amse.is_finite() && o.amse > 0.0);
    }
}

#[test]
fn noiseless_data_is_nearly_interpolated() {
    let mut cfg = SimConfig::new(1e-8, 10, 5);
    cfg.obs_noise = 0.0;
    cfg.h = 10;
    cfg.methods = vec![FitMethod::Simpls];
    let r = run_replication(&cfg, 0).unwrap();
    let o = &r.outcomes[0];
    assert!(o.amse < 1e-2, "AMSE {}", o.amse);
}

fn strip_timing(cfg: &ExperimentConfig) -> Vec<(FitMethod, usize, u64, u64, u64)> {
    run_experiment(cfg)
        .unwrap()
        .losses
        .iter()
        .map(|l| (l.method, l.k, l.rep, l.amse.to_bits(), l.amse_p.to_bits()))
        .collect()
}

#[test]
fn single_replication_experiment_equals_replication() {
    let cfg = ExperimentConfig::new(vec![1.0], vec![10], 1, 23);
    let res = run_experiment(&cfg).unwrap();
    let cell = &cfg.cells().unwrap()[0];
    let rep = run_replication(cell, 0).unwrap();
    for (rec, o) in res.records.iter().zip(&rep.outcomes) {
        assert_eq!(rec.mean_amse, Some(o.amse));
        assert_eq!(rec.mean_amse_p, Some(o.amse_p));
        assert_eq!(rec.se_amse, Some(0.0));
        assert_eq!(rec.failures, 0);
    }
}

#[test]
fn adding_replications_keeps_earlier_ones() {
    let short = strip_timing(&ExperimentConfig::new(vec![0.5], vec![10], 3, 8));
    let long = strip_timing(&ExperimentConfig::new(vec![0.5], vec![10], 6, 8));
    for row in &short {
        assert!(long.contains(row));
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = ExperimentConfig::new(vec![0.5, 2.0], vec![10, 20], 3, 12);
    cfg.threads = Some(1);
    let serial = strip_timing(&cfg);
    cfg.threads = Some(4);
    assert_eq!(serial, strip_timing(&cfg));
}

#[test]
fn pls_survives_large_bases() {
    let cfg = ExperimentConfig::new(vec![1.0], vec![40], 3, 77);
    let res = run_experiment(&cfg).unwrap();
    for r in res.records.iter().filter(|r| r.method != FitMethod::Ridge) {
        assert_eq!(r.failures, 0);
        assert!(r.mean_amse_p.unwrap() > 0.0);
        assert!(r.se_amse_p.unwrap() >= 0.0);
    }
}
