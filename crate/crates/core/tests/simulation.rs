use psppi_core::propensity::{fit_mle, MleOptions};
use psppi_core::simulation::{
    assign_patterns, correct_spec, generate_full_data, run_replicate, run_sweep_replicate, simulate_dataset,
    stream_rng, synth_predictions, truth_model, SimConfig,
};
use psppi_core::Method;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(n: usize) -> SimConfig {
    SimConfig { n, ..SimConfig::default() }
}

fn column(data: &[f64], j: usize) -> Vec<f64> {
    data.chunks_exact(5).map(|r| r[j]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn auxiliary_correlation_matches_rho() {
    let c = cfg(100_000);
    let data = generate_full_data(&c, &mut ChaCha8Rng::seed_from_u64(11));
    let (z1, z2) = (column(&data, 3), column(&data, 4));
    let (m1, m2) = (mean(&z1), mean(&z2));
    let cov = z1.iter().zip(&z2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / (z1.len() - 1) as f64;
    let corr = cov / (var(&z1) * var(&z2)).sqrt();
    assert!((corr - 0.4).abs() < 0.01, "corr {corr}");
    assert!((var(&z1).sqrt() - 0.2).abs() < 0.005);
}

#[test]
fn truth_probabilities_at_zero_covariates() {
    let pi = truth_model().evaluate(&[0.0; 5]).unwrap();
    let expected = [0.268941, 0.141851, 0.268941, 0.320266];
    for (p, e) in pi.iter().zip(expected) {
        assert!((p - e).abs() < 5e-7, "{pi:?}");
    }
}

#[test]
fn pattern_frequencies_at_fixed_covariates() {
    let n = 100_000;
    let full = vec![0.0; n * 5];
    let ds = assign_patterns(&full, &truth_model(), &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let sizes = ds.pattern_sizes();
    let y_only = ds.registry().find(&[false, true, true, true, true]).unwrap();
    let freq = sizes[y_only] as f64 / n as f64;
    assert!((freq - 0.268941).abs() < 0.005, "freq {freq}, sizes {sizes:?}");
    assert!((ds.n_complete() as f64 / n as f64 - 0.320266).abs() < 0.005);
}

#[test]
fn prediction_error_moments() {
    let c = cfg(50_000);
    let full = generate_full_data(&c, &mut ChaCha8Rng::seed_from_u64(13));
    let oracle =
        synth_predictions(&c, &full, 1.0, 0.5, &mut ChaCha8Rng::seed_from_u64(14), &mut ChaCha8Rng::seed_from_u64(15));
    let err: Vec<f64> = (0..c.n).map(|i| oracle.get(i, 0).unwrap() - full[i * 5]).collect();
    // Exponential bias with mean 0.5 plus unit normal noise.
    assert!((mean(&err) - 0.5).abs() < 0.02, "mean {}", mean(&err));
    assert!((var(&err) - 1.25).abs() < 0.05, "var {}", var(&err));
    assert!(oracle.get(0, 3).is_none());
}

#[test]
fn mle_recovers_truth_within_three_standard_errors() {
    let data = simulate_dataset(&cfg(50_000), 0).unwrap();
    let fit = fit_mle(&correct_spec(), &data.dataset, &MleOptions::default()).unwrap();
    let se = fit.standard_errors().unwrap();
    let truth = truth_model();
    for (j, (w, t)) in fit.coefficients().iter().zip(truth.coefficients().iter()).enumerate() {
        assert!((w - t).abs() <= 3.0 * se[j], "coefficient {j}: {w} vs {t} (se {})", se[j]);
    }
    let path = &fit.mle_info().unwrap().loglik_path;
    assert!(path.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn replicates_are_reproducible() {
    let c = cfg(800);
    let a = run_replicate(&c, 3);
    let b = run_replicate(&c, 3);
    assert_eq!(a.pattern_sizes, b.pattern_sizes);
    assert_eq!(a.estimates, b.estimates);
    let other = stream_rng(c.seed, 4, 0);
    assert_ne!(other, stream_rng(c.seed, 3, 0));
}

#[test]
fn prediction_free_methods_ignore_prediction_settings() {
    let c = cfg(800);
    let reps = run_sweep_replicate(&c, 2, &[(0.0, 0.0), (1.0, 0.5), (2.0, 0.0)]);
    for m in [Method::Cca, Method::Wcca] {
        let first = reps[0].estimate(m).unwrap();
        for r in &reps[1..] {
            assert_eq!(r.estimate(m).unwrap(), first, "{m}");
        }
    }
    assert_ne!(reps[0].estimate(Method::Psppi), reps[1].estimate(Method::Psppi));
}
