mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use psppi_core::data::Coarsening;
use psppi_core::linalg::{self, Matrix, Vector};
use psppi_core::propensity::{PatternLinearPredictorSpec, PropensityModel};
use psppi_core::psppi::*;
use psppi_core::zestim::{linear_ee, DesignSpec, LinearEe, MeatMode, SolverOptions, WeightedSample};
use psppi_core::Error;

fn ols() -> LinearEe {
    linear_ee(DesignSpec::new(0, vec![1], true))
}

fn mcar_propensity(ds: &psppi_core::data::ObservedDataset) -> PropensityModel {
    let spec = PatternLinearPredictorSpec::intercept_only(schema(), ds.registry()).unwrap();
    psppi_core::propensity::fit_mle(&spec, ds, &Default::default()).unwrap()
}

#[test]
fn jackknife_of_sample_mean_is_variance_over_n() {
    // Leave-one-out means {2.5, 2, 1.5}: (2/3)·Σ(·−2)² = 1/3.
    let mean = linear_ee(DesignSpec::new(0, vec![], true));
    let s = WeightedSample::unit(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let theta = Vector::from_vec(vec![2.0]);
    for mode in [RefitMode::Fast, RefitMode::Naive] {
        let jk = jackknife_covariances(&mean, &s, &theta, &[], &[], mode, &SolverOptions::default()).unwrap();
        assert!((jk.sigma_theta[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
    }
}

/// Naive delete-1 jackknife built from independent weighted least squares.
fn oracle_jackknife(xs: &[Vec<f64>], y: &[f64], w: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let reps: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let keep: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            let xs: Vec<Vec<f64>> = keep.iter().map(|&i| xs[i].clone()).collect();
            let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
            let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
            wls(&xs, &ys, &ws)
        })
        .collect();
    let d = reps[0].len();
    let mean: Vec<f64> = (0..d).map(|c| reps.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(d, d);
    for r in &reps {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    cov * ((n as f64 - 1.0) / n as f64)
}

#[test]
fn downdate_jackknife_matches_naive_refits() {
    let full = full_rows(80, 3);
    let w: Vec<f64> = (0..80).map(|i| 1.0 + (i % 5) as f64 * 0.7).collect();
    let xs: Vec<Vec<f64>> = full.iter().map(|r| vec![r[1]]).collect();
    let y: Vec<f64> = full.iter().map(|r| r[0]).collect();
    let sample = WeightedSample::from_rows(&full, w.clone(), 200).unwrap();
    let theta = Vector::from_vec(wls(&xs, &y, &w));
    let opts = SolverOptions::default();
    let fast = jackknife_covariances(&ols(), &sample, &theta, &[], &[], RefitMode::Fast, &opts).unwrap();
    let naive = jackknife_covariances(&ols(), &sample, &theta, &[], &[], RefitMode::Naive, &opts).unwrap();
    let oracle = oracle_jackknife(&xs, &y, &w);
    assert!(linalg::max_abs_diff(&fast.sigma_theta, &oracle) <= 1e-9 * oracle.amax().max(1.0));
    assert!(linalg::max_abs_diff(&naive.sigma_theta, &oracle) <= 1e-9 * oracle.amax().max(1.0));
}

#[test]
fn scalar_optimal_weight() {
    let m = |v: f64| Matrix::from_element(1, 1, v);
    let bundle = CovarianceBundle {
        sigma_theta: m(2.0),
        sigma_theta_gamma1: vec![m(0.5)],
        sigma_gamma1_gamma1: vec![vec![m(1.0)]],
        sigma_gamma2: vec![m(1.0)],
        path: CovariancePath::Jackknife,
    };
    let w = optimal_weight(&bundle, 1e12).unwrap();
    assert!((w[(0, 0)] - 0.25).abs() < 1e-15);
}

#[test]
fn singular_denominator_is_reported() {
    let bundle = CovarianceBundle {
        sigma_theta: Matrix::identity(2, 2),
        sigma_theta_gamma1: vec![Matrix::zeros(2, 2)],
        sigma_gamma1_gamma1: vec![vec![Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])]],
        sigma_gamma2: vec![Matrix::zeros(2, 2)],
        path: CovariancePath::Jackknife,
    };
    assert!(matches!(optimal_weight(&bundle, 1e12), Err(Error::SingularDenominator { .. })));
}

#[test]
fn combine_arithmetic() {
    let one = |v: f64| Vector::from_vec(vec![v]);
    let out = combine(&one(2.0), &[one(1.0)], &[one(0.4)], &Matrix::identity(1, 1));
    assert!((out[0] - 1.4).abs() < 1e-15);
    let zero = combine(&one(2.0), &[one(1.0)], &[one(0.4)], &Matrix::zeros(1, 1));
    assert_eq!(zero[0], 2.0);
}

#[test]
fn wald_interval_values() {
    let ci = confidence_intervals(&Vector::from_vec(vec![1.0]), &Matrix::from_element(1, 1, 0.01), 1.0, 0.95).unwrap();
    assert!((ci[0].0 - (1.0 - 0.1 * 1.959964)).abs() < 1e-6);
    assert!((ci[0].1 - (1.0 + 0.1 * 1.959964)).abs() < 1e-6);
    assert!((ci[0].0 - 0.804).abs() < 5e-4 && (ci[0].1 - 1.196).abs() < 5e-4);
    assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);

    let tiny = confidence_intervals(&Vector::from_vec(vec![1.0]), &Matrix::from_element(1, 1, 4.0), 1.0, 1e-9).unwrap();
    assert!(tiny[0].1 - tiny[0].0 < 1e-8);
    let point = confidence_intervals(&Vector::from_vec(vec![3.0]), &Matrix::zeros(1, 1), 10.0, 0.9).unwrap();
    assert_eq!(point[0], (3.0, 3.0));
    let neg = confidence_intervals(&Vector::from_vec(vec![3.0]), &Matrix::from_element(1, 1, -1.0), 1.0, 0.9);
    assert!(matches!(neg, Err(Error::NegativeVariance { coordinate: 0, .. })));
}

/// A random joint covariance for `(θ, γ1_1..γ1_K)` plus independent `γ2`s.
fn bundle_from(joint: &Matrix, g2: &[Matrix], d: usize) -> CovarianceBundle {
    let k = g2.len();
    let b = |a: usize, c: usize| joint.view((a * d, c * d), (d, d)).into_owned();
    CovarianceBundle {
        sigma_theta: b(0, 0),
        sigma_theta_gamma1: (1..=k).map(|a| b(0, a)).collect(),
        sigma_gamma1_gamma1: (1..=k).map(|a| (1..=k).map(|c| b(a, c)).collect()).collect(),
        sigma_gamma2: g2.to_vec(),
        path: CovariancePath::ClosedForm,
    }
}

fn psd(entries: &[f64], n: usize) -> Matrix {
    let a = Matrix::from_row_slice(n, n, entries);
    &a * a.transpose() + Matrix::identity(n, n) * 1e-3
}

proptest! {
    #[test]
    fn variance_at_optimum_matches_reduced_form(
        joint in prop::collection::vec(-1.0f64..1.0, 81),
        g2a in prop::collection::vec(-1.0f64..1.0, 9),
        g2b in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let d = 3;
        let bundle = bundle_from(&psd(&joint, 9), &[psd(&g2a, 3), psd(&g2b, 3)], d);
        let w = optimal_weight(&bundle, 1e12).unwrap();
        let v = psppi_variance(&bundle, &w);
        let s = bundle.cross_sum();
        let reduced = &bundle.sigma_theta - &s * bundle.denominator().try_inverse().unwrap() * s.transpose();
        let scale = bundle.sigma_theta.amax().max(1.0);
        prop_assert!(linalg::max_abs_diff(&v, &linalg::symmetrize(&reduced)) <= 1e-12 * scale * 10.0);
        prop_assert!(linalg::min_eigenvalue(&(&bundle.sigma_theta - &v)) >= -1e-8);
        prop_assert!(linalg::max_abs_diff(&v, &v.transpose()) == 0.0);
        // Zero weight leaves Σ_θ.
        let v0 = psppi_variance(&bundle, &Matrix::zeros(d, d));
        prop_assert!(linalg::max_abs_diff(&v0, &bundle.sigma_theta) <= 1e-15 * scale);
    }
}

#[test]
fn zero_cross_covariance_gives_zero_weight() {
    let bundle =
        bundle_from(&Matrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 1.0, 1.5])), &[Matrix::identity(2, 2)], 2);
    let w = optimal_weight(&bundle, 1e12).unwrap();
    assert!(w.amax() == 0.0);
    assert!(linalg::max_abs_diff(&psppi_variance(&bundle, &w), &bundle.sigma_theta) < 1e-15);
}

#[test]
fn perfect_predictions_collapse() {
    let full = full_rows(600, 11);
    let ds = two_pattern_dataset(&full, 12);
    let oracle = perfect_oracle(&full);
    let pm = mcar_propensity(&ds);
    let fit = fit_psppi(&ols(), &ds, &pm, &oracle, &PsppiOptions::default()).unwrap();
    assert_eq!(fit.patterns, vec![1, 2]);
    for g in &fit.gamma1 {
        assert_eq!(g, &fit.theta_wcc);
    }
    for k in 0..2 {
        assert_eq!(fit.bundle.sigma_theta_gamma1[k], fit.bundle.sigma_theta);
        assert_eq!(fit.bundle.sigma_gamma1_gamma1[k][k], fit.bundle.sigma_theta);
    }
    // γ̂₂ on perfect imputations is the weighted fit on the true stratum records.
    let rows = ds.rows_with(Coarsening::Pattern(1));
    let xs: Vec<Vec<f64>> = rows.iter().map(|&i| vec![full[i][1]]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| full[i][0]).collect();
    let oracle_fit = wls(&xs, &y, &vec![1.0; rows.len()]);
    for c in 0..2 {
        assert!((fit.gamma2[0][c] - oracle_fit[c]).abs() < 1e-10);
    }

    let closed =
        fit_psppi(&ols(), &ds, &pm, &oracle, &PsppiOptions { path: CovariancePath::ClosedForm, ..Default::default() })
            .unwrap();
    for k in 0..2 {
        assert!(linalg::max_abs_diff(&closed.bundle.sigma_theta_gamma1[k], &closed.bundle.sigma_theta) < 1e-15);
    }
    assert!(linalg::min_eigenvalue(&(&fit.bundle.sigma_theta - &fit.sigma_psppi)) >= -1e-8);
}

#[test]
fn psppi_identity_holds_exactly() {
    let full = full_rows(500, 21);
    let ds = two_pattern_dataset(&full, 22);
    let oracle = noisy_oracle(&full, 0.8, 0.2, 23);
    let fit = fit_psppi(&ols(), &ds, &mcar_propensity(&ds), &oracle, &PsppiOptions::default()).unwrap();
    let mut expect = fit.theta_wcc.clone();
    for dk in &fit.delta {
        expect -= &fit.weight * dk;
    }
    assert_eq!(expect, fit.theta_psppi);
    assert_eq!(fit.diagnostics.replicates, ds.n_complete());
}

#[test]
fn constant_bias_shifts_only_the_intercept() {
    let full = full_rows(300, 31);
    let ds = mcar_dataset(&full, 0.3, 32);
    let b = 0.75;
    let shifted: Vec<Vec<f64>> = full.iter().map(|r| vec![r[0] + b, r[1], r[2]]).collect();
    let oracle = perfect_oracle(&shifted);
    let pm = mcar_propensity(&ds);
    let opts = SolverOptions::default();
    let wcc = fit_wcc(&ols(), &ds, &pm, &opts).unwrap();
    let g1 = fit_gamma1(&ols(), &ds, &pm, &oracle, 1, &opts).unwrap();
    assert!((g1.theta[0] - wcc.fit.theta[0] - b).abs() < 1e-10);
    assert!((g1.theta[1] - wcc.fit.theta[1]).abs() < 1e-10);
}

#[test]
fn gamma2_is_ols_on_imputed_stratum() {
    let full = full_rows(400, 41);
    let ds = mcar_dataset(&full, 0.4, 42);
    let oracle = noisy_oracle(&full, 0.5, 0.0, 43);
    let fit = fit_gamma2(&ols(), &ds, &mcar_propensity(&ds), &oracle, 1, &SolverOptions::default()).unwrap();
    let rows = ds.rows_with(Coarsening::Pattern(1));
    let xs: Vec<Vec<f64>> = rows.iter().map(|&i| vec![full[i][1]]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| oracle.get(i, 0).unwrap()).collect();
    let expect = wls(&xs, &y, &vec![1.0; rows.len()]);
    for c in 0..2 {
        assert!((fit.theta[c] - expect[c]).abs() < 1e-10);
    }
}

#[test]
fn tiny_stratum_is_rejected_or_dropped() {
    let full = full_rows(200, 51);
    let mut rows = full.clone();
    rows[0][0] = NA;
    rows[1][0] = NA;
    for r in rows.iter_mut().skip(2).take(40) {
        r[1] = NA;
    }
    let ds = psppi_core::data::ObservedDataset::from_rows(schema(), &rows).unwrap();
    let pm = mcar_propensity(&ds);
    let oracle = perfect_oracle(&full);
    let err = fit_gamma2(&ols(), &ds, &pm, &oracle, 1, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::StratumTooSmall { pattern: 1, size: 2, need: 3 }));

    let fit = fit_psppi(&ols(), &ds, &pm, &oracle, &PsppiOptions::default()).unwrap();
    assert_eq!(fit.diagnostics.dropped_patterns, vec![1]);
    assert_eq!(fit.patterns, vec![2]);
    let strict = PsppiOptions { small_strata: SmallStratumPolicy::Error, ..Default::default() };
    assert!(fit_psppi(&ols(), &ds, &pm, &oracle, &strict).is_err());
}

#[test]
fn closed_form_mean_model_matches_hand_algebra() {
    // ψ = y − θ: Σ_θ = Var(y)/π_∞ / N with π̂_∞ = n_cc/N.
    let full = full_rows(500, 61);
    let ds = mcar_dataset(&full, 0.35, 62);
    let mean = linear_ee(DesignSpec::new(0, vec![], true));
    let pm = mcar_propensity(&ds);
    let wcc = fit_wcc(&mean, &ds, &pm, &SolverOptions::default()).unwrap();
    let (st, _, _) = closed_form_covariances(&mean, &wcc.sample, &wcc.fit.theta, &[], &[], MeatMode::Ipw).unwrap();
    let ys: Vec<f64> = ds.complete_rows().iter().map(|&i| full[i][0]).collect();
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len() as f64;
    let pi = ys.len() as f64 / ds.n() as f64;
    let expect = var / pi / ds.n() as f64;
    assert!((st[(0, 0)] - expect).abs() < 1e-10 * expect);
}

#[test]
fn closed_form_cross_blocks_are_transposes() {
    let full = full_rows(500, 71);
    let ds = two_pattern_dataset(&full, 72);
    let oracle = noisy_oracle(&full, 0.6, 0.1, 73);
    let fit = fit_psppi(
        &ols(),
        &ds,
        &mcar_propensity(&ds),
        &oracle,
        &PsppiOptions { path: CovariancePath::ClosedForm, ..Default::default() },
    )
    .unwrap();
    let g = &fit.bundle.sigma_gamma1_gamma1;
    assert_eq!(g[0][1], g[1][0].transpose());
}

#[test]
fn rescaled_weights_leave_point_estimates() {
    let full = full_rows(300, 81);
    let ds = two_pattern_dataset(&full, 82);
    let oracle = noisy_oracle(&full, 0.3, 0.0, 83);
    let pm = mcar_propensity(&ds);
    let opts = SolverOptions::default();
    let wcc = fit_wcc(&ols(), &ds, &pm, &opts).unwrap();
    let g1 = gamma1_sample(&ds, &wcc, &oracle, 1).unwrap();
    let (g2, _) = gamma2_sample(&ds, &pm, &oracle, 2).unwrap();
    for s in [&wcc.sample, &g1, &g2] {
        let a = psppi_core::zestim::solve_weighted(&ols(), s, None, &opts).unwrap();
        let b = psppi_core::zestim::solve_weighted(&ols(), &s.scaled(37.5), None, &opts).unwrap();
        assert!((a.theta - b.theta).amax() <= 1e-12);
    }
}

#[test]
fn mcar_wcc_equals_unweighted_fit() {
    let full = full_rows(300, 91);
    let ds = mcar_dataset(&full, 0.3, 92);
    let wcc = fit_wcc(&ols(), &ds, &mcar_propensity(&ds), &SolverOptions::default()).unwrap();
    let rows = ds.complete_rows();
    let xs: Vec<Vec<f64>> = rows.iter().map(|&i| vec![full[i][1]]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| full[i][0]).collect();
    let expect = wls(&xs, &y, &vec![1.0; rows.len()]);
    for c in 0..2 {
        assert!((wcc.fit.theta[c] - expect[c]).abs() < 1e-10);
    }
}

#[test]
fn degenerate_propensity_clips_every_complete_weight() {
    let full = full_rows(100, 101);
    let ds = mcar_dataset(&full, 0.3, 102);
    let spec = PatternLinearPredictorSpec::intercept_only(schema(), ds.registry()).unwrap();
    let pm = PropensityModel::known(spec, vec![40.0]).unwrap();
    let wcc = fit_wcc(&ols(), &ds, &pm, &SolverOptions::default()).unwrap();
    assert_eq!(wcc.clipped, ds.n_complete());
}

#[test]
fn replicate_failure_names_the_replicate() {
    // One record carries all the information on the slope.
    let rows = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0], vec![4.0, 0.0], vec![5.0, 1.0]];
    let s = WeightedSample::unit(&rows).unwrap();
    let ee = linear_ee(DesignSpec::new(0, vec![1], true));
    let theta = Vector::from_vec(vec![2.5, 2.5]);
    let err = jackknife_covariances(&ee, &s, &theta, &[], &[], RefitMode::Fast, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Replicate { replicate: 4, .. }));
}
