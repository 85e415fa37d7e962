#![allow(dead_code)]

use psppi_core::data::{ObservedDataset, PredictionOracle, VariableSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const NA: f64 = f64::NAN;

pub fn schema() -> VariableSchema {
    VariableSchema::new(&["Y", "X", "Z"], &["Z"]).unwrap()
}

/// Full data `(Y, X, Z)` with `Y = 1 + 2X + noise`, `X = Z + noise`.
pub fn full_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let x = z + 0.5 * rng.sample::<f64, _>(StandardNormal);
            let y = 1.0 + 2.0 * x + rng.sample::<f64, _>(StandardNormal);
            vec![y, x, z]
        })
        .collect()
}

/// Masks `Y` (and, for every third masked record, also `X`) with MAR
/// probabilities driven by `Z`; returns the observed dataset.
pub fn two_pattern_dataset(full: &[Vec<f64>], seed: u64) -> ObservedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = full
        .iter()
        .map(|r| {
            let p = 1.0 / (1.0 + (-(-0.5 + 0.5 * r[2])).exp());
            let u: f64 = rng.random();
            if u < p * 0.6 {
                vec![NA, r[1], r[2]]
            } else if u < p {
                vec![r[0], NA, r[2]]
            } else {
                r.clone()
            }
        })
        .collect();
    ObservedDataset::from_rows(schema(), &rows).unwrap()
}

/// Outcome missing completely at random with probability `p`.
pub fn mcar_dataset(full: &[Vec<f64>], p: f64, seed: u64) -> ObservedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        full.iter().map(|r| if rng.random::<f64>() < p { vec![NA, r[1], r[2]] } else { r.clone() }).collect();
    ObservedDataset::from_rows(schema(), &rows).unwrap()
}

pub fn perfect_oracle(full: &[Vec<f64>]) -> PredictionOracle {
    PredictionOracle::from_rows(full).unwrap()
}

pub fn noisy_oracle(full: &[Vec<f64>], sd: f64, bias: f64, seed: u64) -> PredictionOracle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        full.iter().map(|r| r.iter().map(|v| v + bias + sd * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    PredictionOracle::from_rows(&rows).unwrap()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Weighted least squares of `y` on `(1, x…)` through the normal equations.
pub fn wls(xs: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let d = xs[0].len() + 1;
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for ((x, &yi), &wi) in xs.iter().zip(y).zip(w) {
        let f: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        for r in 0..d {
            b[r] += wi * f[r] * yi;
            for c in 0..d {
                a[r][c] += wi * f[r] * f[c];
            }
        }
    }
    gauss_solve(a, b)
}
