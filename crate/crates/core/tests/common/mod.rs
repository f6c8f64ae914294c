#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ridge_influence::{
    standardize, RawDataset, RidgeSpectrum, StandardizeOptions, StandardizedDataset, DEFAULT_RANK_TOLERANCE,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Standardized data with y = Xβ + noise, β drawn with per-coefficient sd
/// `signal`.
pub fn linear_dataset(seed: u64, n: usize, p: usize, signal: f64, noise: f64) -> StandardizedDataset {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, p);
    let beta = gaussian_vector(&mut r, p) * signal;
    let y = &x * beta + gaussian_vector(&mut r, n) * noise;
    standardize(&RawDataset::new(x, y).unwrap(), StandardizeOptions::default()).unwrap()
}

pub fn spectrum(x: &DMatrix<f64>) -> RidgeSpectrum {
    RidgeSpectrum::decompose(x, DEFAULT_RANK_TOLERANCE).unwrap()
}

/// Leave-one-out prediction errors by refitting ridge without each row.
pub fn brute_force_loo(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.nrows();
    let p = x.ncols();
    DVector::from_fn(n, |i, _| {
        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let xi = x.select_rows(&keep);
        let yi = DVector::from_iterator(keep.len(), keep.iter().map(|&j| y[j]));
        let gram = xi.transpose() * &xi + DMatrix::identity(p, p) * lambda;
        let beta = gram.lu().solve(&(xi.transpose() * yi)).expect("invertible system");
        y[i] - (x.row(i) * beta)[0]
    })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
