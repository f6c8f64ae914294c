mod common;

use common::{gaussian_matrix, gaussian_vector, linear_dataset, rng, spectrum};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use ridge_influence::loocv::minimize_cv_tabulated;
use ridge_influence::{
    cv_value, effective_df, error_derivatives, evaluate, minimize_cv, standardize, weighted_cv_value, RawDataset,
    RidgeSpectrum, SolverOptions, StandardizeOptions, WeightGrid, WeightedSolver, DEFAULT_RANK_TOLERANCE,
};

fn instance(seed: u64, n: usize, p: usize) -> (RidgeSpectrum, ridge_influence::Outcome) {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, p);
    let y = gaussian_vector(&mut r, n);
    let spec = spectrum(&x);
    let outcome = spec.project(&y).unwrap();
    (spec, outcome)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn df_strictly_decreases(seed in any::<u64>(), n in 4usize..20, p in 1usize..12, a in -3.0f64..3.0, b in 0.01f64..3.0) {
        let (spec, _) = instance(seed, n, p);
        let l1 = 10f64.powf(a) * spec.top_eigenvalue();
        let l2 = l1 * (1.0 + b);
        let (d0, d1, d2) = (effective_df(&spec, 0.0).unwrap(), effective_df(&spec, l1).unwrap(), effective_df(&spec, l2).unwrap());
        prop_assert!((d0 - spec.rank() as f64).abs() < 1e-12);
        prop_assert!(d1 > d2 && d2 > 0.0 && d0 > d1);
    }

    #[test]
    fn cv_is_continuous(seed in any::<u64>(), n in 4usize..20, p in 1usize..12, a in -3.0f64..3.0) {
        let (spec, outcome) = instance(seed, n, p);
        let lambda = 10f64.powf(a) * spec.top_eigenvalue();
        let h = 1e-6 * lambda;
        let c0 = cv_value(&spec, &outcome, lambda).unwrap();
        let c1 = cv_value(&spec, &outcome, lambda + h).unwrap();
        prop_assert!((c1 - c0).abs() <= 1e-4 * c0);
    }

    #[test]
    fn leverages_lie_in_unit_interval(seed in any::<u64>(), n in 4usize..20, p in 1usize..30, a in -4.0f64..4.0) {
        let (spec, outcome) = instance(seed, n, p);
        let lambda = 10f64.powf(a) * spec.top_eigenvalue();
        let eval = evaluate(&spec, &outcome, lambda).unwrap();
        prop_assert!(eval.leverages.iter().all(|&h| (0.0..1.0).contains(&h)));
        prop_assert!((eval.leverages.sum() - eval.df).abs() < 1e-10 * (1.0 + eval.df));
    }

    #[test]
    fn weighted_criterion_reductions(seed in any::<u64>(), n in 4usize..20, p in 1usize..12, i_frac in 0.0f64..1.0) {
        let (spec, outcome) = instance(seed, n, p);
        let eval = evaluate(&spec, &outcome, spec.top_eigenvalue()).unwrap();
        let i = ((n as f64 * i_frac) as usize).min(n - 1);
        let sq: Vec<f64> = eval.loo_errors.iter().map(|e| e * e).collect();
        let others = (sq.iter().sum::<f64>() - sq[i]) / (n as f64 - 1.0);
        let uniform = weighted_cv_value(&eval, i, 1.0 / n as f64).unwrap();
        prop_assert!((uniform - eval.cv_value).abs() <= 1e-12 * eval.cv_value.max(1e-300));
        prop_assert!((weighted_cv_value(&eval, i, 0.0).unwrap() - others).abs() <= 1e-12 * others.max(1e-300));
        prop_assert!((weighted_cv_value(&eval, i, 1.0).unwrap() - sq[i]).abs() <= 1e-12 * sq[i].max(1e-300));
        prop_assert!(weighted_cv_value(&eval, i, 1.5).is_err());
        prop_assert!(weighted_cv_value(&eval, i, -0.1).is_err());
    }

    #[test]
    fn decomposition_is_deterministic(seed in any::<u64>(), n in 3usize..15, p in 1usize..15) {
        let mut r = rng(seed);
        let x = gaussian_matrix(&mut r, n, p);
        let a = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        let b = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        prop_assert_eq!(a.singular_values().as_slice(), b.singular_values().as_slice());
        prop_assert_eq!(a.u().as_slice(), b.u().as_slice());
        let d = a.singular_values();
        prop_assert!(d.iter().all(|&v| v > 0.0));
        prop_assert!(d.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn standardization_round_trips(seed in any::<u64>(), n in 3usize..20, p in 1usize..8, shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let x = gaussian_matrix(&mut r, n, p).map(|v| v * scale + shift);
        let y = gaussian_vector(&mut r, n);
        let raw = RawDataset::new(x.clone(), y).unwrap();
        let std = standardize(&raw, StandardizeOptions::default()).unwrap();
        let back = std.unstandardize_x();
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        for j in 0..p {
            let col = std.x().column(j);
            prop_assert!(col.sum().abs() < 1e-10 * n as f64);
            prop_assert!((col.norm_squared() / (n as f64 - 1.0) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn explained_fractions_sum_to_one(seed in any::<u64>(), n in 3usize..12, p in 1usize..12) {
        let (spec, _) = instance(seed, n, p);
        prop_assume!(spec.rank() == n.min(p));
        let total: f64 = (1..=spec.rank()).map(|k| spec.pc_scores(k).unwrap().1).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(spec.pc_scores(spec.rank() + 1).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stationary_at_interior_minimum(seed in 0u64..10_000) {
        let data = linear_dataset(seed, 30, 6, 0.2, 1.0);
        let spec = spectrum(data.x());
        let outcome = spec.project(data.y()).unwrap();
        let cv = minimize_cv(&spec, &outcome, &SolverOptions::default()).unwrap();
        prop_assume!(!cv.at_boundary.is_boundary());
        let d = error_derivatives(&spec, &outcome, cv.minimizer).unwrap();
        prop_assert!(d.sum_second() > 0.0);
        prop_assert!(d.sum_first().abs() <= 1e-6 * d.sum_second().abs() * cv.minimizer);
        let best_on_grid = cv.cv_values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(cv.cv_at_minimizer <= best_on_grid);
    }

    #[test]
    fn curve_points_beat_random_probes(seed in 0u64..10_000) {
        let data = linear_dataset(seed, 20, 5, 0.2, 1.0);
        let spec = spectrum(data.x());
        let outcome = spec.project(data.y()).unwrap();
        let opts = SolverOptions::default();
        let solver = WeightedSolver::new(&spec, &outcome, opts);
        let grid = WeightGrid::new(4.0, 0.5).unwrap();
        let mut probes = rng(seed ^ 0x5eed);
        let top = spec.top_eigenvalue();
        let i = (seed % 20) as usize;
        let curve = solver.influence_curve(i, &grid).unwrap();
        for (k, &t) in curve.factors.iter().enumerate() {
            let w = t / 20.0;
            let at = weighted_cv_value(&evaluate(&spec, &outcome, curve.lambda_hat[k]).unwrap(), i, w).unwrap();
            for _ in 0..50 {
                let lambda = top * 10f64.powf(probes.random_range(-8.0..6.0));
                let v = weighted_cv_value(&evaluate(&spec, &outcome, lambda).unwrap(), i, w).unwrap();
                prop_assert!(at <= v * (1.0 + 1e-9), "t={} lambda_hat={} probe {}", t, curve.lambda_hat[k], lambda);
            }
        }
    }
}

#[test]
fn curves_meet_at_unit_factor() {
    let data = linear_dataset(4, 25, 6, 0.2, 1.0);
    let spec = spectrum(data.x());
    let outcome = spec.project(data.y()).unwrap();
    let opts = SolverOptions::default();
    let solver = WeightedSolver::new(&spec, &outcome, opts);
    let cv = minimize_cv_tabulated(&spec, &outcome, solver.table(), &opts).unwrap();
    assert!(!cv.at_boundary.is_boundary());
    let grid = WeightGrid::default();
    let unit = grid.unit_index();
    assert_eq!(grid.factors()[unit], 1.0);
    for c in solver.all_curves(&grid).unwrap() {
        assert!((c.lambda_hat[unit] - cv.minimizer).abs() <= 2.0 * opts.tol * cv.minimizer);
    }
}

#[test]
fn small_examples() {
    let single = RidgeSpectrum::decompose(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), DEFAULT_RANK_TOLERANCE).unwrap();
    assert!((effective_df(&single, 1.0).unwrap() - 0.5).abs() < 1e-15);
    let identity = RidgeSpectrum::decompose(&DMatrix::identity(2, 2), DEFAULT_RANK_TOLERANCE).unwrap();
    assert!((identity.pc_scores(1).unwrap().1 - 0.5).abs() < 1e-15);
    assert!(effective_df(&identity, -1.0).is_err());
}

#[test]
fn noiseless_full_rank_fit_needs_no_penalty() {
    let data = linear_dataset(12, 30, 5, 1.0, 0.0);
    let spec = spectrum(data.x());
    let outcome = spec.project(data.y()).unwrap();
    let cv = minimize_cv(&spec, &outcome, &SolverOptions::default()).unwrap();
    assert_eq!(cv.minimizer, 0.0);
    assert_eq!(cv.at_boundary, ridge_influence::Boundary::AtZero);
}
