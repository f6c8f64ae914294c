mod common;

use common::{gaussian_vector, rng};
use nalgebra::{DMatrix, DVector};
use ridge_influence::influence::UnivariateRecord;
use ridge_influence::{influence_derivatives, minimize_cv, univariate_sign_analysis, RidgeSpectrum, SolverOptions};

/// Centers x and scales it to Σx² = 1; centers y.
fn normalize(x: &DVector<f64>, y: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let xc = x.add_scalar(-x.mean());
    let xn = &xc / xc.norm();
    let yc = y.add_scalar(-y.mean());
    (xn.iter().copied().collect(), yc.iter().copied().collect())
}

/// Expander region drawn in the (x, y) plane: on the far side of the ridge
/// line y = xβ̂/(1+λ) as seen from the x axis, and inside the hyperbola
/// xy = β̂.
fn in_shaded_region(x: f64, y: f64, beta: f64, lambda: f64) -> bool {
    let s = y.signum();
    s * ((1.0 + lambda) * y - x * beta) > 0.0 && s * (x * beta - x * x * y) > 0.0
}

#[test]
fn product_and_ratio_forms_agree_on_every_quadrant() {
    let mut r = rng(11);
    let n = 12;
    let bx = gaussian_vector(&mut r, n);
    let by = &bx * 0.8 + gaussian_vector(&mut r, n) * 0.6;
    let mut seen = [[0usize; 2]; 4];
    let mut agreed = 0;
    let coords = [-3.0, -1.5, -0.7, -0.2, 0.2, 0.7, 1.5, 3.0];
    for &px in &coords {
        for &py in &coords {
            for lambda in [0.01, 0.3, 2.0] {
                let mut x = bx.clone();
                let mut y = by.clone();
                x[0] = px;
                y[0] = py;
                let (xs, ys) = normalize(&x, &y);
                let records = univariate_sign_analysis(&xs, &ys, lambda).unwrap();
                for (i, rec) in records.iter().enumerate() {
                    let UnivariateRecord { r, nominator_factor, ratio_condition, expander_condition_met, .. } = *rec;
                    let Some(ratio) = ratio_condition else { continue };
                    assert_eq!(ratio, expander_condition_met);
                    assert_eq!(expander_condition_met, nominator_factor < 0.0);
                    let quadrant = usize::from(r > 0.0) * 2 + usize::from(ys[i] > 0.0);
                    seen[quadrant][usize::from(ratio)] += 1;
                    agreed += 1;
                }
            }
        }
    }
    assert!(agreed > 1000);
    // Every sign combination of (rᵢ, yᵢ) occurs, and the condition holds
    // and fails in each of them.
    assert!(seen.iter().all(|q| q[0] > 0 && q[1] > 0), "{seen:?}");
}

#[test]
fn zero_outcome_keeps_the_product_form() {
    let x = [-0.5, 0.5, -0.5, 0.5];
    let y = [-1.0, 0.0, 0.0, 1.0];
    let records = univariate_sign_analysis(&x, &y, 0.5).unwrap();
    assert!(records[1].zero_outcome);
    assert_eq!(records[1].ratio_condition, None);
    assert!(records[1].nominator_factor.is_finite());
}

#[test]
fn first_quadrant_point_above_the_ridge_line_is_an_expander() {
    let x0 = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 0.8];
    let y0 = [-2.1, -0.9, -0.6, 0.1, 0.4, 1.1, 1.9, 1.6];
    let (x, y) = normalize(&DVector::from_row_slice(&x0), &DVector::from_row_slice(&y0));
    let lambda = 0.2;
    let beta: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    assert!(beta > 0.0 && x[7] > 0.0 && y[7] > 0.0);
    assert!(y[7] > x[7] * beta / (1.0 + lambda));
    let records = univariate_sign_analysis(&x, &y, lambda).unwrap();
    assert!(records[7].expander_condition_met);
}

#[test]
fn expander_condition_agrees_with_the_derivative_sign() {
    let opts = SolverOptions::default();
    let mut datasets = 0;
    let mut points = 0;
    for seed in 0..500 {
        let mut r = rng(9000 + seed);
        let n = 15 + (seed as usize % 20);
        let x = gaussian_vector(&mut r, n);
        let y = &x * 0.3 + gaussian_vector(&mut r, n);
        let (xs, ys) = normalize(&x, &y);
        let spec = RidgeSpectrum::decompose(&DMatrix::from_column_slice(n, 1, &xs), 1e-12).unwrap();
        let outcome = spec.project(&DVector::from_row_slice(&ys)).unwrap();
        let cv = minimize_cv(&spec, &outcome, &opts).unwrap();
        if cv.at_boundary.is_boundary() {
            continue;
        }
        let derivs = influence_derivatives(&spec, &outcome, &cv).unwrap();
        let records = univariate_sign_analysis(&xs, &ys, cv.minimizer).unwrap();
        let scale = derivs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let beta: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        for i in 0..n {
            if derivs[i].abs() <= 1e-10 * scale {
                continue;
            }
            assert_eq!(records[i].expander_condition_met, derivs[i] < 0.0, "seed {seed} obs {i}");
            if derivs[i] < 0.0 {
                assert!(in_shaded_region(xs[i], ys[i], beta, cv.minimizer), "seed {seed} obs {i}");
            }
            points += 1;
        }
        datasets += 1;
        if datasets == 50 {
            break;
        }
    }
    assert_eq!(datasets, 50);
    assert!(points > 1000);
}

#[test]
fn shaded_region_contains_every_flagged_expander() {
    for seed in 0..30 {
        let mut r = rng(700 + seed);
        let x = gaussian_vector(&mut r, 25);
        let y = &x * -0.5 + gaussian_vector(&mut r, 25);
        let (xs, ys) = normalize(&x, &y);
        let beta: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        for lambda in [0.05, 0.5, 5.0] {
            for (i, rec) in univariate_sign_analysis(&xs, &ys, lambda).unwrap().iter().enumerate() {
                if ys[i] == 0.0 {
                    continue;
                }
                assert_eq!(rec.expander_condition_met, in_shaded_region(xs[i], ys[i], beta, lambda));
                if rec.expander_condition_met {
                    // Quadrant where the regression line lives.
                    assert_eq!(xs[i].signum() * beta.signum(), ys[i].signum());
                }
            }
        }
    }
}
