//! Sensitivity of the CV-optimal penalty to the weight of one observation.
//!
//! With fᵢ(λ) = e₍ᵢ₎(λ)², implicit differentiation of the stationarity
//! condition of the weighted criterion at wᵢ = 1/n gives
//!
//! ```text
//! ∂λ̂/∂wᵢ = −n² f′ᵢ(λ̂) / ((n − 1) Σⱼ f″ⱼ(λ̂))
//! ```
//!
//! A negative slope means up-weighting the observation lowers the penalty
//! (an expander); a positive slope raises it (a shrinker).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loocv::{penalty_fractions, CvCurve, LEVERAGE_GAP_FLOOR};
use crate::search::Boundary;
use crate::spectrum::{Outcome, RidgeSpectrum};
use crate::weighted::WeightedSolver;

/// fᵢ, f′ᵢ and f″ᵢ for every observation at one penalty.
#[derive(Debug, Clone)]
pub struct ErrorDerivatives {
    pub lambda: f64,
    pub f: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl ErrorDerivatives {
    pub fn sum_first(&self) -> f64 {
        self.f1.iter().sum()
    }

    pub fn sum_second(&self) -> f64 {
        self.f2.iter().sum()
    }
}

/// Analytic λ-derivatives of the squared leave-one-out errors.
///
/// With q = e/g (g = 1 − Hᵢᵢ) the quotient rule gives
/// q′ = (e′g − eg′)/g² and q″ = (e″g − eg″)/g² − 2q′g′/g, and f = q².
pub fn error_derivatives(spec: &RidgeSpectrum, outcome: &Outcome, lambda: f64) -> Result<ErrorDerivatives> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(Error::NegativeLambda(lambda));
    }
    let n = spec.n();
    let r = spec.rank();
    let mut fractions = Vec::with_capacity(r);
    penalty_fractions(spec, lambda, &mut fractions);
    // d²/(d²+λ)² and d²/(d²+λ)³
    let (k1, k2): (Vec<f64>, Vec<f64>) = spec
        .singular_values()
        .iter()
        .map(|d| {
            let a = d * d;
            let s = a + lambda;
            (a / (s * s), a / (s * s * s))
        })
        .unzip();
    let uty = outcome.uty().as_slice();

    let mut f = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for i in 0..n {
        let row = spec.u_row(i);
        let mut e = outcome.orthogonal_residual(i);
        let mut g = spec.leverage_gap(i);
        let (mut e1, mut e2, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0);
        for l in 0..r {
            let a = row[l] * uty[l];
            let b = row[l] * row[l];
            e += a * fractions[l];
            g += b * fractions[l];
            e1 += a * k1[l];
            g1 += b * k1[l];
            e2 -= 2.0 * a * k2[l];
            g2 -= 2.0 * b * k2[l];
        }
        if g <= LEVERAGE_GAP_FLOOR {
            return Err(Error::LeverageOne(i));
        }
        let q = e / g;
        let q1 = (e1 * g - e * g1) / (g * g);
        let q2 = (e2 * g - e * g2) / (g * g) - 2.0 * q1 * g1 / g;
        f.push(q * q);
        f1.push(2.0 * q * q1);
        f2.push(2.0 * (q1 * q1 + q * q2));
    }
    Ok(ErrorDerivatives { lambda, f, f1, f2 })
}

/// −n² f′ᵢ / ((n − 1) Σⱼ f″ⱼ) for every observation. Only meaningful when
/// the derivatives were taken at an interior CV minimizer.
pub fn weight_derivative(derivs: &ErrorDerivatives) -> Result<Vec<f64>> {
    let n = derivs.f1.len() as f64;
    let curvature = derivs.sum_second();
    if !(curvature > 0.0) {
        return Err(Error::NotAMinimum(curvature));
    }
    let scale = -n * n / ((n - 1.0) * curvature);
    Ok(derivs.f1.iter().map(|d| scale * d).collect())
}

/// Analytic influence derivatives at the CV minimizer, refusing boundary
/// minimizers where the implicit-function argument breaks down.
pub fn influence_derivatives(spec: &RidgeSpectrum, outcome: &Outcome, cv: &CvCurve) -> Result<Vec<f64>> {
    if cv.at_boundary != Boundary::Interior {
        return Err(Error::BoundaryMinimizer(cv.at_boundary));
    }
    weight_derivative(&error_derivatives(spec, outcome, cv.minimizer)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceLabel {
    Expander,
    Shrinker,
    Neutral,
}

impl InfluenceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            InfluenceLabel::Expander => "expander",
            InfluenceLabel::Shrinker => "shrinker",
            InfluenceLabel::Neutral => "neutral",
        }
    }
}

/// How a report's derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Analytic,
    /// Forward difference of the curve, used when λ̂_cv sits on a boundary.
    BoundarySlope,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceReport {
    /// 0-based observation index.
    pub observation: usize,
    pub derivative: f64,
    pub label: InfluenceLabel,
    /// (rᵢ + λyᵢ)(rᵢ − yᵢ(1 − hᵢᵢ)), only for a single covariate.
    pub nominator_factor: Option<f64>,
    pub rank_score: f64,
    pub source: DerivativeSource,
}

/// Labelling threshold used when none is given: 1e-3 of the median |slope|.
pub fn default_label_tolerance(derivatives: &[f64]) -> f64 {
    1e-3 * median_abs(derivatives)
}

fn median_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let m = abs.len();
    if m % 2 == 1 {
        abs[m / 2]
    } else {
        0.5 * (abs[m / 2 - 1] + abs[m / 2])
    }
}

/// Labels and rank scores. `rank_score` is |derivative| over the median
/// |derivative| of the sample.
pub fn classify(derivatives: &[f64], tol_label: Option<f64>) -> Vec<InfluenceReport> {
    let tol = tol_label.unwrap_or_else(|| default_label_tolerance(derivatives));
    let median = median_abs(derivatives);
    let denom = if median > 0.0 {
        median
    } else {
        derivatives.iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE)
    };
    derivatives
        .iter()
        .enumerate()
        .map(|(i, &d)| InfluenceReport {
            observation: i,
            derivative: d,
            label: if d < -tol {
                InfluenceLabel::Expander
            } else if d > tol {
                InfluenceLabel::Shrinker
            } else {
                InfluenceLabel::Neutral
            },
            nominator_factor: None,
            rank_score: d.abs() / denom,
            source: DerivativeSource::Analytic,
        })
        .collect()
}

/// Weight step, relative to 1/n, of the slope used at boundary minimizers.
pub const BOUNDARY_SLOPE_STEP: f64 = 0.05;

/// Derivatives and labels for every observation. At an interior λ̂_cv this
/// is the analytic slope; on a boundary the forward difference of λ̂(w)
/// with step 0.05/n is reported instead and marked as such.
pub fn influence_reports(solver: &WeightedSolver<'_>, cv: &CvCurve, tol_label: Option<f64>) -> Result<Vec<InfluenceReport>> {
    if cv.at_boundary == Boundary::Interior {
        let d = influence_derivatives(solver.spectrum(), solver.outcome(), cv)?;
        return Ok(classify(&d, tol_label));
    }
    let h = BOUNDARY_SLOPE_STEP / solver.n() as f64;
    let slopes = (0..solver.n())
        .map(|i| solver.numerical_slope(i, h, true))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = classify(&slopes, tol_label);
    for r in &mut reports {
        r.source = DerivativeSource::BoundarySlope;
    }
    Ok(reports)
}

/// Observation indices ordered by decreasing rank score (ties by index).
pub fn ranking(reports: &[InfluenceReport]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..reports.len()).collect();
    idx.sort_by(|&a, &b| reports[b].rank_score.total_cmp(&reports[a].rank_score).then(a.cmp(&b)));
    idx
}

/// Sign analysis for one standardized covariate (Σx² = 1, x̄ = 0, ȳ = 0).
#[derive(Debug, Clone, Serialize)]
pub struct UnivariateRecord {
    /// OLS residual yᵢ − xᵢβ̂.
    pub r: f64,
    /// OLS leverage xᵢ².
    pub h: f64,
    pub nominator_factor: f64,
    /// −λ < rᵢ/yᵢ < 1 − hᵢᵢ; `None` when yᵢ = 0.
    pub ratio_condition: Option<bool>,
    pub zero_outcome: bool,
    pub expander_condition_met: bool,
}

/// Tolerance on the normalization constraints of the univariate analysis.
pub const NORMALIZATION_TOL: f64 = 1e-8;

pub fn univariate_sign_analysis(x: &[f64], y: &[f64], lambda: f64) -> Result<Vec<UnivariateRecord>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} covariates, {} outcomes", x.len(), y.len())));
    }
    if lambda < 0.0 || lambda.is_nan() {
        return Err(Error::NegativeLambda(lambda));
    }
    let n = x.len() as f64;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if (sxx - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized("sum of squared covariates equal to 1"));
    }
    if (x.iter().sum::<f64>() / n).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized("a centered covariate"));
    }
    let y_scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if (y.iter().sum::<f64>() / n).abs() > NORMALIZATION_TOL * y_scale {
        return Err(Error::NotNormalized("a centered outcome"));
    }
    let beta: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - xi * beta;
            let h = xi * xi;
            let nominator_factor = (r + lambda * yi) * (r - yi * (1.0 - h));
            let ratio_condition = (yi != 0.0).then(|| {
                let ratio = r / yi;
                -lambda < ratio && ratio < 1.0 - h
            });
            UnivariateRecord {
                r,
                h,
                nominator_factor,
                ratio_condition,
                zero_outcome: yi == 0.0,
                expander_condition_met: nominator_factor < 0.0,
            }
        })
        .collect())
}

/// Accepts a design of any single-column scale: rescales x to unit norm and
/// maps the penalty accordingly (ridge with x, λ equals ridge with x/‖x‖,
/// λ/‖x‖²).
pub fn univariate_nominator_factors(spec: &RidgeSpectrum, x: &[f64], y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if spec.p() != 1 {
        return Err(Error::NotUnivariate(spec.p()));
    }
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let unit: Vec<f64> = x.iter().map(|v| v / norm2.sqrt()).collect();
    Ok(univariate_sign_analysis(&unit, y, lambda / norm2)?
        .into_iter()
        .map(|r| r.nominator_factor)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::DEFAULT_RANK_TOLERANCE;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn classify_signs() {
        let r = classify(&[-1.0, 0.0, 2.0, 0.5], Some(1e-8));
        assert_eq!(r[0].label, InfluenceLabel::Expander);
        assert_eq!(r[1].label, InfluenceLabel::Neutral);
        assert_eq!(r[2].label, InfluenceLabel::Shrinker);
        // median |d| of {1, 0, 2, 0.5} is 0.75
        assert_relative_eq!(r[2].rank_score, 2.0 / 0.75);
        assert_eq!(ranking(&r), vec![2, 0, 3, 1]);
    }

    #[test]
    fn default_tolerance_ignores_noise() {
        let r = classify(&[1.0, -1.0, 1e-9, 2.0, -3.0], None);
        assert_eq!(r[2].label, InfluenceLabel::Neutral);
        assert_eq!(r[4].label, InfluenceLabel::Expander);
    }

    #[test]
    fn weight_derivative_requires_positive_curvature() {
        let d = ErrorDerivatives { lambda: 1.0, f: vec![1.0; 3], f1: vec![1.0, -1.0, 0.0], f2: vec![-1.0; 3] };
        assert!(matches!(weight_derivative(&d), Err(Error::NotAMinimum(_))));
    }

    fn unit_column(raw: &[f64]) -> Vec<f64> {
        let m = raw.iter().sum::<f64>() / raw.len() as f64;
        let c: Vec<f64> = raw.iter().map(|v| v - m).collect();
        let nrm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter().map(|v| v / nrm).collect()
    }

    #[test]
    fn univariate_closed_form_matches_spectral() {
        let x = unit_column(&[0.3, -1.2, 2.0, 0.1, -0.7, 0.9]);
        let yr = [1.0, -0.5, 2.5, 0.2, -1.9, 0.4];
        let ym = yr.iter().sum::<f64>() / 6.0;
        let y: Vec<f64> = yr.iter().map(|v| v - ym).collect();
        let spec = RidgeSpectrum::decompose(&DMatrix::from_column_slice(6, 1, &x), DEFAULT_RANK_TOLERANCE).unwrap();
        let out = spec.project(&DVector::from_column_slice(&y)).unwrap();
        let lambda = 0.37;
        let d = error_derivatives(&spec, &out, lambda).unwrap();
        let recs = univariate_sign_analysis(&x, &y, lambda).unwrap();
        for i in 0..6 {
            let (r, h) = (recs[i].r, recs[i].h);
            let closed = ((lambda * y[i] + r) / (lambda + 1.0 - h)).powi(2);
            assert_relative_eq!(d.f[i], closed, max_relative = 1e-12);
            let closed_d1 = -2.0 * (lambda * y[i] + r) * (r - y[i] * (1.0 - h)) / (lambda + 1.0 - h).powi(3);
            assert_relative_eq!(d.f1[i], closed_d1, max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn univariate_preconditions() {
        assert!(matches!(
            univariate_sign_analysis(&[1.0, 0.0, -1.0], &[1.0, 0.0, -1.0], 0.1),
            Err(Error::NotNormalized(_))
        ));
        let x = unit_column(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            univariate_sign_analysis(&x, &[1.0, 1.0, 2.0], 0.1),
            Err(Error::NotNormalized(_))
        ));
        let recs = univariate_sign_analysis(&x, &[0.0, 1.0, -1.0], 0.1).unwrap();
        assert!(recs[0].zero_outcome);
        assert_eq!(recs[0].ratio_condition, None);
    }

    #[test]
    fn first_quadrant_above_ridge_line_is_expander() {
        // β̂ > 0; the last point sits in the first quadrant above y = β̂x/(1+λ)
        // while its leave-one-out slope stays positive.
        let x = unit_column(&[-2.0, -1.0, 0.0, 1.0, 2.0, 1.5]);
        let yr = [-1.8, -1.1, 0.1, 0.9, 1.7, 2.6];
        let ym = yr.iter().sum::<f64>() / 6.0;
        let y: Vec<f64> = yr.iter().map(|v| v - ym).collect();
        let lambda = 0.5;
        let beta: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(beta > 0.0);
        let i = 5;
        assert!(x[i] > 0.0 && y[i] > 0.0);
        assert!(y[i] > x[i] * beta / (1.0 + lambda));
        assert!(beta - x[i] * y[i] > 0.0);
        let recs = univariate_sign_analysis(&x, &y, lambda).unwrap();
        assert!(recs[i].expander_condition_met);
        assert_eq!(recs[i].ratio_condition, Some(true));
    }
}
