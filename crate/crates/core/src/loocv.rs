//! Ridge fits, leverages and closed-form leave-one-out errors along the
//! penalty path, all evaluated from a cached [`RidgeSpectrum`].
//!
//! With shrinkage factors s_ℓ = d_ℓ²/(d_ℓ²+λ), the residual and the leverage
//! gap of observation i are written as
//!
//! ```text
//! e_i(λ)     = r⊥_i + Σ_ℓ U_iℓ (Uᵀy)_ℓ λ/(d_ℓ²+λ)
//! 1 − H_ii   = g⊥_i + Σ_ℓ U_iℓ²      λ/(d_ℓ²+λ)
//! ```
//!
//! where r⊥ and g⊥ are the parts outside the column space. This form never
//! subtracts two nearly equal numbers when λ is small, so the leave-one-out
//! error e_i/(1 − H_ii) stays accurate down to the bottom of the grid even
//! when p ≥ n.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::influence::error_derivatives;
use crate::search::{minimize_tabulated, Boundary, Minimum, SolverOptions};
use crate::spectrum::{Outcome, RidgeSpectrum};

/// 1 − H_ii at or below this is treated as a saturated leverage.
pub const LEVERAGE_GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RidgeEvaluation {
    pub lambda: f64,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub leverages: DVector<f64>,
    pub loo_errors: DVector<f64>,
    pub cv_value: f64,
    pub df: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda < 0.0 || lambda.is_nan() {
        Err(Error::NegativeLambda(lambda))
    } else {
        Ok(())
    }
}

/// λ/(d_ℓ²+λ) for every retained component.
pub(crate) fn penalty_fractions(spec: &RidgeSpectrum, lambda: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(spec.singular_values().iter().map(|d| {
        let a = d * d;
        if lambda == 0.0 { 0.0 } else { lambda / (a + lambda) }
    }));
}

/// Residual e_i(λ) and leverage gap 1 − H_ii(λ) for one observation.
#[inline]
pub(crate) fn residual_and_gap(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    fractions: &[f64],
    i: usize,
) -> (f64, f64) {
    let row = spec.u_row(i);
    let uty = outcome.uty().as_slice();
    let mut e = outcome.orthogonal_residual(i);
    let mut g = spec.leverage_gap(i);
    for l in 0..row.len() {
        let q = fractions[l];
        e += row[l] * uty[l] * q;
        g += row[l] * row[l] * q;
    }
    (e, g)
}

/// Fills `out` with the squared leave-one-out errors e₍ᵢ₎(λ)² of all
/// observations.
pub fn squared_loo_errors(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    lambda: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    check_lambda(lambda)?;
    let mut fractions = Vec::with_capacity(spec.rank());
    penalty_fractions(spec, lambda, &mut fractions);
    out.clear();
    for i in 0..spec.n() {
        let (e, g) = residual_and_gap(spec, outcome, &fractions, i);
        if g <= LEVERAGE_GAP_FLOOR {
            return Err(Error::LeverageOne(i));
        }
        let q = e / g;
        out.push(q * q);
    }
    Ok(())
}

/// Mean squared leave-one-out error at λ.
pub fn cv_value(spec: &RidgeSpectrum, outcome: &Outcome, lambda: f64) -> Result<f64> {
    let mut f = Vec::with_capacity(spec.n());
    squared_loo_errors(spec, outcome, lambda, &mut f)?;
    Ok(f.iter().sum::<f64>() / spec.n() as f64)
}

/// Full ridge evaluation at one penalty.
pub fn evaluate(spec: &RidgeSpectrum, outcome: &Outcome, lambda: f64) -> Result<RidgeEvaluation> {
    check_lambda(lambda)?;
    let n = spec.n();
    let mut fractions = Vec::with_capacity(spec.rank());
    penalty_fractions(spec, lambda, &mut fractions);
    let mut residuals = DVector::zeros(n);
    let mut leverages = DVector::zeros(n);
    let mut loo_errors = DVector::zeros(n);
    for i in 0..n {
        let (e, g) = residual_and_gap(spec, outcome, &fractions, i);
        if g <= LEVERAGE_GAP_FLOOR {
            return Err(Error::LeverageOne(i));
        }
        residuals[i] = e;
        leverages[i] = 1.0 - g;
        loo_errors[i] = e / g;
    }
    let fitted = outcome.y() - &residuals;
    let cv_value = loo_errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
    Ok(RidgeEvaluation {
        lambda,
        fitted,
        residuals,
        leverages,
        loo_errors,
        cv_value,
        df: effective_df(spec, lambda)?,
    })
}

/// tr H(λ) = Σ_ℓ d_ℓ²/(d_ℓ²+λ).
pub fn effective_df(spec: &RidgeSpectrum, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(spec
        .singular_values()
        .iter()
        .map(|d| {
            let a = d * d;
            a / (a + lambda)
        })
        .sum())
}

/// Ridge coefficients V diag(d/(d²+λ)) Uᵀy in the standardized scale.
pub fn coefficients(spec: &RidgeSpectrum, outcome: &Outcome, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let w = DVector::from_iterator(
        spec.rank(),
        spec.singular_values()
            .iter()
            .zip(outcome.uty().iter())
            .map(|(d, c)| d * c / (d * d + lambda)),
    );
    Ok(spec.v() * w)
}

/// Squared leave-one-out errors tabulated on the search grid. Every weighted
/// criterion of the single-weight family is a fixed linear combination of
/// these columns, so one table serves all observations and weights.
#[derive(Debug, Clone)]
pub struct LooTable {
    grid: Vec<f64>,
    /// Row-major: `values[k * n + i]` is e₍ᵢ₎(grid[k])², NaN where undefined.
    values: Vec<f64>,
    totals: Vec<f64>,
    n: usize,
}

impl LooTable {
    pub fn new(spec: &RidgeSpectrum, outcome: &Outcome, opts: &SolverOptions) -> Self {
        let n = spec.n();
        let grid = opts.grid(spec.top_eigenvalue());
        let mut values = Vec::with_capacity(grid.len() * n);
        let mut totals = Vec::with_capacity(grid.len());
        let mut buf = Vec::with_capacity(n);
        for &lambda in &grid {
            match squared_loo_errors(spec, outcome, lambda, &mut buf) {
                Ok(()) => {
                    totals.push(buf.iter().sum());
                    values.extend_from_slice(&buf);
                }
                Err(_) => {
                    totals.push(f64::NAN);
                    values.extend(std::iter::repeat_n(f64::NAN, n));
                }
            }
        }
        Self { grid, values, totals, n }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// e₍ᵢ₎² at grid point k.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.n + i]
    }

    /// Σᵢ e₍ᵢ₎² at grid point k.
    pub fn total(&self, k: usize) -> f64 {
        self.totals[k]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Unweighted CV along the grid and its refined minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub cv_values: Vec<f64>,
    pub minimizer: f64,
    pub cv_at_minimizer: f64,
    pub at_boundary: Boundary,
}

impl CvCurve {
    pub fn df_at_minimizer(&self, spec: &RidgeSpectrum) -> f64 {
        effective_df(spec, self.minimizer).unwrap_or(f64::NAN)
    }
}

pub fn minimize_cv(spec: &RidgeSpectrum, outcome: &Outcome, opts: &SolverOptions) -> Result<CvCurve> {
    let table = LooTable::new(spec, outcome, opts);
    minimize_cv_tabulated(spec, outcome, &table, opts)
}

pub fn minimize_cv_tabulated(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    table: &LooTable,
    opts: &SolverOptions,
) -> Result<CvCurve> {
    let n = spec.n() as f64;
    let cv_values: Vec<f64> = (0..table.grid().len()).map(|k| table.total(k) / n).collect();
    if cv_values.iter().all(|v| !v.is_finite()) {
        // Surface the underlying reason rather than a meaningless optimum.
        cv_value(spec, outcome, *table.grid().last().expect("non-empty grid"))?;
    }
    let mut buf = Vec::with_capacity(spec.n());
    let best = minimize_tabulated(
        table.grid(),
        &cv_values,
        |lambda| match squared_loo_errors(spec, outcome, lambda, &mut buf) {
            Ok(()) => buf.iter().sum::<f64>() / n,
            Err(_) => f64::NAN,
        },
        opts,
    );
    let best = newton_polish(spec, outcome, best, None, opts);
    Ok(CvCurve {
        lambdas: table.grid().to_vec(),
        cv_values,
        minimizer: best.lambda,
        cv_at_minimizer: best.value,
        at_boundary: best.boundary,
    })
}

const NEWTON_STEPS: usize = 8;

/// Newton steps on the analytic derivatives of Σ cⱼ fⱼ(λ), where c is 1/n
/// for every row or, given `(i, w)`, w for row i and (1 − w)/(n − 1) for the
/// rest. Golden-section search only compares criterion values, which stop
/// resolving the minimum where the curve is flat to rounding; the
/// derivatives keep their accuracy there. Boundary minima are left alone.
pub(crate) fn newton_polish(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    start: Minimum,
    weight: Option<(usize, f64)>,
    opts: &SolverOptions,
) -> Minimum {
    if start.boundary.is_boundary() || !(start.lambda > 0.0) {
        return start;
    }
    let n = spec.n();
    let coef = |j: usize| match weight {
        Some((i, w)) if j == i => w,
        Some((_, w)) => (1.0 - w) / (n as f64 - 1.0),
        None => 1.0 / n as f64,
    };
    let cap = opts.lambda_cap_mult * spec.top_eigenvalue();
    let moments = |lambda: f64| -> Option<(f64, f64, f64)> {
        let d = error_derivatives(spec, outcome, lambda).ok()?;
        Some((0..n).fold((0.0, 0.0, 0.0), |(v, a, b), j| {
            let c = coef(j);
            (v + c * d.f[j], a + c * d.f1[j], b + c * d.f2[j])
        }))
    };
    let Some((mut value, mut slope, mut curvature)) = moments(start.lambda) else {
        return start;
    };
    let mut lambda = start.lambda;
    for _ in 0..NEWTON_STEPS {
        if !(curvature > 0.0) {
            break;
        }
        let next = lambda - slope / curvature;
        // Stay in the basin golden section found.
        if !(next > 0.5 * lambda && next < 2.0 * lambda && next < cap) {
            break;
        }
        let Some((v, a, b)) = moments(next) else { break };
        if v > value + 1e-12 * value.abs() || a.abs() >= slope.abs() {
            break;
        }
        let done = (next - lambda).abs() <= 1e-15 * lambda;
        (lambda, value, slope, curvature) = (next, v, a, b);
        if done {
            break;
        }
    }
    Minimum { lambda, value, boundary: start.boundary }
}
