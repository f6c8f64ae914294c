//! The single-normalized-weight CV criterion and per-observation optimal
//! penalty curves.
//!
//! Observation i receives weight wᵢ and every other observation
//! (1 − wᵢ)/(n − 1), so the weights always sum to one. The leave-one-out
//! errors themselves do not depend on the weights.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loocv::{effective_df, newton_polish, squared_loo_errors, LooTable, RidgeEvaluation};
use crate::search::{minimize_tabulated, Boundary, Minimum, SolverOptions};
use crate::spectrum::{Outcome, RidgeSpectrum};

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::WeightOutOfRange(w))
    }
}

#[inline]
fn combine(w: f64, own: f64, total: f64, n: usize) -> f64 {
    w * own + (1.0 - w) / (n as f64 - 1.0) * (total - own)
}

/// wᵢ e₍ᵢ₎² + (1 − wᵢ)/(n − 1) Σ_{j≠i} e₍ⱼ₎² at the evaluation's penalty.
pub fn weighted_cv_value(eval: &RidgeEvaluation, i: usize, w: f64) -> Result<f64> {
    check_weight(w)?;
    let n = eval.loo_errors.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i + 1, len: n });
    }
    let own = eval.loo_errors[i] * eval.loo_errors[i];
    let others: f64 = eval
        .loo_errors
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, e)| e * e)
        .sum();
    Ok(w * own + (1.0 - w) / (n as f64 - 1.0) * others)
}

/// Relative weight factors t; observation i gets weight t/n.
#[derive(Debug, Clone, Serialize)]
pub struct WeightGrid {
    factors: Vec<f64>,
}

impl WeightGrid {
    /// 0, step, 2·step, … up to `max_factor`, always containing t = 1.
    pub fn new(max_factor: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max_factor >= 1.0) || !max_factor.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weight grid needs step > 0 and max factor >= 1 (got step {step}, max {max_factor})"
            )));
        }
        let count = (max_factor / step + 1e-9).floor() as usize;
        let mut factors: Vec<f64> = (0..=count)
            .map(|k| {
                let t = k as f64 * step;
                if (t - 1.0).abs() < 1e-9 { 1.0 } else { t }
            })
            .collect();
        if !factors.contains(&1.0) {
            factors.push(1.0);
            factors.sort_by(f64::total_cmp);
        }
        Ok(Self { factors })
    }

    pub fn from_factors(mut factors: Vec<f64>) -> Result<Self> {
        if factors.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidConfig("weight factors must be finite and >= 0".into()));
        }
        factors.sort_by(f64::total_cmp);
        factors.dedup();
        if !factors.contains(&1.0) {
            return Err(Error::InvalidConfig("weight factors must include 1".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn max_factor(&self) -> f64 {
        *self.factors.last().expect("grid contains 1")
    }

    /// Index of t = 1.
    pub fn unit_index(&self) -> usize {
        self.factors.iter().position(|&t| t == 1.0).expect("grid contains 1")
    }

    fn check_against(&self, n: usize) -> Result<()> {
        if self.max_factor() > n as f64 {
            return Err(Error::InvalidConfig(format!(
                "max weight factor {} exceeds n = {n}",
                self.max_factor()
            )));
        }
        Ok(())
    }
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self::new(4.0, 0.05).expect("valid default")
    }
}

/// Per-point status along an influence curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFlag {
    Interior,
    AtZero,
    AtCap,
    /// Interior point whose λ̂ jumped away from the previous point's, i.e.
    /// the global minimizer moved to a different local basin.
    Jump,
}

impl CurveFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveFlag::Interior => "interior",
            CurveFlag::AtZero => "at_zero",
            CurveFlag::AtCap => "at_cap",
            CurveFlag::Jump => "jump",
        }
    }
}

impl From<Boundary> for CurveFlag {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Interior => CurveFlag::Interior,
            Boundary::AtZero => CurveFlag::AtZero,
            Boundary::AtCap => CurveFlag::AtCap,
        }
    }
}

/// A located discontinuity of λ̂(w), bracketed in factor space.
#[derive(Debug, Clone, Serialize)]
pub struct Jump {
    pub factor_before: f64,
    pub factor_after: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceCurve {
    /// 0-based observation index.
    pub observation: usize,
    pub factors: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub df_hat: Vec<f64>,
    pub flags: Vec<CurveFlag>,
    pub jumps: Vec<Jump>,
}

impl InfluenceCurve {
    pub fn lambda_at(&self, factor: f64) -> Option<f64> {
        self.factors.iter().position(|&t| t == factor).map(|k| self.lambda_hat[k])
    }
}

/// |Δ log λ̂| between neighbouring interior points above which a jump is
/// reported (a factor of 10 in λ).
pub const JUMP_LOG_THRESHOLD: f64 = std::f64::consts::LN_10;
const JUMP_BISECTIONS: usize = 12;

/// Everything needed to solve the weighted problem for any observation and
/// weight: the spectrum, the outcome and the tabulated leave-one-out errors.
pub struct WeightedSolver<'a> {
    spec: &'a RidgeSpectrum,
    outcome: &'a Outcome,
    table: LooTable,
    opts: SolverOptions,
}

impl<'a> WeightedSolver<'a> {
    pub fn new(spec: &'a RidgeSpectrum, outcome: &'a Outcome, opts: SolverOptions) -> Self {
        let table = LooTable::new(spec, outcome, &opts);
        Self { spec, outcome, table, opts }
    }

    pub fn table(&self) -> &LooTable {
        &self.table
    }

    pub fn spectrum(&self) -> &RidgeSpectrum {
        self.spec
    }

    pub fn outcome(&self) -> &Outcome {
        self.outcome
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// wCV(λ, wᵢ) at an arbitrary penalty.
    pub fn criterion(&self, i: usize, w: f64, lambda: f64) -> Result<f64> {
        check_weight(w)?;
        let mut buf = Vec::with_capacity(self.n());
        squared_loo_errors(self.spec, self.outcome, lambda, &mut buf)?;
        Ok(combine(w, buf[i], buf.iter().sum(), self.n()))
    }

    /// λ̂(wᵢ): the minimizer of wCV(·, wᵢ) over [0, cap].
    pub fn solve(&self, i: usize, w: f64) -> Result<Minimum> {
        check_weight(w)?;
        let n = self.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i + 1, len: n });
        }
        let table = &self.table;
        let values: Vec<f64> = (0..table.grid().len())
            .map(|k| combine(w, table.value(k, i), table.total(k), n))
            .collect();
        let mut buf = Vec::with_capacity(n);
        let best = minimize_tabulated(
            table.grid(),
            &values,
            |lambda| match squared_loo_errors(self.spec, self.outcome, lambda, &mut buf) {
                Ok(()) => combine(w, buf[i], buf.iter().sum(), n),
                Err(_) => f64::NAN,
            },
            &self.opts,
        );
        Ok(newton_polish(self.spec, self.outcome, best, Some((i, w)), &self.opts))
    }

    /// λ̂(t/n) for every factor of the grid, with jump localization.
    pub fn influence_curve(&self, i: usize, grid: &WeightGrid) -> Result<InfluenceCurve> {
        let n = self.n();
        grid.check_against(n)?;
        let nf = n as f64;
        let mut lambda_hat = Vec::with_capacity(grid.factors().len());
        let mut flags = Vec::with_capacity(grid.factors().len());
        for &t in grid.factors() {
            let m = self.solve(i, t / nf)?;
            lambda_hat.push(m.lambda);
            flags.push(CurveFlag::from(m.boundary));
        }

        let mut jumps = Vec::new();
        for k in 1..lambda_hat.len() {
            let (a, b) = (lambda_hat[k - 1], lambda_hat[k]);
            let both_interior = flags[k - 1] != CurveFlag::AtZero
                && flags[k - 1] != CurveFlag::AtCap
                && flags[k] == CurveFlag::Interior;
            if both_interior && (b.ln() - a.ln()).abs() > JUMP_LOG_THRESHOLD {
                let jump = self.localize_jump(i, grid.factors()[k - 1], a, grid.factors()[k], b)?;
                warn!(
                    "observation {}: optimal penalty jumps from {:.4e} to {:.4e} between factors {:.4} and {:.4}",
                    i + 1,
                    jump.lambda_before,
                    jump.lambda_after,
                    jump.factor_before,
                    jump.factor_after
                );
                flags[k] = CurveFlag::Jump;
                jumps.push(jump);
            }
        }

        let df_hat = lambda_hat
            .iter()
            .map(|&l| effective_df(self.spec, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(InfluenceCurve {
            observation: i,
            factors: grid.factors().to_vec(),
            lambda_hat,
            df_hat,
            flags,
            jumps,
        })
    }

    /// Bisects the factor interval, keeping the side where λ̂ still changes
    /// by more than the jump threshold.
    fn localize_jump(&self, i: usize, mut t0: f64, mut l0: f64, mut t1: f64, mut l1: f64) -> Result<Jump> {
        let nf = self.n() as f64;
        for _ in 0..JUMP_BISECTIONS {
            let tm = 0.5 * (t0 + t1);
            let lm = self.solve(i, tm / nf)?.lambda;
            let left = (lm.max(f64::MIN_POSITIVE).ln() - l0.max(f64::MIN_POSITIVE).ln()).abs();
            let right = (l1.max(f64::MIN_POSITIVE).ln() - lm.max(f64::MIN_POSITIVE).ln()).abs();
            if left >= right {
                t1 = tm;
                l1 = lm;
            } else {
                t0 = tm;
                l0 = lm;
            }
        }
        Ok(Jump { factor_before: t0, factor_after: t1, lambda_before: l0, lambda_after: l1 })
    }

    /// Curves for every observation, computed in parallel and returned in
    /// observation order.
    pub fn all_curves(&self, grid: &WeightGrid) -> Result<Vec<InfluenceCurve>> {
        (0..self.n())
            .into_par_iter()
            .map(|i| self.influence_curve(i, grid))
            .collect()
    }

    /// Finite-difference slope of λ̂(w) at w = 1/n with step h in weight
    /// units: central when `one_sided` is false, forward otherwise.
    pub fn numerical_slope(&self, i: usize, h: f64, one_sided: bool) -> Result<f64> {
        let w0 = 1.0 / self.n() as f64;
        let up = self.solve(i, w0 + h)?.lambda;
        if one_sided {
            let here = self.solve(i, w0)?.lambda;
            Ok((up - here) / h)
        } else {
            let down = self.solve(i, w0 - h)?.lambda;
            Ok((up - down) / (2.0 * h))
        }
    }
}

/// Convenience wrapper building a solver for a single curve.
pub fn influence_curve(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    i: usize,
    grid: &WeightGrid,
    opts: SolverOptions,
) -> Result<InfluenceCurve> {
    WeightedSolver::new(spec, outcome, opts).influence_curve(i, grid)
}

/// Convenience wrapper for one weighted solve.
pub fn solve_lambda_for_weight(
    spec: &RidgeSpectrum,
    outcome: &Outcome,
    i: usize,
    w: f64,
    opts: SolverOptions,
) -> Result<(f64, Boundary)> {
    let m = WeightedSolver::new(spec, outcome, opts).solve(i, w)?;
    Ok((m.lambda, m.boundary))
}
