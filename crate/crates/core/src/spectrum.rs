//! Thin SVD of the design matrix and the per-outcome projections that make
//! every ridge quantity an O(n·r) computation at any penalty.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Singular values below `rank_tolerance * d[0]` are dropped.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-12;

/// X = U diag(d) Vᵀ with r retained components.
#[derive(Debug, Clone)]
pub struct RidgeSpectrum {
    u: DMatrix<f64>,
    d: DVector<f64>,
    v: DMatrix<f64>,
    /// U copied row-major so per-observation loops stay contiguous.
    u_rows: Vec<f64>,
    /// 1 − ‖U_i·‖² (minus 1/n with a refitted intercept): the part of
    /// 1 − H_ii that no penalty can remove.
    leverage_gap: Vec<f64>,
    total_variance: f64,
    intercept: bool,
}

/// How leave-one-out folds treat the intercept.
///
/// Without an intercept the model is the plain ridge fit on the given
/// (centered) columns. With `Refit` every fold re-estimates an unpenalized
/// intercept, which adds 1/n to each leverage. On centered data whose
/// rank is n − 1 the plain model interpolates the centered outcome and
/// its leave-one-out error vanishes as λ → 0, so `Auto` refits exactly
/// in that case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    #[default]
    Auto,
    None,
    Refit,
}

impl InterceptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InterceptMode::Auto => "auto",
            InterceptMode::None => "none",
            InterceptMode::Refit => "refit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Some(InterceptMode::Auto),
            "none" => Some(InterceptMode::None),
            "refit" => Some(InterceptMode::Refit),
            _ => None,
        }
    }
}

/// Largest |mean| of a column, relative to its scale, still treated as centered.
const CENTERED_TOL: f64 = 1e-8;

impl RidgeSpectrum {
    /// Thin SVD with rank truncation. The sign of each component is fixed so
    /// that the largest-magnitude entry of its U column is positive.
    pub fn decompose(x: &DMatrix<f64>, rank_tolerance: f64) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput);
        }
        let total_variance = x.norm_squared();
        // Bidiagonalizing the tall orientation is cheaper and the result is
        // the same up to swapping the factors.
        let wide = p > n;
        let work = if wide { x.transpose() } else { x.clone() };
        let svd = SVD::try_new(work, true, true, f64::EPSILON * 5.0, 100_000)
            .ok_or(Error::DecompositionFailure)?;
        let (left, right_t, sv) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt, svd.singular_values),
            _ => return Err(Error::DecompositionFailure),
        };
        let (mut u, mut v) = if wide {
            (right_t.transpose(), left)
        } else {
            (left, right_t.transpose())
        };

        let d1 = sv.iter().copied().fold(0.0_f64, f64::max);
        if !(d1 > 0.0) || sv.iter().any(|s| !s.is_finite()) {
            return Err(Error::DecompositionFailure);
        }
        let r = sv.iter().take_while(|&&s| s > rank_tolerance * d1).count();
        u = u.columns(0, r).into_owned();
        v = v.columns(0, r).into_owned();
        let d = DVector::from_iterator(r, sv.iter().take(r).copied());

        for l in 0..r {
            let col = u.column(l);
            let mut best = 0;
            for i in 1..n {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            if col[best] < 0.0 {
                u.column_mut(l).neg_mut();
                v.column_mut(l).neg_mut();
            }
        }

        let mut u_rows = vec![0.0; n * r];
        for i in 0..n {
            for l in 0..r {
                u_rows[i * r + l] = u[(i, l)];
            }
        }
        let leverage_gap = (0..n)
            .map(|i| {
                if r == n {
                    0.0
                } else {
                    let s: f64 = u_rows[i * r..(i + 1) * r].iter().map(|a| a * a).sum();
                    (1.0 - s).max(0.0)
                }
            })
            .collect();

        Ok(Self { u, d, v, u_rows, leverage_gap, total_variance, intercept: false })
    }

    /// True when the column space is orthogonal to the constant vector.
    pub fn is_centered(&self) -> bool {
        let n = self.n() as f64;
        self.u.column_iter().all(|c| (c.sum() / n.sqrt()).abs() <= CENTERED_TOL)
    }

    /// Switches leave-one-out quantities to folds that refit an unpenalized
    /// intercept. Requires centered columns.
    pub fn with_refitted_intercept(mut self) -> Result<Self> {
        if self.intercept {
            return Ok(self);
        }
        if !self.is_centered() {
            return Err(Error::InvalidConfig(
                "refitting an intercept needs centered covariate columns".into(),
            ));
        }
        let share = 1.0 / self.n() as f64;
        for g in &mut self.leverage_gap {
            *g = (*g - share).max(0.0);
        }
        self.intercept = true;
        Ok(self)
    }

    pub fn with_intercept_mode(self, mode: InterceptMode) -> Result<Self> {
        match mode {
            InterceptMode::None => Ok(self),
            InterceptMode::Refit => self.with_refitted_intercept(),
            InterceptMode::Auto => {
                if self.rank() + 1 >= self.n() && self.is_centered() {
                    self.with_refitted_intercept()
                } else {
                    Ok(self)
                }
            }
        }
    }

    pub fn refits_intercept(&self) -> bool {
        self.intercept
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Largest eigenvalue of XᵀX, the natural scale for the penalty.
    pub fn top_eigenvalue(&self) -> f64 {
        self.d[0] * self.d[0]
    }

    /// ‖X‖²_F, including any truncated components.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub(crate) fn u_row(&self, i: usize) -> &[f64] {
        let r = self.rank();
        &self.u_rows[i * r..(i + 1) * r]
    }

    pub(crate) fn leverage_gap(&self, i: usize) -> f64 {
        self.leverage_gap[i]
    }

    /// Caches Uᵀy and the part of y outside the column space of X.
    pub fn project(&self, y: &DVector<f64>) -> Result<Outcome> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "outcome length {} but spectrum has {} rows",
                y.len(),
                self.n()
            )));
        }
        let uty = self.u.tr_mul(y);
        let residual = if self.rank() == self.n() {
            DVector::zeros(self.n())
        } else {
            y - &self.u * &uty
        };
        Ok(Outcome { y: y.clone(), uty, residual })
    }

    /// PC score vector U·ₖ dₖ and the fraction of total variance explained,
    /// for the 1-based component `k`.
    pub fn pc_scores(&self, k: usize) -> Result<(DVector<f64>, f64)> {
        if k == 0 || k > self.rank() {
            return Err(Error::IndexOutOfRange { index: k, len: self.rank() });
        }
        let dk = self.d[k - 1];
        let scores = self.u.column(k - 1) * dk;
        Ok((scores, dk * dk / self.total_variance))
    }
}

/// An outcome vector bound to a spectrum.
#[derive(Debug, Clone)]
pub struct Outcome {
    y: DVector<f64>,
    uty: DVector<f64>,
    /// y − UUᵀy: the OLS residual when n > r.
    residual: DVector<f64>,
}

impl Outcome {
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn uty(&self) -> &DVector<f64> {
        &self.uty
    }

    pub(crate) fn orthogonal_residual(&self, i: usize) -> f64 {
        self.residual[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_invariants(x: &DMatrix<f64>, s: &RidgeSpectrum) {
        let r = s.rank();
        let utu = s.u().tr_mul(s.u());
        let vtv = s.v().tr_mul(s.v());
        assert!((utu - DMatrix::identity(r, r)).amax() < 1e-8);
        assert!((vtv - DMatrix::identity(r, r)).amax() < 1e-8);
        let recon = s.u() * DMatrix::from_diagonal(s.singular_values()) * s.v().transpose();
        assert!((x - recon).norm() <= 1e-8 * x.norm());
        let d = s.singular_values();
        assert!(d.iter().all(|&v| v > 0.0));
        assert!(d.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let x = DMatrix::<f64>::identity(2, 2);
        let s = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        assert_eq!(s.rank(), 2);
        assert_abs_diff_eq!(s.singular_values()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.singular_values()[1], 1.0, epsilon = 1e-14);
        let (_, frac) = s.pc_scores(1).unwrap();
        assert_abs_diff_eq!(frac, 0.5, epsilon = 1e-14);
        assert!(matches!(s.pc_scores(3), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.pc_scores(0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn duplicate_columns_reduce_rank() {
        let mut x = random_matrix(10, 4, 3);
        let c0 = x.column(0).into_owned();
        x.set_column(3, &c0);
        let s = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        assert_eq!(s.rank(), 3);
        check_invariants(&x, &s);
    }

    #[test]
    fn tall_and_wide_invariants() {
        for &(n, p, seed) in &[(12, 5, 1), (6, 40, 2), (7, 7, 3)] {
            let x = random_matrix(n, p, seed);
            let s = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
            assert_eq!(s.rank(), n.min(p));
            check_invariants(&x, &s);
            let total: f64 = (1..=s.rank()).map(|k| s.pc_scores(k).unwrap().1).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sign_convention_and_determinism() {
        let x = random_matrix(9, 4, 11);
        let a = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        let b = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        assert_eq!(a.u(), b.u());
        assert_eq!(a.singular_values(), b.singular_values());
        for l in 0..a.rank() {
            let col = a.u().column(l);
            let peak = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(peak > 0.0);
        }
    }

    #[test]
    fn kidney_scale_shape() {
        let x = random_matrix(26, 28869, 5);
        let s = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        assert!(s.rank() <= 26);
        assert_eq!(s.p(), 28869);
    }

    #[test]
    fn projection_splits_outcome() {
        let x = random_matrix(8, 3, 9);
        let s = RidgeSpectrum::decompose(&x, DEFAULT_RANK_TOLERANCE).unwrap();
        let y = DVector::from_fn(8, |i, _| i as f64 - 3.0);
        let o = s.project(&y).unwrap();
        let fitted = s.u() * o.uty();
        for i in 0..8 {
            assert_abs_diff_eq!(fitted[i] + o.orthogonal_residual(i), y[i], epsilon = 1e-12);
        }
        assert!(s.project(&DVector::zeros(3)).is_err());
    }
}
