//! One-dimensional search for the penalty minimizing a criterion on [0, cap].
//!
//! The criterion is first tabulated on a log-spaced grid (plus λ = 0). The
//! best few local minima of the table are then refined by golden-section
//! search, in log λ for brackets away from zero and in λ for the bracket
//! touching zero, and the global best is kept.

use serde::{Deserialize, Serialize};

/// Where a minimizer sits relative to the search domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Interior,
    AtZero,
    AtCap,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Interior => "interior",
            Boundary::AtZero => "at_zero",
            Boundary::AtCap => "at_cap",
        }
    }

    pub fn is_boundary(self) -> bool {
        self != Boundary::Interior
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Search settings shared by the unweighted and weighted problems.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    /// λ_cap = lambda_cap_mult · d₁².
    pub lambda_cap_mult: f64,
    /// Smallest positive grid point, as a multiple of d₁².
    pub lambda_floor_mult: f64,
    /// Number of log-spaced positive grid points.
    pub grid_points: usize,
    /// Relative tolerance on λ for golden-section refinement.
    pub tol: f64,
    /// Relative tolerance on the criterion; refined candidates within it of
    /// a smaller-λ candidate do not displace it.
    pub cv_tol: f64,
    /// How many grid local minima are refined.
    pub brackets: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda_cap_mult: 1e6,
            lambda_floor_mult: 1e-8,
            grid_points: 201,
            tol: 1e-6,
            cv_tol: 1e-10,
            brackets: 3,
        }
    }
}

impl SolverOptions {
    /// 0 followed by `grid_points` log-spaced values from floor to cap.
    pub fn grid(&self, top_eigenvalue: f64) -> Vec<f64> {
        let lo = (self.lambda_floor_mult * top_eigenvalue).ln();
        let hi = (self.lambda_cap_mult * top_eigenvalue).ln();
        let m = self.grid_points.max(2);
        let mut grid = Vec::with_capacity(m + 1);
        grid.push(0.0);
        for k in 0..m {
            let t = k as f64 / (m - 1) as f64;
            grid.push((lo + t * (hi - lo)).exp());
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub lambda: f64,
    pub value: f64,
    pub boundary: Boundary,
}

const MAX_GOLDEN_ITERATIONS: usize = 500;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` strictly inside (a, b),
/// stopping once the bracket is narrower than `xtol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut it = 0;
    while (b - a) > xtol && it < MAX_GOLDEN_ITERATIONS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        it += 1;
    }
    if fc <= fd { (c, fc) } else { (d, fd) }
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() { f64::INFINITY } else { v }
}

/// Minimizes `objective` given its values tabulated on `grid` (as produced
/// by [`SolverOptions::grid`]). Non-finite table entries mark points where
/// the criterion is undefined.
pub fn minimize_tabulated<F: FnMut(f64) -> f64>(
    grid: &[f64],
    values: &[f64],
    mut objective: F,
    opts: &SolverOptions,
) -> Minimum {
    debug_assert_eq!(grid.len(), values.len());
    let m = grid.len();
    let v: Vec<f64> = values.iter().map(|&x| finite_or_inf(x)).collect();

    let mut candidates: Vec<usize> = (0..m)
        .filter(|&k| {
            v[k].is_finite()
                && (k == 0 || v[k] <= v[k - 1])
                && (k + 1 == m || v[k] <= v[k + 1])
        })
        .collect();
    if candidates.is_empty() {
        // Nothing finite anywhere: report the cap, the least committal answer.
        return Minimum { lambda: grid[m - 1], value: v[m - 1], boundary: Boundary::AtCap };
    }
    candidates.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    candidates.truncate(opts.brackets.max(1));

    let mut best: Option<Minimum> = None;
    for &k in &candidates {
        let cand = if k == 0 && grid[0] == 0.0 {
            Minimum { lambda: 0.0, value: v[0], boundary: Boundary::AtZero }
        } else if k + 1 == m {
            Minimum { lambda: grid[k], value: v[k], boundary: Boundary::AtCap }
        } else {
            let lo = grid[k - 1];
            let hi = grid[k + 1];
            let (lambda, value) = if lo > 0.0 {
                let (u, fu) = golden_section(
                    |u| finite_or_inf(objective(u.exp())),
                    lo.ln(),
                    hi.ln(),
                    opts.tol,
                );
                (u.exp(), fu)
            } else {
                golden_section(|l| finite_or_inf(objective(l)), lo, hi, opts.tol * hi)
            };
            if grid[0] == 0.0 && !v[0].is_finite() && lambda < grid[1] && value <= v[k] {
                // Undefined at zero but still decreasing below the grid floor:
                // the infimum is the zero-penalty limit.
                Minimum { lambda: 0.0, value, boundary: Boundary::AtZero }
            } else if value <= v[k] {
                Minimum { lambda, value, boundary: Boundary::Interior }
            } else {
                Minimum { lambda: grid[k], value: v[k], boundary: Boundary::Interior }
            }
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                let tie = (cand.value - b.value).abs() <= opts.cv_tol * b.value.abs().max(cand.value.abs());
                let prefer_cand = if tie { cand.lambda < b.lambda } else { cand.value < b.value };
                if prefer_cand { cand } else { b }
            }
        });
    }
    best.expect("at least one candidate")
}
