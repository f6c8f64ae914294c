//! Synthetic outcomes on a real (or stand-in) covariate matrix, with
//! deliberately planted expanders and shrinkers.
//!
//! Coefficients are a small perturbation of the first principal component
//! loadings, so the outcome is close to linear in PC1 scores. Residual
//! shifts on chosen rows then create the influential points.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `ScenarioSpec::seed`,
//! which gives the same stream on every platform.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, RawDataset, StandardizeOptions, StandardizedDataset};
use crate::error::{Error, Result};
use crate::influence::{influence_reports, ranking, InfluenceLabel, InfluenceReport};
use crate::loocv::{minimize_cv_tabulated, CvCurve};
use crate::search::SolverOptions;
use crate::spectrum::{InterceptMode, RidgeSpectrum, DEFAULT_RANK_TOLERANCE};
use crate::weighted::WeightedSolver;

fn default_noise_sd() -> f64 {
    1.0
}

fn default_signal_ratio() -> f64 {
    10.0
}

fn default_perturbation() -> f64 {
    0.01
}

/// Role an observation is expected to play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Expander,
    Shrinker,
}

impl Role {
    pub fn label(self) -> InfluenceLabel {
        match self {
            Role::Expander => InfluenceLabel::Expander,
            Role::Shrinker => InfluenceLabel::Shrinker,
        }
    }
}

/// A residual shift added to one row after the clean outcome is drawn.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Injection {
    /// 1-based row of the input covariate matrix.
    pub observation: usize,
    /// Added to the outcome, in outcome units.
    pub residual_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

/// An observation expected to become influential without being shifted.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExpectedRole {
    /// 1-based row of the input covariate matrix.
    pub observation: usize,
    pub role: Role,
}

/// A fully resolved scenario. Serializes to a short TOML file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// var(Xβ) / noise_sd².
    #[serde(default = "default_signal_ratio")]
    pub signal_ratio: f64,
    /// Perturbation sd of β is `perturbation · ‖β‖ / √p`.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub expected: Vec<ExpectedRole>,
    /// 1-based rows removed before anything else happens.
    #[serde(default)]
    pub exclusions: Vec<usize>,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            noise_sd: default_noise_sd(),
            signal_ratio: default_signal_ratio(),
            perturbation: default_perturbation(),
            injections: Vec::new(),
            expected: Vec::new(),
            exclusions: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.noise_sd >= 0.0) || !(self.signal_ratio > 0.0) || !(self.perturbation >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scenario '{}' needs noise_sd >= 0, signal_ratio > 0 and perturbation >= 0",
                self.name
            )));
        }
        let rows = self
            .injections
            .iter()
            .map(|j| j.observation)
            .chain(self.expected.iter().map(|e| e.observation))
            .chain(self.exclusions.iter().copied());
        for r in rows {
            if r == 0 || r > n {
                return Err(Error::IndexOutOfRange { index: r, len: n });
            }
        }
        let mut injected: Vec<usize> = self.injections.iter().map(|j| j.observation).collect();
        injected.sort_unstable();
        if injected.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("an observation is injected twice".into()));
        }
        if self.exclusions.iter().any(|e| injected.contains(e)) {
            return Err(Error::InvalidConfig("an injected observation is also excluded".into()));
        }
        if self.expected.iter().any(|e| self.exclusions.contains(&e.observation)) {
            return Err(Error::InvalidConfig("an expected observation is also excluded".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Injected and expected roles, 1-based, in the original numbering.
    pub fn roles(&self) -> Vec<(usize, Role)> {
        let mut out: Vec<(usize, Role)> = self
            .injections
            .iter()
            .filter_map(|j| j.role.map(|r| (j.observation, r)))
            .chain(self.expected.iter().map(|e| (e.observation, e.role)))
            .collect();
        out.sort_by_key(|&(o, _)| o);
        out
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Simulated {
    /// Covariates after exclusions, standardized again, with the centered
    /// synthetic outcome.
    pub data: StandardizedDataset,
    /// Synthetic outcome of the kept rows, before centering.
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    /// Original 0-based row of every kept row.
    pub kept: Vec<usize>,
    /// (0-based row in `data`, role).
    pub roles: Vec<(usize, Role)>,
}

impl Simulated {
    /// Row of `data` holding the 1-based original observation, if kept.
    pub fn position_of(&self, original: usize) -> Option<usize> {
        self.kept.iter().position(|&k| k + 1 == original)
    }
}

/// Draws one outcome vector for the covariates of `data`.
///
/// β and the noise are drawn on the full matrix, so two specs that differ
/// only in their exclusions share every outcome of the rows they keep.
/// Excluded rows are then dropped and the remaining covariates are
/// standardized again.
pub fn generate(data: &StandardizedDataset, spec: &ScenarioSpec) -> Result<Simulated> {
    let n_all = data.n();
    spec.validate(n_all)?;
    let x = data.x();
    let p = x.ncols();

    let spectrum = RidgeSpectrum::decompose(x, DEFAULT_RANK_TOLERANCE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let loading = spectrum.v().column(0).into_owned();
    let sd_beta = spec.perturbation / (p as f64).sqrt();
    let mut beta = DVector::from_fn(p, |j, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        loading[j] + sd_beta * z
    });
    // Fix the signal variance exactly rather than in expectation.
    let signal = x * &beta;
    let var = signal.norm_squared() / (n_all as f64 - 1.0);
    // A noiseless scenario keeps the unit-noise signal scale.
    let unit = if spec.noise_sd > 0.0 { spec.noise_sd } else { 1.0 };
    let target = spec.signal_ratio * unit * unit;
    let scale = if var > 0.0 { (target / var).sqrt() } else { 0.0 };
    beta *= scale;

    let mut y_all = x * &beta;
    if spec.noise_sd > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for v in y_all.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    for inj in &spec.injections {
        y_all[inj.observation - 1] += inj.residual_shift;
    }

    let excluded: Vec<usize> = spec.exclusions.iter().map(|e| e - 1).collect();
    let kept: Vec<usize> = (0..n_all).filter(|i| !excluded.contains(i)).collect();
    let raw = RawDataset::new(x.clone(), y_all)?
        .with_row_labels(data.row_labels().to_vec())?
        .with_column_labels(data.column_labels().to_vec())?
        .without_rows(&excluded)?;
    let reduced = standardize(&raw, StandardizeOptions::default())?;
    let y = raw.y().clone();

    let position = |orig: usize| kept.iter().position(|&k| k + 1 == orig);
    let roles = spec
        .roles()
        .into_iter()
        .map(|(o, r)| (position(o).expect("validated: roles are kept"), r))
        .collect();

    Ok(Simulated { data: reduced, y, beta, kept, roles })
}

/// Parameters of the built-in scenario family. Shifts are in units of the
/// noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub noise_sd: f64,
    pub signal_ratio: f64,
    pub perturbation: f64,
    pub shift: f64,
    /// Shift of the second expander in the two-expander scenario.
    pub second_shift: f64,
    /// PC1 score of the second expander as a fraction of the first's.
    pub second_position: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            noise_sd: 1.0,
            signal_ratio: 10.0,
            perturbation: 0.01,
            shift: 6.0,
            second_shift: 6.0,
            second_position: 0.4,
        }
    }
}

/// The five planted-influence designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Clean outcome, nothing planted.
    NoInfluence,
    /// Large residual pushing the most extreme PC1 row further along the
    /// trend; its nearest neighbour is dropped.
    Expander,
    /// Same row and exclusion, residual pointing back against the trend.
    Shrinker,
    /// The expander design with the neighbour kept; the neighbour is then
    /// expected to push back as a shrinker.
    ExpanderAndShrinker,
    /// The expander design plus a second expander closer to the centre,
    /// whose nearest neighbour is expected to turn into a shrinker.
    TwoExpanders,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::NoInfluence,
        ScenarioKind::Expander,
        ScenarioKind::Shrinker,
        ScenarioKind::ExpanderAndShrinker,
        ScenarioKind::TwoExpanders,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::NoInfluence => "no-influence",
            ScenarioKind::Expander => "expander",
            ScenarioKind::Shrinker => "shrinker",
            ScenarioKind::ExpanderAndShrinker => "expander-and-shrinker",
            ScenarioKind::TwoExpanders => "two-expanders",
        }
    }

    /// Accepts the names above or the numbers 1 to 5.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().enumerate().find_map(|(k, kind)| {
            let number = (k + 1).to_string();
            (s == kind.name() || s == number || s == format!("scenario{number}") || s == format!("scenario-{number}"))
                .then_some(kind)
        })
    }
}

/// A scenario design before it is tied to particular rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub kind: ScenarioKind,
    pub params: ScenarioParams,
}

pub fn builtin_scenarios() -> Vec<ScenarioTemplate> {
    ScenarioKind::ALL
        .into_iter()
        .map(|kind| ScenarioTemplate { kind, params: ScenarioParams::default() })
        .collect()
}

fn nearest_neighbour(x: &DMatrix<f64>, i: usize, skip: &[usize]) -> usize {
    let row = x.row(i);
    (0..x.nrows())
        .filter(|&j| j != i && !skip.contains(&j))
        .min_by(|&a, &b| {
            let da = (x.row(a) - row).norm_squared();
            let db = (x.row(b) - row).norm_squared();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .expect("at least three rows")
}

impl ScenarioTemplate {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Picks the planted rows for these covariates and returns a concrete
    /// spec. Row choice depends only on the covariates, not on the seed.
    pub fn resolve(&self, data: &StandardizedDataset, seed: u64) -> Result<ScenarioSpec> {
        let x = data.x();
        let spectrum = RidgeSpectrum::decompose(x, DEFAULT_RANK_TOLERANCE)?;
        let (scores, _) = spectrum.pc_scores(1)?;
        let n = x.nrows();
        let extreme = (0..n)
            .max_by(|&a, &b| scores[a].abs().total_cmp(&scores[b].abs()).then(b.cmp(&a)))
            .expect("non-empty");
        let twin = nearest_neighbour(x, extreme, &[]);

        let p = self.params;
        // The outcome rises with the PC1 score, so a shift with the sign of
        // the score pushes the row further along the trend.
        let outward = |row: usize, size: f64| scores[row].signum() * size * p.noise_sd;
        let mut spec = ScenarioSpec::new(self.name(), seed);
        spec.noise_sd = p.noise_sd;
        spec.signal_ratio = p.signal_ratio;
        spec.perturbation = p.perturbation;
        let inject = |row: usize, shift: f64, role: Role| Injection {
            observation: row + 1,
            residual_shift: shift,
            role: Some(role),
        };
        match self.kind {
            ScenarioKind::NoInfluence => {}
            ScenarioKind::Expander => {
                spec.injections.push(inject(extreme, outward(extreme, p.shift), Role::Expander));
                spec.exclusions.push(twin + 1);
            }
            ScenarioKind::Shrinker => {
                spec.injections.push(inject(extreme, -outward(extreme, p.shift), Role::Shrinker));
                spec.exclusions.push(twin + 1);
            }
            ScenarioKind::ExpanderAndShrinker => {
                spec.injections.push(inject(extreme, outward(extreme, p.shift), Role::Expander));
                spec.expected.push(ExpectedRole { observation: twin + 1, role: Role::Shrinker });
            }
            ScenarioKind::TwoExpanders => {
                spec.injections.push(inject(extreme, outward(extreme, p.shift), Role::Expander));
                spec.exclusions.push(twin + 1);
                // Among rows partway towards the centre on the same side,
                // take the one with the closest neighbour.
                let taken = [extreme, twin];
                let reach = scores[extreme];
                let band = |j: usize| {
                    let f = scores[j] / reach;
                    f >= 0.5 * p.second_position && f <= 1.5 * p.second_position
                };
                let gap = |j: usize| (x.row(nearest_neighbour(x, j, &taken)) - x.row(j)).norm_squared();
                let candidates: Vec<usize> = (0..n).filter(|j| !taken.contains(j) && band(*j)).collect();
                let second = if candidates.is_empty() {
                    let target = p.second_position * reach;
                    (0..n)
                        .filter(|j| !taken.contains(j))
                        .min_by(|&a, &b| {
                            (scores[a] - target).abs().total_cmp(&(scores[b] - target).abs()).then(a.cmp(&b))
                        })
                        .expect("enough rows")
                } else {
                    candidates
                        .into_iter()
                        .min_by(|&a, &b| gap(a).total_cmp(&gap(b)).then(a.cmp(&b)))
                        .expect("non-empty")
                };
                let partner = nearest_neighbour(x, second, &taken);
                spec.injections.push(inject(second, outward(second, p.second_shift), Role::Expander));
                spec.expected.push(ExpectedRole { observation: partner + 1, role: Role::Shrinker });
            }
        }
        Ok(spec)
    }
}

/// Influence reports for a simulated data set.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub simulated: Simulated,
    pub cv: CvCurve,
    pub reports: Vec<InfluenceReport>,
    /// 0-based rows by decreasing rank score.
    pub ranking: Vec<usize>,
}

impl ScenarioRun {
    /// True when every planted role sits in the top `k` rank scores with the
    /// matching label.
    pub fn recovered(&self, k: usize) -> bool {
        let top = &self.ranking[..k.min(self.ranking.len())];
        self.simulated
            .roles
            .iter()
            .all(|&(row, role)| top.contains(&row) && self.reports[row].label == role.label())
    }
}

pub fn run_scenario(data: &StandardizedDataset, spec: &ScenarioSpec, opts: &SolverOptions) -> Result<ScenarioRun> {
    let simulated = generate(data, spec)?;
    let spectrum = RidgeSpectrum::decompose(simulated.data.x(), DEFAULT_RANK_TOLERANCE)?
        .with_intercept_mode(InterceptMode::Auto)?;
    let outcome = spectrum.project(simulated.data.y())?;
    let solver = WeightedSolver::new(&spectrum, &outcome, *opts);
    let cv = minimize_cv_tabulated(&spectrum, &outcome, solver.table(), opts)?;
    let reports = influence_reports(&solver, &cv, None)?;
    let ranking = ranking(&reports);
    Ok(ScenarioRun { simulated, cv, reports, ranking })
}

/// Rows of the stand-in covariate matrix.
pub const STANDIN_ROWS: usize = 40;
/// Columns of the stand-in covariate matrix.
pub const STANDIN_COLUMNS: usize = 500;

/// A 40 × 500 matrix with a dominant first component (roughly a quarter
/// of the variance), a decaying tail of weaker factors and noise. Two rows are near
/// copies of others: one of the row with the most extreme first-factor
/// score and one of a row partway towards the centre, so the built-in
/// scenarios find close neighbours where they need them.
pub fn standin_covariates(seed: u64) -> Result<StandardizedDataset> {
    // Factor k > 1 has variance 0.8/k, giving a slowly decaying spectrum.
    const FACTORS: usize = 30;
    const NOISE_SD: f64 = 0.6;
    const REPLICATE_SD: f64 = 0.2;
    const EXTREME_SCORE: f64 = 3.0;
    let factor_sd: Vec<f64> = (1..=FACTORS)
        .map(|k| if k == 1 { 1.0 } else { (0.8 / k as f64).sqrt() })
        .collect();
    let (n, p) = (STANDIN_ROWS, STANDIN_COLUMNS);
    let distinct = n - 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = move || -> f64 { StandardNormal.sample(&mut rng) };

    let loadings = DMatrix::from_fn(FACTORS, p, |_, _| draw());
    let mut scores = DMatrix::from_fn(distinct, FACTORS, |_, k| factor_sd[k] * draw());
    // Make the most extreme first-factor row stand clearly apart.
    let extreme = (0..distinct)
        .max_by(|&a, &b| scores[(a, 0)].abs().total_cmp(&scores[(b, 0)].abs()))
        .expect("rows");
    scores[(extreme, 0)] = EXTREME_SCORE.copysign(scores[(extreme, 0)]);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..distinct {
        for j in 0..p {
            let signal: f64 = (0..FACTORS).map(|k| scores[(i, k)] * loadings[(k, j)]).sum();
            x[(i, j)] = signal + NOISE_SD * draw();
        }
    }
    let first: Vec<f64> = scores.column(0).iter().copied().collect();
    let target = 0.4 * first[extreme];
    let middle = (0..distinct)
        .filter(|&i| i != extreme)
        .min_by(|&a, &b| (first[a] - target).abs().total_cmp(&(first[b] - target).abs()))
        .expect("rows");
    for (row, source) in [(distinct, extreme), (distinct + 1, middle)] {
        for j in 0..p {
            x[(row, j)] = x[(source, j)] + REPLICATE_SD * draw();
        }
    }
    let raw = RawDataset::new(x, DVector::zeros(n))?;
    standardize(&raw, StandardizeOptions::default())
}
