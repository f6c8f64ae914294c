//! End-to-end influence analysis and its file outputs.
//!
//! ingest → standardize → decompose → minimize CV → one λ̂(w) curve per
//! observation → slopes at w = 1/n → labels. Observation numbers in every
//! output are 1-based.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{standardize, RawDataset, StandardizeOptions, StandardizedDataset, VARIANCE_DIVISOR};
use crate::error::{Error, Result};
use crate::influence::{influence_reports, ranking, univariate_nominator_factors, InfluenceReport};
use crate::io::{parse_bodyfat, read_csv_path, BodyfatOptions, CsvOptions};
use crate::loocv::{effective_df, minimize_cv, minimize_cv_tabulated, CvCurve};
use crate::plot::{curves_svg, pc_scatter_svg, CurveScale};
use crate::search::{Boundary, SolverOptions};
use crate::spectrum::{InterceptMode, Outcome, RidgeSpectrum, DEFAULT_RANK_TOLERANCE};
use crate::weighted::{InfluenceCurve, WeightGrid, WeightedSolver};

/// How the input file is laid out.
#[derive(Debug, Clone)]
pub enum InputFormat {
    Csv(CsvOptions),
    /// Whitespace-separated StatLib body-fat file.
    Bodyfat(BodyfatOptions),
}

impl Default for InputFormat {
    fn default() -> Self {
        InputFormat::Csv(CsvOptions::default())
    }
}

pub fn load_input(path: &Path, format: &InputFormat) -> Result<RawDataset> {
    match format {
        InputFormat::Csv(opts) => read_csv_path(path, opts),
        InputFormat::Bodyfat(opts) => parse_bodyfat(&fs::read_to_string(path)?, *opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlotSelection {
    pub lambda: bool,
    pub df: bool,
    pub pc: bool,
}

impl Default for PlotSelection {
    fn default() -> Self {
        Self { lambda: true, df: true, pc: true }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub standardize: StandardizeOptions,
    pub intercept: InterceptMode,
    pub rank_tolerance: f64,
    pub max_factor: f64,
    pub factor_step: f64,
    pub solver: SolverOptions,
    /// Labelling threshold on |∂λ̂/∂w|; `None` uses 1e-3 × median.
    pub tol_label: Option<f64>,
    /// 1-based observations to draw bold. Empty means the top `top_k`.
    pub highlight: Vec<usize>,
    pub top_k: usize,
    pub plots: PlotSelection,
    /// Also refit with each row physically removed.
    pub deletion: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: InputFormat::default(),
            standardize: StandardizeOptions::default(),
            intercept: InterceptMode::Auto,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            max_factor: 4.0,
            factor_step: 0.05,
            solver: SolverOptions::default(),
            tol_label: None,
            highlight: Vec::new(),
            top_k: 3,
            plots: PlotSelection::default(),
            deletion: true,
        }
    }
}

/// Spectrum and outcome of one data set, ready for any of the analyses.
pub struct Prepared {
    pub data: StandardizedDataset,
    pub spectrum: RidgeSpectrum,
    pub outcome: Outcome,
}

impl Prepared {
    pub fn new(raw: &RawDataset, config: &AnalysisConfig) -> Result<Self> {
        let data = standardize(raw, config.standardize)?;
        let spectrum = RidgeSpectrum::decompose(data.x(), config.rank_tolerance)?.with_intercept_mode(config.intercept)?;
        let outcome = spectrum.project(data.y())?;
        Ok(Self { data, spectrum, outcome })
    }

    pub fn solver(&self, opts: SolverOptions) -> WeightedSolver<'_> {
        WeightedSolver::new(&self.spectrum, &self.outcome, opts)
    }

    pub fn cv(&self, opts: &SolverOptions) -> Result<CvCurve> {
        minimize_cv(&self.spectrum, &self.outcome, opts)
    }
}

/// λ̂ with one row given weight zero versus physically removed.
#[derive(Debug, Clone, Serialize)]
pub struct DeletionRecord {
    pub observation: usize,
    pub lambda_weight_zero: f64,
    pub lambda_deleted: f64,
    pub deleted_boundary: Option<Boundary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PcSummary {
    pub scores: Vec<f64>,
    pub explained: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisBundle {
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    pub intercept_refit: bool,
    pub column_labels: Vec<String>,
    pub row_labels: Vec<String>,
    /// Outcome as ingested.
    pub outcome: Vec<f64>,
    pub cv: CvCurve,
    pub df_at_minimizer: f64,
    pub grid_factors: Vec<f64>,
    pub curves: Vec<InfluenceCurve>,
    pub reports: Vec<InfluenceReport>,
    /// 0-based rows by decreasing rank score.
    pub ranking: Vec<usize>,
    /// 0-based rows drawn bold.
    pub highlights: Vec<usize>,
    pub pc1: PcSummary,
    pub deletion: Vec<DeletionRecord>,
    pub elapsed_secs: f64,
}

pub fn run_analysis(config: &AnalysisConfig) -> Result<AnalysisBundle> {
    let path = config
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no input file given".into()))?;
    let raw = load_input(path, &config.format)?;
    run_analysis_on(&raw, config)
}

pub fn run_analysis_on(raw: &RawDataset, config: &AnalysisConfig) -> Result<AnalysisBundle> {
    let started = Instant::now();
    let prepared = Prepared::new(raw, config)?;
    let (n, p) = (prepared.data.n(), prepared.data.p());
    let grid = WeightGrid::new(config.max_factor, config.factor_step)?;
    if grid.max_factor() > n as f64 {
        return Err(Error::InvalidConfig(format!(
            "max weight factor {} exceeds n = {n}",
            grid.max_factor()
        )));
    }
    let highlights_requested = config
        .highlight
        .iter()
        .map(|&h| if (1..=n).contains(&h) { Ok(h - 1) } else { Err(Error::IndexOutOfRange { index: h, len: n }) })
        .collect::<Result<Vec<_>>>()?;

    let solver = prepared.solver(config.solver);
    let cv = minimize_cv_tabulated(&prepared.spectrum, &prepared.outcome, solver.table(), &config.solver)?;
    info!("lambda_cv = {:.6e} ({})", cv.minimizer, cv.at_boundary);
    if cv.at_boundary.is_boundary() {
        warn!("the CV minimizer is on the {} boundary; slopes are one-sided differences", cv.at_boundary);
    }
    let curves = solver.all_curves(&grid)?;
    let mut reports = influence_reports(&solver, &cv, config.tol_label)?;
    if p == 1 && cv.minimizer > 0.0 {
        let x: Vec<f64> = prepared.data.x().column(0).iter().copied().collect();
        let y: Vec<f64> = prepared.data.y().iter().copied().collect();
        let factors = univariate_nominator_factors(&prepared.spectrum, &x, &y, cv.minimizer)?;
        for (r, f) in reports.iter_mut().zip(factors) {
            r.nominator_factor = Some(f);
        }
    }
    let order = ranking(&reports);
    let highlights = if highlights_requested.is_empty() {
        order.iter().take(config.top_k).copied().collect()
    } else {
        highlights_requested
    };

    let (scores, explained) = prepared.spectrum.pc_scores(1)?;
    let deletion = if config.deletion { deletion_records(raw, config, &curves)? } else { Vec::new() };

    Ok(AnalysisBundle {
        n,
        p,
        rank: prepared.spectrum.rank(),
        intercept_refit: prepared.spectrum.refits_intercept(),
        column_labels: prepared.data.column_labels().to_vec(),
        row_labels: prepared.data.row_labels().to_vec(),
        outcome: raw.y().iter().copied().collect(),
        df_at_minimizer: effective_df(&prepared.spectrum, cv.minimizer)?,
        cv,
        grid_factors: grid.factors().to_vec(),
        curves,
        reports,
        ranking: order,
        highlights,
        pc1: PcSummary { scores: scores.iter().copied().collect(), explained },
        deletion,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

/// Refits without each row in turn. The weight-zero criterion keeps the
/// removed row inside every other fold's training set, so the two numbers
/// are not expected to agree exactly.
fn deletion_records(raw: &RawDataset, config: &AnalysisConfig, curves: &[InfluenceCurve]) -> Result<Vec<DeletionRecord>> {
    (0..raw.n())
        .into_par_iter()
        .map(|i| {
            let at_zero = curves[i].lambda_hat.first().copied().unwrap_or(f64::NAN);
            let refit = raw
                .without_rows(&[i])
                .and_then(|r| Prepared::new(&r, config))
                .and_then(|p| p.cv(&config.solver));
            Ok(match refit {
                Ok(cv) => DeletionRecord {
                    observation: i,
                    lambda_weight_zero: at_zero,
                    lambda_deleted: cv.minimizer,
                    deleted_boundary: Some(cv.at_boundary),
                },
                Err(e) => {
                    warn!("observation {}: refit without it failed: {e}", i + 1);
                    DeletionRecord {
                        observation: i,
                        lambda_weight_zero: at_zero,
                        lambda_deleted: f64::NAN,
                        deleted_boundary: None,
                    }
                }
            })
        })
        .collect()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_curves_csv<W: Write>(bundle: &AnalysisBundle, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["observation", "factor", "weight", "lambda_hat", "df_hat", "flag"])?;
    let n = bundle.n as f64;
    for c in &bundle.curves {
        for k in 0..c.factors.len() {
            let t = c.factors[k];
            w.write_record([
                (c.observation + 1).to_string(),
                t.to_string(),
                (t / n).to_string(),
                c.lambda_hat[k].to_string(),
                c.df_hat[k].to_string(),
                c.flags[k].as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv<W: Write>(bundle: &AnalysisBundle, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["observation", "derivative", "label", "rank_score", "boundary_flag", "nominator_factor"])?;
    for r in &bundle.reports {
        w.write_record([
            (r.observation + 1).to_string(),
            r.derivative.to_string(),
            r.label.as_str().to_string(),
            r.rank_score.to_string(),
            bundle.cv.at_boundary.as_str().to_string(),
            r.nominator_factor.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cv_csv<W: Write>(bundle: &AnalysisBundle, out: W) -> Result<()> {
    write_cv_curve_csv(&bundle.cv, out)
}

pub fn write_cv_curve_csv<W: Write>(cv: &CvCurve, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["lambda", "cv"])?;
    for (l, v) in cv.lambdas.iter().zip(&cv.cv_values) {
        w.write_record([l.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(curve: &InfluenceCurve, n: usize, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["factor", "weight", "lambda_hat", "df_hat", "flag"])?;
    for k in 0..curve.factors.len() {
        let t = curve.factors[k];
        w.write_record([
            t.to_string(),
            (t / n as f64).to_string(),
            curve.lambda_hat[k].to_string(),
            curve.df_hat[k].to_string(),
            curve.flags[k].as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_deletion_csv<W: Write>(bundle: &AnalysisBundle, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["observation", "lambda_weight_zero", "lambda_deleted", "deleted_boundary"])?;
    for d in &bundle.deletion {
        w.write_record([
            (d.observation + 1).to_string(),
            d.lambda_weight_zero.to_string(),
            d.lambda_deleted.to_string(),
            d.deleted_boundary.map(|b| b.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run manifest: configuration, data shape, the CV optimum and timing.
pub fn meta_json(bundle: &AnalysisBundle, config: &AnalysisConfig) -> serde_json::Value {
    let format = match &config.format {
        InputFormat::Csv(o) => serde_json::json!({
            "kind": "csv",
            "header": o.has_header,
            "delimiter": (o.delimiter as char).to_string(),
            "outcome": o.outcome.to_string(),
            "drop": o.drop.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        }),
        InputFormat::Bodyfat(o) => serde_json::json!({ "kind": "bodyfat", "drop_age": o.drop_age }),
    };
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "input": config.input.as_ref().map(|p| p.display().to_string()),
        "format": format,
        "n": bundle.n,
        "p": bundle.p,
        "rank": bundle.rank,
        "variance_divisor": VARIANCE_DIVISOR,
        "scale_outcome": config.standardize.scale_outcome,
        "intercept": config.intercept.as_str(),
        "intercept_refit": bundle.intercept_refit,
        "rank_tolerance": config.rank_tolerance,
        "solver": config.solver,
        "max_factor": config.max_factor,
        "factor_step": config.factor_step,
        "tol_label": config.tol_label,
        "lambda_cv": bundle.cv.minimizer,
        "cv_at_minimizer": bundle.cv.cv_at_minimizer,
        "boundary": bundle.cv.at_boundary.as_str(),
        "df_at_minimizer": bundle.df_at_minimizer,
        "pc1_explained": bundle.pc1.explained,
        "highlights": bundle.highlights.iter().map(|h| h + 1).collect::<Vec<_>>(),
        "elapsed_secs": bundle.elapsed_secs,
    })
}

/// File name and SVG text of every selected plot.
pub fn render_plots(bundle: &AnalysisBundle, plots: PlotSelection) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if plots.lambda {
        out.push((
            "lambda_curves.svg".into(),
            curves_svg(&bundle.curves, &bundle.highlights, CurveScale::Lambda, "Optimal penalty against observation weight"),
        ));
    }
    if plots.df {
        out.push((
            "df_curves.svg".into(),
            curves_svg(&bundle.curves, &bundle.highlights, CurveScale::Df, "Degrees of freedom against observation weight"),
        ));
    }
    if plots.pc {
        out.push((
            "pc1_scatter.svg".into(),
            pc_scatter_svg(&bundle.pc1.scores, &bundle.outcome, bundle.pc1.explained, &bundle.highlights, "Outcome against first principal component"),
        ));
    }
    out
}

/// Writes `curves.csv`, `report.csv`, `cv.csv`, `deletion.csv` (when
/// computed), `meta.json` and `plots/*.svg` into `dir`.
pub fn write_outputs(bundle: &AnalysisBundle, config: &AnalysisConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = dir.join(name);
        fs::write(&path, buf)?;
        written.push(path);
        Ok(())
    };
    emit("curves.csv", &|b| write_curves_csv(bundle, b))?;
    emit("report.csv", &|b| write_report_csv(bundle, b))?;
    emit("cv.csv", &|b| write_cv_csv(bundle, b))?;
    if !bundle.deletion.is_empty() {
        emit("deletion.csv", &|b| write_deletion_csv(bundle, b))?;
    }
    emit("meta.json", &|b| {
        serde_json::to_writer_pretty(&mut *b, &meta_json(bundle, config))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        b.push(b'\n');
        Ok(())
    })?;
    let plots = render_plots(bundle, config.plots);
    if !plots.is_empty() {
        let plot_dir = dir.join("plots");
        fs::create_dir_all(&plot_dir)?;
        for (name, svg) in plots {
            let path = plot_dir.join(name);
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Plain-text overview with the `k` most influential observations.
pub fn summary(bundle: &AnalysisBundle, k: usize) -> String {
    let mut s = format!(
        "n = {}, p = {}, rank = {}{}\nlambda_cv = {:.6e} ({}), df = {:.4}, PC1 explains {:.2}%\n",
        bundle.n,
        bundle.p,
        bundle.rank,
        if bundle.intercept_refit { ", intercept refitted in each fold" } else { "" },
        bundle.cv.minimizer,
        bundle.cv.at_boundary,
        bundle.df_at_minimizer,
        100.0 * bundle.pc1.explained,
    );
    s.push_str(&format!("top {} by |d lambda_hat / d w|:\n", k.min(bundle.n)));
    s.push_str("  obs  label     derivative      score\n");
    for &i in bundle.ranking.iter().take(k) {
        let r = &bundle.reports[i];
        s.push_str(&format!(
            "  {:>3}  {:<8}  {:>13.6e}  {:>8.3}\n",
            i + 1,
            r.label.as_str(),
            r.derivative,
            r.rank_score
        ));
    }
    s
}
