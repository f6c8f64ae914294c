use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ridge_influence::analysis::{
    load_input, run_analysis, summary, write_curve_csv, write_cv_curve_csv, write_outputs, AnalysisConfig,
    InputFormat, PlotSelection, Prepared,
};
use ridge_influence::io::{
    parse_bodyfat_table, read_covariates, write_bodyfat_csv, BodyfatOptions, ColumnSelector, CsvOptions, BODYFAT_URL,
};
use ridge_influence::simgen::{
    run_scenario, standin_covariates, ScenarioKind, ScenarioParams, ScenarioSpec, ScenarioTemplate,
};
use ridge_influence::weighted::WeightGrid;
use ridge_influence::{standardize, InterceptMode, SolverOptions, StandardizeOptions};

#[derive(Parser)]
#[command(name = "ridge-influence", version, about = "Which observations move the leave-one-out ridge penalty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full analysis: CV optimum, influence curves, slopes, labels and plots.
    Analyze(AnalyzeArgs),
    /// Tabulate the leave-one-out criterion and report its minimizer.
    Cv(CvArgs),
    /// Influence curve of a single observation.
    Curve(CurveArgs),
    /// Plant influential observations in a synthetic outcome and check they are found.
    Simulate(SimulateArgs),
    /// Download the body-fat data and store it as CSV.
    FetchBodyfat(FetchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bodyfat,
}

#[derive(Args)]
struct DataArgs {
    /// Input table.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Outcome column, by header name or 1-based position.
    #[arg(long, default_value = "1")]
    outcome: String,
    /// Columns to ignore, comma separated.
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Keep age as a covariate when reading the body-fat file.
    #[arg(long)]
    keep_age: bool,
    /// Divide the centered outcome by its standard deviation.
    #[arg(long)]
    scale_outcome: bool,
    /// auto, none or refit.
    #[arg(long, default_value = "auto", value_parser = parse_intercept)]
    intercept: InterceptMode,
}

#[derive(Args)]
struct SolverArgs {
    /// Search cap as a multiple of the largest squared singular value.
    #[arg(long, default_value_t = SolverOptions::default().lambda_cap_mult)]
    lambda_cap_mult: f64,
    /// Log-spaced grid points before refinement.
    #[arg(long, default_value_t = SolverOptions::default().grid_points)]
    grid_points: usize,
    /// Relative tolerance of the refinement.
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    tol: f64,
}

#[derive(Args)]
struct GridArgs {
    /// Largest weight, as a multiple of 1/n.
    #[arg(long, default_value_t = 4.0)]
    max_factor: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Labelling threshold on |d lambda / d w|; default 1e-3 times the median.
    #[arg(long)]
    tol_label: Option<f64>,
    /// 1-based observations to highlight in plots, comma separated.
    #[arg(long, value_delimiter = ',')]
    highlight: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long)]
    no_plots: bool,
    /// Skip the refits with each row removed.
    #[arg(long)]
    no_deletion: bool,
    #[arg(long, short, default_value = "ridge-influence-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the tabulated criterion here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// 1-based observation.
    #[arg(long)]
    obs: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario (no-influence, expander, shrinker,
    /// expander-and-shrinker, two-expanders or 1-5) or a TOML spec file.
    #[arg(long)]
    scenario: String,
    /// Covariate-only CSV; defaults to a generated 40 x 500 matrix.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = 1)]
    standin_seed: u64,
    /// First outcome seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Shift of planted observations, in noise standard deviations.
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for resolved specs and per-replicate reports.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long, default_value = BODYFAT_URL)]
    url: String,
    /// Convert a local copy instead of downloading.
    #[arg(long)]
    local: Option<PathBuf>,
    #[arg(long, short, default_value = "bodyfat.csv")]
    out: PathBuf,
}

fn parse_intercept(s: &str) -> Result<InterceptMode, String> {
    InterceptMode::parse(s).ok_or_else(|| format!("unknown intercept mode `{s}`"))
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            lambda_cap_mult: self.lambda_cap_mult,
            grid_points: self.grid_points,
            tol: self.tol,
            ..SolverOptions::default()
        }
    }
}

impl DataArgs {
    fn format(&self) -> anyhow::Result<InputFormat> {
        Ok(match self.format {
            Format::Bodyfat => InputFormat::Bodyfat(BodyfatOptions { drop_age: !self.keep_age }),
            Format::Csv => InputFormat::Csv(CsvOptions {
                has_header: !self.no_header,
                delimiter: delimiter_byte(self.delimiter)?,
                outcome: ColumnSelector::parse(&self.outcome),
                drop: self.drop.iter().map(|s| ColumnSelector::parse(s)).collect(),
            }),
        })
    }

    fn config(&self, solver: &SolverArgs) -> anyhow::Result<AnalysisConfig> {
        Ok(AnalysisConfig {
            input: Some(self.input.clone()),
            format: self.format()?,
            standardize: StandardizeOptions { scale_outcome: self.scale_outcome },
            intercept: self.intercept,
            solver: solver.options(),
            ..AnalysisConfig::default()
        })
    }

    fn prepare(&self, config: &AnalysisConfig) -> anyhow::Result<Prepared> {
        let raw = load_input(&self.input, &config.format)
            .with_context(|| format!("reading {}", self.input.display()))?;
        Ok(Prepared::new(&raw, config)?)
    }
}

fn delimiter_byte(c: char) -> anyhow::Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        bail!(ridge_influence::Error::InvalidConfig(format!("delimiter `{c}` is not ASCII")))
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let mut config = args.data.config(&args.solver)?;
    config.max_factor = args.grid.max_factor;
    config.factor_step = args.grid.step;
    config.tol_label = args.tol_label;
    config.highlight = args.highlight;
    config.top_k = args.top_k;
    config.deletion = !args.no_deletion;
    if args.no_plots {
        config.plots = PlotSelection { lambda: false, df: false, pc: false };
    }
    let bundle = run_analysis(&config)?;
    let written = write_outputs(&bundle, &config, &args.out)?;
    print!("{}", summary(&bundle, args.top_k));
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn cv(args: CvArgs) -> anyhow::Result<()> {
    let config = args.data.config(&args.solver)?;
    let prepared = args.data.prepare(&config)?;
    let curve = prepared.cv(&config.solver)?;
    write_cv_curve_csv(&curve, sink(args.out.as_deref())?)?;
    eprintln!(
        "lambda_cv = {:e} ({}), cv = {:e}",
        curve.minimizer, curve.at_boundary, curve.cv_at_minimizer
    );
    Ok(())
}

fn curve(args: CurveArgs) -> anyhow::Result<()> {
    let config = args.data.config(&args.solver)?;
    let prepared = args.data.prepare(&config)?;
    let n = prepared.data.n();
    if !(1..=n).contains(&args.obs) {
        bail!(ridge_influence::Error::IndexOutOfRange { index: args.obs, len: n });
    }
    let grid = WeightGrid::new(args.grid.max_factor, args.grid.step)?;
    let solver = prepared.solver(config.solver);
    let curve = solver.influence_curve(args.obs - 1, &grid)?;
    write_curve_csv(&curve, n, sink(args.out.as_deref())?)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let covariates = match &args.covariates {
        Some(path) => {
            let opts = CsvOptions { has_header: !args.no_header, ..CsvOptions::default() };
            let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
            let raw = read_covariates(file, &opts)?;
            standardize(&raw, StandardizeOptions::default())?
        }
        None => standin_covariates(args.standin_seed)?,
    };
    let template = ScenarioKind::parse(&args.scenario).map(|kind| {
        let mut params = ScenarioParams::default();
        if let Some(s) = args.shift {
            params.shift = s;
            params.second_shift = s;
        }
        ScenarioTemplate { kind, params }
    });
    let fixed = match template {
        Some(_) => None,
        None => {
            let text = fs::read_to_string(&args.scenario)
                .with_context(|| format!("`{}` is neither a built-in scenario nor a readable file", args.scenario))?;
            Some(ScenarioSpec::from_toml(&text)?)
        }
    };
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
    }
    let opts = args.solver.options();
    let mut hits = 0;
    for seed in args.seed..args.seed + args.replicates {
        let spec = match (&template, &fixed) {
            (Some(t), _) => t.resolve(&covariates, seed)?,
            (None, Some(s)) => ScenarioSpec { seed, ..s.clone() },
            (None, None) => unreachable!(),
        };
        let run = run_scenario(&covariates, &spec, &opts)?;
        let found = run.recovered(args.top_k);
        hits += usize::from(found);
        let top: Vec<String> = run
            .ranking
            .iter()
            .take(args.top_k)
            .map(|&r| format!("{}:{}", run.simulated.kept[r] + 1, run.reports[r].label.as_str()))
            .collect();
        println!(
            "seed {seed}: lambda_cv = {:.4e} ({}), top {} = [{}], planted {}",
            run.cv.minimizer,
            run.cv.at_boundary,
            args.top_k,
            top.join(", "),
            if run.simulated.roles.is_empty() { "none" } else if found { "recovered" } else { "missed" },
        );
        if let Some(dir) = &args.out {
            fs::write(dir.join(format!("spec_{seed}.toml")), spec.to_toml()?)?;
            let mut w = csv::Writer::from_path(dir.join(format!("report_{seed}.csv")))?;
            w.write_record(["observation", "planted", "derivative", "label", "rank_score"])?;
            for r in &run.reports {
                let planted = run
                    .simulated
                    .roles
                    .iter()
                    .find(|(row, _)| *row == r.observation)
                    .map(|(_, role)| role.label().as_str())
                    .unwrap_or("");
                w.write_record([
                    (run.simulated.kept[r.observation] + 1).to_string(),
                    planted.to_string(),
                    r.derivative.to_string(),
                    r.label.as_str().to_string(),
                    r.rank_score.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    println!("recovered in {hits}/{} replicates", args.replicates);
    Ok(())
}

fn fetch_bodyfat(args: FetchArgs) -> anyhow::Result<()> {
    let text = match &args.local {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            info!("downloading {}", args.url);
            ureq::get(&args.url)
                .call()
                .with_context(|| format!("downloading {}", args.url))?
                .body_mut()
                .read_to_string()?
        }
    };
    let rows = parse_bodyfat_table(&text)?;
    write_bodyfat_csv(&rows, fs::File::create(&args.out)?)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Cv(a) => cv(a),
        Command::Curve(a) => curve(a),
        Command::Simulate(a) => simulate(a),
        Command::FetchBodyfat(a) => fetch_bodyfat(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<ridge_influence::Error>() {
                Some(err) if err.is_input_error() => ExitCode::from(2),
                Some(_) => ExitCode::from(3),
                None if e.downcast_ref::<io::Error>().is_some() => ExitCode::from(2),
                None => ExitCode::FAILURE,
            }
        }
    }
}
