use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use setstat::frechet::{five_interval_outcome, gfr_fit, gfr_predict, sample_frechet_mean, WeightsMode};
use setstat::io::{
    format_g12, parse_body, parse_dataset, parse_interval_csv, parse_polygon_jsonl, write_interval_csv, write_polygon_jsonl, BodyJson,
    Diagnostics, LoadedData, ResultFile,
};
use setstat::missing::{fit_propensity, ipw_estimate, PropensityModel, DEFAULT_TRIM};
use setstat::simulate::{
    generate_dataset, run_gfr_rate_experiment, run_ipw_rate_experiment, RateResult, SimConfig,
};
use setstat::{dkc_distance, hausdorff_distance, Error, SphereGrid};

#[derive(Parser)]
#[command(name = "setstat", version, about = "Means, regression and IPW estimation for random convex sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample Fréchet mean of the outcomes.
    Mean {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// Global Fréchet regression evaluated at one covariate value.
    Gfr {
        #[command(flatten)]
        input: Input,
        /// Comma-separated covariate value.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        predict_at: Vec<f64>,
        /// Use the instrument columns for errors-in-variables weights.
        #[arg(long)]
        eiv: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Inverse-probability-weighted mean under missing outcomes.
    Ipw {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = PropensitySource::Logistic)]
        propensity: PropensitySource,
        #[arg(long, default_value_t = DEFAULT_TRIM)]
        trim: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Distance between two bodies (bare body JSON or a result file).
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Dkc)]
        metric: Metric,
        /// Circle directions for planar bodies.
        #[arg(long, default_value_t = setstat::geometry::DEFAULT_CIRCLE_SIZE)]
        grid: usize,
    },
    /// Monte Carlo rate experiments.
    Simulate {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        config: PathBuf,
        /// Output prefix: writes PREFIX.csv, PREFIX.summary.json and PREFIX.plot.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes one simulated dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Converts a numeric CSV column into equal-width interval outcomes.
    Bin {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outcome: String,
        /// Comma-separated covariate columns.
        #[arg(long, value_delimiter = ',', required = true)]
        covariates: Vec<String>,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Input {
    #[arg(long)]
    input: PathBuf,
    /// Input format; detected from the content when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Interval,
    Polygon,
}

#[derive(clap::Args)]
struct Common {
    /// Circle directions for planar data.
    #[arg(long, default_value_t = setstat::geometry::DEFAULT_CIRCLE_SIZE)]
    grid: usize,
    /// Write the result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropensitySource {
    Logistic,
    Known,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Dkc,
    Hausdorff,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    GfrRate,
    IpwRate,
}

enum Failure {
    Input(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Lib(e) if e.is_numerical() => 4,
            Failure::Lib(Error::InvalidDataset(_) | Error::InvalidConfig(_)) => 2,
            Failure::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(input: &Input) -> CliResult<LoadedData> {
    let path = &input.input;
    let text = read(path)?;
    let parsed = match input.format {
        None => parse_dataset(&text),
        Some(Format::Interval) => parse_interval_csv(&text),
        Some(Format::Polygon) => parse_polygon_jsonl(&text),
    };
    parsed.map_err(|e| match e {
        Error::InvalidDataset(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => Failure::Lib(other),
    })
}

fn grid_for(dim: usize, m: usize) -> CliResult<SphereGrid> {
    Ok(SphereGrid::for_dim(dim, m)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Mean { input, common } => {
            let data = load(&input)?.dataset;
            let grid = grid_for(data.dim(), common.grid)?;
            let mean = sample_frechet_mean(data.bodies(), &grid)?;
            let res = ResultFile::for_body(&mean, &grid, Diagnostics { in_cone: true, ..Default::default() })?;
            emit(common.output.as_deref(), &res.to_json())
        }
        Command::Gfr {
            input,
            predict_at,
            eiv,
            common,
        } => {
            let data = load(&input)?.dataset;
            let grid = grid_for(data.dim(), common.grid)?;
            let mode = if eiv {
                WeightsMode::ErrorsInVariables
            } else {
                WeightsMode::Standard
            };
            let fit = gfr_fit(&data, &grid, mode)?;
            let pred = gfr_predict(&fit, &predict_at)?;
            let diagnostics = Diagnostics {
                in_cone: pred.in_cone,
                subset_flag: Some(pred.subset_flag),
                weights_min: Some(pred.weights_min),
                condition_number: Some(fit.diagnostics().condition_number),
                mean_weight: None,
            };
            let mut res = ResultFile::for_body(&pred.m_oplus, &grid, diagnostics)?;
            res.support_values = pred.projected.values().to_vec();
            res.raw_support_values = Some(pred.raw.values().to_vec());
            res.aumann_w = Some(BodyJson::from_body(&pred.aumann_w)?);
            emit(common.output.as_deref(), &res.to_json())
        }
        Command::Ipw {
            input,
            propensity,
            trim,
            common,
        } => {
            let LoadedData { dataset, scores } = load(&input)?;
            if dataset.observed().is_none() {
                return Err(Failure::Input("ipw needs a response indicator column `t`".into()));
            }
            let grid = grid_for(dataset.dim(), common.grid)?;
            let model = match propensity {
                PropensitySource::Logistic => fit_propensity(&dataset, trim)?,
                PropensitySource::Known => {
                    let scores = scores.ok_or_else(|| {
                        Failure::Input("--propensity known needs an `e` column".into())
                    })?;
                    PropensityModel::known(scores, trim)?
                }
            };
            let est = ipw_estimate(&dataset, &model, &grid)?;
            let diagnostics = Diagnostics {
                in_cone: true,
                subset_flag: None,
                weights_min: Some(est.weights_min),
                condition_number: None,
                mean_weight: Some(est.mean_weight),
            };
            let mut res = ResultFile::for_body(&est.hajek, &grid, diagnostics)?;
            res.unnormalized = Some(BodyJson::from_body(&est.unnormalized)?);
            res.propensity = Some(model.scores().to_vec());
            res.propensity_coefficients = model.coefficients().map(<[f64]>::to_vec);
            emit(common.output.as_deref(), &res.to_json())
        }
        Command::Dist { a, b, metric, grid } => {
            let a = parse_body(&read(&a)?)?;
            let b = parse_body(&read(&b)?)?;
            let grid = grid_for(a.dim(), grid)?;
            let d = match metric {
                Metric::Dkc => dkc_distance(&a, &b, &grid)?,
                Metric::Hausdorff => hausdorff_distance(&a, &b, &grid)?,
            };
            println!("{}", format_g12(d));
            Ok(())
        }
        Command::Simulate {
            experiment,
            config,
            out,
        } => {
            let cfg = SimConfig::from_json(&read(&config)?)?;
            let result = match experiment {
                Experiment::GfrRate => run_gfr_rate_experiment(&cfg)?,
                Experiment::IpwRate => run_ipw_rate_experiment(&cfg)?,
            };
            write_outputs(&out, &result)?;
            print!("{}", result.summary_json());
            Ok(())
        }
        Command::Generate { config, n, rep, output } => {
            let cfg = SimConfig::from_json(&read(&config)?)?;
            let data = generate_dataset(&cfg, n, rep)?;
            let text = if data.dim() == 1 {
                write_interval_csv(&data)?
            } else {
                write_polygon_jsonl(&data)?
            };
            emit(output.as_deref(), &text)
        }
        Command::Bin {
            input,
            outcome,
            covariates,
            bins,
            output,
        } => {
            let text = read(&input)?;
            emit(output.as_deref(), &bin_csv(&text, &outcome, &covariates, bins)?)
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_outputs(prefix: &Path, result: &RateResult) -> CliResult<()> {
    write(&with_suffix(prefix, ".csv"), &result.to_csv())?;
    write(&with_suffix(prefix, ".summary.json"), &result.summary_json())?;
    write(&with_suffix(prefix, ".plot.csv"), &result.to_plot_csv())
}

fn bin_csv(text: &str, outcome: &str, covariates: &[String], bins: usize) -> CliResult<String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Failure::Input(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Input(format!("no column named {name:?}")))
    };
    let y_col = col(outcome)?;
    let x_cols = covariates.iter().map(|c| col(c)).collect::<CliResult<Vec<_>>>()?;
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Input(format!("line {}: {e}", k + 2)))?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::Input(format!("line {}: column {}: not a number", k + 2, &header[i])))
        };
        ys.push(num(y_col)?);
        xs.push(x_cols.iter().map(|&i| num(i)).collect::<CliResult<Vec<_>>>()?);
    }
    let bodies = five_interval_outcome(&ys, bins)?;
    let data = setstat::frechet::RegressionDataset::new(bodies, xs)?;
    Ok(write_interval_csv(&data)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
