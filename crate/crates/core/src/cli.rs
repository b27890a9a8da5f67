//! Command-line front end.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{analyze, rebin, AnalysisOptions, BinsMode, TempConvention};
use crate::bounds::{
    f_bound, mean_photon_from_f, phi_approx, phi_exact, purity_from_f, purity_from_f_exact,
    temperature_from_f, temperature_from_f_table, FStatistic,
};
use crate::ensemble::{residual_trend, run_ensemble, ResidualSummary, TrendReport};
use crate::error::{Error, Result};
use crate::gaussianity::DEFAULT_ALPHA;
use crate::io::{
    input_info, parse_ensemble_config, read_samples_file, write_residuals, write_samples,
};
use crate::model::{thermal_from_temperature, CovarianceMatrix, GaussianState, TemperatureScale};
use crate::simulate::{
    simulate_acquisition, AcquisitionConfig, DetectorModel, DEFAULT_BINS, REFERENCE_SAMPLES_PER_BIN,
};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "homodyne-purity",
    version,
    about = "Purity and temperature from homodyne quadrature statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a phase-binned homodyne acquisition and write it as CSV.
    Simulate(SimulateArgs),
    /// Analyze a quadrature CSV and print a JSON report.
    Analyze(AnalyzeArgs),
    /// Tabulate the purity bound or invert F values.
    Bound(BoundArgs),
    /// Run a residual ensemble from a config file.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("state").required(true).args(["vacuum", "thermal_nbar", "thermal_t", "coherent", "gaussian"])))]
#[command(group(ArgGroup::new("noise").args(["electronic_noise", "electronic_noise_db"])))]
pub struct SimulateArgs {
    #[arg(long)]
    pub vacuum: bool,
    /// Thermal state with this mean photon number.
    #[arg(long, value_name = "NBAR")]
    pub thermal_nbar: Option<f64>,
    /// Thermal state at this dimensionless temperature.
    #[arg(long, value_name = "T")]
    pub thermal_t: Option<f64>,
    /// Coherent state with quadrature means q,p.
    #[arg(
        long,
        value_name = "Q,P",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub coherent: Option<Vec<f64>>,
    /// General Gaussian state.
    #[arg(
        long,
        value_name = "SQQ,SPP,SPQ,Q,P",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub gaussian: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Electronic noise as a quadrature variance.
    #[arg(long, value_name = "VAR")]
    pub electronic_noise: Option<f64>,
    /// Electronic noise as dB below shot noise.
    #[arg(long, value_name = "DB")]
    pub electronic_noise_db: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = REFERENCE_SAMPLES_PER_BIN)]
    pub per_bin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BinsModeArg {
    Auto,
    Grid48,
    Grid47,
}

impl From<BinsModeArg> for BinsMode {
    fn from(v: BinsModeArg) -> Self {
        match v {
            BinsModeArg::Auto => BinsMode::Auto,
            BinsModeArg::Grid48 => BinsMode::Grid48,
            BinsModeArg::Grid47 => BinsMode::Grid47,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TempConventionArg {
    Eq,
    Table,
    Both,
}

impl From<TempConventionArg> for TempConvention {
    fn from(v: TempConventionArg) -> Self {
        match v {
            TempConventionArg::Eq => TempConvention::Eq,
            TempConventionArg::Table => TempConvention::Table,
            TempConventionArg::Both => TempConvention::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FStatisticArg {
    Mean,
    Min,
}

impl From<FStatisticArg> for FStatistic {
    fn from(v: FStatisticArg) -> Self {
        match v {
            FStatisticArg::Mean => FStatistic::Mean,
            FStatisticArg::Min => FStatistic::Min,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Shot-noise (vacuum) record for baseline subtraction.
    #[arg(long)]
    pub shot: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub bins_mode: BinsModeArg,
    /// Detector efficiency to invert before estimation.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub temp_convention: TempConventionArg,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "mean")]
    pub f_statistic: FStatisticArg,
    /// Mode angular frequency in rad/s, for kelvin conversion.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Seed of the generating simulation, recorded in the report.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_normality: bool,
    /// Output JSON path; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).args(["pi", "f", "grid", "f_grid"])))]
pub struct BoundArgs {
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub f: Option<f64>,
    /// Purity grid `start:stop:step`, inclusive.
    #[arg(long, value_name = "A:B:STEP")]
    pub grid: Option<String>,
    /// F grid `start:stop:step`, inclusive.
    #[arg(long, value_name = "A:B:STEP")]
    pub f_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    pub config: PathBuf,
    /// Directory for outputs; the config file's directory when omitted.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn output_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn state_from_args(a: &SimulateArgs) -> Result<GaussianState> {
    if a.vacuum {
        return Ok(GaussianState::vacuum());
    }
    if let Some(n) = a.thermal_nbar {
        return GaussianState::thermal_nbar(n);
    }
    if let Some(t) = a.thermal_t {
        return thermal_from_temperature(TemperatureScale::new(t)?);
    }
    if let Some(v) = &a.coherent {
        return match v.as_slice() {
            &[q, p] => GaussianState::coherent(q, p),
            _ => Err(Error::InvalidInput("--coherent takes q,p".into())),
        };
    }
    if let Some(v) = &a.gaussian {
        return match v.as_slice() {
            &[sqq, spp, spq, q, p] => {
                GaussianState::new(q, p, CovarianceMatrix::physical(sqq, spp, spq)?)
            }
            _ => Err(Error::InvalidInput(
                "--gaussian takes sqq,spp,spq,q,p".into(),
            )),
        };
    }
    Err(Error::InvalidInput("no state given".into()))
}

fn f_true(state: &GaussianState) -> f64 {
    state.cov.determinant() - 0.25
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let state = state_from_args(a)?;
    let det = match (a.electronic_noise, a.electronic_noise_db) {
        (_, Some(db)) => DetectorModel::with_noise_db_below_shot(a.eta, db)?,
        (v, None) => DetectorModel::new(a.eta, v.unwrap_or(0.0))?,
    };
    let cfg = AcquisitionConfig::new(a.bins, a.per_bin, a.seed)?;
    let series = simulate_acquisition(&state, &det, &cfg)?;
    let mut out = output_writer(&a.output)?;
    write_samples(&mut out, &series)?;
    out.flush()?;

    let observed = det.observed_state(&state);
    let mut err = io::stderr().lock();
    writeln!(
        err,
        "pi_true={} F_true={} nbar_true={}",
        state.purity(),
        f_true(&state),
        state.mean_photon()
    )?;
    if det != DetectorModel::ideal() {
        writeln!(
            err,
            "pi_effective={} F_effective={}",
            observed.purity(),
            f_true(&observed)
        )?;
    }
    Ok(())
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let mode: BinsMode = a.bins_mode.into();
    let series = rebin(&read_samples_file(&a.input)?, mode)?;
    let shot = match &a.shot {
        Some(p) => Some(rebin(&read_samples_file(p)?, mode)?),
        None => None,
    };
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::domain("alpha", a.alpha));
    }
    let opts = AnalysisOptions {
        bins_mode: mode,
        eta: a.eta,
        temp_convention: a.temp_convention.into(),
        alpha: a.alpha,
        f_statistic: a.f_statistic.into(),
        omega: a.omega,
        check_normality: !a.no_normality,
    };
    let mut report = analyze(&series, shot.as_ref(), &opts)?;
    report.meta.input = Some(input_info(&a.input)?);
    report.meta.shot_input = a.shot.as_deref().map(input_info).transpose()?;
    report.meta.seed = a.seed;

    let mut out = output_writer(&a.output)?;
    out.write_all(report.to_json()?.as_bytes())?;
    out.flush()?;
    if let Some(n) = &report.normality {
        let mut err = io::stderr().lock();
        for w in &n.warnings {
            writeln!(err, "warning: {w}")?;
        }
    }
    Ok(())
}

/// Parses an inclusive `start:stop:step` grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("grid `{spec}`: {e}")))?;
    let &[a, b, step] = parts.as_slice() else {
        return Err(Error::InvalidInput(format!(
            "grid `{spec}` is not start:stop:step"
        )));
    };
    if !(step > 0.0 && a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidInput(format!(
            "grid `{spec}` is empty or unbounded"
        )));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

fn write_pi_rows(out: &mut dyn Write, grid: &[f64]) -> Result<Option<(f64, f64)>> {
    writeln!(out, "pi,phi,phi_approx,rel_dev,f_bound,f_bound_approx")?;
    let mut worst: Option<(f64, f64)> = None;
    for &pi in grid {
        let (phi, approx) = (phi_exact(pi)?, phi_approx(pi)?);
        let rel = (approx - phi).abs() / phi;
        if worst.is_none_or(|(_, w)| rel > w) {
            worst = Some((pi, rel));
        }
        writeln!(
            out,
            "{pi},{phi},{approx},{rel},{},{}",
            f_bound(pi, true)?,
            f_bound(pi, false)?
        )?;
    }
    Ok(worst)
}

fn write_f_rows(out: &mut dyn Write, grid: &[f64]) -> Result<()> {
    writeln!(out, "f,pi_approx,pi_exact,t_eq,t_table,mean_photon")?;
    for &f in grid {
        let fmt_t =
            |t: Result<TemperatureScale>| t.map(|t| t.value.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{f},{},{},{},{},{}",
            purity_from_f(f)?,
            purity_from_f_exact(f)?,
            fmt_t(temperature_from_f(f)),
            fmt_t(temperature_from_f_table(f)),
            mean_photon_from_f(f)?
        )?;
    }
    Ok(())
}

pub fn cmd_bound(a: &BoundArgs) -> Result<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    if let Some(pi) = a.pi {
        write_pi_rows(&mut out, &[pi])?;
    }
    if let Some(f) = a.f {
        write_f_rows(&mut out, &[f])?;
    }
    if let Some(spec) = &a.grid {
        if let Some((pi, rel)) = write_pi_rows(&mut out, &parse_grid(spec)?)? {
            out.flush()?;
            eprintln!("max_rel_dev={rel} at pi={pi}");
        }
    }
    if let Some(spec) = &a.f_grid {
        write_f_rows(&mut out, &parse_grid(spec)?)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EnsembleOutput<'a> {
    schema: u32,
    summary: &'a ResidualSummary,
    trend: &'a TrendReport,
}

/// Writes `<stem>.residuals.csv` and `<stem>.summary.json`; returns their paths.
pub fn cmd_ensemble(a: &EnsembleArgs) -> Result<(PathBuf, PathBuf)> {
    let cfg = parse_ensemble_config(&fs::read_to_string(&a.config)?)?;
    let summary = run_ensemble(&cfg)?;
    let trend = residual_trend(&summary);

    let dir = match &a.output_dir {
        Some(d) => d.clone(),
        None => a.config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let stem = a
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("ensemble");
    let csv_path = dir.join(format!("{stem}.residuals.csv"));
    let json_path = dir.join(format!("{stem}.summary.json"));

    let mut w = BufWriter::new(fs::File::create(&csv_path)?);
    write_residuals(&mut w, &summary.records)?;
    w.flush()?;
    let doc = EnsembleOutput {
        schema: 1,
        summary: &summary,
        trend: &trend,
    };
    let mut json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidInput(format!("summary serialization: {e}")))?;
    json.push('\n');
    fs::write(&json_path, json)?;

    let mut out = io::stdout().lock();
    writeln!(
        out,
        "acquisitions={} failed={}",
        summary.records.len(),
        summary.failures.len()
    )?;
    for (name, pop, t) in [
        ("delta_f_true", &summary.delta_f_true, &trend.delta_f_true),
        (
            "delta_gauss_true",
            &summary.delta_gauss_true,
            &trend.delta_gauss_true,
        ),
        (
            "delta_f_gauss",
            &summary.delta_f_gauss,
            &trend.delta_f_gauss,
        ),
    ] {
        writeln!(
            out,
            "{name}: mean={:.5} sd={:.5} se={:.5} sw_p={} trend={:?}",
            pop.mean,
            pop.sd,
            pop.se,
            pop.normality
                .as_ref()
                .map(|n| format!("{:.4}", n.shapiro_p))
                .unwrap_or_else(|| "-".into()),
            t.verdict
        )?;
    }
    writeln!(
        out,
        "wrote {} and {}",
        csv_path.display(),
        json_path.display()
    )?;
    Ok((csv_path, json_path))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Ensemble(a) => cmd_ensemble(a).map(|_| ()),
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_INPUT
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
