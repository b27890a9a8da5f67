//! File formats: quadrature CSV, residual CSV and the ensemble config.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::analysis::InputInfo;
use crate::bounds::FStatistic;
use crate::ensemble::{EnsembleConfig, ResidualRecord, StateFamily};
use crate::error::{Error, Result};
use crate::model::GaussianState;
use crate::simulate::{DetectorModel, PhaseBinnedSeries};

pub const SAMPLES_HEADER: [&str; 2] = ["theta_rad", "quadrature"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads `theta_rad,quadrature` rows. Line numbers in errors are 1-based and
/// count the header.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != SAMPLES_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", SAMPLES_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("invalid number `{raw}`"),
                })
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_samples(fs::File::open(path)?)
}

pub fn write_samples<W: Write>(writer: W, series: &PhaseBinnedSeries) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(SAMPLES_HEADER).map_err(csv_error)?;
    for bin in series.bins() {
        let theta = bin.theta.to_string();
        for x in &bin.samples {
            w.write_record([theta.as_str(), x.to_string().as_str()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals<W: Write>(writer: W, records: &[ResidualRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn input_info(path: &Path) -> Result<InputInfo> {
    Ok(InputInfo {
        path: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

/// Ensemble config file. Exactly one state family must be given:
/// `purity_min`/`purity_max`, `nbar_min`/`nbar_max`, or `[[state]]` tables.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleFile {
    n_acquisitions: Option<usize>,
    master_seed: Option<u64>,
    purity_min: Option<f64>,
    purity_max: Option<f64>,
    nbar_min: Option<f64>,
    nbar_max: Option<f64>,
    #[serde(default)]
    state: Vec<GaussianState>,
    efficiency: Option<f64>,
    electronic_noise_variance: Option<f64>,
    electronic_noise_db: Option<f64>,
    bins: Option<usize>,
    samples_per_bin: Option<usize>,
    invert_loss: Option<bool>,
    f_statistic: Option<FStatistic>,
}

fn range(lo: Option<f64>, hi: Option<f64>, name: &str) -> Result<Option<(f64, f64)>> {
    match (lo, hi) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => Ok(Some((a, b))),
        _ => Err(Error::InvalidInput(format!(
            "{name}_min and {name}_max must be given together"
        ))),
    }
}

pub fn parse_ensemble_config(text: &str) -> Result<EnsembleConfig> {
    let file: EnsembleFile =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("ensemble config: {e}")))?;
    let defaults = EnsembleConfig::default();

    let purity = range(file.purity_min, file.purity_max, "purity")?;
    let nbar = range(file.nbar_min, file.nbar_max, "nbar")?;
    let given = purity.is_some() as u8 + nbar.is_some() as u8 + !file.state.is_empty() as u8;
    if given > 1 {
        return Err(Error::InvalidInput(
            "ensemble config: give only one state family".into(),
        ));
    }
    let state_family = if let Some((min, max)) = purity {
        StateFamily::ThermalPurity { min, max }
    } else if let Some((min, max)) = nbar {
        StateFamily::ThermalNbar { min, max }
    } else if !file.state.is_empty() {
        let states = file
            .state
            .into_iter()
            .map(|s| GaussianState::new(s.mean_q, s.mean_p, s.cov))
            .collect::<Result<Vec<_>>>()?;
        StateFamily::Explicit { states }
    } else {
        defaults.state_family.clone()
    };

    let efficiency = file.efficiency.unwrap_or(defaults.detector.efficiency);
    let detector =
        match (file.electronic_noise_variance, file.electronic_noise_db) {
            (Some(_), Some(_)) => return Err(Error::InvalidInput(
                "ensemble config: give electronic_noise_variance or electronic_noise_db, not both"
                    .into(),
            )),
            (_, Some(db)) => DetectorModel::with_noise_db_below_shot(efficiency, db)?,
            (v, None) => DetectorModel::new(efficiency, v.unwrap_or(0.0))?,
        };

    let cfg = EnsembleConfig {
        n_acquisitions: file.n_acquisitions.unwrap_or(defaults.n_acquisitions),
        state_family,
        detector,
        n_bins: file.bins.unwrap_or(defaults.n_bins),
        samples_per_bin: file.samples_per_bin.unwrap_or(defaults.samples_per_bin),
        master_seed: file.master_seed.unwrap_or(defaults.master_seed),
        invert_loss: file.invert_loss.unwrap_or(defaults.invert_loss),
        f_statistic: file.f_statistic.unwrap_or(defaults.f_statistic),
    };
    cfg.validate()?;
    Ok(cfg)
}
