//! End-to-end analysis of one homodyne record.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::bounds::{
    estimate_from_f, temperature_from_f, temperature_from_f_table, FStatistic, PurityReport,
    TABLE_TEMPERATURE_FACTOR,
};
use crate::error::{Error, Result};
use crate::gaussianity::{test_normality, DEFAULT_ALPHA, SHAPIRO_MAX_N, SHAPIRO_MIN_N};
use crate::model::{purity_gaussian, temperature_from_purity, CovarianceMatrix, TemperatureScale};
use crate::simulate::{bin_center, PhaseBin, PhaseBinnedSeries, DEFAULT_BINS, REFERENCE_BINS};
use crate::stats::{
    bin_moments, covariance_from_harmonic_fit, covariance_from_three_angles, f_of_theta,
    invert_detector_loss, mean_photon_from_stats, subtract_baseline, QuadratureStats,
    UncertaintyProfile,
};

pub const SCHEMA_VERSION: u32 = 1;

/// How raw `(θ, x)` samples are grouped into phase bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinsMode {
    /// One bin per distinct phase value.
    #[default]
    Auto,
    /// 48 uniform bins over [0, π); π/4 and π/2 offsets land on bin centers.
    Grid48,
    /// 47 uniform bins over [0, π).
    Grid47,
}

impl BinsMode {
    pub fn n_bins(&self) -> Option<usize> {
        match self {
            BinsMode::Auto => None,
            BinsMode::Grid48 => Some(DEFAULT_BINS),
            BinsMode::Grid47 => Some(REFERENCE_BINS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TempConvention {
    /// `T = [2 atanh π̃]⁻¹`.
    Eq,
    /// The results-table convention, four times larger.
    Table,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub bins_mode: BinsMode,
    /// Detector efficiency to invert before estimation.
    pub eta: Option<f64>,
    pub temp_convention: TempConvention,
    pub alpha: f64,
    pub f_statistic: FStatistic,
    /// Mode angular frequency in rad/s, for kelvin conversion.
    pub omega: Option<f64>,
    pub check_normality: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins_mode: BinsMode::Auto,
            eta: None,
            temp_convention: TempConvention::Both,
            alpha: DEFAULT_ALPHA,
            f_statistic: FStatistic::Mean,
            omega: None,
            check_normality: true,
        }
    }
}

/// Groups raw samples into a phase-binned series.
///
/// Phases are reduced onto [0, π) using `X(θ + π) = −X(θ)`, so records from a
/// 2π-wide local-oscillator scan fold onto the half interval.
pub fn rebin(samples: &[(f64, f64)], mode: BinsMode) -> Result<PhaseBinnedSeries> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let folded = samples.iter().map(|&(theta, x)| {
        let t = theta.rem_euclid(TAU);
        if t >= PI {
            ((t - PI).max(0.0), -x)
        } else {
            (t, x)
        }
    });

    let bins = match mode.n_bins() {
        Some(n) => {
            let width = PI / n as f64;
            let mut grouped = vec![Vec::new(); n];
            for (t, x) in folded {
                let j = ((t / width) as usize).min(n - 1);
                grouped[j].push(x);
            }
            grouped
                .into_iter()
                .enumerate()
                .map(|(j, samples)| PhaseBin {
                    theta: bin_center(n, j),
                    samples,
                })
                .collect::<Vec<_>>()
        }
        None => {
            let mut pairs: Vec<(f64, f64)> = folded.collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut bins: Vec<PhaseBin> = Vec::new();
            for (t, x) in pairs {
                match bins.last_mut() {
                    Some(b) if b.theta == t => b.samples.push(x),
                    _ => bins.push(PhaseBin {
                        theta: t,
                        samples: vec![x],
                    }),
                }
            }
            bins
        }
    };

    for (j, b) in bins.iter().enumerate() {
        if b.samples.len() < 2 {
            return Err(Error::InsufficientSamples {
                bin: j,
                count: b.samples.len(),
                needed: 2,
            });
        }
    }
    PhaseBinnedSeries::new(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineInfo {
    pub applied: bool,
    pub shot_f_mean: Option<f64>,
    pub shot_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub bins: usize,
    pub samples_per_bin_min: usize,
    pub samples_per_bin_max: usize,
    pub total_samples: usize,
    pub bins_mode: BinsMode,
    pub eta_inverted: Option<f64>,
    pub baseline: BaselineInfo,
    pub input: Option<InputInfo>,
    pub shot_input: Option<InputInfo>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuritySection {
    #[serde(flatten)]
    pub estimates: PurityReport,
    pub covariance_fit: Option<CovarianceMatrix>,
    pub covariance_three_angle: Option<CovarianceMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinNormality {
    pub theta: f64,
    pub kurtosis_excess: f64,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
    pub normal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub alpha: f64,
    pub bins_tested: usize,
    pub bins_rejected: usize,
    /// Rejections expected from chance alone, `α · bins_tested`.
    pub expected_false_rejections: f64,
    pub min_p: Option<f64>,
    pub mean_kurtosis_excess: Option<f64>,
    pub max_abs_kurtosis_excess: Option<f64>,
    pub per_bin: Vec<BinNormality>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSection {
    pub convention: TempConvention,
    pub canonical: TempConvention,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_eq: Option<TemperatureScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_eq_kelvin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_table: Option<TemperatureScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_table_kelvin: Option<f64>,
    pub table_factor: f64,
    /// Effective temperature of the Gaussian-route purity.
    pub t_gauss: Option<TemperatureScale>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSection {
    #[serde(flatten)]
    pub profile: UncertaintyProfile,
    pub relative_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub meta: Meta,
    pub profile: ProfileSection,
    pub purity: PuritySection,
    pub normality: Option<NormalitySummary>,
    pub temperature: TemperatureSection,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))
    }
}

fn normality_summary(series: &PhaseBinnedSeries, alpha: f64) -> Result<NormalitySummary> {
    let mut per_bin = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped = 0;
    for bin in series.bins() {
        if !(SHAPIRO_MIN_N..=SHAPIRO_MAX_N).contains(&bin.samples.len()) {
            skipped += 1;
            continue;
        }
        let r = test_normality(&bin.samples, &[alpha])?;
        warnings.extend(r.notes.iter().map(|n| format!("θ = {:.4}: {n}", bin.theta)));
        per_bin.push(BinNormality {
            theta: bin.theta,
            kurtosis_excess: r.kurtosis_excess,
            shapiro_w: r.shapiro_w,
            shapiro_p: r.shapiro_p,
            normal: r.normal_at(alpha),
        });
    }
    if skipped > 0 {
        warnings.push(format!(
            "{skipped} bins outside the Shapiro–Wilk range [{SHAPIRO_MIN_N}, {SHAPIRO_MAX_N}] were not tested"
        ));
    }
    let tested = per_bin.len();
    let rejected = per_bin.iter().filter(|b| !b.normal).count();
    let expected = alpha * tested as f64;
    if rejected > 0 {
        warnings.push(format!(
            "normality rejected at α = {alpha} in {rejected} of {tested} bins ({expected:.2} expected by chance)"
        ));
    }
    let kurt: Vec<f64> = per_bin.iter().map(|b| b.kurtosis_excess).collect();
    Ok(NormalitySummary {
        alpha,
        bins_tested: tested,
        bins_rejected: rejected,
        expected_false_rejections: expected,
        min_p: per_bin.iter().map(|b| b.shapiro_p).reduce(f64::min),
        mean_kurtosis_excess: (!kurt.is_empty())
            .then(|| kurt.iter().sum::<f64>() / kurt.len() as f64),
        max_abs_kurtosis_excess: kurt.iter().map(|k| k.abs()).reduce(f64::max),
        per_bin,
        warnings,
    })
}

fn prepared_stats(series: &PhaseBinnedSeries, eta: Option<f64>) -> Result<Vec<QuadratureStats>> {
    let stats = bin_moments(series)?;
    match eta {
        Some(eta) => invert_detector_loss(&stats, eta),
        None => Ok(stats),
    }
}

fn gaussian_purity(cov: &CovarianceMatrix, route: &str, notes: &mut Vec<String>) -> Option<f64> {
    match purity_gaussian(cov) {
        Ok(p) if p > 1.0 => {
            notes.push(format!(
                "{route} purity {p:.6} exceeds 1 from sampling noise; clamped"
            ));
            Some(1.0)
        }
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(format!("{route} purity unavailable: {e}"));
            None
        }
    }
}

fn kelvin(t: &Option<TemperatureScale>) -> Option<f64> {
    t.as_ref().and_then(TemperatureScale::kelvin)
}

/// Full pipeline: moments, Gaussianity gate, F(θ), optional baseline
/// subtraction, covariance recovery and every estimator.
pub fn analyze(
    series: &PhaseBinnedSeries,
    shot: Option<&PhaseBinnedSeries>,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let stats = prepared_stats(series, opts.eta)?;
    let normality = if opts.check_normality {
        Some(normality_summary(series, opts.alpha)?)
    } else {
        None
    };

    let raw_profile = f_of_theta(&stats)?;
    let (profile, baseline) = match shot {
        Some(shot) => {
            let shot_profile = f_of_theta(&prepared_stats(shot, opts.eta)?)?;
            let subtracted = subtract_baseline(&raw_profile, &shot_profile)?;
            let info = BaselineInfo {
                applied: true,
                shot_f_mean: Some(shot_profile.f_mean),
                shot_bins: Some(shot.len()),
            };
            (subtracted, info)
        }
        None => (
            raw_profile,
            BaselineInfo {
                applied: false,
                shot_f_mean: None,
                shot_bins: None,
            },
        ),
    };

    let mut estimates = estimate_from_f(profile.f_min, profile.f_mean, opts.f_statistic)?;
    let mut notes = Vec::new();
    let covariance_fit = match covariance_from_harmonic_fit(&stats) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("harmonic covariance fit failed: {e}"));
            None
        }
    };
    let covariance_three_angle = match covariance_from_three_angles(&stats) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("three-angle covariance failed: {e}"));
            None
        }
    };
    estimates.pi_gauss = covariance_fit.and_then(|c| gaussian_purity(&c, "Gaussian", &mut notes));
    estimates.pi_gauss_three_angle = covariance_three_angle
        .and_then(|c| gaussian_purity(&c, "three-angle Gaussian", &mut notes));
    estimates.mean_photon_moments = Some(mean_photon_from_stats(&stats)?);
    if let (Some(t), Some(w)) = (estimates.temperature.as_mut(), opts.omega) {
        *t = t.with_omega(w);
    }
    estimates.diagnostics.extend(notes);

    let with_omega = |t: TemperatureScale| match opts.omega {
        Some(w) => t.with_omega(w),
        None => t,
    };
    let f = estimates.f_used;
    let want_eq = matches!(
        opts.temp_convention,
        TempConvention::Eq | TempConvention::Both
    );
    let want_table = matches!(
        opts.temp_convention,
        TempConvention::Table | TempConvention::Both
    );
    let t_eq = want_eq
        .then(|| temperature_from_f(f).ok().map(with_omega))
        .flatten();
    let t_table = want_table
        .then(|| temperature_from_f_table(f).ok().map(with_omega))
        .flatten();
    let t_gauss = estimates
        .pi_gauss
        .and_then(|p| temperature_from_purity(p).ok())
        .map(with_omega);
    let temperature = TemperatureSection {
        convention: opts.temp_convention,
        canonical: TempConvention::Eq,
        t_eq_kelvin: kelvin(&t_eq),
        t_eq,
        t_table_kelvin: kelvin(&t_table),
        t_table,
        table_factor: TABLE_TEMPERATURE_FACTOR,
        t_gauss,
        note: format!(
            "t_eq = [2 atanh π̃(F)]⁻¹ is canonical; t_table = {TABLE_TEMPERATURE_FACTOR} × t_eq is the tabulated convention"
        ),
    };

    let counts = series.bins().iter().map(|b| b.samples.len());
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        bins: series.len(),
        samples_per_bin_min: counts.clone().min().unwrap_or(0),
        samples_per_bin_max: counts.max().unwrap_or(0),
        total_samples: series.total_samples(),
        bins_mode: opts.bins_mode,
        eta_inverted: opts.eta,
        baseline,
        input: None,
        shot_input: None,
        seed: None,
    };

    Ok(AnalysisReport {
        schema: SCHEMA_VERSION,
        meta,
        profile: ProfileSection {
            relative_spread: profile.relative_spread(),
            profile,
        },
        purity: PuritySection {
            estimates,
            covariance_fit,
            covariance_three_angle,
        },
        normality,
        temperature,
    })
}
