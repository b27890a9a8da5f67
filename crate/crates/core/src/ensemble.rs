//! Residual study over many simulated acquisitions with known ground truth.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::analysis::{analyze, AnalysisOptions};
use crate::bounds::FStatistic;
use crate::error::{Error, Result};
use crate::gaussianity::{
    test_normality, NormalityResult, DEFAULT_ALPHA, SHAPIRO_MAX_N, SHAPIRO_MIN_N,
};
use crate::model::GaussianState;
use crate::simulate::{
    simulate_acquisition, AcquisitionConfig, DetectorModel, DEFAULT_BINS, REFERENCE_EFFICIENCY,
    REFERENCE_SAMPLES_PER_BIN,
};

pub const DEFAULT_ACQUISITIONS: usize = 218;

/// Largest tolerated fraction of failed acquisitions.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

pub const TREND_BINS: usize = 5;
/// |t| of the residual-vs-purity slope above which a trend is systematic.
pub const TREND_T_THRESHOLD: f64 = 3.0;
/// One-way ANOVA p-value across purity bins below which a trend is systematic.
pub const TREND_ANOVA_P: f64 = 1e-3;
pub const MIN_TREND_RECORDS: usize = 10;
pub const MIN_PURITY_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum StateFamily {
    /// Thermal states with purity evenly spaced over `[min, max]`.
    ThermalPurity { min: f64, max: f64 },
    /// Thermal states with mean photon number evenly spaced over `[min, max]`.
    ThermalNbar { min: f64, max: f64 },
    /// Cycles through the listed states.
    Explicit { states: Vec<GaussianState> },
}

impl StateFamily {
    fn validate(&self) -> Result<()> {
        match self {
            StateFamily::ThermalPurity { min, max } => {
                if !(*min > 0.0 && min <= max && *max <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "purity range [{min}, {max}] not within (0, 1]"
                    )));
                }
            }
            StateFamily::ThermalNbar { min, max } => {
                if !(*min >= 0.0 && min <= max && max.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "photon-number range [{min}, {max}] invalid"
                    )));
                }
            }
            StateFamily::Explicit { states } => {
                if states.is_empty() {
                    return Err(Error::InvalidInput("explicit state list is empty".into()));
                }
            }
        }
        Ok(())
    }

    fn state(&self, i: usize, n: usize) -> Result<GaussianState> {
        let frac = if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        };
        match self {
            StateFamily::ThermalPurity { min, max } => {
                GaussianState::thermal_purity(min + frac * (max - min))
            }
            StateFamily::ThermalNbar { min, max } => {
                GaussianState::thermal_nbar(min + frac * (max - min))
            }
            StateFamily::Explicit { states } => Ok(states[i % states.len()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_acquisitions: usize,
    pub state_family: StateFamily,
    pub detector: DetectorModel,
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub master_seed: u64,
    /// Undo the detector loss before estimating, so the truth is the source
    /// state; otherwise the truth is the state the detector records.
    pub invert_loss: bool,
    pub f_statistic: FStatistic,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_acquisitions: DEFAULT_ACQUISITIONS,
            state_family: StateFamily::ThermalPurity {
                min: 0.3,
                max: 0.95,
            },
            detector: DetectorModel {
                efficiency: REFERENCE_EFFICIENCY,
                electronic_noise_variance: 0.0,
            },
            n_bins: DEFAULT_BINS,
            samples_per_bin: REFERENCE_SAMPLES_PER_BIN,
            master_seed: 0,
            invert_loss: true,
            f_statistic: FStatistic::Mean,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_acquisitions < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 acquisitions, got {}",
                self.n_acquisitions
            )));
        }
        self.state_family.validate()?;
        DetectorModel::new(
            self.detector.efficiency,
            self.detector.electronic_noise_variance,
        )?;
        AcquisitionConfig::new(self.n_bins, self.samples_per_bin, 0)?;
        Ok(())
    }
}

/// Seed of acquisition `i`: the first word of ChaCha stream `i` under `master`.
pub fn acquisition_seed(master: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(i as u64);
    rng.next_u64()
}

/// `(a − b)` normalized by the pair average.
pub fn normalized_residual(a: f64, b: f64) -> f64 {
    (a - b) / (0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub index: usize,
    pub seed: u64,
    pub pi_true: f64,
    pub pi_f: f64,
    pub pi_gauss: f64,
    pub delta_f_true: f64,
    pub delta_gauss_true: f64,
    pub delta_f_gauss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub normality: Option<NormalityResult>,
}

impl PopulationSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
        } else {
            0.0
        };
        let normality = (SHAPIRO_MIN_N..=SHAPIRO_MAX_N)
            .contains(&n)
            .then(|| test_normality(values, &[DEFAULT_ALPHA]).ok())
            .flatten();
        Self {
            n,
            mean,
            sd,
            se: sd / nf.sqrt(),
            normality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    FTrue,
    GaussTrue,
    FGauss,
}

impl ResidualKind {
    pub const ALL: [ResidualKind; 3] = [
        ResidualKind::FTrue,
        ResidualKind::GaussTrue,
        ResidualKind::FGauss,
    ];

    pub fn of(&self, r: &ResidualRecord) -> f64 {
        match self {
            ResidualKind::FTrue => r.delta_f_true,
            ResidualKind::GaussTrue => r.delta_gauss_true,
            ResidualKind::FGauss => r.delta_f_gauss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub config: EnsembleConfig,
    pub records: Vec<ResidualRecord>,
    pub failures: Vec<AcquisitionFailure>,
    pub delta_f_true: PopulationSummary,
    pub delta_gauss_true: PopulationSummary,
    pub delta_f_gauss: PopulationSummary,
}

impl ResidualSummary {
    pub fn population(&self, kind: ResidualKind) -> &PopulationSummary {
        match kind {
            ResidualKind::FTrue => &self.delta_f_true,
            ResidualKind::GaussTrue => &self.delta_gauss_true,
            ResidualKind::FGauss => &self.delta_f_gauss,
        }
    }
}

fn run_one(cfg: &EnsembleConfig, index: usize) -> Result<ResidualRecord> {
    let seed = acquisition_seed(cfg.master_seed, index);
    let state = cfg.state_family.state(index, cfg.n_acquisitions)?;
    let acq = AcquisitionConfig::new(cfg.n_bins, cfg.samples_per_bin, seed)?;
    let series = simulate_acquisition(&state, &cfg.detector, &acq)?;
    let opts = AnalysisOptions {
        eta: cfg.invert_loss.then_some(cfg.detector.efficiency),
        f_statistic: cfg.f_statistic,
        check_normality: false,
        ..Default::default()
    };
    let report = analyze(&series, None, &opts)?;
    let pi_true = if cfg.invert_loss {
        state.purity()
    } else {
        cfg.detector.observed_state(&state).purity()
    };
    let pi_f = report.purity.estimates.pi_f_approx;
    let pi_gauss = report
        .purity
        .estimates
        .pi_gauss
        .ok_or_else(|| Error::InvalidInput("no Gaussian purity for this acquisition".into()))?;
    Ok(ResidualRecord {
        index,
        seed,
        pi_true,
        pi_f,
        pi_gauss,
        delta_f_true: normalized_residual(pi_f, pi_true),
        delta_gauss_true: normalized_residual(pi_gauss, pi_true),
        delta_f_gauss: normalized_residual(pi_f, pi_gauss),
    })
}

/// Simulates and analyzes every acquisition. Results are ordered by index
/// and identical for a given config regardless of thread count.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<ResidualSummary> {
    cfg.validate()?;
    let outcomes: Vec<Result<ResidualRecord>> = (0..cfg.n_acquisitions)
        .into_par_iter()
        .map(|i| run_one(cfg, i))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(AcquisitionFailure {
                index,
                seed: acquisition_seed(cfg.master_seed, index),
                error: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.n_acquisitions as f64 || records.len() < 2
    {
        return Err(Error::EnsembleFailure {
            failed: failures.len(),
            total: cfg.n_acquisitions,
        });
    }

    let column = |kind: ResidualKind| -> Vec<f64> { records.iter().map(|r| kind.of(r)).collect() };
    Ok(ResidualSummary {
        delta_f_true: PopulationSummary::of(&column(ResidualKind::FTrue)),
        delta_gauss_true: PopulationSummary::of(&column(ResidualKind::GaussTrue)),
        delta_f_gauss: PopulationSummary::of(&column(ResidualKind::FGauss)),
        config: cfg.clone(),
        records,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBin {
    pub pi_lo: f64,
    pub pi_hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub mean_abs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    Systematic,
    NoTrend,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub kind: ResidualKind,
    pub bins: Vec<TrendBin>,
    /// OLS slope of Δ against π_true.
    pub slope: f64,
    pub slope_se: f64,
    pub slope_t: f64,
    /// One-way ANOVA of Δ across purity bins.
    pub anova_f: Option<f64>,
    pub anova_p: Option<f64>,
    /// Spearman correlation of |Δ| with π_true.
    pub abs_rank_correlation: f64,
    pub verdict: TrendVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub delta_f_true: Trend,
    pub delta_gauss_true: Trend,
    pub delta_f_gauss: Trend,
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Trend of one residual population against the true purity.
pub fn trend_of(records: &[ResidualRecord], kind: ResidualKind, n_bins: usize) -> Trend {
    let x: Vec<f64> = records.iter().map(|r| r.pi_true).collect();
    let y: Vec<f64> = records.iter().map(|r| kind.of(r)).collect();
    let n = x.len();
    let nf = n as f64;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;

    let (slope, slope_se) = if n > 2 && spread > 0.0 {
        let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let b = sxy / sxx;
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, c)| (c - my - b * (a - mx)).powi(2))
            .sum();
        (b, (rss / (nf - 2.0) / sxx).sqrt())
    } else {
        (0.0, f64::NAN)
    };
    let slope_t = if slope_se > 0.0 {
        slope / slope_se
    } else {
        f64::NAN
    };

    let width = if spread > 0.0 {
        spread / n_bins as f64
    } else {
        1.0
    };
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_bins.max(1)];
    for (a, b) in x.iter().zip(&y) {
        let j = (((a - lo) / width) as usize).min(groups.len() - 1);
        groups[j].push(*b);
    }
    let bins: Vec<TrendBin> = groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let m = g.len() as f64;
            TrendBin {
                pi_lo: lo + j as f64 * width,
                pi_hi: lo + (j + 1) as f64 * width,
                count: g.len(),
                mean: (!g.is_empty()).then(|| g.iter().sum::<f64>() / m),
                mean_abs: (!g.is_empty()).then(|| g.iter().map(|v| v.abs()).sum::<f64>() / m),
            }
        })
        .collect();

    let occupied: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let k = occupied.len();
    let (anova_f, anova_p) = if k >= 2 && n > k {
        let grand = y.iter().sum::<f64>() / nf;
        let mut between = 0.0;
        let mut within = 0.0;
        for g in &occupied {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            between += g.len() as f64 * (m - grand).powi(2);
            within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        }
        let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
        if within > 0.0 {
            let f = (between / d1) / (within / d2);
            let p = FisherSnedecor::new(d1, d2).map(|d| d.sf(f)).ok();
            (Some(f), p)
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };

    let abs_y: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let abs_rank_correlation = spearman(&x, &abs_y);

    let verdict = if n < MIN_TREND_RECORDS || spread < MIN_PURITY_SPREAD {
        TrendVerdict::Inconclusive
    } else if slope_t.abs() > TREND_T_THRESHOLD || anova_p.is_some_and(|p| p < TREND_ANOVA_P) {
        TrendVerdict::Systematic
    } else {
        TrendVerdict::NoTrend
    };

    Trend {
        kind,
        bins,
        slope,
        slope_se,
        slope_t,
        anova_f,
        anova_p,
        abs_rank_correlation,
        verdict,
    }
}

pub fn residual_trend(summary: &ResidualSummary) -> TrendReport {
    let t = |kind| trend_of(&summary.records, kind, TREND_BINS);
    TrendReport {
        delta_f_true: t(ResidualKind::FTrue),
        delta_gauss_true: t(ResidualKind::GaussTrue),
        delta_f_gauss: t(ResidualKind::FGauss),
    }
}
