//! Normality checks for quadrature samples: excess kurtosis and the
//! Shapiro–Wilk W test in Royston's large-sample form (AS R94).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.01;

pub const SHAPIRO_MIN_N: usize = 12;
pub const SHAPIRO_MAX_N: usize = 5000;

/// Fraction of tied neighbours in the sorted sample that triggers a note.
const TIE_TOLERANCE: f64 = 0.05;

// Royston (1995) polynomial approximations.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

/// `m₄/m₂² − 3`, from central sample moments.
pub fn kurtosis_excess(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::SampleSizeOutOfRange {
            n,
            min: 4,
            max: usize::MAX,
        });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (m2, m4) = samples.iter().fold((0.0, 0.0), |(m2, m4), x| {
        let d2 = (x - mean).powi(2);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / nf, m4 / nf);
    if m2 == 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    /// Probability under normality of a W at least this small.
    pub p: f64,
    pub notes: Vec<String>,
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Antisymmetric weights `a_1 … a_{n/2}` (positive, largest first), applied
/// to `x_(n+1−i) − x_(i)`.
fn coefficients(n: usize) -> Vec<f64> {
    let norm = std_normal();
    let half = n / 2;
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();

    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
    let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
        / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
        .sqrt();

    let mut a = Vec::with_capacity(half);
    a.push(a1);
    a.push(a2);
    a.extend(m[2..].iter().map(|v| -v / fac));
    a
}

/// Shapiro–Wilk W with Royston's normalizing transform for the p-value.
/// Valid for 12 ≤ n ≤ 5000.
pub fn shapiro_wilk(samples: &[f64]) -> Result<ShapiroWilk> {
    let n = samples.len();
    if !(SHAPIRO_MIN_N..=SHAPIRO_MAX_N).contains(&n) {
        return Err(Error::SampleSizeOutOfRange {
            n,
            min: SHAPIRO_MIN_N,
            max: SHAPIRO_MAX_N,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] <= 0.0 {
        return Err(Error::DegenerateSample);
    }

    let mut notes = Vec::new();
    let ties = x.windows(2).filter(|w| w[0] == w[1]).count();
    if ties as f64 > TIE_TOLERANCE * n as f64 {
        notes.push(format!(
            "{ties} tied values in {n} samples; W may be unreliable"
        ));
    }

    let a = coefficients(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let b: f64 = a
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]))
        .sum();
    let w = (b * b / ss).min(1.0);

    let ln_n = (n as f64).ln();
    let mu = poly(&C5, ln_n);
    let sigma = poly(&C6, ln_n).exp();
    let z = ((1.0 - w).ln() - mu) / sigma;
    let p = if w >= 1.0 { 1.0 } else { std_normal().sf(z) };

    Ok(ShapiroWilk { w, p, notes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub alpha: f64,
    /// Normality not rejected at this level.
    pub normal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub kurtosis_excess: f64,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
    pub n: usize,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl NormalityResult {
    pub fn normal_at(&self, alpha: f64) -> bool {
        self.shapiro_p >= alpha
    }
}

/// Both statistics plus a Shapiro–Wilk verdict at each significance level.
pub fn test_normality(samples: &[f64], alphas: &[f64]) -> Result<NormalityResult> {
    let kurtosis_excess = kurtosis_excess(samples)?;
    let sw = shapiro_wilk(samples)?;
    let verdicts = alphas
        .iter()
        .map(|&alpha| Verdict {
            alpha,
            normal: sw.p >= alpha,
        })
        .collect();
    Ok(NormalityResult {
        kurtosis_excess,
        shapiro_w: sw.w,
        shapiro_p: sw.p,
        n: samples.len(),
        verdicts,
        notes: sw.notes,
    })
}
