//! Agreement and correlation metrics on banded and continuous predictions.
//!
//! All functions are pure and safe to call in parallel. Undefined values
//! (Pearson on a constant sequence, kappa with a degenerate chance term) are
//! explicit errors so reports can carry `null` instead of NaN.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// k×k table of counts; rows index the gold band, columns the predicted band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Tally gold/predicted band index pairs.
    pub fn from_labels(gold: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if gold.is_empty() || gold.len() != pred.len() {
            return Err(Error::input(format!(
                "confusion needs equal-length non-empty sequences, got {} and {}",
                gold.len(),
                pred.len()
            )));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (t, (&g, &p)) in gold.iter().zip(pred).enumerate() {
            if g >= k || p >= k {
                return Err(Error::input(format!(
                    "band index out of range at position {t}: gold={g}, pred={p}, k={k}"
                )));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|row| row.len() != k) {
            return Err(Error::input("confusion matrix must be square and non-empty"));
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::input("confusion matrix must have a positive total"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }

    /// Row sums (gold band frequencies).
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    None,
    Linear,
    Quadratic,
}

impl Weighting {
    fn weight(self, i: usize, j: usize, k: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match self {
            Weighting::None => 1.0,
            Weighting::Linear => {
                (i as f64 - j as f64).abs() / (k as f64 - 1.0)
            }
            Weighting::Quadratic => {
                let d = (i as f64 - j as f64) / (k as f64 - 1.0);
                d * d
            }
        }
    }
}

/// Cohen's kappa with optional distance weighting:
/// κ = 1 − Σ w·O / Σ w·E, observed proportions O against the chance
/// expectation E (outer product of the marginals).
///
/// A diagonal matrix scores exactly 1.0. When the chance term Σ w·E is zero
/// (all mass in one cell for both raters) the metric is 1.0 under perfect
/// observed agreement and undefined otherwise.
pub fn kappa(cm: &ConfusionMatrix, weighting: Weighting) -> Result<f64> {
    let k = cm.k();
    let n = cm.total();
    if n == 0 {
        return Err(Error::input("kappa needs a positive confusion total"));
    }
    if cm.is_diagonal() {
        return Ok(1.0);
    }
    // k >= 2 here: a 1x1 matrix is always diagonal
    let nf = n as f64;
    let rows = cm.row_sums();
    let mut cols = vec![0u64; k];
    for row in cm.counts() {
        for (j, &c) in row.iter().enumerate() {
            cols[j] += c;
        }
    }
    let mut observed = 0.0;
    let mut expected = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = weighting.weight(i, j, k);
            observed += w * cm.counts()[i][j] as f64 / nf;
            expected += w * (rows[i] as f64 / nf) * (cols[j] as f64 / nf);
        }
    }
    if expected == 0.0 {
        return Err(Error::UndefinedMetric(
            "kappa chance agreement is degenerate and observed agreement is imperfect".into(),
        ));
    }
    Ok(1.0 - observed / expected)
}

/// Product-moment correlation. Errors when either sequence is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input(format!(
            "pearson needs equal-length sequences of length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("pearson inputs must be finite"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedMetric(
            "pearson undefined for a constant sequence".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaLabel {
    Low,
    Fair,
    Moderate,
    Good,
    VeryHigh,
}

/// Agreement label for a kappa value in [−1, 1]; band edges at 0.20, 0.40,
/// 0.60 and 0.80, upper edge inclusive.
pub fn interpret_kappa(value: f64) -> KappaLabel {
    if value <= 0.20 {
        KappaLabel::Low
    } else if value <= 0.40 {
        KappaLabel::Fair
    } else if value <= 0.60 {
        KappaLabel::Moderate
    } else if value <= 0.80 {
        KappaLabel::Good
    } else {
        KappaLabel::VeryHigh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationStrength {
    None,
    Weak,
    Moderate,
    Strong,
    Perfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PearsonLabel {
    pub strength: CorrelationStrength,
    /// Absent when the correlation is exactly zero.
    pub sign: Option<CorrelationSign>,
}

/// Strength label for a correlation in [−1, 1]: 0 none, (0, 0.3] weak,
/// (0.3, 0.7] moderate, (0.7, 1) strong, ±1 perfect; sign attached.
pub fn interpret_pearson(r: f64) -> PearsonLabel {
    let a = r.abs();
    let strength = if a == 0.0 {
        CorrelationStrength::None
    } else if a <= 0.3 {
        CorrelationStrength::Weak
    } else if a <= 0.7 {
        CorrelationStrength::Moderate
    } else if a < 1.0 {
        CorrelationStrength::Strong
    } else {
        CorrelationStrength::Perfect
    };
    let sign = if a == 0.0 {
        None
    } else if r > 0.0 {
        Some(CorrelationSign::Positive)
    } else {
        Some(CorrelationSign::Negative)
    };
    PearsonLabel { strength, sign }
}

/// Per-system metric fragment; `None` serializes to `null` for metrics that
/// were undefined on the fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kappa_none: Option<f64>,
    pub kappa_linear: Option<f64>,
    pub qwk: Option<f64>,
    pub pearson: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricReport {
    /// Evaluate all metrics for one system: banded agreement from band
    /// indices, correlation from the continuous values.
    pub fn evaluate(
        gold_bands: &[usize],
        pred_bands: &[usize],
        k: usize,
        gold_continuous: &[f64],
        pred_continuous: &[f64],
    ) -> Result<Self> {
        let cm = ConfusionMatrix::from_labels(gold_bands, pred_bands, k)?;
        let soften = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(MetricReport {
            kappa_none: soften(kappa(&cm, Weighting::None))?,
            kappa_linear: soften(kappa(&cm, Weighting::Linear))?,
            qwk: soften(kappa(&cm, Weighting::Quadratic))?,
            pearson: soften(pearson(gold_continuous, pred_continuous))?,
            confusion: cm.counts().to_vec(),
        })
    }
}
