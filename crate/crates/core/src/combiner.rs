//! Prediction combination: builds the validation error matrix, turns fitted
//! error expectations into per-model confidence intervals, and selects the
//! final banded score by reliability-weighted interval voting.

use serde::{Deserialize, Serialize};

use crate::scale::ScoreScale;
use crate::{Error, Result};

/// N×M continuous predictions with aligned instance and model identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct PredictionMatrix {
    instance_ids: Vec<String>,
    model_ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawMatrix {
    instance_ids: Vec<String>,
    model_ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawMatrix> for PredictionMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        PredictionMatrix::new(raw.instance_ids, raw.model_ids, raw.values)
    }
}

impl PredictionMatrix {
    pub fn new(
        instance_ids: Vec<String>,
        model_ids: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if instance_ids.is_empty() {
            return Err(Error::input("prediction matrix needs at least one instance"));
        }
        if model_ids.is_empty() {
            return Err(Error::input("prediction matrix needs at least one model"));
        }
        if values.len() != instance_ids.len() {
            return Err(Error::input(format!(
                "prediction matrix has {} rows but {} instance ids",
                values.len(),
                instance_ids.len()
            )));
        }
        for (row, id) in values.iter().zip(&instance_ids) {
            if row.len() != model_ids.len() {
                return Err(Error::input(format!(
                    "instance '{id}' has {} predictions, expected {}",
                    row.len(),
                    model_ids.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::input(format!(
                    "non-finite prediction for instance '{id}' from model '{}'",
                    model_ids[j]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &instance_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate instance id '{id}'")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &model_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate model id '{id}'")));
            }
        }
        Ok(PredictionMatrix { instance_ids, model_ids, values })
    }

    pub fn instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn column(&self, model: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[model]).collect()
    }

    /// Row-wise unweighted mean across models (the plain voting baseline).
    pub fn row_means(&self) -> Vec<f64> {
        let m = self.models() as f64;
        self.values.iter().map(|r| r.iter().sum::<f64>() / m).collect()
    }

    /// Select a subset of rows by index, preserving order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut vals = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.instances() {
                return Err(Error::input(format!("row index {i} out of range")));
            }
            ids.push(self.instance_ids[i].clone());
            vals.push(self.values[i].clone());
        }
        PredictionMatrix::new(ids, self.model_ids.clone(), vals)
    }
}

/// Per-(band, model) mean absolute error normalized by the scale range,
/// with validation support counts; cells without support are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummaryMatrix {
    values: Vec<Vec<Option<f64>>>,
    support: Vec<Vec<u32>>,
    scale: ScoreScale,
}

impl ErrorSummaryMatrix {
    pub fn bands(&self) -> usize {
        self.values.len()
    }

    pub fn models(&self) -> usize {
        self.support[0].len()
    }

    pub fn value(&self, band: usize, model: usize) -> Option<f64> {
        self.values[band][model]
    }

    pub fn support(&self, band: usize, model: usize) -> u32 {
        self.support[band][model]
    }

    pub fn scale(&self) -> &ScoreScale {
        &self.scale
    }

    /// Bands with zero validation support across all models.
    pub fn missing_bands(&self) -> Vec<usize> {
        (0..self.bands())
            .filter(|&b| self.values[b].iter().all(|v| v.is_none()))
            .collect()
    }

    /// View as an item-response observation matrix (missing cells preserved).
    pub fn to_observation_matrix(&self, epsilon: f64) -> Result<crate::birt::ObservationMatrix> {
        crate::birt::ObservationMatrix::with_missing(self.values.clone(), epsilon)
    }
}

/// Mean absolute validation error per (gold band, model), normalized by the
/// scale range and clamped into [epsilon, 1 − epsilon].
pub fn build_error_matrix(
    val_preds: &PredictionMatrix,
    val_gold: &[f64],
    scale: &ScoreScale,
    epsilon: f64,
) -> Result<ErrorSummaryMatrix> {
    if val_gold.is_empty() {
        return Err(Error::input("validation set is empty"));
    }
    if val_gold.len() != val_preds.instances() {
        return Err(Error::input(format!(
            "{} gold scores but {} validation predictions",
            val_gold.len(),
            val_preds.instances()
        )));
    }
    let bands = scale.band_count();
    let models = val_preds.models();
    let mut sums = vec![vec![0.0f64; models]; bands];
    let mut support = vec![vec![0u32; models]; bands];
    for (row, &gold) in val_preds.rows().iter().zip(val_gold) {
        if !gold.is_finite() {
            return Err(Error::input(format!("non-finite gold score {gold}")));
        }
        let b = scale.band_of(gold)?;
        for (m, &pred) in row.iter().enumerate() {
            sums[b][m] += (gold - pred).abs() / scale.range();
            support[b][m] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&support)
        .map(|(row, sup)| {
            row.iter()
                .zip(sup)
                .map(|(&s, &n)| (n > 0).then(|| (s / n as f64).clamp(epsilon, 1.0 - epsilon)))
                .collect()
        })
        .collect();
    Ok(ErrorSummaryMatrix { values, support, scale: scale.clone() })
}

/// Symmetric prediction interval in score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Interval around one model's prediction, sized by its expected error for
/// the band of its own prediction (the gold band is unknown at test time).
pub fn confidence_interval(
    pred: f64,
    model_index: usize,
    expected_errors: &[Vec<f64>],
    scale: &ScoreScale,
) -> Result<Interval> {
    let band = scale.band_of(pred)?;
    let row = expected_errors
        .get(band)
        .ok_or_else(|| Error::input(format!("expected-error table lacks band {band}")))?;
    let e = row
        .get(model_index)
        .ok_or_else(|| Error::input(format!("expected-error table lacks model {model_index}")))?;
    let half = e * scale.range();
    Ok(Interval { lo: pred - half, hi: pred + half })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Argmax,
    TiebreakDistance,
    TiebreakLower,
    /// Only reachable with `prefer_narrow_intervals_on_tie`.
    TiebreakWidth,
    Fallback,
}

/// Voting variants left off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CombineOptions {
    /// Count each interval as weight 1 instead of 1 − expected error.
    pub unweighted_votes: bool,
    /// On vote ties, prefer the band supported by the narrowest intervals
    /// before falling back to the distance rule.
    pub prefer_narrow_intervals_on_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAudit {
    pub instance_id: String,
    pub intervals: Vec<Interval>,
    pub weights: Vec<f64>,
    pub votes: Vec<f64>,
    pub final_band: usize,
    pub final_score: f64,
    pub rule: SelectionRule,
    /// True when any contributing expected-error cell was extrapolated.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineOutcome {
    pub bands: Vec<usize>,
    pub scores: Vec<f64>,
    pub audits: Vec<InstanceAudit>,
}

/// Reliability-weighted interval voting over the scale's canonical band
/// scores.
///
/// Per instance: each model's interval votes, with weight 1 − expected
/// error, for every band score it contains; the band with the highest vote
/// total wins. Ties break toward the band score closest to the
/// reliability-weighted mean of the raw predictions, then toward the lower
/// band. When no interval contains any band score, the weighted mean's band
/// is used. The audit names the rule that fired.
pub fn combine(
    test_preds: &PredictionMatrix,
    expected_errors: &[Vec<f64>],
    extrapolated_bands: &[usize],
    scale: &ScoreScale,
    options: &CombineOptions,
) -> Result<CombineOutcome> {
    if test_preds.models() < 2 {
        return Err(Error::input(format!(
            "combination needs >= 2 models, got {}",
            test_preds.models()
        )));
    }
    if expected_errors.len() != scale.band_count() {
        return Err(Error::input(format!(
            "expected-error table has {} bands, scale has {}",
            expected_errors.len(),
            scale.band_count()
        )));
    }
    for row in expected_errors {
        if row.len() != test_preds.models() {
            return Err(Error::input(format!(
                "expected-error table has {} models, predictions have {}",
                row.len(),
                test_preds.models()
            )));
        }
        if row.iter().any(|e| !e.is_finite() || *e <= 0.0 || *e >= 1.0) {
            return Err(Error::input("expected errors must lie strictly in (0,1)"));
        }
    }

    let band_scores = scale.band_scores();
    let mut bands = Vec::with_capacity(test_preds.instances());
    let mut scores = Vec::with_capacity(test_preds.instances());
    let mut audits = Vec::with_capacity(test_preds.instances());

    for (i, row) in test_preds.rows().iter().enumerate() {
        let mut intervals = Vec::with_capacity(row.len());
        let mut weights = Vec::with_capacity(row.len());
        let mut extrapolated = false;
        for (m, &pred) in row.iter().enumerate() {
            let own_band = scale.band_of(pred)?;
            let e = expected_errors[own_band][m];
            let half = e * scale.range();
            intervals.push(Interval { lo: pred - half, hi: pred + half });
            weights.push(if options.unweighted_votes { 1.0 } else { 1.0 - e });
            if extrapolated_bands.contains(&own_band) {
                extrapolated = true;
            }
        }

        let votes: Vec<f64> = band_scores
            .iter()
            .map(|&s| {
                intervals
                    .iter()
                    .zip(&weights)
                    .filter(|(iv, _)| iv.contains(s))
                    .map(|(_, &w)| w)
                    .sum()
            })
            .collect();

        let weighted_mean = {
            let wsum: f64 = weights.iter().sum();
            row.iter().zip(&weights).map(|(&p, &w)| p * w).sum::<f64>() / wsum
        };

        let vmax = votes.iter().fold(0.0f64, |acc, &v| acc.max(v));
        let (final_band, rule) = if vmax <= 0.0 {
            (scale.band_of(weighted_mean)?, SelectionRule::Fallback)
        } else {
            let mut candidates: Vec<usize> =
                (0..votes.len()).filter(|&b| votes[b] == vmax).collect();
            if candidates.len() == 1 {
                (candidates[0], SelectionRule::Argmax)
            } else {
                let mut rule = None;
                if options.prefer_narrow_intervals_on_tie {
                    let total_width = |b: usize| -> f64 {
                        intervals
                            .iter()
                            .filter(|iv| iv.contains(band_scores[b]))
                            .map(Interval::width)
                            .sum()
                    };
                    let min_width = candidates
                        .iter()
                        .map(|&b| total_width(b))
                        .fold(f64::INFINITY, f64::min);
                    candidates.retain(|&b| total_width(b) == min_width);
                    if candidates.len() == 1 {
                        rule = Some(SelectionRule::TiebreakWidth);
                    }
                }
                if candidates.len() > 1 {
                    let min_dist = candidates
                        .iter()
                        .map(|&b| (band_scores[b] - weighted_mean).abs())
                        .fold(f64::INFINITY, f64::min);
                    let before = candidates.len();
                    candidates.retain(|&b| (band_scores[b] - weighted_mean).abs() == min_dist);
                    if candidates.len() == 1 && before > 1 {
                        rule = Some(SelectionRule::TiebreakDistance);
                    } else if candidates.len() > 1 {
                        rule = Some(SelectionRule::TiebreakLower);
                    }
                }
                (candidates[0], rule.unwrap_or(SelectionRule::TiebreakWidth))
            }
        };

        let final_score = scale.band_score(final_band)?;
        bands.push(final_band);
        scores.push(final_score);
        audits.push(InstanceAudit {
            instance_id: test_preds.instance_ids()[i].clone(),
            intervals,
            weights,
            votes,
            final_band,
            final_score,
            rule,
            extrapolated,
        });
    }

    Ok(CombineOutcome { bands, scores, audits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eebr() -> ScoreScale {
        ScoreScale::eebr()
    }

    fn pm(ids: &[&str], models: &[&str], rows: Vec<Vec<f64>>) -> PredictionMatrix {
        PredictionMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            models.iter().map(|s| s.to_string()).collect(),
            rows,
        )
        .unwrap()
    }

    fn uniform_errors(bands: usize, models: usize, e: f64) -> Vec<Vec<f64>> {
        vec![vec![e; models]; bands]
    }

    #[test]
    fn error_matrix_hand_arithmetic() {
        // gold [120,120,160], model A preds [100,140,180]: band-120 errors
        // |120-100|=20 and |120-140|=20 -> 20/200 = 0.1; band-160 error 20 -> 0.1
        let preds = pm(&["a", "b", "c"], &["A", "B"], vec![
            vec![100.0, 120.0],
            vec![140.0, 120.0],
            vec![180.0, 160.0],
        ]);
        let m = build_error_matrix(&preds, &[120.0, 120.0, 160.0], &eebr(), 1e-4).unwrap();
        assert!((m.value(3, 0).unwrap() - 0.1).abs() < 1e-12);
        assert!((m.value(4, 0).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(m.support(3, 0), 2);
        assert_eq!(m.support(4, 0), 1);
        // model B predicted gold exactly -> clamped to epsilon
        assert_eq!(m.value(3, 1).unwrap(), 1e-4);
        assert_eq!(m.value(4, 1).unwrap(), 1e-4);
        // bands 0,1,2,5 unsupported
        assert_eq!(m.missing_bands(), vec![0, 1, 2, 5]);
    }

    #[test]
    fn error_matrix_single_band_gold() {
        let preds = pm(&["a", "b"], &["A", "B"], vec![vec![110.0, 130.0], vec![115.0, 125.0]]);
        let m = build_error_matrix(&preds, &[120.0, 120.0], &eebr(), 1e-4).unwrap();
        let supported: Vec<usize> =
            (0..6).filter(|&b| m.value(b, 0).is_some()).collect();
        assert_eq!(supported, vec![3]);
    }

    #[test]
    fn error_matrix_rejects_empty_or_mismatched() {
        let preds = pm(&["a"], &["A", "B"], vec![vec![1.0, 2.0]]);
        assert!(build_error_matrix(&preds, &[], &eebr(), 1e-4).is_err());
        assert!(build_error_matrix(&preds, &[1.0, 2.0], &eebr(), 1e-4).is_err());
    }

    #[test]
    fn confidence_interval_examples() {
        let ee = uniform_errors(6, 2, 0.1);
        let iv = confidence_interval(130.0, 0, &ee, &eebr()).unwrap();
        assert_eq!(iv, Interval { lo: 110.0, hi: 150.0 });

        let ee = uniform_errors(6, 2, 1e-4);
        let iv = confidence_interval(130.0, 1, &ee, &eebr()).unwrap();
        assert!((iv.width() - 0.04).abs() < 1e-12);

        let ee = uniform_errors(6, 2, 0.5);
        let iv = confidence_interval(5.0, 0, &ee, &eebr()).unwrap();
        assert_eq!(iv, Interval { lo: -95.0, hi: 105.0 });
    }

    #[test]
    fn combine_three_models_agree_on_120() {
        // intervals [98,138], [105,145], [111,151] all contain 120 and only 120
        let preds = pm(&["x"], &["A", "B", "C"], vec![vec![118.0, 125.0, 131.0]]);
        let ee = uniform_errors(6, 3, 0.1);
        let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
        assert_eq!(out.scores, vec![120.0]);
        assert_eq!(out.audits[0].rule, SelectionRule::Argmax);
    }

    #[test]
    fn combine_unanimous_predictions() {
        let preds = pm(&["x"], &["A", "B"], vec![vec![77.0, 77.0]]);
        for e in [0.01, 0.2, 0.45] {
            let ee = uniform_errors(6, 2, e);
            let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
            assert_eq!(out.bands, vec![2], "expected band 2 at expected error {e}");
        }
    }

    #[test]
    fn combine_reliability_decides_disjoint_intervals() {
        // A predicts 40 with interval [24,56] (votes 40), B predicts 160 with
        // interval [152,168] (votes 160); lower expected error wins the argmax
        let preds = pm(&["x"], &["A", "B"], vec![vec![40.0, 160.0]]);
        let mut ee = uniform_errors(6, 2, 0.05);
        ee[1][0] = 0.08; // A's own-band cell: half-width 16
        ee[4][1] = 0.04; // B's own-band cell: half-width 8
        let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
        assert_eq!(out.scores, vec![160.0]);
        // exhaustive audit of the vote table: 40 gets 0.92, 160 gets 0.96
        let audit = &out.audits[0];
        assert!((audit.votes[1] - 0.92).abs() < 1e-12);
        assert!((audit.votes[4] - 0.96).abs() < 1e-12);
        assert!(audit.votes.iter().enumerate().all(|(b, &v)| b == 1 || b == 4 || v == 0.0));
        assert_eq!(audit.rule, SelectionRule::Argmax);
    }

    #[test]
    fn combine_fallback_when_no_interval_holds_a_band_score() {
        // predictions at 19.98 with epsilon-width intervals straddle no
        // canonical score
        let preds = pm(&["x"], &["A", "B"], vec![vec![19.98, 19.98]]);
        let ee = uniform_errors(6, 2, 1e-4);
        let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
        let audit = &out.audits[0];
        assert_eq!(audit.rule, SelectionRule::Fallback);
        assert!(audit.votes.iter().all(|&v| v == 0.0));
        // weighted mean 19.98 -> band 0
        assert_eq!(out.bands, vec![0]);
    }

    #[test]
    fn combine_tie_breaks_by_distance_then_lower() {
        // both models' wide intervals contain 80 and 120 equally; weighted
        // mean 95 sits nearer 80
        let preds = pm(&["x"], &["A", "B"], vec![vec![95.0, 95.0]]);
        let ee = uniform_errors(6, 2, 0.2); // half-width 40 -> [55,135]
        let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
        assert_eq!(out.audits[0].rule, SelectionRule::TiebreakDistance);
        assert_eq!(out.scores, vec![80.0]);

        // exact midpoint 100: distances tie, lower band wins
        let preds = pm(&["x"], &["A", "B"], vec![vec![100.0, 100.0]]);
        let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
        assert_eq!(out.audits[0].rule, SelectionRule::TiebreakLower);
        assert_eq!(out.scores, vec![80.0]);
    }

    #[test]
    fn combine_narrow_interval_tiebreak_flag() {
        // A predicts 80 with a wide interval [50,110], B predicts 120 with a
        // narrow one [110,130]; unweighted votes tie 1-1
        let preds = pm(&["x"], &["A", "B"], vec![vec![80.0, 120.0]]);
        let mut ee = uniform_errors(6, 2, 0.05);
        ee[2][0] = 0.15; // A half-width 30
        ee[3][1] = 0.05; // B half-width 10
        let options = CombineOptions {
            unweighted_votes: true,
            prefer_narrow_intervals_on_tie: true,
        };
        let out = combine(&preds, &ee, &[], &eebr(), &options).unwrap();
        assert_eq!(out.audits[0].rule, SelectionRule::TiebreakWidth);
        assert_eq!(out.scores, vec![120.0]);

        // without the flag the same tie resolves toward the lower band
        // (weighted mean 100 is equidistant)
        let options = CombineOptions { unweighted_votes: true, ..Default::default() };
        let out = combine(&preds, &ee, &[], &eebr(), &options).unwrap();
        assert_eq!(out.audits[0].rule, SelectionRule::TiebreakLower);
        assert_eq!(out.scores, vec![80.0]);
    }

    #[test]
    fn combine_flags_extrapolated_cells() {
        let preds = pm(&["x", "y"], &["A", "B"], vec![vec![10.0, 15.0], vec![120.0, 118.0]]);
        let ee = uniform_errors(6, 2, 0.1);
        let out = combine(&preds, &ee, &[0], &eebr(), &CombineOptions::default()).unwrap();
        assert!(out.audits[0].extrapolated); // predictions in band 0
        assert!(!out.audits[1].extrapolated);
    }

    #[test]
    fn combine_monotone_reliability() {
        // increasing one model's expected error never increases its weight
        let preds = pm(&["x"], &["A", "B", "C"], vec![vec![100.0, 118.0, 140.0]]);
        let mut prev_weight = f64::INFINITY;
        for e in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let mut ee = uniform_errors(6, 3, 0.1);
            for row in ee.iter_mut() {
                row[0] = e;
            }
            let out = combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).unwrap();
            let w = out.audits[0].weights[0];
            assert!(w < prev_weight);
            prev_weight = w;
        }
    }

    #[test]
    fn combine_rejects_dimension_mismatch() {
        let preds = pm(&["x"], &["A", "B"], vec![vec![1.0, 2.0]]);
        let ee = uniform_errors(6, 3, 0.1);
        assert!(combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).is_err());
        let ee = uniform_errors(4, 2, 0.1);
        assert!(combine(&preds, &ee, &[], &eebr(), &CombineOptions::default()).is_err());
    }

    #[test]
    fn prediction_matrix_validation() {
        assert!(PredictionMatrix::new(vec![], vec!["A".into()], vec![]).is_err());
        assert!(
            PredictionMatrix::new(vec!["a".into()], vec!["A".into()], vec![vec![f64::NAN]])
                .is_err()
        );
        assert!(PredictionMatrix::new(
            vec!["a".into(), "a".into()],
            vec!["A".into()],
            vec![vec![1.0], vec![2.0]]
        )
        .is_err());
    }
}
