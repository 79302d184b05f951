//! Score scales: the banded grading schemes that discretize continuous
//! predictions.
//!
//! A scale is data, not code. Two rubrics ship built in: `eebr` (0..200 in
//! steps of 40, thresholds at 20/60/100/140/180) and `bpne` (integer bands
//! 1..5, nearest-integer thresholds). Custom rubrics load from a JSON file
//! `{"name", "band_scores": [...], "thresholds": [...]}`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A banded grading scheme. Immutable after construction; safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScale")]
pub struct ScoreScale {
    name: String,
    band_scores: Vec<f64>,
    thresholds: Vec<f64>,
}

#[derive(Deserialize)]
struct RawScale {
    name: String,
    band_scores: Vec<f64>,
    thresholds: Vec<f64>,
}

impl TryFrom<RawScale> for ScoreScale {
    type Error = Error;

    fn try_from(raw: RawScale) -> Result<Self> {
        ScoreScale::new(raw.name, raw.band_scores, raw.thresholds)
    }
}

impl ScoreScale {
    pub fn new(
        name: impl Into<String>,
        band_scores: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if band_scores.len() < 2 {
            return Err(Error::input(format!(
                "scale '{name}' needs at least 2 bands, got {}",
                band_scores.len()
            )));
        }
        if thresholds.len() != band_scores.len() - 1 {
            return Err(Error::input(format!(
                "scale '{name}' needs {} thresholds for {} bands, got {}",
                band_scores.len() - 1,
                band_scores.len(),
                thresholds.len()
            )));
        }
        if band_scores.iter().any(|v| !v.is_finite()) || thresholds.iter().any(|v| !v.is_finite())
        {
            return Err(Error::input(format!("scale '{name}' has non-finite entries")));
        }
        if band_scores.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input(format!(
                "scale '{name}' band scores must be strictly increasing"
            )));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input(format!(
                "scale '{name}' thresholds must be strictly increasing"
            )));
        }
        for (k, t) in thresholds.iter().enumerate() {
            if *t < band_scores[k] || *t > band_scores[k + 1] {
                return Err(Error::input(format!(
                    "scale '{name}' threshold {t} out of order with bands {} and {}",
                    band_scores[k],
                    band_scores[k + 1]
                )));
            }
        }
        Ok(ScoreScale { name, band_scores, thresholds })
    }

    /// The 0..200 rubric: below 20 scores 0, then bands of width 40 up to
    /// 180-and-above scoring 200.
    pub fn eebr() -> Self {
        ScoreScale::new(
            "eebr",
            vec![0.0, 40.0, 80.0, 120.0, 160.0, 200.0],
            vec![20.0, 60.0, 100.0, 140.0, 180.0],
        )
        .expect("built-in scale is valid")
    }

    /// The 1..5 integer rubric; continuous values round to the nearest
    /// integer (half-up) and clamp to [1, 5].
    pub fn bpne() -> Self {
        ScoreScale::new(
            "bpne",
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![1.5, 2.5, 3.5, 4.5],
        )
        .expect("built-in scale is valid")
    }

    /// Look up a built-in scale by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "eebr" => Some(Self::eebr()),
            "bpne" => Some(Self::bpne()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn band_count(&self) -> usize {
        self.band_scores.len()
    }

    pub fn band_scores(&self) -> &[f64] {
        &self.band_scores
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Span of the scale in score units: max band score − min band score.
    pub fn range(&self) -> f64 {
        self.band_scores[self.band_scores.len() - 1] - self.band_scores[0]
    }

    /// Band index of a continuous value. Intervals are left-closed,
    /// right-open: index i covers [thresholds[i-1], thresholds[i]), with the
    /// first and last bands open toward ∓∞.
    pub fn band_of(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::input(format!("cannot band non-finite value {value}")));
        }
        Ok(self.thresholds.partition_point(|t| value >= *t))
    }

    /// Canonical score of a band index.
    pub fn band_score(&self, index: usize) -> Result<f64> {
        self.band_scores.get(index).copied().ok_or_else(|| {
            Error::input(format!(
                "band index {index} out of range for scale '{}' with {} bands",
                self.name,
                self.band_scores.len()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eebr_examples() {
        let s = ScoreScale::eebr();
        assert_eq!(s.band_of(150.0).unwrap(), 4);
        assert_eq!(s.band_score(4).unwrap(), 160.0);
        assert_eq!(s.band_of(19.999).unwrap(), 0);
        assert_eq!(s.band_of(180.0).unwrap(), 5);
        assert_eq!(s.band_score(5).unwrap(), 200.0);
    }

    #[test]
    fn eebr_table_at_all_boundaries() {
        let s = ScoreScale::eebr();
        // left-closed, right-open at every threshold
        let cases = [
            (-50.0, 0),
            (0.0, 0),
            (19.999999, 0),
            (20.0, 1),
            (59.999999, 1),
            (60.0, 2),
            (100.0, 3),
            (139.999999, 3),
            (140.0, 4),
            (179.999999, 4),
            (180.0, 5),
            (1000.0, 5),
        ];
        for (v, want) in cases {
            assert_eq!(s.band_of(v).unwrap(), want, "value {v}");
        }
    }

    #[test]
    fn band_score_examples() {
        let s = ScoreScale::eebr();
        assert_eq!(s.band_score(0).unwrap(), 0.0);
        assert_eq!(ScoreScale::bpne().band_score(2).unwrap(), 3.0);
        assert!(s.band_score(6).is_err());
    }

    #[test]
    fn bpne_matches_nearest_integer_rule_on_grid() {
        // independent oracle: round half-up, clamp to [1, 5]
        let s = ScoreScale::bpne();
        for i in 0..=80 {
            let v = -1.0 + 0.1 * i as f64;
            let rounded = (v + 0.5).floor().clamp(1.0, 5.0);
            let want = rounded as usize - 1;
            assert_eq!(s.band_of(v).unwrap(), want, "value {v}");
        }
        assert_eq!(s.band_of(2.4).unwrap(), 1);
    }

    #[test]
    fn band_of_rejects_non_finite() {
        let s = ScoreScale::eebr();
        assert!(s.band_of(f64::NAN).is_err());
        assert!(s.band_of(f64::INFINITY).is_err());
    }

    #[test]
    fn band_of_monotone_and_idempotent() {
        let s = ScoreScale::eebr();
        let mut prev = 0;
        for i in 0..4000 {
            let v = -100.0 + 0.1 * i as f64;
            let b = s.band_of(v).unwrap();
            assert!(b >= prev);
            prev = b;
            let canonical = s.band_score(b).unwrap();
            assert_eq!(s.band_of(canonical).unwrap(), b);
        }
    }

    #[test]
    fn validation_rejects_bad_scales() {
        assert!(ScoreScale::new("x", vec![1.0], vec![]).is_err());
        assert!(ScoreScale::new("x", vec![1.0, 2.0], vec![1.5, 1.6]).is_err());
        assert!(ScoreScale::new("x", vec![2.0, 1.0], vec![1.5]).is_err());
        assert!(ScoreScale::new("x", vec![1.0, 2.0, 3.0], vec![2.5, 1.5]).is_err());
        assert!(ScoreScale::new("x", vec![1.0, 2.0], vec![5.0]).is_err());
        assert!(ScoreScale::new("x", vec![1.0, 2.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = ScoreScale::eebr();
        let text = serde_json::to_string(&s).unwrap();
        let back: ScoreScale = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        // invalid JSON scale is rejected on deserialization
        let bad = r#"{"name":"x","band_scores":[2.0,1.0],"thresholds":[1.5]}"#;
        assert!(serde_json::from_str::<ScoreScale>(bad).is_err());
    }
}
