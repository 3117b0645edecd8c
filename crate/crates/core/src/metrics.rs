//! Detection metrics over pair scores and streaming results.
//!
//! Acceptance is always `score >= threshold`; tied pairs count half in AUC.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("both classes need at least one score")]
    EmptyClass,
    #[error("no positive utterances")]
    NoPositives,
    #[error("score {0} is not a finite value in [0, 1]")]
    BadScore(f64),
    #[error("negative audio duration must be positive, got {0} h")]
    BadHours(f64),
    #[error("false-alarm rate must be non-negative, got {0}")]
    BadRate(f64),
    #[error("score file: {0}")]
    ScoreFile(String),
}

fn check_scores(v: &[f64]) -> Result<(), MetricsError> {
    match v
        .iter()
        .find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s)))
    {
        Some(&s) => Err(MetricsError::BadScore(s)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl ScoreSet {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<Self, MetricsError> {
        let s = Self { pos, neg };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.pos.is_empty() || self.neg.is_empty() {
            return Err(MetricsError::EmptyClass);
        }
        check_scores(&self.pos)?;
        check_scores(&self.neg)
    }

    /// Splits `(label, score)` pairs by label.
    pub fn from_labelled(
        items: impl IntoIterator<Item = (bool, f64)>,
    ) -> Result<Self, MetricsError> {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (label, score) in items {
            if label {
                pos.push(score)
            } else {
                neg.push(score)
            }
        }
        Self::new(pos, neg)
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn auc(s: &ScoreSet) -> Result<f64, MetricsError> {
    s.validate()?;
    let neg = sorted(&s.neg);
    let mut twice_wins: u64 = 0;
    for &p in &s.pos {
        let below = neg.partition_point(|&n| n < p) as u64;
        let not_above = neg.partition_point(|&n| n <= p) as u64;
        twice_wins += 2 * below + (not_above - below);
    }
    Ok(twice_wins as f64 / (2.0 * s.pos.len() as f64 * s.neg.len() as f64))
}

/// `(FAR, TPR)` at every distinct threshold, from (0,0) to (1,1).
pub fn roc_points(s: &ScoreSet) -> Result<Vec<(f64, f64)>, MetricsError> {
    s.validate()?;
    let pos = sorted(&s.pos);
    let neg = sorted(&s.neg);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let rate =
        |v: &[f64], t: f64| (v.len() - v.partition_point(|&x| x < t)) as f64 / v.len() as f64;
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        points.push((rate(&neg, t), rate(&pos, t)));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Equal error rate. Thresholds sweep every distinct score plus +inf; when
/// FAR - FRR changes sign between neighbours the crossing is interpolated
/// linearly.
pub fn eer(s: &ScoreSet) -> Result<f64, MetricsError> {
    s.validate()?;
    let pos = sorted(&s.pos);
    let neg = sorted(&s.neg);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let point = |t: f64| {
        let far = (neg.len() - neg.partition_point(|&x| x < t)) as f64 / neg.len() as f64;
        let frr = pos.partition_point(|&x| x < t) as f64 / pos.len() as f64;
        (far, frr)
    };
    let mut prev = point(thresholds[0]);
    for &t in &thresholds {
        let cur = point(t);
        let d_cur = cur.0 - cur.1;
        if d_cur == 0.0 {
            return Ok(cur.0);
        }
        let d_prev = prev.0 - prev.1;
        if d_prev > 0.0 && d_cur < 0.0 {
            let alpha = d_prev / (d_prev - d_cur);
            return Ok(prev.0 + alpha * (cur.0 - prev.0));
        }
        prev = cur;
    }
    unreachable!("FAR - FRR runs from 1 at the lowest score to -1 at +inf")
}

/// Streaming evaluation input: the best final score of each positive
/// utterance and every false alarm raised on negative audio.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamEval {
    pub positive_best: Vec<f64>,
    pub false_alarms: Vec<f64>,
    pub negative_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallAtFar {
    pub recall: f64,
    pub threshold: f64,
    /// Number of false alarms the target rate permits.
    pub allowed: u64,
}

/// Recall at the lowest threshold that keeps false alarms within
/// `floor(rate * hours)`.
pub fn recall_at_far(se: &StreamEval, fa_per_hour: f64) -> Result<RecallAtFar, MetricsError> {
    if se.positive_best.is_empty() {
        return Err(MetricsError::NoPositives);
    }
    if !(se.negative_hours > 0.0 && se.negative_hours.is_finite()) {
        return Err(MetricsError::BadHours(se.negative_hours));
    }
    if !(fa_per_hour >= 0.0 && fa_per_hour.is_finite()) {
        return Err(MetricsError::BadRate(fa_per_hour));
    }
    check_scores(&se.positive_best)?;
    check_scores(&se.false_alarms)?;
    let allowed = (fa_per_hour * se.negative_hours).floor() as u64;
    let mut fa = se.false_alarms.clone();
    fa.sort_by(|a, b| b.total_cmp(a));
    let threshold = match fa.get(allowed as usize) {
        Some(&kth) => kth.next_up(),
        None => 0.0,
    };
    let hits = se.positive_best.iter().filter(|&&p| p >= threshold).count();
    Ok(RecallAtFar {
        recall: hits as f64 / se.positive_best.len() as f64,
        threshold,
        allowed,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub eer: f64,
    /// Keyed by the false-alarm rate per hour.
    pub recall_at_far: BTreeMap<String, f64>,
}

/// Standard report: AUC and EER over pair scores, recall at 0.5 and 1.0
/// false alarms per hour when negative hours are known.
pub fn report(
    scores: &ScoreSet,
    negative_hours: Option<f64>,
    rates: &[f64],
) -> Result<MetricsReport, MetricsError> {
    let mut recall = BTreeMap::new();
    if let Some(hours) = negative_hours {
        let se = StreamEval {
            positive_best: scores.pos.clone(),
            false_alarms: scores.neg.clone(),
            negative_hours: hours,
        };
        for &r in rates {
            recall.insert(format!("{r:.1}"), recall_at_far(&se, r)?.recall);
        }
    }
    Ok(MetricsReport {
        auc: auc(scores)?,
        eer: eer(scores)?,
        recall_at_far: recall,
    })
}

/// One row of a score dump.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub label: u8,
    pub s1: f64,
    /// Empty when stage two did not run.
    pub s2: Option<f64>,
}

pub fn write_score_csv(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| MetricsError::ScoreFile(e.to_string()))
}

pub fn read_score_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>, MetricsError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<ScoreRow>, _>>()
        .map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    if let Some(bad) = rows.iter().find(|r| r.label > 1) {
        return Err(MetricsError::ScoreFile(format!(
            "{}: label must be 0 or 1",
            bad.id
        )));
    }
    Ok(rows)
}

pub fn write_roc_csv(path: impl AsRef<Path>, points: &[(f64, f64)]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    let err = |e: csv::Error| MetricsError::ScoreFile(e.to_string());
    w.write_record(["far", "tpr"]).map_err(err)?;
    for (far, tpr) in points {
        w.write_record([far.to_string(), tpr.to_string()])
            .map_err(err)?;
    }
    w.flush()
        .map_err(|e| MetricsError::ScoreFile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked() -> ScoreSet {
        ScoreSet::new(vec![0.9, 0.8, 0.4], vec![0.7, 0.3, 0.2]).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(auc(&worked()).unwrap(), 8.0 / 9.0);
        assert_eq!(eer(&worked()).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn separated_and_identical() {
        let s = ScoreSet::new(vec![0.8, 0.9], vec![0.1, 0.2]).unwrap();
        assert_eq!(auc(&s).unwrap(), 1.0);
        assert_eq!(eer(&s).unwrap(), 0.0);
        assert!(roc_points(&s).unwrap().contains(&(0.0, 1.0)));
        let same = ScoreSet::new(vec![0.1, 0.5, 0.5], vec![0.5, 0.1, 0.5]).unwrap();
        assert_eq!(auc(&same).unwrap(), 0.5);
    }

    #[test]
    fn roc_single_pair() {
        let s = ScoreSet::new(vec![0.6], vec![0.4]).unwrap();
        assert_eq!(
            roc_points(&s).unwrap(),
            [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn empty_class() {
        assert_eq!(
            ScoreSet::new(vec![], vec![0.1]),
            Err(MetricsError::EmptyClass)
        );
        assert_eq!(auc(&ScoreSet::default()), Err(MetricsError::EmptyClass));
        assert_eq!(
            ScoreSet::new(vec![1.5], vec![0.1]),
            Err(MetricsError::BadScore(1.5))
        );
    }

    #[test]
    fn eer_identical_distributions_near_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pos = (0..5000).map(|_| rng.random::<f64>()).collect();
        let neg = (0..5000).map(|_| rng.random::<f64>()).collect();
        let e = eer(&ScoreSet::new(pos, neg).unwrap()).unwrap();
        assert!((e - 0.5).abs() < 0.05, "{e}");
    }

    #[test]
    fn recall_examples() {
        let se = StreamEval {
            positive_best: vec![0.9, 0.2],
            false_alarms: vec![],
            negative_hours: 1.0,
        };
        let r = recall_at_far(&se, 1.0).unwrap();
        assert_eq!((r.recall, r.threshold), (1.0, 0.0));

        let se = StreamEval {
            false_alarms: vec![0.5],
            ..se
        };
        let r = recall_at_far(&se, 1.0).unwrap();
        assert_eq!((r.recall, r.threshold, r.allowed), (1.0, 0.0, 1));
        let r = recall_at_far(&se, 0.0).unwrap();
        assert_eq!(r.recall, 0.5);
        assert!(r.threshold > 0.5 && r.threshold < 0.5 + 1e-12);

        let none = StreamEval {
            positive_best: vec![],
            ..se.clone()
        };
        assert_eq!(recall_at_far(&none, 1.0), Err(MetricsError::NoPositives));
        let zero_h = StreamEval {
            negative_hours: 0.0,
            ..se
        };
        assert_eq!(
            recall_at_far(&zero_h, 1.0),
            Err(MetricsError::BadHours(0.0))
        );
    }

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let rows = vec![
            ScoreRow {
                id: "a".into(),
                label: 1,
                s1: 0.75,
                s2: Some(0.5),
            },
            ScoreRow {
                id: "b".into(),
                label: 0,
                s1: 0.0,
                s2: None,
            },
        ];
        write_score_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,label,s1,s2\n"));
        assert_eq!(read_score_csv(&path).unwrap(), rows);
    }

    fn score_vec(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..max)
    }

    proptest! {
        #[test]
        fn auc_matches_trapezoid(pos in score_vec(40), neg in score_vec(40)) {
            let s = ScoreSet::new(pos, neg).unwrap();
            let a = auc(&s).unwrap();
            let t = trapezoid_area(&roc_points(&s).unwrap());
            prop_assert!((a - t).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(pos in score_vec(30), neg in score_vec(30), rate in 0.0f64..5.0) {
            let s = ScoreSet::new(pos, neg).unwrap();
            let f = |v: &Vec<f64>| v.iter().map(|x| x * x * x).collect::<Vec<_>>();
            let t = ScoreSet::new(f(&s.pos), f(&s.neg)).unwrap();
            // Cubing can merge distinct tiny scores into equal floats; skip those.
            let distinct = |v: &ScoreSet| {
                let mut all: Vec<f64> = v.pos.iter().chain(&v.neg).copied().collect();
                all.sort_by(f64::total_cmp);
                all.dedup();
                all.len()
            };
            prop_assume!(distinct(&s) == distinct(&t));
            prop_assert_eq!(auc(&s).unwrap(), auc(&t).unwrap());
            prop_assert!((eer(&s).unwrap() - eer(&t).unwrap()).abs() < 1e-12);
            let se = |v: &ScoreSet| StreamEval { positive_best: v.pos.clone(), false_alarms: v.neg.clone(), negative_hours: 1.5 };
            prop_assert_eq!(recall_at_far(&se(&s), rate).unwrap().recall, recall_at_far(&se(&t), rate).unwrap().recall);
        }

        #[test]
        fn eer_symmetry(pos in score_vec(30), neg in score_vec(30)) {
            let s = ScoreSet::new(pos, neg).unwrap();
            let flip = |v: &Vec<f64>| v.iter().map(|x| 1.0 - x).collect::<Vec<_>>();
            let mirrored = ScoreSet::new(flip(&s.neg), flip(&s.pos)).unwrap();
            let mut all: Vec<f64> = s.pos.iter().chain(&s.neg).copied().collect();
            let n = all.len();
            all.sort_by(f64::total_cmp);
            all.dedup();
            // With ties the >= rule is not mirror-symmetric.
            prop_assume!(all.len() == n);
            prop_assert!((eer(&s).unwrap() - eer(&mirrored).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn recall_non_decreasing_in_rate(pos in score_vec(20), fa in prop::collection::vec(0.0f64..=1.0, 0..30), a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let se = StreamEval { positive_best: pos, false_alarms: fa, negative_hours: 2.0 };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(recall_at_far(&se, lo).unwrap().recall <= recall_at_far(&se, hi).unwrap().recall);
        }
    }
}
