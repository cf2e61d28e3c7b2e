//! Sliding-window correlation detector.
//!
//! `c(n) = sum_i x[n + i] * p[i]` against the antipodal syncword, declared a
//! detection when `c(n)` strictly exceeds the threshold. Evaluation works on
//! the same extracted 16-sample vectors as the learned detectors so ROC points
//! are directly comparable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{preamble_symbols, PREAMBLE_LEN};
use crate::dataset::{Dataset, FeatureVector, LabelScheme};
use crate::exec::Exec;

pub type Template = [f64; PREAMBLE_LEN];

/// Number of thresholds in the default sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 201;

#[derive(Debug, Error, PartialEq)]
pub enum CorrelatorError {
    #[error("offset {offset} out of range: need {PREAMBLE_LEN} samples, have {len}")]
    OutOfRange { offset: usize, len: usize },
    #[error("thresholds must be strictly increasing")]
    UnsortedThresholds,
    #[error("test set has no {0} samples")]
    EmptyClass(&'static str),
    #[error("ROC sweep needs a binary-labeled set, got {0}")]
    NotBinary(LabelScheme),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub pd: f64,
    pub pfa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorConfig {
    pub template: Template,
    pub thresholds: Vec<f64>,
}

impl CorrelatorConfig {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, CorrelatorError> {
        if thresholds
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(CorrelatorError::UnsortedThresholds);
        }
        Ok(Self {
            template: preamble_symbols(),
            thresholds,
        })
    }

    /// `points` thresholds spanning the observed scores with a small margin.
    pub fn spanning(scores: &[f64], points: usize) -> Self {
        let thresholds = spanning_thresholds(scores, points);
        Self::new(thresholds).expect("linspace is increasing")
    }
}

pub fn spanning_thresholds(scores: &[f64], points: usize) -> Vec<f64> {
    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    let (min, max) = if min.is_finite() {
        (min, max)
    } else {
        (0.0, 0.0)
    };
    let eps = 1e-6 * (max - min).abs().max(1.0);
    let (lo, hi) = (min - eps, max + eps);
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn correlate_at(
    samples: &[f64],
    offset: usize,
    template: &Template,
) -> Result<f64, CorrelatorError> {
    let window = samples
        .get(offset..offset + PREAMBLE_LEN)
        .ok_or(CorrelatorError::OutOfRange {
            offset,
            len: samples.len(),
        })?;
    Ok(window.iter().zip(template).map(|(x, p)| x * p).sum())
}

pub fn detect(
    samples: &[f64],
    offset: usize,
    threshold: f64,
    template: &Template,
) -> Result<bool, CorrelatorError> {
    Ok(correlate_at(samples, offset, template)? > threshold)
}

/// Correlation output for a feature vector's 16 samples.
pub fn score(features: &FeatureVector, template: &Template) -> f64 {
    correlate_at(features.samples(), 0, template).expect("feature vectors hold 16 samples")
}

pub fn scores(test: &Dataset, template: &Template) -> Vec<f64> {
    test.samples
        .iter()
        .map(|s| score(&s.features, template))
        .collect()
}

/// ROC at each of `thresholds` for arbitrary detector scores.
pub fn roc_from_scores(
    exec: Exec,
    scores: &[f64],
    positive: &[bool],
    thresholds: &[f64],
) -> Result<Vec<RocPoint>, CorrelatorError> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 {
        return Err(CorrelatorError::EmptyClass("preamble"));
    }
    if n_neg == 0 {
        return Err(CorrelatorError::EmptyClass("non-preamble"));
    }
    Ok(exec.map_slice(thresholds, |&threshold| {
        let (mut hits, mut false_alarms) = (0usize, 0usize);
        for (&s, &p) in scores.iter().zip(positive) {
            if s > threshold {
                if p {
                    hits += 1;
                } else {
                    false_alarms += 1;
                }
            }
        }
        RocPoint {
            threshold,
            pd: hits as f64 / n_pos as f64,
            pfa: false_alarms as f64 / n_neg as f64,
        }
    }))
}

/// Every achievable operating point: one threshold below all scores, then one
/// at each distinct score, in increasing order.
pub fn roc_exact(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>, CorrelatorError> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 {
        return Err(CorrelatorError::EmptyClass("preamble"));
    }
    if n_neg == 0 {
        return Err(CorrelatorError::EmptyClass("non-preamble"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let lowest = scores[order[0]];
    let mut points = vec![RocPoint {
        threshold: lowest - 1.0,
        pd: 1.0,
        pfa: 1.0,
    }];
    let (mut pos_above, mut neg_above) = (n_pos, n_neg);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                pos_above -= 1;
            } else {
                neg_above -= 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            pd: pos_above as f64 / n_pos as f64,
            pfa: neg_above as f64 / n_neg as f64,
        });
    }
    Ok(points)
}

/// Correlation ROC over a binary test set.
pub fn roc_sweep(test: &Dataset, cfg: &CorrelatorConfig) -> Result<Vec<RocPoint>, CorrelatorError> {
    if test.scheme != LabelScheme::Binary {
        return Err(CorrelatorError::NotBinary(test.scheme));
    }
    let s = scores(test, &cfg.template);
    roc_from_scores(Exec::default(), &s, &positives(test), &cfg.thresholds)
}

/// Whether each sample carries the preamble label.
pub fn positives(test: &Dataset) -> Vec<bool> {
    let p = LabelScheme::preamble_class();
    test.classes().into_iter().map(|c| c == p).collect()
}

/// Highest detection probability among points with `pfa <= max_pfa`.
pub fn best_pd_at_pfa(points: &[RocPoint], max_pfa: f64) -> Option<RocPoint> {
    points
        .iter()
        .filter(|p| p.pfa <= max_pfa)
        .copied()
        .max_by(|a, b| a.pd.total_cmp(&b.pd).then(b.pfa.total_cmp(&a.pfa)))
}

/// Lowest false-alarm probability among points with `pd >= min_pd`.
pub fn best_pfa_at_pd(points: &[RocPoint], min_pd: f64) -> Option<RocPoint> {
    points
        .iter()
        .filter(|p| p.pd >= min_pd)
        .copied()
        .min_by(|a, b| a.pfa.total_cmp(&b.pfa).then(b.pd.total_cmp(&a.pd)))
}

pub fn write_roc_csv<W: std::io::Write>(points: &[RocPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "pd", "pfa"])?;
    for p in points {
        w.write_record([
            format!("{:.10e}", p.threshold),
            format!("{:.10}", p.pd),
            format!("{:.10}", p.pfa),
        ])?;
    }
    w.flush()?;
    Ok(())
}
