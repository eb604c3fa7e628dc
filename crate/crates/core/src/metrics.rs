//! Training objectives and evaluation metrics on plain arrays.
//!
//! These are the reference formulas; the training crate computes the same
//! quantities on its own tensors and is tested against these.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_EVENTS};

/// Floor applied inside every logarithm of a loss.
pub const LOG_FLOOR: f64 = 1e-12;
/// Residual energy floor and upper cap for SDR.
pub const SDR_EPS: f64 = 1e-12;
pub const SDR_CAP_DB: f64 = 100.0;
/// Decision threshold on the speech posterior.
pub const SAD_THRESHOLD: f64 = 0.5;

/// One-hot event targets and binary speech flags for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchLabels {
    pub event_onehot: Vec<[f64; NUM_EVENTS]>,
    pub speech_flag: Vec<bool>,
}

impl BatchLabels {
    pub fn new(events: &[usize], speech: &[bool]) -> Result<Self> {
        if events.len() != speech.len() {
            return Err(Error::shape(format!(
                "{} event labels vs {} speech flags",
                events.len(),
                speech.len()
            )));
        }
        let event_onehot = events
            .iter()
            .map(|&e| {
                if e >= NUM_EVENTS {
                    return Err(Error::invalid(format!("event index {e} out of range")));
                }
                let mut row = [0.0; NUM_EVENTS];
                row[e] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            event_onehot,
            speech_flag: speech.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.speech_flag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speech_flag.is_empty()
    }
}

fn flog(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Mean over the batch of the mean absolute elementwise difference.
pub fn mask_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(estimated: &[A], target: &[B]) -> Result<f64> {
    if estimated.len() != target.len() || estimated.is_empty() {
        return Err(Error::shape(format!(
            "batch sizes {} and {}",
            estimated.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    for (e, t) in estimated.iter().zip(target) {
        let (e, t) = (e.as_ref(), t.as_ref());
        if e.len() != t.len() || e.is_empty() {
            return Err(Error::shape(format!("item sizes {} and {}", e.len(), t.len())));
        }
        total += e.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / e.len() as f64;
    }
    Ok(total / estimated.len() as f64)
}

/// Mean categorical cross-entropy of event posteriors.
pub fn cls_loss(predicted: &[[f64; NUM_EVENTS]], labels: &BatchLabels) -> Result<f64> {
    if predicted.len() != labels.len() || predicted.is_empty() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let total: f64 = predicted
        .iter()
        .zip(&labels.event_onehot)
        .map(|(p, y)| -(0..NUM_EVENTS).map(|k| y[k] * flog(p[k])).sum::<f64>())
        .sum();
    Ok(total / predicted.len() as f64)
}

/// Mean binary cross-entropy of speech posteriors; the adversarial objective.
pub fn adv_loss(predicted: &[f64], speech: &[bool]) -> Result<f64> {
    if predicted.len() != speech.len() || predicted.is_empty() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            speech.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &s) in predicted.iter().zip(speech) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("speech posterior {p} outside (0, 1)")));
        }
        total -= if s { flog(p) } else { flog(1.0 - p) };
    }
    Ok(total / predicted.len() as f64)
}

/// Loss of the periodically refreshed discriminator; same formula as
/// [`adv_loss`], applied without gradient reversal.
pub fn sp_loss(predicted: &[f64], speech: &[bool]) -> Result<f64> {
    adv_loss(predicted, speech)
}

/// Signal-to-distortion ratio in dB, capped at [`SDR_CAP_DB`].
pub fn sdr(target: &[f64], estimate: &[f64]) -> Result<f64> {
    if target.len() != estimate.len() || target.is_empty() {
        return Err(Error::shape(format!(
            "target has {} entries, estimate {}",
            target.len(),
            estimate.len()
        )));
    }
    let signal: f64 = target.iter().map(|t| t * t).sum();
    if signal == 0.0 {
        return Err(Error::UndefinedReference("target is all zeros".into()));
    }
    let residual: f64 = target
        .iter()
        .zip(estimate)
        .map(|(t, e)| (t - e).powi(2))
        .sum();
    Ok((10.0 * (signal / residual.max(SDR_EPS)).log10()).min(SDR_CAP_DB))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label (sound event detection).
pub fn sed_accuracy(predicted: &[[f64; NUM_EVENTS]], events: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != events.len() {
        return Err(Error::invalid(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            events.len()
        )));
    }
    let hits = predicted
        .iter()
        .zip(events)
        .filter(|(p, &e)| argmax(&p[..]) == e)
        .count();
    Ok(hits as f64 / events.len() as f64)
}

/// Fraction of thresholded speech posteriors matching the flag (speech
/// activity detection). Scores at or above 0.5 count as speech.
pub fn sad_accuracy(scores: &[f64], speech: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != speech.len() {
        return Err(Error::invalid(format!(
            "accuracy over {} scores and {} labels",
            scores.len(),
            speech.len()
        )));
    }
    let hits = scores
        .iter()
        .zip(speech)
        .filter(|(&s, &y)| (s >= SAD_THRESHOLD) == y)
        .count();
    Ok(hits as f64 / speech.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive. The first point
    /// has an infinite threshold, written as the string `"inf"` in JSON.
    #[serde(with = "threshold_repr")]
    pub threshold: f64,
}

mod threshold_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else if *v > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Text("-inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// `fpr,tpr,threshold` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        out
    }
}

/// ROC curve over every distinct score and its trapezoidal area.
///
/// Tied scores move the curve diagonally, so the area equals the normalized
/// Mann-Whitney U statistic with ties counted as one half. The area is
/// accumulated in integer units and divided once, which makes it bit-equal to
/// the pairwise count.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area = 0u64;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }
    let auc = twice_area as f64 / (2 * pos * neg) as f64;
    Ok((RocCurve { points }, auc))
}

/// Mean and sample standard deviation (n - 1); the deviation is absent for a
/// single value.
pub fn mean_std(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, std))
}
