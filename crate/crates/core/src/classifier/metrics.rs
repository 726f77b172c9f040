use crate::error::{Error, Result};

/// ROC points `(false-positive rate, true-positive rate)` from `(0, 0)` to
/// `(1, 1)` and the trapezoidal area under them.
///
/// The threshold sweeps every distinct score from high to low; tied scores
/// enter together, so ties contribute a diagonal segment.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<(Vec<(f64, f64)>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::param("labels", "ROC needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok((points, auc))
}

/// Fraction of predictions `score ≥ threshold` that agree with the label.
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s >= threshold) == **l)
        .count();
    Ok(correct as f64 / scores.len() as f64)
}
