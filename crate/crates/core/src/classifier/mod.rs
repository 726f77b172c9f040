//! Acceptance condition b): a small feed-forward network that tells
//! legitimate transcripts from forgeries.
//!
//! Transcripts are reduced to block means of 10 consecutive match bits and
//! scored by a ReLU network with a logistic output, trained with Adam on
//! binary cross-entropy.

mod metrics;
mod model;
mod weights;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use metrics::{accuracy, roc_curve};
pub use model::{AdamConfig, Gradients, MlpModel, OUTPUT_INIT_STD};
pub use weights::{load_weights, save_weights, weights_from_str, weights_to_string};

use crate::error::{Error, Result};
use crate::protocol::{match_rate, AcceptanceVerdict};
use model::logit_cross_entropy;

/// Bits averaged into one feature.
pub const BLOCK_SIZE: usize = 10;
/// Hidden-layer widths of the reference architecture.
pub const DEFAULT_HIDDEN: [usize; 2] = [15, 15];
/// Score at or above which a transcript is accepted.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Block means of `bits` over consecutive blocks of `block`.
pub fn preprocess_blocks(bits: &[bool], block: usize) -> Result<Vec<f64>> {
    if block == 0 || bits.is_empty() || !bits.len().is_multiple_of(block) {
        return Err(Error::param(
            "transcript",
            format!("length {} is not a positive multiple of {block}", bits.len()),
        ));
    }
    Ok(bits
        .chunks(block)
        .map(|c| c.iter().filter(|b| **b).count() as f64 / block as f64)
        .collect())
}

pub fn preprocess(bits: &[bool]) -> Result<Vec<f64>> {
    preprocess_blocks(bits, BLOCK_SIZE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// `true` for a legitimate user.
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Hash of the configuration that generated the samples.
    pub provenance: u64,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: u64) -> Result<Self> {
        if let Some(first) = samples.first() {
            let n = first.features.len();
            if let Some(s) = samples.iter().find(|s| s.features.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: s.features.len(),
                });
            }
        }
        Ok(Self { samples, provenance })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    /// Shuffles with `rng` and holds out `fraction` of the samples.
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::param("fraction", format!("{fraction} is outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let held = (self.len() as f64 * fraction).round() as usize;
        let pick = |ix: &[usize]| Dataset {
            samples: ix.iter().map(|i| self.samples[*i].clone()).collect(),
            provenance: self.provenance,
        };
        Ok((pick(&idx[held..]), pick(&idx[..held])))
    }

    /// Same samples with labels permuted, a null for accuracy checks.
    pub fn shuffled_labels<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let mut labels: Vec<bool> = self.samples.iter().map(|s| s.label).collect();
        labels.shuffle(rng);
        Dataset {
            samples: self
                .samples
                .iter()
                .zip(labels)
                .map(|(s, label)| Sample {
                    features: s.features.clone(),
                    label,
                })
                .collect(),
            provenance: self.provenance,
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub cross_entropy: f64,
    pub roc_points: Vec<(f64, f64)>,
    /// `NaN` when the samples hold a single class.
    pub auc: f64,
}

/// Network scores for every sample.
pub fn scores(model: &MlpModel, data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let x = model.batch_matrix(data.samples.iter().map(|s| s.features.as_slice()))?;
    Ok(model.forward_batch(x).activations.last().expect("output").iter().copied().collect())
}

/// Mean binary cross-entropy of the model on `data`.
pub fn cross_entropy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let x = model.batch_matrix(data.samples.iter().map(|s| s.features.as_slice()))?;
    let pass = model.forward_batch(x);
    Ok(pass
        .logits()
        .iter()
        .zip(&data.samples)
        .map(|(z, s)| logit_cross_entropy(*z, s.label))
        .sum::<f64>()
        / data.len() as f64)
}

/// Accuracy at the 0.5 threshold and cross-entropy; the ROC is filled in when
/// both classes are present.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<EvalReport> {
    let s = scores(model, data)?;
    let labels = data.labels();
    let (roc_points, auc) = if data.positives() > 0 && data.positives() < data.len() {
        roc_curve(&s, &labels)?
    } else {
        (Vec::new(), f64::NAN)
    };
    Ok(EvalReport {
        accuracy: accuracy(&s, &labels, DECISION_THRESHOLD)?,
        cross_entropy: cross_entropy(model, data)?,
        roc_points,
        auc,
    })
}

/// ROC sweep of the model over `data`; fails on a single-class set.
pub fn roc_and_auc(model: &MlpModel, data: &Dataset) -> Result<EvalReport> {
    let s = scores(model, data)?;
    let labels = data.labels();
    let (roc_points, auc) = roc_curve(&s, &labels)?;
    Ok(EvalReport {
        accuracy: accuracy(&s, &labels, DECISION_THRESHOLD)?,
        cross_entropy: cross_entropy(model, data)?,
        roc_points,
        auc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Full passes over the training split.
    pub epochs: usize,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            adam: AdamConfig::default(),
            validation_fraction: 0.2,
        }
    }
}

/// Per-epoch reports on the training and validation splits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub train: Vec<EvalReport>,
    pub validation: Vec<EvalReport>,
}

/// Trains on `train` and reports on both splits after every epoch.
pub fn train_split<R: Rng + ?Sized>(
    model: &MlpModel,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(MlpModel, LearningCurve)> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if config.adam.batch_size == 0 {
        return Err(Error::param("batch_size", "must be positive"));
    }
    let mut model = model.clone();
    let mut curve = LearningCurve::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.adam.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|i| train.samples[*i].features.as_slice()).collect();
            let labels: Vec<bool> = batch.iter().map(|i| train.samples[*i].label).collect();
            let (_, grads) = model.loss_and_gradients(&inputs, &labels)?;
            model.adam_step(&grads, &config.adam);
        }
        curve.train.push(evaluate(&model, train)?);
        if !validation.is_empty() {
            curve.validation.push(evaluate(&model, validation)?);
        }
    }
    if !model.is_finite() {
        return Err(Error::InvalidState("training diverged".into()));
    }
    Ok((model, curve))
}

/// Seeded split into train/validation, then [`train_split`].
pub fn train<R: Rng + ?Sized>(
    model: &MlpModel,
    data: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(MlpModel, LearningCurve)> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let (tr, va) = data.split(config.validation_fraction, rng)?;
    train_split(model, &tr, &va, config, rng)
}

/// Largest relative difference between backpropagated gradients and central
/// differences with step `1e-5`, over every parameter.
///
/// Parameters whose perturbation flips a ReLU unit on or off are skipped, as
/// the loss is not differentiable there. The denominator is floored at `1e-6`
/// so parameters with vanishing gradient compare in absolute terms.
pub fn gradient_check(model: &MlpModel, sample: &Sample) -> Result<f64> {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let x = sample.features.as_slice();
    let (_, grads) = model.loss_and_gradients(&[x], &[sample.label])?;
    let mask = model.relu_mask(x);
    let loss = |m: &MlpModel| -> Result<f64> { Ok(logit_cross_entropy(m.logit(x)?, sample.label)) };

    let analytic = grads.flatten();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let orig = *probe.parameter_mut(k);
        *probe.parameter_mut(k) = orig + STEP;
        let (up, mask_up) = (loss(&probe)?, probe.relu_mask(x));
        *probe.parameter_mut(k) = orig - STEP;
        let (down, mask_down) = (loss(&probe)?, probe.relu_mask(x));
        *probe.parameter_mut(k) = orig;
        if mask_up != mask || mask_down != mask {
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR));
    }
    Ok(worst)
}

/// Hidden-layer widths tried by [`hyperparameter_select`]; the reference
/// `[15, 15]` comes first.
pub fn default_candidates() -> Vec<Vec<usize>> {
    vec![vec![15, 15], vec![8], vec![32], vec![15, 15, 15], vec![32, 16]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub hidden: Vec<usize>,
    pub validation: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    pub model: MlpModel,
    pub curve: LearningCurve,
    pub candidates: Vec<CandidateResult>,
}

/// Trains one model per hidden-layer configuration and keeps the one with
/// the highest validation accuracy, then lowest validation cross-entropy,
/// then earliest position. Each candidate gets its own generator seeded from
/// `seed` and its index.
pub fn hyperparameter_select(
    candidates: &[Vec<usize>],
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<Selection> {
    if candidates.len() < 2 {
        return Err(Error::param("candidates", "need at least two"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let inputs = train.samples.first().ok_or(Error::Empty("training set"))?.features.len();
    let mut best: Option<(usize, MlpModel, LearningCurve, EvalReport)> = None;
    let mut results = Vec::with_capacity(candidates.len());
    for (k, hidden) in candidates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut sizes = vec![inputs];
        sizes.extend(hidden);
        sizes.push(1);
        let init = MlpModel::new(&sizes, &mut rng)?;
        let (model, curve) = train_split(&init, train, validation, config, &mut rng)?;
        let report = evaluate(&model, validation)?;
        let better = best.as_ref().is_none_or(|(_, _, _, current)| {
            report.accuracy > current.accuracy
                || (report.accuracy == current.accuracy && report.cross_entropy < current.cross_entropy)
        });
        results.push(CandidateResult {
            hidden: hidden.clone(),
            validation: report.clone(),
        });
        if better {
            best = Some((k, model, curve, report));
        }
    }
    let (best, model, curve, _) = best.expect("at least two candidates");
    Ok(Selection {
        best,
        model,
        curve,
        candidates: results,
    })
}

/// Condition b) on a match string. `mu` in the verdict is the score
/// threshold and `r01` is still the plain match rate.
pub fn accept_condition_b(model: &MlpModel, matches: &[bool]) -> Result<AcceptanceVerdict> {
    let score = model.forward(&preprocess(matches)?)?;
    Ok(AcceptanceVerdict {
        r01: match_rate(matches)?,
        mu: DECISION_THRESHOLD,
        accepted: score >= DECISION_THRESHOLD,
        bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample {
                features: vec![if i % 2 == 0 { 1.0 } else { 0.0 }; 10],
                label: i % 2 == 0,
            })
            .collect();
        Dataset::new(samples, 0).unwrap()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess(&[true; 100]).unwrap(), vec![1.0; 10]);
        let alt: Vec<bool> = (0..100).map(|i| i % 2 == 1).collect();
        assert_eq!(preprocess(&alt).unwrap(), vec![0.5; 10]);
        let half: Vec<bool> = (0..100).map(|i| i < 50).collect();
        assert_eq!(
            preprocess(&half).unwrap(),
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(preprocess(&[true; 95]).is_err());
        assert!(preprocess(&[]).is_err());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = MlpModel::new(&[10, 15, 15, 1], &mut rng).unwrap();
        let (_, curve) = train(&init, &toy(200), &TrainConfig::default(), &mut rng).unwrap();
        assert_eq!(curve.train.len(), 100);
        assert_eq!(curve.validation.last().unwrap().accuracy, 1.0);
        assert!(curve.train.last().unwrap().cross_entropy < curve.train[0].cross_entropy);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let init = MlpModel::new(&[10, 15, 15, 1], &mut rng).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            };
            train(&init, &toy(100), &cfg, &mut rng).unwrap().0
        };
        assert_eq!(weights_to_string(&run()), weights_to_string(&run()));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let m = MlpModel::new(&[10, 15, 15, 1], &mut rng).unwrap();
            let s = Sample {
                features: (0..10).map(|_| rng.random()).collect(),
                label: rng.random(),
            };
            assert!(gradient_check(&m, &s).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn saturated_point_has_vanishing_gradient() {
        let mut m = MlpModel::zeros(&[10, 15, 15, 1]).unwrap();
        m.biases_mut()[2][0] = 40.0;
        let s = Sample {
            features: vec![1.0; 10],
            label: true,
        };
        let (loss, g) = m.loss_and_gradients(&[&s.features], &[true]).unwrap();
        assert!(loss < 1e-16);
        assert!(g.biases[2][0].abs() < 1e-16);
        assert!(gradient_check(&m, &s).unwrap() <= 1e-5);
    }

    #[test]
    fn relu_kink_is_skipped() {
        // all hidden pre-activations sit exactly at 0, so every perturbation
        // of the first layers changes the mask
        let mut m = MlpModel::zeros(&[2, 3, 1]).unwrap();
        m.weights_mut()[1].fill(1.0);
        let s = Sample {
            features: vec![0.0, 0.0],
            label: false,
        };
        assert!(gradient_check(&m, &s).unwrap() <= 1e-5);
    }

    #[test]
    fn split_holds_out_a_fifth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (tr, va) = toy(100).split(0.2, &mut rng).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
    }

    #[test]
    fn selection_tie_keeps_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tr, va) = toy(80).split(0.25, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let cands = vec![vec![4], vec![4]];
        let sel = hyperparameter_select(&cands, &tr, &va, &cfg, 9).unwrap();
        assert_eq!(sel.candidates.len(), 2);
        if sel.candidates[0].validation == sel.candidates[1].validation {
            assert_eq!(sel.best, 0);
        }
        assert!(hyperparameter_select(&cands[..1], &tr, &va, &cfg, 9).is_err());
    }

    #[test]
    fn dominant_candidate_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (tr, va) = toy(200).split(0.2, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        // a one-unit bottleneck learns far slower than a wide layer
        let sel = hyperparameter_select(&[vec![1], vec![32]], &tr, &va, &cfg, 1).unwrap();
        let wide = &sel.candidates[1].validation;
        assert_eq!(wide.accuracy, 1.0);
        assert!(sel.candidates[sel.best].validation.cross_entropy <= wide.cross_entropy || sel.best == 1);
    }

    #[test]
    fn condition_b_verdict() {
        let mut m = MlpModel::zeros(&[10, 15, 15, 1]).unwrap();
        m.biases_mut()[2][0] = 3.0;
        let v = accept_condition_b(&m, &[true; 100]).unwrap();
        assert!(v.accepted);
        assert_eq!(v.r01, 1.0);
        m.biases_mut()[2][0] = -3.0;
        assert!(!accept_condition_b(&m, &[true; 100]).unwrap().accepted);
    }
}
