//! A self-contained linear detector: L2-regularized hinge loss trained by
//! epoch-shuffled subgradient descent, with the evaluation metrics used
//! throughout.
//!
//! The model is deliberately minimal — a weight vector plus bias with an
//! inspectable linear discriminant — because everything downstream
//! (attacks rank features by weight, transfer uses raw decisions) needs
//! exactly that and nothing more. The bias is folded into the weight
//! vector as an always-present feature during training, so the standard
//! `1/(lambda * t)` step schedule applies uniformly; updates touch only
//! the features present in the current sample via the usual scale-factor
//! trick.
//!
//! The decision threshold is `>= 0` mapping to malicious: a tie counts as
//! a detection, the conservative choice for a security detector.

use serde::{Deserialize, Serialize};

use crate::dataset::SparseBinaryDataset;
use crate::error::{Error, Result};
use crate::transform::RobustMap;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anything that scores a present-feature set; `>= 0` means malicious.
pub trait Discriminant {
    fn decision(&self, x: &[u32]) -> f64;
    fn dim(&self) -> usize;

    fn predict(&self, x: &[u32]) -> u8 {
        u8::from(self.decision(x) >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hyperparams {
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 10,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub n_samples: usize,
}

/// A trained linear model over a binary feature space.
#[derive(Debug, Clone)]
pub struct LinearModel {
    weights: Vec<f64>,
    bias: f64,
    meta: Option<TrainMeta>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    bias: f64,
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn from_weights(weights: Vec<f64>, bias: f64) -> LinearModel {
        LinearModel {
            weights,
            bias,
            meta: None,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, f: usize) -> f64 {
        self.weights[f]
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn meta(&self) -> Option<&TrainMeta> {
        self.meta.as_ref()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            dim: self.weights.len(),
            bias: self.bias,
            weights: self.weights.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<LinearModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.weights.len() != file.dim {
            return Err(Error::DimensionMismatch(format!(
                "model declares dim {} but carries {} weights",
                file.dim,
                file.weights.len()
            )));
        }
        Ok(LinearModel::from_weights(file.weights, file.bias))
    }
}

impl Discriminant for LinearModel {
    /// `sum of weights over present features + bias`, accumulated in
    /// index order. Panics on an out-of-range index; validate artifact
    /// dimensions at the boundary.
    fn decision(&self, x: &[u32]) -> f64 {
        let mut s = 0.0;
        for &f in x {
            s += self.weights[f as usize];
        }
        s + self.bias
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// The robust detector: transform then linear model over the robust space.
#[derive(Debug, Clone)]
pub struct RobustDetector {
    map: RobustMap,
    model: LinearModel,
}

impl RobustDetector {
    pub fn new(map: RobustMap, model: LinearModel) -> Result<RobustDetector> {
        if map.out_dim != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "map emits {} features but model expects {}",
                map.out_dim,
                model.dim()
            )));
        }
        Ok(RobustDetector { map, model })
    }

    pub fn map(&self) -> &RobustMap {
        &self.map
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }
}

impl Discriminant for RobustDetector {
    fn decision(&self, x: &[u32]) -> f64 {
        self.model.decision(&self.map.apply(x))
    }

    /// Dimension of the *input* space the detector accepts.
    fn dim(&self) -> usize {
        self.map.in_dim
    }
}

fn label_sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Trains a linear model by Pegasos-style subgradient descent on the
/// L2-regularized hinge objective. Deterministic under the seed; updates
/// are sparse over present features.
pub fn train(ds: &SparseBinaryDataset, hp: &Hyperparams) -> Result<LinearModel> {
    let n = ds.n_samples();
    if n == 0 {
        return Err(Error::NoEligible("empty training set".into()));
    }
    let has_pos = ds.labels().contains(&1);
    let has_neg = ds.labels().contains(&0);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }
    if hp.lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {}",
            hp.lambda
        )));
    }

    let d = ds.n_features();
    let bias_slot = d; // augmented always-present feature
    let mut v = vec![0.0f64; d + 1];
    let mut scale = 1.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut t = 0u64;

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (hp.lambda * t as f64);
            let row = ds.row(i as usize);
            let y = label_sign(ds.label(i as usize));

            let mut dot = v[bias_slot];
            for &f in row {
                dot += v[f as usize];
            }
            let margin = y * scale * dot;

            let decay = 1.0 - eta * hp.lambda;
            if decay <= 0.0 {
                // only at t = 1, where the schedule wipes the weights
                v.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
            } else {
                scale *= decay;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for &f in row {
                    v[f as usize] += step;
                }
                v[bias_slot] += step;
            }
        }
    }

    let weights: Vec<f64> = v[..d].iter().map(|&w| w * scale).collect();
    let bias = v[bias_slot] * scale;
    if weights.iter().all(|&w| w == 0.0) {
        log::warn!("degenerate model: all weights are zero (empty rows in both classes?)");
    }
    Ok(LinearModel {
        weights,
        bias,
        meta: Some(TrainMeta {
            epochs: hp.epochs,
            lambda: hp.lambda,
            seed: hp.seed,
            n_samples: n,
        }),
    })
}

/// Per-sample regularized hinge objective; the reference for the
/// finite-difference gradient check. The bias is regularized, matching
/// the augmented-feature training above.
pub fn hinge_objective_sample(
    weights: &[f64],
    bias: f64,
    x: &[u32],
    label: u8,
    lambda: f64,
) -> f64 {
    let norm2: f64 = weights.iter().map(|w| w * w).sum::<f64>() + bias * bias;
    let mut dot = bias;
    for &f in x {
        dot += weights[f as usize];
    }
    let margin = label_sign(label) * dot;
    0.5 * lambda * norm2 + (1.0 - margin).max(0.0)
}

/// Subgradient of [`hinge_objective_sample`] in `(weights, bias)`.
pub fn hinge_subgradient_sample(
    weights: &[f64],
    bias: f64,
    x: &[u32],
    label: u8,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let y = label_sign(label);
    let mut dot = bias;
    for &f in x {
        dot += weights[f as usize];
    }
    let violated = y * dot < 1.0;
    let mut grad: Vec<f64> = weights.iter().map(|&w| lambda * w).collect();
    let mut grad_bias = lambda * bias;
    if violated {
        for &f in x {
            grad[f as usize] -= y;
        }
        grad_bias -= y;
    }
    (grad, grad_bias)
}

/// Confusion counts and the derived rates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// Wall-clock training time when the caller measured one; never set
    /// by `evaluate` itself.
    pub train_time_seconds: Option<f64>,
}

/// Scores every sample and tallies the confusion table.
pub fn evaluate(model: &dyn Discriminant, ds: &SparseBinaryDataset) -> EvalReport {
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (row, &label) in ds.rows().iter().zip(ds.labels()) {
        let pred = model.predict(row);
        match (label, pred) {
            (1, 1) => tp += 1,
            (1, 0) => fn_ += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            _ => unreachable!("labels are validated to 0/1"),
        }
    }
    let ratio = |num: u64, den: u64| {
        if den > 0 {
            Some(num as f64 / den as f64)
        } else {
            None
        }
    };
    EvalReport {
        tp,
        fp,
        tn,
        fn_,
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
        train_time_seconds: None,
    }
}
