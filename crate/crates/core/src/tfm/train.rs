//! Second training phase: temporal-feature weights with attention frozen.

use ndarray::{ArrayView1, ArrayViewMut1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TilpError};
use crate::optim::Adam;
use crate::tfm::score::{CandidateFeatures, TfmWeights};

/// A query with frozen rule scores and temporal features per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Example {
    pub truth: usize,
    pub rule_scores: Vec<f64>,
    pub features: Vec<CandidateFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Config {
    pub epochs: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Phase2Config { epochs: 30, learning_rate: 1e-2, decay: 0.95, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    pub weights: TfmWeights,
    pub loss_trace: Vec<f64>,
}

/// Softmax cross-entropy of the combined scores, used as logits.
pub fn phase2_loss(weights: &TfmWeights, ex: &Phase2Example) -> f64 {
    let logits: Vec<f64> = ex
        .rule_scores
        .iter()
        .zip(&ex.features)
        .map(|(&s, f)| weights.phi_combined(s, f))
        .collect();
    log_sum_exp(&logits) - logits[ex.truth]
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Mean loss over `batch` and its gradient.
pub fn phase2_batch(weights: &TfmWeights, batch: &[&Phase2Example]) -> (f64, TfmWeights) {
    let mut grad = weights.zeros_like();
    let mut total = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    for ex in batch {
        let logits: Vec<f64> = ex
            .rule_scores
            .iter()
            .zip(&ex.features)
            .map(|(&s, f)| weights.phi_combined(s, f))
            .collect();
        let lse = log_sum_exp(&logits);
        total += lse - logits[ex.truth];
        for (c, (&s, f)) in ex.rule_scores.iter().zip(&ex.features).enumerate() {
            let p = (logits[c] - lse).exp();
            let d = p - if c == ex.truth { 1.0 } else { 0.0 };
            weights.accumulate_grad(s, f, d * scale, &mut grad);
        }
    }
    (total * scale, grad)
}

/// Trains the weights with Adam; `after_step` sees the weights after every
/// update. Examples with fewer than two candidates carry no signal and are
/// skipped.
pub fn train_phase2(
    init: TfmWeights,
    examples: &[Phase2Example],
    config: &Phase2Config,
    mut after_step: impl FnMut(&TfmWeights),
) -> Result<Phase2Outcome> {
    let usable: Vec<&Phase2Example> = examples.iter().filter(|e| e.features.len() > 1).collect();
    let mut weights = init;
    let mut trace = Vec::with_capacity(config.epochs);
    if usable.is_empty() {
        return Ok(Phase2Outcome { weights, loss_trace: trace });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..config.epochs {
        adam.learning_rate = config.learning_rate * config.decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&Phase2Example> = chunk.iter().map(|&i| usable[i]).collect();
            let (loss, grad) = phase2_batch(&weights, &batch);
            if !loss.is_finite() {
                return Err(TilpError::Divergence { epoch, detail: format!("phase 2 batch loss {loss}") });
            }
            total += loss * batch.len() as f64;
            let grads: Vec<_> = grad.slots().into_iter().map(|s| ArrayView1::from(s).into_dyn()).collect();
            let params: Vec<_> = weights.slots_mut().into_iter().map(|s| ArrayViewMut1::from(s).into_dyn()).collect();
            adam.step(params, grads);
            if !weights.is_finite() {
                return Err(TilpError::Divergence { epoch, detail: "non-finite temporal weights".into() });
            }
            after_step(&weights);
        }
        let mean = total / usable.len() as f64;
        log::debug!("phase 2 epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok(Phase2Outcome { weights, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationId;

    fn feats(rec: f64) -> CandidateFeatures {
        CandidateFeatures { head: RelationId(0), recurrence: [rec, 0.5], ..Default::default() }
    }

    #[test]
    fn zero_epochs_keep_initial_weights() {
        let init = TfmWeights::new(2);
        let ex = Phase2Example { truth: 0, rule_scores: vec![0.1, 0.2], features: vec![feats(0.9), feats(0.1)] };
        let cfg = Phase2Config { epochs: 0, ..Default::default() };
        let out = train_phase2(init.clone(), &[ex], &cfg, |_| {}).unwrap();
        assert_eq!(out.weights, init);
    }

    #[test]
    fn training_lowers_loss_and_keeps_simplexes() {
        let examples: Vec<Phase2Example> = (0..20)
            .map(|i| Phase2Example {
                truth: i % 2,
                rule_scores: vec![0.5, 0.5],
                features: if i % 2 == 0 { vec![feats(0.9), feats(0.1)] } else { vec![feats(0.1), feats(0.9)] },
            })
            .collect();
        let init = TfmWeights::new(2);
        let before: f64 = examples.iter().map(|e| phase2_loss(&init, e)).sum();
        let cfg = Phase2Config { epochs: 20, batch_size: 4, ..Default::default() };
        let mut worst = 0f64;
        let out = train_phase2(init, &examples, &cfg, |w| {
            for k in 0..3 {
                worst = worst.max((w.mix(k).iter().sum::<f64>() - 1.0).abs());
            }
        })
        .unwrap();
        let after: f64 = examples.iter().map(|e| phase2_loss(&out.weights, e)).sum();
        assert!(after < before, "{after} !< {before}");
        assert!(worst < 1e-9);
        assert!(out.weights.gamma_tfm() >= 0.0 && out.weights.gamma_rules() >= 0.0);
    }
}
