//! Phase-one training of the attention model.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBundle, AttentionParams, BundleGrad};
use crate::error::{Result, TilpError};
use crate::graph::{EntityId, RelationId};
use crate::optim::Adam;
use crate::rule::RuleSet;

/// Additive smoothing inside the candidate cross-entropy.
pub const LOSS_EPS: f64 = 1e-8;

/// Arriving rates of one rule over the candidates of an example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleHit {
    /// Index into the rule set.
    pub rule: usize,
    /// `(candidate index, arriving rate)`.
    pub arrivals: Vec<(usize, f64)>,
}

/// A positive example with its precomputed rule applications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub head: RelationId,
    pub candidates: Vec<EntityId>,
    /// Position of the correct answer in `candidates`.
    pub truth: usize,
    pub hits: Vec<RuleHit>,
}

impl TrainingExample {
    /// Logical-rule score of every candidate under `bundle`.
    pub fn tlr_scores(&self, bundle: &AttentionBundle, rules: &RuleSet) -> Vec<f64> {
        let mut scores = vec![0.0; self.candidates.len()];
        for hit in &self.hits {
            let s = bundle.rule_score(&rules.get(hit.rule).template);
            for &(c, alpha) in &hit.arrivals {
                scores[c] += alpha * s;
            }
        }
        scores
    }
}

/// `-ln((s_truth + ε) / Σ_c (s_c + ε))`.
pub fn candidate_cross_entropy(scores: &[f64], truth: usize) -> f64 {
    let total: f64 = scores.iter().map(|s| s + LOSS_EPS).sum();
    -((scores[truth] + LOSS_EPS) / total).ln()
}

pub fn phase1_loss(params: &AttentionParams, rules: &RuleSet, example: &TrainingExample) -> f64 {
    let bundle = params.forward(example.head);
    candidate_cross_entropy(&example.tlr_scores(&bundle, rules), example.truth)
}

/// Mean loss over `batch` and its gradient with respect to all parameters.
pub fn batch_loss_and_grad(
    params: &AttentionParams,
    rules: &RuleSet,
    batch: &[&TrainingExample],
) -> (f64, AttentionParams) {
    let mut grad = params.zeros_like();
    if batch.is_empty() {
        return (0.0, grad);
    }
    let n = batch.len() as f64;
    let mut by_head: BTreeMap<RelationId, Vec<&TrainingExample>> = BTreeMap::new();
    for ex in batch {
        by_head.entry(ex.head).or_default().push(ex);
    }
    let mut loss = 0.0;
    for (head, examples) in by_head {
        let bundle = params.forward(head);
        let mut dbundle = BundleGrad::zeros(&bundle);
        for ex in examples {
            let scores = ex.tlr_scores(&bundle, rules);
            loss += candidate_cross_entropy(&scores, ex.truth);
            let total: f64 = scores.iter().map(|s| s + LOSS_EPS).sum();
            // d loss / d score_c
            let dscore: Vec<f64> = (0..scores.len())
                .map(|c| {
                    let mut g = 1.0 / total;
                    if c == ex.truth {
                        g -= 1.0 / (scores[c] + LOSS_EPS);
                    }
                    g / n
                })
                .collect();
            for hit in &ex.hits {
                let upstream: f64 = hit.arrivals.iter().map(|&(c, a)| a * dscore[c]).sum();
                dbundle.add_rule(&bundle, &rules.get(hit.rule).template, upstream);
            }
        }
        params.backward(&bundle, &dbundle, &mut grad);
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase1Config {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config {
            epochs: 30,
            learning_rate: 1e-2,
            decay: 0.95,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub params: AttentionParams,
    /// Mean training loss of every epoch.
    pub loss_trace: Vec<f64>,
    /// Examples dropped because they had no candidates.
    pub skipped: usize,
}

/// Minimises the mean candidate cross-entropy with Adam. `after_step` sees
/// the parameters after every update.
pub fn train_phase1(
    init: AttentionParams,
    rules: &RuleSet,
    examples: &[TrainingExample],
    config: &Phase1Config,
    mut after_step: impl FnMut(&AttentionParams),
) -> Result<Phase1Outcome> {
    let usable: Vec<&TrainingExample> = examples.iter().filter(|e| !e.candidates.is_empty()).collect();
    let skipped = examples.len() - usable.len();
    let mut params = init;
    let mut trace = Vec::with_capacity(config.epochs);
    if usable.is_empty() {
        return Ok(Phase1Outcome { params, loss_trace: trace, skipped });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..config.epochs {
        adam.learning_rate = config.learning_rate * config.decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| usable[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&params, rules, &batch);
            if !loss.is_finite() {
                return Err(TilpError::Divergence { epoch, detail: format!("batch loss {loss}") });
            }
            total += loss * batch.len() as f64;
            adam.step(params.tensors_mut(), grad.tensors());
            if !params.is_finite() {
                return Err(TilpError::Divergence { epoch, detail: "non-finite parameters".into() });
            }
            after_step(&params);
        }
        let mean = total / usable.len() as f64;
        log::debug!("phase 1 epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok(Phase1Outcome { params, loss_trace: trace, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error floor: differences between gradients smaller than this
/// in magnitude are measured absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of the mean batch loss against central
/// finite differences for every parameter entry.
pub fn gradient_check(
    params: &AttentionParams,
    rules: &RuleSet,
    batch: &[&TrainingExample],
    step: f64,
) -> GradientCheck {
    let (_, grad) = batch_loss_and_grad(params, rules, batch);
    let loss = |p: &AttentionParams| -> f64 {
        batch.iter().map(|ex| phase1_loss(p, rules, ex)).sum::<f64>() / batch.len() as f64
    };
    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let mut probe = params.clone();
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (t, name) in names.iter().enumerate() {
        for i in 0..analytic[t].len() {
            let original = probe.tensors()[t].iter().nth(i).copied().unwrap();
            set_entry(&mut probe, t, i, original + step);
            let up = loss(&probe);
            set_entry(&mut probe, t, i, original - step);
            let down = loss(&probe);
            set_entry(&mut probe, t, i, original);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[t][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            if err > worst.max_relative_error {
                worst = GradientCheck {
                    max_relative_error: err,
                    worst_tensor: name.clone(),
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    worst
}

fn set_entry(p: &mut AttentionParams, tensor: usize, index: usize, value: f64) {
    let mut views = p.tensors_mut();
    if let Some(v) = views[tensor].iter_mut().nth(index) {
        *v = value;
    }
}
