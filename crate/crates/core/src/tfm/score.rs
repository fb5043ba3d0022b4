//! Temporal-feature scoring and its learnable weights.

use serde::{Deserialize, Serialize};

use crate::graph::RelationId;
use crate::query::Query;
use crate::tfm::evidence::EvidenceSets;
use crate::tfm::params::DistributionParams;

/// Evidence parts: facts back to the subject, other candidate facts, walks.
pub const PARTS: usize = 3;

/// Number of features mixed within each part. Recurrence is absent from
/// the walk part.
pub const PART_FEATURES: [usize; PARTS] = [3, 3, 2];

/// Per-candidate likelihood values, computed once from fitted
/// distributions and reused across training steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub head: RelationId,
    pub recurrence: [f64; 2],
    pub order: [Vec<(RelationId, f64)>; PARTS],
    pub pair: [Vec<(RelationId, f64)>; PARTS],
}

pub fn candidate_features(params: &DistributionParams, query: &Query, ev: &EvidenceSets) -> CandidateFeatures {
    let r = query.relation;
    let t = query.span.start;
    let mut out = CandidateFeatures { head: r, ..Default::default() };
    for part in 0..2 {
        out.recurrence[part] = params.recurrence_h(part, r, ev.relations[part].contains(&r));
    }
    for part in 0..PARTS {
        for (&other, &start) in &ev.closest_start[part] {
            out.order[part].push((other, params.order_h(part, r, other, t, start)));
            out.pair[part].push((other, params.pair_h(part, r, other, t, start)));
        }
    }
    out
}

/// Softmax-weighted affine mix `Σ exp(w_j)(h_j + b_j) / Σ exp(w_j)`;
/// zero for an empty set.
pub fn integrate_scores(h: &[f64], w: &[f64], b: &[f64]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..h.len() {
        let e = (w[j] - m).exp();
        num += e * (h[j] + b[j]);
        den += e;
    }
    num / den
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus_inverse(y: f64) -> f64 {
    y.exp_m1().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Weighted sum of part scores.
pub fn combine_parts(parts: [f64; PARTS], gammas: [f64; PARTS]) -> f64 {
    parts.iter().zip(gammas).map(|(p, g)| p * g).sum()
}

/// Learnable weights of the temporal-feature module. Simplex weights are
/// stored as logits and non-negative weights as softplus pre-activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfmWeights {
    pub relations: usize,
    pub rec_w: [Vec<f64>; 2],
    pub rec_b: [Vec<f64>; 2],
    /// `relations × relations`, row = query relation.
    pub order_w: [Vec<f64>; PARTS],
    pub order_b: [Vec<f64>; PARTS],
    pub pair_w: [Vec<f64>; PARTS],
    pub pair_b: [Vec<f64>; PARTS],
    /// Per-part mixing logits over `[recurrence,] order, pair`.
    pub mix_logits: [Vec<f64>; PARTS],
    pub part_raw: [f64; PARTS],
    /// `[rule score, temporal-feature score]`.
    pub top_raw: [f64; 2],
}

/// Scores of one candidate, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TfmScore {
    /// `features[k][f]` is the raw score of feature `f` in part `k`.
    pub features: [Vec<f64>; PARTS],
    pub parts: [f64; PARTS],
    pub total: f64,
}

impl TfmWeights {
    pub fn new(relations: usize) -> Self {
        let sq = relations * relations;
        let one = softplus_inverse(1.0);
        TfmWeights {
            relations,
            rec_w: [vec![1.0; relations], vec![1.0; relations]],
            rec_b: [vec![0.0; relations], vec![0.0; relations]],
            order_w: std::array::from_fn(|_| vec![0.0; sq]),
            order_b: std::array::from_fn(|_| vec![0.0; sq]),
            pair_w: std::array::from_fn(|_| vec![0.0; sq]),
            pair_b: std::array::from_fn(|_| vec![0.0; sq]),
            mix_logits: std::array::from_fn(|k| vec![0.0; PART_FEATURES[k]]),
            part_raw: [one; PARTS],
            top_raw: [one; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slots_mut() {
            s.fill(0.0);
        }
        z
    }

    /// Every parameter block, in a fixed order.
    pub fn slots(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        v.extend(self.rec_w.iter().map(Vec::as_slice));
        v.extend(self.rec_b.iter().map(Vec::as_slice));
        v.extend(self.order_w.iter().map(Vec::as_slice));
        v.extend(self.order_b.iter().map(Vec::as_slice));
        v.extend(self.pair_w.iter().map(Vec::as_slice));
        v.extend(self.pair_b.iter().map(Vec::as_slice));
        v.extend(self.mix_logits.iter().map(Vec::as_slice));
        v.push(&self.part_raw);
        v.push(&self.top_raw);
        v
    }

    pub fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        v.extend(self.rec_w.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.rec_b.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.order_w.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.order_b.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.pair_w.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.pair_b.iter_mut().map(Vec::as_mut_slice));
        v.extend(self.mix_logits.iter_mut().map(Vec::as_mut_slice));
        v.push(&mut self.part_raw);
        v.push(&mut self.top_raw);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Mixing weights of part `k`; they sum to one.
    pub fn mix(&self, part: usize) -> Vec<f64> {
        softmax(&self.mix_logits[part])
    }

    pub fn part_gammas(&self) -> [f64; PARTS] {
        self.part_raw.map(softplus)
    }

    pub fn gamma_rules(&self) -> f64 {
        softplus(self.top_raw[0])
    }

    pub fn gamma_tfm(&self) -> f64 {
        softplus(self.top_raw[1])
    }

    fn cell(&self, head: RelationId, other: RelationId) -> usize {
        head.index() * self.relations + other.index()
    }

    fn gather(&self, w: &[f64], b: &[f64], head: RelationId, hs: &[(RelationId, f64)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut hv = Vec::with_capacity(hs.len());
        let mut wv = Vec::with_capacity(hs.len());
        let mut bv = Vec::with_capacity(hs.len());
        for &(other, h) in hs {
            let c = self.cell(head, other);
            hv.push(h);
            wv.push(w[c]);
            bv.push(b[c]);
        }
        (hv, wv, bv)
    }

    /// Recurrence score `w·h + b` for parts 1 and 2.
    pub fn phi_rec(&self, f: &CandidateFeatures, part: usize) -> f64 {
        let r = f.head.index();
        self.rec_w[part][r] * f.recurrence[part] + self.rec_b[part][r]
    }

    pub fn phi_order(&self, f: &CandidateFeatures, part: usize) -> f64 {
        let (h, w, b) = self.gather(&self.order_w[part], &self.order_b[part], f.head, &f.order[part]);
        integrate_scores(&h, &w, &b)
    }

    pub fn phi_pair(&self, f: &CandidateFeatures, part: usize) -> f64 {
        let (h, w, b) = self.gather(&self.pair_w[part], &self.pair_b[part], f.head, &f.pair[part]);
        integrate_scores(&h, &w, &b)
    }

    fn feature_scores(&self, f: &CandidateFeatures, part: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(3);
        if part < 2 {
            v.push(self.phi_rec(f, part));
        }
        v.push(self.phi_order(f, part));
        v.push(self.phi_pair(f, part));
        v
    }

    pub fn score(&self, f: &CandidateFeatures) -> TfmScore {
        let features: [Vec<f64>; PARTS] = std::array::from_fn(|k| self.feature_scores(f, k));
        let parts = std::array::from_fn(|k| {
            self.mix(k).iter().zip(&features[k]).map(|(g, s)| g * s).sum()
        });
        TfmScore { total: combine_parts(parts, self.part_gammas()), features, parts }
    }

    pub fn phi_tfm(&self, f: &CandidateFeatures) -> f64 {
        self.score(f).total
    }

    /// Combined score `γ_rules·rules + γ_tfm·tfm`.
    pub fn phi_combined(&self, rule_score: f64, f: &CandidateFeatures) -> f64 {
        self.gamma_rules() * rule_score + self.gamma_tfm() * self.phi_tfm(f)
    }

    /// Adds `upstream · ∂(combined score)/∂θ` to `grad`.
    pub fn accumulate_grad(&self, rule_score: f64, f: &CandidateFeatures, upstream: f64, grad: &mut TfmWeights) {
        let s = self.score(f);
        let g_tfm = self.gamma_tfm();
        grad.top_raw[0] += upstream * rule_score * sigmoid(self.top_raw[0]);
        grad.top_raw[1] += upstream * s.total * sigmoid(self.top_raw[1]);
        let gammas = self.part_gammas();
        for k in 0..PARTS {
            let d_part = upstream * g_tfm;
            grad.part_raw[k] += d_part * s.parts[k] * sigmoid(self.part_raw[k]);
            let mix = self.mix(k);
            let d_mix = d_part * gammas[k];
            // softmax backward: dL/dlogit_i = m_i (g_i - Σ m_j g_j), g_i = score_i
            for i in 0..mix.len() {
                grad.mix_logits[k][i] += d_mix * mix[i] * (s.features[k][i] - s.parts[k]);
            }
            let mut slot = 0;
            let r = f.head;
            if k < 2 {
                let d = d_mix * mix[0];
                grad.rec_w[k][r.index()] += d * f.recurrence[k];
                grad.rec_b[k][r.index()] += d;
                slot = 1;
            }
            let d_order = d_mix * mix[slot];
            self.integrate_grad(&self.order_w[k], &self.order_b[k], r, &f.order[k], d_order, &mut grad.order_w[k], &mut grad.order_b[k]);
            let d_pair = d_mix * mix[slot + 1];
            self.integrate_grad(&self.pair_w[k], &self.pair_b[k], r, &f.pair[k], d_pair, &mut grad.pair_w[k], &mut grad.pair_b[k]);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_grad(
        &self,
        w: &[f64],
        b: &[f64],
        head: RelationId,
        hs: &[(RelationId, f64)],
        upstream: f64,
        gw: &mut [f64],
        gb: &mut [f64],
    ) {
        if hs.is_empty() || upstream == 0.0 {
            return;
        }
        let (h, wv, bv) = self.gather(w, b, head, hs);
        let phi = integrate_scores(&h, &wv, &bv);
        let weights = softmax(&wv);
        for (j, &(other, _)) in hs.iter().enumerate() {
            let c = self.cell(head, other);
            gb[c] += upstream * weights[j];
            gw[c] += upstream * weights[j] * (h[j] + bv[j] - phi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn features(order: Vec<(u32, f64)>, pair: Vec<(u32, f64)>) -> CandidateFeatures {
        let conv = |v: Vec<(u32, f64)>| v.into_iter().map(|(r, h)| (RelationId(r), h)).collect::<Vec<_>>();
        CandidateFeatures {
            head: RelationId(0),
            recurrence: [0.7, 0.4],
            order: [conv(order.clone()), conv(order), Vec::new()],
            pair: [conv(pair.clone()), Vec::new(), conv(pair)],
        }
    }

    #[test]
    fn integrate_worked_values() {
        assert_relative_eq!(integrate_scores(&[0.4, 0.8], &[0.0, 3f64.ln()], &[0.0, 0.0]), 0.7, epsilon = 1e-12);
        assert_relative_eq!(integrate_scores(&[0.3], &[5.0], &[0.2]), 0.5, epsilon = 1e-12);
        assert_relative_eq!(integrate_scores(&[0.1, 0.2, 0.6], &[2.0; 3], &[0.0; 3]), 0.3, epsilon = 1e-12);
        assert_eq!(integrate_scores(&[], &[], &[]), 0.0);
    }

    #[test]
    fn part_combination() {
        assert_eq!(combine_parts([0.2, 0.5, 0.1], [0.0; 3]), 0.0);
        assert_relative_eq!(combine_parts([0.2, 0.5, 0.1], [1.0, 0.0, 0.0]), 0.2);
        assert_relative_eq!(combine_parts([0.2, 0.5, 0.1], [1.0, 2.0, 3.0]), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn initial_weights_are_valid() {
        let w = TfmWeights::new(4);
        for k in 0..PARTS {
            assert_relative_eq!(w.mix(k).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(w.gamma_rules(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.gamma_tfm(), 1.0, epsilon = 1e-12);
        let f = features(vec![], vec![]);
        assert_relative_eq!(w.phi_rec(&f, 0), 0.7);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut w = TfmWeights::new(3);
        // move off the symmetric start so every term is exercised
        for (i, s) in w.slots_mut().into_iter().enumerate() {
            for (j, x) in s.iter_mut().enumerate() {
                *x += 0.1 * (((i * 7 + j * 3) % 11) as f64 - 5.0) / 5.0;
            }
        }
        let f = features(vec![(1, 0.8), (2, 0.3)], vec![(0, 0.05), (2, 1.2)]);
        let rule = 0.6;
        let mut grad = w.zeros_like();
        w.accumulate_grad(rule, &f, 1.0, &mut grad);
        let analytic: Vec<f64> = grad.slots().concat();
        let step = 1e-5;
        let mut idx = 0;
        let blocks = w.slots().iter().map(|s| s.len()).collect::<Vec<_>>();
        for (bi, len) in blocks.into_iter().enumerate() {
            for j in 0..len {
                let mut p = w.clone();
                p.slots_mut()[bi][j] += step;
                let mut m = w.clone();
                m.slots_mut()[bi][j] -= step;
                let num = (p.phi_combined(rule, &f) - m.phi_combined(rule, &f)) / (2.0 * step);
                let a = analytic[idx];
                assert!((a - num).abs() <= 1e-6 * a.abs().max(num.abs()).max(1.0), "block {bi} entry {j}: {a} vs {num}");
                idx += 1;
            }
        }
    }
}
