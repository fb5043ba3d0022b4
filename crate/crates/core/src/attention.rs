//! Shared attention model for rule confidence.
//!
//! For a target predicate the model produces, for every rule length `l`,
//! a predicate attention and a query-relation attention per body step and
//! a relation attention per pair of body steps, plus one attention over
//! lengths. Hidden states come from a gated recurrent cell fed with the
//! length-specific embedding of the target predicate. A rule's confidence
//! is the product of the attention entries it selects.
//!
//! Gradients are computed by hand over this fixed computation graph.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::RelationId;
use crate::interval::TemporalRelation;
use crate::rule::{body_pairs, pair_count, RuleTemplate};

const TR: usize = TemporalRelation::COUNT;

/// `h' = (1 - z) ⊙ h + z ⊙ tanh(W_h h + W_x x + b)`,
/// `z = sigmoid(W_z [h; x] + b_z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedCell {
    pub w_h: Array2<f64>,
    pub w_x: Array2<f64>,
    pub b: Array1<f64>,
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
}

#[derive(Debug, Clone)]
struct CellTrace {
    h_prev: Array1<f64>,
    z: Array1<f64>,
    c: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GatedCell {
    fn zeros(d: usize) -> Self {
        GatedCell {
            w_h: Array2::zeros((d, d)),
            w_x: Array2::zeros((d, d)),
            b: Array1::zeros(d),
            w_z: Array2::zeros((d, 2 * d)),
            b_z: Array1::zeros(d),
        }
    }

    fn forward(&self, h: &Array1<f64>, x: ArrayView1<f64>) -> (Array1<f64>, CellTrace) {
        let d = h.len();
        let c = (self.w_h.dot(h) + self.w_x.dot(&x) + &self.b).mapv(f64::tanh);
        let z = (self.w_z.slice(s![.., ..d]).dot(h) + self.w_z.slice(s![.., d..]).dot(&x) + &self.b_z)
            .mapv(sigmoid);
        let next = (1.0 - &z) * h + &z * &c;
        (next, CellTrace { h_prev: h.clone(), z, c })
    }

    /// Accumulates parameter gradients into `grad`; returns `(dh_prev, dx)`.
    fn backward(
        &self,
        trace: &CellTrace,
        x: ArrayView1<f64>,
        dh: &Array1<f64>,
        grad: &mut GatedCell,
    ) -> (Array1<f64>, Array1<f64>) {
        let d = dh.len();
        let CellTrace { h_prev, z, c } = trace;
        let dz = dh * &(c - h_prev);
        let dc = dh * z;
        let mut dh_prev = dh * &(1.0 - z);
        let da_c = &dc * &(1.0 - c * c);
        let da_z = &dz * &(z * &(1.0 - z));
        add_outer(&mut grad.w_h, &da_c, h_prev.view());
        add_outer(&mut grad.w_x, &da_c, x);
        grad.b += &da_c;
        {
            let mut wz_h = grad.w_z.slice_mut(s![.., ..d]);
            for (i, &g) in da_z.iter().enumerate() {
                wz_h.row_mut(i).scaled_add(g, h_prev);
            }
        }
        {
            let mut wz_x = grad.w_z.slice_mut(s![.., d..]);
            for (i, &g) in da_z.iter().enumerate() {
                wz_x.row_mut(i).scaled_add(g, &x);
            }
        }
        grad.b_z += &da_z;
        dh_prev += &self.w_h.t().dot(&da_c);
        dh_prev += &self.w_z.slice(s![.., ..d]).t().dot(&da_z);
        let dx = self.w_x.t().dot(&da_c) + self.w_z.slice(s![.., d..]).t().dot(&da_z);
        (dh_prev, dx)
    }
}

fn add_outer(m: &mut Array2<f64>, left: &Array1<f64>, right: ArrayView1<f64>) {
    for (i, &g) in left.iter().enumerate() {
        if g != 0.0 {
            m.row_mut(i).scaled_add(g, &right);
        }
    }
}

pub fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Gradient w.r.t. logits given the gradient w.r.t. softmax outputs `p`.
fn softmax_backward(p: &Array1<f64>, dp: &Array1<f64>) -> Array1<f64> {
    let dot = p.dot(dp);
    p * &(dp - dot)
}

/// All learnable tensors of the attention model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub dim: usize,
    pub max_len: usize,
    pub relations: usize,
    /// `embeddings[0]` feeds the length attention, `embeddings[l]` the
    /// recurrence for rules of length `l`. Each is `relations × dim`.
    pub embeddings: Vec<Array2<f64>>,
    pub cell: GatedCell,
    pub w_pred: Array2<f64>,
    pub b_pred: Array1<f64>,
    pub w_tr: Array2<f64>,
    pub b_tr: Array1<f64>,
    pub w_tr_pair: Array2<f64>,
    pub b_tr_pair: Array1<f64>,
    pub w_len: Array2<f64>,
    pub b_len: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 14] = [
    "embeddings", "cell.w_h", "cell.w_x", "cell.b", "cell.w_z", "cell.b_z", "w_pred", "b_pred", "w_tr", "b_tr",
    "w_tr_pair", "b_tr_pair", "w_len", "b_len",
];

impl AttentionParams {
    pub fn zeros(relations: usize, dim: usize, max_len: usize) -> Self {
        AttentionParams {
            dim,
            max_len,
            relations,
            embeddings: vec![Array2::zeros((relations, dim)); max_len + 1],
            cell: GatedCell::zeros(dim),
            w_pred: Array2::zeros((relations, dim)),
            b_pred: Array1::zeros(relations),
            w_tr: Array2::zeros((TR, dim)),
            b_tr: Array1::zeros(TR),
            w_tr_pair: Array2::zeros((TR, 2 * dim)),
            b_tr_pair: Array1::zeros(TR),
            w_len: Array2::zeros((max_len, dim)),
            b_len: Array1::zeros(max_len),
        }
    }

    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(relations: usize, dim: usize, max_len: usize, seed: u64) -> Self {
        let mut p = Self::zeros(relations, dim, max_len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |m: &mut Array2<f64>| {
            let (r, c) = m.dim();
            let a = (6.0 / (r + c) as f64).sqrt();
            m.mapv_inplace(|_| rng.random_range(-a..a));
        };
        for e in &mut p.embeddings {
            glorot(e);
        }
        glorot(&mut p.cell.w_h);
        glorot(&mut p.cell.w_x);
        glorot(&mut p.cell.w_z);
        glorot(&mut p.w_pred);
        glorot(&mut p.w_tr);
        glorot(&mut p.w_tr_pair);
        glorot(&mut p.w_len);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.relations, self.dim, self.max_len)
    }

    /// Flat views in a fixed order; embeddings come first, one per length.
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut v: Vec<ArrayViewD<f64>> = self.embeddings.iter().map(|e| e.view().into_dyn()).collect();
        v.extend([
            self.cell.w_h.view().into_dyn(),
            self.cell.w_x.view().into_dyn(),
            self.cell.b.view().into_dyn(),
            self.cell.w_z.view().into_dyn(),
            self.cell.b_z.view().into_dyn(),
            self.w_pred.view().into_dyn(),
            self.b_pred.view().into_dyn(),
            self.w_tr.view().into_dyn(),
            self.b_tr.view().into_dyn(),
            self.w_tr_pair.view().into_dyn(),
            self.b_tr_pair.view().into_dyn(),
            self.w_len.view().into_dyn(),
            self.b_len.view().into_dyn(),
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut v: Vec<ArrayViewMutD<f64>> = self.embeddings.iter_mut().map(|e| e.view_mut().into_dyn()).collect();
        v.extend([
            self.cell.w_h.view_mut().into_dyn(),
            self.cell.w_x.view_mut().into_dyn(),
            self.cell.b.view_mut().into_dyn(),
            self.cell.w_z.view_mut().into_dyn(),
            self.cell.b_z.view_mut().into_dyn(),
            self.w_pred.view_mut().into_dyn(),
            self.b_pred.view_mut().into_dyn(),
            self.w_tr.view_mut().into_dyn(),
            self.b_tr.view_mut().into_dyn(),
            self.w_tr_pair.view_mut().into_dyn(),
            self.b_tr_pair.view_mut().into_dyn(),
            self.w_len.view_mut().into_dyn(),
            self.b_len.view_mut().into_dyn(),
        ]);
        v
    }

    /// Human-readable names matching [`tensors`](Self::tensors).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..=self.max_len).map(|l| format!("embeddings[{l}]")).collect();
        v.extend(TENSOR_NAMES[1..].iter().map(|s| s.to_string()));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Computes every attention vector for `head`.
    pub fn forward(&self, head: RelationId) -> AttentionBundle {
        let e0 = self.embeddings[0].row(head.index());
        let length = softmax(&(self.w_len.dot(&e0) + &self.b_len));
        let mut per_len = Vec::with_capacity(self.max_len);
        for l in 1..=self.max_len {
            let x = self.embeddings[l].row(head.index());
            let mut hidden = vec![Array1::zeros(self.dim)];
            let mut traces = Vec::with_capacity(l);
            for _ in 0..l {
                let (h, t) = self.cell.forward(hidden.last().unwrap(), x);
                hidden.push(h);
                traces.push(t);
            }
            let predicate = (1..=l).map(|i| softmax(&(self.w_pred.dot(&hidden[i]) + &self.b_pred))).collect();
            let tr_query = (1..=l).map(|i| softmax(&(self.w_tr.dot(&hidden[i]) + &self.b_tr))).collect();
            let tr_pairs = body_pairs(l)
                .map(|(j, k)| {
                    let d = self.dim;
                    let z = self.w_tr_pair.slice(s![.., ..d]).dot(&hidden[j + 1])
                        + self.w_tr_pair.slice(s![.., d..]).dot(&hidden[k + 1])
                        + &self.b_tr_pair;
                    softmax(&z)
                })
                .collect();
            per_len.push(LengthAttention { hidden, predicate, tr_query, tr_pairs, traces });
        }
        AttentionBundle { head, length, per_len }
    }

    /// Back-propagates bundle gradients into `grad`.
    pub fn backward(&self, bundle: &AttentionBundle, dbundle: &BundleGrad, grad: &mut AttentionParams) {
        let head = bundle.head.index();
        let d = self.dim;
        // length attention
        let dz = softmax_backward(&bundle.length, &dbundle.length);
        let e0 = self.embeddings[0].row(head);
        add_outer(&mut grad.w_len, &dz, e0);
        grad.b_len += &dz;
        let de0 = self.w_len.t().dot(&dz);
        grad.embeddings[0].row_mut(head).scaled_add(1.0, &de0);

        for (li, (att, datt)) in bundle.per_len.iter().zip(&dbundle.per_len).enumerate() {
            if !datt.touched {
                continue;
            }
            let l = li + 1;
            let mut dh: Vec<Array1<f64>> = vec![Array1::zeros(d); l + 1];
            for i in 0..l {
                let dz = softmax_backward(&att.predicate[i], &datt.predicate[i]);
                add_outer(&mut grad.w_pred, &dz, att.hidden[i + 1].view());
                grad.b_pred += &dz;
                dh[i + 1] += &self.w_pred.t().dot(&dz);

                let dz = softmax_backward(&att.tr_query[i], &datt.tr_query[i]);
                add_outer(&mut grad.w_tr, &dz, att.hidden[i + 1].view());
                grad.b_tr += &dz;
                dh[i + 1] += &self.w_tr.t().dot(&dz);
            }
            for (p, (j, k)) in body_pairs(l).enumerate() {
                let dz = softmax_backward(&att.tr_pairs[p], &datt.tr_pairs[p]);
                {
                    let mut left = grad.w_tr_pair.slice_mut(s![.., ..d]);
                    for (r, &g) in dz.iter().enumerate() {
                        left.row_mut(r).scaled_add(g, &att.hidden[j + 1]);
                    }
                }
                {
                    let mut right = grad.w_tr_pair.slice_mut(s![.., d..]);
                    for (r, &g) in dz.iter().enumerate() {
                        right.row_mut(r).scaled_add(g, &att.hidden[k + 1]);
                    }
                }
                grad.b_tr_pair += &dz;
                dh[j + 1] += &self.w_tr_pair.slice(s![.., ..d]).t().dot(&dz);
                dh[k + 1] += &self.w_tr_pair.slice(s![.., d..]).t().dot(&dz);
            }
            let x = self.embeddings[l].row(head);
            let mut dx = Array1::zeros(d);
            for i in (1..=l).rev() {
                let dhi = dh[i].clone();
                let (dprev, dxi) = self.cell.backward(&att.traces[i - 1], x, &dhi, &mut grad.cell);
                dh[i - 1] += &dprev;
                dx += &dxi;
            }
            grad.embeddings[l].row_mut(head).scaled_add(1.0, &dx);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LengthAttention {
    /// `h_0 .. h_l`, with `h_0 = 0`.
    pub hidden: Vec<Array1<f64>>,
    pub predicate: Vec<Array1<f64>>,
    pub tr_query: Vec<Array1<f64>>,
    /// One per body pair, in [`body_pairs`] order.
    pub tr_pairs: Vec<Array1<f64>>,
    traces: Vec<CellTrace>,
}

/// Attention vectors for one target predicate.
#[derive(Debug, Clone)]
pub struct AttentionBundle {
    pub head: RelationId,
    pub length: Array1<f64>,
    /// Index `l - 1` holds the attentions for rules of length `l`.
    pub per_len: Vec<LengthAttention>,
}

impl AttentionBundle {
    pub fn max_len(&self) -> usize {
        self.per_len.len()
    }

    /// Every attention vector in the bundle.
    pub fn vectors(&self) -> impl Iterator<Item = &Array1<f64>> {
        std::iter::once(&self.length).chain(
            self.per_len
                .iter()
                .flat_map(|a| a.predicate.iter().chain(&a.tr_query).chain(&a.tr_pairs)),
        )
    }

    /// The individual confidence factors whose product is the rule score.
    pub fn factors(&self, rule: &RuleTemplate) -> Vec<f64> {
        let l = rule.len();
        assert!(l >= 1 && l <= self.max_len(), "rule length {l} outside 1..={}", self.max_len());
        let att = &self.per_len[l - 1];
        let mut f = Vec::with_capacity(1 + 2 * l + pair_count(l));
        f.push(self.length[l - 1]);
        for i in 0..l {
            f.push(att.predicate[i][rule.predicates[i].index()]);
            f.push(att.tr_query[i][rule.tr_query[i].index()]);
        }
        for (p, tr) in rule.tr_pairs.iter().enumerate() {
            f.push(att.tr_pairs[p][tr.index()]);
        }
        f
    }

    /// Confidence of `rule`: product of its length, predicate and
    /// temporal-relation attention entries.
    pub fn rule_score(&self, rule: &RuleTemplate) -> f64 {
        self.factors(rule).iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct LengthGrad {
    pub predicate: Vec<Array1<f64>>,
    pub tr_query: Vec<Array1<f64>>,
    pub tr_pairs: Vec<Array1<f64>>,
    touched: bool,
}

/// Gradient of a scalar with respect to every vector of a bundle.
#[derive(Debug, Clone)]
pub struct BundleGrad {
    pub length: Array1<f64>,
    pub per_len: Vec<LengthGrad>,
}

impl BundleGrad {
    pub fn zeros(bundle: &AttentionBundle) -> Self {
        BundleGrad {
            length: Array1::zeros(bundle.length.len()),
            per_len: bundle
                .per_len
                .iter()
                .map(|a| LengthGrad {
                    predicate: a.predicate.iter().map(|v| Array1::zeros(v.len())).collect(),
                    tr_query: a.tr_query.iter().map(|v| Array1::zeros(v.len())).collect(),
                    tr_pairs: a.tr_pairs.iter().map(|v| Array1::zeros(v.len())).collect(),
                    touched: false,
                })
                .collect(),
        }
    }

    /// Adds `upstream * d score(rule) / d bundle`.
    pub fn add_rule(&mut self, bundle: &AttentionBundle, rule: &RuleTemplate, upstream: f64) {
        if upstream == 0.0 {
            return;
        }
        let factors = bundle.factors(rule);
        let l = rule.len();
        // product of all factors except the one at position `skip`
        let others = |skip: usize| -> f64 {
            factors
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, f)| f)
                .product()
        };
        self.length[l - 1] += upstream * others(0);
        let g = &mut self.per_len[l - 1];
        g.touched = true;
        for i in 0..l {
            g.predicate[i][rule.predicates[i].index()] += upstream * others(1 + 2 * i);
            g.tr_query[i][rule.tr_query[i].index()] += upstream * others(2 + 2 * i);
        }
        for (p, tr) in rule.tr_pairs.iter().enumerate() {
            g.tr_pairs[p][tr.index()] += upstream * others(1 + 2 * l + p);
        }
    }
}
