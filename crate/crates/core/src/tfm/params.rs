//! Fitted temporal-feature distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TilpError};
use crate::graph::{RelationId, TemporalGraph};
use crate::query::Query;
use crate::tfm::distributions::{
    bernoulli_likelihood, fit_bernoulli, GapDistribution, PRIOR_GAUSSIAN, PRIOR_PROBABILITY,
};
use crate::tfm::duration::DurationModel;
use crate::tfm::evidence::{collect_evidence, ClosestStarts};
use crate::timeline::Timeline;

type PairKey = (RelationId, RelationId);

/// Bernoulli and gap distributions per evidence part, plus durations.
///
/// Maps hold only entries that saw at least two observations; lookups of
/// anything else return the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDocument", try_from = "ParamsDocument")]
pub struct DistributionParams {
    pub recurrence: [BTreeMap<RelationId, f64>; 2],
    pub order: [BTreeMap<PairKey, f64>; 3],
    pub pair: [BTreeMap<PairKey, GapDistribution>; 3],
    pub durations: DurationModel,
    /// Entries observed only once and therefore left at the prior.
    pub fallbacks: usize,
}

impl DistributionParams {
    /// Parameters with every entry at the prior.
    pub fn prior(durations: DurationModel) -> Self {
        DistributionParams {
            recurrence: Default::default(),
            order: Default::default(),
            pair: Default::default(),
            durations,
            fallbacks: 0,
        }
    }

    pub fn recurrence_p(&self, part: usize, r: RelationId) -> f64 {
        self.recurrence[part].get(&r).copied().unwrap_or(PRIOR_PROBABILITY)
    }

    pub fn order_p(&self, part: usize, r: RelationId, other: RelationId) -> f64 {
        self.order[part].get(&(r, other)).copied().unwrap_or(PRIOR_PROBABILITY)
    }

    pub fn gap(&self, part: usize, r: RelationId, other: RelationId) -> GapDistribution {
        self.pair[part]
            .get(&(r, other))
            .copied()
            .unwrap_or(GapDistribution::Gaussian(PRIOR_GAUSSIAN))
    }

    /// Recurrence likelihood `h` for query relation `r` given whether it
    /// appears in the part.
    pub fn recurrence_h(&self, part: usize, r: RelationId, present: bool) -> f64 {
        bernoulli_likelihood(self.recurrence_p(part, r), present)
    }

    pub fn order_h(&self, part: usize, r: RelationId, other: RelationId, query_start: i32, other_start: i32) -> f64 {
        bernoulli_likelihood(self.order_p(part, r, other), query_start < other_start)
    }

    pub fn pair_h(&self, part: usize, r: RelationId, other: RelationId, query_start: i32, other_start: i32) -> f64 {
        self.gap(part, r, other).pdf((query_start - other_start).abs() as f64)
    }
}

/// One positive example used for fitting: a query, its answer, and the
/// closest walk start years per relation at that answer.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub query: Query,
    pub truth: crate::graph::EntityId,
    pub walk_starts: Option<ClosestStarts>,
}

#[derive(Default)]
struct Tally {
    recurrence: [BTreeMap<RelationId, (usize, usize)>; 2],
    order: [BTreeMap<PairKey, (usize, usize)>; 3],
    gaps: [BTreeMap<PairKey, Vec<f64>>; 3],
}

/// Builds one fit sample per stored fact with a resolved span, hiding the
/// fact itself. `walk_starts` supplies part-3 evidence keyed by fact index.
pub fn samples_from_graph(
    graph: &TemporalGraph,
    timeline: &Timeline,
    walk_starts: &BTreeMap<usize, ClosestStarts>,
) -> Vec<FitSample> {
    (0..graph.len())
        .filter_map(|i| {
            let span = timeline.span(i)?;
            let f = graph.fact(i);
            Some(FitSample {
                query: Query {
                    subject: f.subject,
                    relation: f.relation,
                    span,
                    excluded_edge: Some(f.edge_id),
                },
                truth: f.object,
                walk_starts: walk_starts.get(&i).cloned(),
            })
        })
        .collect()
}

/// Fits every distribution from positive examples.
pub fn fit_distributions(
    graph: &TemporalGraph,
    timeline: &Timeline,
    samples: &[FitSample],
    durations: DurationModel,
) -> DistributionParams {
    let mut tally = Tally::default();
    for s in samples {
        let r = s.query.relation;
        let t = s.query.span.start;
        let walk = s.walk_starts.as_ref().map(|w| (w, 1));
        let ev = collect_evidence(graph, timeline, &s.query, s.truth, walk);
        for part in 0..2 {
            let e = tally.recurrence[part].entry(r).or_default();
            e.0 += ev.relations[part].contains(&r) as usize;
            e.1 += 1;
        }
        for part in 0..3 {
            for (&other, &start) in &ev.closest_start[part] {
                let e = tally.order[part].entry((r, other)).or_default();
                e.0 += (t < start) as usize;
                e.1 += 1;
                tally.gaps[part].entry((r, other)).or_default().push((t - start).abs() as f64);
            }
        }
    }

    let mut params = DistributionParams::prior(durations);
    for part in 0..2 {
        for (&r, &(hits, n)) in &tally.recurrence[part] {
            match fit_bernoulli(hits, n) {
                Some(p) => {
                    params.recurrence[part].insert(r, p);
                }
                None => params.fallbacks += 1,
            }
        }
    }
    for part in 0..3 {
        for (&key, &(hits, n)) in &tally.order[part] {
            match fit_bernoulli(hits, n) {
                Some(p) => {
                    params.order[part].insert(key, p);
                }
                None => params.fallbacks += 1,
            }
        }
        for (&key, gaps) in &tally.gaps[part] {
            match GapDistribution::fit(gaps) {
                Some(d) => {
                    params.pair[part].insert(key, d);
                }
                None => params.fallbacks += 1,
            }
        }
    }
    log::debug!("fitted temporal distributions with {} fallback entries", params.fallbacks);
    params
}

/// JSON layout: maps keyed by `"r"` or `"r,r'"`, one map per part.
#[derive(Serialize, Deserialize)]
struct ParamsDocument {
    recurrence: Vec<BTreeMap<String, f64>>,
    order: Vec<BTreeMap<String, f64>>,
    pair: Vec<BTreeMap<String, GapDistribution>>,
    durations: DurationModel,
    fallbacks: usize,
}

fn pair_key(k: &PairKey) -> String {
    format!("{},{}", k.0 .0, k.1 .0)
}

fn parse_pair_key(s: &str) -> Result<PairKey> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| TilpError::Config(format!("bad relation pair key {s:?}")))?;
    Ok((parse_relation(a)?, parse_relation(b)?))
}

fn parse_relation(s: &str) -> Result<RelationId> {
    s.trim()
        .parse()
        .map(RelationId)
        .map_err(|_| TilpError::Config(format!("bad relation key {s:?}")))
}

impl From<DistributionParams> for ParamsDocument {
    fn from(p: DistributionParams) -> Self {
        ParamsDocument {
            recurrence: p
                .recurrence
                .iter()
                .map(|m| m.iter().map(|(r, v)| (r.0.to_string(), *v)).collect())
                .collect(),
            order: p.order.iter().map(|m| m.iter().map(|(k, v)| (pair_key(k), *v)).collect()).collect(),
            pair: p.pair.iter().map(|m| m.iter().map(|(k, v)| (pair_key(k), *v)).collect()).collect(),
            durations: p.durations,
            fallbacks: p.fallbacks,
        }
    }
}

impl TryFrom<ParamsDocument> for DistributionParams {
    type Error = TilpError;

    fn try_from(doc: ParamsDocument) -> Result<Self> {
        if doc.recurrence.len() != 2 || doc.order.len() != 3 || doc.pair.len() != 3 {
            return Err(TilpError::Config("distribution document has the wrong number of parts".into()));
        }
        let mut p = DistributionParams::prior(doc.durations);
        p.fallbacks = doc.fallbacks;
        for (part, m) in doc.recurrence.into_iter().enumerate() {
            for (k, v) in m {
                p.recurrence[part].insert(parse_relation(&k)?, v);
            }
        }
        for (part, m) in doc.order.into_iter().enumerate() {
            for (k, v) in m {
                p.order[part].insert(parse_pair_key(&k)?, v);
            }
        }
        for (part, m) in doc.pair.into_iter().enumerate() {
            for (k, v) in m {
                p.pair[part].insert(parse_pair_key(&k)?, v);
            }
        }
        Ok(p)
    }
}

