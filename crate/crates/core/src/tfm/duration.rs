//! Per-relation duration model used to fill in missing interval endpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Quadruple, RelationId, TemporalGraph};
use crate::interval::{Endpoint, Interval, Span};
use crate::tfm::distributions::{TruncatedGaussian, SIGMA_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    /// Indexed by base relation; `None` when fewer than two durations exist.
    pub per_relation: Vec<Option<TruncatedGaussian>>,
    pub global: TruncatedGaussian,
}

impl DurationModel {
    /// Fits durations `end - start` of every base fact whose endpoints are
    /// both known years.
    pub fn fit(graph: &TemporalGraph) -> Self {
        let base = graph.base_relation_count();
        let mut samples = vec![Vec::new(); base];
        let mut all = Vec::new();
        for f in graph.facts().iter().step_by(2) {
            if let (Some(s), Some(e)) = (f.interval.start.known(), f.interval.end.known()) {
                let d = (e - s) as f64;
                samples[f.relation.index()].push(d);
                all.push(d);
            }
        }
        DurationModel {
            per_relation: samples.iter().map(|s| TruncatedGaussian::fit(s)).collect(),
            global: TruncatedGaussian::fit(&all).unwrap_or(TruncatedGaussian {
                mu: 0.0,
                sigma: SIGMA_FLOOR,
            }),
        }
    }

    pub fn for_relation(&self, base_relation: RelationId) -> TruncatedGaussian {
        self.per_relation
            .get(base_relation.index())
            .copied()
            .flatten()
            .unwrap_or(self.global)
    }

    /// Samples a duration in whole years for `relation`, deterministic in `seed`.
    pub fn sample_years(&self, base_relation: RelationId, seed: u64) -> i32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.for_relation(base_relation).sample(&mut rng).round() as i32
    }

    /// Completes an interval with a known start and unknown end.
    pub fn impute_end(&self, start: i32, base_relation: RelationId, seed: u64) -> Span {
        Span::new(start, start + self.sample_years(base_relation, seed))
    }
}

/// Turns stored intervals into comparable spans. `Present` becomes
/// `max_year`; a single unknown endpoint is imputed from the duration model
/// when one is attached, otherwise the interval stays unresolved.
#[derive(Debug, Clone)]
pub struct IntervalResolver {
    pub max_year: i32,
    pub durations: Option<DurationModel>,
    pub seed: u64,
}

fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn endpoint_code(e: Endpoint) -> u64 {
    match e {
        Endpoint::Year(t) => t.0 as i64 as u64,
        Endpoint::Unknown => u64::MAX,
        Endpoint::Present => u64::MAX - 1,
    }
}

impl IntervalResolver {
    pub fn strict(max_year: i32) -> Self {
        IntervalResolver {
            max_year,
            durations: None,
            seed: 0,
        }
    }

    pub fn imputing(max_year: i32, durations: DurationModel, seed: u64) -> Self {
        IntervalResolver {
            max_year,
            durations: Some(durations),
            seed,
        }
    }

    /// Resolves a base quadruple. The imputation seed depends only on the
    /// quadruple and the resolver seed, so results do not depend on call order.
    pub fn resolve(&self, q: &Quadruple) -> Option<Span> {
        let year = |e: Endpoint| match e {
            Endpoint::Year(t) => Some(t.0),
            Endpoint::Present => Some(self.max_year),
            Endpoint::Unknown => None,
        };
        let (start, end) = (year(q.interval.start), year(q.interval.end));
        match (start, end) {
            (Some(s), Some(e)) => Some(Span::new(s, e.max(s))),
            (Some(_), None) | (None, Some(_)) => {
                let model = self.durations.as_ref()?;
                let seed = self.fact_seed(q);
                let d = model.sample_years(q.relation, seed);
                Some(match (start, end) {
                    (Some(s), None) => Span::new(s, s + d),
                    (None, Some(e)) => Span::new(e - d, e),
                    _ => unreachable!(),
                })
            }
            (None, None) => None,
        }
    }

    fn fact_seed(&self, q: &Quadruple) -> u64 {
        [
            q.subject.0 as u64,
            q.relation.0 as u64,
            q.object.0 as u64,
            endpoint_code(q.interval.start),
            endpoint_code(q.interval.end),
        ]
        .into_iter()
        .fold(self.seed, mix)
    }

    pub fn resolve_interval(&self, interval: &Interval) -> Option<Span> {
        let q = Quadruple::new(0, 0, 0, *interval);
        self.resolve(&q)
    }
}
