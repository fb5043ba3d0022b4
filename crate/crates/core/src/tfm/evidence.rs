//! Evidence gathered around a candidate answer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{EntityId, RelationId, TemporalGraph};
use crate::query::Query;
use crate::timeline::Timeline;

/// Closest start year to the query start, per relation.
pub type ClosestStarts = BTreeMap<RelationId, i32>;

/// Records `start` for `relation` if it is closer to `anchor` than what is
/// stored; ties keep the earlier year.
pub fn note_closest(map: &mut ClosestStarts, relation: RelationId, start: i32, anchor: i32) {
    map.entry(relation)
        .and_modify(|best| {
            let (d_new, d_old) = ((start - anchor).abs(), (*best - anchor).abs());
            if d_new < d_old || (d_new == d_old && start < *best) {
                *best = start;
            }
        })
        .or_insert(start);
}

/// Evidence for candidate `e_c` given a query `(e_s, r, ?, I)`.
///
/// Part 1 holds facts from `e_c` to `e_s`, part 2 the other facts leaving
/// `e_c`, part 3 the constrained walks between `e_s` and `e_c`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSets {
    pub to_subject: Vec<usize>,
    pub elsewhere: Vec<usize>,
    pub walk_count: usize,
    pub relations: [BTreeSet<RelationId>; 3],
    pub closest_start: [ClosestStarts; 3],
}

impl EvidenceSets {
    pub fn is_empty(&self) -> bool {
        self.relations.iter().all(BTreeSet::is_empty)
    }
}

/// Collects evidence for `candidate`. `walk_starts` summarises the walks
/// found by rule application that end at the candidate: the closest body
/// start year per relation, and how many walks there were.
pub fn collect_evidence(
    graph: &TemporalGraph,
    timeline: &Timeline,
    query: &Query,
    candidate: EntityId,
    walk_starts: Option<(&ClosestStarts, usize)>,
) -> EvidenceSets {
    let anchor = query.span.start;
    let mut ev = EvidenceSets::default();
    for &i in graph.facts_from(candidate) {
        let f = graph.fact(i);
        if Some(f.edge_id) == query.excluded_edge {
            continue;
        }
        let part = if f.object == query.subject { 0 } else { 1 };
        if part == 0 {
            ev.to_subject.push(i);
        } else {
            ev.elsewhere.push(i);
        }
        ev.relations[part].insert(f.relation);
        if let Some(span) = timeline.span(i) {
            note_closest(&mut ev.closest_start[part], f.relation, span.start, anchor);
        }
    }
    if let Some((starts, count)) = walk_starts {
        ev.walk_count = count;
        ev.relations[2] = starts.keys().copied().collect();
        ev.closest_start[2] = starts.clone();
    }
    ev
}
