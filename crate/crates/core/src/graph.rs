//! Indexed fact store with synthetic inverse edges.
//!
//! Every base fact `(s, r, o, I)` is stored next to its inverse
//! `(o, r⁻¹, s, I)`. Both share an [`EdgeId`], which is what walk
//! enumeration uses to reject walks that traverse the same edge twice.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::interval::Interval;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Maps a relation to its inverse given the number of base relations.
pub fn inverse_relation(r: RelationId, base_relations: usize) -> RelationId {
    let b = base_relations as u32;
    if r.0 < b {
        RelationId(r.0 + b)
    } else {
        RelationId(r.0 - b)
    }
}

/// A base quadruple as read from a dataset file, before inverses exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub interval: Interval,
}

impl Quadruple {
    pub fn new(subject: u32, relation: u32, object: u32, interval: Interval) -> Self {
        Quadruple {
            subject: EntityId(subject),
            relation: RelationId(relation),
            object: EntityId(object),
            interval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub interval: Interval,
    pub edge_id: EdgeId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub duplicates_removed: usize,
}

/// Immutable, indexed temporal graph. Fact `2k` is a base fact and `2k + 1`
/// its inverse; both carry `EdgeId(k)`.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    facts: Vec<Fact>,
    by_subject: Vec<Vec<usize>>,
    by_subject_relation: HashMap<(EntityId, RelationId), Vec<usize>>,
    entity_count: usize,
    base_relations: usize,
    max_year: i32,
    report: BuildReport,
}

impl TemporalGraph {
    /// Builds the graph from base quadruples, adding inverses and dropping
    /// exact duplicates. `max_year` is used to resolve `Present` endpoints.
    pub fn build(
        quads: &[Quadruple],
        entity_count: usize,
        base_relations: usize,
        max_year: i32,
    ) -> Self {
        let mut seen = HashSet::with_capacity(quads.len());
        let mut facts = Vec::with_capacity(quads.len() * 2);
        let mut duplicates_removed = 0;
        for q in quads {
            if !seen.insert(*q) {
                duplicates_removed += 1;
                continue;
            }
            let edge_id = EdgeId((facts.len() / 2) as u32);
            facts.push(Fact {
                subject: q.subject,
                relation: q.relation,
                object: q.object,
                interval: q.interval,
                edge_id,
            });
            facts.push(Fact {
                subject: q.object,
                relation: inverse_relation(q.relation, base_relations),
                object: q.subject,
                interval: q.interval,
                edge_id,
            });
        }
        let mut graph = Self::from_stored(facts, entity_count, base_relations, max_year);
        graph.report.duplicates_removed = duplicates_removed;
        graph
    }

    /// Convenience constructor that infers counts and the latest year.
    pub fn from_quadruples(quads: &[Quadruple]) -> Self {
        let entity_count = quads
            .iter()
            .map(|q| q.subject.0.max(q.object.0) as usize + 1)
            .max()
            .unwrap_or(0);
        let base_relations = quads.iter().map(|q| q.relation.index() + 1).max().unwrap_or(0);
        let max_year = latest_year(quads.iter().map(|q| &q.interval)).unwrap_or(0);
        Self::build(quads, entity_count, base_relations, max_year)
    }

    fn from_stored(facts: Vec<Fact>, entity_count: usize, base_relations: usize, max_year: i32) -> Self {
        let mut by_subject = vec![Vec::new(); entity_count];
        let mut by_subject_relation: HashMap<(EntityId, RelationId), Vec<usize>> = HashMap::new();
        for (i, f) in facts.iter().enumerate() {
            by_subject[f.subject.index()].push(i);
            by_subject_relation.entry((f.subject, f.relation)).or_default().push(i);
        }
        TemporalGraph {
            facts,
            by_subject,
            by_subject_relation,
            entity_count,
            base_relations,
            max_year,
            report: BuildReport::default(),
        }
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, index: usize) -> &Fact {
        &self.facts[index]
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Index of the stored inverse of fact `index`.
    pub fn inverse_index(&self, index: usize) -> usize {
        index ^ 1
    }

    pub fn facts_from(&self, subject: EntityId) -> &[usize] {
        self.by_subject.get(subject.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn facts_from_with(&self, subject: EntityId, relation: RelationId) -> &[usize] {
        self.by_subject_relation
            .get(&(subject, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn base_relation_count(&self) -> usize {
        self.base_relations
    }

    /// Number of relations including inverses.
    pub fn relation_count(&self) -> usize {
        2 * self.base_relations
    }

    pub fn inverse(&self, r: RelationId) -> RelationId {
        inverse_relation(r, self.base_relations)
    }

    pub fn max_year(&self) -> i32 {
        self.max_year
    }

    pub fn report(&self) -> &BuildReport {
        &self.report
    }

    /// Base quadruples in storage order (inverse facts omitted).
    pub fn quadruples(&self) -> Vec<Quadruple> {
        self.facts
            .iter()
            .step_by(2)
            .map(|f| Quadruple {
                subject: f.subject,
                relation: f.relation,
                object: f.object,
                interval: f.interval,
            })
            .collect()
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            entity_count: self.entity_count,
            base_relations: self.base_relations,
            max_year: self.max_year,
            duplicates_removed: self.report.duplicates_removed,
            facts: self.facts.clone(),
        }
    }

    pub fn from_snapshot(snapshot: GraphSnapshot) -> Self {
        let mut g = Self::from_stored(
            snapshot.facts,
            snapshot.entity_count,
            snapshot.base_relations,
            snapshot.max_year,
        );
        g.report.duplicates_removed = snapshot.duplicates_removed;
        g
    }

    /// Per-subject index, exposed for round-trip checks.
    pub fn subject_index(&self) -> &[Vec<usize>] {
        &self.by_subject
    }

    pub fn subject_relation_index(&self) -> &HashMap<(EntityId, RelationId), Vec<usize>> {
        &self.by_subject_relation
    }
}

/// Serializable form of a [`TemporalGraph`]; indices are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub entity_count: usize,
    pub base_relations: usize,
    pub max_year: i32,
    pub duplicates_removed: usize,
    pub facts: Vec<Fact>,
}

pub(crate) fn latest_year<'a>(intervals: impl Iterator<Item = &'a Interval>) -> Option<i32> {
    intervals
        .flat_map(|i| [i.start.known(), i.end.known()])
        .flatten()
        .max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Endpoint;

    #[test]
    fn single_fact_gets_an_inverse() {
        let g = TemporalGraph::build(&[Quadruple::new(0, 0, 1, Interval::years(2000, 2001))], 2, 1, 2001);
        assert_eq!(g.len(), 2);
        let inv = g.facts_from(EntityId(1));
        assert_eq!(inv.len(), 1);
        let f = g.fact(inv[0]);
        assert_eq!(f.relation, RelationId(1));
        assert_eq!(f.object, EntityId(0));
        assert_eq!(f.edge_id, g.fact(0).edge_id);
        assert_eq!(g.inverse_index(inv[0]), 0);
    }

    #[test]
    fn unknown_end_is_mirrored() {
        let i = Interval::new(Endpoint::year(1990), Endpoint::Unknown);
        let g = TemporalGraph::build(&[Quadruple::new(0, 0, 1, i)], 2, 1, 2000);
        assert_eq!(g.fact(1).interval.end, Endpoint::Unknown);
    }

    #[test]
    fn exact_duplicates_collapse() {
        let q = Quadruple::new(0, 0, 1, Interval::stamp(2000));
        let other = Quadruple::new(0, 0, 1, Interval::stamp(2001));
        let g = TemporalGraph::build(&[q, q, other], 2, 1, 2001);
        assert_eq!(g.len(), 4);
        assert_eq!(g.report().duplicates_removed, 1);
    }

    #[test]
    fn inverse_is_an_involution() {
        for base in 1..6usize {
            for r in 0..(2 * base) as u32 {
                let r = RelationId(r);
                assert_eq!(inverse_relation(inverse_relation(r, base), base), r);
            }
        }
    }

    #[test]
    fn empty_graph() {
        let g = TemporalGraph::from_quadruples(&[]);
        assert!(g.is_empty());
        assert_eq!(g.entity_count(), 0);
        assert!(g.facts_from(EntityId(3)).is_empty());
    }
}
