#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tilp::graph::{EntityId, Quadruple, RelationId, TemporalGraph};
use tilp::interval::{Endpoint, Interval, Span, TemporalRelation};
use tilp::rule::RuleTemplate;
use tilp::timeline::Timeline;
use tilp::walk::{constrained_walks, filter_non_markovian, MarkovConstraint, Walk, WalkContext};

/// Interval relation written out from the three-way case split, kept apart
/// from the library so the two can disagree.
pub fn direct_relation(a: Span, b: Span) -> TemporalRelation {
    if a.end < b.start {
        TemporalRelation::Before
    } else if b.end < a.start {
        TemporalRelation::After
    } else {
        TemporalRelation::Touching
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Allen {
    Before,
    Meets,
    Overlaps,
    Starts,
    During,
    Finishes,
    Equal,
    FinishedBy,
    Contains,
    StartedBy,
    OverlappedBy,
    MetBy,
    After,
}

/// Allen relation of two proper intervals.
pub fn allen(a: (i32, i32), b: (i32, i32)) -> Allen {
    let ((s1, e1), (s2, e2)) = (a, b);
    use Allen::*;
    if e1 < s2 {
        Before
    } else if e1 == s2 {
        Meets
    } else if e2 < s1 {
        After
    } else if e2 == s1 {
        MetBy
    } else if s1 == s2 && e1 == e2 {
        Equal
    } else if s1 == s2 {
        if e1 < e2 {
            Starts
        } else {
            StartedBy
        }
    } else if e1 == e2 {
        if s1 > s2 {
            Finishes
        } else {
            FinishedBy
        }
    } else if s2 < s1 && e1 < e2 {
        During
    } else if s1 < s2 && e2 < e1 {
        Contains
    } else if s1 < s2 {
        Overlaps
    } else {
        OverlappedBy
    }
}

/// Class each Allen relation should collapse to.
pub fn expected_class(r: Allen) -> TemporalRelation {
    match r {
        Allen::Before => TemporalRelation::Before,
        Allen::After => TemporalRelation::After,
        _ => TemporalRelation::Touching,
    }
}

pub struct RandomGraph {
    pub graph: TemporalGraph,
    pub timeline: Timeline,
    pub entities: u32,
}

/// Random graph over `entities` nodes with `facts` base facts drawn from
/// `relations` base relations. Roughly one fact in twenty has an open end,
/// which a strict timeline leaves unresolved.
pub fn random_graph(rng: &mut ChaCha8Rng, entities: u32, facts: usize, relations: u32) -> RandomGraph {
    let quads: Vec<Quadruple> = (0..facts)
        .map(|_| {
            let s = rng.random_range(0..entities);
            let o = rng.random_range(0..entities);
            let r = rng.random_range(0..relations);
            let start = rng.random_range(2000..2016);
            let interval = if rng.random_bool(0.05) {
                Interval::new(Endpoint::year(start), Endpoint::Unknown)
            } else {
                Interval::years(start, start + rng.random_range(0..4))
            };
            Quadruple::new(s, r, o, interval)
        })
        .collect();
    let graph = TemporalGraph::from_quadruples(&quads);
    let timeline = Timeline::strict(&graph);
    RandomGraph { graph, timeline, entities }
}

pub fn random_span(rng: &mut ChaCha8Rng) -> Span {
    let s = rng.random_range(1998..2018);
    Span::new(s, s + rng.random_range(0..3))
}

/// Every walk of length `1..=max_len` from `start`, found by scanning the
/// full fact list at each step. `unique_edges` forbids reusing an edge.
pub fn brute_walks(
    graph: &TemporalGraph,
    timeline: &Timeline,
    start: EntityId,
    max_len: usize,
    unique_edges: bool,
) -> Vec<Walk> {
    fn go(
        graph: &TemporalGraph,
        timeline: &Timeline,
        at: EntityId,
        max_len: usize,
        unique: bool,
        path: &mut Vec<usize>,
        out: &mut Vec<Walk>,
    ) {
        if path.len() == max_len {
            return;
        }
        for i in 0..graph.len() {
            let f = graph.fact(i);
            if f.subject != at || timeline.span(i).is_none() {
                continue;
            }
            if unique && path.iter().any(|&p| graph.fact(p).edge_id == f.edge_id) {
                continue;
            }
            path.push(i);
            out.push(Walk::new(path.clone()));
            go(graph, timeline, f.object, max_len, unique, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(graph, timeline, start, max_len, unique_edges, &mut Vec::new(), &mut out);
    out
}

/// Template of `walk` computed straight from the interval definitions.
pub fn brute_template(graph: &TemporalGraph, timeline: &Timeline, walk: &Walk, head: RelationId, query: Span) -> RuleTemplate {
    let spans: Vec<Span> = walk.facts.iter().map(|&f| timeline.span(f).unwrap()).collect();
    let mut tr_pairs = Vec::new();
    for j in 0..spans.len() {
        for k in j + 1..spans.len() {
            tr_pairs.push(direct_relation(spans[j], spans[k]));
        }
    }
    RuleTemplate {
        head,
        predicates: walk.facts.iter().map(|&f| graph.fact(f).relation).collect(),
        tr_query: spans.iter().map(|&s| direct_relation(s, query)).collect(),
        tr_pairs,
    }
}

/// All step-constraint sequences of length `len` over `relations`.
pub fn all_constraint_sequences(relations: u32, len: usize) -> Vec<Vec<MarkovConstraint>> {
    let steps: Vec<MarkovConstraint> = (0..relations)
        .flat_map(|r| {
            TemporalRelation::ALL
                .into_iter()
                .map(move |tr| MarkovConstraint { predicate: RelationId(r), tr_to_query: tr })
        })
        .collect();
    let mut seqs: Vec<Vec<MarkovConstraint>> = vec![Vec::new()];
    for _ in 0..len {
        seqs = seqs
            .into_iter()
            .flat_map(|s| {
                steps.iter().map(move |&c| {
                    let mut n = s.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
    }
    seqs
}

/// All pairwise assignments for a body of length `len`, keyed 1-based.
pub fn all_pair_assignments(len: usize) -> Vec<BTreeMap<(usize, usize), TemporalRelation>> {
    let pairs: Vec<(usize, usize)> = (1..=len).flat_map(|j| (j + 1..=len).map(move |k| (j, k))).collect();
    let mut out = vec![BTreeMap::new()];
    for p in pairs {
        out = out
            .into_iter()
            .flat_map(|m| {
                TemporalRelation::ALL.into_iter().map(move |tr| {
                    let mut n = m.clone();
                    n.insert(p, tr);
                    n
                })
            })
            .collect();
    }
    out
}

/// Compares constrained enumeration plus the pairwise filter against the
/// brute-force search for every template of length `1..=max_len` from
/// `start`. Returns the number of walks matched.
pub fn check_against_oracle(
    graph: &TemporalGraph,
    timeline: &Timeline,
    start: EntityId,
    query: Span,
    max_len: usize,
) -> Result<usize, String> {
    let head = RelationId(0);
    let mut expected: BTreeMap<RuleTemplate, BTreeSet<Vec<usize>>> = BTreeMap::new();
    for w in brute_walks(graph, timeline, start, max_len, true) {
        let t = brute_template(graph, timeline, &w, head, query);
        expected.entry(t).or_default().insert(w.facts);
    }
    let ctx = WalkContext::new(graph, timeline);
    let relations = graph.relation_count() as u32;
    let mut matched = 0;
    let mut seen_templates = 0;
    for len in 1..=max_len {
        let assignments = all_pair_assignments(len);
        for seq in all_constraint_sequences(relations, len) {
            let found = constrained_walks(&ctx, &seq, query, start, None, None);
            if found.truncated {
                return Err("uncapped enumeration reported truncation".into());
            }
            for pairs in &assignments {
                let kept = filter_non_markovian(timeline, found.walks.clone(), pairs).map_err(|e| e.to_string())?;
                let got: BTreeSet<Vec<usize>> = kept.into_iter().map(|w| w.facts).collect();
                let template = RuleTemplate {
                    head,
                    predicates: seq.iter().map(|c| c.predicate).collect(),
                    tr_query: seq.iter().map(|c| c.tr_to_query).collect(),
                    tr_pairs: pairs.values().copied().collect(),
                };
                let want = expected.get(&template).cloned().unwrap_or_default();
                if got != want {
                    return Err(format!(
                        "start {:?} query {query}: template {template:?} gave {} walks, oracle {}",
                        start,
                        got.len(),
                        want.len()
                    ));
                }
                if !want.is_empty() {
                    seen_templates += 1;
                }
                matched += got.len();
            }
        }
    }
    if seen_templates != expected.len() {
        return Err(format!("oracle produced {} templates, enumeration covered {seen_templates}", expected.len()));
    }
    Ok(matched)
}

/// Runs the oracle comparison on `graphs` random graphs.
pub fn oracle_sweep(seed: u64, graphs: usize, max_len: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    for _ in 0..graphs {
        let entities = rng.random_range(2..=50u32);
        let facts = rng.random_range(0..=(4 * entities as usize).min(300));
        let relations = rng.random_range(1..=2u32);
        let g = random_graph(&mut rng, entities, facts, relations);
        for _ in 0..2 {
            let start = EntityId(rng.random_range(0..entities));
            let query = random_span(&mut rng);
            total += check_against_oracle(&g.graph, &g.timeline, start, query, max_len)?;
        }
    }
    Ok(total)
}
