//! Constrained walk enumeration.
//!
//! Per-step (Markovian) constraints fix the predicate of each step and its
//! temporal relation to the query interval. They are compiled into 0/1
//! step operators and propagated from the start entity to get indicator
//! vectors; concrete walks are then recovered by backtracking from the
//! reachable endpoints through entities with a positive indicator. Pairwise
//! relations between body intervals need the whole walk and are checked
//! afterwards by [`filter_non_markovian`].

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TilpError};
use crate::graph::{EdgeId, EntityId, RelationId, TemporalGraph};
use crate::interval::{Span, TemporalRelation};
use crate::rule::body_pairs;
use crate::timeline::Timeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MarkovConstraint {
    pub predicate: RelationId,
    pub tr_to_query: TemporalRelation,
}

/// A walk as the ordered list of stored fact indices it traverses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Walk {
    pub facts: Vec<usize>,
}

impl Walk {
    pub fn new(facts: Vec<usize>) -> Self {
        Walk { facts }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn start(&self, graph: &TemporalGraph) -> EntityId {
        graph.fact(self.facts[0]).subject
    }

    pub fn end(&self, graph: &TemporalGraph) -> EntityId {
        graph.fact(*self.facts.last().expect("empty walk")).object
    }

    /// Entities visited, `E_1 .. E_{l+1}`.
    pub fn entities(&self, graph: &TemporalGraph) -> Vec<EntityId> {
        let mut out = vec![self.start(graph)];
        out.extend(self.facts.iter().map(|&f| graph.fact(f).object));
        out
    }

    pub fn is_connected(&self, graph: &TemporalGraph) -> bool {
        self.facts
            .windows(2)
            .all(|w| graph.fact(w[0]).object == graph.fact(w[1]).subject)
    }

    pub fn has_repeated_edge(&self, graph: &TemporalGraph) -> bool {
        let mut seen = HashSet::with_capacity(self.facts.len());
        !self.facts.iter().all(|&f| seen.insert(graph.fact(f).edge_id))
    }
}

/// Result of an enumeration, with a flag set when a cap cut it short.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkSet {
    pub walks: Vec<Walk>,
    pub truncated: bool,
}

/// Read-only view shared by all walk operations for one query.
#[derive(Debug, Clone, Copy)]
pub struct WalkContext<'a> {
    pub graph: &'a TemporalGraph,
    pub timeline: &'a Timeline,
    /// Edge hidden from every walk, typically the query's own fact.
    pub excluded_edge: Option<EdgeId>,
}

impl<'a> WalkContext<'a> {
    pub fn new(graph: &'a TemporalGraph, timeline: &'a Timeline) -> Self {
        WalkContext {
            graph,
            timeline,
            excluded_edge: None,
        }
    }

    pub fn excluding(mut self, edge: Option<EdgeId>) -> Self {
        self.excluded_edge = edge;
        self
    }

    fn usable(&self, fact: usize) -> bool {
        self.timeline.span(fact).is_some() && Some(self.graph.fact(fact).edge_id) != self.excluded_edge
    }

    fn satisfies(&self, fact: usize, c: &MarkovConstraint, query: Span) -> bool {
        let f = self.graph.fact(fact);
        f.relation == c.predicate
            && Some(f.edge_id) != self.excluded_edge
            && self
                .timeline
                .span(fact)
                .is_some_and(|s| s.relation_to(&query) == c.tr_to_query)
    }
}

/// Sparse 0/1 operator; entry `(x, y)` is set when some fact from `y` to
/// `x` satisfies the step constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOperator {
    pub constraint: MarkovConstraint,
    pub query: Span,
    entries: BTreeSet<(EntityId, EntityId)>,
}

impl StepOperator {
    pub fn get(&self, x: EntityId, y: EntityId) -> u8 {
        self.entries.contains(&(x, y)) as u8
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (EntityId, EntityId)> + '_ {
        self.entries.iter().copied()
    }

    pub fn apply(&self, v: &IndicatorVector) -> IndicatorVector {
        let mut out = IndicatorVector::default();
        for &(x, y) in &self.entries {
            let c = v.get(y);
            if c > 0 {
                out.add(x, c);
            }
        }
        out
    }
}

pub fn build_step_operator(ctx: &WalkContext, constraint: MarkovConstraint, query: Span) -> StepOperator {
    let entries = (0..ctx.graph.len())
        .filter(|&i| ctx.satisfies(i, &constraint, query))
        .map(|i| {
            let f = ctx.graph.fact(i);
            (f.object, f.subject)
        })
        .collect();
    StepOperator { constraint, query, entries }
}

/// Sparse non-negative count vector over entities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndicatorVector(BTreeMap<EntityId, u64>);

impl IndicatorVector {
    pub fn one_hot(e: EntityId) -> Self {
        IndicatorVector(BTreeMap::from([(e, 1)]))
    }

    pub fn get(&self, e: EntityId) -> u64 {
        self.0.get(&e).copied().unwrap_or(0)
    }

    fn add(&mut self, e: EntityId, c: u64) {
        let slot = self.0.entry(e).or_insert(0);
        *slot = slot.saturating_add(c);
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Entities with a positive entry, ascending.
    pub fn support(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.0.keys().copied()
    }
}

/// `v_1 = onehot(start)`, `v_{i+1} = M_i v_i`. Returns `v_1 .. v_{l+1}`.
pub fn propagate(operators: &[StepOperator], start: EntityId) -> Vec<IndicatorVector> {
    let mut out = vec![IndicatorVector::one_hot(start)];
    for op in operators {
        let next = op.apply(out.last().unwrap());
        out.push(next);
    }
    out
}

/// Same vectors as [`propagate`] over the operators of `constraints`, but
/// only touches facts leaving entities that are already reachable.
pub fn propagate_frontier(
    ctx: &WalkContext,
    constraints: &[MarkovConstraint],
    query: Span,
    start: EntityId,
) -> Vec<IndicatorVector> {
    let mut out = vec![IndicatorVector::one_hot(start)];
    for c in constraints {
        let mut next = IndicatorVector::default();
        for (&y, &count) in &out.last().unwrap().0 {
            for &i in ctx.graph.facts_from_with(y, c.predicate) {
                if ctx.satisfies(i, c, query) {
                    next.add(ctx.graph.fact(i).object, count);
                }
            }
        }
        out.push(next);
    }
    out
}

struct Backtrack<'c, 'a> {
    ctx: &'c WalkContext<'a>,
    constraints: &'c [MarkovConstraint],
    query: Span,
    indicators: &'c [IndicatorVector],
    cap: Option<usize>,
    suffix: Vec<usize>,
    out: WalkSet,
}

impl Backtrack<'_, '_> {
    /// Extends the suffix backwards from entity `x`, which sits at position
    /// `pos + 1` of the walk (0-based), i.e. after `pos` steps.
    fn visit(&mut self, x: EntityId, pos: usize) -> bool {
        if pos == 0 {
            if self.cap.is_some_and(|c| self.out.walks.len() >= c) {
                self.out.truncated = true;
                return false;
            }
            let mut facts = self.suffix.clone();
            facts.reverse();
            self.out.walks.push(Walk { facts });
            return true;
        }
        let c = self.constraints[pos - 1];
        let graph = self.ctx.graph;
        let reverse = graph.inverse(c.predicate);
        for &back in graph.facts_from_with(x, reverse) {
            let forward = graph.inverse_index(back);
            let y = graph.fact(forward).subject;
            if self.indicators[pos - 1].get(y) == 0 || !self.ctx.satisfies(forward, &c, self.query) {
                continue;
            }
            let edge = graph.fact(forward).edge_id;
            if self.suffix.iter().any(|&f| graph.fact(f).edge_id == edge) {
                continue;
            }
            self.suffix.push(forward);
            let keep_going = self.visit(y, pos - 1);
            self.suffix.pop();
            if !keep_going {
                return false;
            }
        }
        true
    }
}

fn backtrack_walks(
    ctx: &WalkContext,
    constraints: &[MarkovConstraint],
    query: Span,
    indicators: &[IndicatorVector],
    target: Option<EntityId>,
    cap: Option<usize>,
) -> WalkSet {
    let l = constraints.len();
    let last = &indicators[l];
    let endpoints: Vec<EntityId> = match target {
        Some(t) if last.get(t) > 0 => vec![t],
        Some(_) => Vec::new(),
        None => last.support().collect(),
    };
    let mut bt = Backtrack {
        ctx,
        constraints,
        query,
        indicators,
        cap,
        suffix: Vec::with_capacity(l),
        out: WalkSet::default(),
    };
    for e in endpoints {
        if !bt.visit(e, l) {
            break;
        }
    }
    bt.out
}

/// Every walk from `start` (ending at `target` when given) that satisfies
/// the operators' step constraints and never reuses an edge. With a cap the
/// result stops at `cap` walks and is flagged as truncated.
pub fn enumerate_walks(
    ctx: &WalkContext,
    operators: &[StepOperator],
    start: EntityId,
    target: Option<EntityId>,
    cap: Option<usize>,
) -> WalkSet {
    if operators.is_empty() {
        return WalkSet::default();
    }
    let query = operators[0].query;
    let constraints: Vec<_> = operators.iter().map(|o| o.constraint).collect();
    let indicators = propagate(operators, start);
    backtrack_walks(ctx, &constraints, query, &indicators, target, cap)
}

/// [`enumerate_walks`] without materialising full operators.
pub fn constrained_walks(
    ctx: &WalkContext,
    constraints: &[MarkovConstraint],
    query: Span,
    start: EntityId,
    target: Option<EntityId>,
    cap: Option<usize>,
) -> WalkSet {
    if constraints.is_empty() {
        return WalkSet::default();
    }
    let indicators = propagate_frontier(ctx, constraints, query, start);
    backtrack_walks(ctx, constraints, query, &indicators, target, cap)
}

/// Keeps the walks whose body intervals satisfy every pairwise relation.
/// `pairs` is keyed by 1-based positions and must cover all `j < k <= l`.
pub fn filter_non_markovian(
    timeline: &Timeline,
    walks: Vec<Walk>,
    pairs: &BTreeMap<(usize, usize), TemporalRelation>,
) -> Result<Vec<Walk>> {
    let Some(len) = walks.first().map(Walk::len) else {
        return Ok(walks);
    };
    let mut required = Vec::new();
    for (j, k) in body_pairs(len) {
        match pairs.get(&(j + 1, k + 1)) {
            Some(&tr) => required.push((j, k, tr)),
            None => return Err(TilpError::MissingPairConstraint(j + 1, k + 1)),
        }
    }
    Ok(walks
        .into_iter()
        .filter(|w| {
            let spans: Option<Vec<Span>> = w.facts.iter().map(|&f| timeline.span(f)).collect();
            spans.is_some_and(|s| required.iter().all(|&(j, k, tr)| s[j].relation_to(&s[k]) == tr))
        })
        .collect())
}

/// Every walk of length `1..=max_len` from `start` to `end` over facts with
/// resolved intervals, with no edge used twice. Unconstrained; this is the
/// discovery pass that rule templates are extracted from.
pub fn find_all_paths(
    ctx: &WalkContext,
    start: EntityId,
    end: EntityId,
    max_len: usize,
    cap: Option<usize>,
) -> WalkSet {
    let graph = ctx.graph;
    // hop distance to `end`; the graph is symmetric, so forward BFS suffices
    let mut dist: BTreeMap<EntityId, usize> = BTreeMap::from([(end, 0)]);
    let mut queue = VecDeque::from([end]);
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if d + 1 > max_len {
            continue;
        }
        for &i in graph.facts_from(x) {
            if !ctx.usable(i) {
                continue;
            }
            let y = graph.fact(i).object;
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(y) {
                e.insert(d + 1);
                queue.push_back(y);
            }
        }
    }
    let mut out = WalkSet::default();
    if !dist.contains_key(&start) {
        return out;
    }
    let mut path = Vec::with_capacity(max_len);
    let mut used: HashSet<EdgeId> = HashSet::new();
    dfs_paths(ctx, &dist, start, end, max_len, cap, &mut path, &mut used, &mut out);
    out.walks.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.facts.cmp(&b.facts)));
    out
}

#[allow(clippy::too_many_arguments)]
fn dfs_paths(
    ctx: &WalkContext,
    dist: &BTreeMap<EntityId, usize>,
    x: EntityId,
    end: EntityId,
    max_len: usize,
    cap: Option<usize>,
    path: &mut Vec<usize>,
    used: &mut HashSet<EdgeId>,
    out: &mut WalkSet,
) -> bool {
    if !path.is_empty() && x == end {
        if cap.is_some_and(|c| out.walks.len() >= c) {
            out.truncated = true;
            return false;
        }
        out.walks.push(Walk { facts: path.clone() });
    }
    if path.len() == max_len {
        return true;
    }
    for &i in ctx.graph.facts_from(x) {
        if !ctx.usable(i) {
            continue;
        }
        let f = ctx.graph.fact(i);
        match dist.get(&f.object) {
            Some(&d) if path.len() + 1 + d <= max_len => {}
            _ => continue,
        }
        if !used.insert(f.edge_id) {
            continue;
        }
        path.push(i);
        let go_on = dfs_paths(ctx, dist, f.object, end, max_len, cap, path, used, out);
        path.pop();
        used.remove(&f.edge_id);
        if !go_on {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Quadruple;
    use crate::interval::Interval;
    use crate::interval::TemporalRelation::*;

    fn graph(quads: &[Quadruple]) -> (TemporalGraph, Timeline) {
        let g = TemporalGraph::from_quadruples(quads);
        let t = Timeline::strict(&g);
        (g, t)
    }

    fn mc(p: u32, tr: TemporalRelation) -> MarkovConstraint {
        MarkovConstraint { predicate: RelationId(p), tr_to_query: tr }
    }

    #[test]
    fn single_edge_operator() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000))]);
        let ctx = WalkContext::new(&g, &t);
        let op = build_step_operator(&ctx, mc(0, Before), Span::stamp(2005));
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(EntityId(1), EntityId(0)), 1);
        let op = build_step_operator(&ctx, mc(0, Before), Span::stamp(1990));
        assert_eq!(op.nnz(), 0);
    }

    #[test]
    fn zero_operator_absorbs() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000)), Quadruple::new(1, 1, 2, Interval::stamp(2000))]);
        let ctx = WalkContext::new(&g, &t);
        let q = Span::stamp(2005);
        let ops = vec![build_step_operator(&ctx, mc(0, After), q), build_step_operator(&ctx, mc(1, Before), q)];
        let v = propagate(&ops, EntityId(0));
        assert!(v[1].is_zero() && v[2].is_zero());
    }

    #[test]
    fn self_loops_keep_the_indicator_one_hot() {
        let quads: Vec<_> = (0..3).map(|e| Quadruple::new(e, 0, e, Interval::stamp(2000))).collect();
        let (g, t) = graph(&quads);
        let ctx = WalkContext::new(&g, &t);
        let q = Span::stamp(2000);
        let ops = vec![build_step_operator(&ctx, mc(0, Touching), q); 3];
        for v in propagate(&ops, EntityId(1)) {
            assert_eq!(v.support().collect::<Vec<_>>(), vec![EntityId(1)]);
            assert_eq!(v.get(EntityId(1)), 1);
        }
    }

    #[test]
    fn unique_chain() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000)), Quadruple::new(1, 1, 2, Interval::stamp(2001))]);
        let ctx = WalkContext::new(&g, &t);
        let q = Span::stamp(2005);
        let ops: Vec<_> = [mc(0, Before), mc(1, Before)].iter().map(|c| build_step_operator(&ctx, *c, q)).collect();
        let ws = enumerate_walks(&ctx, &ops, EntityId(0), None, None);
        assert_eq!(ws.walks, vec![Walk::new(vec![0, 2])]);
        assert!(!ws.truncated);
    }

    fn diamond() -> Vec<Quadruple> {
        // a=0 -> b=1 -> d=3 and a -> c=2 -> d, all stamps in 2000
        vec![
            Quadruple::new(0, 0, 1, Interval::stamp(2000)),
            Quadruple::new(0, 0, 2, Interval::stamp(2000)),
            Quadruple::new(1, 1, 3, Interval::stamp(2000)),
            Quadruple::new(2, 1, 3, Interval::stamp(2000)),
        ]
    }

    #[test]
    fn diamond_has_two_walks() {
        let (g, t) = graph(&diamond());
        let ctx = WalkContext::new(&g, &t);
        let cons = [mc(0, Before), mc(1, Before)];
        let ws = constrained_walks(&ctx, &cons, Span::stamp(2010), EntityId(0), Some(EntityId(3)), None);
        assert_eq!(ws.walks.len(), 2);
        // both paths have touching body intervals, so requiring before empties the set
        let pairs = BTreeMap::from([((1, 2), Before)]);
        assert!(filter_non_markovian(&t, ws.walks.clone(), &pairs).unwrap().is_empty());
        let pairs = BTreeMap::from([((1, 2), Touching)]);
        assert_eq!(filter_non_markovian(&t, ws.walks, &pairs).unwrap().len(), 2);
    }

    #[test]
    fn cap_sets_the_truncated_flag() {
        let (g, t) = graph(&diamond());
        let ctx = WalkContext::new(&g, &t);
        let ws = constrained_walks(&ctx, &[mc(0, Before), mc(1, Before)], Span::stamp(2010), EntityId(0), None, Some(1));
        assert_eq!(ws.walks.len(), 1);
        assert!(ws.truncated);
    }

    #[test]
    fn repeated_edge_walks_are_removed() {
        // the only 2-step way back to 0 reuses the single edge
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000))]);
        let ctx = WalkContext::new(&g, &t);
        let ws = constrained_walks(&ctx, &[mc(0, Before), mc(1, Before)], Span::stamp(2010), EntityId(0), None, None);
        assert!(ws.walks.is_empty());
        assert!(find_all_paths(&ctx, EntityId(0), EntityId(0), 2, None).walks.is_empty());
    }

    #[test]
    fn missing_pair_is_a_contract_violation() {
        let (g, t) = graph(&diamond());
        let ctx = WalkContext::new(&g, &t);
        let ws = constrained_walks(&ctx, &[mc(0, Before), mc(1, Before)], Span::stamp(2010), EntityId(0), None, None);
        let err = filter_non_markovian(&t, ws.walks, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TilpError::MissingPairConstraint(1, 2)));
    }

    #[test]
    fn single_step_filter_is_vacuous() {
        let (g, t) = graph(&diamond());
        let ctx = WalkContext::new(&g, &t);
        let ws = constrained_walks(&ctx, &[mc(0, Before)], Span::stamp(2010), EntityId(0), None, None);
        assert_eq!(filter_non_markovian(&t, ws.walks.clone(), &BTreeMap::new()).unwrap(), ws.walks);
    }

    #[test]
    fn length_two_cycle_back_to_start() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000)), Quadruple::new(1, 1, 0, Interval::stamp(2001))]);
        let ctx = WalkContext::new(&g, &t);
        let ws = find_all_paths(&ctx, EntityId(0), EntityId(0), 2, None);
        // the cycle can be walked forwards or backwards over the inverses
        assert_eq!(ws.walks.len(), 2);
        for w in &ws.walks {
            assert_eq!(w.entities(&g), vec![EntityId(0), EntityId(1), EntityId(0)]);
        }
    }

    #[test]
    fn disconnected_pair_has_no_paths() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000)), Quadruple::new(2, 0, 3, Interval::stamp(2000))]);
        let ctx = WalkContext::new(&g, &t);
        assert!(find_all_paths(&ctx, EntityId(0), EntityId(3), 5, None).walks.is_empty());
    }

    #[test]
    fn query_edge_is_excluded_from_discovery() {
        let (g, t) = graph(&[Quadruple::new(0, 0, 1, Interval::stamp(2000))]);
        let ctx = WalkContext::new(&g, &t).excluding(Some(EdgeId(0)));
        assert!(find_all_paths(&ctx, EntityId(0), EntityId(1), 3, None).walks.is_empty());
    }
}
