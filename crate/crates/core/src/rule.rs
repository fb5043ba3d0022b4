//! Chain-shaped temporal rule templates and rule sets.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::Vocabulary;
use crate::error::{Result, TilpError};
use crate::graph::{RelationId, TemporalGraph};
use crate::interval::{Span, TemporalRelation};
use crate::timeline::Timeline;
use crate::walk::{MarkovConstraint, Walk};

/// `head(E1, E_{l+1}, I_{l+1}) <- ∧ P_i(E_i, E_{i+1}, I_i) ∧ TR(I_j, I_k)`.
///
/// `tr_query[i]` relates body interval `i` to the query interval and
/// `tr_pairs` holds the relation between body intervals `j < k`, flattened
/// row by row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub head: RelationId,
    pub predicates: Vec<RelationId>,
    pub tr_query: Vec<TemporalRelation>,
    pub tr_pairs: Vec<TemporalRelation>,
}

/// Position of body pair `(j, k)` (0-based, `j < k < len`) in the flattened
/// pair list.
pub fn pair_index(j: usize, k: usize, len: usize) -> usize {
    debug_assert!(j < k && k < len);
    j * (2 * len - j - 1) / 2 + (k - j - 1)
}

pub fn pair_count(len: usize) -> usize {
    len * len.saturating_sub(1) / 2
}

/// All body pairs `(j, k)` with `j < k < len`, in flattened order.
pub fn body_pairs(len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |j| (j + 1..len).map(move |k| (j, k)))
}

impl RuleTemplate {
    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn pair(&self, j: usize, k: usize) -> TemporalRelation {
        self.tr_pairs[pair_index(j, k, self.len())]
    }

    pub fn markov_constraints(&self) -> Vec<MarkovConstraint> {
        self.predicates
            .iter()
            .zip(&self.tr_query)
            .map(|(&predicate, &tr_to_query)| MarkovConstraint { predicate, tr_to_query })
            .collect()
    }

    /// Pairwise constraints keyed by 1-based body positions.
    pub fn pair_constraints(&self) -> BTreeMap<(usize, usize), TemporalRelation> {
        body_pairs(self.len())
            .zip(&self.tr_pairs)
            .map(|((j, k), &tr)| ((j + 1, k + 1), tr))
            .collect()
    }

    /// Whether `walk` is a grounding of this rule for a query at `query`.
    pub fn accepts(&self, graph: &TemporalGraph, timeline: &Timeline, walk: &Walk, query: Span) -> bool {
        if walk.len() != self.len() {
            return false;
        }
        let spans: Option<Vec<Span>> = walk.facts.iter().map(|&f| timeline.span(f)).collect();
        let Some(spans) = spans else { return false };
        walk.facts.iter().enumerate().all(|(i, &f)| {
            graph.fact(f).relation == self.predicates[i] && spans[i].relation_to(&query) == self.tr_query[i]
        }) && body_pairs(self.len()).all(|(j, k)| spans[j].relation_to(&spans[k]) == self.pair(j, k))
    }

    /// Renders the rule in `head(E1,E3,I3) <- p(E1,E2,I1) ∧ ... ∧ before(I1,I2)` form.
    pub fn display(&self, vocab: &Vocabulary) -> String {
        let l = self.len();
        let mut s = format!("{}(E1,E{},I{}) <- ", vocab.relation_name(self.head), l + 1, l + 1);
        let mut atoms: Vec<String> = self
            .predicates
            .iter()
            .enumerate()
            .map(|(i, &p)| format!("{}(E{},E{},I{})", vocab.relation_name(p), i + 1, i + 2, i + 1))
            .collect();
        for (j, k) in body_pairs(l) {
            atoms.push(format!("{}(I{},I{})", self.pair(j, k), j + 1, k + 1));
        }
        for (i, tr) in self.tr_query.iter().enumerate() {
            atoms.push(format!("{}(I{},I{})", tr, i + 1, l + 1));
        }
        let _ = write!(s, "{}", atoms.join(" ∧ "));
        s
    }
}

/// Extracts the rule template grounded by `walk` for a head fact at `query`.
pub fn extract_rule(
    graph: &TemporalGraph,
    timeline: &Timeline,
    walk: &Walk,
    head: RelationId,
    query: Span,
) -> Result<RuleTemplate> {
    let mut spans = Vec::with_capacity(walk.len());
    for &f in &walk.facts {
        match timeline.span(f) {
            Some(s) => spans.push(s),
            None => return Err(TilpError::UnresolvedInterval(graph.fact(f).interval)),
        }
    }
    Ok(RuleTemplate {
        head,
        predicates: walk.facts.iter().map(|&f| graph.fact(f).relation).collect(),
        tr_query: spans.iter().map(|s| s.relation_to(&query)).collect(),
        tr_pairs: body_pairs(spans.len()).map(|(j, k)| spans[j].relation_to(&spans[k])).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedRule {
    pub template: RuleTemplate,
    /// Number of training examples in which the template was found.
    pub discovery_count: usize,
}

/// Deduplicated rule templates with discovery counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<LearnedRule>", into = "Vec<LearnedRule>")]
pub struct RuleSet {
    rules: Vec<LearnedRule>,
    index: HashMap<RuleTemplate, usize>,
}

#[derive(Serialize, Deserialize)]
struct RuleLine {
    head: u32,
    length: usize,
    predicates: Vec<u32>,
    tr_query: Vec<TemporalRelation>,
    tr_pairs: BTreeMap<String, TemporalRelation>,
    discovery_count: usize,
}

impl From<Vec<LearnedRule>> for RuleSet {
    fn from(rules: Vec<LearnedRule>) -> Self {
        let mut set = RuleSet::new();
        for r in rules {
            set.insert(r.template, r.discovery_count);
        }
        set
    }
}

impl From<RuleSet> for Vec<LearnedRule> {
    fn from(set: RuleSet) -> Self {
        set.rules
    }
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, template: RuleTemplate, count: usize) -> usize {
        if let Some(&i) = self.index.get(&template) {
            self.rules[i].discovery_count += count;
            return i;
        }
        let i = self.rules.len();
        self.index.insert(template.clone(), i);
        self.rules.push(LearnedRule { template, discovery_count: count });
        i
    }

    pub fn rules(&self) -> &[LearnedRule] {
        &self.rules
    }

    pub fn get(&self, i: usize) -> &LearnedRule {
        &self.rules[i]
    }

    pub fn position(&self, template: &RuleTemplate) -> Option<usize> {
        self.index.get(template).copied()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Indices of rules with the given head, in insertion order.
    pub fn for_head(&self, head: RelationId) -> Vec<usize> {
        (0..self.rules.len()).filter(|&i| self.rules[i].template.head == head).collect()
    }

    pub fn heads(&self) -> Vec<RelationId> {
        let mut h: Vec<_> = self.rules.iter().map(|r| r.template.head).collect();
        h.sort();
        h.dedup();
        h
    }

    /// Keeps the `per_head` most frequently discovered rules for every head
    /// (ties broken by template order) and drops rules seen fewer than
    /// `min_support` times.
    pub fn select(&self, per_head: usize, min_support: usize) -> RuleSet {
        let mut by_head: BTreeMap<RelationId, Vec<&LearnedRule>> = BTreeMap::new();
        for r in &self.rules {
            if r.discovery_count >= min_support {
                by_head.entry(r.template.head).or_default().push(r);
            }
        }
        let mut out = RuleSet::new();
        for (_, mut rules) in by_head {
            rules.sort_by(|a, b| b.discovery_count.cmp(&a.discovery_count).then(a.template.cmp(&b.template)));
            for r in rules.into_iter().take(per_head) {
                out.insert(r.template.clone(), r.discovery_count);
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rules {
            let t = &r.template;
            let line = RuleLine {
                head: t.head.0,
                length: t.len(),
                predicates: t.predicates.iter().map(|p| p.0).collect(),
                tr_query: t.tr_query.clone(),
                tr_pairs: t
                    .pair_constraints()
                    .into_iter()
                    .map(|((j, k), tr)| (format!("{j},{k}"), tr))
                    .collect(),
                discovery_count: r.discovery_count,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<RuleSet> {
        let mut set = RuleSet::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RuleLine = serde_json::from_str(&line)?;
            let contract = |m: String| TilpError::Parse { path: "<rules>".into(), line: n + 1, message: m };
            if parsed.predicates.len() != parsed.length || parsed.tr_query.len() != parsed.length {
                return Err(contract("length does not match body".into()));
            }
            let mut tr_pairs = Vec::with_capacity(pair_count(parsed.length));
            for (j, k) in body_pairs(parsed.length) {
                let key = format!("{},{}", j + 1, k + 1);
                match parsed.tr_pairs.get(&key) {
                    Some(&tr) => tr_pairs.push(tr),
                    None => return Err(contract(format!("missing pair {key}"))),
                }
            }
            set.insert(
                RuleTemplate {
                    head: RelationId(parsed.head),
                    predicates: parsed.predicates.into_iter().map(RelationId).collect(),
                    tr_query: parsed.tr_query,
                    tr_pairs,
                },
                parsed.discovery_count,
            );
        }
        Ok(set)
    }
}
