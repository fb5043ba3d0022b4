//! Rule application, candidate scoring, filtered ranking and metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBundle, AttentionParams};
use crate::dataset::Vocabulary;
use crate::error::Result;
use crate::graph::{EntityId, RelationId, TemporalGraph};
use crate::interval::TemporalRelation;
use crate::query::Query;
use crate::rule::{RuleSet, RuleTemplate};
use crate::tfm::evidence::{collect_evidence, note_closest, ClosestStarts};
use crate::tfm::params::DistributionParams;
use crate::tfm::score::{candidate_features, CandidateFeatures, TfmWeights};
use crate::timeline::Timeline;
use crate::walk::{constrained_walks, filter_non_markovian, Walk, WalkContext};

/// Walks of one rule applied to one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleApplication {
    /// Index into the rule set.
    pub rule: usize,
    /// Successful walks after pairwise filtering.
    pub total: usize,
    pub counts: BTreeMap<EntityId, usize>,
    /// Up to `k` walks per candidate, kept for explanations.
    pub groundings: BTreeMap<EntityId, Vec<Walk>>,
    pub truncated: bool,
}

impl RuleApplication {
    /// Fraction of the rule's walks that end at `c`.
    pub fn arriving_rate(&self, c: EntityId) -> f64 {
        match self.counts.get(&c) {
            Some(&n) if self.total > 0 => n as f64 / self.total as f64,
            _ => 0.0,
        }
    }

    pub fn arrivals(&self) -> impl Iterator<Item = (EntityId, f64)> + '_ {
        let n = self.total as f64;
        self.counts.iter().map(move |(&c, &k)| (c, k as f64 / n))
    }
}

/// Everything rule application yields for one query.
#[derive(Debug, Clone, Default)]
pub struct QueryApplications {
    pub applications: Vec<RuleApplication>,
    /// Closest walk start year per relation, and the number of distinct
    /// walks, for every candidate reached.
    pub walk_evidence: BTreeMap<EntityId, (ClosestStarts, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApplyConfig {
    /// Per-rule cap on enumerated walks; `None` is exhaustive.
    pub walk_cap: Option<usize>,
    pub groundings_per_candidate: usize,
}

impl Default for ApplyConfig {
    fn default() -> Self {
        ApplyConfig { walk_cap: None, groundings_per_candidate: 1 }
    }
}

/// Applies one template to `query`.
pub fn apply_rule(
    graph: &TemporalGraph,
    timeline: &Timeline,
    template: &RuleTemplate,
    rule: usize,
    query: &Query,
    config: &ApplyConfig,
) -> Result<RuleApplication> {
    let ctx = WalkContext::new(graph, timeline).excluding(query.excluded_edge);
    Ok(run_rule(&ctx, template, rule, query, config)?.0)
}

fn run_rule(
    ctx: &WalkContext,
    template: &RuleTemplate,
    rule: usize,
    query: &Query,
    config: &ApplyConfig,
) -> Result<(RuleApplication, Vec<Walk>)> {
    let found = constrained_walks(ctx, &template.markov_constraints(), query.span, query.subject, None, config.walk_cap);
    let walks = filter_non_markovian(ctx.timeline, found.walks, &template.pair_constraints())?;
    let mut app = RuleApplication {
        rule,
        total: walks.len(),
        counts: BTreeMap::new(),
        groundings: BTreeMap::new(),
        truncated: found.truncated,
    };
    for w in &walks {
        let end = w.end(ctx.graph);
        *app.counts.entry(end).or_default() += 1;
        let g = app.groundings.entry(end).or_default();
        if g.len() < config.groundings_per_candidate {
            g.push(w.clone());
        }
    }
    Ok((app, walks))
}

/// Applies every rule whose head is the query relation. Rules without a
/// successful walk are left out.
pub fn apply_rules(
    graph: &TemporalGraph,
    timeline: &Timeline,
    rules: &RuleSet,
    query: &Query,
    config: &ApplyConfig,
) -> Result<QueryApplications> {
    let ctx = WalkContext::new(graph, timeline).excluding(query.excluded_edge);
    let mut out = QueryApplications::default();
    let mut seen: HashMap<EntityId, HashSet<Vec<usize>>> = HashMap::new();
    for i in rules.for_head(query.relation) {
        let (app, walks) = run_rule(&ctx, &rules.get(i).template, i, query, config)?;
        if walks.is_empty() {
            continue;
        }
        for w in walks {
            let end = w.end(graph);
            let ev = out.walk_evidence.entry(end).or_default();
            if !seen.entry(end).or_default().insert(w.facts.clone()) {
                continue;
            }
            ev.1 += 1;
            for &f in &w.facts {
                if let Some(span) = timeline.span(f) {
                    note_closest(&mut ev.0, graph.fact(f).relation, span.start, query.span.start);
                }
            }
        }
        out.applications.push(app);
    }
    Ok(out)
}

/// Rule score per candidate: arriving rate times rule confidence, summed
/// over rules.
pub fn phi_tlr(apps: &[RuleApplication], bundle: &AttentionBundle, rules: &RuleSet) -> BTreeMap<EntityId, f64> {
    let mut out = BTreeMap::new();
    for app in apps {
        let s = bundle.rule_score(&rules.get(app.rule).template);
        for (c, a) in app.arrivals() {
            *out.entry(c).or_insert(0.0) += a * s;
        }
    }
    out
}

/// `γ_rules·rules + γ_tfm·tfm` over the union of both maps.
pub fn phi_tilp(
    rule_scores: &BTreeMap<EntityId, f64>,
    tfm_scores: &BTreeMap<EntityId, f64>,
    gamma_rules: f64,
    gamma_tfm: f64,
) -> BTreeMap<EntityId, f64> {
    let keys: BTreeSet<EntityId> = rule_scores.keys().chain(tfm_scores.keys()).copied().collect();
    keys.into_iter()
        .map(|c| {
            let r = rule_scores.get(&c).copied().unwrap_or(0.0);
            let t = tfm_scores.get(&c).copied().unwrap_or(0.0);
            (c, gamma_rules * r + gamma_tfm * t)
        })
        .collect()
}

/// Candidates other than `truth` that already form a known fact
/// `(subject, relation, c, I')` with `I'` touching the query interval.
pub fn conflicting_candidates(
    known: &TemporalGraph,
    known_timeline: &Timeline,
    query: &Query,
    truth: EntityId,
) -> BTreeSet<EntityId> {
    known
        .facts_from_with(query.subject, query.relation)
        .iter()
        .filter(|&&i| {
            known_timeline
                .span(i)
                .is_some_and(|s| s.relation_to(&query.span) == TemporalRelation::Touching)
        })
        .map(|&i| known.fact(i).object)
        .filter(|&c| c != truth)
        .collect()
}

/// Drops conflicting candidates; the truth always survives.
pub fn time_aware_filter(
    known: &TemporalGraph,
    known_timeline: &Timeline,
    query: &Query,
    truth: EntityId,
    candidates: &[EntityId],
) -> Vec<EntityId> {
    let drop = conflicting_candidates(known, known_timeline, query, truth);
    candidates.iter().copied().filter(|c| !drop.contains(c)).collect()
}

/// Mean rank of the block of entries tied with `target`, 1-based.
pub fn tied_rank(scores: &[f64], target: f64) -> f64 {
    let above = scores.iter().filter(|&&s| s > target).count();
    let tied = scores.iter().filter(|&&s| s == target).count().max(1);
    above as f64 + (tied as f64 + 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hit1: f64,
    pub hit10: f64,
    pub queries: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        if ranks.is_empty() {
            return Metrics::default();
        }
        let n = ranks.len() as f64;
        Metrics {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hit1: ranks.iter().filter(|&&r| r <= 1.0).count() as f64 / n,
            hit10: ranks.iter().filter(|&&r| r <= 10.0).count() as f64 / n,
            queries: ranks.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub apply: ApplyConfig,
    /// Score every entity instead of the reachable ones.
    pub exhaustive: bool,
    /// Candidates listed per answer.
    pub list_top: usize,
    /// Rules shown per explained candidate.
    pub explain_rules: usize,
    /// Candidates that receive an explanation.
    pub explain_candidates: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            apply: ApplyConfig::default(),
            exhaustive: false,
            list_top: 10,
            explain_rules: 3,
            explain_candidates: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub entity: EntityId,
    pub rule_score: f64,
    pub tfm_score: f64,
    pub score: f64,
    pub features: Option<CandidateFeatures>,
}

#[derive(Debug, Clone)]
pub struct QueryScores {
    /// Sorted by score, then entity id.
    pub candidates: Vec<ScoredCandidate>,
    pub applications: QueryApplications,
}

/// Temporal-feature parameters used at scoring time.
#[derive(Debug, Clone, Copy)]
pub struct TemporalScoring<'a> {
    pub distributions: &'a DistributionParams,
    pub weights: &'a TfmWeights,
}

/// Scores queries against a fixed background graph and frozen parameters.
pub struct Scorer<'a> {
    pub graph: &'a TemporalGraph,
    pub timeline: &'a Timeline,
    pub rules: &'a RuleSet,
    pub temporal: Option<TemporalScoring<'a>>,
    pub config: RankConfig,
    bundles: HashMap<RelationId, AttentionBundle>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        graph: &'a TemporalGraph,
        timeline: &'a Timeline,
        rules: &'a RuleSet,
        attention: &AttentionParams,
        temporal: Option<TemporalScoring<'a>>,
        config: RankConfig,
    ) -> Self {
        let bundles = rules.heads().into_iter().map(|h| (h, attention.forward(h))).collect();
        Scorer { graph, timeline, rules, temporal, config, bundles }
    }

    pub fn bundle(&self, head: RelationId) -> Option<&AttentionBundle> {
        self.bundles.get(&head)
    }

    /// Rule confidence of rule `i` under its head's attention.
    pub fn rule_confidence(&self, i: usize) -> f64 {
        let t = &self.rules.get(i).template;
        self.bundles.get(&t.head).map_or(0.0, |b| b.rule_score(t))
    }

    pub fn score_query(&self, query: &Query) -> Result<QueryScores> {
        let apps = apply_rules(self.graph, self.timeline, self.rules, query, &self.config.apply)?;
        Ok(self.score_applications(query, apps, &[]))
    }

    /// Scores the candidate universe of `query` from precomputed rule
    /// applications; `extra` entities are scored even when unreached.
    pub fn score_applications(&self, query: &Query, apps: QueryApplications, extra: &[EntityId]) -> QueryScores {
        let tlr = match self.bundles.get(&query.relation) {
            Some(b) => phi_tlr(&apps.applications, b, self.rules),
            None => BTreeMap::new(),
        };
        let mut universe: BTreeSet<EntityId> = tlr.keys().copied().collect();
        universe.extend(extra.iter().copied());
        if self.config.exhaustive {
            universe.extend((0..self.graph.entity_count() as u32).map(EntityId));
        } else if self.temporal.is_some() {
            for &i in self.graph.facts_from(query.subject) {
                let f = self.graph.fact(i);
                if Some(f.edge_id) != query.excluded_edge {
                    universe.insert(f.object);
                }
            }
        }
        let mut candidates: Vec<ScoredCandidate> = universe
            .into_iter()
            .map(|c| {
                let rule_score = tlr.get(&c).copied().unwrap_or(0.0);
                match &self.temporal {
                    Some(t) => {
                        let walk = apps.walk_evidence.get(&c).map(|(m, n)| (m, *n));
                        let ev = collect_evidence(self.graph, self.timeline, query, c, walk);
                        let features = candidate_features(t.distributions, query, &ev);
                        let tfm_score = t.weights.phi_tfm(&features);
                        ScoredCandidate {
                            entity: c,
                            rule_score,
                            tfm_score,
                            score: t.weights.gamma_rules() * rule_score + t.weights.gamma_tfm() * tfm_score,
                            features: Some(features),
                        }
                    }
                    None => ScoredCandidate { entity: c, rule_score, tfm_score: 0.0, score: rule_score, features: None },
                }
            })
            .collect();
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
        QueryScores { candidates, applications: apps }
    }

    /// Ranks the answers to `query` after time-aware filtering against
    /// `known`, and locates `truth` when it is given.
    pub fn rank(
        &self,
        query: &Query,
        truth: Option<EntityId>,
        known: &TemporalGraph,
        known_timeline: &Timeline,
        vocab: &Vocabulary,
    ) -> Result<RankedAnswer> {
        let scores = self.score_query(query)?;
        let drop = match truth {
            Some(t) => conflicting_candidates(known, known_timeline, query, t),
            None => BTreeSet::new(),
        };
        let kept: Vec<&ScoredCandidate> = scores.candidates.iter().filter(|c| !drop.contains(&c.entity)).collect();
        let values: Vec<f64> = kept.iter().map(|c| c.score).collect();
        let truth_rank = truth.map(|t| match kept.iter().find(|c| c.entity == t) {
            Some(c) => tied_rank(&values, c.score),
            None => {
                // unscored block: every entity neither scored nor filtered
                let scored: BTreeSet<EntityId> = scores.candidates.iter().map(|c| c.entity).collect();
                let filtered_unscored = drop.iter().filter(|e| !scored.contains(e)).count();
                let block = self.graph.entity_count().max(t.index() + 1) - scored.len() - filtered_unscored;
                kept.len() as f64 + (block as f64 + 1.0) / 2.0
            }
        });
        let listed: Vec<RankedCandidate> = kept
            .iter()
            .take(self.config.list_top)
            .map(|c| RankedCandidate {
                entity: c.entity,
                name: vocab.entity_name(c.entity).to_string(),
                score: c.score,
                rank: tied_rank(&values, c.score),
            })
            .collect();
        let explanations = kept
            .iter()
            .take(self.config.explain_candidates)
            .map(|c| self.explain(&scores.applications, query, c.entity, vocab))
            .collect();
        Ok(RankedAnswer {
            query: render_query(query, vocab),
            truth: truth.map(|t| vocab.entity_name(t)),
            candidates: listed,
            truth_rank,
            explanations,
        })
    }

    /// Top rules by contribution for `candidate`, each with one grounding.
    pub fn explain(&self, apps: &QueryApplications, query: &Query, candidate: EntityId, vocab: &Vocabulary) -> Explanation {
        let mut parts: Vec<(f64, f64, &RuleApplication)> = apps
            .applications
            .iter()
            .filter(|a| a.counts.contains_key(&candidate))
            .map(|a| {
                let conf = self.rule_confidence(a.rule);
                (a.arriving_rate(candidate) * conf, conf, a)
            })
            .collect();
        parts.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.2.rule.cmp(&y.2.rule)));
        let rules = parts
            .into_iter()
            .take(self.config.explain_rules)
            .map(|(contribution, confidence, a)| {
                let template = &self.rules.get(a.rule).template;
                let grounding = a
                    .groundings
                    .get(&candidate)
                    .and_then(|g| g.first())
                    .map(|w| render_grounding(self.graph, w, query, vocab))
                    .unwrap_or_default();
                RuleExplanation {
                    rule: template.display(vocab),
                    confidence,
                    arriving_rate: a.arriving_rate(candidate),
                    contribution,
                    grounding,
                }
            })
            .collect();
        Explanation { entity: vocab.entity_name(candidate).to_string(), rules }
    }
}

fn render_query(query: &Query, vocab: &Vocabulary) -> String {
    format!(
        "({}, {}, ?, {})",
        vocab.entity_name(query.subject),
        vocab.relation_name(query.relation),
        query.span
    )
}

/// `E1 = a, E2 = b, ..., I1 = [s, e], ...`; the last interval is the query's.
pub fn render_grounding(graph: &TemporalGraph, walk: &Walk, query: &Query, vocab: &Vocabulary) -> String {
    let mut items: Vec<String> = walk
        .entities(graph)
        .iter()
        .enumerate()
        .map(|(i, &e)| format!("E{} = {}", i + 1, vocab.entity_name(e)))
        .collect();
    for (i, &f) in walk.facts.iter().enumerate() {
        items.push(format!("I{} = {}", i + 1, graph.fact(f).interval));
    }
    items.push(format!("I{} = {}", walk.len() + 1, query.span));
    items.join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub entity: EntityId,
    pub name: String,
    pub score: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleExplanation {
    pub rule: String,
    pub confidence: f64,
    pub arriving_rate: f64,
    pub contribution: f64,
    pub grounding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub entity: String,
    pub rules: Vec<RuleExplanation>,
}

impl Explanation {
    pub fn render(&self) -> String {
        let mut s = format!("candidate {}\n", self.entity);
        for (i, r) in self.rules.iter().enumerate() {
            s.push_str(&format!(
                "  Rule {}: {}\n    confidence {:.4e}, arriving rate {:.4}\n    Grounding: {}\n",
                i + 1,
                r.rule,
                r.confidence,
                r.arriving_rate,
                r.grounding
            ));
        }
        s
    }
}

/// One line of the rankings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub query: String,
    pub truth: Option<String>,
    pub candidates: Vec<RankedCandidate>,
    pub truth_rank: Option<f64>,
    pub explanations: Vec<Explanation>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn worked_metric_values() {
        let m = Metrics::from_ranks(&[1.0, 4.0, 20.0]);
        assert_relative_eq!(m.mrr, (1.0 + 0.25 + 0.05) / 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.hit10, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.hit1, 1.0 / 3.0, epsilon = 1e-12);
        let all_first = Metrics::from_ranks(&[1.0; 4]);
        assert_eq!((all_first.mrr, all_first.hit1, all_first.hit10), (1.0, 1.0, 1.0));
    }

    #[test]
    fn tie_takes_the_mean_rank() {
        let r = tied_rank(&[0.5, 0.5, 0.1], 0.5);
        assert_eq!(r, 1.5);
        assert_relative_eq!(1.0 / r, 2.0 / 3.0);
        assert_eq!(tied_rank(&[0.9, 0.5, 0.1], 0.1), 3.0);
    }

    #[test]
    fn combined_score_arithmetic() {
        let a = BTreeMap::from([(EntityId(0), 0.3)]);
        let b = BTreeMap::from([(EntityId(0), 0.2), (EntityId(1), 0.4)]);
        let c = phi_tilp(&a, &b, 1.0, 1.0);
        assert_relative_eq!(c[&EntityId(0)], 0.5);
        assert_relative_eq!(c[&EntityId(1)], 0.4);
    }
}
