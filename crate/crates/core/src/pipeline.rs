//! Two-phase learning and filtered evaluation over a dataset split.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::AttentionParams;
use crate::dataset::{DatasetSplit, Vocabulary};
use crate::error::{Result, TilpError};
use crate::graph::{EntityId, RelationId, TemporalGraph};
use crate::learner::{train_phase1, Phase1Config, RuleHit, TrainingExample};
use crate::query::{LabeledQuery, Query};
use crate::rank::{apply_rules, ApplyConfig, Metrics, QueryApplications, RankConfig, RankedAnswer, Scorer, TemporalScoring};
use crate::rule::{extract_rule, RuleSet, RuleTemplate};
use crate::tfm::duration::{DurationModel, IntervalResolver};
use crate::tfm::params::{fit_distributions, DistributionParams, FitSample};
use crate::tfm::score::TfmWeights;
use crate::tfm::train::{train_phase2, Phase2Config, Phase2Example};
use crate::timeline::Timeline;
use crate::walk::{find_all_paths, WalkContext};

/// Child seed for a named stage, derived from the root seed.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnSettings {
    pub max_rule_len: usize,
    pub dim: usize,
    /// Cap on discovered paths per positive example.
    pub path_cap: Option<usize>,
    pub rules_per_head: usize,
    pub min_support: usize,
    /// Share of positive examples kept, drawn per relation.
    pub example_fraction: f64,
    pub examples_per_relation: Option<usize>,
    /// Relations (by base name) to learn rules for; empty means all.
    pub target_relations: Vec<String>,
    pub temporal_features: bool,
    pub apply: ApplyConfig,
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings {
            max_rule_len: 5,
            dim: 32,
            path_cap: Some(5000),
            rules_per_head: 200,
            min_support: 1,
            example_fraction: 1.0,
            examples_per_relation: None,
            target_relations: Vec::new(),
            temporal_features: true,
            apply: ApplyConfig { walk_cap: Some(10_000), groundings_per_candidate: 1 },
            phase1: Phase1Config::default(),
            phase2: Phase2Config::default(),
        }
    }
}

/// Everything needed to score queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub vocab: Vocabulary,
    pub rules: RuleSet,
    pub attention: AttentionParams,
    pub distributions: DistributionParams,
    pub weights: TfmWeights,
    pub imputation_seed: u64,
}

impl Model {
    /// Resolver used for every timeline built for this model.
    pub fn resolver(&self, max_year: i32) -> IntervalResolver {
        IntervalResolver::imputing(max_year, self.distributions.durations.clone(), self.imputation_seed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub positive_examples: usize,
    pub unresolved_examples: usize,
    pub rules_discovered: usize,
    pub rules_kept: usize,
    pub truncated_searches: usize,
    pub discovery_seconds: f64,
    pub phase1_skipped: usize,
    pub phase1_loss: Vec<f64>,
    pub phase2_loss: Vec<f64>,
    pub distribution_fallbacks: usize,
}

/// Parameters handed to the observer after every optimiser step.
pub enum TrainingEvent<'a> {
    Phase1(&'a AttentionParams),
    Phase2(&'a TfmWeights),
}

fn wanted(vocab: &Vocabulary, graph: &TemporalGraph, targets: &[String]) -> Result<Option<BTreeSet<RelationId>>> {
    if targets.is_empty() {
        return Ok(None);
    }
    let mut set = BTreeSet::new();
    for name in targets {
        let r = vocab
            .relation(name)
            .ok_or_else(|| TilpError::Config(format!("unknown relation {name:?}")))?;
        set.insert(r);
        set.insert(graph.inverse(r));
    }
    Ok(Some(set))
}

/// Stored training facts used as positive examples, subsampled per relation.
fn positive_facts(graph: &TemporalGraph, targets: Option<&BTreeSet<RelationId>>, s: &LearnSettings, seed: u64) -> Vec<usize> {
    let mut by_relation: BTreeMap<RelationId, Vec<usize>> = BTreeMap::new();
    for (i, f) in graph.facts().iter().enumerate() {
        if targets.is_none_or(|t| t.contains(&f.relation)) {
            by_relation.entry(f.relation).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut facts) in by_relation {
        let mut keep = ((facts.len() as f64) * s.example_fraction.clamp(0.0, 1.0)).round() as usize;
        if let Some(cap) = s.examples_per_relation {
            keep = keep.min(cap);
        }
        if keep < facts.len() {
            facts.shuffle(&mut rng);
            facts.truncate(keep);
            facts.sort_unstable();
        }
        out.extend(facts);
    }
    out.sort_unstable();
    out
}

/// Discovers templates on the training graph: one discovery count per
/// positive example that grounds the template.
pub fn discover_rules(
    graph: &TemporalGraph,
    timeline: &Timeline,
    examples: &[LabeledQuery],
    max_len: usize,
    path_cap: Option<usize>,
) -> (RuleSet, usize) {
    let found: Vec<(BTreeSet<RuleTemplate>, bool)> = examples
        .par_iter()
        .map(|lq| {
            let ctx = WalkContext::new(graph, timeline).excluding(lq.query.excluded_edge);
            let paths = find_all_paths(&ctx, lq.query.subject, lq.truth, max_len, path_cap);
            let templates = paths
                .walks
                .iter()
                .filter_map(|w| extract_rule(graph, timeline, w, lq.query.relation, lq.query.span).ok())
                .collect();
            (templates, paths.truncated)
        })
        .collect();
    let mut rules = RuleSet::new();
    let mut truncated = 0;
    for (templates, t) in found {
        truncated += t as usize;
        for tpl in templates {
            rules.insert(tpl, 1);
        }
    }
    (rules, truncated)
}

/// Phase-one example: reached candidates plus the truth.
pub fn training_example(lq: &LabeledQuery, apps: &QueryApplications) -> TrainingExample {
    let mut reached: BTreeSet<EntityId> = apps.applications.iter().flat_map(|a| a.counts.keys().copied()).collect();
    reached.insert(lq.truth);
    let candidates: Vec<EntityId> = reached.into_iter().collect();
    let index: BTreeMap<EntityId, usize> = candidates.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    TrainingExample {
        head: lq.query.relation,
        truth: index[&lq.truth],
        hits: apps
            .applications
            .iter()
            .map(|a| RuleHit { rule: a.rule, arrivals: a.arrivals().map(|(c, r)| (index[&c], r)).collect() })
            .collect(),
        candidates,
    }
}

/// Runs discovery, both training phases and distribution fitting on the
/// training part of `split`.
pub fn learn(
    split: &DatasetSplit,
    s: &LearnSettings,
    seed: u64,
    observe: &mut dyn FnMut(TrainingEvent),
) -> Result<(Model, LearnReport)> {
    let graph = split.train_graph();
    let durations = DurationModel::fit(&graph);
    let imputation_seed = derive_seed(seed, "imputation");
    let resolver = IntervalResolver::imputing(split.max_year, durations.clone(), imputation_seed);
    let timeline = Timeline::new(&graph, &resolver);
    let targets = wanted(&split.vocab, &graph, &s.target_relations)?;
    let facts = positive_facts(&graph, targets.as_ref(), s, derive_seed(seed, "examples"));
    let mut report = LearnReport::default();
    let examples: Vec<LabeledQuery> = facts
        .iter()
        .filter_map(|&i| timeline.span(i).map(|span| LabeledQuery::from_stored(&graph, i, span)))
        .collect();
    report.positive_examples = examples.len();
    report.unresolved_examples = facts.len() - examples.len();

    let clock = Instant::now();
    let (discovered, truncated) = discover_rules(&graph, &timeline, &examples, s.max_rule_len, s.path_cap);
    report.discovery_seconds = clock.elapsed().as_secs_f64();
    report.truncated_searches = truncated;
    report.rules_discovered = discovered.len();
    let rules = discovered.select(s.rules_per_head, s.min_support);
    report.rules_kept = rules.len();
    log::info!(
        "{} examples, {} templates discovered, {} kept ({:.1}s)",
        examples.len(),
        report.rules_discovered,
        report.rules_kept,
        report.discovery_seconds
    );

    let applications: Vec<QueryApplications> = examples
        .par_iter()
        .map(|lq| apply_rules(&graph, &timeline, &rules, &lq.query, &s.apply))
        .collect::<Result<_>>()?;
    let phase1_examples: Vec<TrainingExample> =
        examples.iter().zip(&applications).map(|(lq, a)| training_example(lq, a)).collect();

    let init = AttentionParams::init(graph.relation_count(), s.dim, s.max_rule_len, derive_seed(seed, "attention"));
    let p1 = Phase1Config { seed: derive_seed(seed, "phase1"), ..s.phase1.clone() };
    let phase1 = train_phase1(init, &rules, &phase1_examples, &p1, |p| observe(TrainingEvent::Phase1(p)))?;
    report.phase1_loss = phase1.loss_trace;
    report.phase1_skipped = phase1.skipped;
    let attention = phase1.params;

    let samples: Vec<FitSample> = examples
        .iter()
        .zip(&applications)
        .map(|(lq, a)| FitSample {
            query: lq.query,
            truth: lq.truth,
            walk_starts: a.walk_evidence.get(&lq.truth).map(|(m, _)| m.clone()),
        })
        .collect();
    let distributions = fit_distributions(&graph, &timeline, &samples, durations);
    report.distribution_fallbacks = distributions.fallbacks;

    let mut weights = TfmWeights::new(graph.relation_count());
    if s.temporal_features {
        let init = weights.clone();
        let scorer = Scorer::new(
            &graph,
            &timeline,
            &rules,
            &attention,
            Some(TemporalScoring { distributions: &distributions, weights: &init }),
            RankConfig { apply: s.apply, ..RankConfig::default() },
        );
        let phase2_examples: Vec<Phase2Example> = examples
            .par_iter()
            .zip(applications.into_par_iter())
            .map(|(lq, apps)| {
                let scored = scorer.score_applications(&lq.query, apps, &[lq.truth]);
                let truth = scored.candidates.iter().position(|c| c.entity == lq.truth).unwrap();
                Phase2Example {
                    truth,
                    rule_scores: scored.candidates.iter().map(|c| c.rule_score).collect(),
                    features: scored.candidates.into_iter().map(|c| c.features.unwrap_or_default()).collect(),
                }
            })
            .collect();
        let p2 = Phase2Config { seed: derive_seed(seed, "phase2"), ..s.phase2.clone() };
        let outcome = train_phase2(init, &phase2_examples, &p2, |w| observe(TrainingEvent::Phase2(w)))?;
        report.phase2_loss = outcome.loss_trace;
        weights = outcome.weights;
    }

    let model = Model { vocab: split.vocab.clone(), rules, attention, distributions, weights, imputation_seed };
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub split: EvalSplit,
    /// Add validation facts to the background graph.
    pub include_valid: bool,
    /// Relations (by base name) to query; empty means all.
    pub target_relations: Vec<String>,
    pub temporal_features: bool,
    /// Evaluate at most this many facts, chosen by seed.
    pub max_queries: Option<usize>,
    pub rank: RankConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            split: EvalSplit::Test,
            include_valid: false,
            target_relations: Vec::new(),
            temporal_features: true,
            max_queries: None,
            rank: RankConfig { apply: ApplyConfig { walk_cap: Some(10_000), groundings_per_candidate: 1 }, ..RankConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub object: Metrics,
    pub subject: Metrics,
    pub unresolved_queries: usize,
    pub answers: Vec<RankedAnswer>,
}

/// Background and filtering context for scoring against one split.
pub struct EvalContext {
    pub background: TemporalGraph,
    pub timeline: Timeline,
    pub known: TemporalGraph,
    pub known_timeline: Timeline,
    pub resolver: IntervalResolver,
}

impl EvalContext {
    pub fn new(model: &Model, split: &DatasetSplit, include_valid: bool) -> Self {
        let background = if include_valid { split.train_valid_graph() } else { split.train_graph() };
        let known = split.full_graph();
        let resolver = model.resolver(split.max_year);
        EvalContext {
            timeline: Timeline::new(&background, &resolver),
            known_timeline: Timeline::new(&known, &resolver),
            background,
            known,
            resolver,
        }
    }

    pub fn scorer<'a>(&'a self, model: &'a Model, temporal: bool, config: RankConfig) -> Scorer<'a> {
        let t = temporal.then_some(TemporalScoring { distributions: &model.distributions, weights: &model.weights });
        Scorer::new(&self.background, &self.timeline, &model.rules, &model.attention, t, config)
    }
}

/// Filtered ranking of every evaluation fact in both directions.
pub fn evaluate(model: &Model, split: &DatasetSplit, s: &EvalSettings, seed: u64) -> Result<EvalReport> {
    let ctx = EvalContext::new(model, split, s.include_valid);
    let targets = wanted(&split.vocab, &ctx.background, &s.target_relations)?;
    let facts = match s.split {
        EvalSplit::Valid => &split.valid,
        EvalSplit::Test => &split.test,
    };
    let mut facts: Vec<_> = facts
        .iter()
        .filter(|q| targets.as_ref().is_none_or(|t| t.contains(&q.relation)))
        .copied()
        .collect();
    if let Some(cap) = s.max_queries {
        if cap < facts.len() {
            facts.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "eval-queries")));
            facts.truncate(cap);
        }
    }
    let mut queries = Vec::new();
    let mut unresolved = 0;
    for q in &facts {
        match ctx.resolver.resolve(q) {
            Some(span) => {
                queries.push((true, LabeledQuery::object(q, span)));
                queries.push((false, LabeledQuery::subject(q, span, &ctx.background)));
            }
            None => unresolved += 1,
        }
    }
    let scorer = ctx.scorer(model, s.temporal_features, s.rank.clone());
    let answers: Vec<(bool, RankedAnswer)> = queries
        .par_iter()
        .map(|(dir, lq)| {
            scorer
                .rank(&lq.query, Some(lq.truth), &ctx.known, &ctx.known_timeline, &model.vocab)
                .map(|a| (*dir, a))
        })
        .collect::<Result<_>>()?;
    let ranks = |filter: Option<bool>| -> Vec<f64> {
        answers
            .iter()
            .filter(|(d, _)| filter.is_none_or(|f| f == *d))
            .filter_map(|(_, a)| a.truth_rank)
            .collect()
    };
    Ok(EvalReport {
        overall: Metrics::from_ranks(&ranks(None)),
        object: Metrics::from_ranks(&ranks(Some(true))),
        subject: Metrics::from_ranks(&ranks(Some(false))),
        unresolved_queries: unresolved,
        answers: answers.into_iter().map(|(_, a)| a).collect(),
    })
}

/// Ranks candidates for one query given by names and a year range.
pub fn explain(
    model: &Model,
    split: &DatasetSplit,
    subject: &str,
    relation: &str,
    span: crate::interval::Span,
    rank: RankConfig,
) -> Result<RankedAnswer> {
    let ctx = EvalContext::new(model, split, true);
    let subject = model
        .vocab
        .entity(subject)
        .ok_or_else(|| TilpError::Config(format!("unknown entity {subject:?}")))?;
    let relation = model
        .vocab
        .relation(relation)
        .ok_or_else(|| TilpError::Config(format!("unknown relation {relation:?}")))?;
    let query = Query { subject, relation, span, excluded_edge: None };
    ctx.scorer(model, true, rank).rank(&query, None, &ctx.known, &ctx.known_timeline, &model.vocab)
}
