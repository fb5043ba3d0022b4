//! Synthetic graphs with one planted temporal rule.
//!
//! Every positive `affiliatedWith(X, Z, I3)` is explained by
//! `memberOf(X, Y, I1) ∧ partOf(Y, Z, I2)` where `I1` ends before `I3`
//! starts and both body intervals overlap each other and `I2` overlaps `I3`.
//! Distractor memberships that start after the head, colleague links and
//! random facts make up the rest of the graph.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{time_shift_resplit, DatasetSplit, SplitRanges, Vocabulary};
use crate::error::Result;
use crate::graph::{Quadruple, RelationId};
use crate::interval::{Interval, TemporalRelation};
use crate::rule::RuleTemplate;

pub const HEAD: &str = "affiliatedWith";
pub const MEMBER_OF: &str = "memberOf";
pub const PART_OF: &str = "partOf";
const RELATIONS: [&str; 6] = [HEAD, MEMBER_OF, PART_OF, "knows", "visited", "sponsors"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub positives: usize,
    /// Positives sharing one organisation; they are spaced in time so that
    /// the rule singles out one member per query.
    pub per_organisation: usize,
    pub spacing: i32,
    pub first_year: i32,
    pub random_facts: usize,
    pub colleague_links: usize,
    pub distractors: bool,
    /// Head-fact shares for train and valid; the rest is test.
    pub train_share: f64,
    pub valid_share: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            positives: 200,
            per_organisation: 10,
            spacing: 12,
            first_year: 1900,
            random_facts: 300,
            colleague_links: 150,
            distractors: true,
            train_share: 0.8,
            valid_share: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub split: DatasetSplit,
    pub head: RelationId,
    /// The planted rule in template form.
    pub rule: RuleTemplate,
    /// Set for the time-shifted variant.
    pub ranges: Option<SplitRanges>,
}

/// The planted template, with ids from `vocab`.
pub fn planted_rule(vocab: &Vocabulary) -> RuleTemplate {
    RuleTemplate {
        head: vocab.relation(HEAD).expect("head relation"),
        predicates: vec![vocab.relation(MEMBER_OF).unwrap(), vocab.relation(PART_OF).unwrap()],
        tr_query: vec![TemporalRelation::Before, TemporalRelation::Touching],
        tr_pairs: vec![TemporalRelation::Touching],
    }
}

struct Builder {
    vocab: Vocabulary,
    rng: ChaCha8Rng,
}

impl Builder {
    fn fact(&mut self, s: &str, r: &str, o: &str, start: i32, end: i32) -> Quadruple {
        let s = self.vocab.intern_entity(s);
        let r = self.vocab.intern_relation(r);
        let o = self.vocab.intern_entity(o);
        Quadruple { subject: s, relation: r, object: o, interval: Interval::years(start, end) }
    }
}

/// Head years of the organisation's members, one per slot.
fn head_year(cfg: &PlantedConfig, i: usize, rng: &mut ChaCha8Rng) -> i32 {
    let slot = (i % cfg.per_organisation) as i32;
    cfg.first_year + slot * cfg.spacing + rng.random_range(0..3)
}

/// Generates the graph. With `body_cutoff`, every body, distractor and
/// random fact starts no later than that year, so that a split by start
/// year keeps all evidence in training.
fn generate(cfg: &PlantedConfig, body_cutoff: Option<i32>) -> (Vocabulary, Vec<Quadruple>, Vec<Quadruple>) {
    let mut b = Builder { vocab: Vocabulary::default(), rng: ChaCha8Rng::seed_from_u64(cfg.seed) };
    for r in RELATIONS {
        b.vocab.intern_relation(r);
    }
    let organisations = cfg.positives.div_ceil(cfg.per_organisation.max(1));
    let last_year = cfg.first_year + cfg.per_organisation as i32 * cfg.spacing;
    let mut heads = Vec::new();
    let mut body = Vec::new();
    let mut years = Vec::new();
    for i in 0..cfg.positives {
        let person = format!("person_{i}");
        let unit = format!("unit_{i}");
        let org = format!("org_{}", i / cfg.per_organisation);
        let t = head_year(cfg, i, &mut b.rng);
        years.push(t);
        let lead = |rng: &mut ChaCha8Rng| {
            let base = rng.random_range(3..9);
            match body_cutoff {
                Some(c) if t > c => t - c + base,
                _ => base,
            }
        };
        let d1 = lead(&mut b.rng);
        let d2 = lead(&mut b.rng);
        heads.push(b.fact(&person, HEAD, &org, t, t + 1));
        body.push(b.fact(&person, MEMBER_OF, &unit, t - d1, t - 1));
        body.push(b.fact(&unit, PART_OF, &org, t - d2, t + 5));
        if cfg.distractors && body_cutoff.is_none() {
            let other = (i / cfg.per_organisation + 1 + b.rng.random_range(0..organisations.max(2) - 1)) % organisations.max(1);
            let decoy = format!("unit_decoy_{i}");
            body.push(b.fact(&person, MEMBER_OF, &decoy, t + 3, t + 6));
            body.push(b.fact(&decoy, PART_OF, &format!("org_{other}"), t - 5, t + 4));
        }
    }
    let cap = body_cutoff.unwrap_or(last_year);
    let random_interval = |rng: &mut ChaCha8Rng| {
        let s = rng.random_range(cfg.first_year - 10..=cap);
        (s, s + rng.random_range(0..8))
    };
    for _ in 0..cfg.colleague_links {
        // colleagues share an organisation; their intervals are random
        let i = b.rng.random_range(0..cfg.positives);
        let org = i / cfg.per_organisation;
        let lo = org * cfg.per_organisation;
        let hi = (lo + cfg.per_organisation).min(cfg.positives);
        let j = b.rng.random_range(lo..hi);
        if i == j {
            continue;
        }
        let (s, e) = random_interval(&mut b.rng);
        body.push(b.fact(&format!("person_{i}"), "knows", &format!("person_{j}"), s, e));
    }
    for n in 0..cfg.random_facts {
        let (s, e) = random_interval(&mut b.rng);
        let q = match n % 3 {
            0 => {
                let (i, j) = (b.rng.random_range(0..cfg.positives), b.rng.random_range(0..cfg.positives));
                b.fact(&format!("person_{i}"), "knows", &format!("person_{j}"), s, e)
            }
            1 => {
                let (i, o) = (b.rng.random_range(0..cfg.positives), b.rng.random_range(0..organisations));
                b.fact(&format!("person_{i}"), "visited", &format!("org_{o}"), s, e)
            }
            _ => {
                let (u, o) = (b.rng.random_range(0..cfg.positives), b.rng.random_range(0..organisations));
                b.fact(&format!("unit_{u}"), "sponsors", &format!("org_{o}"), s, e)
            }
        };
        body.push(q);
    }
    (b.vocab, heads, body)
}

/// Planted dataset with a random split of the head facts; every other fact
/// is training evidence.
pub fn planted_dataset(cfg: &PlantedConfig) -> PlantedDataset {
    let (vocab, mut heads, body) = generate(cfg, None);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    heads.shuffle(&mut rng);
    let n_train = (heads.len() as f64 * cfg.train_share).round() as usize;
    let n_valid = (heads.len() as f64 * cfg.valid_share).round() as usize;
    let test = heads.split_off((n_train + n_valid).min(heads.len()));
    let valid = heads.split_off(n_train.min(heads.len()));
    let mut train = body;
    train.extend(heads);
    let split = DatasetSplit::from_parts(vocab, train, valid, test);
    let rule = planted_rule(&split.vocab);
    PlantedDataset { head: rule.head, rule, split, ranges: None }
}

/// Planted dataset split by start year at `(first, second)`. Evidence facts
/// all start by `first`, so later queries are answered from earlier facts.
pub fn time_shifted_dataset(cfg: &PlantedConfig, first: i32, second: i32) -> Result<PlantedDataset> {
    let (vocab, heads, mut facts) = generate(cfg, Some(first));
    facts.extend(heads);
    let whole = DatasetSplit::from_parts(vocab, facts, Vec::new(), Vec::new());
    let (split, ranges) = time_shift_resplit(&whole, first, second)?;
    let rule = planted_rule(&split.vocab);
    Ok(PlantedDataset { head: rule.head, rule, split, ranges: Some(ranges) })
}
