//! Harder settings: fewer training samples, thinned relations, and
//! training/test periods that do not overlap.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, SplitRanges};
use crate::error::{Result, TilpError};
use crate::graph::{Quadruple, RelationId};
use crate::pipeline::{derive_seed, evaluate, learn, EvalSettings, LearnSettings};
use crate::rank::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub setting: String,
    pub round: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub rows: Vec<ScenarioRow>,
    pub notes: Vec<String>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl ScenarioReport {
    pub const CSV_HEADER: &'static str = "setting,round,mrr,hit1,hit10";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| format!("{},{},{:.6},{:.6},{:.6}", r.setting, r.round, r.metrics.mrr, r.metrics.hit1, r.metrics.hit10))
            .collect()
    }

    /// Mean ± std MRR per setting, in first-seen order.
    pub fn summary(&self) -> Vec<(String, f64, f64)> {
        let mut order = Vec::new();
        let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            if !by.contains_key(r.setting.as_str()) {
                order.push(r.setting.clone());
            }
            by.entry(&r.setting).or_default().push(r.metrics.mrr);
        }
        order
            .into_iter()
            .map(|s| {
                let (m, sd) = mean_std(&by[s.as_str()]);
                (s, m, sd)
            })
            .collect()
    }

    /// Bar chart of mean MRR with one-std error bars.
    pub fn svg(&self) -> String {
        bar_chart(&format!("{} (MRR)", self.name), &self.summary())
    }
}

/// Minimal standalone SVG bar chart with error bars.
pub fn bar_chart(title: &str, bars: &[(String, f64, f64)]) -> String {
    let (w, h, left, bottom, top) = (640.0, 360.0, 60.0, 80.0, 40.0);
    let plot_h = h - bottom - top;
    let hi = bars
        .iter()
        .map(|b| (b.1 + b.2.max(0.0)).abs().max(b.1.abs()))
        .filter(|v| v.is_finite())
        .fold(1e-9f64, f64::max);
    let lo = bars.iter().map(|b| b.1 - b.2.max(0.0)).filter(|v| v.is_finite()).fold(0.0f64, f64::min);
    let span = hi - lo;
    let y = |v: f64| top + plot_h * (hi - v) / span;
    let slot = (w - left - 20.0) / bars.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, y(0.0), w - 20.0, y(0.0));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    for t in 0..=4 {
        let v = lo + span * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, left - 4.0, y(v) + 4.0);
    }
    for (i, (label, m, sd)) in bars.iter().enumerate() {
        if !m.is_finite() {
            continue;
        }
        let x = left + slot * i as f64 + slot * 0.15;
        let bw = slot * 0.7;
        let (y0, y1) = (y(0.0), y(*m));
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{bw:.1}" height="{:.1}" fill="#4a78a8"/>"##,
            y0.min(y1),
            (y0 - y1).abs()
        );
        if sd.is_finite() && *sd > 0.0 {
            let cx = x + bw / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                y(m - sd),
                y(m + sd)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="end" transform="rotate(-35 {:.1} {})">{}</text>"#,
            x + bw / 2.0,
            h - bottom + 14.0,
            x + bw / 2.0,
            h - bottom + 14.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Retrains on a random share of the positive examples, several rounds per
/// share. The background graph stays whole.
pub fn few_samples(
    split: &DatasetSplit,
    learn_settings: &LearnSettings,
    eval: &EvalSettings,
    fractions: &[f64],
    rounds: usize,
    seed: u64,
) -> Result<ScenarioReport> {
    let jobs: Vec<(f64, usize)> = fractions.iter().flat_map(|&f| (0..rounds).map(move |r| (f, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(fraction, round)| {
            let s = LearnSettings { example_fraction: fraction, ..learn_settings.clone() };
            let round_seed = derive_seed(seed, &format!("few-{fraction}-{round}"));
            let (model, _) = learn(split, &s, round_seed, &mut |_| {})?;
            let m = evaluate(&model, split, eval, round_seed)?;
            Ok(ScenarioRow { setting: format!("{fraction}"), round, metrics: m.overall })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport { name: "few training samples".into(), rows, notes: Vec::new() })
}

/// Equalises test queries per relation: relations with at least `quota`
/// queries are sampled down to it, rarer ones keep a random half.
pub fn rebalance_queries(test: &[Quadruple], quota: usize, seed: u64) -> Vec<Quadruple> {
    let mut by: BTreeMap<RelationId, Vec<Quadruple>> = BTreeMap::new();
    for q in test {
        by.entry(q.relation).or_default().push(*q);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut qs) in by {
        let keep = if qs.len() >= quota { quota } else { qs.len().div_ceil(2) };
        qs.shuffle(&mut rng);
        qs.truncate(keep);
        out.extend(qs);
    }
    out
}

/// Removes a random half of `relation`'s training facts.
pub fn thin_relation(train: &[Quadruple], relation: RelationId, seed: u64) -> Vec<Quadruple> {
    let mut idx: Vec<usize> = (0..train.len()).filter(|&i| train[i].relation == relation).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let drop: std::collections::HashSet<usize> = idx[..idx.len() / 2].iter().copied().collect();
    train.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, q)| *q).collect()
}

/// For each relation, halves its training facts and compares the MRR of
/// its (rebalanced) test queries against a model trained on everything.
#[allow(clippy::too_many_arguments)]
pub fn biased(
    split: &DatasetSplit,
    learn_settings: &LearnSettings,
    eval: &EvalSettings,
    relations: &[String],
    quota: usize,
    rounds: usize,
    seed: u64,
) -> Result<ScenarioReport> {
    let relations: Vec<RelationId> = if relations.is_empty() {
        (0..split.vocab.base_relation_count() as u32).map(RelationId).collect()
    } else {
        relations
            .iter()
            .map(|n| split.vocab.relation(n).ok_or_else(|| TilpError::Config(format!("unknown relation {n:?}"))))
            .collect::<Result<_>>()?
    };
    let base_seed = derive_seed(seed, "biased-base");
    let (base_model, _) = learn(split, learn_settings, base_seed, &mut |_| {})?;
    let jobs: Vec<(usize, RelationId)> = (0..rounds).flat_map(|r| relations.iter().map(move |&rel| (r, rel))).collect();
    let rows: Vec<Vec<ScenarioRow>> = jobs
        .par_iter()
        .map(|&(round, rel)| {
            let name = split.vocab.relation_name(rel);
            let mut test = rebalance_queries(&split.test, quota, derive_seed(seed, &format!("rebalance-{round}")));
            test.retain(|q| q.relation == rel);
            if test.is_empty() {
                return Ok(Vec::new());
            }
            let eval_split = DatasetSplit { test: test.clone(), ..split.clone() };
            let before = evaluate(&base_model, &eval_split, eval, base_seed)?;
            let round_seed = derive_seed(seed, &format!("biased-{name}-{round}"));
            let thinned = DatasetSplit { train: thin_relation(&split.train, rel, round_seed), test, ..split.clone() };
            let (model, _) = learn(&thinned, learn_settings, round_seed, &mut |_| {})?;
            let after = evaluate(&model, &thinned, eval, round_seed)?;
            Ok(vec![
                ScenarioRow { setting: format!("full:{name}"), round, metrics: before.overall },
                ScenarioRow { setting: format!("thinned:{name}"), round, metrics: after.overall },
            ])
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioReport { name: "biased data".into(), rows: rows.into_iter().flatten().collect(), notes: Vec::new() })
}

/// MRR change per relation from a biased-data report.
pub fn biased_deltas(report: &ScenarioReport) -> Vec<(String, f64, f64)> {
    let mut pairs: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
    for r in &report.rows {
        if let Some(name) = r.setting.strip_prefix("full:") {
            pairs.entry((name.to_string(), r.round)).or_default().0 = r.metrics.mrr;
        } else if let Some(name) = r.setting.strip_prefix("thinned:") {
            pairs.entry((name.to_string(), r.round)).or_default().1 = r.metrics.mrr;
        }
    }
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((name, _), (full, thin)) in pairs {
        by.entry(name).or_default().push(thin - full);
    }
    by.into_iter()
        .map(|(n, d)| {
            let (m, s) = mean_std(&d);
            (n, m, s)
        })
        .collect()
}

/// Trains on the early period of an already resplit dataset and tests on
/// the late one.
pub fn time_shift(
    split: &DatasetSplit,
    ranges: &SplitRanges,
    learn_settings: &LearnSettings,
    eval: &EvalSettings,
    seed: u64,
) -> Result<ScenarioReport> {
    let (model, _) = learn(split, learn_settings, seed, &mut |_| {})?;
    let m = evaluate(&model, split, eval, seed)?;
    let setting = format!(
        "train {}-{} valid {}-{} test {}-{}",
        ranges.train.0, ranges.train.1, ranges.valid.0, ranges.valid.1, ranges.test.0, ranges.test.1
    );
    Ok(ScenarioReport {
        name: "time shifting".into(),
        rows: vec![ScenarioRow { setting, round: 0, metrics: m.overall }],
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;

    fn quads(rel: u32, n: usize) -> Vec<Quadruple> {
        (0..n).map(|i| Quadruple::new(i as u32, rel, i as u32 + 1, Interval::stamp(2000))).collect()
    }

    #[test]
    fn rebalancing_caps_common_and_halves_rare() {
        let mut test = quads(0, 40);
        test.extend(quads(1, 7));
        let out = rebalance_queries(&test, 10, 1);
        assert_eq!(out.iter().filter(|q| q.relation == RelationId(0)).count(), 10);
        assert_eq!(out.iter().filter(|q| q.relation == RelationId(1)).count(), 4);
    }

    #[test]
    fn thinning_halves_only_the_target() {
        let mut train = quads(0, 10);
        train.extend(quads(1, 6));
        let out = thin_relation(&train, RelationId(1), 3);
        assert_eq!(out.iter().filter(|q| q.relation == RelationId(0)).count(), 10);
        assert_eq!(out.iter().filter(|q| q.relation == RelationId(1)).count(), 3);
    }

    #[test]
    fn chart_is_well_formed() {
        let svg = bar_chart("t", &[("a".into(), 0.5, 0.1), ("b<".into(), -0.2, 0.0)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("b&lt;"));
    }
}
