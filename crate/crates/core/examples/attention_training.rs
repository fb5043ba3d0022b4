//! Trains the attention model alone and tracks how the planted rule's
//! score moves against its rivals.

use tilp::attention::AttentionParams;
use tilp::learner::{train_phase1, Phase1Config};
use tilp::pipeline::{discover_rules, training_example};
use tilp::query::LabeledQuery;
use tilp::rank::{apply_rules, ApplyConfig};
use tilp::synthetic::{planted_dataset, PlantedConfig};
use tilp::timeline::Timeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = planted_dataset(&PlantedConfig::default());
    let graph = data.split.train_graph();
    let timeline = Timeline::strict(&graph);
    let examples: Vec<LabeledQuery> = (0..graph.len())
        .filter_map(|i| timeline.span(i).map(|s| LabeledQuery::from_stored(&graph, i, s)))
        .collect();
    let (rules, _) = discover_rules(&graph, &timeline, &examples, 2, Some(2000));
    let rules = rules.select(50, 1);
    let batch = examples
        .iter()
        .map(|lq| apply_rules(&graph, &timeline, &rules, &lq.query, &ApplyConfig::default()).map(|a| training_example(lq, &a)))
        .collect::<Result<Vec<_>, _>>()?;

    let init = AttentionParams::init(graph.relation_count(), 8, 2, 3);
    let mut step = 0;
    let cfg = Phase1Config { epochs: 20, ..Phase1Config::default() };
    let out = train_phase1(init, &rules, &batch, &cfg, |p| {
        step += 1;
        if step % 200 == 0 {
            println!("step {step:>5}: planted rule {:.4}", p.forward(data.head).rule_score(&data.rule));
        }
    })?;
    println!("loss by epoch: {:?}", out.loss_trace.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>());

    let bundle = out.params.forward(data.head);
    let mut ranked: Vec<(f64, String)> = rules
        .for_head(data.head)
        .into_iter()
        .map(|i| &rules.get(i).template)
        .map(|t| (bundle.rule_score(t), t.display(&data.split.vocab)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (s, r) in ranked.iter().take(5) {
        println!("{s:.4}  {r}");
    }
    Ok(())
}
