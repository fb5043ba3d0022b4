//! Discovers temporal rule templates from the planted dataset and prints
//! the best supported ones per head.

use tilp::pipeline::discover_rules;
use tilp::query::LabeledQuery;
use tilp::synthetic::{planted_dataset, PlantedConfig};
use tilp::timeline::Timeline;

fn main() {
    let data = planted_dataset(&PlantedConfig { positives: 100, ..PlantedConfig::default() });
    let graph = data.split.train_graph();
    let timeline = Timeline::strict(&graph);
    let examples: Vec<LabeledQuery> = (0..graph.len())
        .filter(|&i| graph.fact(i).relation == data.head)
        .filter_map(|i| timeline.span(i).map(|s| LabeledQuery::from_stored(&graph, i, s)))
        .collect();
    let (rules, truncated) = discover_rules(&graph, &timeline, &examples, 3, Some(2000));
    println!("{} examples, {} templates, {truncated} truncated searches", examples.len(), rules.len());

    let top = rules.select(5, 2);
    for i in top.for_head(data.head) {
        let r = top.get(i);
        let mark = if r.template == data.rule { "  <- planted" } else { "" };
        println!("{:>4}  {}{mark}", r.discovery_count, r.template.display(&data.split.vocab));
    }
}
