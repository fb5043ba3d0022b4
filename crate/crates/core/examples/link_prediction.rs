//! Learns rules on the planted dataset and reports filtered test metrics.

use tilp::pipeline::{evaluate, learn, EvalSettings, LearnSettings};
use tilp::synthetic::{planted_dataset, PlantedConfig, HEAD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let data = planted_dataset(&PlantedConfig::default());
    let settings = LearnSettings { max_rule_len: 3, dim: 16, ..LearnSettings::default() };
    let (model, report) = learn(&data.split, &settings, 1, &mut |_| {})?;
    println!(
        "{} examples, {} templates kept of {}, discovery {:.2}s",
        report.positive_examples, report.rules_kept, report.rules_discovered, report.discovery_seconds
    );
    println!("phase 1 loss: {:.4} -> {:.4}", report.phase1_loss[0], report.phase1_loss.last().unwrap());
    println!("phase 2 loss: {:.4} -> {:.4}", report.phase2_loss[0], report.phase2_loss.last().unwrap());

    let bundle = model.attention.forward(data.head);
    let planted = bundle.rule_score(&data.rule);
    let mut rivals: Vec<_> = model
        .rules
        .for_head(data.head)
        .into_iter()
        .map(|i| &model.rules.get(i).template)
        .filter(|t| t.len() == 2 && **t != data.rule)
        .map(|t| (bundle.rule_score(t), t.display(&model.vocab)))
        .collect();
    rivals.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("planted rule score {planted:.4}");
    for (s, r) in rivals.iter().take(3) {
        println!("  rival {s:.4}  {r}");
    }

    for temporal in [false, true] {
        let eval = EvalSettings { target_relations: vec![HEAD.into()], temporal_features: temporal, ..Default::default() };
        let m = evaluate(&model, &data.split, &eval, 1)?;
        println!(
            "temporal features {temporal}: MRR {:.4} hit@1 {:.4} hit@10 {:.4} (object {:.4}, subject {:.4})",
            m.overall.mrr, m.overall.hit1, m.overall.hit10, m.object.mrr, m.subject.mrr
        );
    }
    Ok(())
}
