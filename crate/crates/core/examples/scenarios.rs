//! Runs the three robustness scenarios on small planted datasets and writes
//! their charts to the working directory.

use tilp::pipeline::{EvalSettings, LearnSettings};
use tilp::scenario::{biased, biased_deltas, few_samples, time_shift};
use tilp::synthetic::{planted_dataset, time_shifted_dataset, PlantedConfig, HEAD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PlantedConfig { positives: 100, random_facts: 150, colleague_links: 60, ..PlantedConfig::default() };
    let learn = LearnSettings { max_rule_len: 2, dim: 8, ..LearnSettings::default() };
    let eval = EvalSettings { target_relations: vec![HEAD.into()], ..EvalSettings::default() };

    let data = planted_dataset(&cfg);
    let few = few_samples(&data.split, &learn, &eval, &[0.1, 0.5, 1.0], 2, 3)?;
    for (setting, mean, std) in few.summary() {
        println!("examples x{setting}: MRR {mean:.3} ± {std:.3}");
    }
    std::fs::write("few_samples.svg", few.svg())?;

    let all = EvalSettings::default();
    let skew = biased(&data.split, &learn, &all, &[HEAD.into()], 10, 2, 3)?;
    for (relation, delta, std) in biased_deltas(&skew) {
        println!("halving {relation}: MRR change {delta:+.3} ± {std:.3}");
    }

    let shifted = time_shifted_dataset(&cfg, 1983, 1995)?;
    let ranges = shifted.ranges.expect("shifted ranges");
    let report = time_shift(&shifted.split, &ranges, &learn, &eval, 3)?;
    for row in report.csv_rows() {
        println!("{row}");
    }
    std::fs::write("time_shift.svg", report.svg())?;
    Ok(())
}
