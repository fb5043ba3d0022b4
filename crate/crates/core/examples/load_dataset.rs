//! Loads a tab-separated split, reports what was cleaned up on the way in,
//! and resplits it by start year.
//!
//! With no arguments a tiny inline dataset is used; otherwise pass a
//! directory holding train.txt, valid.txt and test.txt.

use std::path::PathBuf;

use tilp::dataset::{load_dataset, time_shift_resplit, FormatConfig};

const TRAIN: &str = "ann\tworksAt\tacme\t2003-07-01\t2005\n\
                     acme\tlocatedIn\tparis\t1990\t####\n\
                     ann\tlivesIn\tparis\t2001\t2009\n\
                     bob\tworksAt\tinitech\t2011\t2008\n\
                     cid\tlivesIn\tparis\t####\t####\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = std::env::temp_dir().join("tilp-load-example");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("train.txt"), TRAIN)?;
            std::fs::write(dir.join("valid.txt"), "bob\tworksAt\tacme\t2010\t2012\n")?;
            std::fs::write(dir.join("test.txt"), "bob\tlivesIn\tparis\t2013\tpresent\n")?;
            dir
        }
    };
    let split = load_dataset(dir.join("train.txt"), dir.join("valid.txt"), dir.join("test.txt"), &FormatConfig::default())?;
    let meta = split.metadata();
    println!(
        "{} entities, {} relations, {}/{}/{} facts, years {:?}..{}",
        meta.entity_count, meta.base_relation_count, meta.train, meta.valid, meta.test, meta.min_start_year, meta.max_year
    );
    println!("{:#?}", meta.report);
    for q in &split.train {
        println!("  {} {} {} {}", split.vocab.entity_name(q.subject), split.vocab.relation_name(q.relation), split.vocab.entity_name(q.object), q.interval);
    }

    let (first, second) = (2004, 2010);
    match time_shift_resplit(&split, first, second) {
        Ok((shifted, ranges)) => println!(
            "resplit at {first}/{second}: train {:?} ({}), valid {:?} ({}), test {:?} ({})",
            ranges.train,
            shifted.train.len(),
            ranges.valid,
            shifted.valid.len(),
            ranges.test,
            shifted.test.len()
        ),
        Err(e) => println!("resplit failed: {e}"),
    }
    Ok(())
}
