//! Enumerates walks that satisfy per-step constraints, then applies the
//! pairwise filter between body facts.

use std::collections::BTreeMap;

use tilp::graph::{EntityId, Quadruple, RelationId, TemporalGraph};
use tilp::interval::{Interval, Span, TemporalRelation};
use tilp::timeline::Timeline;
use tilp::walk::{constrained_walks, filter_non_markovian, MarkovConstraint, WalkContext};

fn main() {
    // 0 ann, 1 lab_a, 2 lab_b, 3 uni; relations 0 memberOf, 1 partOf
    let quads = [
        Quadruple::new(0, 0, 1, Interval::years(2001, 2004)),
        Quadruple::new(0, 0, 2, Interval::years(2009, 2011)),
        Quadruple::new(1, 1, 3, Interval::years(1995, 2010)),
        Quadruple::new(2, 1, 3, Interval::years(2006, 2008)),
    ];
    let graph = TemporalGraph::build(&quads, 4, 3, 2020);
    let timeline = Timeline::strict(&graph);
    let ctx = WalkContext::new(&graph, &timeline);
    let query = Span::new(2007, 2008);

    let steps = [
        MarkovConstraint { predicate: RelationId(0), tr_to_query: TemporalRelation::Before },
        MarkovConstraint { predicate: RelationId(1), tr_to_query: TemporalRelation::Touching },
    ];
    let found = constrained_walks(&ctx, &steps, query, EntityId(0), None, None);
    println!("{} walks meet the step constraints", found.walks.len());
    for w in &found.walks {
        let spans: Vec<String> = w.facts.iter().map(|&f| timeline.span(f).unwrap().to_string()).collect();
        println!("  facts {:?} spans {}", w.facts, spans.join(" "));
    }

    for tr in TemporalRelation::ALL {
        let pairs = BTreeMap::from([((1, 2), tr)]);
        let kept = filter_non_markovian(&timeline, found.walks.clone(), &pairs).unwrap();
        println!("first step {} second: {} walks", tr.name(), kept.len());
    }
}
