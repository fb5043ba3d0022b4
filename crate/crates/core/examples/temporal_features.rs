//! Fits the temporal-feature distributions on a small graph and shows the
//! gap densities behind a pair score.

use std::collections::BTreeMap;

use tilp::graph::{Quadruple, RelationId, TemporalGraph};
use tilp::interval::Interval;
use tilp::tfm::distributions::{gaussian_density, GapDistribution};
use tilp::tfm::duration::DurationModel;
use tilp::tfm::params::{fit_distributions, samples_from_graph};
use tilp::timeline::Timeline;

fn main() {
    // people are born somewhere, then graduate about twenty-two years later
    let (born, graduated) = (0, 1);
    let mut quads = Vec::new();
    for i in 0..40u32 {
        let y = 1900 + (i as i32 * 7) % 60;
        quads.push(Quadruple::new(10 + i, born, 0, Interval::stamp(y)));
        quads.push(Quadruple::new(10 + i, graduated, 1 + i % 3, Interval::stamp(y + 21 + (i % 3) as i32)));
    }
    let graph = TemporalGraph::build(&quads, 50, 2, 2000);
    let timeline = Timeline::strict(&graph);
    let samples = samples_from_graph(&graph, &timeline, &BTreeMap::new());
    let params = fit_distributions(&graph, &timeline, &samples, DurationModel::fit(&graph));

    let asked = graph.inverse(RelationId(graduated));
    for part in 0..3 {
        let gap = params.gap(part, asked, RelationId(born));
        let order = params.order_p(part, asked, RelationId(born));
        println!("part {part}: birth precedes with p = {order:.3}, gap {gap:?}");
    }
    if let GapDistribution::Gaussian(g) = params.gap(1, asked, RelationId(born)) {
        for gap in [18.0, 22.0, 26.0, 47.0] {
            println!("density of a {gap}-year gap: {:.3e}", g.pdf(gap));
        }
    }
    println!("N(47; 22, 1) = {:.3e}", gaussian_density(47.0, 22.0, 1.0));
    println!("N(114; 70, 6) = {:.3e}", gaussian_density(114.0, 70.0, 6.0));
}
