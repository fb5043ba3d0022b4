//! Prints how each Allen interval relation collapses onto the three
//! temporal relations used by rules.

use tilp::interval::{temporal_relation, Endpoint, Interval, Span};

fn main() {
    let query = Span::new(10, 14);
    let cases = [
        ("before", (2, 5)),
        ("meets", (6, 10)),
        ("overlaps", (8, 12)),
        ("starts", (10, 12)),
        ("during", (11, 13)),
        ("finishes", (12, 14)),
        ("equal", (10, 14)),
        ("contains", (8, 16)),
        ("met by", (14, 18)),
        ("after", (15, 20)),
    ];
    for (name, (s, e)) in cases {
        let r = Span::new(s, e).relation_to(&query);
        println!("[{s:>2},{e:>2}] {name:<9} [10,14] -> {}", r.name());
    }

    // an open end resolves against the latest year in the data
    let open = Interval::new(Endpoint::year(12), Endpoint::Unknown);
    match temporal_relation(&open, &Interval::years(10, 14), 30) {
        Ok(r) => println!("[12, ?] -> {}", r.name()),
        Err(e) => println!("[12, ?] cannot be compared: {e}"),
    }
    let present = Interval::new(Endpoint::year(16), Endpoint::Present);
    println!("[16, present] -> {}", temporal_relation(&present, &Interval::years(10, 14), 30).unwrap().name());
}
