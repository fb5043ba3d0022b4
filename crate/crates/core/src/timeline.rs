//! Resolved spans for every stored fact of a graph.

use crate::graph::TemporalGraph;
use crate::interval::Span;
use crate::tfm::duration::IntervalResolver;

/// `spans[i]` is the resolved interval of fact `i`, or `None` when it could
/// not be resolved. Unresolved facts never satisfy a temporal constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    spans: Vec<Option<Span>>,
}

impl Timeline {
    pub fn new(graph: &TemporalGraph, resolver: &IntervalResolver) -> Self {
        let quads = graph.quadruples();
        let mut spans = Vec::with_capacity(graph.len());
        for q in &quads {
            let s = resolver.resolve(q);
            spans.push(s);
            spans.push(s);
        }
        Timeline { spans }
    }

    /// Resolves `Present` only; unknown endpoints stay unresolved.
    pub fn strict(graph: &TemporalGraph) -> Self {
        Self::new(graph, &IntervalResolver::strict(graph.max_year()))
    }

    pub fn span(&self, fact: usize) -> Option<Span> {
        self.spans[fact]
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn unresolved(&self) -> usize {
        self.spans.iter().filter(|s| s.is_none()).count() / 2
    }
}
