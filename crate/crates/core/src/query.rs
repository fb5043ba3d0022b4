use serde::{Deserialize, Serialize};

use crate::graph::{EdgeId, EntityId, Quadruple, RelationId, TemporalGraph};
use crate::interval::Span;

/// `(subject, relation, ?, span)`. Subject prediction is expressed with the
/// inverse relation and the object in the subject slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub subject: EntityId,
    pub relation: RelationId,
    pub span: Span,
    /// Fact hidden from evidence and walks, set when the query is itself a
    /// stored training fact.
    pub excluded_edge: Option<EdgeId>,
}

/// A query together with its correct answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query: Query,
    pub truth: EntityId,
}

impl LabeledQuery {
    /// Object query `(s, r, ?, I)` for `q`.
    pub fn object(q: &Quadruple, span: Span) -> Self {
        LabeledQuery {
            query: Query { subject: q.subject, relation: q.relation, span, excluded_edge: None },
            truth: q.object,
        }
    }

    /// Subject query `(o, r⁻¹, ?, I)` for `q`.
    pub fn subject(q: &Quadruple, span: Span, graph: &TemporalGraph) -> Self {
        LabeledQuery {
            query: Query { subject: q.object, relation: graph.inverse(q.relation), span, excluded_edge: None },
            truth: q.subject,
        }
    }

    /// Query built from stored fact `index`, hiding that fact's edge.
    pub fn from_stored(graph: &TemporalGraph, index: usize, span: Span) -> Self {
        let f = graph.fact(index);
        LabeledQuery {
            query: Query { subject: f.subject, relation: f.relation, span, excluded_edge: Some(f.edge_id) },
            truth: f.object,
        }
    }
}
