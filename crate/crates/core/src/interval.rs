//! Yearly time points, possibly open intervals and the three-way temporal
//! relation used by rule bodies.
//!
//! Allen's thirteen interval relations collapse into [`TemporalRelation`]:
//! `Before` when the first interval ends strictly before the second starts,
//! `After` for the converse, and `Touching` for every overlapping or abutting
//! configuration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TilpError};

/// A calendar year. Month and day information is dropped at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePoint(pub i32);

impl TimePoint {
    pub fn year(self) -> i32 {
        self.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Year(TimePoint),
    Unknown,
    /// Ongoing; resolves to the latest year observed in the dataset.
    Present,
}

impl Endpoint {
    pub fn year(y: i32) -> Self {
        Endpoint::Year(TimePoint(y))
    }

    pub fn known(self) -> Option<i32> {
        match self {
            Endpoint::Year(t) => Some(t.0),
            _ => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Year(t) => write!(f, "{t}"),
            Endpoint::Unknown => f.write_str("?"),
            Endpoint::Present => f.write_str("present"),
        }
    }
}

/// Interval as stored in the graph. Unknown endpoints are kept as such.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Endpoint,
    pub end: Endpoint,
}

impl Interval {
    pub fn new(start: Endpoint, end: Endpoint) -> Self {
        Interval { start, end }
    }

    pub fn years(start: i32, end: i32) -> Self {
        Interval::new(Endpoint::year(start), Endpoint::year(end))
    }

    /// A single time stamp is the interval `[t, t]`.
    pub fn stamp(t: i32) -> Self {
        Interval::years(t, t)
    }

    pub fn is_fully_known(&self) -> bool {
        self.start.known().is_some() && self.end.known().is_some()
    }

    /// Resolves `Present` to `max_year`. Fails on any unknown endpoint.
    pub fn resolve(&self, max_year: i32) -> Result<Span> {
        let start = match self.start {
            Endpoint::Year(t) => t.0,
            Endpoint::Present => max_year,
            Endpoint::Unknown => return Err(TilpError::UnresolvedInterval(*self)),
        };
        let end = match self.end {
            Endpoint::Year(t) => t.0,
            Endpoint::Present => max_year,
            Endpoint::Unknown => return Err(TilpError::UnresolvedInterval(*self)),
        };
        Ok(Span::new(start, end.max(start)))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// A fully resolved closed interval `[start, end]` with `start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: i32,
    pub end: i32,
}

impl Span {
    pub fn new(start: i32, end: i32) -> Self {
        debug_assert!(start <= end, "span [{start}, {end}] is reversed");
        Span { start, end }
    }

    pub fn stamp(t: i32) -> Self {
        Span { start: t, end: t }
    }

    pub fn relation_to(&self, other: &Span) -> TemporalRelation {
        if self.end < other.start {
            TemporalRelation::Before
        } else if self.start > other.end {
            TemporalRelation::After
        } else {
            TemporalRelation::Touching
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalRelation {
    Before,
    Touching,
    After,
}

impl TemporalRelation {
    pub const ALL: [TemporalRelation; 3] = [
        TemporalRelation::Before,
        TemporalRelation::Touching,
        TemporalRelation::After,
    ];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            TemporalRelation::Before => 0,
            TemporalRelation::Touching => 1,
            TemporalRelation::After => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn converse(self) -> Self {
        match self {
            TemporalRelation::Before => TemporalRelation::After,
            TemporalRelation::Touching => TemporalRelation::Touching,
            TemporalRelation::After => TemporalRelation::Before,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalRelation::Before => "before",
            TemporalRelation::Touching => "touching",
            TemporalRelation::After => "after",
        }
    }
}

impl fmt::Display for TemporalRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Classifies two stored intervals, resolving `Present` against `max_year`.
/// Unknown endpoints are a contract violation.
pub fn temporal_relation(a: &Interval, b: &Interval, max_year: i32) -> Result<TemporalRelation> {
    Ok(a.resolve(max_year)?.relation_to(&b.resolve(max_year)?))
}
