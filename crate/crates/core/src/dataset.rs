//! Tab-separated dataset loading, vocabularies and start-time resplitting.
//!
//! Each line reads `subject \t relation \t object \t start \t end`. Date
//! tokens may be plain years (`1990`, `-431`) or ISO-like dates with month
//! and day parts (`2003-07`, `1990-##-##`); only the year is kept. Empty
//! tokens and tokens made of `#` are unknown, `present` marks an ongoing
//! fact.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TilpError};
use crate::graph::{latest_year, EntityId, Quadruple, RelationId, TemporalGraph};
use crate::interval::{Endpoint, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatConfig {
    pub delimiter: char,
    /// Years later than this are treated as data errors and corrected.
    pub year_cap: i32,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            delimiter: '\t',
            year_cap: 2022,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyLists")]
pub struct Vocabulary {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    #[serde(skip)]
    entity_index: HashMap<String, EntityId>,
    #[serde(skip)]
    relation_index: HashMap<String, RelationId>,
}

#[derive(Deserialize)]
struct VocabularyLists {
    entities: Vec<String>,
    relations: Vec<String>,
}

impl From<VocabularyLists> for Vocabulary {
    fn from(v: VocabularyLists) -> Self {
        Vocabulary::new(v.entities, v.relations)
    }
}

impl Vocabulary {
    pub fn new(entities: Vec<String>, relations: Vec<String>) -> Self {
        let mut v = Vocabulary {
            entities,
            relations,
            ..Default::default()
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.entity_index = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), EntityId(i as u32)))
            .collect();
        self.relation_index = self
            .relations
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), RelationId(i as u32)))
            .collect();
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(name) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(name.to_string());
        self.entity_index.insert(name.to_string(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(name.to_string());
        self.relation_index.insert(name.to_string(), id);
        id
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        if let Some(base) = name.strip_suffix("^-1") {
            return self
                .relation_index
                .get(base)
                .map(|r| RelationId(r.0 + self.relations.len() as u32));
        }
        self.relation_index.get(name).copied()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn base_relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_name(&self, e: EntityId) -> String {
        self.entities
            .get(e.index())
            .cloned()
            .unwrap_or_else(|| e.to_string())
    }

    /// Name of a relation; inverses get a `^-1` suffix.
    pub fn relation_name(&self, r: RelationId) -> String {
        let base = self.relations.len();
        if r.index() < base {
            self.relations[r.index()].clone()
        } else if r.index() < 2 * base {
            format!("{}^-1", self.relations[r.index() - base])
        } else {
            r.to_string()
        }
    }

    /// Vocabulary with generated names, for synthetic graphs.
    pub fn synthetic(entity_count: usize, base_relations: usize) -> Self {
        Vocabulary::new(
            (0..entity_count).map(|i| format!("e{i}")).collect(),
            (0..base_relations).map(|i| format!("r{i}")).collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub corrected_start_years: usize,
    pub corrected_end_years: usize,
    pub swapped_intervals: usize,
}

/// Train/valid/test facts sharing one vocabulary.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub vocab: Vocabulary,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub max_year: i32,
    pub report: LoadReport,
}

impl DatasetSplit {
    pub fn all_facts(&self) -> Vec<Quadruple> {
        let mut all = Vec::with_capacity(self.train.len() + self.valid.len() + self.test.len());
        all.extend_from_slice(&self.train);
        all.extend_from_slice(&self.valid);
        all.extend_from_slice(&self.test);
        all
    }

    fn graph_of(&self, quads: &[Quadruple]) -> TemporalGraph {
        TemporalGraph::build(
            quads,
            self.vocab.entity_count(),
            self.vocab.base_relation_count(),
            self.max_year,
        )
    }

    pub fn train_graph(&self) -> TemporalGraph {
        self.graph_of(&self.train)
    }

    pub fn train_valid_graph(&self) -> TemporalGraph {
        let mut q = self.train.clone();
        q.extend_from_slice(&self.valid);
        self.graph_of(&q)
    }

    pub fn full_graph(&self) -> TemporalGraph {
        self.graph_of(&self.all_facts())
    }

    pub fn metadata(&self) -> DatasetMetadata {
        let starts = self.all_facts().iter().filter_map(|q| q.interval.start.known()).collect::<Vec<_>>();
        DatasetMetadata {
            entities: self.vocab.entities.clone(),
            relations: self.vocab.relations.clone(),
            entity_count: self.vocab.entity_count(),
            base_relation_count: self.vocab.base_relation_count(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
            min_start_year: starts.iter().min().copied(),
            max_year: self.max_year,
            report: self.report.clone(),
        }
    }

    /// Rebuilds a split from explicit parts, recomputing `max_year`.
    pub fn from_parts(
        vocab: Vocabulary,
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
    ) -> Self {
        let max_year = latest_year(
            train
                .iter()
                .chain(&valid)
                .chain(&test)
                .map(|q| &q.interval),
        )
        .unwrap_or(0);
        DatasetSplit {
            vocab,
            train,
            valid,
            test,
            max_year,
            report: LoadReport::default(),
        }
    }
}

/// JSON sidecar written next to a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub entity_count: usize,
    pub base_relation_count: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub min_start_year: Option<i32>,
    pub max_year: i32,
    pub report: LoadReport,
}

/// Parses one date token down to its year.
pub fn parse_date_token(token: &str) -> std::result::Result<Endpoint, String> {
    let t = token.trim();
    if t.is_empty() || t.chars().all(|c| c == '#') {
        return Ok(Endpoint::Unknown);
    }
    if t.eq_ignore_ascii_case("present") || t.eq_ignore_ascii_case("now") {
        return Ok(Endpoint::Present);
    }
    let (negative, rest) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t),
    };
    let year = rest.split('-').next().unwrap_or("");
    if year.is_empty() {
        return Err(format!("malformed date token {token:?}"));
    }
    if year.contains('#') {
        return Ok(Endpoint::Unknown);
    }
    let value: i32 = year
        .parse()
        .map_err(|_| format!("malformed date token {token:?}"))?;
    Ok(Endpoint::year(if negative { -value } else { value }))
}

fn load_file(
    path: &Path,
    vocab: &mut Vocabulary,
    format: &FormatConfig,
    report: &mut LoadReport,
) -> Result<Vec<Quadruple>> {
    let text = fs::read_to_string(path)?;
    let mut quads = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| TilpError::Parse {
            path: PathBuf::from(path),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split(format.delimiter).collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let (s, r, o) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if s.is_empty() || r.is_empty() || o.is_empty() {
            return Err(parse_err("empty subject, relation or object".into()));
        }
        let mut start = parse_date_token(fields[3]).map_err(parse_err)?;
        let mut end = parse_date_token(fields[4]).map_err(parse_err)?;
        if let Endpoint::Year(t) = start {
            if t.0 > format.year_cap {
                start = Endpoint::Unknown;
                report.corrected_start_years += 1;
            }
        }
        if let Endpoint::Year(t) = end {
            if t.0 > format.year_cap {
                end = Endpoint::Present;
                report.corrected_end_years += 1;
            }
        }
        if let (Some(a), Some(b)) = (start.known(), end.known()) {
            if a > b {
                std::mem::swap(&mut start, &mut end);
                report.swapped_intervals += 1;
            }
        }
        if start == Endpoint::Present {
            return Err(parse_err("start time cannot be 'present'".into()));
        }
        quads.push(Quadruple {
            subject: vocab.intern_entity(s),
            relation: vocab.intern_relation(r),
            object: vocab.intern_entity(o),
            interval: Interval::new(start, end),
        });
    }
    Ok(quads)
}

/// Loads the three split files with a shared vocabulary.
pub fn load_dataset(
    train_path: impl AsRef<Path>,
    valid_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    format: &FormatConfig,
) -> Result<DatasetSplit> {
    let mut vocab = Vocabulary::default();
    let mut report = LoadReport::default();
    let train = load_file(train_path.as_ref(), &mut vocab, format, &mut report)?;
    let valid = load_file(valid_path.as_ref(), &mut vocab, format, &mut report)?;
    let test = load_file(test_path.as_ref(), &mut vocab, format, &mut report)?;
    let mut split = DatasetSplit::from_parts(vocab, train, valid, test);
    split.report = report;
    Ok(split)
}

/// Start-year ranges actually covered by a resplit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: (i32, i32),
    pub valid: (i32, i32),
    pub test: (i32, i32),
}

/// Reassigns every fact by start year: `[min, first]` to train,
/// `(first, second]` to valid and `(second, max]` to test. Facts without a
/// start year go to train.
pub fn time_shift_resplit(
    split: &DatasetSplit,
    first: i32,
    second: i32,
) -> Result<(DatasetSplit, SplitRanges)> {
    if first >= second {
        return Err(TilpError::InvalidBoundary { first, second });
    }
    let all = split.all_facts();
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for q in all {
        match q.interval.start.known() {
            None => train.push(q),
            Some(t) if t <= first => train.push(q),
            Some(t) if t <= second => valid.push(q),
            Some(_) => test.push(q),
        }
    }
    let starts = |v: &[Quadruple]| {
        let mut it = v.iter().filter_map(|q| q.interval.start.known());
        let first = it.next();
        first.map(|f| it.fold((f, f), |(lo, hi), t| (lo.min(t), hi.max(t))))
    };
    let min_start = starts(&train).map(|r| r.0).unwrap_or(first);
    let max_start = starts(&test).map(|r| r.1).unwrap_or(second);
    let ranges = SplitRanges {
        train: (min_start, first),
        valid: (first, second),
        test: (second, max_start),
    };
    let mut out = DatasetSplit::from_parts(split.vocab.clone(), train, valid, test);
    out.max_year = split.max_year;
    out.report = split.report.clone();
    Ok((out, ranges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn date_tokens() {
        assert_eq!(parse_date_token("2003-07").unwrap(), Endpoint::year(2003));
        assert_eq!(parse_date_token("1990-##-##").unwrap(), Endpoint::year(1990));
        assert_eq!(parse_date_token("-431").unwrap(), Endpoint::year(-431));
        assert_eq!(parse_date_token("-431-##-##").unwrap(), Endpoint::year(-431));
        assert_eq!(parse_date_token("####").unwrap(), Endpoint::Unknown);
        assert_eq!(parse_date_token("####-##-##").unwrap(), Endpoint::Unknown);
        assert_eq!(parse_date_token("").unwrap(), Endpoint::Unknown);
        assert_eq!(parse_date_token("present").unwrap(), Endpoint::Present);
        assert!(parse_date_token("abc").is_err());
    }

    #[test]
    fn loads_three_line_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let train = write(
            dir.path(),
            "train.txt",
            "a\tworksAt\tb\t2003-07\t2005\nb\tlocatedIn\tc\t1990\t####\na\tlivesIn\tc\t####\t2001\n",
        );
        let empty = write(dir.path(), "empty.txt", "");
        let split = load_dataset(&train, &empty, &empty, &FormatConfig::default()).unwrap();
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.train[0].interval, Interval::years(2003, 2005));
        assert_eq!(split.train[1].interval.end, Endpoint::Unknown);
        assert_eq!(split.train[2].interval.start, Endpoint::Unknown);
        assert_eq!(split.vocab.entity_count(), 3);
        assert_eq!(split.vocab.base_relation_count(), 3);
        assert_eq!(split.max_year, 2005);
    }

    #[test]
    fn empty_files_give_an_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "empty.txt", "");
        let split = load_dataset(&empty, &empty, &empty, &FormatConfig::default()).unwrap();
        assert!(split.train.is_empty() && split.valid.is_empty() && split.test.is_empty());
        assert_eq!(split.vocab.entity_count(), 0);
        assert_eq!(split.vocab.base_relation_count(), 0);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write(dir.path(), "bad.txt", "a\tr\tb\t2000\t2001\na\tr\tb\t2000\n");
        let empty = write(dir.path(), "empty.txt", "");
        match load_dataset(&bad, &empty, &empty, &FormatConfig::default()) {
            Err(TilpError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn years_past_the_cap_are_corrected() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "t.txt", "a\tr\tb\t2030\t2031\na\tr\tc\t2000\t3000\n");
        let empty = write(dir.path(), "empty.txt", "");
        let split = load_dataset(&f, &empty, &empty, &FormatConfig::default()).unwrap();
        assert_eq!(split.train[0].interval.start, Endpoint::Unknown);
        assert_eq!(split.train[0].interval.end, Endpoint::Present);
        assert_eq!(split.train[1].interval.end, Endpoint::Present);
        assert_eq!(split.report.corrected_start_years, 1);
        assert_eq!(split.report.corrected_end_years, 2);
    }

    #[test]
    fn vocabulary_is_shared_across_splits() {
        let dir = tempfile::tempdir().unwrap();
        let train = write(dir.path(), "train.txt", "a\tr\tb\t2000\t2000\n");
        let test = write(dir.path(), "test.txt", "c\tq\ta\t2001\t2001\n");
        let empty = write(dir.path(), "empty.txt", "");
        let split = load_dataset(&train, &empty, &test, &FormatConfig::default()).unwrap();
        assert_eq!(split.vocab.entity_count(), 3);
        assert_eq!(split.test[0].object, split.train[0].subject);
    }

    fn years_fixture(years: &[i32]) -> DatasetSplit {
        let quads = years
            .iter()
            .enumerate()
            .map(|(i, &y)| Quadruple::new(i as u32, 0, i as u32 + 1, Interval::stamp(y)))
            .collect();
        DatasetSplit::from_parts(Vocabulary::synthetic(years.len() + 1, 1), quads, vec![], vec![])
    }

    #[test]
    fn resplit_counts() {
        let split = years_fixture(&(2000..2010).collect::<Vec<_>>());
        let (out, ranges) = time_shift_resplit(&split, 2004, 2007).unwrap();
        assert_eq!((out.train.len(), out.valid.len(), out.test.len()), (5, 3, 2));
        assert_eq!(ranges.train, (2000, 2004));
        assert_eq!(ranges.test, (2007, 2009));
    }

    #[test]
    fn resplit_degenerate_boundary() {
        let split = years_fixture(&[1999; 6]);
        let (out, _) = time_shift_resplit(&split, 1999, 2000).unwrap();
        assert_eq!(out.train.len(), 6);
        assert!(out.valid.is_empty() && out.test.is_empty());
    }

    #[test]
    fn resplit_rejects_bad_boundaries() {
        let split = years_fixture(&[2000]);
        assert!(matches!(
            time_shift_resplit(&split, 2005, 2005),
            Err(TilpError::InvalidBoundary { .. })
        ));
    }

    #[test]
    fn resplit_puts_missing_starts_in_train() {
        let mut split = years_fixture(&[2010, 2011]);
        split.test.push(Quadruple::new(0, 0, 2, Interval::new(Endpoint::Unknown, Endpoint::year(2015))));
        let (out, _) = time_shift_resplit(&split, 2000, 2005).unwrap();
        assert_eq!(out.train.len(), 1);
        assert_eq!(out.test.len(), 2);
    }
}
