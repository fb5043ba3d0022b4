//! Declarative experiment configuration and run artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset, DatasetMetadata, DatasetSplit, FormatConfig, SplitRanges, Vocabulary};
use crate::error::{Result, TilpError};
use crate::graph::Quadruple;
use crate::pipeline::{EvalSettings, LearnReport, LearnSettings, Model};
use crate::synthetic::{planted_dataset, time_shifted_dataset, PlantedConfig};

/// Published benchmark whose sizes a load is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Wikidata12k,
    Yago11k,
}

impl Benchmark {
    /// `(train, valid, test, entities, base relations)`.
    pub fn expected_sizes(self) -> (usize, usize, usize, usize, usize) {
        match self {
            Benchmark::Wikidata12k => (32_497, 4_062, 4_062, 12_544, 24),
            Benchmark::Yago11k => (16_408, 2_051, 2_050, 10_622, 10),
        }
    }

    /// Time-shift boundaries used for this benchmark.
    pub fn shift_boundaries(self) -> (i32, i32) {
        match self {
            Benchmark::Wikidata12k => (2008, 2012),
            Benchmark::Yago11k => (2006, 2011),
        }
    }

    pub fn check(self, split: &DatasetSplit) -> Result<()> {
        let want = self.expected_sizes();
        let got = (
            split.train.len(),
            split.valid.len(),
            split.test.len(),
            split.vocab.entity_count(),
            split.vocab.base_relation_count(),
        );
        if got != want {
            return Err(TilpError::Contract(format!(
                "{self:?} sizes (train, valid, test, entities, relations) are {got:?}, expected {want:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Tab-separated train/valid/test files, relative to the config file.
    Files {
        train: PathBuf,
        valid: PathBuf,
        test: PathBuf,
        #[serde(default)]
        format: FormatConfig,
        #[serde(default)]
        benchmark: Option<Benchmark>,
    },
    /// A split written by `prepare`.
    Prepared { path: PathBuf },
    Planted(PlantedConfig),
    PlantedShift {
        #[serde(default)]
        planted: PlantedConfig,
        first: i32,
        second: i32,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Planted(PlantedConfig::default())
    }
}

impl DatasetSource {
    pub fn load(&self, base: &Path) -> Result<(DatasetSplit, Option<SplitRanges>)> {
        match self {
            DatasetSource::Files { train, valid, test, format, benchmark } => {
                let split = load_dataset(base.join(train), base.join(valid), base.join(test), format)?;
                if let Some(b) = benchmark {
                    b.check(&split)?;
                }
                Ok((split, None))
            }
            DatasetSource::Prepared { path } => {
                let text = fs::read_to_string(base.join(path))?;
                let artifact: Artifact<PreparedSplit> = serde_json::from_str(&text)?;
                Ok((artifact.body.into_split(), None))
            }
            DatasetSource::Planted(cfg) => Ok((planted_dataset(cfg).split, None)),
            DatasetSource::PlantedShift { planted, first, second } => {
                let d = time_shifted_dataset(planted, *first, *second)?;
                Ok((d.split, d.ranges))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSettings {
    pub fractions: Vec<f64>,
    pub rounds: usize,
    /// Relations thinned one at a time; empty means every relation.
    pub biased_relations: Vec<String>,
    /// Test queries kept per relation after rebalancing.
    pub biased_quota: usize,
    pub shift: Option<(i32, i32)>,
    pub plot: bool,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        ScenarioSettings {
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            rounds: 5,
            biased_relations: Vec::new(),
            biased_quota: 100,
            shift: None,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; zero uses every core.
    pub workers: usize,
    pub output: PathBuf,
    pub dataset: DatasetSource,
    pub learn: LearnSettings,
    pub eval: EvalSettings,
    pub scenario: ScenarioSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            output: PathBuf::from("runs"),
            dataset: DatasetSource::default(),
            learn: LearnSettings::default(),
            eval: EvalSettings::default(),
            scenario: ScenarioSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TilpError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| TilpError::Config(e.to_string()))
    }

    /// Short SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Wrapper that stamps every JSON artifact with the config that made it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub body: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(config: &ExperimentConfig, body: T) -> Self {
        Artifact { config_hash: config.hash(), seed: config.seed, config: config.clone(), body }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

pub fn read_artifact<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Dataset as written by `prepare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreparedSplit {
    pub metadata: DatasetMetadata,
    pub vocab: Vocabulary,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub max_year: i32,
    pub ranges: Option<SplitRanges>,
}

impl PreparedSplit {
    pub fn new(split: &DatasetSplit, ranges: Option<SplitRanges>) -> Self {
        PreparedSplit {
            metadata: split.metadata(),
            vocab: split.vocab.clone(),
            train: split.train.clone(),
            valid: split.valid.clone(),
            test: split.test.clone(),
            max_year: split.max_year,
            ranges,
        }
    }

    pub fn into_split(self) -> DatasetSplit {
        DatasetSplit {
            vocab: self.vocab,
            train: self.train,
            valid: self.valid,
            test: self.test,
            max_year: self.max_year,
            report: self.metadata.report,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub report: LearnReport,
}

/// Creates `<output>/<utc timestamp>-<command>-<hash>/`.
pub fn run_directory(config: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let dir = config.output.join(format!("{stamp}-{command}-{}", config.hash()));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    Ok(dir)
}

/// CSV with a provenance comment line.
pub fn write_csv(path: &Path, config: &ExperimentConfig, header: &str, rows: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# config_hash={} seed={}", config.hash(), config.seed)?;
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

/// Loss traces as `phase,epoch,mean_loss` rows.
pub fn loss_rows(report: &LearnReport) -> Vec<String> {
    let mut rows = Vec::new();
    for (phase, trace) in [(1, &report.phase1_loss), (2, &report.phase2_loss)] {
        for (e, l) in trace.iter().enumerate() {
            rows.push(format!("{phase},{e},{l}"));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_stable_hash() {
        let mut c = ExperimentConfig::default();
        c.seed = 11;
        c.dataset = DatasetSource::PlantedShift { planted: PlantedConfig::default(), first: 1983, second: 1995 };
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        c.seed = 12;
        assert_ne!(back.hash(), c.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = ExperimentConfig::from_toml(
            "seed = 3\n[dataset]\nkind = \"planted\"\npositives = 50\n[learn]\nmax_rule_len = 3\n",
        )
        .unwrap();
        assert_eq!(c.learn.max_rule_len, 3);
        assert_eq!(c.learn.dim, 32);
        match c.dataset {
            DatasetSource::Planted(p) => assert_eq!(p.positives, 50),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let e = ExperimentConfig::from_toml("seed = \"x\"").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
