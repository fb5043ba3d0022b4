use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tilp::attention::AttentionParams;
use tilp::dataset::{DatasetSplit, Vocabulary};
use tilp::experiment::{Artifact, Checkpoint, ExperimentConfig, PreparedSplit};
use tilp::graph::Quadruple;
use tilp::interval::{Interval, TemporalRelation};
use tilp::pipeline::{LearnReport, Model};
use tilp::rule::{RuleSet, RuleTemplate};
use tilp::synthetic::{planted_rule, PlantedConfig};
use tilp::tfm::duration::DurationModel;
use tilp::tfm::params::DistributionParams;
use tilp::tfm::score::TfmWeights;

fn tilp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilp"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The single run directory for `command` under `runs/`.
fn run_dir(dir: &Path, command: &str) -> PathBuf {
    let mut found: Vec<PathBuf> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().contains(&format!("-{command}-")))
        .collect();
    found.sort();
    found.pop().expect("run directory")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// a -p-> b (2000), a -p-> c (2001) for training; q(a, b, 2005) is tested.
fn toy(dir: &Path) {
    let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()], vec!["p".into(), "q".into()]);
    let train = vec![
        Quadruple::new(0, 0, 1, Interval::stamp(2000)),
        Quadruple::new(0, 0, 2, Interval::stamp(2001)),
    ];
    let test = vec![Quadruple::new(0, 1, 1, Interval::stamp(2005))];
    let split = DatasetSplit::from_parts(vocab.clone(), train, vec![], test);
    let config = ExperimentConfig::default();
    Artifact::new(&config, PreparedSplit::new(&split, None)).write(&dir.join("prepared.json")).unwrap();

    let (p, q, p_inv, q_inv) = (0, 1, 2, 3);
    let rel = tilp::graph::RelationId;
    let mut rules = RuleSet::new();
    rules.insert(
        RuleTemplate { head: rel(q), predicates: vec![rel(p)], tr_query: vec![TemporalRelation::Before], tr_pairs: vec![] },
        1,
    );
    rules.insert(
        RuleTemplate {
            head: rel(q_inv),
            predicates: vec![rel(p_inv)],
            tr_query: vec![TemporalRelation::Before],
            tr_pairs: vec![],
        },
        1,
    );
    let graph = split.train_graph();
    let model = Model {
        vocab,
        rules,
        attention: AttentionParams::zeros(4, 4, 1),
        distributions: DistributionParams::prior(DurationModel::fit(&graph)),
        weights: TfmWeights::new(4),
        imputation_seed: 0,
    };
    Artifact::new(&config, Checkpoint { model, report: LearnReport::default() })
        .write(&dir.join("checkpoint.json"))
        .unwrap();
    fs::write(
        dir.join("toy.toml"),
        "output = \"runs\"\n[dataset]\nkind = \"prepared\"\npath = \"prepared.json\"\n[eval]\ntemporal_features = false\n",
    )
    .unwrap();
}

#[test]
fn uniform_checkpoint_on_a_toy_graph() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let out = tilp(dir.path(), &["eval", "--config", "toy.toml", "--checkpoint", "checkpoint.json"]);
    stdout(&out);
    let metrics = json(&run_dir(dir.path(), "eval").join("metrics.json"));
    // object query: b and c tie at the top, rank 1.5; subject query: a alone, rank 1
    let body = &metrics["body"];
    assert_eq!(body["object"]["mrr"].as_f64().unwrap(), 1.0 / 1.5);
    assert_eq!(body["subject"]["mrr"].as_f64().unwrap(), 1.0);
    assert_eq!(body["overall"]["mrr"].as_f64().unwrap(), (1.0 / 1.5 + 1.0) / 2.0);
    assert_eq!(body["overall"]["hit1"].as_f64().unwrap(), 0.5);
}

#[test]
fn reruns_reproduce_metrics_and_stamp_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    for out in ["first", "second"] {
        let o = tilp(dir.path(), &["eval", "--config", "toy.toml", "--checkpoint", "checkpoint.json", "--output", out]);
        stdout(&o);
    }
    let find = |root: &str| -> PathBuf {
        fs::read_dir(dir.path().join(root)).unwrap().next().unwrap().unwrap().path()
    };
    let (a, b) = (find("first"), find("second"));
    let (ma, mb) = (json(&a.join("metrics.json")), json(&b.join("metrics.json")));
    assert_eq!(ma["body"], mb["body"]);
    assert_eq!(fs::read(a.join("rankings.jsonl")).unwrap(), fs::read(b.join("rankings.jsonl")).unwrap());
    let hash = ma["config_hash"].as_str().unwrap();
    assert!(a.file_name().unwrap().to_string_lossy().ends_with(hash));
    assert_eq!(ma["seed"].as_u64(), Some(0));
    let stamped = ExperimentConfig::from_file(&a.join("config.toml")).unwrap();
    assert_eq!(stamped.hash(), hash);
}

#[test]
fn explain_prints_the_planted_rule() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("planted.toml"),
        "seed = 1\noutput = \"runs\"\n[dataset]\nkind = \"planted\"\npositives = 60\nrandom_facts = 60\ncolleague_links = 30\n\
         [learn]\nmax_rule_len = 2\ndim = 8\n",
    )
    .unwrap();
    stdout(&tilp(dir.path(), &["--config", "planted.toml", "learn"]));
    let learned = run_dir(dir.path(), "learn");
    for f in ["checkpoint.json", "rules.jsonl", "loss.csv", "config.toml"] {
        assert!(learned.join(f).exists(), "{f} missing");
    }
    let loss = fs::read_to_string(learned.join("loss.csv")).unwrap();
    assert!(loss.starts_with("# config_hash="));

    let split = tilp::synthetic::planted_dataset(&PlantedConfig {
        positives: 60,
        random_facts: 60,
        colleague_links: 30,
        seed: PlantedConfig::default().seed,
        ..PlantedConfig::default()
    })
    .split;
    let fact = split.test[0];
    let subject = split.vocab.entity_name(fact.subject);
    let start = fact.interval.start.known().unwrap().to_string();
    let end = fact.interval.end.known().unwrap().to_string();
    let ck = learned.join("checkpoint.json");
    let text = stdout(&tilp(
        dir.path(),
        &[
            "--config", "planted.toml", "explain", "--checkpoint", ck.to_str().unwrap(), "--subject", &subject,
            "--relation", "affiliatedWith", "--start", &start, "--end", &end,
        ],
    ));
    let rule = planted_rule(&split.vocab).display(&split.vocab);
    assert!(text.contains(&format!("Rule 1: {rule}")), "{text}");
    assert!(text.contains("Grounding: E1 = "));
    let top = text.lines().nth(1).unwrap();
    assert!(top.ends_with(&split.vocab.entity_name(fact.object)), "{text}");
    assert!(run_dir(dir.path(), "explain").join("explanation.txt").exists());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = \"not a number\"\n").unwrap();
    assert_eq!(tilp(dir.path(), &["--config", "bad.toml", "prepare"]).status.code(), Some(2));

    fs::write(dir.path().join("train.txt"), "a\tp\tb\t2000\t2001\n").unwrap();
    fs::write(dir.path().join("empty.txt"), "").unwrap();
    fs::write(
        dir.path().join("bench.toml"),
        "output = \"runs\"\n[dataset]\nkind = \"files\"\ntrain = \"train.txt\"\nvalid = \"empty.txt\"\ntest = \"empty.txt\"\nbenchmark = \"wikidata12k\"\n",
    )
    .unwrap();
    assert_eq!(tilp(dir.path(), &["--config", "bench.toml", "prepare"]).status.code(), Some(3));

    fs::write(dir.path().join("broken.txt"), "a\tp\n").unwrap();
    fs::write(
        dir.path().join("parse.toml"),
        "output = \"runs\"\n[dataset]\nkind = \"files\"\ntrain = \"broken.txt\"\nvalid = \"empty.txt\"\ntest = \"empty.txt\"\n",
    )
    .unwrap();
    assert_eq!(tilp(dir.path(), &["--config", "parse.toml", "prepare"]).status.code(), Some(2));

    fs::write(
        dir.path().join("diverge.toml"),
        "output = \"runs\"\n[dataset]\nkind = \"planted\"\npositives = 20\nrandom_facts = 10\ncolleague_links = 5\n\
         [learn]\nmax_rule_len = 2\ndim = 4\n[learn.phase1]\nepochs = 3\nlearning_rate = 1e308\n",
    )
    .unwrap();
    let o = tilp(dir.path(), &["--config", "diverge.toml", "learn"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn prepare_then_learn_from_the_prepared_split() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.toml"),
        "output = \"runs\"\n[dataset]\nkind = \"planted\"\npositives = 30\nrandom_facts = 20\ncolleague_links = 10\n",
    )
    .unwrap();
    let text = stdout(&tilp(dir.path(), &["--config", "p.toml", "--seed", "5", "prepare"]));
    assert!(text.starts_with("train "));
    let prepared = run_dir(dir.path(), "prepare");
    let meta = json(&prepared.join("metadata.json"));
    assert_eq!(meta["seed"].as_u64(), Some(5));
    assert!(meta["body"]["entity_count"].as_u64().unwrap() > 30);
    let path = prepared.join("prepared.json");
    fs::write(
        dir.path().join("q.toml"),
        format!(
            "output = \"runs2\"\n[dataset]\nkind = \"prepared\"\npath = {:?}\n[learn]\ndim = 4\n",
            path.to_str().unwrap()
        ),
    )
    .unwrap();
    stdout(&tilp(dir.path(), &["--config", "q.toml", "--max-rule-len", "2", "--workers", "1", "learn"]));
    let root = dir.path().join("runs2");
    let run = fs::read_dir(&root).unwrap().next().unwrap().unwrap().path();
    let config = ExperimentConfig::from_file(&run.join("config.toml")).unwrap();
    assert_eq!(config.learn.max_rule_len, 2);
    assert_eq!(config.workers, 1);
}
