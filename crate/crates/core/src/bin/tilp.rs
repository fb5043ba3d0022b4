use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tilp::dataset::{time_shift_resplit, DatasetSplit, SplitRanges};
use tilp::error::{Result, TilpError};
use tilp::experiment::{
    loss_rows, read_artifact, run_directory, write_csv, Artifact, Checkpoint, DatasetSource, ExperimentConfig,
    PreparedSplit,
};
use tilp::interval::Span;
use tilp::pipeline::{evaluate, explain, learn, EvalSplit};
use tilp::scenario::{self, ScenarioReport};

#[derive(Parser)]
#[command(name = "tilp", version, about = "Temporal rule learning and link prediction")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    max_rule_len: Option<usize>,
    /// Root directory for run folders.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, impute and split the dataset, then store it.
    Prepare,
    /// Discover rules and train both scoring stages.
    Learn,
    /// Filtered ranking metrics for a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Rank with rule scores only.
        #[arg(long)]
        rules_only: bool,
    },
    /// Ranked answers and supporting groundings for one query.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        relation: String,
        #[arg(long)]
        start: i32,
        /// Defaults to the start year.
        #[arg(long)]
        end: Option<i32>,
    },
    /// Few samples, biased data or shifted time periods.
    Scenario {
        #[arg(value_enum)]
        kind: ScenarioKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    #[value(alias = "few")]
    FewSamples,
    Biased,
    #[value(alias = "shift")]
    TimeShift,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (mut config, base) = match &cli.config {
        Some(p) => (
            ExperimentConfig::from_file(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(l) = cli.max_rule_len {
        config.learn.max_rule_len = l;
    }
    if let Some(o) = cli.output {
        config.output = o;
    }
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .map_err(|e| TilpError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Prepare => prepare(&config, &base),
        Command::Learn => learn_cmd(&config, &base),
        Command::Eval { checkpoint, split, rules_only } => {
            if let Some(s) = split {
                config.eval.split = match s {
                    SplitArg::Valid => EvalSplit::Valid,
                    SplitArg::Test => EvalSplit::Test,
                };
            }
            if rules_only {
                config.eval.temporal_features = false;
            }
            eval_cmd(&config, &base, &checkpoint)
        }
        Command::Explain { checkpoint, subject, relation, start, end } => {
            explain_cmd(&config, &base, &checkpoint, &subject, &relation, Span::new(start, end.unwrap_or(start)))
        }
        Command::Scenario { kind } => scenario_cmd(&config, &base, kind),
    }
}

fn prepare(config: &ExperimentConfig, base: &Path) -> Result<()> {
    let (split, ranges) = config.dataset.load(base)?;
    let dir = run_directory(config, "prepare")?;
    let meta = split.metadata();
    Artifact::new(config, PreparedSplit::new(&split, ranges)).write(&dir.join("prepared.json"))?;
    Artifact::new(config, &meta).write(&dir.join("metadata.json"))?;
    println!(
        "train {} valid {} test {} entities {} relations {}",
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        split.vocab.entity_count(),
        split.vocab.base_relation_count()
    );
    println!("{}", dir.join("prepared.json").display());
    Ok(())
}

fn learn_cmd(config: &ExperimentConfig, base: &Path) -> Result<()> {
    let (split, _) = config.dataset.load(base)?;
    let dir = run_directory(config, "learn")?;
    let (model, report) = learn(&split, &config.learn, config.seed, &mut |_| {})?;
    model.rules.write_jsonl(BufWriter::new(fs::File::create(dir.join("rules.jsonl"))?))?;
    write_csv(&dir.join("loss.csv"), config, "phase,epoch,mean_loss", &loss_rows(&report))?;
    println!(
        "{} examples, {} rules kept of {} discovered",
        report.positive_examples, report.rules_kept, report.rules_discovered
    );
    Artifact::new(config, Checkpoint { model, report }).write(&dir.join("checkpoint.json"))?;
    println!("{}", dir.join("checkpoint.json").display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(read_artifact::<Checkpoint>(path)?.body)
}

/// Dataset the checkpoint was trained on, re-read through the current config.
fn checkpoint_split(config: &ExperimentConfig, base: &Path, ck: &Checkpoint) -> Result<DatasetSplit> {
    let (split, _) = config.dataset.load(base)?;
    if split.vocab != ck.model.vocab {
        return Err(TilpError::Contract("checkpoint vocabulary differs from the configured dataset".into()));
    }
    Ok(split)
}

fn eval_cmd(config: &ExperimentConfig, base: &Path, checkpoint: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let split = checkpoint_split(config, base, &ck)?;
    let dir = run_directory(config, "eval")?;
    let report = evaluate(&ck.model, &split, &config.eval, config.seed)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("rankings.jsonl"))?);
    for a in &report.answers {
        serde_json::to_writer(&mut w, a)?;
        writeln!(w)?;
    }
    w.flush()?;
    let metrics = serde_json::json!({
        "overall": report.overall,
        "object": report.object,
        "subject": report.subject,
        "unresolved_queries": report.unresolved_queries,
    });
    Artifact::new(config, &metrics).write(&dir.join("metrics.json"))?;
    let m = report.overall;
    println!("MRR {:.4}  Hits@1 {:.4}  Hits@10 {:.4}  over {} queries", m.mrr, m.hit1, m.hit10, m.queries);
    Ok(())
}

fn explain_cmd(
    config: &ExperimentConfig,
    base: &Path,
    checkpoint: &Path,
    subject: &str,
    relation: &str,
    span: Span,
) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let split = checkpoint_split(config, base, &ck)?;
    let dir = run_directory(config, "explain")?;
    let answer = explain(&ck.model, &split, subject, relation, span, config.eval.rank.clone())?;
    let mut text = format!("{}\n", answer.query);
    for c in &answer.candidates {
        text.push_str(&format!("{:>6.1}  {:.6}  {}\n", c.rank, c.score, c.name));
    }
    for e in &answer.explanations {
        text.push('\n');
        text.push_str(&e.render());
    }
    fs::write(dir.join("explanation.txt"), &text)?;
    Artifact::new(config, &answer).write(&dir.join("explanation.json"))?;
    print!("{text}");
    Ok(())
}

fn scenario_cmd(config: &ExperimentConfig, base: &Path, kind: ScenarioKind) -> Result<()> {
    let (split, ranges) = config.dataset.load(base)?;
    let s = &config.scenario;
    let (name, report) = match kind {
        ScenarioKind::FewSamples => (
            "few-samples",
            scenario::few_samples(&split, &config.learn, &config.eval, &s.fractions, s.rounds, config.seed)?,
        ),
        ScenarioKind::Biased => (
            "biased",
            scenario::biased(&split, &config.learn, &config.eval, &s.biased_relations, s.biased_quota, s.rounds, config.seed)?,
        ),
        ScenarioKind::TimeShift => {
            let (split, ranges) = shifted(config, split, ranges)?;
            ("time-shift", scenario::time_shift(&split, &ranges, &config.learn, &config.eval, config.seed)?)
        }
    };
    let dir = run_directory(config, name)?;
    write_csv(&dir.join("scenario.csv"), config, ScenarioReport::CSV_HEADER, &report.csv_rows())?;
    Artifact::new(config, &report).write(&dir.join("scenario.json"))?;
    if s.plot {
        fs::write(dir.join("scenario.svg"), report.svg())?;
    }
    for (setting, m, sd) in report.summary() {
        println!("{setting}: MRR {m:.4} ± {sd:.4}");
    }
    if matches!(kind, ScenarioKind::Biased) {
        for (rel, d, sd) in scenario::biased_deltas(&report) {
            println!("delta {rel}: {d:+.4} ± {sd:.4}");
        }
    }
    println!("{}", dir.display());
    Ok(())
}

fn shifted(
    config: &ExperimentConfig,
    split: DatasetSplit,
    ranges: Option<SplitRanges>,
) -> Result<(DatasetSplit, SplitRanges)> {
    if let Some(r) = ranges {
        return Ok((split, r));
    }
    let bounds = config.scenario.shift.or(match &config.dataset {
        DatasetSource::Files { benchmark: Some(b), .. } => Some(b.shift_boundaries()),
        _ => None,
    });
    let (first, second) =
        bounds.ok_or_else(|| TilpError::Config("time-shift needs scenario.shift boundaries".into()))?;
    time_shift_resplit(&split, first, second)
}
