mod config;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use coqe_core::align::AlignmentConfig;
use coqe_core::augment::{augment_corpus, AugmentConfig, BalanceMode, BucketKey};
use coqe_core::csi::{
    self, evaluate_csi, examples_from_corpus, filter_unannotated, train, FeatureKind,
    FeatureSource, ModelFile, SimilarityBackend, SimilarityConfig, TrainConfig, COMPARATIVE,
};
use coqe_core::eval::{full_grid, pair_records};
use coqe_core::instructions::{build_dataset, InstructionTable, SubTask};
use coqe_core::io::{
    load_corpus, load_generations, load_vectors, read_jsonl, write_corpus, write_jsonl, LoadMode,
};
use coqe_core::pipeline::{extract, run_pipeline};
use coqe_core::{CorpusRecord, TemplateKind};

/// Comparative opinion quintuple extraction toolkit.
#[derive(Debug, Parser)]
#[command(name = "coqe", version)]
struct Cli {
    /// Flat TOML file whose keys mirror flag names. Flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check a corpus file: index/token agreement, labels, predicates.
    Validate(ValidateArgs),
    /// Remove unannotated records too similar to a comparative one.
    Filter(FilterArgs),
    /// Train the comparative-sentence classifier.
    TrainCsi(TrainArgs),
    /// Classify records as comparative or not with a trained model.
    PredictCsi(PredictArgs),
    /// Build the multi-task instruction dataset.
    BuildInstructions(InstructionArgs),
    /// Augment a corpus by replacing elements with other gold phrases.
    Augment(AugmentArgs),
    /// Parse generated outputs and recover token indices.
    ParseGeneration(ParseArgs),
    /// Score predictions against gold over every element combination.
    Evaluate(EvaluateArgs),
    /// Run both stages: classification gate, then parsing and alignment.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Minimum normalized Levenshtein similarity for a window to match.
    #[arg(long, default_value_t = 0.8)]
    fuzzy_threshold: f64,
    /// Windows may differ from the element length by this many tokens.
    #[arg(long, default_value_t = 1)]
    max_span_slack: usize,
    /// Match case-sensitively.
    #[arg(long)]
    no_case_fold: bool,
}

impl AlignArgs {
    fn config(&self) -> Result<AlignmentConfig> {
        let cfg = AlignmentConfig {
            fuzzy_threshold: self.fuzzy_threshold,
            max_span_slack: self.max_span_slack,
            case_fold: !self.no_case_fold,
        };
        cfg.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Report invalid records but exit 0.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// lexical or external-vectors.
    #[arg(long, default_value = "lexical", value_parser = parse_backend)]
    backend: SimilarityBackend,
    /// JSONL of {"id", "vector"} rows, required by the external-vectors backend.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the model (JSON).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Use per-id vectors instead of hashed n-gram features.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// JSONL of {"id", "comparative", "probability"} rows.
    #[arg(long)]
    out: PathBuf,
    /// Comparative when P(comparative) reaches this value.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InstructionArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sub-tasks, e.g. SOAPL,AP. All ten by default.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<SubTask>,
    /// Also emit samples for reviews without quintuples (target "None").
    #[arg(long)]
    include_noncomparative: bool,
    /// JSON object mapping sub-task codes to instruction strings.
    #[arg(long)]
    instructions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    /// Variants generated per comparative record.
    #[arg(long, default_value_t = 1)]
    per_record: usize,
    /// Probability of replacing each element.
    #[arg(long, default_value_t = 0.5)]
    replace_prob: f64,
    /// min, cap:N or off.
    #[arg(long, default_value = "min")]
    balance: BalanceMode,
    /// Which quintuple sets a record's balancing bucket: first or max.
    #[arg(long, default_value = "first", value_parser = parse_bucket)]
    bucket: BucketKey,
    #[command(flatten)]
    align: AlignArgs,
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Corpus holding the source sentences.
    #[arg(long)]
    corpus: PathBuf,
    /// JSONL of {"id", "output"} rows.
    #[arg(long)]
    predictions: PathBuf,
    /// Predicted corpus with recovered indices.
    #[arg(long)]
    out: PathBuf,
    /// tagged or delimited.
    #[arg(long, default_value = "delimited")]
    template: TemplateKind,
    /// Optional JSONL listing every parse and alignment issue.
    #[arg(long)]
    issues: Option<PathBuf>,
    #[command(flatten)]
    align: AlignArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Full report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("stage1").required(true).args(["model", "csi", "oracle_csi"])))]
struct PipelineArgs {
    /// Reviews to process.
    #[arg(long)]
    corpus: PathBuf,
    /// Generation outputs, JSONL of {"id", "output"} rows.
    #[arg(long)]
    predictions: PathBuf,
    /// Predicted corpus.
    #[arg(long)]
    out: PathBuf,
    /// Stage 1 from a trained model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Stage 1 from a predict-csi output file.
    #[arg(long)]
    csi: Option<PathBuf>,
    /// Stage 1 from the corpus's own annotations.
    #[arg(long)]
    oracle_csi: bool,
    #[arg(long, default_value_t = 0.5)]
    csi_threshold: f64,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Gold corpus to score against.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "delimited")]
    template: TemplateKind,
    #[command(flatten)]
    align: AlignArgs,
}

fn parse_backend(s: &str) -> Result<SimilarityBackend, String> {
    match s {
        "lexical" => Ok(SimilarityBackend::Lexical),
        "external-vectors" => Ok(SimilarityBackend::ExternalVectors),
        _ => Err(format!("expected lexical or external-vectors, got {s:?}")),
    }
}

fn parse_bucket(s: &str) -> Result<BucketKey, String> {
    match s {
        "first" => Ok(BucketKey::First),
        "max" => Ok(BucketKey::Max),
        _ => Err(format!("expected first or max, got {s:?}")),
    }
}

/// Errors in how the tool was invoked; exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn input(path: &Path) -> Result<&Path> {
    if !path.exists() {
        return Err(Usage(format!("input file not found: {}", path.display())).into());
    }
    Ok(path)
}

fn print(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    Ok(load_corpus(input(path)?, LoadMode::Strict)?.records)
}

fn vectors(path: Option<&PathBuf>) -> Result<Option<HashMap<String, Vec<f64>>>> {
    path.map(|p| Ok(load_vectors(input(p)?)?)).transpose()
}

fn source<'a>(
    kind: FeatureKind,
    vectors: &'a Option<HashMap<String, Vec<f64>>>,
) -> Result<FeatureSource<'a>> {
    match (kind, vectors) {
        (FeatureKind::Hashed, _) => Ok(FeatureSource::Hashed),
        (FeatureKind::External, Some(v)) => Ok(FeatureSource::External(v)),
        (FeatureKind::External, None) => {
            Err(Usage("model uses external vectors; pass --embeddings".into()).into())
        }
    }
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(input(path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn generations(path: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for row in load_generations(input(path)?)? {
        if map.insert(row.id.clone(), row.output).is_some() {
            bail!("{}: duplicate id {:?}", path.display(), row.id);
        }
    }
    Ok(map)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsiRow {
    id: String,
    comparative: bool,
    probability: f64,
}

fn cmd_validate(a: &ValidateArgs) -> Result<ExitCode> {
    let loaded = load_corpus(input(&a.corpus)?, LoadMode::Lenient)?;
    let mut seen = HashSet::new();
    let duplicates: Vec<&str> = loaded
        .records
        .iter()
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.as_str())
        .collect();
    let errors: Vec<_> = loaded
        .errors
        .iter()
        .map(|e| json!({"line": e.line, "error": e.error.to_string()}))
        .collect();
    let valid = errors.is_empty() && duplicates.is_empty();
    print(json!({
        "records": loaded.records.len(),
        "comparative": loaded.records.iter().filter(|r| r.is_comparative()).count(),
        "quintuples": loaded.records.iter().map(|r| r.quintuples.len()).sum::<usize>(),
        "invalid": errors.len(),
        "errors": errors,
        "duplicate_ids": duplicates,
        "valid": valid,
    }))?;
    Ok(if valid || a.lenient {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_filter(a: &FilterArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    let vectors = vectors(a.embeddings.as_ref())?;
    if a.backend == SimilarityBackend::ExternalVectors && vectors.is_none() {
        return Err(Usage("--backend external-vectors needs --embeddings".into()).into());
    }
    let cfg = SimilarityConfig {
        threshold: a.threshold,
        backend: a.backend,
    };
    let out = filter_unannotated(&records, &cfg, vectors.as_ref())?;
    write_corpus(&a.out, &out.kept)?;
    print(json!({
        "records": records.len(),
        "kept": out.kept.len(),
        "removed": out.removed_ids.len(),
        "removed_ids": out.removed_ids,
        "removed_scores": out.removed_scores,
        "threshold": a.threshold,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(a: &TrainArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    let vectors = vectors(a.embeddings.as_ref())?;
    let kind = if vectors.is_some() {
        FeatureKind::External
    } else {
        FeatureKind::Hashed
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        l2: a.l2,
        seed: a.seed,
        batch_size: a.batch_size,
    };
    let examples = examples_from_corpus(&records, source(kind, &vectors)?)?;
    let (head, report) = train(&examples, &cfg)?;
    let model = ModelFile::from_head(&head, kind, cfg);
    std::fs::write(&a.model, serde_json::to_string(&model)?)
        .with_context(|| format!("writing {}", a.model.display()))?;
    print(json!({
        "examples": examples.len(),
        "comparative": examples.iter().filter(|e| e.comparative).count(),
        "features": kind,
        "dimension": head.dimension,
        "epochs": cfg.epochs,
        "initial_loss": report.losses.first(),
        "final_loss": report.losses.last(),
        "train_accuracy": report.accuracy,
        "nonzero_weights": model.weights.len(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(a: &PredictArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let head = model.to_head()?;
    let records = corpus(&a.corpus)?;
    let vectors = vectors(a.embeddings.as_ref())?;
    let src = source(model.features, &vectors)?;
    let rows = src
        .vectors(&records)?
        .iter()
        .zip(&records)
        .map(|(fv, r)| {
            let p = head.predict_proba(fv)?[COMPARATIVE];
            Ok(CsiRow {
                id: r.id.clone(),
                comparative: p >= a.threshold,
                probability: p,
            })
        })
        .collect::<Result<Vec<_>, csi::CsiError>>()?;
    write_jsonl(&a.out, &rows)?;
    let scores = evaluate_csi(&head, &records, src, a.threshold)?;
    print(json!({
        "records": rows.len(),
        "predicted_comparative": rows.iter().filter(|r| r.comparative).count(),
        "threshold": a.threshold,
        "scores_against_annotations": scores,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_instructions(a: &InstructionArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    let table = match &a.instructions {
        Some(p) => {
            let text = std::fs::read_to_string(input(p)?)?;
            serde_json::from_str::<InstructionTable>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => InstructionTable::default(),
    };
    let tasks = if a.tasks.is_empty() {
        SubTask::ALL.to_vec()
    } else {
        a.tasks.clone()
    };
    let samples = build_dataset(&records, &tasks, a.include_noncomparative, &table);
    write_jsonl(&a.out, &samples)?;
    let mut per_task: BTreeMap<String, usize> = BTreeMap::new();
    for s in &samples {
        *per_task.entry(s.task.to_string()).or_default() += 1;
    }
    print(json!({
        "records": records.len(),
        "samples": samples.len(),
        "per_task": per_task,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_augment(a: &AugmentArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    if !(0.0..=1.0).contains(&a.replace_prob) {
        return Err(Usage(format!("--replace-prob must be in [0, 1], got {}", a.replace_prob)).into());
    }
    let cfg = AugmentConfig {
        seed: a.seed,
        per_record_samples: a.per_record,
        replace_probability: a.replace_prob,
        balance: a.balance,
        bucket: a.bucket,
    };
    let out = augment_corpus(&records, &cfg, &a.align.config()?);
    write_corpus(&a.out, &out.records)?;
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    for (_, reason) in &out.dropped {
        let key = serde_json::to_value(reason)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        *dropped.entry(key).or_default() += 1;
    }
    print(json!({
        "original": records.len(),
        "generated": out.generated,
        "kept_augmented": out.records.len() - records.len(),
        "written": out.records.len(),
        "dropped": dropped,
        "skipped": out.skipped.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "seed": a.seed,
        "balance": a.balance.to_string(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_parse(a: &ParseArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    let outputs = generations(&a.predictions)?;
    let by_id: HashMap<&str, &CorpusRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut unknown: Vec<&String> = outputs.keys().filter(|id| !by_id.contains_key(id.as_str())).collect();
    if !unknown.is_empty() {
        unknown.sort();
        bail!("predictions reference ids missing from the corpus: {unknown:?}");
    }
    let align = a.align.config()?;
    let mut predicted = Vec::new();
    let mut issues = Vec::new();
    for r in &records {
        if let Some(output) = outputs.get(&r.id) {
            let res = extract(r, output, a.template, &align);
            predicted.push(res.record);
            issues.extend(res.issues);
        }
    }
    write_corpus(&a.out, &predicted)?;
    if let Some(p) = &a.issues {
        write_jsonl(p, &issues)?;
    }
    print(json!({
        "outputs": predicted.len(),
        "quintuples": predicted.iter().map(|r| r.quintuples.len()).sum::<usize>(),
        "issues": issues.len(),
        "template": a.template.to_string(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<ExitCode> {
    let gold = corpus(&a.gold)?;
    let pred = corpus(&a.pred)?;
    let pairs = pair_records(&gold, &pred)?;
    let report = full_grid(&pairs);
    if let Some(p) = &a.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    print(json!({
        "records": pairs.len(),
        "headline": report.headline,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<ExitCode> {
    let records = corpus(&a.corpus)?;
    let outputs = generations(&a.predictions)?;
    let vectors = vectors(a.embeddings.as_ref())?;
    let decisions: Vec<bool> = if let Some(m) = &a.model {
        let model = load_model(m)?;
        let head = model.to_head()?;
        source(model.features, &vectors)?
            .vectors(&records)?
            .iter()
            .map(|fv| csi::is_comparative(&head, fv, a.csi_threshold))
            .collect::<Result<_, _>>()?
    } else if let Some(p) = &a.csi {
        let rows: Vec<CsiRow> = read_jsonl(input(p)?)?;
        let map: HashMap<String, bool> = rows.into_iter().map(|r| (r.id, r.comparative)).collect();
        records
            .iter()
            .map(|r| {
                map.get(&r.id)
                    .copied()
                    .with_context(|| format!("{}: no decision for id {:?}", p.display(), r.id))
            })
            .collect::<Result<_>>()?
    } else {
        records.iter().map(CorpusRecord::is_comparative).collect()
    };
    let out = run_pipeline(&records, &decisions, &outputs, a.template, &a.align.config()?);
    write_corpus(&a.out, &out.predictions)?;
    let mut summary = json!({
        "records": records.len(),
        "stage1_comparative": decisions.iter().filter(|d| **d).count(),
        "quintuples": out.predictions.iter().map(|r| r.quintuples.len()).sum::<usize>(),
        "issues": out.issues.len(),
    });
    if let Some(g) = &a.gold {
        let gold = corpus(g)?;
        let report = full_grid(&pair_records(&gold, &out.predictions)?);
        if let Some(p) = &a.report {
            std::fs::write(p, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("writing {}", p.display()))?;
        }
        summary["headline"] = serde_json::to_value(&report.headline)?;
    } else if a.report.is_some() {
        return Err(Usage("--report needs --gold".into()).into());
    }
    print(summary)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_args(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mentions_config = args
        .iter()
        .any(|a| a.to_str().is_some_and(|a| a == "--config" || a.starts_with("--config=")));
    if !mentions_config {
        return Cli::try_parse_from(args);
    }
    // A first lenient pass finds the subcommand and the flags given on the
    // command line, even when required ones are left to the config file.
    let command = Cli::command();
    let Ok(matches) = command.clone().ignore_errors(true).try_get_matches_from(&args) else {
        return Cli::try_parse_from(args);
    };
    let (Some((name, sub_matches)), Some(path)) =
        (matches.subcommand(), matches.get_one::<PathBuf>("config"))
    else {
        return Cli::try_parse_from(args);
    };
    let fail = |kind, e: anyhow::Error| command.clone().error(kind, format!("{e:#}"));
    let table = config::load(path).map_err(|e| fail(clap::error::ErrorKind::Io, e))?;
    let sub = command
        .find_subcommand(name)
        .expect("matched subcommand exists");
    let extra = config::injected_args(sub, sub_matches, &table)
        .map_err(|e| fail(clap::error::ErrorKind::InvalidValue, e))?;
    let mut full = args;
    full.extend(extra);
    Cli::try_parse_from(full)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Filter(a) => cmd_filter(a),
        Cmd::TrainCsi(a) => cmd_train(a),
        Cmd::PredictCsi(a) => cmd_predict(a),
        Cmd::BuildInstructions(a) => cmd_instructions(a),
        Cmd::Augment(a) => cmd_augment(a),
        Cmd::ParseGeneration(a) => cmd_parse(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Pipeline(a) => cmd_pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
