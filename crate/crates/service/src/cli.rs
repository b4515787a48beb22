use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use noshow_core::dataset::{ingest_csv, RecordSet};
use noshow_core::evaluation::{assign_groups, coverage_risk, tune_cutoffs, GroupFractions};
use noshow_core::explain::{lrp_record, relevance_heatmap};
use noshow_core::pipeline::{evaluate_scores, TrainedArtifact};
use noshow_core::strategy::{GridMode, StrategyRegistry};
use noshow_core::synth::{generate, reference_spec, GeneratorSpec};

use crate::error::{ServiceError, ServiceResult};
use crate::manifest::{self, RunManifest};
use crate::ops::{self, TrainRequest, DEFAULT_FOLDS, DEFAULT_REPS};
use crate::store::write_atomic;

pub const DATA_DIR_ENV: &str = "NOSHOW_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "noshow", version, about = "Appointment no-show risk scoring")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the first output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic appointment CSV.
    Generate(GenerateArgs),
    /// Train a model and write its artifact.
    Train(TrainArgs),
    /// AUROC, coverage and risk of a model on labelled records.
    Evaluate(EvaluateArgs),
    /// Write no-show probabilities for every record.
    Score(ScoreArgs),
    /// Relevance heatmap of the highest-risk records (mlp models only).
    Explain(ExplainArgs),
    /// Choose the two cut-off thresholds for a score file.
    Tune(TuneArgs),
    /// Rerun the command recorded in a manifest and compare output hashes.
    Replay(ReplayArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Generator spec JSON; without it the reference cohort spec is used.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model family: linear, forest or mlp (aliases lr, lasso, rf, nn).
    #[arg(long)]
    pub model: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on one service only: OH, GD, YAP or SP.
    #[arg(long)]
    pub service: Option<String>,
    /// Tune hyperparameters over the fast or full grid.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long)]
    pub fractions: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fractions: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `.csv` writes the heatmap table only; anything else writes JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated record ids; default is the `--top` riskiest records.
    #[arg(long)]
    pub ids: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// CSV with `record_id,probability` and optionally `label`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub fractions: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = DATA_DIR_ENV, default_value = "noshow-data")]
    pub data_dir: PathBuf,
    /// Training jobs allowed to run at once; the rest queue.
    #[arg(long, default_value_t = 1)]
    pub max_training: usize,
}

/// What a command read and wrote, for the manifest.
struct RunReport {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: Value,
}

fn parse_fractions(text: Option<&str>) -> ServiceResult<GroupFractions> {
    match text {
        Some(t) => Ok(GroupFractions::parse(t)?),
        None => Ok(GroupFractions::default()),
    }
}

fn read_records(path: &Path) -> ServiceResult<RecordSet> {
    let ingested = ingest_csv(path)?;
    if let Some(r) = ingested.rejects.first() {
        return Err(ServiceError::validation(format!(
            "{}: {} rejected row(s); first at line {}: {}",
            path.display(),
            ingested.rejects.len(),
            r.line,
            r.reason
        )));
    }
    Ok(ingested.records)
}

fn read_artifact(path: &Path) -> ServiceResult<TrainedArtifact> {
    Ok(TrainedArtifact::from_json(&std::fs::read_to_string(path)?)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> ServiceResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn generate_cmd(a: &GenerateArgs) -> ServiceResult<RunReport> {
    let mut inputs = Vec::new();
    let spec = match &a.spec {
        Some(p) => {
            inputs.push(p.clone());
            let mut spec = GeneratorSpec::from_json(&std::fs::read_to_string(p)?)?;
            if let Some(n) = a.n {
                spec.n = n;
            }
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            spec
        }
        None => reference_spec(a.n.unwrap_or(53_311), a.seed.unwrap_or(0)),
    };
    let records = generate(&spec)?;
    write_atomic(&a.out, records.to_csv_string()?.as_bytes())?;
    Ok(RunReport {
        seed: Some(spec.seed),
        inputs,
        outputs: vec![a.out.clone()],
        summary: json!({
            "out": a.out,
            "n_records": records.len(),
            "no_show_rate": records.no_show_rate(),
        }),
    })
}

fn train_cmd(a: &TrainArgs) -> ServiceResult<RunReport> {
    let records = read_records(&a.input)?;
    let fractions = parse_fractions(a.fractions.as_deref())?;
    let req = TrainRequest {
        kind: a.model.clone(),
        seed: a.seed,
        service: a.service.as_deref().map(ops::parse_service).transpose()?,
        grid: a.grid.as_deref().map(str::parse::<GridMode>).transpose()?,
        folds: a.folds,
        reps: a.reps,
        fractions: Some(fractions.as_array()),
    };
    let artifact = ops::train(&StrategyRegistry::with_defaults(), &records, &req)?;
    write_atomic(&a.out, artifact.to_json()?.as_bytes())?;
    Ok(RunReport {
        seed: Some(a.seed),
        inputs: vec![a.input.clone()],
        outputs: vec![a.out.clone()],
        summary: json!({
            "out": a.out,
            "kind": artifact.kind,
            "service": artifact.service,
            "hyperparameters": artifact.hyperparameters,
            "cv_auroc_mean": artifact.cv_report.as_ref().map(|r| r.mean),
            "cv_auroc_std": artifact.cv_report.as_ref().map(|r| r.std),
            "test": {
                "auroc": artifact.test_metrics.auroc,
                "coverage": artifact.test_metrics.coverage,
                "risk": artifact.test_metrics.risk,
            },
        }),
    })
}

fn evaluate_cmd(a: &EvaluateArgs) -> ServiceResult<RunReport> {
    let artifact = read_artifact(&a.model_file)?;
    let records = read_records(&a.input)?;
    let scored = ops::score_labelled(&artifact, &records)?;
    let report = evaluate_scores(&scored, parse_fractions(a.fractions.as_deref())?)?;
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        outputs.push(out.clone());
    }
    Ok(RunReport {
        seed: None,
        inputs: vec![a.model_file.clone(), a.input.clone()],
        outputs,
        summary: serde_json::to_value(&report)?,
    })
}

fn score_cmd(a: &ScoreArgs) -> ServiceResult<RunReport> {
    let artifact = read_artifact(&a.model_file)?;
    let records = read_records(&a.input)?;
    let scored = ops::score_labelled(&artifact, &records)?;
    let mut text = String::from("record_id,probability,label\n");
    for (id, p, y) in &scored {
        text.push_str(&format!("{id},{p},{y}\n"));
    }
    write_atomic(&a.out, text.as_bytes())?;
    Ok(RunReport {
        seed: None,
        inputs: vec![a.model_file.clone(), a.input.clone()],
        outputs: vec![a.out.clone()],
        summary: json!({ "out": a.out, "n_scored": scored.len() }),
    })
}

fn explain_cmd(a: &ExplainArgs) -> ServiceResult<RunReport> {
    let artifact = read_artifact(&a.model_file)?;
    let mlp = artifact
        .model
        .as_mlp()
        .ok_or_else(|| ServiceError::validation(format!("explain needs an mlp model, got {}", artifact.kind)))?;
    let records = ops::scope(&artifact, &read_records(&a.input)?);
    let x = artifact.encode(&records)?;
    let wanted: Vec<u64> = match &a.ids {
        Some(ids) => ids
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|e| ServiceError::validation(format!("bad id {s:?}: {e}"))))
            .collect::<ServiceResult<_>>()?,
        None => {
            let mut scored = artifact.score_records(&records)?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.iter().take(a.top).map(|s| s.0).collect()
        }
    };
    let mut maps = Vec::with_capacity(wanted.len());
    for id in &wanted {
        let row = x
            .row_ids()
            .iter()
            .position(|r| r == id)
            .ok_or_else(|| ServiceError::not_found("record", &id.to_string()))?;
        maps.push(lrp_record(mlp, x.row(row), *id)?);
    }
    let heatmap = relevance_heatmap(&maps)?;
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_atomic(&a.out, heatmap.to_csv_string()?.as_bytes())?;
    } else {
        write_json(&a.out, &json!({ "heatmap": heatmap, "explanations": maps }))?;
    }
    Ok(RunReport {
        seed: None,
        inputs: vec![a.model_file.clone(), a.input.clone()],
        outputs: vec![a.out.clone()],
        summary: json!({ "out": a.out, "n_explained": maps.len(), "variables": heatmap.variables }),
    })
}

fn read_scores(path: &Path) -> ServiceResult<(Vec<(u64, f64)>, Option<Vec<(u64, u8)>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(noshow_core::Error::from)?;
    let headers = rdr.headers().map_err(noshow_core::Error::from)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_col, p_col) = match (col("record_id"), col("probability")) {
        (Some(i), Some(p)) => (i, p),
        _ => return Err(ServiceError::validation("score file needs record_id and probability columns")),
    };
    let label_col = col("label");
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row.map_err(noshow_core::Error::from)?;
        let line = k + 2;
        let field = |c: usize| row.get(c).unwrap_or("").trim();
        let id: u64 = field(id_col)
            .parse()
            .map_err(|e| ServiceError::validation(format!("line {line}: record_id: {e}")))?;
        let p: f64 = field(p_col)
            .parse()
            .map_err(|e| ServiceError::validation(format!("line {line}: probability: {e}")))?;
        scores.push((id, p));
        if let Some(c) = label_col {
            let y = match field(c) {
                "0" => 0,
                "1" => 1,
                other => return Err(ServiceError::validation(format!("line {line}: label {other:?} is not 0 or 1"))),
            };
            labels.push((id, y));
        }
    }
    Ok((scores, label_col.map(|_| labels)))
}

fn tune_cmd(a: &TuneArgs) -> ServiceResult<RunReport> {
    let (scores, labels) = read_scores(&a.scores)?;
    let policy = tune_cutoffs(&scores, parse_fractions(a.fractions.as_deref())?)?;
    let metrics = match labels {
        Some(l) => Some(coverage_risk(&assign_groups(&scores, &policy), &l.into_iter().collect())?),
        None => None,
    };
    let result = json!({ "policy": policy, "metrics": metrics });
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        write_json(out, &result)?;
        outputs.push(out.clone());
    }
    Ok(RunReport {
        seed: None,
        inputs: vec![a.scores.clone()],
        outputs,
        summary: result,
    })
}

fn replay_cmd(a: &ReplayArgs) -> ServiceResult<Value> {
    let recorded = RunManifest::read(&a.manifest_path)?;
    for input in &recorded.inputs {
        let now = manifest::hash_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(ServiceError::validation(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let mut argv = vec!["noshow".to_string()];
    argv.extend(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv).map_err(|e| ServiceError::validation(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_) | Command::Serve(_)) {
        return Err(ServiceError::validation("manifest does not record a replayable command"));
    }
    let report = run_command(&cli.command)?;
    let mut mismatched = Vec::new();
    for (old, path) in recorded.outputs.iter().zip(&report.outputs) {
        if manifest::hash_file(path)?.sha256 != old.sha256 {
            mismatched.push(old.path.clone());
        }
    }
    if !mismatched.is_empty() || recorded.outputs.len() != report.outputs.len() {
        return Err(ServiceError::internal("replayed outputs differ from the manifest")
            .with_detail(json!({ "mismatched": mismatched })));
    }
    Ok(json!({ "replayed": recorded.command, "outputs_match": true, "outputs": recorded.outputs }))
}

fn run_command(command: &Command) -> ServiceResult<RunReport> {
    match command {
        Command::Generate(a) => generate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Replay(_) | Command::Serve(_) => unreachable!("handled by run"),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Score(_) => "score",
        Command::Explain(_) => "explain",
        Command::Tune(_) => "tune",
        Command::Replay(_) => "replay",
        Command::Serve(_) => "serve",
    }
}

/// Run a parsed command. `args` are the raw arguments after the program
/// name, recorded in the manifest. Returns the summary printed on stdout.
pub fn run(cli: &Cli, args: &[String]) -> ServiceResult<Value> {
    match &cli.command {
        Command::Serve(s) => {
            crate::serve(s)?;
            Ok(json!({ "stopped": true }))
        }
        Command::Replay(r) => replay_cmd(r),
        command => {
            let report = run_command(command)?;
            let path = cli
                .manifest
                .clone()
                .or_else(|| report.outputs.first().map(|p| manifest::default_path(p)));
            if let Some(path) = path {
                RunManifest::build(command_name(command), args, report.seed, &report.inputs, &report.outputs)?
                    .write(&path)?;
            }
            Ok(report.summary)
        }
    }
}
