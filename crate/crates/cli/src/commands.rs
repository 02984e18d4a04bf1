//! Command bodies, kept free of argument parsing so tests can call them.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use mesc_core::canonical::to_canonical_string;
use mesc_core::corpus::{
    agreement_report, compute_stats, read_corpus_file, strategy_phase_distribution, Corpus, Label, ScenarioRegistry,
};
use mesc_core::cues::{CachedCueBackend, CueBackend, ExternalCueBackend, ExternalCueConfig, MockCueBackend, NoCueBackend};
use mesc_core::eval::{evaluate, render_ablation_table, run_ablation, AblationSettings, EvalOptions};
use mesc_core::model::{
    generator_adapter, loss_curve_csv, train, AdamConfig, Checkpoint, GeneratorSource, ModelConfig, Precision,
    TrainOptions, TrainOutcome,
};
use mesc_core::reasoning::{
    apply_ablation, sequential_generate, AblationVariant, DecodeConfig, History, SegmentSchema, TurnRequest,
};
use mesc_core::Scalar;

use crate::error::CliError;
use crate::session::{CreateSession, Model, SessionManager};

pub const CUE_URL_ENV: &str = "MESC_CUE_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CueChoice {
    /// External when a URL is configured, otherwise mock.
    #[default]
    Auto,
    Mock,
    None,
    External,
}

#[derive(Debug, Clone, Default)]
pub struct CueOptions {
    pub choice: CueChoice,
    pub url: Option<String>,
    /// Answers are cached here; with `strict`, a miss is an error.
    pub cache_dir: Option<PathBuf>,
    pub strict_cache: bool,
}

pub fn cue_backend(opts: &CueOptions) -> Result<Arc<dyn CueBackend>, CliError> {
    let inner: Option<Box<dyn CueBackend>> = match (opts.choice, &opts.url) {
        (CueChoice::External, None) => {
            return Err(CliError::Input(format!("external cues need {CUE_URL_ENV} or --cue-url")));
        }
        (CueChoice::External | CueChoice::Auto, Some(url)) => {
            Some(Box::new(ExternalCueBackend::new(ExternalCueConfig::new(url.clone()))))
        }
        (CueChoice::Auto | CueChoice::Mock, _) => Some(Box::new(MockCueBackend)),
        (CueChoice::None, _) => None,
    };
    Ok(match (&opts.cache_dir, inner) {
        (Some(dir), Some(inner)) => Arc::new(CachedCueBackend::new(dir, opts.strict_cache).with_inner(inner)),
        (Some(dir), None) => Arc::new(CachedCueBackend::new(dir, opts.strict_cache)),
        (None, Some(inner)) => Arc::from(inner),
        (None, None) => Arc::new(NoCueBackend),
    })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(read_corpus_file(path, &ScenarioRegistry::default())?)
}

/// `base` with `KEY=VAL` overrides applied, then the ablation variant.
pub fn resolve_schema(base: SegmentSchema, settings: &[String], variant: Option<&str>) -> Result<SegmentSchema, CliError> {
    let mut schema = base;
    for s in settings {
        schema.apply_setting(s)?;
    }
    match variant {
        Some(v) => Ok(apply_ablation(&schema, v.parse::<AblationVariant>()?)?),
        None => Ok(schema),
    }
}

fn write_str(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes()).map_err(|e| CliError::io("stdout", e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

fn canonical(v: &impl serde::Serialize) -> String {
    to_canonical_string(v).expect("report serializes")
}

pub fn validate(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let c = load_corpus(path)?;
    let record = json!({
        "ok": true,
        "split": c.split.as_str(),
        "dialogues": c.dialogues.len(),
        "turns": c.turns().count(),
    });
    write_str(out, &canonical(&record))
}

pub fn stats(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    write_str(out, &canonical(&compute_stats(&load_corpus(path)?).to_report()))
}

pub fn phase(path: &Path, buckets: usize, out: &mut dyn Write) -> Result<(), CliError> {
    if buckets == 0 {
        return Err(CliError::Input("--buckets must be positive".into()));
    }
    write_str(out, &canonical(&strategy_phase_distribution(&load_corpus(path)?, buckets).to_report()))
}

pub fn kappa(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    write_str(out, &canonical(&agreement_report(&load_corpus(path)?)?.to_report()))
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub schema: SegmentSchema,
    pub model: ModelConfig,
    pub options: TrainOptions,
    pub precision: Precision,
    pub out: PathBuf,
}

fn finish_training<T: Scalar>(outcome: TrainOutcome<T>, dir: &Path) -> Result<serde_json::Value, CliError> {
    let path = dir.join("model.ckpt");
    outcome.checkpoint.save(&path)?;
    write_file(&dir.join("loss_curve.csv"), &loss_curve_csv(&outcome.loss_curve))?;
    let model = outcome.checkpoint.transformer()?;
    Ok(json!({
        "checkpoint": path.display().to_string(),
        "epochs": outcome.loss_curve.len(),
        "final_loss": outcome.loss_curve.last(),
        "label_accuracy": outcome.label_accuracy,
        "n_examples": outcome.n_examples,
        "n_params": model.n_params(),
        "vocab_size": outcome.checkpoint.vocab.len(),
        "seed": outcome.checkpoint.meta.seed,
    }))
}

/// Train, then write `model.ckpt`, `loss_curve.csv` and `train_summary.json`.
pub fn train_cmd(args: &TrainArgs, cues: &dyn CueBackend, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    create_dir(&args.out)?;
    let summary = match args.precision {
        Precision::F32 => finish_training(train::<f32>(&corpus, cues, &args.schema, &args.model, &args.options)?, &args.out)?,
        Precision::F64 => finish_training(train::<f64>(&corpus, cues, &args.schema, &args.model, &args.options)?, &args.out)?,
    };
    let text = canonical(&summary);
    write_file(&args.out.join("train_summary.json"), &text)?;
    write_str(out, &text)
}

pub fn load_model(path: &Path, precision: Precision) -> Result<Model, CliError> {
    let handle = generator_adapter(GeneratorSource::Checkpoint {
        path: path.to_path_buf(),
        precision,
    })?;
    let (Some(vocab), Some(schema)) = (handle.vocab, handle.schema) else {
        return Err(CliError::Input("checkpoint carries no vocabulary".into()));
    };
    Ok(Model {
        generator: handle.generator,
        vocab,
        schema,
    })
}

/// Read one `History` per line and write one `PipelineOutput` per line.
pub fn generate_cmd(
    model: &Model,
    schema: &SegmentSchema,
    histories: &Path,
    decode: &DecodeConfig,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let file = std::fs::File::open(histories).map_err(|e| CliError::io(histories.display().to_string(), e))?;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(histories.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let history: History =
            serde_json::from_str(&line).map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?;
        history
            .validate()
            .map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?;
        let o = sequential_generate(model.generator.as_ref(), &history, schema, &model.vocab, decode)?;
        write_str(out, &format!("{}\n", serde_json::to_string(&o).expect("output serializes")))?;
    }
    Ok(())
}

/// Evaluate on every eligible turn; with `out_dir`, also write
/// `report.json` and `predictions.jsonl`.
pub fn evaluate_cmd(
    model: &Model,
    schema: &SegmentSchema,
    corpus: &Path,
    cues: &dyn CueBackend,
    opts: &EvalOptions,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let corpus = load_corpus(corpus)?;
    let examples = mesc_core::model::prepare_examples(&corpus, cues, schema)?;
    let (report, predictions) = evaluate(model.generator.as_ref(), &model.vocab, &examples, schema, opts)?;
    let text = canonical(&report);
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(&dir.join("report.json"), &text)?;
        let lines: String = predictions
            .iter()
            .map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n")
            .collect();
        write_file(&dir.join("predictions.jsonl"), &lines)?;
    }
    write_str(out, &text)
}

pub fn parse_variants(list: &str) -> Result<Vec<AblationVariant>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<AblationVariant>().map_err(CliError::from))
        .collect()
}

pub struct AblateArgs {
    pub corpus: PathBuf,
    pub eval_corpus: Option<PathBuf>,
    pub variants: Vec<AblationVariant>,
    pub settings: AblationSettings,
    pub out: Option<PathBuf>,
}

/// Print the ablation table; with `out`, also write `ablation.json` and
/// `ablation_table.txt`.
pub fn ablate_cmd(args: &AblateArgs, cues: &dyn CueBackend, out: &mut dyn Write) -> Result<(), CliError> {
    let train_corpus = load_corpus(&args.corpus)?;
    let eval_corpus = match &args.eval_corpus {
        Some(p) => load_corpus(p)?,
        None => train_corpus.clone(),
    };
    let reports = run_ablation(&args.variants, &train_corpus, &eval_corpus, cues, &args.settings)?;
    let table = render_ablation_table(&reports);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_file(&dir.join("ablation.json"), &canonical(&reports))?;
        write_file(&dir.join("ablation_table.txt"), &table)?;
    }
    write_str(out, &table)
}

fn stage_line(o: &mesc_core::reasoning::PipelineOutput) -> String {
    let show = |x: Option<&str>| x.unwrap_or("-").to_string();
    format!(
        "  [user emotion: {} | strategy: {} | system emotion: {}]",
        show(o.user_emotion.map(|l| l.as_str())),
        show(o.strategy.map(|l| l.as_str())),
        show(o.system_emotion.map(|l| l.as_str())),
    )
}

/// Terminal conversation: one utterance per input line, `/quit` or EOF ends it.
pub fn chat(
    manager: &SessionManager,
    session: CreateSession,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let info = manager.create(session)?;
    let mut line = String::new();
    loop {
        write_str(out, "you> ")?;
        out.flush().map_err(|e| CliError::io("stdout", e))?;
        line.clear();
        let n = input.read_line(&mut line).map_err(|e| CliError::io("stdin", e))?;
        let text = line.trim();
        if n == 0 || text == "/quit" {
            write_str(out, "\n")?;
            return Ok(());
        }
        if text.is_empty() {
            continue;
        }
        match manager.post_turn(&info.id, &TurnRequest::text(text)) {
            Ok(o) => write_str(out, &format!("{}\nmesc> {}\n", stage_line(&o), o.response))?,
            Err(e) => write_str(out, &format!("{}\n", CliError::from(e).record()))?,
        }
    }
}

pub fn adam(lr: Option<f64>) -> AdamConfig {
    let mut a = AdamConfig::default();
    if let Some(lr) = lr {
        a.lr = lr;
    }
    a
}

/// Read a checkpoint just far enough to report what it holds.
pub fn describe_checkpoint(path: &Path) -> Result<serde_json::Value, CliError> {
    let c = Checkpoint::<f64>::load(path)?;
    Ok(json!({
        "config": c.config,
        "schema": c.schema,
        "vocab_size": c.vocab.len(),
        "vocab_digest": c.vocab_digest(),
        "epochs": c.meta.epochs,
        "final_loss": c.meta.final_loss,
    }))
}
