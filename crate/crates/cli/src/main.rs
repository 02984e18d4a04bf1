use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mesc_cli::commands::{self, AblateArgs, CueChoice, CueOptions, TrainArgs, CUE_URL_ENV};
use mesc_cli::{CliError, CreateSession, SessionManager};
use mesc_core::eval::{AblationSettings, EvalOptions};
use mesc_core::model::{ModelConfig, Precision, TrainOptions};
use mesc_core::reasoning::{CueFailurePolicy, DecodeConfig, DecodeStrategy, SegmentSchema, DEFAULT_MAX_RESPONSE_LEN};

#[derive(Parser)]
#[command(name = "mesc", version, about = "Multimodal emotional support conversation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and print a short summary.
    Validate(CorpusArg),
    /// Corpus statistics as canonical JSON.
    Stats(CorpusArg),
    /// Strategy distribution over conversation phase.
    Phase {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, default_value_t = 4)]
        buckets: usize,
    },
    /// Inter-annotator agreement.
    Kappa(CorpusArg),
    /// Train a model and write the checkpoint and loss curve to --out.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        training: TrainingArgs,
        #[command(flatten)]
        cues: CueArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline on a JSONL file of histories.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        /// One history per line.
        #[arg(long)]
        histories: PathBuf,
    },
    /// Score a checkpoint on every therapist turn of a corpus.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArg,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        #[command(flatten)]
        cues: CueArgs,
        /// Embedding provider for BERTScore.
        #[arg(long)]
        bertscore: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate each ablation variant.
    Ablate {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Held-out corpus; defaults to the training corpus.
        #[arg(long)]
        eval_corpus: Option<PathBuf>,
        /// Comma-separated, e.g. `baseline,-video,-emotion`.
        #[arg(long, default_value = "-video,-text,-emotion,-strategy")]
        variants: String,
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        training: TrainingArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        #[command(flatten)]
        cues: CueArgs,
        #[arg(long)]
        bertscore: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Talk to a checkpoint in the terminal.
    Chat {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        #[command(flatten)]
        cues: CueArgs,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Serve the session API.
    Serve {
        /// Without a checkpoint the server answers 503 to new sessions.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
        precision: PrecisionArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[command(flatten)]
        decode: DecodeArgs,
        #[command(flatten)]
        cues: CueArgs,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Print what a checkpoint holds.
    Inspect {
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArg {
    #[arg(value_name = "CORPUS", required_unless_present = "corpus")]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    corpus: Option<PathBuf>,
}

impl CorpusArg {
    fn get(&self) -> &Path {
        self.corpus.as_deref().or(self.path.as_deref()).expect("clap requires one")
    }
}

#[derive(Args)]
struct SchemaArgs {
    /// Schema override, repeatable: `include_cue=false`, `loss_policy=full_sequence`.
    #[arg(long = "schema", value_name = "KEY=VAL")]
    settings: Vec<String>,
    /// Ablation variant: baseline, -video, -text, -emotion, -strategy.
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelSize {
    Tiny,
    Micro,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long, value_enum, default_value_t = ModelSize::Tiny)]
    model: ModelSize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,
    /// Stop early once teacher-forced label accuracy reaches this.
    #[arg(long)]
    stop_at_accuracy: Option<f64>,
}

impl TrainingArgs {
    fn model_config(&self) -> ModelConfig {
        let mut c = match self.model {
            ModelSize::Tiny => ModelConfig::tiny(),
            ModelSize::Micro => ModelConfig::micro(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        c
    }

    fn options(&self) -> TrainOptions {
        let d = TrainOptions::default();
        TrainOptions {
            adam: commands::adam(self.lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            stop_at_label_accuracy: self.stop_at_accuracy,
            ..d
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,
}

#[derive(Args)]
struct DecodeArgs {
    /// Sample response words at this temperature instead of greedy decoding.
    #[arg(long)]
    temperature: Option<f64>,
    /// Sampling seed.
    #[arg(long = "decode-seed", default_value_t = 0)]
    decode_seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_RESPONSE_LEN)]
    max_response_len: usize,
}

impl DecodeArgs {
    fn config(&self) -> DecodeConfig {
        DecodeConfig {
            strategy: match self.temperature {
                Some(temperature) => DecodeStrategy::Sample {
                    temperature,
                    seed: self.decode_seed,
                },
                None => DecodeStrategy::Greedy,
            },
            max_response_len: self.max_response_len,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CueArg {
    Auto,
    Mock,
    None,
    External,
}

#[derive(Args)]
struct CueArgs {
    /// `auto` uses the external backend when a URL is set, otherwise the mock.
    #[arg(long, value_enum, default_value_t = CueArg::Auto)]
    cues: CueArg,
    #[arg(long, env = CUE_URL_ENV)]
    cue_url: Option<String>,
    #[arg(long)]
    cue_cache: Option<PathBuf>,
    /// Treat a cache miss as an error.
    #[arg(long)]
    strict_cache: bool,
}

impl CueArgs {
    fn options(&self) -> CueOptions {
        CueOptions {
            choice: match self.cues {
                CueArg::Auto => CueChoice::Auto,
                CueArg::Mock => CueChoice::Mock,
                CueArg::None => CueChoice::None,
                CueArg::External => CueChoice::External,
            },
            url: self.cue_url.clone(),
            cache_dir: self.cue_cache.clone(),
            strict_cache: self.strict_cache,
        }
    }
}

#[derive(Args)]
struct SessionArgs {
    /// Fail the turn when the cue backend fails instead of continuing without a cue.
    #[arg(long)]
    strict_cues: bool,
    #[arg(long)]
    transcript_dir: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
}

impl SessionArgs {
    fn policy(&self) -> CueFailurePolicy {
        if self.strict_cues {
            CueFailurePolicy::Fail
        } else {
            CueFailurePolicy::Proceed
        }
    }

    fn manager(&self, model: Option<mesc_cli::Model>, cues: &CueArgs, decode: &DecodeArgs) -> Result<SessionManager, CliError> {
        let mut m = SessionManager::new(model, commands::cue_backend(&cues.options())?)
            .with_defaults(decode.config(), self.policy());
        if let Some(dir) = &self.transcript_dir {
            m = m.with_transcripts(dir);
        }
        Ok(m)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Validate(c) => commands::validate(c.get(), &mut out),
        Command::Stats(c) => commands::stats(c.get(), &mut out),
        Command::Phase { corpus, buckets } => commands::phase(corpus.get(), buckets, &mut out),
        Command::Kappa(c) => commands::kappa(c.get(), &mut out),
        Command::Train {
            corpus,
            schema,
            training,
            cues,
            out: dir,
        } => {
            let args = TrainArgs {
                corpus: corpus.get().to_path_buf(),
                schema: commands::resolve_schema(SegmentSchema::default(), &schema.settings, schema.variant.as_deref())?,
                model: training.model_config(),
                options: training.options(),
                precision: training.precision.into(),
                out: dir,
            };
            let backend = commands::cue_backend(&cues.options())?;
            commands::train_cmd(&args, backend.as_ref(), &mut out)
        }
        Command::Generate {
            model,
            schema,
            decode,
            histories,
        } => {
            let m = commands::load_model(&model.checkpoint, model.precision.into())?;
            let s = commands::resolve_schema(m.schema.clone(), &schema.settings, schema.variant.as_deref())?;
            commands::generate_cmd(&m, &s, &histories, &decode.config(), &mut out)
        }
        Command::Evaluate {
            corpus,
            model,
            schema,
            decode,
            cues,
            bertscore,
            out: dir,
        } => {
            let m = commands::load_model(&model.checkpoint, model.precision.into())?;
            let s = commands::resolve_schema(m.schema.clone(), &schema.settings, schema.variant.as_deref())?;
            let backend = commands::cue_backend(&cues.options())?;
            let opts = EvalOptions {
                decode: decode.config(),
                bertscore_provider: bertscore,
                ..EvalOptions::default()
            };
            commands::evaluate_cmd(&m, &s, corpus.get(), backend.as_ref(), &opts, dir.as_deref(), &mut out)
        }
        Command::Ablate {
            corpus,
            eval_corpus,
            variants,
            schema,
            training,
            decode,
            cues,
            bertscore,
            out: dir,
        } => {
            if schema.variant.is_some() {
                return Err(CliError::Input("ablate takes --variants, not --variant".into()));
            }
            let args = AblateArgs {
                corpus: corpus.get().to_path_buf(),
                eval_corpus,
                variants: commands::parse_variants(&variants)?,
                settings: AblationSettings {
                    schema: commands::resolve_schema(SegmentSchema::default(), &schema.settings, None)?,
                    model: training.model_config(),
                    train: training.options(),
                    eval: EvalOptions {
                        decode: decode.config(),
                        bertscore_provider: bertscore,
                        ..EvalOptions::default()
                    },
                    parallel: true,
                },
                out: dir,
            };
            let backend = commands::cue_backend(&cues.options())?;
            commands::ablate_cmd(&args, backend.as_ref(), &mut out)
        }
        Command::Chat {
            model,
            decode,
            cues,
            session,
        } => {
            let m = commands::load_model(&model.checkpoint, model.precision.into())?;
            let manager = session.manager(Some(m), &cues, &decode)?;
            let req = CreateSession {
                variant: session.variant.clone(),
                ..CreateSession::default()
            };
            let stdin = std::io::stdin();
            commands::chat(&manager, req, &mut stdin.lock(), &mut out)
        }
        Command::Serve {
            checkpoint,
            precision,
            addr,
            decode,
            cues,
            session,
        } => {
            if session.variant.is_some() {
                return Err(CliError::Input("serve takes the variant per session".into()));
            }
            let model = match &checkpoint {
                Some(p) => Some(commands::load_model(p, precision.into())?),
                None => None,
            };
            let manager = Arc::new(session.manager(model, &cues, &decode)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
            rt.block_on(mesc_cli::server::serve(manager, &addr))
                .map_err(|e| CliError::io(addr.clone(), e))
        }
        Command::Inspect { checkpoint } => {
            let v = commands::describe_checkpoint(&checkpoint)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))
                .map_err(|e| CliError::io("stdout", e))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
