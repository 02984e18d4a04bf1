//! Train-and-evaluate matrix over ablation variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{evaluate, EvalOptions, EvalReport};
use super::EvalError;
use crate::corpus::Corpus;
use crate::cues::CueBackend;
use crate::model::config::ModelConfig;
use crate::model::train::{prepare_examples, train, TrainOptions};
use crate::reasoning::schema::{apply_ablation, AblationVariant, LossPolicy, SegmentSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSettings {
    pub schema: SegmentSchema,
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub eval: EvalOptions,
    /// Run variants concurrently; the report is identical to a sequential run.
    pub parallel: bool,
}

/// Metrics in the column order of the ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TaskMetrics {
    pub task1_acc: Option<f64>,
    pub task2_acc: Option<f64>,
    pub task3_wf1: Option<f64>,
    pub task4_ppl: Option<f64>,
    pub task4_bleu2: Option<f64>,
    pub task4_bleu4: Option<f64>,
    pub task4_rouge_l: Option<f64>,
}

impl TaskMetrics {
    pub fn from_report(r: &EvalReport) -> Self {
        Self {
            task1_acc: r.user_emotion.as_ref().map(|c| c.accuracy),
            task2_acc: r.strategy.as_ref().map(|c| c.accuracy),
            task3_wf1: r.system_emotion.as_ref().map(|c| c.weighted_f1),
            task4_ppl: Some(r.generation.perplexity),
            task4_bleu2: Some(r.generation.bleu2),
            task4_bleu4: Some(r.generation.bleu4),
            task4_rouge_l: Some(r.generation.rouge_l),
        }
    }

    fn values(&self) -> [Option<f64>; 7] {
        [
            self.task1_acc,
            self.task2_acc,
            self.task3_wf1,
            self.task4_ppl,
            self.task4_bleu2,
            self.task4_bleu4,
            self.task4_rouge_l,
        ]
    }

    fn from_values(v: [Option<f64>; 7]) -> Self {
        Self {
            task1_acc: v[0],
            task2_acc: v[1],
            task3_wf1: v[2],
            task4_ppl: v[3],
            task4_bleu2: v[4],
            task4_bleu4: v[5],
            task4_rouge_l: v[6],
        }
    }

    /// `self − baseline` where both sides exist.
    pub fn minus(&self, baseline: &Self) -> Self {
        let (a, b) = (self.values(), baseline.values());
        Self::from_values(std::array::from_fn(|i| match (a[i], b[i]) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variant: AblationVariant,
    pub loss_policy: LossPolicy,
    pub metrics: TaskMetrics,
    pub deltas: TaskMetrics,
    pub epochs: usize,
    pub final_loss: f64,
}

struct VariantRun {
    metrics: TaskMetrics,
    epochs: usize,
    final_loss: f64,
}

fn run_variant(
    variant: AblationVariant,
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    cues: &dyn CueBackend,
    settings: &AblationSettings,
) -> Result<VariantRun, EvalError> {
    let schema = apply_ablation(&settings.schema, variant)?;
    let outcome = train::<f32>(train_corpus, cues, &schema, &settings.model, &settings.train)?;
    let ckpt = outcome.checkpoint;
    let model = ckpt.transformer()?;
    let examples = prepare_examples(eval_corpus, cues, &schema)?;
    if examples.is_empty() {
        return Err(EvalError::Empty("evaluation turns"));
    }
    let (report, _) = evaluate(&model, &ckpt.vocab, &examples, &schema, &settings.eval)?;
    Ok(VariantRun {
        metrics: TaskMetrics::from_report(&report),
        epochs: ckpt.meta.epochs,
        final_loss: ckpt.meta.final_loss,
    })
}

/// Train and evaluate every requested variant with the same seed and
/// settings. The baseline is always run to anchor the deltas.
pub fn run_ablation(
    variants: &[AblationVariant],
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    cues: &dyn CueBackend,
    settings: &AblationSettings,
) -> Result<Vec<AblationReport>, EvalError> {
    let mut all = vec![AblationVariant::Baseline];
    for &v in variants {
        if !all.contains(&v) {
            all.push(v);
        }
    }
    let runs: Vec<VariantRun> = if settings.parallel {
        all.par_iter()
            .map(|&v| run_variant(v, train_corpus, eval_corpus, cues, settings))
            .collect::<Result<_, _>>()?
    } else {
        all.iter()
            .map(|&v| run_variant(v, train_corpus, eval_corpus, cues, settings))
            .collect::<Result<_, _>>()?
    };
    let baseline = runs[0].metrics;
    Ok(all
        .iter()
        .zip(&runs)
        .filter(|(v, _)| variants.contains(v))
        .map(|(&variant, run)| AblationReport {
            variant,
            loss_policy: settings.schema.loss_policy,
            metrics: run.metrics,
            deltas: run.metrics.minus(&baseline),
            epochs: run.epochs,
            final_loss: run.final_loss,
        })
        .collect())
}

pub const TABLE_COLUMNS: [&str; 7] = ["Task1 Acc", "Task2 Acc", "Task3 W-F1", "Task4 PPL", "B-2", "B-4", "R-L"];

fn cell(value: Option<f64>, delta: Option<f64>, percent: bool, with_delta: bool) -> String {
    let scale = if percent { 100.0 } else { 1.0 };
    match value {
        None => "-".to_string(),
        Some(v) if with_delta => match delta {
            Some(d) => format!("{:.2} ({:+.2})", v * scale, d * scale),
            None => format!("{:.2}", v * scale),
        },
        Some(v) => format!("{:.2}", v * scale),
    }
}

/// Text table with one row per variant. Accuracies, F1 and overlap scores
/// are percentages; non-baseline rows carry the delta in parentheses.
pub fn render_ablation_table(reports: &[AblationReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Variant")
        .chain(TABLE_COLUMNS)
        .map(String::from)
        .collect()];
    for r in reports {
        let with_delta = r.variant != AblationVariant::Baseline;
        let (m, d) = (r.metrics.values(), r.deltas.values());
        let mut row = vec![r.variant.to_string()];
        for i in 0..7 {
            row.push(cell(m[i], d[i], i != 3, with_delta));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..8)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |r: &[String]| {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let mut out = line(&rows[0]);
    out.push_str(&format!(
        "|{}|\n",
        widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
    ));
    for r in &rows[1..] {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(x: f64) -> TaskMetrics {
        TaskMetrics {
            task1_acc: Some(x),
            task2_acc: Some(x),
            task3_wf1: Some(x),
            task4_ppl: Some(10.0 * x),
            task4_bleu2: Some(x),
            task4_bleu4: Some(x),
            task4_rouge_l: Some(x),
        }
    }

    #[test]
    fn deltas_skip_missing_stages() {
        let mut v = metrics(0.25);
        v.task1_acc = None;
        let d = v.minus(&metrics(0.5));
        assert_eq!(d.task1_acc, None);
        assert_eq!(d.task2_acc, Some(-0.25));
        assert_eq!(metrics(0.5).minus(&metrics(0.5)).values(), [Some(0.0); 7]);
    }

    #[test]
    fn table_has_every_column() {
        let reports = vec![
            AblationReport {
                variant: AblationVariant::Baseline,
                loss_policy: LossPolicy::TargetsOnly,
                metrics: metrics(0.5),
                deltas: metrics(0.0),
                epochs: 1,
                final_loss: 1.0,
            },
            AblationReport {
                variant: AblationVariant::NoEmotion,
                loss_policy: LossPolicy::TargetsOnly,
                metrics: TaskMetrics {
                    task1_acc: None,
                    ..metrics(0.25)
                },
                deltas: TaskMetrics {
                    task1_acc: None,
                    ..metrics(-0.25)
                },
                epochs: 1,
                final_loss: 1.0,
            },
        ];
        let t = render_ablation_table(&reports);
        for c in TABLE_COLUMNS {
            assert!(t.contains(c), "{c}");
        }
        assert!(t.contains("-emotion"));
        assert!(t.contains("25.00 (-25.00)"));
        assert_eq!(t.lines().count(), 4);
    }
}
