//! Acceptance checks AC1–AC8. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

mod common;

use std::time::Instant;

use mesc_core::canonical::to_canonical_string;
use mesc_core::corpus::{
    agreement_report, compute_stats, fleiss_kappa, parse_corpus, strategy_phase_distribution, CorpusErrorKind,
    EmotionLabel, Label, StrategyLabel, SCHEMA_VERSION,
};
use mesc_core::cues::{MockCueBackend, CUE_MARKER};
use mesc_core::eval::{
    bertscore_pair, bleu, classify_eval_str, perplexity, predict, render_ablation_table, rouge_l, run_ablation,
    AblationSettings, EvalOptions, HashedNgramEmbedder, PerplexityItem, TABLE_COLUMNS,
};
use mesc_core::model::{
    example_inputs, gradient_check, nll_loss, prepare_examples, train, AdamConfig, ModelConfig, RandomGenerator,
    TrainOptions, UniformGenerator, Vocab,
};
use mesc_core::reasoning::{
    apply_ablation, linearize, sequential_generate, AblationVariant, Conversation, DecodeConfig, History,
    HistoryEntry, Role, SegmentSchema, SessionConfig, TurnRequest,
};
use mesc_core::cues::{compose_turn_context, EmotionCue};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn ac1_loss_oracle() -> Check {
    let logits = vec![0.0f64; 7 * 3];
    let l = nll_loss(&logits, 7, &[0, 3, 6], &[true; 3]).map_err(e)?;
    ensure((l.mean - 7f64.ln()).abs() < 1e-6, format!("uniform NLL {} != ln 7", l.mean))?;

    let mut corpus = common::mini_train();
    corpus.dialogues.truncate(1);
    let schema = SegmentSchema::default();
    let config = ModelConfig::tiny();
    let opt = TrainOptions {
        adam: AdamConfig {
            lr: 2e-3,
            ..AdamConfig::default()
        },
        epochs: 500,
        ..TrainOptions::default()
    };
    let out = train::<f64>(&corpus, &MockCueBackend, &schema, &config, &opt).map_err(e)?;
    let model = out.checkpoint.transformer().map_err(e)?;
    let examples = prepare_examples(&corpus, &MockCueBackend, &schema).map_err(e)?;
    let mut worst = 0.0f64;
    for ex in &examples {
        let mi = example_inputs(ex, &schema, &out.checkpoint.vocab, &config).map_err(e)?;
        let mut grads = model.params.zeros_like();
        let loss = model
            .loss_and_grad(&mi.source, &mi.dec_in, &mi.targets, &mi.mask, None, &mut grads)
            .map_err(e)?;
        worst = worst.max(loss);
    }
    ensure(worst < 0.01, format!("memorized loss {worst:.5} >= 0.01"))?;
    Ok(format!("uniform NLL = ln 7; memorized loss {worst:.2e} over {} sequences", examples.len()))
}

fn ac2_gradient_check() -> Check {
    let r = gradient_check(&ModelConfig::micro(), 40, 50, 2024).map_err(e)?;
    ensure(r.n_params <= 5000, format!("{} parameters", r.n_params))?;
    ensure(r.samples.len() == 50, format!("{} coordinates", r.samples.len()))?;
    ensure(r.max_relative_error < 1e-4, format!("max relative error {:.3e}", r.max_relative_error))?;
    Ok(format!("{} params, 50 coords, max rel err {:.2e}", r.n_params, r.max_relative_error))
}

fn ac3_overfit() -> Check {
    let start = Instant::now();
    let corpus = common::mini_train();
    let schema = SegmentSchema::default();
    let opt = TrainOptions {
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        epochs: 200,
        stop_at_label_accuracy: Some(1.0),
        ..TrainOptions::default()
    };
    let out = train::<f32>(&corpus, &MockCueBackend, &schema, &ModelConfig::tiny(), &opt).map_err(e)?;
    let model = out.checkpoint.transformer().map_err(e)?;
    let examples = prepare_examples(&corpus, &MockCueBackend, &schema).map_err(e)?;
    let opts = EvalOptions {
        bertscore_provider: None,
        ..EvalOptions::default()
    };
    let preds = predict(&model, &out.checkpoint.vocab, &examples, &schema, &opts).map_err(e)?;
    let mut hits = 0;
    for p in &preds {
        hits += usize::from(p.output.user_emotion == Some(p.gold.user_emotion));
        hits += usize::from(p.output.strategy == Some(p.gold.strategy));
        hits += usize::from(p.output.system_emotion == Some(p.gold.system_emotion));
    }
    let acc = hits as f64 / (3 * preds.len()) as f64;
    let secs = start.elapsed().as_secs_f64();
    ensure(acc >= 0.99, format!("label exact-match {:.2}% after {} epochs", acc * 100.0, out.loss_curve.len()))?;
    ensure(secs < 600.0, format!("took {secs:.0}s"))?;
    Ok(format!(
        "label exact-match {:.2}% on {} turns after {} epochs in {secs:.1}s",
        acc * 100.0,
        preds.len(),
        out.loss_curve.len()
    ))
}

fn ac4_constrained_decoding() -> Check {
    let words = "i feel tired and alone today work was hard my sister called again";
    let vocab = Vocab::build([words], 1);
    let pool: Vec<&str> = words.split(' ').collect();
    let schema = SegmentSchema::default();
    let decode = DecodeConfig {
        max_response_len: 8,
        ..DecodeConfig::default()
    };
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let n_entries = 1 + (i % 3) as usize;
        let mut entries = Vec::new();
        for k in 0..n_entries {
            let text: Vec<&str> = (0..3).map(|j| pool[(i as usize * 7 + k * 3 + j) % pool.len()]).collect();
            let ctx = compose_turn_context(EmotionCue::none(2 * k + 1), &text.join(" ")).map_err(e)?;
            entries.push(HistoryEntry::Context {
                index: 2 * k + 1,
                context: ctx,
            });
            if k + 1 < n_entries {
                entries.push(HistoryEntry::Response {
                    index: 2 * k + 2,
                    record: mesc_core::reasoning::ResponseRecord {
                        text: text[0].to_string(),
                        emotion: None,
                        strategy: None,
                    },
                });
            }
        }
        let history = History::new(entries).map_err(e)?;
        let g = RandomGenerator {
            vocab_size: vocab.len(),
            seed: i,
            scale: 0.5 + (i % 10) as f64,
        };
        let out = sequential_generate(&g, &history, &schema, &vocab, &decode).map_err(e)?;
        let (Some(ue), Some(st), Some(se)) = (out.user_emotion, out.strategy, out.system_emotion) else {
            return Err(format!("turn {i}: missing label"));
        };
        let s = &out.stage_scores;
        let stages = [
            (s.user_emotion.as_ref(), EmotionLabel::ALL.len(), ue.as_str()),
            (s.strategy.as_ref(), StrategyLabel::ALL.len(), st.as_str()),
            (s.system_emotion.as_ref(), EmotionLabel::ALL.len(), se.as_str()),
        ];
        for (map, n, chosen) in stages {
            let map = map.ok_or(format!("turn {i}: missing scores"))?;
            ensure(map.len() == n, format!("turn {i}: {} scores for {n} labels", map.len()))?;
            ensure(map.contains_key(chosen), format!("turn {i}: chosen label {chosen} not scored"))?;
            worst = worst.max((map.values().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst <= 1e-6, format!("score mass off by {worst:.2e}"))?;
    Ok(format!("1000 turns, all labels valid, max |sum-1| = {worst:.1e}"))
}

fn ac5_metric_oracles() -> Check {
    let s = |x: &str| vec![x.to_string()];
    let b2 = bleu(&s("a b c d"), &s("a b x d"), 2).map_err(e)?;
    ensure((b2 - 0.5).abs() < 1e-9, format!("BLEU-2 {b2}"))?;
    let same = s("i hear how tired you are");
    for (name, v) in [
        ("BLEU-2", bleu(&same, &same, 2).map_err(e)?),
        ("BLEU-4", bleu(&same, &same, 4).map_err(e)?),
        ("ROUGE-L", rouge_l(&same, &same).map_err(e)?),
        ("BERTScore", bertscore_pair(&same[0], &same[0], &HashedNgramEmbedder::default())),
    ] {
        ensure((v - 1.0).abs() < 1e-12, format!("identical-pair {name} = {v}"))?;
    }
    let c = classify_eval_str(&["A", "B", "B", "B"], &["A", "A", "B", "B"], &["A", "B"]).map_err(e)?;
    ensure((c.accuracy - 0.75).abs() < 1e-12, format!("accuracy {}", c.accuracy))?;
    ensure((c.weighted_f1 - 0.7333).abs() < 1e-4, format!("weighted F1 {}", c.weighted_f1))?;
    let items = vec![PerplexityItem {
        source: vec![1, 2],
        prefix: vec![2, 4],
        response: vec![5, 6, 3],
    }];
    let ppl = perplexity(&UniformGenerator { vocab_size: 7 }, &items).map_err(e)?;
    ensure((ppl - 7.0).abs() < 1e-4, format!("uniform perplexity {ppl}"))?;
    let perfect = fleiss_kappa(&[vec![2, 0], vec![0, 2], vec![2, 0]], 2).map_err(e)?;
    ensure(perfect == 1.0, format!("perfect-agreement kappa {perfect}"))?;
    let k = fleiss_kappa(&[vec![2, 0], vec![2, 0], vec![0, 2], vec![1, 1]], 2).map_err(e)?;
    ensure((k - 7.0 / 15.0).abs() < 1e-12, format!("4-item kappa {k} != 7/15"))?;
    Ok("BLEU, ROUGE-L, BERTScore, classification, perplexity and kappa oracles match".into())
}

const VALID_TURNS: &str = r#"[{"index":1,"speaker":"client","utterance":"I can't sleep.","emotion":"fear","clips":[]},{"index":2,"speaker":"therapist","utterance":"Tell me more.","emotion":"neutral","strategy":"open_questions","clips":[]}]"#;

fn invalid_records() -> Vec<(&'static str, String, CorpusErrorKind)> {
    use CorpusErrorKind::*;
    let rec = |turns: &str| format!("#mesc-schema:1\n{{\"id\":\"x\",\"scenario\":\"ptsd\",\"turns\":{turns}}}\n");
    let swap = |from: &str, to: &str| rec(&VALID_TURNS.replacen(from, to, 1));
    vec![
        ("wrong schema version", format!("#mesc-schema:9\n{{\"id\":\"x\",\"scenario\":\"ptsd\",\"turns\":{VALID_TURNS}}}\n"), UnsupportedSchema),
        ("truncated JSON", "#mesc-schema:1\n{\"id\":\"x\",\"scenario\":\n".to_string(), MalformedRecord),
        (
            "unknown scenario",
            format!("#mesc-schema:1\n{{\"id\":\"x\",\"scenario\":\"space_travel\",\"turns\":{VALID_TURNS}}}\n"),
            UnknownScenario,
        ),
        ("single turn", rec(r#"[{"index":1,"speaker":"client","utterance":"hi","emotion":"joy","clips":[]}]"#), TooFewTurns),
        ("index gap", swap(r#""index":2"#, r#""index":3"#), NonConsecutiveIndex),
        ("emotion surprise", swap(r#""emotion":"fear""#, r#""emotion":"surprise""#), UnknownEmotion),
        ("unknown strategy", swap("open_questions", "hypnosis"), UnknownStrategy),
        (
            "strategy on client turn",
            swap(r#""emotion":"fear","#, r#""emotion":"fear","strategy":"approval","#),
            StrategyOnClientTurn,
        ),
        (
            "clip ends before it starts",
            swap(r#""clips":[]"#, r#""clips":[{"media_id":"v","start_s":3.0,"end_s":1.0,"kind":"video"}]"#),
            NonMonotoneClipTimes,
        ),
        (
            "therapist turn without strategy",
            swap(r#","strategy":"open_questions""#, ""),
            MissingTherapistStrategy,
        ),
    ]
}

fn ac6_corpus_suite() -> Check {
    let corpus = common::mini_train();
    let stats = to_canonical_string(&compute_stats(&corpus).to_report()).map_err(e)?;
    let phase = to_canonical_string(&strategy_phase_distribution(&corpus, 4).to_report()).map_err(e)?;
    let kappa = to_canonical_string(&agreement_report(&corpus).map_err(e)?.to_report()).map_err(e)?;
    for (name, got) in [("stats", stats), ("phase", phase), ("kappa", kappa)] {
        let want = common::read_fixture(&format!("mini_train.{name}.json"));
        ensure(got == want, format!("{name} report differs from its manifest"))?;
    }
    let cases = invalid_records();
    for (name, text, kind) in &cases {
        match parse_corpus(text.as_bytes(), SCHEMA_VERSION) {
            Ok(_) => return Err(format!("{name}: accepted")),
            Err(err) => ensure(err.kind == *kind, format!("{name}: got {:?}, want {kind:?}", err.kind))?,
        }
    }
    Ok(format!("3 manifests byte-equal; {} invalid records rejected with the right class", cases.len()))
}

fn ac7_ablation_structure() -> Check {
    let corpus = common::mini_train();
    let base = SegmentSchema::default();

    let no_emo = apply_ablation(&base, AblationVariant::NoEmotion).map_err(e)?;
    let examples = prepare_examples(&corpus, &MockCueBackend, &no_emo).map_err(e)?;
    let vocab = mesc_core::model::build_vocab(&examples, 1);
    let usr_emo = vocab.special(base.marker(Role::UsrEmo)).ok_or("no USR_EMO marker")?;
    let usr_labels: Vec<u32> = EmotionLabel::ALL.iter().map(|&l| vocab.user_emotion(l)).collect();
    for ex in &examples {
        let seq = linearize(&ex.history, &ex.gold, &no_emo, &vocab).map_err(e)?;
        ensure(
            seq.tokens.iter().all(|t| *t != usr_emo && !usr_labels.contains(t)),
            format!("{}#{}: USR_EMO token in -emotion sequence", ex.dialogue_id, ex.turn_index),
        )?;
        ensure(seq.role_tokens(Role::UsrEmo).is_empty(), "USR_EMO span present")?;
    }

    let cue_count = |schema: &SegmentSchema| -> Result<usize, String> {
        let ex = prepare_examples(&corpus, &MockCueBackend, schema).map_err(e)?;
        Ok(ex
            .iter()
            .flat_map(|x| &x.history.entries)
            .filter(|h| matches!(h, HistoryEntry::Context { context, .. } if context.rendered.contains(CUE_MARKER)))
            .count())
    };
    ensure(cue_count(&base)? > 0, "baseline contexts carry no cue")?;
    let no_video = apply_ablation(&base, AblationVariant::NoVideo).map_err(e)?;
    ensure(cue_count(&no_video)? == 0, "-video context contains a cue marker")?;

    let settings = AblationSettings {
        schema: base,
        model: ModelConfig::micro(),
        train: TrainOptions {
            epochs: 2,
            ..TrainOptions::default()
        },
        eval: EvalOptions {
            decode: DecodeConfig {
                max_response_len: 8,
                ..DecodeConfig::default()
            },
            ..EvalOptions::default()
        },
        parallel: true,
    };
    let reports = run_ablation(
        &[AblationVariant::Baseline, AblationVariant::NoEmotion],
        &corpus,
        &corpus,
        &MockCueBackend,
        &settings,
    )
    .map_err(e)?;
    let b = &reports[0];
    let d = b.deltas;
    for v in [d.task1_acc, d.task2_acc, d.task3_wf1, d.task4_ppl, d.task4_bleu2, d.task4_bleu4, d.task4_rouge_l] {
        ensure(v == Some(0.0), format!("baseline delta {v:?}"))?;
    }
    let table = render_ablation_table(&reports);
    for c in TABLE_COLUMNS {
        ensure(table.contains(c), format!("table lacks column {c}"))?;
    }
    ensure(table.contains("-emotion"), "table lacks the -emotion row")?;
    Ok(format!("{} -emotion sequences clean, -video cue-free, zero baseline deltas, 7 columns", examples.len()))
}

fn ac8_determinism() -> Check {
    let corpus = common::mini_train();
    let schema = SegmentSchema::default();
    let opt = TrainOptions {
        epochs: 3,
        ..TrainOptions::default()
    };
    let run = || train::<f64>(&corpus, &MockCueBackend, &schema, &ModelConfig::micro(), &opt).map(|o| o.loss_curve);
    let (a, b) = (run().map_err(e)?, run().map_err(e)?);
    ensure(a == b, "loss curves differ between same-seed runs")?;

    let vocab = Vocab::build(["i hear you that sounds really hard tell me more"], 1);
    let g = RandomGenerator {
        vocab_size: vocab.len(),
        seed: 99,
        scale: 3.0,
    };
    let script = [
        "I can't sleep.",
        "My job is falling apart.",
        "I yelled at my sister.",
        "Maybe I should call her.",
        "Thanks, that helps.",
    ];
    let session = || -> Result<Vec<_>, String> {
        let mut c = Conversation::new(&SessionConfig::default()).map_err(e)?;
        script
            .iter()
            .map(|u| c.post_turn(&TurnRequest::text(*u), &g, &vocab, &MockCueBackend).map_err(e))
            .collect()
    };
    let (x, y) = (session()?, session()?);
    ensure(x.len() == 5 && x == y, "session replay differs")?;
    Ok("same-seed loss curves identical; 5-turn session replays identically; mock cues only".into())
}

type Named = (&'static str, fn() -> Check);

fn main() {
    let checks: [Named; 8] = [
        ("AC1 loss oracle", ac1_loss_oracle),
        ("AC2 gradient check", ac2_gradient_check),
        ("AC3 overfit sanity", ac3_overfit),
        ("AC4 constrained decoding", ac4_constrained_decoding),
        ("AC5 metric oracles", ac5_metric_oracles),
        ("AC6 corpus suite", ac6_corpus_suite),
        ("AC7 ablation structure", ac7_ablation_structure),
        ("AC8 determinism and replay", ac8_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {name}: {detail} ({:.1}s)", t.elapsed().as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
