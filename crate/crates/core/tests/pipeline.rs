mod common;

use mesc_core::cues::MockCueBackend;
use mesc_core::eval::{evaluate, EvalOptions};
use mesc_core::model::{
    generator_adapter, loss_curve_csv, prepare_examples, train, Checkpoint, CheckpointError, GeneratorSource,
    ModelConfig, Precision, TrainOptions, Vocab,
};
use mesc_core::reasoning::{
    apply_ablation, sequential_generate_traced, AblationVariant, DecodeConfig, LossPolicy, Role, SegmentSchema,
};

fn quick() -> TrainOptions {
    TrainOptions {
        epochs: 2,
        ..TrainOptions::default()
    }
}

#[test]
fn checkpoint_reload_reproduces_greedy_outputs() {
    let corpus = common::mini_train();
    let schema = SegmentSchema::default();
    let out = train::<f64>(&corpus, &MockCueBackend, &schema, &ModelConfig::micro(), &quick()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    out.checkpoint.save(&path).unwrap();

    let handle = generator_adapter(GeneratorSource::Checkpoint {
        path: path.clone(),
        precision: Precision::F64,
    })
    .unwrap();
    let vocab = handle.vocab.clone().unwrap();
    assert_eq!(handle.schema.as_ref(), Some(&schema));
    let original = out.checkpoint.transformer().unwrap();
    let examples = prepare_examples(&corpus, &MockCueBackend, &schema).unwrap();
    let opts = EvalOptions {
        decode: DecodeConfig {
            max_response_len: 6,
            ..DecodeConfig::default()
        },
        ..EvalOptions::default()
    };
    let (ra, pa) = evaluate(&original, &vocab, &examples, &schema, &opts).unwrap();
    let (rb, pb) = evaluate(handle.generator.as_ref(), &vocab, &examples, &schema, &opts).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(ra, rb);
    assert_eq!(ra.n_turns, examples.len());

    let loaded = Checkpoint::<f64>::load(&path).unwrap();
    assert_eq!(loaded.meta.loss_curve, out.loss_curve);
    assert_eq!(loss_curve_csv(&out.loss_curve).lines().count(), 3);
}

#[test]
fn checkpoint_refuses_a_different_vocabulary() {
    let corpus = common::mini_train();
    let out = train::<f32>(&corpus, &MockCueBackend, &SegmentSchema::default(), &ModelConfig::micro(), &quick()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    out.checkpoint.save(&path).unwrap();
    let other = Vocab::build(["completely different words"], 1);
    assert!(matches!(
        Checkpoint::<f32>::load_for_vocab(&path, &other),
        Err(CheckpointError::DigestMismatch { .. })
    ));
    assert!(Checkpoint::<f32>::load_for_vocab(&path, &out.checkpoint.vocab).is_ok());
}

#[test]
fn stage_conditioning_grows_by_marker_and_label() {
    let corpus = common::mini_train();
    for policy in [LossPolicy::TargetsOnly, LossPolicy::FullSequence] {
        let schema = SegmentSchema {
            loss_policy: policy,
            ..SegmentSchema::default()
        };
        let out = train::<f32>(&corpus, &MockCueBackend, &schema, &ModelConfig::micro(), &quick()).unwrap();
        let model = out.checkpoint.transformer().unwrap();
        let vocab = &out.checkpoint.vocab;
        let examples = prepare_examples(&corpus, &MockCueBackend, &schema).unwrap();
        for ex in examples.iter().take(5) {
            let (_, trace) = sequential_generate_traced(&model, &ex.history, &schema, vocab, &DecodeConfig::default()).unwrap();
            let roles: Vec<Role> = trace.iter().map(|t| t.role).collect();
            assert_eq!(roles, [Role::UsrEmo, Role::Strat, Role::SysEmo]);
            for w in trace.windows(2) {
                let marker = vocab.special(schema.marker(w[0].role)).unwrap();
                let mut expect = w[0].conditioning.clone();
                expect.extend([marker, w[0].chosen]);
                assert_eq!(w[1].conditioning, expect);
            }
        }
    }
}

#[test]
fn ablated_stages_are_absent_from_reports() {
    let corpus = common::mini_train();
    let schema = apply_ablation(&SegmentSchema::default(), AblationVariant::NoStrategy).unwrap();
    let out = train::<f32>(&corpus, &MockCueBackend, &schema, &ModelConfig::micro(), &quick()).unwrap();
    let model = out.checkpoint.transformer().unwrap();
    let examples = prepare_examples(&corpus, &MockCueBackend, &schema).unwrap();
    let (report, preds) = evaluate(&model, &out.checkpoint.vocab, &examples, &schema, &EvalOptions::default()).unwrap();
    assert!(report.strategy.is_none());
    assert!(report.user_emotion.is_some() && report.system_emotion.is_some());
    assert!(preds.iter().all(|p| p.output.strategy.is_none() && p.output.stage_scores.strategy.is_none()));
}
