use std::path::Path;

use super::decoder::{embed_record, encode_entities, joint_pass, step_logits};
use super::train::{teacher_plan, TeacherInput};
use super::*;
use crate::dataset::{
    AnswerVocabulary, ObjectEntity, OcrToken, QARecord, Source, Split, WordVocab, ANSWER_COUNT,
    END_INDEX, UNK_INDEX,
};
use crate::embedder::EntityKind;
use crate::numerics::{derive_seed, grad_check, Graph, SplitMix64, Tensor};

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        d: 8,
        layers: 1,
        heads: 2,
        max_steps: 4,
        ocr_cap: 50,
        obj_cap: 100,
        question_cap: 20,
        vocab_size: 6,
        ffn_width: 16,
        f_obj: 4,
        f_text: 4,
        f_appearance: 2,
        question_vocab_size: 8,
    }
}

fn test_vocabs() -> (AnswerVocabulary, WordVocab) {
    let answers = AnswerVocabulary::from_tokens(vec![
        "<begin>".into(),
        "<end>".into(),
        "<unk>".into(),
        "stop".into(),
        "red".into(),
        "blue".into(),
    ])
    .unwrap();
    let questions = WordVocab::from_words(vec![
        "<unk>".into(),
        "what".into(),
        "is".into(),
        "the".into(),
        "left".into(),
        "sign".into(),
        "say".into(),
        "token".into(),
    ])
    .unwrap();
    (answers, questions)
}

fn token(text: &str, bbox: [f64; 4]) -> OcrToken {
    OcrToken {
        text: text.into(),
        bbox,
        word_vec: None,
        appearance: None,
    }
}

fn test_record(answer: &str, ocr_texts: &[&str]) -> QARecord {
    QARecord {
        id: "rec-1".into(),
        source: Source::Synthetic,
        image_id: "img-1".into(),
        image_size: (256, 256),
        question: "what is the left token".into(),
        answers: vec![answer.to_string(); ANSWER_COUNT],
        ocr: ocr_texts
            .iter()
            .enumerate()
            .map(|(i, t)| token(t, [0.1 * i as f64, 0.0, 0.1 * i as f64 + 0.1, 0.2]))
            .collect(),
        objects: vec![
            ObjectEntity {
                feature: vec![1.0, 0.0, 0.0, 0.0],
                bbox: [0.0, 0.5, 0.4, 1.0],
            },
            ObjectEntity {
                feature: vec![0.0, 1.0, 0.0, 0.0],
                bbox: [0.5, 0.5, 1.0, 1.0],
            },
        ],
        split: Split::Train,
    }
}

fn test_model(seed: u64) -> Model {
    let (answers, questions) = test_vocabs();
    Model::init(tiny_cfg(), answers, questions, seed).unwrap()
}

// ── encoder ──────────────────────────────────────────────────────────

#[test]
fn single_entity_attention_is_one() {
    let cfg = tiny_cfg();
    let params = ModelParams::init(&cfg, 3);
    let mut g = Graph::new();
    let nodes = params.register(&mut g);
    let mut rng = SplitMix64::new(9);
    let x = g.input(Tensor::uniform(1, cfg.d, -1.0, 1.0, &mut rng));
    let (_, attention) = encode(&mut g, x, &nodes.layers, cfg.heads, None).unwrap();
    for layer in &attention {
        for &head in layer {
            assert_eq!(g.value(head).values(), &[1.0]);
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let cfg = tiny_cfg();
    let params = ModelParams::init(&cfg, 4);
    let mut g = Graph::new();
    let nodes = params.register(&mut g);
    let mut rng = SplitMix64::new(10);
    let x = g.input(Tensor::uniform(9, cfg.d, -1.0, 1.0, &mut rng));
    let (_, attention) = encode(&mut g, x, &nodes.layers, cfg.heads, None).unwrap();
    for layer in &attention {
        for &head in layer {
            let a = g.value(head);
            for r in 0..a.rows() {
                let sum: f64 = a.row_slice(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_layers_is_identity() {
    let cfg = tiny_cfg();
    let mut g = Graph::new();
    let mut rng = SplitMix64::new(11);
    let t = Tensor::uniform(5, cfg.d, -1.0, 1.0, &mut rng);
    let x = g.input(t.clone());
    let (out, attention) = encode(&mut g, x, &[], cfg.heads, None).unwrap();
    assert_eq!(g.value(out).values(), t.values());
    assert!(attention.is_empty());
}

#[test]
fn permuting_object_rows_permutes_their_states() {
    let cfg = tiny_cfg();
    let params = ModelParams::init(&cfg, 5);
    let (_, questions) = test_vocabs();

    let record = test_record("red", &["amber", "bolt"]);
    let mut swapped = record.clone();
    swapped.objects.swap(0, 1);

    let run = |r: &QARecord| -> Vec<f64> {
        let mut g = Graph::new();
        let nodes = params.register(&mut g);
        let seq = embed_record(&mut g, &nodes, r, &questions).unwrap();
        let (states, _) = encode_entities(&mut g, &nodes, &seq, &cfg).unwrap();
        g.value(states).values().to_vec()
    };
    let base = run(&record);
    let perm = run(&swapped);
    let d = cfg.d;
    // Object rows 0 and 1 swap; every other row is unchanged.
    for j in 0..d {
        assert!((base[j] - perm[d + j]).abs() < 1e-9);
        assert!((base[d + j] - perm[j]).abs() < 1e-9);
    }
    for row in 2..base.len() / d {
        for j in 0..d {
            let idx = row * d + j;
            assert!(
                (base[idx] - perm[idx]).abs() < 1e-9,
                "row {row} changed under object permutation"
            );
        }
    }
}

#[test]
fn joint_mask_blocks_entities_from_decoder() {
    let mask = joint_mask(3, 2);
    for i in 0..3 {
        for j in 0..3 {
            assert!(mask.allows(i, j));
        }
        for j in 3..5 {
            assert!(!mask.allows(i, j), "entity {i} must not see decoder {j}");
        }
    }
    assert!(mask.allows(3, 0) && mask.allows(3, 3) && !mask.allows(3, 4));
    assert!(mask.allows(4, 3) && mask.allows(4, 4));
}

// ── pointer ──────────────────────────────────────────────────────────

#[test]
fn pointer_orthogonal_states_score_zero() {
    let d = 4;
    let mut g = Graph::new();
    let eye = |g: &mut Graph| {
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            v[i * d + i] = 1.0;
        }
        g.input(Tensor::matrix(d, d, v).unwrap())
    };
    let ptr = PointerNodes {
        w_q: eye(&mut g),
        b_q: g.input(Tensor::zeros(1, d)),
        w_o: eye(&mut g),
        b_o: g.input(Tensor::zeros(1, d)),
    };
    let z = g.input(Tensor::matrix(1, d, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
    let s = g.input(
        Tensor::matrix(2, d, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(),
    );
    let scores = pointer_scores(&mut g, z, s, &ptr).unwrap();
    assert_eq!(g.value(scores).values(), &[0.0, 0.0]);
}

#[test]
fn pointer_duplicate_rows_score_equally() {
    let d = 4;
    let mut rng = SplitMix64::new(21);
    let mut g = Graph::new();
    let ptr = PointerNodes {
        w_q: g.input(Tensor::uniform(d, d, -0.5, 0.5, &mut rng)),
        b_q: g.input(Tensor::uniform(1, d, -0.5, 0.5, &mut rng)),
        w_o: g.input(Tensor::uniform(d, d, -0.5, 0.5, &mut rng)),
        b_o: g.input(Tensor::uniform(1, d, -0.5, 0.5, &mut rng)),
    };
    let z = g.input(Tensor::uniform(1, d, -1.0, 1.0, &mut rng));
    let row: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
    let mut duplicated = row.clone();
    duplicated.extend_from_slice(&row);
    let s = g.input(Tensor::matrix(2, d, duplicated).unwrap());
    let scores = pointer_scores(&mut g, z, s, &ptr).unwrap();
    let v = g.value(scores).values();
    assert_eq!(v[0], v[1]);
}

#[test]
fn pointer_gradient_check() {
    let d = 4;
    let mut rng = SplitMix64::new(22);
    let params = vec![
        Tensor::uniform(d, d, -0.5, 0.5, &mut rng), // w_q
        Tensor::uniform(1, d, -0.5, 0.5, &mut rng), // b_q
        Tensor::uniform(d, d, -0.5, 0.5, &mut rng), // w_o
        Tensor::uniform(1, d, -0.5, 0.5, &mut rng), // b_o
        Tensor::uniform(2, d, -1.0, 1.0, &mut rng), // decoder states
        Tensor::uniform(3, d, -1.0, 1.0, &mut rng), // ocr states
    ];
    let max_rel = grad_check(
        |g, ids| {
            let ptr = PointerNodes {
                w_q: ids[0],
                b_q: ids[1],
                w_o: ids[2],
                b_o: ids[3],
            };
            let scores = pointer_scores(g, ids[4], ids[5], &ptr)?;
            let weights = g.input(Tensor::matrix(3, 1, vec![0.3, -0.7, 1.1]).unwrap());
            let reduced = g.matmul(scores, weights)?;
            g.sum_all(reduced)
        },
        &params,
    )
    .unwrap();
    assert!(max_rel < 1e-4, "{max_rel}");
}

// ── greedy decoding ──────────────────────────────────────────────────

#[test]
fn argmax_prefers_first_index_on_ties() {
    let scores = StepScores {
        vocab: vec![1.0, 2.0, 2.0],
        ocr: vec![2.0],
    };
    let (choice, score) = scores.argmax();
    assert_eq!(choice, StepChoice::Vocab(1));
    assert_eq!(score, 2.0);
}

#[test]
fn suppressed_vocabulary_forces_byte_exact_copies() {
    let mut model = test_model(31);
    model.cfg.max_steps = 1;
    // Vocabulary scores can never win against the pointer.
    model.params.b_vocab = Tensor::filled(1, model.cfg.vocab_size, -50.0);

    let record = test_record("stop", &["StoP!", "MiXeD", "plain"]);
    let answer = model.decode(&record).unwrap();
    assert_eq!(answer.steps.len(), 1);
    match answer.steps[0].choice {
        StepChoice::Ocr(i) => assert_eq!(answer.text, record.ocr[i].text),
        StepChoice::Vocab(_) => panic!("vocabulary should be suppressed"),
    }
}

#[test]
fn immediate_end_token_gives_empty_answer() {
    let mut model = test_model(32);
    let mut bias = vec![-100.0; model.cfg.vocab_size];
    bias[END_INDEX] = 100.0;
    model.params.b_vocab = Tensor::matrix(1, model.cfg.vocab_size, bias).unwrap();

    let record = test_record("stop", &["amber"]);
    let answer = model.decode(&record).unwrap();
    assert_eq!(answer.steps.len(), 1);
    assert_eq!(answer.text, "");
}

#[test]
fn decode_without_end_runs_all_twelve_steps() {
    let mut model = test_model(33);
    model.cfg.max_steps = 12;
    let mut bias = vec![-100.0; model.cfg.vocab_size];
    bias[3] = 100.0; // "stop" dominates, end never fires
    model.params.b_vocab = Tensor::matrix(1, model.cfg.vocab_size, bias).unwrap();

    let record = test_record("stop", &["amber"]);
    let answer = model.decode(&record).unwrap();
    assert_eq!(answer.steps.len(), 12);
    assert_eq!(answer.text, vec!["stop"; 12].join(" "));
}

#[test]
fn decode_attention_is_row_stochastic() {
    let model = test_model(34);
    let record = test_record("red", &["amber", "bolt"]);
    let answer = model.decode(&record).unwrap();
    assert!(!answer.attention.is_empty());
    for layer in &answer.attention {
        for head in layer {
            for r in 0..head.rows() {
                let sum: f64 = head.row_slice(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
            }
        }
    }
}

#[test]
fn decoder_causality_holds_under_input_perturbation() {
    let cfg = tiny_cfg();
    let params = ModelParams::init(&cfg, 35);
    let (answers, questions) = test_vocabs();
    let record = test_record("red", &["amber", "bolt"]);

    // Teacher-forced logits for two input sequences differing at step 2.
    let logits_for = |third_input: usize| -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let nodes = params.register(&mut g);
        let seq = embed_record(&mut g, &nodes, &record, &questions).unwrap();
        let (_, ocr_states) = encode_entities(&mut g, &nodes, &seq, &cfg).unwrap();
        let inputs: Vec<_> = [0usize, 3, third_input, 4]
            .iter()
            .map(|&v| g.gather_rows(nodes.ans_table, vec![v]).unwrap())
            .collect();
        let (dec_states, _) = joint_pass(&mut g, &nodes, &seq, &inputs, &cfg).unwrap();
        let logits = step_logits(&mut g, &nodes, dec_states, ocr_states).unwrap();
        (0..4).map(|t| g.value(logits).row_slice(t).to_vec()).collect()
    };
    let a = logits_for(4);
    let b = logits_for(5);
    assert_eq!(a[0], b[0], "step 0 must ignore later inputs");
    assert_eq!(a[1], b[1], "step 1 must ignore later inputs");
    assert_ne!(a[2], b[2], "step 2 consumes the perturbed input");

    let _ = answers;
}

// ── training ─────────────────────────────────────────────────────────

#[test]
fn saturated_bce_loss_is_negligible() {
    let mut g = Graph::new();
    let logits = g.input(
        Tensor::matrix(2, 3, vec![20.0, -20.0, -20.0, -20.0, 20.0, 20.0]).unwrap(),
    );
    let targets = vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    let loss = g.bce_with_logits(logits, targets).unwrap();
    assert!(g.value(loss).values()[0] < 1e-6);
}

#[test]
fn teacher_plan_marks_vocab_and_ocr_positives() {
    let cfg = tiny_cfg();
    let (answers, _) = test_vocabs();
    // "stop" is in the vocabulary (index 3) and appears twice in the OCR
    // list, case-insensitively.
    let record = test_record("stop", &["STOP", "bolt", "stop"]);
    let plan = teacher_plan(&record, &answers, &cfg);
    assert_eq!(plan.positives.len(), 2);
    assert_eq!(
        plan.positives[0],
        vec![3, cfg.vocab_size, cfg.vocab_size + 2]
    );
    assert_eq!(plan.positives[1], vec![END_INDEX]);
    // Input feedback prefers the first OCR match.
    assert_eq!(plan.inputs[0], TeacherInput::Begin);
    assert_eq!(plan.inputs[1], TeacherInput::OcrState(0));
}

#[test]
fn teacher_plan_maps_missing_words_to_unk() {
    let cfg = tiny_cfg();
    let (answers, _) = test_vocabs();
    let record = test_record("zzz", &["amber"]);
    let plan = teacher_plan(&record, &answers, &cfg);
    assert_eq!(plan.positives[0], vec![UNK_INDEX]);
    assert_eq!(plan.inputs[1], TeacherInput::Vocab(UNK_INDEX));
}

#[test]
fn one_gradient_step_decreases_loss() {
    let mut model = test_model(41);
    let (answers, questions) = test_vocabs();
    let record = test_record("red", &["amber", "bolt"]);
    let batch = vec![record];

    let before = batch_loss(&batch, &model.params, &model.cfg, &answers, &questions).unwrap();
    let mut state = AdamWState::new(&model.params);
    let opts = AdamWOptions::default(); // lr 1e-4
    train_step(
        &batch,
        &mut model.params,
        &model.cfg,
        &answers,
        &questions,
        &opts,
        &mut state,
    )
    .unwrap();
    let after = batch_loss(&batch, &model.params, &model.cfg, &answers, &questions).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn full_model_gradient_check_on_tiny_config() {
    let cfg = tiny_cfg();
    let (answers, questions) = test_vocabs();
    let record = test_record("red", &["amber", "bolt"]);
    for seed in 0..2u64 {
        // Brief training conditions the check: see `model_grad_check`.
        let mut model = Model::init(
            cfg.clone(),
            answers.clone(),
            questions.clone(),
            derive_seed(100, seed),
        )
        .unwrap();
        let opts = TrainLoopOptions {
            iterations: 120,
            batch_size: 1,
            adamw: AdamWOptions {
                lr: 5e-3,
                ..AdamWOptions::default()
            },
            seed,
        };
        let loss =
            run_training(&mut model, std::slice::from_ref(&record), &opts, |_, _| {}).unwrap();
        assert!(loss < 5e-3, "seed {seed}: loss {loss} too high for the check");
        let max_rel =
            model_grad_check(&record, &model.params, &cfg, &answers, &questions).unwrap();
        assert!(max_rel < 1e-4, "seed {seed}: {max_rel}");
    }
}

#[test]
fn run_training_is_deterministic() {
    let records: Vec<QARecord> = (0..6)
        .map(|i| {
            let mut r = test_record("red", &["amber", "bolt"]);
            r.id = format!("rec-{i}");
            r
        })
        .collect();
    let opts = TrainLoopOptions {
        iterations: 4,
        batch_size: 3,
        adamw: AdamWOptions {
            lr: 1e-3,
            ..AdamWOptions::default()
        },
        seed: 99,
    };
    let run = || {
        let mut model = test_model(50);
        run_training(&mut model, &records, &opts, |_, _| {}).unwrap();
        model
            .params
            .named()
            .iter()
            .flat_map(|(_, t)| t.values().to_vec())
            .collect::<Vec<f64>>()
    };
    assert_eq!(run(), run());
}

// ── checkpointing ────────────────────────────────────────────────────

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = test_model(60);
    model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();

    assert_eq!(loaded.cfg, model.cfg);
    assert_eq!(loaded.answer_vocab.tokens(), model.answer_vocab.tokens());
    assert_eq!(loaded.question_vocab.words(), model.question_vocab.words());
    for ((name, a), (_, b)) in model.params.named().iter().zip(loaded.params.named()) {
        let a_bits: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        let b_bits: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a_bits, b_bits, "tensor {name} differs after round trip");
    }

    // Saving the loaded model reproduces the file byte for byte.
    let path2 = dir.path().join("model2.ckpt");
    loaded.save(&path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn checkpoint_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    let err = Model::load(&path).unwrap_err();
    assert!(matches!(err, ModelError::Checkpoint { .. }));
    assert!(Model::load(Path::new("/missing/nope.ckpt")).is_err());
}

// ── attention export ─────────────────────────────────────────────────

fn rigged_answer(masses: &[f64], kinds: Vec<EntityKind>) -> DecodedAnswer {
    let n = masses.len();
    let total = n + 1;
    let mut row = vec![0.0; total * total];
    // Entity rows: uniform self-attention keeps rows stochastic.
    for i in 0..n {
        for j in 0..n {
            row[i * total + j] = 1.0 / n as f64;
        }
    }
    for (j, &m) in masses.iter().enumerate() {
        row[n * total + j] = m;
    }
    row[n * total + n] = 1.0 - masses.iter().sum::<f64>();
    DecodedAnswer {
        steps: vec![],
        text: String::new(),
        attention: vec![vec![Tensor::matrix(total, total, row).unwrap()]],
        entity_kinds: kinds,
        n_entities: n,
    }
}

#[test]
fn full_image_entity_saturates_grid() {
    let record = test_record("x", &["full"]);
    let mut record = record;
    record.ocr[0].bbox = [0.0, 0.0, 1.0, 1.0];
    record.objects.clear();
    let answer = rigged_answer(&[0.6], vec![EntityKind::Ocr]);
    let heatmap = export_attention(&answer, &record, 0, 0).unwrap();
    assert!(heatmap.grid.iter().all(|&v| v == 255));
}

#[test]
fn disjoint_boxes_scale_linearly() {
    let mut record = test_record("x", &["a", "b"]);
    record.objects.clear();
    record.ocr[0].bbox = [0.0, 0.0, 0.5, 0.5];
    record.ocr[1].bbox = [0.5, 0.5, 1.0, 1.0];
    let answer = rigged_answer(&[0.75, 0.25], vec![EntityKind::Ocr, EntityKind::Ocr]);
    let heatmap = export_attention(&answer, &record, 0, 0).unwrap();

    let at = |r: usize, c: usize| heatmap.grid[r * HEATMAP_SIZE + c];
    assert_eq!(at(0, 0), 255);
    assert_eq!(at(31, 31), 255);
    assert_eq!(at(32, 32), 85, "0.25/0.75 of full scale");
    assert_eq!(at(63, 63), 85);
    assert_eq!(at(0, 63), 0, "empty overlap region stays background");
    assert_eq!(at(63, 0), 0);
}

#[test]
fn attention_export_validates_indices() {
    let record = test_record("x", &["a"]);
    let answer = rigged_answer(&[1.0], vec![EntityKind::Ocr]);
    assert!(export_attention(&answer, &record, 1, 0).is_err());
    assert!(export_attention(&answer, &record, 0, 1).is_err());
}

#[test]
fn pgm_output_is_well_formed() {
    let mut record = test_record("x", &["a"]);
    record.objects.clear();
    record.ocr[0].bbox = [0.0, 0.0, 1.0, 1.0];
    let answer = rigged_answer(&[0.5], vec![EntityKind::Ocr]);
    let heatmap = export_attention(&answer, &record, 0, 0).unwrap();
    let pgm = heatmap.to_pgm();
    assert!(pgm.starts_with("P2\n64 64\n255\n"));
    assert_eq!(pgm.lines().count(), 3 + 64);
    let tsv = heatmap.masses_tsv();
    assert!(tsv.starts_with("kind\t"));
    assert!(tsv.contains("ocr\t0\t0\t1\t1\t0.5"));
}

// ── model bundle ─────────────────────────────────────────────────────

#[test]
fn model_init_validates_vocab_sizes() {
    let (answers, questions) = test_vocabs();
    let mut cfg = tiny_cfg();
    cfg.vocab_size = 99;
    assert!(Model::init(cfg, answers, questions, 1).is_err());
}
