//! Scratch harness for sizing the debiasing experiment: trains the biased
//! text-only model A and the union model B on synthetic data and prints
//! their probe statistics.
//!
//! Usage: debias_tune [scenes] [iters] [batch] [lr] [seed]

use std::time::Instant;

use lookread_core::dataset::{
    build_vocabulary, generate_synthetic, QARecord, Split, SynthConfig, UnionDataset, WordVocab,
};
use lookread_core::evaluator::{balance_probe_set, probe_bias, Metric};
use lookread_core::model::{
    run_training, AdamWOptions, Model, ModelConfig, TrainLoopOptions,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: f64| -> f64 {
        args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
    };
    let scenes = arg(1, 400.0) as usize;
    let iters = arg(2, 1200.0) as usize;
    let batch = arg(3, 16.0) as usize;
    let lr = arg(4, 1e-3);
    let seed = arg(5, 7.0) as u64;

    let biased_cfg = SynthConfig {
        scenes_train: scenes,
        scenes_val: 1,
        scenes_test: 1,
        beta: 0.9,
        ..SynthConfig::default()
    };
    let union_cfg = SynthConfig {
        scenes_train: scenes,
        scenes_val: 1,
        scenes_test: 200,
        beta: 0.0,
        ..SynthConfig::default()
    };
    let biased = generate_synthetic(&biased_cfg, seed).unwrap();
    let union = generate_synthetic(&union_cfg, seed).unwrap();

    let text_only: Vec<QARecord> = biased
        .records
        .iter()
        .filter(|r| r.split == Split::Train && matches!(r.template_tag().as_str(), "t2" | "t3"))
        .cloned()
        .collect();
    let union_train: Vec<QARecord> = union
        .records
        .iter()
        .filter(|r| r.split == Split::Train)
        .cloned()
        .collect();
    let probe: Vec<QARecord> = balance_probe_set(
        &union
            .records
            .iter()
            .filter(|r| r.split == Split::Test && r.template_tag() == "t3")
            .cloned()
            .collect::<Vec<_>>(),
    );
    println!(
        "text-only train {} records, union train {} records, probe {} records",
        text_only.len(),
        union_train.len(),
        probe.len()
    );

    let train = |name: &str, records: &[QARecord]| -> Model {
        let start = Instant::now();
        let union_ds = UnionDataset::from_records(records.to_vec()).unwrap();
        let answer_vocab = build_vocabulary(&union_ds, 1000).unwrap();
        let question_vocab = WordVocab::build(records.iter().map(|r| r.question.as_str()), 1000);
        let cfg = ModelConfig::desk_scale(answer_vocab.len(), question_vocab.len());
        let mut model = Model::init(cfg, answer_vocab, question_vocab, seed).unwrap();
        let opts = TrainLoopOptions {
            iterations: iters,
            batch_size: batch,
            adamw: AdamWOptions {
                lr,
                ..AdamWOptions::default()
            },
            seed,
        };
        let mut last_print = Instant::now();
        run_training(&mut model, records, &opts, |it, loss| {
            if last_print.elapsed().as_secs() >= 10 || it == 1 {
                println!("  {name} iter {it}: loss {loss:.4}");
                last_print = Instant::now();
            }
        })
        .unwrap();
        println!("  {name} trained in {:.1}s", start.elapsed().as_secs_f64());
        model
    };

    let mut model_a = train("A(text-only,b=0.9)", &text_only);
    let mut model_b = train("B(union,b=0)", &union_train);

    let report_a = probe_bias(&mut model_a, &probe, Metric::Literal).unwrap();
    let report_b = probe_bias(&mut model_b, &probe, Metric::Literal).unwrap();
    println!(
        "A: majority '{}' rate {:.3}, accuracy {:.3}",
        report_a.majority_answer, report_a.majority_rate, report_a.accuracy_on_balanced
    );
    println!(
        "B: majority '{}' rate {:.3}, accuracy {:.3}",
        report_b.majority_answer, report_b.majority_rate, report_b.accuracy_on_balanced
    );
    println!(
        "accuracy gap (B-A): {:.1} points (need >= 15)",
        (report_b.accuracy_on_balanced - report_a.accuracy_on_balanced) * 100.0
    );
    println!(
        "majority gap (A-B): {:.1} points (need >= 20)",
        (report_a.majority_rate - report_b.majority_rate) * 100.0
    );
}
