//! Synthetic "look and read" scene generator.
//!
//! Each scene places a handful of distinct text tokens and a few shaped
//! objects on a grid, then asks three kinds of questions about it:
//!
//! - T1, visual only: "how many <shape>" -> a count word.
//! - T2, text only: "what does the sign say" -> the one token flagged with
//!   the sign appearance vector.
//! - T3, look and read: "what is the <relation> token" -> the token at that
//!   grid position.
//!
//! The bias knob `beta` forces the answers of a fraction of T3 *training*
//! records to the distractor word "stop", which never appears in any scene.
//! That reproduces, in miniature, a language prior: a question-answer
//! correlation a model can exploit without looking at the image, and one
//! that contradicts the image whenever it fires.

use crate::numerics::{derive_seed, SplitMix64};

use super::record::{ObjectEntity, OcrToken, QARecord, Source, Split, ANSWER_COUNT};
use super::union::UnionDataset;
use super::DatasetError;

/// Scene-text word pool. "stop" is deliberately absent: it is reserved as
/// the bias distractor.
pub const WORD_POOL: [&str; 16] = [
    "amber", "bolt", "cedar", "delta", "ember", "frost", "gale", "harbor", "ivory", "jade",
    "koala", "lunar", "maple", "nectar", "onyx", "prism",
];

pub const SHAPES: [&str; 6] = ["circle", "square", "triangle", "star", "ring", "cross"];

pub const COUNT_WORDS: [&str; 5] = ["zero", "one", "two", "three", "four"];

pub const RELATIONS: [&str; 5] = ["left", "middle", "right", "top", "bottom"];

pub const BIAS_WORD: &str = "stop";

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub scenes_train: usize,
    pub scenes_val: usize,
    pub scenes_test: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Fraction of T3 training records whose answer is forced to "stop".
    pub beta: f64,
    /// Object feature width (one-hot shape, zero padded).
    pub f_obj: usize,
    /// Appearance feature width (all-ones marks the flagged sign token).
    pub f_appearance: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenes_train: 600,
            scenes_val: 100,
            scenes_test: 200,
            grid_w: 4,
            grid_h: 4,
            beta: 0.0,
            f_obj: 32,
            f_appearance: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |message: String| Err(DatasetError::Validation { message });
        if self.scenes_train == 0 || self.scenes_val == 0 || self.scenes_test == 0 {
            return fail("scene counts must be positive".into());
        }
        if self.grid_w < 2 || self.grid_h < 2 {
            return fail(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_w, self.grid_h
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return fail(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.f_obj < SHAPES.len() {
            return fail(format!(
                "f_obj must hold a one-hot of {} shapes, got {}",
                SHAPES.len(),
                self.f_obj
            ));
        }
        if self.f_appearance == 0 {
            return fail("f_appearance must be positive".into());
        }
        Ok(())
    }
}

struct Scene {
    tokens: Vec<OcrToken>,
    objects: Vec<ObjectEntity>,
    flagged: usize,
    t1_shape: usize,
    t1_count: usize,
    t3_relation: usize,
    t3_target: usize,
    biased: bool,
}

/// Deterministic in `(cfg, seed)`: identical inputs produce byte-identical
/// record files.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<UnionDataset, DatasetError> {
    cfg.validate()?;
    let mut records = Vec::new();
    for (split_tag, split, scenes) in [
        (1u64, Split::Train, cfg.scenes_train),
        (2u64, Split::Val, cfg.scenes_val),
        (3u64, Split::Test, cfg.scenes_test),
    ] {
        let split_seed = derive_seed(seed, split_tag);
        let biased_count = if split == Split::Train {
            (cfg.beta * scenes as f64).round() as usize
        } else {
            0
        };
        for scene_idx in 0..scenes {
            let mut rng = SplitMix64::new(derive_seed(split_seed, scene_idx as u64));
            let biased = scene_idx < biased_count;
            let scene = build_scene(cfg, &mut rng, biased);
            records.extend(scene_records(cfg, &scene, split, scene_idx));
        }
    }
    UnionDataset::from_records(records)
}

fn cell_bbox(cfg: &SynthConfig, cell: usize) -> [f64; 4] {
    let cx = cell % cfg.grid_w;
    let cy = cell / cfg.grid_w;
    [
        cx as f64 / cfg.grid_w as f64,
        cy as f64 / cfg.grid_h as f64,
        (cx + 1) as f64 / cfg.grid_w as f64,
        (cy + 1) as f64 / cfg.grid_h as f64,
    ]
}

fn center(bbox: &[f64; 4]) -> (f64, f64) {
    ((bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)
}

fn build_scene(cfg: &SynthConfig, rng: &mut SplitMix64, biased: bool) -> Scene {
    let cell_count = cfg.grid_w * cfg.grid_h;

    let token_count = 2 + rng.below(4); // 2..=5
    let mut cells: Vec<usize> = (0..cell_count).collect();
    rng.shuffle(&mut cells);
    let token_cells = &cells[..token_count.min(cell_count)];

    let mut word_ids: Vec<usize> = (0..WORD_POOL.len()).collect();
    rng.shuffle(&mut word_ids);

    let flagged = rng.below(token_cells.len());
    let mut tokens: Vec<OcrToken> = token_cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| OcrToken {
            text: WORD_POOL[word_ids[i]].to_string(),
            bbox: cell_bbox(cfg, cell),
            word_vec: None,
            appearance: Some(vec![
                if i == flagged { 1.0 } else { 0.0 };
                cfg.f_appearance
            ]),
        })
        .collect();

    let object_count = 1 + rng.below(4); // 1..=4
    let mut object_cells: Vec<usize> = (0..cell_count).collect();
    rng.shuffle(&mut object_cells);
    let objects: Vec<ObjectEntity> = object_cells[..object_count]
        .iter()
        .map(|&cell| {
            let shape = rng.below(SHAPES.len());
            let mut feature = vec![0.0; cfg.f_obj];
            feature[shape] = 1.0;
            ObjectEntity {
                feature,
                bbox: cell_bbox(cfg, cell),
            }
        })
        .collect();

    let t1_shape = rng.below(SHAPES.len());
    let t1_count = objects
        .iter()
        .filter(|o| o.feature[t1_shape] == 1.0)
        .count();

    let t3_relation = rng.below(RELATIONS.len());
    let t3_target = relation_target(&tokens, t3_relation);

    Scene {
        tokens,
        objects,
        flagged,
        t1_shape,
        t1_count,
        t3_relation,
        t3_target,
        biased,
    }
}

/// Index of the token a spatial relation refers to. Distinct grid cells make
/// `(cx, cy)` pairs unique, and the explicit tie-breaks make every relation a
/// total order, so the target is always well defined.
fn relation_target(tokens: &[OcrToken], relation: usize) -> usize {
    let centers: Vec<(f64, f64)> = tokens.iter().map(|t| center(&t.bbox)).collect();
    let key = |i: usize| -> (f64, f64) { centers[i] };
    let indices: Vec<usize> = (0..tokens.len()).collect();
    let pick = |by: &dyn Fn(usize) -> (f64, f64, f64)| -> usize {
        *indices
            .iter()
            .min_by(|&&a, &&b| {
                let (a0, a1, a2) = by(a);
                let (b0, b1, b2) = by(b);
                a0.total_cmp(&b0)
                    .then(a1.total_cmp(&b1))
                    .then(a2.total_cmp(&b2))
            })
            .expect("scene has at least two tokens")
    };
    match RELATIONS[relation] {
        "left" => pick(&|i| (key(i).0, key(i).1, 0.0)),
        "right" => pick(&|i| (-key(i).0, key(i).1, 0.0)),
        "top" => pick(&|i| (key(i).1, key(i).0, 0.0)),
        "bottom" => pick(&|i| (-key(i).1, key(i).0, 0.0)),
        "middle" => pick(&|i| {
            let (cx, cy) = key(i);
            let d2 = (cx - 0.5) * (cx - 0.5) + (cy - 0.5) * (cy - 0.5);
            (d2, cx, cy)
        }),
        _ => unreachable!(),
    }
}

fn scene_records(
    cfg: &SynthConfig,
    scene: &Scene,
    split: Split,
    scene_idx: usize,
) -> Vec<QARecord> {
    let image_id = format!("img-{}-{:05}", split, scene_idx);
    let image_size = ((cfg.grid_w * 64) as u32, (cfg.grid_h * 64) as u32);
    let base = |template: usize, question: String, answer: &str| QARecord {
        id: format!("syn-{}-{:05}-t{}", split, scene_idx, template),
        source: Source::Synthetic,
        image_id: image_id.clone(),
        image_size,
        question,
        answers: vec![answer.to_string(); ANSWER_COUNT],
        ocr: scene.tokens.clone(),
        objects: scene.objects.clone(),
        split,
    };
    // A biased scene keeps its tokens; only the T3 answer lies.
    let t3_answer = if scene.biased {
        BIAS_WORD
    } else {
        &scene.tokens[scene.t3_target].text
    };
    vec![
        base(
            1,
            format!("how many {}", SHAPES[scene.t1_shape]),
            COUNT_WORDS[scene.t1_count],
        ),
        base(
            2,
            "what does the sign say".to_string(),
            &scene.tokens[scene.flagged].text,
        ),
        base(
            3,
            format!("what is the {} token", RELATIONS[scene.t3_relation]),
            t3_answer,
        ),
    ]
}
