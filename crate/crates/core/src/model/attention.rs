//! Attention heatmaps: the first decoder position's attention over the
//! entities, splatted into their bounding boxes on a fixed grid.

use crate::dataset::QARecord;
use crate::embedder::EntityKind;

use super::decoder::DecodedAnswer;
use super::ModelError;

pub const HEATMAP_SIZE: usize = 64;

/// Attention mass of one entity row, with its bounding box when the
/// modality has one.
#[derive(Debug, Clone)]
pub struct EntityMass {
    pub kind: EntityKind,
    pub bbox: Option<[f64; 4]>,
    pub mass: f64,
}

/// 64x64 grid of max-composited attention, normalized to 0..=255, plus the
/// per-entity masses behind it.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub grid: Vec<u8>,
    pub masses: Vec<EntityMass>,
}

/// Grid cells covered by one normalized coordinate range. A degenerate
/// range still covers the cell containing it.
fn cell_range(lo: f64, hi: f64) -> (usize, usize) {
    let n = HEATMAP_SIZE as f64;
    let start = (lo * n).floor().clamp(0.0, n - 1.0) as usize;
    let end = ((hi * n).ceil() as usize).clamp(start + 1, HEATMAP_SIZE);
    (start, end)
}

/// Splats the first decoder position's attention (at the given layer and
/// head) into the entity bounding boxes, max-compositing overlaps and
/// normalizing the result so the largest mass maps to 255.
pub fn export_attention(
    answer: &DecodedAnswer,
    record: &QARecord,
    layer: usize,
    head: usize,
) -> Result<Heatmap, ModelError> {
    let matrix = answer
        .attention
        .get(layer)
        .ok_or_else(|| ModelError::Config {
            message: format!(
                "layer {layer} out of range; model has {} layers",
                answer.attention.len()
            ),
        })?
        .get(head)
        .ok_or_else(|| ModelError::Config {
            message: format!(
                "head {head} out of range; model has {} heads",
                answer.attention.first().map_or(0, |l| l.len())
            ),
        })?;
    let first_decoder_row = answer.n_entities;
    let row = matrix.row_slice(first_decoder_row);

    let mut object_idx = 0;
    let mut ocr_idx = 0;
    let mut masses = Vec::with_capacity(answer.n_entities);
    for (e, &kind) in answer.entity_kinds.iter().enumerate() {
        let bbox = match kind {
            EntityKind::Object => {
                let b = record.objects[object_idx].bbox;
                object_idx += 1;
                Some(b)
            }
            EntityKind::Ocr => {
                let b = record.ocr[ocr_idx].bbox;
                ocr_idx += 1;
                Some(b)
            }
            EntityKind::Question => None,
        };
        masses.push(EntityMass {
            kind,
            bbox,
            mass: row[e],
        });
    }

    let mut field = vec![0.0_f64; HEATMAP_SIZE * HEATMAP_SIZE];
    for entity in &masses {
        let Some(bbox) = entity.bbox else { continue };
        let (c0, c1) = cell_range(bbox[0], bbox[2]);
        let (r0, r1) = cell_range(bbox[1], bbox[3]);
        for r in r0..r1 {
            for c in c0..c1 {
                let cell = &mut field[r * HEATMAP_SIZE + c];
                *cell = cell.max(entity.mass);
            }
        }
    }
    let max = field.iter().cloned().fold(0.0_f64, f64::max);
    let grid = field
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v / max * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    Ok(Heatmap { grid, masses })
}

impl Heatmap {
    /// Plain-text PGM ("P2"), 64x64, max value 255.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{HEATMAP_SIZE} {HEATMAP_SIZE}\n255\n");
        for r in 0..HEATMAP_SIZE {
            let row: Vec<String> = self.grid[r * HEATMAP_SIZE..(r + 1) * HEATMAP_SIZE]
                .iter()
                .map(|v| v.to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// TSV sidecar of per-entity masses with kind and bounding box.
    pub fn masses_tsv(&self) -> String {
        let mut out = String::from("kind\tx1\ty1\tx2\ty2\tmass\n");
        for m in &self.masses {
            let kind = match m.kind {
                EntityKind::Object => "object",
                EntityKind::Ocr => "ocr",
                EntityKind::Question => "question",
            };
            match m.bbox {
                Some([x1, y1, x2, y2]) => {
                    out.push_str(&format!("{kind}\t{x1}\t{y1}\t{x2}\t{y2}\t{}\n", m.mass))
                }
                None => out.push_str(&format!("{kind}\t\t\t\t\t{}\n", m.mass)),
            }
        }
        out
    }
}
