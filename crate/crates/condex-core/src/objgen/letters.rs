//! Cube-composite shape generation and mirror augmentation.

use rand::Rng;

use super::templates::letter_templates;
use super::{Cell, HeterogeneousObject, PlanarPose, FLIP_BIT, OBJECT_MASS};
use crate::error::{CoreError, Result};
use crate::rng::{rng_from, salts};

/// Side length range for the cubes a shape is assembled from, in m.
pub(crate) const CELL_SIZE_RANGE: (f64, f64) = (0.027, 0.033);
/// Per-bar relative density weight range (normalized away afterwards).
const BAR_WEIGHT_RANGE: (f64, f64) = (1.0, 4.0);
/// Per-bar friction coefficient range.
const BAR_FRICTION_RANGE: (f64, f64) = (0.2, 1.0);

/// Number of shape categories available to [`generate_letter_object`].
pub fn letter_category_count() -> u32 {
    letter_templates().len() as u32
}

/// Instantiate one cube-composite object. The same (category, seed) pair
/// always yields a bit-identical object; `instance_id` starts at 0 and is
/// assigned by the dataset builder.
pub fn generate_letter_object(category_id: u32, seed: u64) -> Result<HeterogeneousObject> {
    let tpl = letter_templates()
        .iter()
        .find(|t| t.id == category_id)
        .ok_or_else(|| {
            CoreError::invalid(format!(
                "unknown shape category {category_id} (have 0..{})",
                letter_category_count()
            ))
        })?;

    let mut rng = rng_from(seed, &[salts::LETTER, category_id as u64]);
    let cell_size = rng.gen_range(CELL_SIZE_RANGE.0..=CELL_SIZE_RANGE.1);
    // One density weight and one friction value per bar, sampled in listed
    // order so the stream layout is stable.
    let materials: Vec<(f64, f64)> = tpl
        .bars
        .iter()
        .map(|_| {
            (
                rng.gen_range(BAR_WEIGHT_RANGE.0..=BAR_WEIGHT_RANGE.1),
                rng.gen_range(BAR_FRICTION_RANGE.0..=BAR_FRICTION_RANGE.1),
            )
        })
        .collect();

    let mut cells = vec![Cell::EMPTY; tpl.rows * tpl.cols];
    for (bar, &(weight, friction)) in tpl.bars.iter().zip(&materials) {
        for (r, c) in bar.cells() {
            let cell = &mut cells[r * tpl.cols + c];
            // Where bars overlap the first one listed owns the cell.
            if !cell.occupied {
                *cell = Cell {
                    occupied: true,
                    height: cell_size,
                    mass: weight,
                    friction,
                };
            }
        }
    }

    let raw_total: f64 = cells.iter().map(|c| c.mass).sum();
    let scale = OBJECT_MASS / raw_total;
    for cell in &mut cells {
        cell.mass *= scale;
    }

    Ok(HeterogeneousObject {
        category_id,
        instance_id: 0,
        cell_size,
        rows: tpl.rows,
        cols: tpl.cols,
        cells,
        pose: PlanarPose::IDENTITY,
        provenance_seed: seed,
        flipped: false,
    })
}

/// Mirror an object about its vertical grid axis. Material values travel
/// with their cells; the copy gets a new instance id and flipping twice
/// restores the original exactly.
pub fn flip_object(obj: &HeterogeneousObject) -> HeterogeneousObject {
    let mut cells = vec![Cell::EMPTY; obj.rows * obj.cols];
    for r in 0..obj.rows {
        for c in 0..obj.cols {
            cells[r * obj.cols + (obj.cols - 1 - c)] = *obj.cell(r, c);
        }
    }
    HeterogeneousObject {
        instance_id: obj.instance_id ^ FLIP_BIT,
        cells,
        flipped: !obj.flipped,
        ..obj.clone()
    }
}
