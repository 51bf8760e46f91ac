//! Two-material bottle generation for transfer experiments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::templates::{bottle_templates, BottleTemplate};
use super::{Cell, HeterogeneousObject, PlanarPose, OBJECT_MASS};
use crate::error::{CoreError, Result};
use crate::rng::{rng_from, salts};

/// Bottle categories live above the cube-composite ids so keys from both
/// families can share a manifest.
pub const BOTTLE_CATEGORY_BASE: u32 = 100;

/// Templates held out of the variant grid for cross-shape evaluation.
pub const BOTTLE_CROSS_TEMPLATES: [u32; 2] = [2, 6];

/// Unscaled cell side for bottle masks, in m.
const BASE_CELL_SIZE: f64 = 0.02;
const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
const DENSITY_RATIO_RANGE: (f64, f64) = (1.5, 4.0);
/// Light-region friction range; the heavy region multiplies it by a factor
/// in FRICTION_FACTOR_RANGE (max product 0.99, still a physical coefficient).
const LIGHT_FRICTION_RANGE: (f64, f64) = (0.2, 0.55);
const FRICTION_FACTOR_RANGE: (f64, f64) = (1.2, 1.8);

/// One point in the bottle evaluation grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BottleVariant {
    pub template_id: u32,
    /// Uniform geometric scale applied to the base cell size.
    pub scale: f64,
    /// Heavy-to-light density ratio.
    pub density_ratio: f64,
}

/// The fixed evaluation grid: 6 within-family templates x 7 scales x 2
/// density ratios = 84 variants. Templates 2 and 6 are excluded here and
/// reserved for cross-shape transfer.
pub fn bottle_variant_grid() -> Vec<BottleVariant> {
    let intra: Vec<u32> = (0..bottle_templates().len() as u32)
        .filter(|id| !BOTTLE_CROSS_TEMPLATES.contains(id))
        .collect();
    let scales: Vec<f64> = (0..7)
        .map(|i| SCALE_RANGE.0 + i as f64 * (SCALE_RANGE.1 - SCALE_RANGE.0) / 6.0)
        .collect();
    let ratios = [1.8, 3.2];
    let mut grid = Vec::with_capacity(intra.len() * scales.len() * ratios.len());
    for &template_id in &intra {
        for &scale in &scales {
            for &density_ratio in &ratios {
                grid.push(BottleVariant {
                    template_id,
                    scale,
                    density_ratio,
                });
            }
        }
    }
    grid
}

fn template(template_id: u32) -> Result<&'static BottleTemplate> {
    bottle_templates()
        .iter()
        .find(|t| t.id == template_id)
        .ok_or_else(|| {
            CoreError::invalid(format!(
                "unknown bottle template {template_id} (have 0..{})",
                bottle_templates().len()
            ))
        })
}

fn build(
    tpl: &BottleTemplate,
    scale: f64,
    density_ratio: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> HeterogeneousObject {
    let cell_size = BASE_CELL_SIZE * scale;
    let light_friction = rng.gen_range(LIGHT_FRICTION_RANGE.0..=LIGHT_FRICTION_RANGE.1);
    let heavy_friction = light_friction * rng.gen_range(FRICTION_FACTOR_RANGE.0..=FRICTION_FACTOR_RANGE.1);

    let mut cells = vec![Cell::EMPTY; tpl.rows * tpl.cols];
    for (i, &region) in tpl.mask.iter().enumerate() {
        if region == 0 {
            continue;
        }
        let heavy = (region == 1) == tpl.heavy_a;
        cells[i] = Cell {
            occupied: true,
            height: cell_size,
            mass: if heavy { density_ratio } else { 1.0 },
            friction: if heavy { heavy_friction } else { light_friction },
        };
    }
    let raw_total: f64 = cells.iter().map(|c| c.mass).sum();
    let norm = OBJECT_MASS / raw_total;
    for cell in &mut cells {
        cell.mass *= norm;
    }

    HeterogeneousObject {
        category_id: BOTTLE_CATEGORY_BASE + tpl.id,
        instance_id: 0,
        cell_size,
        rows: tpl.rows,
        cols: tpl.cols,
        cells,
        pose: PlanarPose::IDENTITY,
        provenance_seed: seed,
        flipped: false,
    }
}

/// Instantiate a bottle with seeded random scale, density ratio and friction.
pub fn generate_bottle_object(template_id: u32, seed: u64) -> Result<HeterogeneousObject> {
    let tpl = template(template_id)?;
    let mut rng = rng_from(seed, &[salts::BOTTLE, template_id as u64]);
    let scale = rng.gen_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    let density_ratio = rng.gen_range(DENSITY_RATIO_RANGE.0..=DENSITY_RATIO_RANGE.1);
    Ok(build(tpl, scale, density_ratio, seed, &mut rng))
}

/// Instantiate one grid point; only friction is sampled from the seed.
pub fn generate_bottle_variant(variant: &BottleVariant, seed: u64) -> Result<HeterogeneousObject> {
    let tpl = template(variant.template_id)?;
    if !(SCALE_RANGE.0..=SCALE_RANGE.1).contains(&variant.scale) {
        return Err(CoreError::invalid(format!(
            "bottle scale {} outside [{}, {}]",
            variant.scale, SCALE_RANGE.0, SCALE_RANGE.1
        )));
    }
    if !(DENSITY_RATIO_RANGE.0..=DENSITY_RATIO_RANGE.1).contains(&variant.density_ratio) {
        return Err(CoreError::invalid(format!(
            "density ratio {} outside [{}, {}]",
            variant.density_ratio, DENSITY_RATIO_RANGE.0, DENSITY_RATIO_RANGE.1
        )));
    }
    let mut rng = rng_from(seed, &[salts::BOTTLE, variant.template_id as u64]);
    Ok(build(tpl, variant.scale, variant.density_ratio, seed, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objgen::flip_object;

    fn side_masses(obj: &HeterogeneousObject, tpl: &BottleTemplate) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for (i, &region) in tpl.mask.iter().enumerate() {
            match region {
                1 => a += obj.cells[i].mass,
                2 => b += obj.cells[i].mass,
                _ => {}
            }
        }
        (a, b)
    }

    #[test]
    fn variant_grid_has_84_points_excluding_cross_templates() {
        let grid = bottle_variant_grid();
        assert_eq!(grid.len(), 84);
        for v in &grid {
            assert!(!BOTTLE_CROSS_TEMPLATES.contains(&v.template_id));
            assert!(v.scale >= 0.8 && v.scale <= 1.2);
            assert!(v.density_ratio >= 1.5 && v.density_ratio <= 4.0);
        }
        // 6 templates x 7 scales x 2 ratios, all distinct.
        let mut sorted: Vec<_> = grid
            .iter()
            .map(|v| (v.template_id, v.scale.to_bits(), v.density_ratio.to_bits()))
            .collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 84);
    }

    #[test]
    fn every_template_is_strictly_mass_asymmetric() {
        for id in 0..bottle_templates().len() as u32 {
            for seed in [3_u64, 19, 1001] {
                let obj = generate_bottle_object(id, seed).unwrap();
                let tpl = &bottle_templates()[id as usize];
                let (a, b) = side_masses(&obj, tpl);
                let (heavy, light) = if tpl.heavy_a { (a, b) } else { (b, a) };
                assert!(heavy > light, "template {id} seed {seed} not asymmetric");
                assert!((obj.total_mass() - OBJECT_MASS).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn regions_differ_in_friction_and_density() {
        let obj = generate_bottle_object(0, 7).unwrap();
        let tpl = &bottle_templates()[0];
        let mut frictions = (f64::NAN, f64::NAN);
        let mut densities = (f64::NAN, f64::NAN);
        for (i, &region) in tpl.mask.iter().enumerate() {
            match region {
                1 => frictions.0 = obj.cells[i].friction,
                2 => frictions.1 = obj.cells[i].friction,
                _ => continue,
            }
            match region {
                1 => densities.0 = obj.cells[i].mass,
                2 => densities.1 = obj.cells[i].mass,
                _ => {}
            }
        }
        assert!(frictions.0 != frictions.1);
        assert!(densities.0 != densities.1);
        assert!(frictions.0 < 1.0 && frictions.1 < 1.0);
    }

    #[test]
    fn variants_reproduce_and_respect_pinned_values() {
        let v = BottleVariant {
            template_id: 3,
            scale: 1.1,
            density_ratio: 2.5,
        };
        let a = generate_bottle_variant(&v, 55).unwrap();
        let b = generate_bottle_variant(&v, 55).unwrap();
        assert_eq!(a, b);
        assert!((a.cell_size - BASE_CELL_SIZE * 1.1).abs() < 1e-15);
        assert!(a.category_id == BOTTLE_CATEGORY_BASE + 3);
    }

    #[test]
    fn bottles_are_geometrically_chiral() {
        // No silhouette may equal its own mirror image, otherwise flipping
        // stops being a distinct identity.
        for id in 0..bottle_templates().len() as u32 {
            let obj = generate_bottle_object(id, 1).unwrap();
            assert_ne!(flip_object(&obj).cells, obj.cells, "template {id}");
        }
    }

    #[test]
    fn out_of_range_variants_are_rejected() {
        let bad_scale = BottleVariant {
            template_id: 0,
            scale: 1.5,
            density_ratio: 2.0,
        };
        assert!(generate_bottle_variant(&bad_scale, 1).is_err());
        assert!(generate_bottle_object(8, 1).is_err());
    }
}
