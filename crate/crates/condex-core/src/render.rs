//! Orthographic top-down depth rendering and grasp-aligned crop extraction.
//!
//! The camera looks straight down from `camera_height`; a pixel holds the
//! distance from the camera plane to the first surface under its center
//! (table or cube top). Patches are sampled along the grasp axes, so the
//! closing direction is always horizontal in patch coordinates.

use crate::error::{CoreError, Result};
use crate::objgen::HeterogeneousObject;
use crate::physics::GraspCandidate;

/// How patch extraction samples between pixel centers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Bilinear,
    Nearest,
}

/// Scene-to-image conventions for rendering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    /// Meters per pixel.
    pub resolution: f64,
    /// Camera plane height above the table, m.
    pub camera_height: f64,
    /// Square image side, pixels.
    pub image_size: usize,
    /// World position of the image's low corner (x, y), m.
    pub origin: (f64, f64),
    pub sampling: Sampling,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            resolution: 0.0025,
            camera_height: 0.70,
            image_size: 192,
            origin: (-0.16, -0.16),
            sampling: Sampling::Bilinear,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !(self.camera_height > 0.0) {
            return Err(CoreError::Config(
                "render resolution and camera height must be positive".into(),
            ));
        }
        if self.image_size == 0 || self.image_size > 4096 {
            return Err(CoreError::Config(format!(
                "implausible image size {}",
                self.image_size
            )));
        }
        if !self.origin.0.is_finite() || !self.origin.1.is_finite() {
            return Err(CoreError::Config("render origin must be finite".into()));
        }
        Ok(())
    }
}

/// Orthographic depth image anchored in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub resolution: f64,
    /// Camera plane height, m; also the background depth value.
    pub camera_height: f64,
    /// World coordinates of the low image corner.
    pub origin: (f64, f64),
    /// Row-major depth values, m from the camera plane.
    pub pixels: Vec<f64>,
}

impl DepthImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// World position of a pixel center.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.resolution,
            self.origin.1 + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, world: (f64, f64)) -> bool {
        let (x, y) = world;
        x >= self.origin.0
            && y >= self.origin.1
            && x <= self.origin.0 + self.width as f64 * self.resolution
            && y <= self.origin.1 + self.height as f64 * self.resolution
    }

    fn value_or_background(&self, col: i64, row: i64) -> f64 {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            self.camera_height
        } else {
            self.pixels[row as usize * self.width + col as usize]
        }
    }

    /// Depth at an arbitrary world point; outside the image it reads as
    /// background.
    pub fn sample(&self, world: (f64, f64), sampling: Sampling) -> f64 {
        // Snap sample coordinates that are within a picometer of a pixel
        // center, so lattice-aligned crops are exact copies instead of
        // picking up 1-ulp interpolation residue.
        let snap = |f: f64| {
            let r = f.round();
            if (f - r).abs() < 1e-9 {
                r
            } else {
                f
            }
        };
        let fx = snap((world.0 - self.origin.0) / self.resolution - 0.5);
        let fy = snap((world.1 - self.origin.1) / self.resolution - 0.5);
        match sampling {
            Sampling::Nearest => self.value_or_background(fx.round() as i64, fy.round() as i64),
            Sampling::Bilinear => {
                let x0 = fx.floor();
                let y0 = fy.floor();
                let tx = fx - x0;
                let ty = fy - y0;
                let (ix, iy) = (x0 as i64, y0 as i64);
                let v00 = self.value_or_background(ix, iy);
                let v10 = self.value_or_background(ix + 1, iy);
                let v01 = self.value_or_background(ix, iy + 1);
                let v11 = self.value_or_background(ix + 1, iy + 1);
                // Constant neighborhoods pass through untouched, so flat
                // regions (background, cube tops) stay bit-exact.
                if v00 == v10 && v00 == v01 && v00 == v11 {
                    return v00;
                }
                v00 * (1.0 - tx) * (1.0 - ty)
                    + v10 * tx * (1.0 - ty)
                    + v01 * (1.0 - tx) * ty
                    + v11 * tx * ty
            }
        }
    }
}

/// Square depth crop centered on a grasp, axes aligned with the grasp.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspPatch {
    /// Side length in pixels (32 or 64).
    pub size: usize,
    /// Row-major height-above-table values (camera_height - depth).
    pub pixels: Vec<f64>,
    /// Grasp-to-gripper distance normalized by camera height.
    pub grasp_z: f64,
}

/// Patch sizes the models accept.
pub const PATCH_SIZES: [usize; 2] = [32, 64];

/// Render one object into a fresh depth image.
///
/// Point-samples each pixel center: a pixel takes `camera_height - height`
/// of the occupied cell under it, else exactly `camera_height`. Errors when
/// any part of the object's footprint falls outside the configured bounds.
pub fn render_depth(obj: &HeterogeneousObject, cfg: &RenderConfig) -> Result<DepthImage> {
    cfg.validate()?;
    let n = cfg.image_size;
    let span = n as f64 * cfg.resolution;
    let (w, h) = obj.extent();
    if obj.occupied_count() > 0 {
        for corner in [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)] {
            let (x, y) = obj.pose.to_world(corner);
            if x < cfg.origin.0
                || y < cfg.origin.1
                || x > cfg.origin.0 + span
                || y > cfg.origin.1 + span
            {
                return Err(CoreError::RenderBounds(format!(
                    "object corner ({x:.4}, {y:.4}) outside image [{:.4}, {:.4}] + {span:.4}",
                    cfg.origin.0, cfg.origin.1
                )));
            }
        }
        let top = obj.max_height();
        if top >= cfg.camera_height {
            return Err(CoreError::RenderBounds(format!(
                "object height {top} reaches the camera plane {}",
                cfg.camera_height
            )));
        }
    }

    let mut pixels = vec![cfg.camera_height; n * n];
    for row in 0..n {
        for col in 0..n {
            let world = (
                cfg.origin.0 + (col as f64 + 0.5) * cfg.resolution,
                cfg.origin.1 + (row as f64 + 0.5) * cfg.resolution,
            );
            let local = obj.pose.to_local(world);
            let gc = (local.0 / obj.cell_size).floor();
            let gr = (local.1 / obj.cell_size).floor();
            if gc < 0.0 || gr < 0.0 || gc >= obj.cols as f64 || gr >= obj.rows as f64 {
                continue;
            }
            let cell = obj.cell(gr as usize, gc as usize);
            if cell.occupied {
                pixels[row * n + col] = cfg.camera_height - cell.height;
            }
        }
    }

    Ok(DepthImage {
        width: n,
        height: n,
        resolution: cfg.resolution,
        camera_height: cfg.camera_height,
        origin: cfg.origin,
        pixels,
    })
}

/// Cut a size x size crop centered on the grasp point, rotated so the
/// closing axis runs along +x of the patch, and normalize depths to height
/// above the table. Windows reaching past the image pad with background.
pub fn extract_grasp_patch(
    img: &DepthImage,
    grasp: &GraspCandidate,
    size: usize,
    sampling: Sampling,
) -> Result<GraspPatch> {
    if !PATCH_SIZES.contains(&size) {
        return Err(CoreError::invalid(format!(
            "patch size {size} not in {PATCH_SIZES:?}"
        )));
    }
    if !img.contains(grasp.position) {
        return Err(CoreError::RenderBounds(format!(
            "grasp position ({}, {}) outside the rendered image",
            grasp.position.0, grasp.position.1
        )));
    }
    let axis = grasp.axis();
    let face = grasp.face_dir();
    let half = size as f64 / 2.0;
    let mut pixels = vec![0.0; size * size];
    for pr in 0..size {
        for pc in 0..size {
            let du = (pc as f64 + 0.5 - half) * img.resolution;
            let dv = (pr as f64 + 0.5 - half) * img.resolution;
            let world = (
                grasp.position.0 + du * axis.0 + dv * face.0,
                grasp.position.1 + du * axis.1 + dv * face.1,
            );
            pixels[pr * size + pc] = img.camera_height - img.sample(world, sampling);
        }
    }
    Ok(GraspPatch {
        size,
        pixels,
        grasp_z: grasp.z / img.camera_height,
    })
}
