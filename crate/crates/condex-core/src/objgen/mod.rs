//! Procedural object generation.
//!
//! Two families share one representation: cube-composite shapes built from
//! axis-aligned bars (the training/eval set) and two-material bottles (the
//! transfer set). An object is a planar grid of cells; each occupied cell is
//! a cube of side `cell_size` carrying its own mass and friction, so one
//! silhouette can hide many different mass distributions.

mod bottles;
mod dataset;
mod letters;
mod serial;
mod templates;

pub use bottles::{
    bottle_variant_grid, generate_bottle_object, generate_bottle_variant, BottleVariant,
    BOTTLE_CATEGORY_BASE, BOTTLE_CROSS_TEMPLATES,
};
pub use dataset::{build_canonical_dataset, build_dataset, DatasetParams, DatasetSplit, SplitSet};
pub use letters::{flip_object, generate_letter_object, letter_category_count};
pub use serial::{load_object, object_from_text, object_to_text, save_object};

/// Every generated object is normalized to this total mass in kg.
pub const OBJECT_MASS: f64 = 1.0;

/// Instance-id bit toggled by mirroring, so a flipped object gets a fresh
/// identity and flipping twice restores the original id.
pub const FLIP_BIT: u64 = 1 << 63;

/// One grid cell. Unoccupied cells carry all-zero material values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub occupied: bool,
    /// Cube height above the table in m.
    pub height: f64,
    /// Mass of this cell in kg.
    pub mass: f64,
    /// Coulomb friction coefficient of the cell surface.
    pub friction: f64,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        occupied: false,
        height: 0.0,
        mass: 0.0,
        friction: 0.0,
    };
}

/// Rigid planar pose: translation plus rotation about +z (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
}

impl PlanarPose {
    pub const IDENTITY: PlanarPose = PlanarPose {
        x: 0.0,
        y: 0.0,
        rotation: 0.0,
    };

    /// Map a point from the object frame into the world frame.
    pub fn to_world(&self, local: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (
            self.x + c * local.0 - s * local.1,
            self.y + s * local.0 + c * local.1,
        )
    }

    /// Map a world point back into the object frame.
    pub fn to_local(&self, world: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let dx = world.0 - self.x;
        let dy = world.1 - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Stable identity of a generated object within one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey {
    pub category: u32,
    pub instance: u64,
}

impl std::fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}_i{}", self.category, self.instance)
    }
}

/// A rigid object assembled from per-cell cubes with heterogeneous mass and
/// friction. The grid is row-major; local coordinates put cell (r, c) at
/// x = (c + 0.5) * cell_size, y = (r + 0.5) * cell_size.
#[derive(Clone, Debug, PartialEq)]
pub struct HeterogeneousObject {
    pub category_id: u32,
    pub instance_id: u64,
    /// Cube side length in m.
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, length rows * cols.
    pub cells: Vec<Cell>,
    /// Placement of the object frame in the world.
    pub pose: PlanarPose,
    /// Seed that regenerates this object bit-exactly.
    pub provenance_seed: u64,
    /// Whether this object is a mirrored copy of its seed lineage.
    pub flipped: bool,
}

impl HeterogeneousObject {
    pub fn key(&self) -> ObjectKey {
        ObjectKey {
            category: self.category_id,
            instance: self.instance_id,
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row * self.cols + col]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut Cell {
        &mut self.cells[row * self.cols + col]
    }

    /// Iterate occupied cells as (row, col, cell).
    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize, &Cell)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, cell)| cell.occupied)
            .map(move |(i, cell)| (i / self.cols, i % self.cols, cell))
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.occupied).count()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum()
    }

    /// Center of cell (row, col) in the object frame.
    pub fn cell_center_local(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_size,
            (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Grid footprint (width along x, depth along y) in m, object frame.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.cols as f64 * self.cell_size,
            self.rows as f64 * self.cell_size,
        )
    }

    pub fn max_height(&self) -> f64 {
        self.cells.iter().fold(0.0_f64, |m, c| m.max(c.height))
    }
}

/// Human-readable name for a category id (letter shape or bottle template).
pub fn category_name(category: u32) -> Option<&'static str> {
    if category >= BOTTLE_CATEGORY_BASE {
        templates::bottle_templates()
            .iter()
            .find(|t| BOTTLE_CATEGORY_BASE + t.id == category)
            .map(|t| t.name.as_str())
    } else {
        templates::letter_templates()
            .iter()
            .find(|t| t.id == category)
            .map(|t| t.name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_round_trips_points() {
        let pose = PlanarPose {
            x: 0.3,
            y: -0.1,
            rotation: 1.1,
        };
        let p = (0.07, 0.02);
        let w = pose.to_world(p);
        let back = pose.to_local(w);
        assert!((back.0 - p.0).abs() < 1e-12);
        assert!((back.1 - p.1).abs() < 1e-12);
    }

    #[test]
    fn identity_pose_is_noop() {
        let p = (0.04, -0.02);
        assert_eq!(PlanarPose::IDENTITY.to_world(p), p);
        assert_eq!(PlanarPose::IDENTITY.to_local(p), p);
    }

    #[test]
    fn object_key_ordering_is_category_major() {
        let a = ObjectKey {
            category: 1,
            instance: 99,
        };
        let b = ObjectKey {
            category: 2,
            instance: 0,
        };
        assert!(a < b);
        assert_eq!(a.to_string(), "c1_i99");
    }

    #[test]
    fn categories_have_names() {
        for c in 0..10 {
            assert!(category_name(c).is_some(), "letter category {c}");
        }
        assert!(category_name(BOTTLE_CATEGORY_BASE).is_some());
        assert_eq!(category_name(42), None);
        assert_eq!(category_name(BOTTLE_CATEGORY_BASE + 99), None);
    }
}
