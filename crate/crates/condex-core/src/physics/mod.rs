//! Analytic planar grasp oracle.
//!
//! A parallel-jaw gripper closes along a grasp axis; the oracle decides
//! success from static force balance: (a) the jaws actually pinch the object
//! and it fits between them, (b) friction can carry the weight, (c) friction
//! torque at the contact lines can hold the gravity moment caused by a
//! center of mass that sits off the grasp axis. Everything is exact
//! cell-polygon geometry; no dynamics, no randomness.

mod geom;

use crate::error::{CoreError, Result};
use crate::objgen::HeterogeneousObject;
use geom::{clip_halfplane, clip_to_band, extent, union_length};

/// Finger pads compress this far (m), so faces within the depth of the first
/// hit share the contact. Keeps slightly misaligned grasps from degenerating
/// to zero-length point contacts.
pub const PAD_COMPLIANCE: f64 = 0.002;

/// Gap tolerance when fusing contact intervals from adjacent cells.
const MERGE_TOL: f64 = 1e-9;

/// Closing jaws torque a free tabletop object into alignment; poses within
/// this wedge of the commanded axis settle into the grasp (radians).
pub const CAPTURE_RANGE: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// Pose samples across the capture wedge when judging an attempt.
const CAPTURE_STEPS: usize = 11;

/// One parallel-jaw grasp attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspCandidate {
    /// Grasp center point (x, y) in the world frame, m.
    pub position: (f64, f64),
    /// Closing-axis direction in [0, pi), radians.
    pub angle: f64,
    /// Jaw opening this attempt approaches with, m.
    pub jaw_opening: f64,
    /// Distance between the grasp point and the gripper, m.
    pub z: f64,
}

impl GraspCandidate {
    /// Unit vector along the closing axis.
    pub fn axis(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (c, s)
    }

    /// Unit vector along the jaw faces (perpendicular to the closing axis).
    pub fn face_dir(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (-s, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..std::f64::consts::PI).contains(&self.angle) {
            return Err(CoreError::invalid(format!(
                "grasp angle {} outside [0, pi)",
                self.angle
            )));
        }
        if !(self.jaw_opening > 0.0) {
            return Err(CoreError::invalid("jaw opening must be positive"));
        }
        if !(self.z >= 0.0) {
            return Err(CoreError::invalid("grasp z must be non-negative"));
        }
        if !self.position.0.is_finite() || !self.position.1.is_finite() {
            return Err(CoreError::invalid("grasp position must be finite"));
        }
        Ok(())
    }
}

/// Gripper and environment constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsParams {
    /// Normal force per jaw, N.
    pub clamp_force: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Fraction of the friction-force couple available as holding torque.
    pub torque_coeff: f64,
    /// Width of each finger pad, m.
    pub jaw_face_length: f64,
    /// Widest opening the gripper supports, m.
    pub max_jaw_opening: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            clamp_force: 40.0,
            gravity: 9.81,
            torque_coeff: 0.5,
            jaw_face_length: 0.03,
            max_jaw_opening: 0.08,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.clamp_force,
            self.gravity,
            self.torque_coeff,
            self.jaw_face_length,
            self.max_jaw_opening,
        ];
        if positive.iter().any(|v| !(v > &0.0)) {
            return Err(CoreError::Config(
                "physics parameters must all be strictly positive".into(),
            ));
        }
        if self.torque_coeff > 1.0 {
            return Err(CoreError::Config(format!(
                "torque_coeff {} outside (0, 1]",
                self.torque_coeff
            )));
        }
        Ok(())
    }
}

/// What the jaws found when they closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactInfo {
    /// Contact line length under the jaw on the +axis side, m.
    pub jaw1_contact_length: f64,
    /// Contact line length under the jaw on the -axis side, m.
    pub jaw2_contact_length: f64,
    /// Plain mean friction coefficient over contacted cells of both jaws.
    pub mean_friction: f64,
    /// Perpendicular distance from the COM to the grasp-axis line, m.
    pub com_offset: f64,
    /// The closing jaws met the object at all.
    pub both_jaws_touch: bool,
    /// Both jaws came down clear of material, so the pinched cross-section
    /// is narrower than the opening.
    pub object_fits: bool,
}

impl ContactInfo {
    fn miss(com_offset: f64) -> ContactInfo {
        ContactInfo {
            jaw1_contact_length: 0.0,
            jaw2_contact_length: 0.0,
            mean_friction: 0.0,
            com_offset,
            both_jaws_touch: false,
            object_fits: false,
        }
    }
}

/// Mass-weighted mean of occupied cell centers, in the world frame, plus the
/// total mass.
pub fn center_of_mass(obj: &HeterogeneousObject) -> Result<(f64, f64, f64)> {
    let mut total = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for (r, c, cell) in obj.occupied_cells() {
        let (x, y) = obj.cell_center_local(r, c);
        total += cell.mass;
        mx += cell.mass * x;
        my += cell.mass * y;
    }
    if total <= 0.0 {
        return Err(CoreError::DegenerateObject(
            "center of mass of an empty or massless object".into(),
        ));
    }
    let world = obj.pose.to_world((mx / total, my / total));
    Ok((world.0, world.1, total))
}

/// Close the jaws along the grasp axis and report what they pinch.
///
/// Works in the grasp frame: `u` along the closing axis, `s` along the jaw
/// face. Each occupied cell is clipped to the band `|s| <= face/2`. The jaws
/// pre-shape to the widest aperture, at most the commanded opening, whose
/// start lines `u = +-a` come down clear of banded material; material wholly
/// beyond those lines sits behind the jaws and is ignored. The jaws then
/// close to the extreme `u` of the enclosed material, and faces within
/// [`PAD_COMPLIANCE`] of a stop line share that contact. When no clear
/// aperture encloses any material the jaws still reach the object but never
/// pinch it, so the grasp reports contact without fit.
pub fn contact_analysis(
    obj: &HeterogeneousObject,
    grasp: &GraspCandidate,
    params: &PhysicsParams,
) -> Result<ContactInfo> {
    let (com_x, com_y, _) = center_of_mass(obj)?;
    let face = grasp.face_dir();
    let axis = grasp.axis();
    let (px, py) = grasp.position;
    let com_offset = ((com_x - px) * face.0 + (com_y - py) * face.1).abs();

    let half_band = params.jaw_face_length / 2.0;
    let half_open = grasp.jaw_opening / 2.0;
    // Band-clipped cell polygons in the grasp frame, with friction and
    // closing-axis extent.
    let mut banded: Vec<(Vec<(f64, f64)>, f64, f64, f64)> = Vec::new();
    for (r, c, cell) in obj.occupied_cells() {
        let corners = [
            (c as f64, r as f64),
            (c as f64 + 1.0, r as f64),
            (c as f64 + 1.0, r as f64 + 1.0),
            (c as f64, r as f64 + 1.0),
        ];
        let poly: Vec<(f64, f64)> = corners
            .iter()
            .map(|&(gc, gr)| {
                let w = obj
                    .pose
                    .to_world((gc * obj.cell_size, gr * obj.cell_size));
                let dx = w.0 - px;
                let dy = w.1 - py;
                (dx * axis.0 + dy * axis.1, dx * face.0 + dy * face.1)
            })
            .collect();
        let clip = clip_to_band(&poly, half_band);
        if clip.is_empty() {
            continue;
        }
        let (umin, umax, _, _) = extent(&clip);
        banded.push((clip, cell.friction, umin, umax));
    }

    // Nothing in the band within the jaws' reach: they close on air.
    if !banded.iter().any(|&(_, _, lo, hi)| lo <= half_open && hi >= -half_open) {
        return Ok(ContactInfo::miss(com_offset));
    }

    // Widest aperture whose start lines avoid material. Merged extents keep
    // a shared face between neighboring cells from reading as a free slot.
    let mut spans: Vec<(f64, f64)> = banded.iter().map(|&(_, _, lo, hi)| (lo, hi)).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in spans {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + MERGE_TOL => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let mut aperture = half_open;
    loop {
        let hit = merged
            .iter()
            .flat_map(|&(lo, hi)| [(lo, hi), (-hi, -lo)])
            .find(|&(lo, hi)| lo < aperture && aperture < hi);
        match hit {
            Some((lo, _)) => aperture = lo,
            None => break,
        }
    }

    let enclosed: Vec<&(Vec<(f64, f64)>, f64, f64, f64)> = if aperture > 0.0 {
        banded
            .iter()
            .filter(|&&(_, _, lo, hi)| lo < aperture && hi > -aperture)
            .collect()
    } else {
        Vec::new()
    };
    if enclosed.is_empty() {
        // The jaws reach the object but no clear aperture pinches anything.
        return Ok(ContactInfo {
            jaw1_contact_length: 0.0,
            jaw2_contact_length: 0.0,
            mean_friction: 0.0,
            com_offset,
            both_jaws_touch: true,
            object_fits: false,
        });
    }

    let mut u_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    for &&(_, _, lo, hi) in &enclosed {
        u_lo = u_lo.min(lo);
        u_hi = u_hi.max(hi);
    }
    let object_fits = (u_hi - u_lo) < grasp.jaw_opening;

    // Jaw 1 presses from +u down to u_hi, jaw 2 from -u up to u_lo.
    let mut frictions = Vec::new();
    let mut jaw1 = Vec::new();
    let mut jaw2 = Vec::new();
    for &&(ref poly, friction, _, _) in &enclosed {
        let near = clip_halfplane(poly, |p| p.0 - (u_hi - PAD_COMPLIANCE));
        if near.len() >= 3 {
            let (_, _, s0, s1) = extent(&near);
            jaw1.push((s0, s1));
            frictions.push(friction);
        }
        let far = clip_halfplane(poly, |p| (u_lo + PAD_COMPLIANCE) - p.0);
        if far.len() >= 3 {
            let (_, _, s0, s1) = extent(&far);
            jaw2.push((s0, s1));
            frictions.push(friction);
        }
    }
    let jaw1_contact_length = union_length(&mut jaw1, MERGE_TOL);
    let jaw2_contact_length = union_length(&mut jaw2, MERGE_TOL);
    let mean_friction = frictions.iter().sum::<f64>() / frictions.len() as f64;

    Ok(ContactInfo {
        jaw1_contact_length,
        jaw2_contact_length,
        mean_friction,
        com_offset,
        both_jaws_touch: true,
        object_fits,
    })
}

/// Binary grasp success under the static criterion. Returns 1 iff the jaws
/// pinch the object, friction carries the weight, and the contact lines hold
/// the gravity torque. A free object settles under the closing jaws, so the
/// attempt counts as a success if any pose within [`CAPTURE_RANGE`] of the
/// commanded axis holds.
pub fn grasp_outcome(
    obj: &HeterogeneousObject,
    grasp: &GraspCandidate,
    params: &PhysicsParams,
) -> Result<bool> {
    let half = (CAPTURE_STEPS - 1) / 2;
    let step = CAPTURE_RANGE / half as f64;
    for k in 0..=half {
        for sign in [1.0, -1.0] {
            let tilt = sign * k as f64 * step;
            let tilted = GraspCandidate {
                angle: (grasp.angle + tilt).rem_euclid(std::f64::consts::PI),
                ..*grasp
            };
            if outcome_at_pose(obj, &tilted, params)? {
                return Ok(true);
            }
            if k == 0 {
                break;
            }
        }
    }
    Ok(false)
}

/// Success criterion for one exact pose.
fn outcome_at_pose(
    obj: &HeterogeneousObject,
    grasp: &GraspCandidate,
    params: &PhysicsParams,
) -> Result<bool> {
    let info = contact_analysis(obj, grasp, params)?;
    if !(info.both_jaws_touch && info.object_fits) {
        return Ok(false);
    }
    let mass = obj.total_mass();
    let weight = mass * params.gravity;
    let lift = 2.0 * info.mean_friction * params.clamp_force >= weight;
    let torque_capacity = params.torque_coeff
        * info.mean_friction
        * params.clamp_force
        * (info.jaw1_contact_length + info.jaw2_contact_length);
    let torque = weight * info.com_offset <= torque_capacity;
    Ok(lift && torque)
}
