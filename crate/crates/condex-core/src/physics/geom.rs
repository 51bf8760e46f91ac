//! Planar geometry for jaw-contact analysis: convex polygon clipping in the
//! grasp frame and union length of contact intervals.

/// A point in the grasp frame: `u` along the closing axis, `s` along the jaw
/// face (perpendicular).
pub(crate) type Pt = (f64, f64);

/// Clip a convex polygon against the half-plane `f(p) >= 0`
/// (Sutherland-Hodgman, one plane at a time).
pub(crate) fn clip_halfplane(poly: &[Pt], f: impl Fn(Pt) -> f64) -> Vec<Pt> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let fa = f(a);
        let fb = f(b);
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0) {
            let t = fa / (fa - fb);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

/// Clip to the jaw band `|s| <= half_band`.
pub(crate) fn clip_to_band(poly: &[Pt], half_band: f64) -> Vec<Pt> {
    let lower = clip_halfplane(poly, |p| p.1 + half_band);
    if lower.len() < 3 {
        return Vec::new();
    }
    let both = clip_halfplane(&lower, |p| half_band - p.1);
    if both.len() < 3 {
        return Vec::new();
    }
    both
}

/// Axis-aligned extent of a polygon: (u_min, u_max, s_min, s_max).
pub(crate) fn extent(poly: &[Pt]) -> (f64, f64, f64, f64) {
    let mut e = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(u, s) in poly {
        e.0 = e.0.min(u);
        e.1 = e.1.max(u);
        e.2 = e.2.min(s);
        e.3 = e.3.max(s);
    }
    e
}

/// Total length covered by a set of 1-D intervals; intervals closer than
/// `merge_tol` fuse, absorbing float jitter at shared cell boundaries.
pub(crate) fn union_length(intervals: &mut Vec<(f64, f64)>, merge_tol: f64) -> f64 {
    if intervals.is_empty() {
        return 0.0;
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let (mut lo, mut hi) = intervals[0];
    for &(a, b) in intervals.iter().skip(1) {
        if a <= hi + merge_tol {
            hi = hi.max(b);
        } else {
            total += hi - lo;
            lo = a;
            hi = b;
        }
    }
    total + (hi - lo)
}
