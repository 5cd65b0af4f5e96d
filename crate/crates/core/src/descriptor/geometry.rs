//! Geometry derived from descriptor vectors.

use super::{DescriptorError, DescriptorVector, ObjectClass, Result, AXIS_TOLERANCE};

pub type Vec3 = [f64; 3];

/// Horizontal displacement below which a pole counts as vertical.
pub const YAW_EPSILON: f64 = 1e-6;
/// Cone heights below this are degenerate.
pub const CONE_EPSILON: f64 = 1e-9;

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Yaw of a pole from its bottom towards its apex, in `[-π, π)`.
pub fn pole_yaw(v: &DescriptorVector) -> Result<f64> {
    v.expect(ObjectClass::Pole)?;
    let (apex, bottom) = (v.point(0), v.point(1));
    let dx = apex[0] - bottom[0];
    let dy = apex[1] - bottom[1];
    if dx.hypot(dy) < YAW_EPSILON {
        return Err(DescriptorError::DegenerateOrientation);
    }
    Ok(crate::pointcloud::normalize_angle(dy.atan2(dx)))
}

/// The four sign corners, counterclockwise about `u × v`, starting at the
/// `(+u, +v)` corner.
pub fn sign_corners(v: &DescriptorVector) -> Result<[Vec3; 4]> {
    v.expect(ObjectClass::TrafficSign)?;
    let (c, u, w) = (v.point(0), v.point(1), v.point(2));
    let unit = |a: Vec3| (norm(a) - 1.0).abs() <= AXIS_TOLERANCE;
    if !unit(u) || !unit(w) || dot(u, w).abs() > AXIS_TOLERANCE {
        return Err(DescriptorError::InvalidAxes);
    }
    let hu = scale(u, v.values()[9]);
    let hv = scale(w, v.values()[10]);
    Ok([
        add(add(c, hu), hv),
        add(sub(c, hu), hv),
        sub(sub(c, hu), hv),
        sub(add(c, hu), hv),
    ])
}

/// Unit normal of a sign plane, `u × v`.
pub fn sign_normal(v: &DescriptorVector) -> Result<Vec3> {
    v.expect(ObjectClass::TrafficSign)?;
    Ok(cross(v.point(1), v.point(2)))
}

/// Cone height and unit axis (base centre towards vertex).
pub fn cone_geometry(v: &DescriptorVector) -> Result<(f64, Vec3)> {
    v.expect(ObjectClass::TrafficCone)?;
    let d = sub(v.point(0), v.point(1));
    let height = norm(d);
    if height < CONE_EPSILON {
        return Err(DescriptorError::DegenerateCone);
    }
    Ok((height, [d[0] / height, d[1] / height, d[2] / height]))
}

/// Keypoints used for distances (signs use their corners, poles their
/// endpoints), followed by scalar attributes compared by absolute difference.
pub fn keypoints(v: &DescriptorVector) -> (Vec<Vec3>, Vec<f64>) {
    let vals = v.values();
    match v.class() {
        ObjectClass::Pole => (vec![v.point(0), v.point(1)], vec![]),
        ObjectClass::TrafficCone => (vec![v.point(0), v.point(1)], vec![vals[6]]),
        ObjectClass::TrafficSign => {
            // the constructor guarantees valid axes
            let corners = sign_corners(v).expect("validated sign");
            (corners.to_vec(), vec![])
        }
        ObjectClass::TrafficLight => {
            let c = v.point(0);
            (vec![c, add(c, v.point(1))], vals[6..9].to_vec())
        }
        ObjectClass::Tunnel => (vec![v.point(0), v.point(1)], vals[6..8].to_vec()),
        ObjectClass::Barrier | ObjectClass::Curb | ObjectClass::LaneMarking => (v.vertices(), vec![]),
    }
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, add(a, scale(ab, t)))
}

fn point_polyline_distance(p: Vec3, line: &[Vec3]) -> f64 {
    line.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

fn mean_vertex_to_polyline(from: &[Vec3], to: &[Vec3]) -> f64 {
    from.iter().map(|&p| point_polyline_distance(p, to)).sum::<f64>() / from.len() as f64
}

/// Distance between two descriptors of the same class.
///
/// Fixed-layout classes: mean over corresponding keypoint distances and
/// scalar-attribute differences. Polyline classes: the average of the two
/// directed mean vertex-to-polyline distances.
pub fn descriptor_distance(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64> {
    if a.class() != b.class() {
        return Err(DescriptorError::ClassMismatch(a.class(), b.class()));
    }
    if a.class().is_polyline() {
        let (va, vb) = (a.vertices(), b.vertices());
        return Ok(0.5 * (mean_vertex_to_polyline(&va, &vb) + mean_vertex_to_polyline(&vb, &va)));
    }
    let (ka, sa) = keypoints(a);
    let (kb, sb) = keypoints(b);
    let terms = ka.len() + sa.len();
    let total: f64 = ka.iter().zip(&kb).map(|(&p, &q)| dist(p, q)).sum::<f64>()
        + sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok(total / terms as f64)
}
