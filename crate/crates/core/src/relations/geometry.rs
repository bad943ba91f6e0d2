//! Planar footprint geometry for oriented boxes.

use crate::scene::BoundingBox;

type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon (absolute value).
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * twice.abs()
}

fn segment_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    // Intersection of line pq with line ab; only called when p and q straddle ab.
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland-Hodgman clip of `subject` against convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Intersection-over-union of two boxes' ground footprints.
pub fn footprint_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let pa = a.footprint();
    let pb = b.footprint();
    let inter = polygon_area(&clip_convex(&pa, &pb));
    let union = a.footprint_area() + b.footprint_area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Offset of `target`'s center in `anchor`'s yaw frame: (longitudinal, lateral).
pub fn local_offset(anchor: &BoundingBox, target: &BoundingBox) -> (f64, f64) {
    let dx = target.center[0] - anchor.center[0];
    let dy = target.center[1] - anchor.center[1];
    let (s, c) = anchor.yaw.sin_cos();
    (c * dx + s * dy, -s * dx + c * dy)
}
