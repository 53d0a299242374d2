use crate::error::Result;
use crate::model::RotatedBox;

type Point = (f64, f64);

/// Signed shoelace area; positive for counter-clockwise vertices.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    0.5 * twice
}

fn cross(o: Point, a: Point, p: Point) -> f64 {
    (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0)
}

fn line_hit(p: Point, q: Point, a: Point, b: Point) -> Point {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Clip `subject` against every edge of the convex CCW polygon `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let p_in = cross(a, b, p) >= 0.0;
            let q_in = cross(a, b, q) >= 0.0;
            if p_in {
                out.push(p);
                if !q_in {
                    out.push(line_hit(p, q, a, b));
                }
            } else if q_in {
                out.push(line_hit(p, q, a, b));
            }
        }
    }
    out
}

/// Intersection over union of two rotated BEV boxes.
pub fn rotated_iou(a: &RotatedBox, b: &RotatedBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let d = (a.cx - b.cx).hypot(a.cy - b.cy);
    if d > a.circumradius() + b.circumradius() {
        return Ok(0.0);
    }
    let inter = polygon_area(&clip_convex(&a.corners(), &b.corners())).max(0.0);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
