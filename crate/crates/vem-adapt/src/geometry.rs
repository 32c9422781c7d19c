//! Planar geometric primitives used by the mesh data structure and the
//! remeshing operations: polygon measures, point location, convex hulls,
//! half-plane clipping and polygon-polygon intersection.

use serde::{Deserialize, Serialize};

/// A point in the plane, coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn midpoint(&self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn lerp(&self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

/// Cross product of (b - a) x (c - a); positive when a,b,c turn counter-clockwise.
pub fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Signed area of a polygon given as a vertex cycle (positive for CCW).
/// Coordinates are taken relative to the first vertex, which keeps the
/// result accurate for small polygons far from the origin.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let o = poly[0];
    let mut acc = 0.0;
    for i in 1..n.saturating_sub(1) {
        let px = poly[i].x - o.x;
        let py = poly[i].y - o.y;
        let qx = poly[i + 1].x - o.x;
        let qy = poly[i + 1].y - o.y;
        acc += px * qy - qx * py;
    }
    0.5 * acc
}

/// Area-weighted centroid of a polygon. Falls back to the vertex mean for
/// (near-)degenerate cycles.
pub fn centroid(poly: &[Point2]) -> Point2 {
    let n = poly.len();
    let a = signed_area(poly);
    if n == 0 {
        return Point2::new(0.0, 0.0);
    }
    let mean = Point2::new(
        poly.iter().map(|p| p.x).sum::<f64>() / n as f64,
        poly.iter().map(|p| p.y).sum::<f64>() / n as f64,
    );
    if a.abs() < 1e-300 {
        return mean;
    }
    // Accumulate relative to the vertex mean to keep the sums well
    // conditioned for small polygons far from the origin.
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = Point2::new(poly[i].x - mean.x, poly[i].y - mean.y);
        let q = Point2::new(poly[(i + 1) % n].x - mean.x, poly[(i + 1) % n].y - mean.y);
        let w = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Point2::new(mean.x + cx / (6.0 * a), mean.y + cy / (6.0 * a))
}

/// Maximum pairwise vertex distance.
pub fn diameter(poly: &[Point2]) -> f64 {
    let mut d2: f64 = 0.0;
    for i in 0..poly.len() {
        for j in (i + 1)..poly.len() {
            d2 = d2.max(poly[i].dist2(poly[j]));
        }
    }
    d2.sqrt()
}

/// Axis-aligned bounding box as (min, max) corners.
pub fn bbox(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Where a point sits relative to a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLocation {
    Inside,
    Boundary,
    Outside,
}

/// Locate a point relative to a simple polygon (any orientation) using the
/// crossing number, with an explicit boundary band of half-width `tol`.
pub fn locate_point(poly: &[Point2], p: Point2, tol: f64) -> PointLocation {
    let n = poly.len();
    for i in 0..n {
        if dist_point_segment(p, poly[i], poly[(i + 1) % n]) <= tol {
            return PointLocation::Boundary;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x_cross > p.x {
                inside = !inside;
            }
        }
    }
    if inside {
        PointLocation::Inside
    } else {
        PointLocation::Outside
    }
}

/// Distance from a point to a closed segment.
pub fn dist_point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let vx = b.x - a.x;
    let vy = b.y - a.y;
    let len2 = vx * vx + vy * vy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
    let t = t.clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * vx, a.y + t * vy))
}

/// Parameter of the orthogonal projection of `p` onto the line through a-b,
/// unclamped (t=0 at `a`, t=1 at `b`).
pub fn project_parameter(p: Point2, a: Point2, b: Point2) -> f64 {
    let vx = b.x - a.x;
    let vy = b.y - a.y;
    let len2 = vx * vx + vy * vy;
    if len2 == 0.0 {
        return 0.0;
    }
    ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2
}

/// Closest point on a closed segment.
pub fn nearest_point_on_segment(p: Point2, a: Point2, b: Point2) -> Point2 {
    let t = project_parameter(p, a, b).clamp(0.0, 1.0);
    a.lerp(b, t)
}

/// True when segments ab and cd properly cross (intersection interior to both).
pub fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Simplicity test: no two non-adjacent edges of the cycle intersect and no
/// edge has (near-)zero length. O(k^2), intended for element-sized polygons.
pub fn is_simple_polygon(poly: &[Point2], tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if poly[i].dist(poly[(i + 1) % n]) <= tol {
            return false;
        }
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            if j == i || (j + 1) % n == i || j == (i + 1) % n {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
            // A non-adjacent vertex touching an edge also breaks simplicity.
            if dist_point_segment(c, a, b) <= tol && c.dist(a) > tol && c.dist(b) > tol {
                return false;
            }
        }
    }
    true
}

/// Convex hull (Andrew's monotone chain), CCW, collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Clip a polygon by the half-plane `{ q : dot(q - p, n) <= 0 }`.
pub fn clip_halfplane(poly: &[Point2], p: Point2, n: (f64, f64)) -> Vec<Point2> {
    let inside = |q: &Point2| (q.x - p.x) * n.0 + (q.y - p.y) * n.1 <= 0.0;
    let mut out = Vec::with_capacity(poly.len() + 2);
    let m = poly.len();
    for i in 0..m {
        let cur = poly[i];
        let nxt = poly[(i + 1) % m];
        let cur_in = inside(&cur);
        let nxt_in = inside(&nxt);
        if cur_in {
            out.push(cur);
        }
        if cur_in != nxt_in {
            let da = (cur.x - p.x) * n.0 + (cur.y - p.y) * n.1;
            let db = (nxt.x - p.x) * n.0 + (nxt.y - p.y) * n.1;
            let t = da / (da - db);
            out.push(cur.lerp(nxt, t));
        }
    }
    out
}

/// Intersection of a simple (possibly non-convex) `subject` polygon with a
/// convex `clip` polygon (CCW), via Sutherland-Hodgman. The result may contain
/// pinch points when the true intersection is disconnected; see
/// [`split_pinched`].
pub fn intersect_with_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut poly = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if poly.is_empty() {
            return poly;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        // Outward normal of the CCW clip edge a->b.
        let n = (b.y - a.y, -(b.x - a.x));
        poly = clip_halfplane(&poly, a, n);
    }
    poly
}

/// Cut away the open half-plane `{ q : dot(q - p, n) > 0 }` from a simple
/// polygon, returning the connected components of the remainder as separate
/// loops. Unlike plain Sutherland-Hodgman this stays correct when the cut
/// disconnects a non-convex polygon: run ends are re-joined pairwise along
/// the cut line instead of bridging across it.
pub fn cut_polygon_components(poly: &[Point2], p: Point2, n: (f64, f64)) -> Vec<Vec<Point2>> {
    let m = poly.len();
    if m < 3 {
        return Vec::new();
    }
    let side = |q: &Point2| (q.x - p.x) * n.0 + (q.y - p.y) * n.1;
    let d: Vec<f64> = poly.iter().map(side).collect();
    if d.iter().all(|&v| v <= 0.0) {
        return vec![poly.to_vec()];
    }
    if d.iter().all(|&v| v > 0.0) {
        return Vec::new();
    }
    // Start the walk at an outside vertex so runs never wrap.
    let start = (0..m).find(|&i| d[i] > 0.0).unwrap();
    // Tangent direction of the cut line for ordering the crossings.
    let tangent = (-n.1, n.0);
    let along = |q: Point2| (q.x - p.x) * tangent.0 + (q.y - p.y) * tangent.1;

    struct Run {
        pts: Vec<Point2>,
        s_in: f64,
        s_out: f64,
    }
    let mut runs: Vec<Run> = Vec::new();
    let mut current: Option<Run> = None;
    for k in 0..m {
        let i = (start + k) % m;
        let j = (start + k + 1) % m;
        let (di, dj) = (d[i], d[j]);
        if di <= 0.0 {
            if let Some(run) = current.as_mut() {
                run.pts.push(poly[i]);
            }
        }
        if (di <= 0.0) != (dj <= 0.0) {
            let t = di / (di - dj);
            let c = poly[i].lerp(poly[j], t);
            if dj <= 0.0 {
                // Entering the kept side.
                current = Some(Run { pts: vec![c], s_in: along(c), s_out: 0.0 });
            } else if let Some(mut run) = current.take() {
                run.pts.push(c);
                run.s_out = along(c);
                runs.push(run);
            }
        }
    }
    if runs.is_empty() {
        return Vec::new();
    }
    if runs.len() == 1 {
        return vec![std::mem::take(&mut runs[0].pts)];
    }
    // Pair run endpoints in order along the cut line: between consecutive
    // crossing points the line alternates interior/exterior, so sorted
    // events pair up (0,1), (2,3), ...
    let mut events: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * runs.len());
    for (r, run) in runs.iter().enumerate() {
        events.push((run.s_in, r, true));
        events.push((run.s_out, r, false));
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // next_run[r] = run whose entry crossing closes run r's exit.
    let mut next_run = vec![usize::MAX; runs.len()];
    for pair in events.chunks(2) {
        if pair.len() < 2 {
            return vec![clip_halfplane(poly, p, n)];
        }
        let (a, b) = (&pair[0], &pair[1]);
        match (a.2, b.2) {
            (false, true) => next_run[a.1] = b.1,
            (true, false) => next_run[b.1] = a.1,
            _ => return vec![clip_halfplane(poly, p, n)],
        }
    }
    // Stitch runs into loops.
    let mut visited = vec![false; runs.len()];
    let mut loops = Vec::new();
    for r0 in 0..runs.len() {
        if visited[r0] {
            continue;
        }
        let mut loop_pts: Vec<Point2> = Vec::new();
        let mut r = r0;
        loop {
            if visited[r] {
                break;
            }
            visited[r] = true;
            loop_pts.extend_from_slice(&runs[r].pts);
            r = next_run[r];
            if r == usize::MAX {
                break;
            }
        }
        if loop_pts.len() >= 3 {
            loops.push(loop_pts);
        }
    }
    loops
}

/// Split a polygon with coincident ("pinch") vertices into its component
/// loops and return them all. A clean polygon comes back as a single loop.
pub fn split_pinched(poly: &[Point2], tol: f64) -> Vec<Vec<Point2>> {
    let n = poly.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if poly[i].dist(poly[j]) <= tol {
                let first: Vec<Point2> = poly[i..j].to_vec();
                let mut second: Vec<Point2> = poly[j..].to_vec();
                second.extend_from_slice(&poly[..i]);
                let mut out = Vec::new();
                if first.len() >= 3 {
                    out.extend(split_pinched(&first, tol));
                }
                if second.len() >= 3 {
                    out.extend(split_pinched(&second, tol));
                }
                return out;
            }
        }
    }
    if n >= 3 {
        vec![poly.to_vec()]
    } else {
        Vec::new()
    }
}

/// Remove consecutive duplicate vertices (within `tol`), keeping the first.
pub fn dedup_cycle(poly: &[Point2], tol: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(poly.len());
    for &p in poly {
        if out.last().map_or(true, |q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

/// Drop vertices whose adjacent edges are collinear within `tol` (relative
/// cross-product test). Used for cleaning freshly clipped cells; hanging
/// nodes in meshes are inserted explicitly afterwards.
pub fn drop_collinear(poly: &[Point2], tol: f64) -> Vec<Point2> {
    let n = poly.len();
    if n < 3 {
        return poly.to_vec();
    }
    let mut keep = vec![true; n];
    for i in 0..n {
        let prev = poly[(i + n - 1) % n];
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let c = cross(prev, cur, next);
        let scale = prev.dist(cur) * cur.dist(next);
        if scale > 0.0 && c.abs() <= tol * scale {
            keep[i] = false;
        }
    }
    let out: Vec<Point2> = (0..n).filter(|&i| keep[i]).map(|i| poly[i]).collect();
    if out.len() >= 3 {
        out
    } else {
        poly.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn area_and_centroid() {
        assert_relative_eq!(signed_area(&unit_square()), 1.0);
        let c = centroid(&unit_square());
        assert_relative_eq!(c.x, 0.5);
        assert_relative_eq!(c.y, 0.5);
        let tri = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert_relative_eq!(signed_area(&tri), 0.5);
        let c = centroid(&tri);
        assert_relative_eq!(c.x, 1.0 / 3.0);
        assert_relative_eq!(c.y, 1.0 / 3.0);
    }

    #[test]
    fn collinear_vertex_changes_nothing() {
        let sq = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert_relative_eq!(signed_area(&sq), 1.0);
        let c = centroid(&sq);
        assert_relative_eq!(c.x, 0.5);
        assert_relative_eq!(c.y, 0.5);
    }

    #[test]
    fn point_location() {
        let sq = unit_square();
        assert_eq!(locate_point(&sq, Point2::new(0.5, 0.5), 1e-12), PointLocation::Inside);
        assert_eq!(locate_point(&sq, Point2::new(1.5, 0.5), 1e-12), PointLocation::Outside);
        assert_eq!(locate_point(&sq, Point2::new(1.0, 0.5), 1e-12), PointLocation::Boundary);
        assert_eq!(locate_point(&sq, Point2::new(0.0, 0.0), 1e-12), PointLocation::Boundary);
    }

    #[test]
    fn hull_of_grid() {
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                pts.push(Point2::new(i as f64, j as f64));
            }
        }
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert_relative_eq!(signed_area(&hull), 9.0);
    }

    #[test]
    fn halfplane_clip_square() {
        // Keep x <= 0.5.
        let out = clip_halfplane(&unit_square(), Point2::new(0.5, 0.0), (1.0, 0.0));
        assert_relative_eq!(signed_area(&out).abs(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn intersect_l_domain_with_cell() {
        let l = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.25),
            Point2::new(0.25, 0.25),
            Point2::new(0.25, 1.0),
            Point2::new(0.0, 1.0),
        ];
        // Convex cell spanning the re-entrant corner.
        let cell = vec![
            Point2::new(0.1, 0.1),
            Point2::new(0.5, 0.1),
            Point2::new(0.5, 0.5),
            Point2::new(0.1, 0.5),
        ];
        let out = intersect_with_convex(&l, &cell);
        let pieces = split_pinched(&out, 1e-12);
        assert_eq!(pieces.len(), 1);
        // Cell area 0.16 minus the notch bite (0.25..0.5)^2 = 0.0625.
        assert_relative_eq!(signed_area(&pieces[0]), 0.16 - 0.0625, epsilon = 1e-12);
    }

    #[test]
    fn cut_keeps_components_separate() {
        // L-shaped polygon cut by a diagonal half-plane that separates the
        // two leg tips.
        let l = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.25),
            Point2::new(0.25, 0.25),
            Point2::new(0.25, 1.0),
            Point2::new(0.0, 1.0),
        ];
        // Keep the side away from the origin: dot(q - p, n) > 0 removed with
        // n pointing toward the origin keeps x + y >= 0.9.
        let p = Point2::new(0.45, 0.45);
        let n = (-1.0, -1.0);
        let parts = cut_polygon_components(&l, p, n);
        assert_eq!(parts.len(), 2, "diagonal cut must split the L into two arms");
        let total: f64 = parts.iter().map(|poly| signed_area(poly)).sum();
        // Each arm is a track of the leg beyond x+y=0.9: triangle-free
        // rectangles 0.1 x 0.25 plus corner triangles.
        assert!(total > 0.0);
        for part in &parts {
            assert!(is_simple_polygon(part, 1e-12), "arm must be simple");
            for q in part {
                assert!(
                    q.x + q.y >= 0.9 - 1e-12,
                    "vertex ({}, {}) leaked across the cut",
                    q.x,
                    q.y
                );
            }
        }

        // A cut that removes nothing returns the polygon unchanged.
        let parts = cut_polygon_components(&l, Point2::new(5.0, 5.0), (1.0, 1.0));
        assert_eq!(parts.len(), 1);
        assert_relative_eq!(signed_area(&parts[0]), signed_area(&l));

        // A cut that removes everything returns nothing.
        let parts = cut_polygon_components(&l, Point2::new(-1.0, 0.0), (1.0, 0.0));
        assert!(parts.is_empty());
    }

    #[test]
    fn cut_matches_halfplane_clip_on_convex() {
        let sq = unit_square();
        let parts = cut_polygon_components(&sq, Point2::new(0.3, 0.0), (1.0, 0.0));
        assert_eq!(parts.len(), 1);
        assert_relative_eq!(signed_area(&parts[0]), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn simplicity() {
        assert!(is_simple_polygon(&unit_square(), 1e-12));
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(!is_simple_polygon(&bowtie, 1e-12));
    }
}
