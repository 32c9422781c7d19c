//! Localized element refinement: a marked element is replaced by the Voronoi
//! sub-tessellation of seeds placed inside it (one per parent node), smoothed
//! by a short Lloyd run, with the new parent-edge nodes snapped to even
//! spacing and inserted into the neighbors' cycles.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{
    bbox, centroid, dist_point_segment, is_simple_polygon, locate_point, project_parameter,
    signed_area, Point2, PointLocation,
};
use crate::mesh::PolyMesh;
use crate::meshgen::{voronoi_cell_polygons, MeshMode, Welder};
use crate::{Error, Result};

/// Maximum Lloyd iterations for the in-element smoothing.
const INNER_LLOYD_ITER: usize = 20;
const INNER_LLOYD_TOL: f64 = 1e-3;

/// Minimum child area as a fraction of the parent area.
const MIN_CHILD_AREA_FRAC: f64 = 1e-12;

/// Deterministic per-element RNG stream for batch refinement.
fn mix_seed(rng_seed: u64, salt: u64) -> u64 {
    let mut z = rng_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed points for the sub-tessellation: a regular grid for structured mode,
/// uniform random points for Voronoi mode. Exactly `count` points inside the
/// parent polygon.
fn seed_points(
    poly: &[Point2],
    count: usize,
    mode: MeshMode,
    rng_seed: u64,
) -> Result<Vec<Point2>> {
    let (lo, hi) = bbox(poly);
    let w = (hi.x - lo.x).max(1e-300);
    let h = (hi.y - lo.y).max(1e-300);
    // Keep seeds a healthy fraction of the expected cell size apart so the
    // sub-tessellation cannot start from sliver cells.
    let area = signed_area(poly).abs().max(1e-300);
    let sep = 0.25 * (area / count.max(1) as f64).sqrt();
    let mut pts: Vec<Point2> = Vec::with_capacity(count);
    match mode {
        MeshMode::Structured => {
            let ny = ((count as f64 * h / w).sqrt().round() as usize).clamp(1, count);
            let nx = ((count as f64 / ny as f64).ceil() as usize).max(1);
            for j in 0..ny {
                for i in 0..nx {
                    if pts.len() == count {
                        break;
                    }
                    let p = Point2::new(
                        lo.x + (i as f64 + 0.5) * w / nx as f64,
                        lo.y + (j as f64 + 0.5) * h / ny as f64,
                    );
                    if locate_point(poly, p, 0.0) == PointLocation::Inside {
                        pts.push(p);
                    }
                }
            }
            // Clipped (non-rectangular) parents can leave grid centers
            // outside; top up deterministically toward the vertices.
            let c = centroid(poly);
            let mut frac = 0.5;
            while pts.len() < count && frac > 1e-3 {
                for v in poly {
                    if pts.len() == count {
                        break;
                    }
                    let p = c.lerp(*v, frac);
                    if locate_point(poly, p, 0.0) == PointLocation::Inside
                        && pts.iter().all(|q| q.dist(p) > sep)
                    {
                        pts.push(p);
                    }
                }
                frac *= 0.5;
            }
        }
        MeshMode::Voronoi => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut guard = 0;
            while pts.len() < count {
                guard += 1;
                if guard > 100_000 {
                    break;
                }
                let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                if locate_point(poly, p, 0.0) == PointLocation::Inside
                    && pts.iter().all(|q| q.dist(p) > sep)
                {
                    pts.push(p);
                }
            }
        }
    }
    if pts.len() < count.min(3) {
        return Err(Error::Refinement(format!(
            "could not place {count} seeds inside the parent element"
        )));
    }
    Ok(pts)
}

/// Lloyd smoothing restricted to a container polygon.
fn lloyd_in_polygon(container: &[Point2], mut pts: Vec<Point2>) -> Result<Vec<Point2>> {
    let (lo, hi) = bbox(container);
    let diam = lo.dist(hi);
    for _ in 0..INNER_LLOYD_ITER {
        let cells = voronoi_cell_polygons(container, &pts)?;
        let mut max_disp = 0.0f64;
        let mut next = Vec::with_capacity(pts.len());
        for (i, cell) in cells.iter().enumerate() {
            let c = centroid(cell);
            if locate_point(container, c, 0.0) == PointLocation::Inside {
                max_disp = max_disp.max(c.dist(pts[i]));
                next.push(c);
            } else {
                next.push(pts[i]);
            }
        }
        pts = next;
        if max_disp < INNER_LLOYD_TOL * diam {
            break;
        }
    }
    Ok(pts)
}

/// Number of genuine (non-collinear) corners of an element; hanging nodes
/// sitting on straight runs do not count toward the subdivision size.
pub fn corner_count(mesh: &PolyMesh, elem: usize) -> usize {
    let poly = mesh.element_polygon(elem);
    let n = poly.len();
    let mut corners = 0;
    for i in 0..n {
        let a = poly[(i + n - 1) % n];
        let b = poly[i];
        let c = poly[(i + 1) % n];
        let cr = crate::geometry::cross(a, b, c).abs();
        if cr > 1e-9 * a.dist(b) * b.dist(c) {
            corners += 1;
        }
    }
    corners.max(3)
}

/// Refine one element in place: one seed per parent corner (hanging nodes
/// do not inflate the subdivision). Returns the ids of the child elements.
/// On error the mesh is left unmodified.
pub fn refine_element(
    mesh: &mut PolyMesh,
    elem: usize,
    mode: MeshMode,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    if elem >= mesh.n_elements() {
        return Err(Error::Precondition(format!("element {elem} out of range")));
    }
    let n_v = corner_count(mesh, elem);
    let children = refine_element_with_seeds(mesh, elem, mode, rng_seed, n_v)?;
    mesh.heal_hanging_nodes();
    Ok(children)
}

/// Refinement with an explicit seed count. Batch refinement pins the counts
/// to the pre-batch mesh state so that hanging nodes inserted by earlier
/// refinements in the same batch do not inflate later subdivisions.
fn refine_element_with_seeds(
    mesh: &mut PolyMesh,
    elem: usize,
    mode: MeshMode,
    rng_seed: u64,
    n_v: usize,
) -> Result<Vec<usize>> {
    let parent_poly = mesh.element_polygon(elem);
    let parent_area = signed_area(&parent_poly);
    if parent_area <= 0.0 {
        return Err(Error::Refinement(format!("element {elem} has non-positive area")));
    }
    let tol = mesh.merge_tol();

    let seeds = seed_points(&parent_poly, n_v, mode, rng_seed)?;
    let seeds = lloyd_in_polygon(&parent_poly, seeds)?;
    let mut cells = voronoi_cell_polygons(&parent_poly, &seeds)
        .map_err(|e| Error::Refinement(format!("sub-tessellation failed: {e}")))?;

    // Snap new nodes on parent edges to even spacing between the parent's
    // corner nodes, per edge. Cluster the cell vertices lying on each edge,
    // then rewrite each cell vertex to its cluster's snapped position.
    let edge_tol = tol.max(1e-12 * lo_hi_diam(&parent_poly));
    for k in 0..n_v {
        let pa = parent_poly[k];
        let pb = parent_poly[(k + 1) % n_v];
        let len = pa.dist(pb);
        if len <= edge_tol {
            continue;
        }
        // Gather unique interior positions on this edge.
        let mut ts: Vec<f64> = Vec::new();
        for cell in &cells {
            for p in cell {
                if dist_point_segment(*p, pa, pb) <= edge_tol {
                    let t = project_parameter(*p, pa, pb);
                    if t * len > edge_tol && (1.0 - t) * len > edge_tol {
                        ts.push(t);
                    }
                }
            }
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut clusters: Vec<(f64, f64)> = Vec::new(); // (t_low, t_high)
        for t in ts {
            match clusters.last_mut() {
                Some((_, hi)) if (t - *hi) * len <= edge_tol => *hi = t,
                _ => clusters.push((t, t)),
            }
        }
        let m = clusters.len();
        if m == 0 {
            continue;
        }
        // Rewrite matching vertices to the evenly spaced positions.
        for cell in cells.iter_mut() {
            for p in cell.iter_mut() {
                if dist_point_segment(*p, pa, pb) <= edge_tol {
                    let t = project_parameter(*p, pa, pb);
                    if t * len > edge_tol && (1.0 - t) * len > edge_tol {
                        let idx = clusters
                            .iter()
                            .position(|&(lo, hi)| t >= lo - edge_tol / len && t <= hi + edge_tol / len)
                            .unwrap_or(0);
                        *p = pa.lerp(pb, (idx + 1) as f64 / (m + 1) as f64);
                    }
                }
            }
        }
    }

    // Validate the candidate children before touching the mesh.
    let mut total = 0.0;
    for cell in &cells {
        let a = signed_area(cell);
        if a < MIN_CHILD_AREA_FRAC * parent_area {
            return Err(Error::Refinement(format!(
                "child of element {elem} degenerated (area {a:.3e})"
            )));
        }
        if !is_simple_polygon(cell, tol) {
            return Err(Error::Refinement(format!(
                "child of element {elem} is not a simple polygon"
            )));
        }
        total += a;
    }
    if ((total - parent_area) / parent_area).abs() > 1e-9 {
        return Err(Error::Refinement(format!(
            "children do not tile element {elem}: parent {parent_area:.6e}, sum {total:.6e}"
        )));
    }

    // Commit: weld child vertices against the existing nodes, replace the
    // parent, insert the new edge nodes into the neighbors.
    let snapshot_nodes = mesh.nodes.len();
    let mut welder = Welder::with_nodes(std::mem::take(&mut mesh.nodes), tol);
    let mut child_cycles: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut cycle: Vec<usize> = cell.iter().map(|&p| welder.add_or_get(p)).collect();
        cycle.dedup();
        while cycle.len() > 1 && cycle.first() == cycle.last() {
            cycle.pop();
        }
        child_cycles.push(cycle);
    }
    mesh.nodes = std::mem::take(&mut welder.nodes);

    // Welding could have merged vertices; re-validate the cycles.
    let broken = child_cycles.iter().any(|c| {
        c.len() < 3 || {
            let poly: Vec<Point2> = c.iter().map(|&v| mesh.nodes[v]).collect();
            signed_area(&poly) < MIN_CHILD_AREA_FRAC * parent_area
        }
    });
    if broken {
        mesh.nodes.truncate(snapshot_nodes);
        return Err(Error::Refinement(format!(
            "welding degenerated a child of element {elem}"
        )));
    }

    let parent_nodes: Vec<usize> = mesh.elements[elem].clone();
    mesh.elements.remove(elem);
    let first_child = mesh.n_elements();
    mesh.elements.extend(child_cycles);
    let child_ids: Vec<usize> = (first_child..mesh.n_elements()).collect();

    // Insert the fresh nodes into edge-sharing neighbors: only elements
    // touching the parent's nodes can carry one of its former edges.
    let fresh: Vec<usize> = (snapshot_nodes..mesh.nodes.len()).collect();
    if !fresh.is_empty() {
        let neighbor_of_parent = |cycle: &Vec<usize>| cycle.iter().any(|v| parent_nodes.contains(v));
        let neighbors: Vec<usize> = (0..first_child)
            .filter(|&e| neighbor_of_parent(&mesh.elements[e]))
            .collect();
        for e in neighbors {
            let cycle = mesh.elements[e].clone();
            let k = cycle.len();
            let mut rebuilt: Vec<usize> = Vec::with_capacity(k);
            for i in 0..k {
                let va = cycle[i];
                let vb = cycle[(i + 1) % k];
                rebuilt.push(va);
                let a = mesh.nodes[va];
                let b = mesh.nodes[vb];
                let mut on_edge: Vec<(f64, usize)> = Vec::new();
                for &w in &fresh {
                    if w == va || w == vb || cycle.contains(&w) {
                        continue;
                    }
                    let p = mesh.nodes[w];
                    if dist_point_segment(p, a, b) <= tol && p.dist(a) > tol && p.dist(b) > tol {
                        on_edge.push((project_parameter(p, a, b), w));
                    }
                }
                on_edge.sort_by(|x, y| x.partial_cmp(y).unwrap());
                rebuilt.extend(on_edge.into_iter().map(|(_, v)| v));
            }
            mesh.elements[e] = rebuilt;
        }
    }
    Ok(child_ids)
}

fn lo_hi_diam(poly: &[Point2]) -> f64 {
    let (lo, hi) = bbox(poly);
    lo.dist(hi)
}

/// Refine a set of elements (ids referring to the mesh as passed in) in
/// ascending id order. Individual failures roll back only that element.
/// Returns the number of elements actually refined.
pub fn refine_batch(
    mesh: &mut PolyMesh,
    elems: &[usize],
    mode: MeshMode,
    rng_seed: u64,
) -> Result<usize> {
    let mut ids: Vec<usize> = elems.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.last().is_some_and(|&e| e >= mesh.n_elements()) {
        return Err(Error::Precondition("refine id out of range".into()));
    }
    // Seed counts come from the mesh as handed in, not from intermediate
    // states with freshly inserted hanging nodes.
    let seed_counts: Vec<usize> = ids.iter().map(|&e| corner_count(mesh, e)).collect();
    let mut refined = 0usize;
    for (&orig, &n_v) in ids.iter().zip(&seed_counts) {
        // Earlier removals (all at smaller current indices) shift this id.
        let current = orig - refined;
        match refine_element_with_seeds(mesh, current, mode, mix_seed(rng_seed, orig as u64), n_v) {
            Ok(_) => refined += 1,
            Err(Error::Refinement(msg)) => {
                log::debug!("refinement of element {orig} skipped: {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    // The per-element insertion covers edge-sharing neighbors; one global
    // pass per batch picks up any remaining hanging-node placement.
    if refined > 0 {
        mesh.heal_hanging_nodes();
    }
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryCondition, BoundarySegment, DomainSpec};
    use crate::meshgen::{bounded_voronoi, generate_mesh, generate_seeds};
    use approx::assert_relative_eq;

    fn unit_square_domain() -> DomainSpec {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let segments = (0..4)
            .map(|i| BoundarySegment::new(pts[i], pts[(i + 1) % 4], BoundaryCondition::Free))
            .collect();
        DomainSpec::new(pts, segments).unwrap()
    }

    #[test]
    fn structured_quad_splits_into_four() {
        let domain = unit_square_domain();
        let seeds = generate_seeds(&domain, 4, MeshMode::Structured, 0).unwrap();
        let mut mesh = bounded_voronoi(&domain, &seeds).unwrap();
        let children = refine_element(&mut mesh, 0, MeshMode::Structured, 0).unwrap();
        assert_eq!(children.len(), 4);
        assert_eq!(mesh.n_elements(), 7);
        assert!(mesh.check_conformity().is_empty());
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-12);
        // Children are congruent quadrants of the parent.
        for &c in &children {
            assert_relative_eq!(mesh.element_area(c).unwrap(), 0.25 / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn voronoi_polygon_children_match_seed_count() {
        let domain = unit_square_domain();
        let mesh0 = generate_mesh(&domain, 12, MeshMode::Voronoi, 9).unwrap();
        let mut mesh = mesh0.clone();
        let n_v = mesh.elements[3].len();
        let children = refine_element(&mut mesh, 3, MeshMode::Voronoi, 5).unwrap();
        assert_eq!(children.len(), n_v);
        assert!(mesh.check_conformity().is_empty());
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn children_tile_parent() {
        let domain = unit_square_domain();
        let mesh0 = generate_mesh(&domain, 9, MeshMode::Voronoi, 13).unwrap();
        for elem in 0..mesh0.n_elements() {
            let mut mesh = mesh0.clone();
            let parent_area = mesh.element_area(elem).unwrap();
            let children = refine_element(&mut mesh, elem, MeshMode::Voronoi, 21).unwrap();
            let total: f64 = children.iter().map(|&c| mesh.element_area(c).unwrap()).sum();
            assert_relative_eq!(total, parent_area, max_relative = 1e-9);
            assert!(mesh.check_conformity().is_empty());
        }
    }

    #[test]
    fn batch_refines_everything() {
        let domain = unit_square_domain();
        let seeds = generate_seeds(&domain, 4, MeshMode::Structured, 0).unwrap();
        let mut mesh = bounded_voronoi(&domain, &seeds).unwrap();
        let ids: Vec<usize> = (0..4).collect();
        let done = refine_batch(&mut mesh, &ids, MeshMode::Structured, 0).unwrap();
        assert_eq!(done, 4);
        assert_eq!(mesh.n_elements(), 16);
        assert!(mesh.check_conformity().is_empty());
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn empty_batch_is_noop() {
        let domain = unit_square_domain();
        let mesh0 = generate_mesh(&domain, 10, MeshMode::Voronoi, 3).unwrap();
        let mut mesh = mesh0.clone();
        refine_batch(&mut mesh, &[], MeshMode::Voronoi, 0).unwrap();
        assert_eq!(mesh.elements, mesh0.elements);
    }

    #[test]
    fn adjacent_refinements_share_inserted_nodes() {
        let domain = unit_square_domain();
        let seeds = generate_seeds(&domain, 4, MeshMode::Structured, 0).unwrap();
        let mut mesh = bounded_voronoi(&domain, &seeds).unwrap();
        // Elements 0 and 1 share a vertical edge.
        refine_batch(&mut mesh, &[0, 1], MeshMode::Structured, 0).unwrap();
        assert!(mesh.check_conformity().is_empty());
        assert_eq!(mesh.n_elements(), 10);
        // The shared edge midpoint must be used by children of both parents.
        let mid = Point2::new(0.5, 0.25);
        let node = (0..mesh.n_nodes()).find(|&i| mesh.nodes[i].dist(mid) < 1e-9);
        assert!(node.is_some(), "shared midpoint node missing");
        assert!(mesh.node_patch(node.unwrap()).len() >= 2);
    }

    #[test]
    fn determinism() {
        let domain = unit_square_domain();
        let mesh0 = generate_mesh(&domain, 15, MeshMode::Voronoi, 2).unwrap();
        let mut a = mesh0.clone();
        let mut b = mesh0.clone();
        refine_batch(&mut a, &[2, 5, 7], MeshMode::Voronoi, 77).unwrap();
        refine_batch(&mut b, &[2, 5, 7], MeshMode::Voronoi, 77).unwrap();
        assert_eq!(a.elements, b.elements);
        for (p, q) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(p, q);
        }
    }
}
