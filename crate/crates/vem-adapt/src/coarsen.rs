//! Patch coarsening: the elements around a node are replaced by a single
//! element bounded by the convex hull of the patch nodes. Surrounding-element
//! nodes that fall strictly inside the hull are projected onto the hull
//! boundary (edge straightening); the merge is rejected when it would change
//! the domain geometry or invert a neighbor.

use std::collections::HashMap;

use crate::geometry::{
    convex_hull, cross, dist_point_segment, is_simple_polygon, locate_point,
    nearest_point_on_segment, project_parameter, segments_cross, signed_area, Point2,
    PointLocation,
};
use crate::mesh::{DomainSpec, PolyMesh};
use crate::{Error, Result};

/// Everything needed to apply one patch merge.
struct CoarsenPlan {
    /// Elements to delete (sorted ascending).
    patch: Vec<usize>,
    /// Surrounding elements whose cycles or node coordinates change.
    ring1: Vec<usize>,
    /// Straightening moves: node -> new position on the hull boundary.
    moves: Vec<(usize, Point2)>,
    /// Node merges (duplicate, survivor) applied after the moves.
    merges: Vec<(usize, usize)>,
    /// Vertex cycle of the new element (pre-merge node ids, CCW).
    new_cycle: Vec<usize>,
}

/// Relative tolerance used for the on-hull tests, wider than the node-merge
/// tolerance to absorb projection rounding.
fn hull_tol(mesh: &PolyMesh) -> f64 {
    10.0 * mesh.merge_tol()
}

fn build_plan(
    mesh: &PolyMesh,
    domain: &DomainSpec,
    node: usize,
    adjacency: &[Vec<usize>],
) -> Option<CoarsenPlan> {
    if node >= mesh.n_nodes() {
        return None;
    }
    let patch = adjacency[node].clone();
    if patch.len() < 2 {
        return None;
    }

    // Patch nodes and the convex hull over them.
    let mut patch_nodes: Vec<usize> = patch.iter().flat_map(|&e| mesh.elements[e].clone()).collect();
    patch_nodes.sort_unstable();
    patch_nodes.dedup();
    let hull = convex_hull(&patch_nodes.iter().map(|&v| mesh.nodes[v]).collect::<Vec<_>>());
    if hull.len() < 3 {
        return None;
    }
    let tol = hull_tol(mesh);

    // (a) The hull must stay inside the domain: no vertex outside, no edge
    // crossing the outline, no edge midpoint outside.
    let m = hull.len();
    let outline = &domain.outline;
    for i in 0..m {
        if locate_point(outline, hull[i], tol) == PointLocation::Outside {
            return None;
        }
        let a = hull[i];
        let b = hull[(i + 1) % m];
        if locate_point(outline, a.midpoint(b), tol) == PointLocation::Outside {
            return None;
        }
        for j in 0..outline.len() {
            if segments_cross(a, b, outline[j], outline[(j + 1) % outline.len()]) {
                return None;
            }
        }
    }
    // (b) No outline vertex strictly inside the hull (re-entrant corners in
    // particular must stay on the boundary of any merged element).
    for v in outline {
        if locate_point(&hull, *v, tol) == PointLocation::Inside {
            return None;
        }
    }

    // Ring-1 elements: sharing at least one node with the patch.
    let mut ring1: Vec<usize> = patch_nodes
        .iter()
        .flat_map(|&v| adjacency[v].clone())
        .filter(|e| !patch.contains(e))
        .collect();
    ring1.sort_unstable();
    ring1.dedup();

    // Usage of nodes by surviving (non-patch) elements.
    let mut survivor_usage: HashMap<usize, usize> = HashMap::new();
    for &e in &ring1 {
        for &v in &mesh.elements[e] {
            *survivor_usage.entry(v).or_insert(0) += 1;
        }
    }

    // Nodes strictly inside the hull: patch-only nodes are deleted with the
    // patch; nodes used by survivors are projected onto the hull polyline.
    let mut relevant: Vec<usize> = patch_nodes.clone();
    relevant.extend(survivor_usage.keys().cloned());
    relevant.sort_unstable();
    relevant.dedup();

    let project = |p: Point2| -> Point2 {
        let mut best = nearest_point_on_segment(p, hull[0], hull[1]);
        let mut best_d = p.dist(best);
        for i in 1..m {
            let q = nearest_point_on_segment(p, hull[i], hull[(i + 1) % m]);
            let d = p.dist(q);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    };
    let on_hull = |p: Point2| -> bool {
        (0..m).any(|i| dist_point_segment(p, hull[i], hull[(i + 1) % m]) <= tol)
    };

    let mut moves: Vec<(usize, Point2)> = Vec::new();
    let mut deletions = 0usize;
    for &v in &relevant {
        let p = mesh.nodes[v];
        if on_hull(p) {
            continue;
        }
        if locate_point(&hull, p, tol) == PointLocation::Inside {
            if survivor_usage.contains_key(&v) {
                moves.push((v, project(p)));
            } else {
                deletions += 1;
            }
        }
    }

    // Final positions of every relevant node.
    let moved: HashMap<usize, Point2> = moves.iter().cloned().collect();
    let final_pos =
        |v: usize| -> Point2 { moved.get(&v).cloned().unwrap_or(mesh.nodes[v]) };

    // Candidate members of the new cycle: every relevant node now on the
    // hull boundary that is either used by a survivor, coincides with an
    // outline vertex (segment endpoints must stay mesh nodes), or sits at a
    // hull vertex.
    let is_outline_vertex = |p: Point2| outline.iter().any(|q| q.dist(p) <= tol);
    let hull_vertex_of = |p: Point2| hull.iter().position(|q| q.dist(p) <= tol);
    let mut members: Vec<(usize, usize, f64)> = Vec::new(); // (edge, node, t)
    for &v in &relevant {
        let p = final_pos(v);
        if !on_hull(p) {
            continue;
        }
        let keep = survivor_usage.contains_key(&v)
            || hull_vertex_of(p).is_some()
            || is_outline_vertex(p);
        if !keep {
            if patch_nodes.binary_search(&v).is_ok() {
                deletions += 1;
            }
            continue;
        }
        // Locate (edge, t) along the hull, folding t=1 onto the next edge.
        let mut best = (0usize, 0.0f64, f64::INFINITY);
        for i in 0..m {
            let d = dist_point_segment(p, hull[i], hull[(i + 1) % m]);
            if d < best.2 {
                let t = project_parameter(p, hull[i], hull[(i + 1) % m]).clamp(0.0, 1.0);
                best = (i, t, d);
            }
        }
        let (mut edge, mut t, _) = best;
        let len = hull[edge].dist(hull[(edge + 1) % m]);
        if (1.0 - t) * len <= tol {
            edge = (edge + 1) % m;
            t = 0.0;
        }
        members.push((edge, v, t));
    }
    members.sort_by(|a, b| (a.0, a.2, a.1).partial_cmp(&(b.0, b.2, b.1)).unwrap());

    // Merge members that landed on (nearly) the same point. The tolerance is
    // local (a small fraction of the mean hull edge) so straightening cannot
    // leave sliver edges on the merged boundary.
    let perimeter: f64 = (0..m).map(|i| hull[i].dist(hull[(i + 1) % m])).sum();
    let member_tol = (1e-3 * perimeter / m as f64).max(mesh.merge_tol());
    // Only projected nodes may merge at the local tolerance (their position
    // is ours to choose); merging two original nodes would silently move
    // pre-existing geometry. Original pairs still merge at the global node
    // tolerance.
    let mut merges: Vec<(usize, usize)> = Vec::new();
    let mut new_cycle: Vec<usize> = Vec::new();
    let merge_pair = |a: usize, b: usize, dist: f64| -> Option<(usize, usize)> {
        // Returns (dup, survivor).
        let a_moved = moved.contains_key(&a);
        let b_moved = moved.contains_key(&b);
        if dist <= mesh.merge_tol() {
            return Some(if a < b { (b, a) } else { (a, b) });
        }
        if dist > member_tol {
            return None;
        }
        match (a_moved, b_moved) {
            (true, true) => Some(if a < b { (b, a) } else { (a, b) }),
            (true, false) => Some((a, b)),
            (false, true) => Some((b, a)),
            (false, false) => None,
        }
    };
    for &(_, v, _) in &members {
        let p = final_pos(v);
        if let Some(&prev) = new_cycle.last() {
            if let Some((dup, survivor)) = merge_pair(prev, v, final_pos(prev).dist(p)) {
                *new_cycle.last_mut().unwrap() = survivor;
                merges.push((dup, survivor));
                deletions += 1;
                continue;
            }
        }
        new_cycle.push(v);
    }
    while new_cycle.len() > 1 {
        let first = new_cycle[0];
        let last = *new_cycle.last().unwrap();
        if let Some((dup, survivor)) =
            merge_pair(first, last, final_pos(first).dist(final_pos(last)))
        {
            new_cycle.pop();
            new_cycle[0] = survivor;
            merges.push((dup, survivor));
            deletions += 1;
        } else {
            break;
        }
    }
    if new_cycle.len() < 3 {
        return None;
    }
    // The central node always disappears; insist on net node reduction so
    // every successful coarsening strictly shrinks the mesh.
    if deletions == 0 {
        return None;
    }

    // Validate straightened ring-1 geometry without touching the mesh.
    let merged_id = |v: usize| -> usize {
        merges.iter().find(|&&(dup, _)| dup == v).map_or(v, |&(_, s)| s)
    };
    let mut area_before = 0.0;
    for &e in patch.iter().chain(&ring1) {
        area_before += signed_area(&mesh.element_polygon(e));
    }
    let mut area_after = 0.0;
    let new_poly: Vec<Point2> = new_cycle.iter().map(|&v| final_pos(v)).collect();
    if signed_area(&new_poly) <= 0.0 || !is_simple_polygon(&new_poly, mesh.merge_tol()) {
        return None;
    }
    area_after += signed_area(&new_poly);
    for &e in &ring1 {
        let mut cycle: Vec<usize> = mesh.elements[e].iter().map(|&v| merged_id(v)).collect();
        cycle.dedup();
        while cycle.len() > 1 && cycle.first() == cycle.last() {
            cycle.pop();
        }
        if cycle.len() < 3 {
            return None;
        }
        let poly: Vec<Point2> = cycle.iter().map(|&v| final_pos(v)).collect();
        let area = signed_area(&poly);
        if area <= 0.0 || !is_simple_polygon(&poly, mesh.merge_tol()) {
            return None;
        }
        // Straightening must not fold a neighbor across the hull: vertices
        // may only lie on or outside the hull now.
        area_after += area;
    }
    if (area_after - area_before).abs() > 1e-9 * area_before.max(1e-300) {
        return None;
    }

    Some(CoarsenPlan { patch, ring1, moves, merges, new_cycle })
}

/// Geometric eligibility of the patch around `node` for coarsening.
pub fn patch_eligible(mesh: &PolyMesh, domain: &DomainSpec, node: usize) -> bool {
    let adjacency = mesh.node_to_elements();
    build_plan(mesh, domain, node, &adjacency).is_some()
}

/// Eligibility with a caller-provided node-to-element adjacency (the driver
/// tests many candidates against one mesh state).
pub fn patch_eligible_with(
    mesh: &PolyMesh,
    domain: &DomainSpec,
    node: usize,
    adjacency: &[Vec<usize>],
) -> bool {
    build_plan(mesh, domain, node, adjacency).is_some()
}

/// Outcome of a single patch merge.
pub struct CoarsenChange {
    /// Id of the merged element in the updated mesh.
    pub new_elem: usize,
    /// Old element id -> new element id (None for deleted patch elements).
    pub element_map: Vec<Option<usize>>,
    /// Old node id -> new node id (None for deleted nodes).
    pub node_map: Vec<Option<usize>>,
}

/// Coarsen the patch around `node`. Transactional: on failure the mesh is
/// unchanged.
pub fn coarsen_patch(
    mesh: &mut PolyMesh,
    domain: &DomainSpec,
    node: usize,
) -> Result<CoarsenChange> {
    let adjacency = mesh.node_to_elements();
    let plan = build_plan(mesh, domain, node, &adjacency).ok_or_else(|| {
        Error::Coarsening(format!("patch of node {node} is not eligible"))
    })?;
    let snapshot = mesh.clone();
    let area_before = mesh.total_area();

    // Apply straightening moves and merges.
    for &(v, p) in &plan.moves {
        mesh.nodes[v] = p;
    }
    let merged_id = |v: usize| -> usize {
        plan.merges.iter().find(|&&(dup, _)| dup == v).map_or(v, |&(_, s)| s)
    };

    // Rebuild the element list: survivors (with merged ids) plus the new
    // element appended.
    let mut element_map: Vec<Option<usize>> = vec![None; mesh.n_elements()];
    let mut new_elements: Vec<Vec<usize>> = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        if plan.patch.contains(&e) {
            continue;
        }
        let mut cycle: Vec<usize> = mesh.elements[e].iter().map(|&v| merged_id(v)).collect();
        cycle.dedup();
        while cycle.len() > 1 && cycle.first() == cycle.last() {
            cycle.pop();
        }
        element_map[e] = Some(new_elements.len());
        new_elements.push(cycle);
    }
    let new_elem = new_elements.len();
    let mut cycle: Vec<usize> = plan.new_cycle.iter().map(|&v| merged_id(v)).collect();
    cycle.dedup();
    new_elements.push(cycle);
    mesh.elements = new_elements;

    let node_map = mesh.remove_orphan_nodes(&[]);

    // Local conformity repair: a straightened node can land on the interior
    // of another affected element's edge; insert it there. Only elements
    // around the merge and only moved/merged nodes can be involved.
    let new_elem_nodes: Vec<usize> = mesh.elements[new_elem].clone();
    let movers: Vec<usize> = plan
        .moves
        .iter()
        .map(|&(v, _)| v)
        .chain(plan.merges.iter().map(|&(_, s)| s))
        .filter_map(|v| node_map.get(v).copied().flatten())
        .collect();
    let mut affected: Vec<usize> = plan
        .ring1
        .iter()
        .filter_map(|&e| element_map[e])
        .chain(std::iter::once(new_elem))
        .collect();
    affected.sort_unstable();
    affected.dedup();
    let mut candidates: Vec<usize> = movers.clone();
    candidates.extend(new_elem_nodes);
    candidates.sort_unstable();
    candidates.dedup();
    let tol = mesh.merge_tol();
    for &e in &affected {
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
            for &w in &candidates {
                if w == va || w == vb || cycle.contains(&w) {
                    continue;
                }
                let p = mesh.nodes[w];
                if crate::geometry::dist_point_segment(p, a, b) <= tol
                    && p.dist(a) > tol
                    && p.dist(b) > tol
                {
                    on_edge.push((crate::geometry::project_parameter(p, a, b), w));
                }
            }
            on_edge.sort_by(|x, y| x.partial_cmp(y).unwrap());
            rebuilt.extend(on_edge.into_iter().map(|(_, v)| v));
        }
        mesh.elements[e] = rebuilt;
    }

    // Global safety net: tiling must be preserved exactly.
    let area_after = mesh.total_area();
    let ok = (area_after - area_before).abs() <= 1e-9 * area_before.max(1e-300)
        && mesh.nodes.len() < snapshot.nodes.len()
        && mesh.elements.iter().all(|c| c.len() >= 3);
    if !ok {
        *mesh = snapshot;
        return Err(Error::Coarsening(format!(
            "straightening around node {node} broke the tiling"
        )));
    }
    Ok(CoarsenChange { new_elem, element_map, node_map })
}

/// Outcome of a coarsening batch.
pub struct BatchOutcome {
    /// Number of patches actually merged.
    pub coarsened: usize,
    /// Element map from the original mesh to the final mesh.
    pub element_map: Vec<Option<usize>>,
}

/// Coarsen the patches of `nodes` in the given order. Patches overlapping an
/// element already produced or consumed by this batch are skipped, as are
/// patches that fail the eligibility re-check on the current mesh.
pub fn coarsen_batch(mesh: &mut PolyMesh, domain: &DomainSpec, nodes: &[usize]) -> BatchOutcome {
    let n0 = mesh.n_elements();
    // current element id -> original id (usize::MAX marks merged elements).
    let mut origin: Vec<usize> = (0..n0).collect();
    let mut node_ids: Vec<Option<usize>> = nodes.iter().map(|&v| Some(v)).collect();
    let mut coarsened = 0usize;

    for k in 0..node_ids.len() {
        let Some(node) = node_ids[k] else { continue };
        if node >= mesh.n_nodes() {
            continue;
        }
        // Skip patches touching an element created by this batch.
        let patch = mesh.node_patch(node);
        if patch.iter().any(|&e| origin[e] == usize::MAX) {
            continue;
        }
        match coarsen_patch(mesh, domain, node) {
            Ok(change) => {
                coarsened += 1;
                // Update origin tracking and pending node ids.
                let mut new_origin = vec![usize::MAX; mesh.n_elements()];
                for (old, &o) in origin.iter().enumerate() {
                    if let Some(new) = change.element_map[old] {
                        new_origin[new] = o;
                    }
                }
                origin = new_origin;
                for slot in node_ids.iter_mut().skip(k + 1) {
                    *slot = slot.and_then(|v| change.node_map[v]);
                }
            }
            Err(_) => continue,
        }
    }

    // Merging adjacent patches across iterations strands hanging nodes on
    // straight shared edges; drop the ones that no longer affect geometry,
    // then run one global conformity repair for anything the local repairs
    // missed.
    if coarsened > 0 {
        mesh.prune_redundant_nodes();
        mesh.heal_hanging_nodes();
    }

    // Original element id -> final id for the driver's bookkeeping.
    let mut element_map = vec![None; n0];
    for (cur, &o) in origin.iter().enumerate() {
        if o != usize::MAX {
            element_map[o] = Some(cur);
        }
    }
    BatchOutcome { coarsened, element_map }
}

/// The convex hull area of the patch around `node` (diagnostic).
pub fn patch_hull_area(mesh: &PolyMesh, node: usize) -> Option<f64> {
    let patch = mesh.node_patch(node);
    if patch.is_empty() {
        return None;
    }
    let mut nodes: Vec<usize> = patch.iter().flat_map(|&e| mesh.elements[e].clone()).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let hull = convex_hull(&nodes.iter().map(|&v| mesh.nodes[v]).collect::<Vec<_>>());
    if hull.len() < 3 {
        return None;
    }
    Some(signed_area(&hull))
}

/// True when every vertex of `poly` turns weakly in one direction (used in
/// tests to recognize convex merged elements, hanging nodes allowed).
pub fn is_weakly_convex(poly: &[Point2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        cross(a, b, c) >= -tol * a.dist(b) * b.dist(c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryCondition, BoundarySegment};
    use crate::meshgen::{generate_mesh, MeshMode};
    use approx::assert_relative_eq;

    fn square_domain(k: f64) -> DomainSpec {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(k, 0.0),
            Point2::new(k, k),
            Point2::new(0.0, k),
        ];
        let segments = (0..4)
            .map(|i| BoundarySegment::new(pts[i], pts[(i + 1) % 4], BoundaryCondition::Free))
            .collect();
        DomainSpec::new(pts, segments).unwrap()
    }

    fn l_domain() -> DomainSpec {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.25),
            Point2::new(0.25, 0.25),
            Point2::new(0.25, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let segments = (0..6)
            .map(|i| BoundarySegment::new(pts[i], pts[(i + 1) % 6], BoundaryCondition::Free))
            .collect();
        DomainSpec::new(pts, segments).unwrap()
    }

    /// Structured k x k mesh of the unit square via the generator.
    fn grid(k: usize) -> (DomainSpec, PolyMesh) {
        let domain = square_domain(1.0);
        let mesh = generate_mesh(&domain, k * k, MeshMode::Structured, 0).unwrap();
        assert_eq!(mesh.n_elements(), k * k);
        (domain, mesh)
    }

    fn node_at(mesh: &PolyMesh, x: f64, y: f64) -> usize {
        (0..mesh.n_nodes())
            .find(|&i| mesh.nodes[i].dist(Point2::new(x, y)) < 1e-9)
            .expect("node not found")
    }

    #[test]
    fn four_quads_merge_into_one() {
        let (domain, mut mesh) = grid(2);
        let center = node_at(&mesh, 0.5, 0.5);
        assert!(patch_eligible(&mesh, &domain, center));
        let nodes_before = mesh.n_nodes();
        let change = coarsen_patch(&mut mesh, &domain, center).unwrap();
        assert_eq!(mesh.n_elements(), 1);
        assert_relative_eq!(mesh.element_area(change.new_elem).unwrap(), 1.0, epsilon = 1e-12);
        assert!(mesh.n_nodes() < nodes_before);
        assert!(mesh.check_conformity().is_empty());
    }

    #[test]
    fn interior_patch_of_4x4_grid() {
        let (domain, mut mesh) = grid(4);
        let center = node_at(&mesh, 0.25, 0.25);
        let before_elems = mesh.n_elements();
        let before_area = mesh.total_area();
        let change = coarsen_patch(&mut mesh, &domain, center).unwrap();
        assert_eq!(mesh.n_elements(), before_elems - 3);
        assert_relative_eq!(mesh.total_area(), before_area, max_relative = 1e-12);
        assert!(mesh.check_conformity().is_empty());
        // Merged element covers [0, 0.5]^2 and keeps the retained mid-edge
        // nodes shared with its neighbors on its boundary.
        assert_relative_eq!(mesh.element_area(change.new_elem).unwrap(), 0.25, epsilon = 1e-12);
        assert!(mesh.elements[change.new_elem].len() >= 4);
    }

    #[test]
    fn hull_across_reentrant_corner_is_ineligible() {
        let domain = l_domain();
        let mesh = generate_mesh(&domain, 64, MeshMode::Structured, 0).unwrap();
        // Find the node closest to the re-entrant corner.
        let corner = Point2::new(0.25, 0.25);
        let node = (0..mesh.n_nodes())
            .min_by(|&a, &b| {
                mesh.nodes[a]
                    .dist(corner)
                    .partial_cmp(&mesh.nodes[b].dist(corner))
                    .unwrap()
            })
            .unwrap();
        // The patch around the corner node spans the notch; merging it would
        // swallow the corner.
        if mesh.node_patch(node).len() >= 2 {
            assert!(!patch_eligible(&mesh, &domain, node));
        }
    }

    #[test]
    fn straight_boundary_patch_is_eligible() {
        let (domain, mut mesh) = grid(4);
        // Mid-edge node on the bottom boundary.
        let node = node_at(&mesh, 0.5, 0.0);
        assert!(patch_eligible(&mesh, &domain, node));
        let area = mesh.total_area();
        coarsen_patch(&mut mesh, &domain, node).unwrap();
        assert_relative_eq!(mesh.total_area(), area, max_relative = 1e-12);
        assert!(mesh.check_conformity().is_empty());
    }

    #[test]
    fn raster_batch_on_4x4_grid() {
        let (domain, mut mesh) = grid(4);
        // All 9 interior nodes in raster order.
        let mut nodes = Vec::new();
        for j in 1..4 {
            for i in 1..4 {
                nodes.push(node_at(&mesh, i as f64 * 0.25, j as f64 * 0.25));
            }
        }
        let outcome = coarsen_batch(&mut mesh, &domain, &nodes);
        // Disjointness leaves exactly the four corner patches merged.
        assert_eq!(outcome.coarsened, 4);
        assert_eq!(mesh.n_elements(), 4);
        assert!(mesh.check_conformity().is_empty());
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn overlapping_patches_skip_second() {
        let (domain, mut mesh) = grid(4);
        let a = node_at(&mesh, 0.25, 0.25);
        let b = node_at(&mesh, 0.5, 0.25); // shares two elements with a
        let outcome = coarsen_batch(&mut mesh, &domain, &[a, b]);
        assert_eq!(outcome.coarsened, 1);
        assert!(mesh.check_conformity().is_empty());
    }

    #[test]
    fn empty_batch_is_noop() {
        let (domain, mut mesh) = grid(3);
        let before = mesh.elements.clone();
        let outcome = coarsen_batch(&mut mesh, &domain, &[]);
        assert_eq!(outcome.coarsened, 0);
        assert_eq!(mesh.elements, before);
    }

    #[test]
    fn voronoi_patch_merge() {
        let domain = square_domain(1.0);
        let mut mesh = generate_mesh(&domain, 30, MeshMode::Voronoi, 4).unwrap();
        let area = mesh.total_area();
        let adjacency = mesh.node_to_elements();
        // Pick an interior node with a 3-element patch.
        let node = (0..mesh.n_nodes())
            .find(|&v| {
                adjacency[v].len() == 3 && patch_eligible(&mesh, &domain, v)
            })
            .expect("no eligible 3-patch found");
        let elems_before = mesh.n_elements();
        let hull_area = patch_hull_area(&mesh, node).unwrap();
        let patch_area: f64 = mesh
            .node_patch(node)
            .iter()
            .map(|&e| mesh.element_area(e).unwrap())
            .sum();
        assert!(hull_area >= patch_area - 1e-12);
        coarsen_patch(&mut mesh, &domain, node).unwrap();
        assert_eq!(mesh.n_elements(), elems_before - 2);
        assert!(mesh.check_conformity().is_empty());
        assert_relative_eq!(mesh.total_area(), area, max_relative = 1e-9);
    }
}
