//! Initial mesh generation: structured or random seed sets, bounded Voronoi
//! tessellation by half-plane clipping, and Lloyd smoothing toward
//! approximately equal cell areas.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    bbox, centroid, cut_polygon_components, dedup_cycle, locate_point, signed_area, Point2,
    PointLocation,
};
use crate::mesh::{DomainSpec, PolyMesh};
use crate::{Error, Result};

/// Mesh family: structured (grid seeds) or unstructured Voronoi (random
/// seeds). The refinement/coarsening planning constants depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshMode {
    Structured,
    Voronoi,
}

/// A set of Voronoi seed points inside the domain.
#[derive(Debug, Clone)]
pub struct SeedSet {
    pub points: Vec<Point2>,
    pub rng_seed: u64,
}

const MAX_SEEDS: usize = 1_000_000;

/// Generate seed points. Structured mode tiles the bounding box so that
/// roughly `n` tile centers fall inside the domain; Voronoi mode samples `n`
/// uniform points inside the domain, deterministically from `rng_seed`.
pub fn generate_seeds(
    domain: &DomainSpec,
    n: usize,
    mode: MeshMode,
    rng_seed: u64,
) -> Result<SeedSet> {
    if n == 0 {
        return Err(Error::Precondition("seed count must be >= 1".into()));
    }
    if n > MAX_SEEDS {
        return Err(Error::Capacity(format!("seed count {n} exceeds {MAX_SEEDS}")));
    }
    let (lo, hi) = bbox(&domain.outline);
    let w = hi.x - lo.x;
    let h = hi.y - lo.y;
    let points = match mode {
        MeshMode::Structured => {
            // Scale the tile count so that roughly n centers land inside the
            // domain, with the grid shape matching the bbox aspect ratio.
            let m = n as f64 * (w * h) / domain.area();
            let ny = ((m * h / w).sqrt().round() as usize).max(1);
            let nx = ((m / ny as f64).round() as usize).max(1);
            let mut pts = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let p = Point2::new(
                        lo.x + (i as f64 + 0.5) * w / nx as f64,
                        lo.y + (j as f64 + 0.5) * h / ny as f64,
                    );
                    if domain.contains(p, domain.merge_tol()) == PointLocation::Inside {
                        pts.push(p);
                    }
                }
            }
            pts
        }
        MeshMode::Voronoi => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let tol = domain.merge_tol();
            let mut pts: Vec<Point2> = Vec::with_capacity(n);
            let mut guard = 0usize;
            while pts.len() < n {
                guard += 1;
                if guard > 1000 * n + 10_000 {
                    return Err(Error::Degenerate(
                        "rejection sampling failed: degenerate domain".into(),
                    ));
                }
                let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                if domain.contains(p, tol) != PointLocation::Inside {
                    continue;
                }
                if pts.iter().any(|q| q.dist(p) <= tol) {
                    continue;
                }
                pts.push(p);
            }
            pts
        }
    };
    if points.is_empty() {
        return Err(Error::Degenerate("no seeds fell inside the domain".into()));
    }
    Ok(SeedSet { points, rng_seed })
}

/// Compute the clipped Voronoi cell polygons of `seeds` inside the container
/// polygon. Each cell starts from the container and is cut by the
/// perpendicular bisectors against nearby seeds; when a cut disconnects the
/// (possibly non-convex) remainder, the component containing the seed is
/// kept.
pub fn voronoi_cell_polygons(container: &[Point2], seeds: &[Point2]) -> Result<Vec<Vec<Point2>>> {
    let (lo, hi) = bbox(container);
    let diam = lo.dist(hi);
    let tol = crate::mesh::MERGE_REL_TOL * diam;

    // Uniform grid over seeds for candidate search by expanding rings.
    let n = seeds.len();
    let cell_size = ((hi.x - lo.x).max(hi.y - lo.y) / (n as f64).sqrt().max(1.0)).max(1e-12);
    let key = |p: Point2| -> (i64, i64) {
        (((p.x - lo.x) / cell_size).floor() as i64, ((p.y - lo.y) / cell_size).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in seeds.iter().enumerate() {
        grid.entry(key(*s)).or_default().push(i);
    }

    let mut cells = Vec::with_capacity(n);
    for (i, &p) in seeds.iter().enumerate() {
        let mut cell = container.to_vec();
        let mut max_r2 = cell.iter().map(|v| v.dist2(p)).fold(0.0, f64::max);
        let (kx, ky) = key(p);
        let max_ring = ((hi.x - lo.x).max(hi.y - lo.y) / cell_size) as i64 + 2;
        for ring in 0..=max_ring {
            // Smallest possible distance from p to a seed in this ring.
            let ring_min = (ring - 1).max(0) as f64 * cell_size;
            if ring_min * ring_min > 4.0 * max_r2 {
                break;
            }
            let mut ring_cands: Vec<(f64, usize)> = Vec::new();
            let visit = |cx: i64, cy: i64, out: &mut Vec<(f64, usize)>| {
                if let Some(list) = grid.get(&(cx, cy)) {
                    for &j in list {
                        if j != i {
                            out.push((seeds[j].dist2(p), j));
                        }
                    }
                }
            };
            if ring == 0 {
                visit(kx, ky, &mut ring_cands);
            } else {
                for dx in -ring..=ring {
                    visit(kx + dx, ky - ring, &mut ring_cands);
                    visit(kx + dx, ky + ring, &mut ring_cands);
                }
                for dy in (-ring + 1)..ring {
                    visit(kx - ring, ky + dy, &mut ring_cands);
                    visit(kx + ring, ky + dy, &mut ring_cands);
                }
            }
            ring_cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (d2, j) in ring_cands {
                if d2 > 4.0 * max_r2 {
                    continue;
                }
                if d2 <= tol * tol {
                    return Err(Error::Degenerate(format!(
                        "seeds {i} and {j} closer than the merge tolerance"
                    )));
                }
                // Cut by the bisector, keeping the seed's side and component.
                let q = seeds[j];
                let mid = p.midpoint(q);
                let nrm = (q.x - p.x, q.y - p.y);
                let parts = cut_polygon_components(&cell, mid, nrm);
                cell = parts
                    .into_iter()
                    .filter(|part| signed_area(part) > tol * tol)
                    .find(|part| locate_point(part, p, tol) != PointLocation::Outside)
                    .ok_or_else(|| {
                        Error::Degenerate(format!("cell of seed {i} vanished while cutting"))
                    })?;
                max_r2 = cell.iter().map(|v| v.dist2(p)).fold(0.0, f64::max);
            }
        }
        cells.push(dedup_cycle(&cell, tol));
    }
    Ok(cells)
}

/// Incremental node welder: coincident points (within tol) map to one node id.
pub struct Welder {
    pub nodes: Vec<Point2>,
    tol: f64,
    cell: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl Welder {
    pub fn new(tol: f64) -> Self {
        Welder { nodes: Vec::new(), tol, cell: (tol * 1024.0).max(1e-300), grid: HashMap::new() }
    }

    /// Seed the welder with existing nodes (ids preserved).
    pub fn with_nodes(nodes: Vec<Point2>, tol: f64) -> Self {
        let mut w = Welder::new(tol);
        for p in nodes {
            let id = w.nodes.len();
            w.grid.entry(w.key(p)).or_default().push(id);
            w.nodes.push(p);
        }
        w
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    /// Return the nearest node within tol, or insert `p` as a new node.
    pub fn add_or_get(&mut self, p: Point2) -> usize {
        let (kx, ky) = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.grid.get(&(kx + dx, ky + dy)) {
                    for &i in list {
                        let d2 = self.nodes[i].dist2(p);
                        if d2 <= self.tol * self.tol
                            && best.map_or(true, |(bd, bi)| (d2, i) < (bd, bi))
                        {
                            best = Some((d2, i));
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        let id = self.nodes.len();
        self.grid.entry((kx, ky)).or_default().push(id);
        self.nodes.push(p);
        id
    }
}

/// Weld cell polygons into a conforming mesh: merge coincident vertices,
/// then insert hanging nodes.
pub fn weld_cells(
    cells: &[Vec<Point2>],
    boundary: Vec<crate::mesh::BoundarySegment>,
    scale: f64,
) -> PolyMesh {
    let tol = crate::mesh::MERGE_REL_TOL * scale;
    let mut welder = Welder::new(tol);
    let mut elements: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut cycle: Vec<usize> = cell.iter().map(|&p| welder.add_or_get(p)).collect();
        cycle.dedup();
        while cycle.len() > 1 && cycle.first() == cycle.last() {
            cycle.pop();
        }
        elements.push(cycle);
    }
    let mut mesh = PolyMesh::new(welder.nodes, elements, boundary);
    mesh.heal_hanging_nodes();
    mesh
}

/// Bounded Voronoi tessellation of the domain: one conforming element per
/// seed.
pub fn bounded_voronoi(domain: &DomainSpec, seeds: &SeedSet) -> Result<PolyMesh> {
    let cells = voronoi_cell_polygons(&domain.outline, &seeds.points)?;
    Ok(weld_cells(&cells, domain.segments.clone(), domain.diameter()))
}

/// Lloyd smoothing: iteratively move each seed to the centroid of its
/// clipped cell. Stops when the largest displacement falls below
/// `tol * diam(domain)` or after `max_iter` iterations.
pub fn lloyd_smooth(
    domain: &DomainSpec,
    seeds: &SeedSet,
    max_iter: usize,
    tol: f64,
) -> Result<SeedSet> {
    let mut pts = seeds.points.clone();
    let diam = domain.diameter();
    let merge = domain.merge_tol();
    for _ in 0..max_iter {
        let cells = voronoi_cell_polygons(&domain.outline, &pts)?;
        let mut max_disp = 0.0f64;
        let mut next = Vec::with_capacity(pts.len());
        for (i, cell) in cells.iter().enumerate() {
            let c = centroid(cell);
            // A strongly non-convex clipped cell can have its centroid
            // outside the domain; keep the old seed in that case.
            if domain.contains(c, merge) == PointLocation::Inside {
                max_disp = max_disp.max(c.dist(pts[i]));
                next.push(c);
            } else {
                next.push(pts[i]);
            }
        }
        pts = next;
        if max_disp < tol * diam {
            break;
        }
    }
    Ok(SeedSet { points: pts, rng_seed: seeds.rng_seed })
}

/// Default Lloyd parameters for initial mesh generation.
pub const LLOYD_MAX_ITER: usize = 100;
pub const LLOYD_TOL: f64 = 1e-3;

/// Full generation pipeline: seeds, smoothing (Voronoi mode only; structured
/// grids are already centroidal), tessellation.
pub fn generate_mesh(
    domain: &DomainSpec,
    n: usize,
    mode: MeshMode,
    rng_seed: u64,
) -> Result<PolyMesh> {
    let seeds = generate_seeds(domain, n, mode, rng_seed)?;
    let seeds = match mode {
        MeshMode::Structured => seeds,
        MeshMode::Voronoi => lloyd_smooth(domain, &seeds, LLOYD_MAX_ITER, LLOYD_TOL)?,
    };
    bounded_voronoi(domain, &seeds)
}

/// Coefficient of variation of element areas (diagnostic for smoothing).
pub fn area_cov(mesh: &PolyMesh) -> f64 {
    let areas: Vec<f64> = (0..mesh.n_elements())
        .map(|e| signed_area(&mesh.element_polygon(e)))
        .collect();
    let n = areas.len() as f64;
    let mean = areas.iter().sum::<f64>() / n;
    let var = areas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}
