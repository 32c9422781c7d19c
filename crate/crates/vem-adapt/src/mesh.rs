//! Polygonal mesh data structure with hanging-node support, conformity
//! checking, boundary tagging and JSON I/O.
//!
//! Elements are stored as CCW vertex-id cycles; adjacency is rebuilt on
//! demand. Hanging nodes are ordinary (collinear) vertices of the elements
//! whose edge they sit on.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    self, bbox, dist_point_segment, is_simple_polygon, project_parameter, signed_area, Point2,
};
use crate::{Error, Result};

/// Relative node-merge tolerance: two nodes closer than this fraction of the
/// domain diameter are considered duplicates.
pub const MERGE_REL_TOL: f64 = 1e-9;

/// Boundary condition attached to an outline segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Prescribed x-displacement, y free.
    DirichletX(f64),
    /// Prescribed y-displacement, x free.
    DirichletY(f64),
    /// Both displacement components prescribed.
    DirichletXY(f64, f64),
    /// Constant traction (tx, ty) per unit length.
    Neumann(f64, f64),
    /// Traction-free, unconstrained.
    Free,
}

impl BoundaryCondition {
    pub fn prescribed(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            BoundaryCondition::DirichletX(v) => (Some(v), None),
            BoundaryCondition::DirichletY(v) => (None, Some(v)),
            BoundaryCondition::DirichletXY(vx, vy) => (Some(vx), Some(vy)),
            _ => (None, None),
        }
    }

    pub fn traction(&self) -> Option<(f64, f64)> {
        match *self {
            BoundaryCondition::Neumann(tx, ty) => Some((tx, ty)),
            _ => None,
        }
    }
}

/// A straight piece of the domain outline carrying one boundary condition.
/// Stacked conditions on the same geometric span (e.g. a traction applied on
/// a horizontally constrained edge) are expressed as two segments with
/// identical endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub start: Point2,
    pub end: Point2,
    pub condition: BoundaryCondition,
}

impl BoundarySegment {
    pub fn new(start: Point2, end: Point2, condition: BoundaryCondition) -> Self {
        BoundarySegment { start, end, condition }
    }

    pub fn length(&self) -> f64 {
        self.start.dist(self.end)
    }

    /// Distance from a point to this segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        dist_point_segment(p, self.start, self.end)
    }
}

/// Problem geometry: a simple CCW outline polygon plus tagged boundary
/// segments covering it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub outline: Vec<Point2>,
    pub segments: Vec<BoundarySegment>,
}

impl DomainSpec {
    pub fn new(outline: Vec<Point2>, segments: Vec<BoundarySegment>) -> Result<Self> {
        if outline.len() < 3 {
            return Err(Error::Precondition("domain outline needs >= 3 vertices".into()));
        }
        if signed_area(&outline) <= 0.0 {
            return Err(Error::Precondition("domain outline must be CCW".into()));
        }
        Ok(DomainSpec { outline, segments })
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.outline)
    }

    pub fn diameter(&self) -> f64 {
        geometry::diameter(&self.outline)
    }

    pub fn merge_tol(&self) -> f64 {
        MERGE_REL_TOL * self.diameter()
    }

    pub fn contains(&self, p: Point2, tol: f64) -> geometry::PointLocation {
        geometry::locate_point(&self.outline, p, tol)
    }
}

/// A single conformity violation; `Display` names the invariant and ids.
#[derive(Debug, Clone, PartialEq)]
pub enum ConformityViolation {
    InvalidNodeRef { elem: usize, node: usize },
    TooFewVertices { elem: usize },
    RepeatedNode { elem: usize, node: usize },
    NotCcw { elem: usize, area: f64 },
    SelfIntersecting { elem: usize },
    NonFiniteNode { node: usize },
    DuplicateNodes { a: usize, b: usize, dist: f64 },
    HangingNodeMissing { elem: usize, node: usize },
}

impl fmt::Display for ConformityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConformityViolation::InvalidNodeRef { elem, node } => {
                write!(f, "element {elem} references missing node {node}")
            }
            ConformityViolation::TooFewVertices { elem } => {
                write!(f, "element {elem} has fewer than 3 vertices")
            }
            ConformityViolation::RepeatedNode { elem, node } => {
                write!(f, "element {elem} repeats node {node} in its cycle")
            }
            ConformityViolation::NotCcw { elem, area } => {
                write!(f, "element {elem} is not CCW (signed area {area})")
            }
            ConformityViolation::SelfIntersecting { elem } => {
                write!(f, "element {elem} cycle is self-intersecting")
            }
            ConformityViolation::NonFiniteNode { node } => {
                write!(f, "node {node} has non-finite coordinates")
            }
            ConformityViolation::DuplicateNodes { a, b, dist } => {
                write!(f, "nodes {a} and {b} closer than merge tolerance (dist {dist})")
            }
            ConformityViolation::HangingNodeMissing { elem, node } => {
                write!(f, "node {node} lies on an edge of element {elem} but is not a vertex of it")
            }
        }
    }
}

/// Conforming polygonal mesh: node coordinates, CCW element cycles, and the
/// original outline segments used for boundary tagging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyMesh {
    pub nodes: Vec<Point2>,
    pub elements: Vec<Vec<usize>>,
    pub boundary: Vec<BoundarySegment>,
}

impl PolyMesh {
    pub fn new(
        nodes: Vec<Point2>,
        elements: Vec<Vec<usize>>,
        boundary: Vec<BoundarySegment>,
    ) -> Self {
        PolyMesh { nodes, elements, boundary }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Characteristic scale: diameter of the boundary outline when present,
    /// otherwise of the node cloud.
    pub fn scale(&self) -> f64 {
        if !self.boundary.is_empty() {
            let pts: Vec<Point2> =
                self.boundary.iter().flat_map(|s| [s.start, s.end]).collect();
            let (lo, hi) = bbox(&pts);
            return lo.dist(hi);
        }
        if self.nodes.is_empty() {
            return 1.0;
        }
        let (lo, hi) = bbox(&self.nodes);
        let d = lo.dist(hi);
        if d > 0.0 {
            d
        } else {
            1.0
        }
    }

    pub fn merge_tol(&self) -> f64 {
        MERGE_REL_TOL * self.scale()
    }

    /// Vertex cycle of an element as coordinates.
    pub fn element_polygon(&self, elem: usize) -> Vec<Point2> {
        self.elements[elem].iter().map(|&v| self.nodes[v]).collect()
    }

    /// Shoelace area of an element; positive by the CCW invariant.
    pub fn element_area(&self, elem: usize) -> Result<f64> {
        let cycle = self
            .elements
            .get(elem)
            .ok_or_else(|| Error::Precondition(format!("element {elem} out of range")))?;
        if cycle.len() < 3 {
            return Err(Error::Topology(format!("element {elem} has fewer than 3 vertices")));
        }
        Ok(signed_area(&self.element_polygon(elem)))
    }

    /// Area-weighted centroid of an element.
    pub fn element_centroid(&self, elem: usize) -> Result<Point2> {
        let area = self.element_area(elem)?;
        if area <= 0.0 {
            return Err(Error::Topology(format!("element {elem} has non-positive area")));
        }
        Ok(geometry::centroid(&self.element_polygon(elem)))
    }

    pub fn element_diameter(&self, elem: usize) -> f64 {
        geometry::diameter(&self.element_polygon(elem))
    }

    /// Sum of element areas.
    pub fn total_area(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| signed_area(&self.element_polygon(e)))
            .sum()
    }

    /// Node-to-element adjacency, rebuilt on demand.
    pub fn node_to_elements(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for (e, cycle) in self.elements.iter().enumerate() {
            for &v in cycle {
                if v < adj.len() {
                    adj[v].push(e);
                }
            }
        }
        adj
    }

    /// All elements whose cycle contains `node` (the coarsening patch).
    pub fn node_patch(&self, node: usize) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, cycle)| cycle.contains(&node))
            .map(|(e, _)| e)
            .collect()
    }

    /// Per-node indices of boundary segments the node lies on (within the
    /// merge tolerance). A node is boundary-tagged iff this list is non-empty.
    pub fn node_boundary_segments(&self) -> Vec<Vec<usize>> {
        let tol = self.merge_tol();
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (i, p) in self.nodes.iter().enumerate() {
            for (s, seg) in self.boundary.iter().enumerate() {
                if seg.distance_to(*p) <= tol {
                    out[i].push(s);
                }
            }
        }
        out
    }

    /// Element boundary edges, as (elem, local edge index, segment index).
    /// An element edge lies on the boundary iff both endpoints and the
    /// midpoint lie on a common outline segment.
    pub fn boundary_edges(&self) -> Vec<(usize, usize, usize)> {
        let tol = self.merge_tol();
        let node_segs = self.node_boundary_segments();
        let mut out = Vec::new();
        for (e, cycle) in self.elements.iter().enumerate() {
            let k = cycle.len();
            for i in 0..k {
                let a = cycle[i];
                let b = cycle[(i + 1) % k];
                let mid = self.nodes[a].midpoint(self.nodes[b]);
                for &s in &node_segs[a] {
                    if node_segs[b].contains(&s) && self.boundary[s].distance_to(mid) <= tol {
                        out.push((e, i, s));
                    }
                }
            }
        }
        out
    }

    /// Diagnostic check of all mesh invariants; empty iff the mesh conforms.
    pub fn check_conformity(&self) -> Vec<ConformityViolation> {
        let mut violations = Vec::new();
        let tol = self.merge_tol();

        for (i, p) in self.nodes.iter().enumerate() {
            if !p.is_finite() {
                violations.push(ConformityViolation::NonFiniteNode { node: i });
            }
        }

        for (e, cycle) in self.elements.iter().enumerate() {
            if cycle.iter().any(|&v| v >= self.n_nodes()) {
                let node = *cycle.iter().find(|&&v| v >= self.n_nodes()).unwrap();
                violations.push(ConformityViolation::InvalidNodeRef { elem: e, node });
                continue;
            }
            if cycle.len() < 3 {
                violations.push(ConformityViolation::TooFewVertices { elem: e });
                continue;
            }
            let mut sorted = cycle.clone();
            sorted.sort_unstable();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                violations.push(ConformityViolation::RepeatedNode { elem: e, node: w[0] });
                continue;
            }
            let poly = self.element_polygon(e);
            let area = signed_area(&poly);
            if area <= 0.0 {
                violations.push(ConformityViolation::NotCcw { elem: e, area });
                continue;
            }
            if !is_simple_polygon(&poly, tol) {
                violations.push(ConformityViolation::SelfIntersecting { elem: e });
            }
        }

        // Duplicate nodes within the merge tolerance, via a uniform grid.
        let grid = NodeGrid::build(&self.nodes, self.scale());
        for i in 0..self.n_nodes() {
            for j in grid.near(self.nodes[i], tol) {
                if j > i && self.nodes[i].dist(self.nodes[j]) < tol {
                    violations.push(ConformityViolation::DuplicateNodes {
                        a: i,
                        b: j,
                        dist: self.nodes[i].dist(self.nodes[j]),
                    });
                }
            }
        }

        // Hanging-node conformity: every node geometrically on an element
        // edge must be a vertex of that element.
        for (e, cycle) in self.elements.iter().enumerate() {
            if cycle.len() < 3 || cycle.iter().any(|&v| v >= self.n_nodes()) {
                continue;
            }
            let k = cycle.len();
            for i in 0..k {
                let a = self.nodes[cycle[i]];
                let b = self.nodes[cycle[(i + 1) % k]];
                for cand in grid.near_segment(a, b, tol) {
                    if cycle.contains(&cand) {
                        continue;
                    }
                    let p = self.nodes[cand];
                    if dist_point_segment(p, a, b) <= tol && p.dist(a) > tol && p.dist(b) > tol {
                        violations.push(ConformityViolation::HangingNodeMissing {
                            elem: e,
                            node: cand,
                        });
                    }
                }
            }
        }

        violations
    }

    /// Insert any node that lies on an element edge (but is missing from the
    /// cycle) into that cycle. Heals tiny asymmetries left by independent
    /// per-cell constructions.
    pub fn heal_hanging_nodes(&mut self) {
        let tol = self.merge_tol();
        let grid = NodeGrid::build(&self.nodes, self.scale());
        let nodes = self.nodes.clone();
        for cycle in self.elements.iter_mut() {
            let mut rebuilt: Vec<usize> = Vec::with_capacity(cycle.len());
            let k = cycle.len();
            for i in 0..k {
                let va = cycle[i];
                let vb = cycle[(i + 1) % k];
                let a = nodes[va];
                let b = nodes[vb];
                rebuilt.push(va);
                let mut on_edge: Vec<(f64, usize)> = Vec::new();
                for cand in grid.near_segment(a, b, tol) {
                    if cand == va || cand == vb || cycle.contains(&cand) {
                        continue;
                    }
                    let p = nodes[cand];
                    if dist_point_segment(p, a, b) <= tol && p.dist(a) > tol && p.dist(b) > tol {
                        on_edge.push((project_parameter(p, a, b), cand));
                    }
                }
                on_edge.sort_by(|x, y| x.partial_cmp(y).unwrap());
                rebuilt.extend(on_edge.into_iter().map(|(_, v)| v));
            }
            *cycle = rebuilt;
        }
    }

    /// Remove hanging nodes that have become redundant: a node that is
    /// collinear between its cycle neighbors in every element using it (and
    /// does not mark a boundary-segment endpoint) can be dropped without
    /// changing any element geometry. Returns the number of nodes removed.
    pub fn prune_redundant_nodes(&mut self) -> usize {
        let tol = self.merge_tol();
        let adjacency = self.node_to_elements();
        // Endpoints of boundary segments must stay mesh nodes.
        let mut protected = vec![false; self.n_nodes()];
        for seg in &self.boundary {
            for node in 0..self.n_nodes() {
                if self.nodes[node].dist(seg.start) <= tol || self.nodes[node].dist(seg.end) <= tol
                {
                    protected[node] = true;
                }
            }
        }
        let mut removable = vec![false; self.n_nodes()];
        'node: for v in 0..self.n_nodes() {
            if protected[v] || adjacency[v].is_empty() {
                continue;
            }
            for &e in &adjacency[v] {
                let cycle = &self.elements[e];
                if cycle.len() <= 3 {
                    continue 'node;
                }
                let k = cycle.iter().position(|&w| w == v).unwrap();
                let prev = self.nodes[cycle[(k + cycle.len() - 1) % cycle.len()]];
                let cur = self.nodes[v];
                let next = self.nodes[cycle[(k + 1) % cycle.len()]];
                // Strict collinearity: the node must sit on the segment
                // between its neighbors.
                if dist_point_segment(cur, prev, next) > tol {
                    continue 'node;
                }
            }
            removable[v] = true;
        }
        let count = removable.iter().filter(|&&r| r).count();
        if count == 0 {
            return 0;
        }
        for cycle in self.elements.iter_mut() {
            cycle.retain(|&v| !removable[v]);
        }
        self.remove_orphan_nodes(&[]);
        count
    }

    /// Remove nodes used by no element, compacting indices. Nodes whose
    /// index appears in `keep` survive regardless. Returns the old-to-new
    /// node index map.
    pub fn remove_orphan_nodes(&mut self, keep: &[usize]) -> Vec<Option<usize>> {
        let mut used = vec![false; self.n_nodes()];
        for cycle in &self.elements {
            for &v in cycle {
                used[v] = true;
            }
        }
        for &v in keep {
            used[v] = true;
        }
        let mut map = vec![None; self.n_nodes()];
        let mut new_nodes = Vec::with_capacity(self.n_nodes());
        for (i, p) in self.nodes.iter().enumerate() {
            if used[i] {
                map[i] = Some(new_nodes.len());
                new_nodes.push(*p);
            }
        }
        for cycle in self.elements.iter_mut() {
            for v in cycle.iter_mut() {
                *v = map[*v].expect("used node must be kept");
            }
        }
        self.nodes = new_nodes;
        map
    }
}

/// Uniform hash grid over node positions for proximity queries.
pub struct NodeGrid {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl NodeGrid {
    pub fn build(nodes: &[Point2], scale: f64) -> Self {
        let n = nodes.len().max(1);
        let cell = (scale / (n as f64).sqrt()).max(scale * 1e-12).max(1e-300);
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in nodes.iter().enumerate() {
            map.entry(Self::key(cell, *p)).or_default().push(i);
        }
        NodeGrid { cell, map }
    }

    fn key(cell: f64, p: Point2) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Candidate node ids within `r` of `p` (superset; caller re-checks).
    pub fn near(&self, p: Point2, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r_cells = (r / self.cell).ceil() as i64 + 1;
        let (kx, ky) = Self::key(self.cell, p);
        for dx in -r_cells..=r_cells {
            for dy in -r_cells..=r_cells {
                if let Some(v) = self.map.get(&(kx + dx, ky + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out
    }

    /// Candidate node ids within `r` of segment ab (superset).
    pub fn near_segment(&self, a: Point2, b: Point2, r: f64) -> Vec<usize> {
        let lo = Point2::new(a.x.min(b.x) - r, a.y.min(b.y) - r);
        let hi = Point2::new(a.x.max(b.x) + r, a.y.max(b.y) + r);
        let (kx0, ky0) = Self::key(self.cell, lo);
        let (kx1, ky1) = Self::key(self.cell, hi);
        let mut out = Vec::new();
        for kx in kx0..=kx1 {
            for ky in ky0..=ky1 {
                if let Some(v) = self.map.get(&(kx, ky)) {
                    for &i in v {
                        out.push(i);
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// JSON I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MeshFile {
    nodes: Vec<[f64; 2]>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<BoundaryEntry>,
}

#[derive(Serialize, Deserialize)]
struct BoundaryEntry {
    segment: [[f64; 2]; 2],
    tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<[Option<f64>; 2]>,
}

fn condition_to_entry(seg: &BoundarySegment) -> BoundaryEntry {
    let (tag, value) = match seg.condition {
        BoundaryCondition::DirichletX(v) => ("DirichletX", Some([Some(v), None])),
        BoundaryCondition::DirichletY(v) => ("DirichletY", Some([None, Some(v)])),
        BoundaryCondition::DirichletXY(vx, vy) => ("DirichletXY", Some([Some(vx), Some(vy)])),
        BoundaryCondition::Neumann(tx, ty) => ("Neumann", Some([Some(tx), Some(ty)])),
        BoundaryCondition::Free => ("Free", None),
    };
    BoundaryEntry {
        segment: [[seg.start.x, seg.start.y], [seg.end.x, seg.end.y]],
        tag: tag.to_string(),
        value,
    }
}

fn entry_to_condition(entry: &BoundaryEntry) -> Result<BoundarySegment> {
    let v = entry.value.unwrap_or([None, None]);
    let need = |c: Option<f64>, what: &str| {
        c.ok_or_else(|| Error::Parse(format!("boundary tag {} requires {what}", entry.tag)))
    };
    let condition = match entry.tag.as_str() {
        "DirichletX" => BoundaryCondition::DirichletX(need(v[0], "value[0]")?),
        "DirichletY" => BoundaryCondition::DirichletY(need(v[1], "value[1]")?),
        "DirichletXY" => BoundaryCondition::DirichletXY(need(v[0], "value[0]")?, need(v[1], "value[1]")?),
        "Neumann" => BoundaryCondition::Neumann(need(v[0], "value[0]")?, need(v[1], "value[1]")?),
        "Free" => BoundaryCondition::Free,
        other => return Err(Error::Parse(format!("unknown boundary tag '{other}'"))),
    };
    Ok(BoundarySegment::new(
        Point2::new(entry.segment[0][0], entry.segment[0][1]),
        Point2::new(entry.segment[1][0], entry.segment[1][1]),
        condition,
    ))
}

/// Serialize a mesh to the JSON interchange format.
pub fn write_mesh(mesh: &PolyMesh, path: &Path) -> Result<()> {
    let file = MeshFile {
        nodes: mesh.nodes.iter().map(|p| [p.x, p.y]).collect(),
        elements: mesh.elements.clone(),
        boundary: mesh.boundary.iter().map(condition_to_entry).collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("serialize mesh: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Read a mesh from the JSON interchange format, validating references.
pub fn read_mesh(path: &Path) -> Result<PolyMesh> {
    let text = std::fs::read_to_string(path)?;
    read_mesh_str(&text)
}

pub fn read_mesh_str(text: &str) -> Result<PolyMesh> {
    let file: MeshFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("mesh file: {e} (line {}, column {})", e.line(), e.column())))?;
    if file.elements.is_empty() {
        return Err(Error::Parse("mesh must contain >=1 element".into()));
    }
    let n = file.nodes.len();
    for (e, cycle) in file.elements.iter().enumerate() {
        if cycle.len() < 3 {
            return Err(Error::Parse(format!("element {e} has fewer than 3 vertices")));
        }
        for &v in cycle {
            if v >= n {
                return Err(Error::Parse(format!("element {e} references missing node {v}")));
            }
        }
    }
    let nodes: Vec<Point2> = file
        .nodes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = Point2::new(c[0], c[1]);
            if !p.is_finite() {
                return Err(Error::Parse(format!("node {i} has non-finite coordinates")));
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let boundary: Vec<BoundarySegment> =
        file.boundary.iter().map(entry_to_condition).collect::<Result<_>>()?;
    Ok(PolyMesh::new(nodes, file.elements, boundary))
}
