//! Global assembly and solution of the discrete elasticity system: Dirichlet
//! elimination with prescribed values, consistent Neumann edge loads,
//! first-order body-force lumping, and a direct skyline LDL^T solve with
//! reverse Cuthill-McKee ordering and iterative refinement.

use nalgebra::DVector;

use crate::geometry::Point2;
use crate::material::{constitutive_matrix, MaterialParams};
use crate::mesh::{DomainSpec, PolyMesh};
use crate::vem::{element_matrices, ElementStiffness};
use crate::{Error, Result};

/// Body force density over the domain.
pub enum BodyForce {
    None,
    Constant([f64; 2]),
    Field(Box<dyn Fn(Point2) -> [f64; 2] + Send + Sync>),
}

impl BodyForce {
    fn eval(&self, p: Point2) -> [f64; 2] {
        match self {
            BodyForce::None => [0.0, 0.0],
            BodyForce::Constant(b) => *b,
            BodyForce::Field(f) => f(p),
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, BodyForce::None)
    }
}

/// A boundary-value problem: geometry with tagged segments, body force, and
/// an optional position-dependent override for Dirichlet values (the
/// constrained components still come from the segment tags).
pub struct Problem {
    pub domain: DomainSpec,
    pub body_force: BodyForce,
    pub dirichlet_field: Option<Box<dyn Fn(Point2) -> [f64; 2] + Send + Sync>>,
}

impl Problem {
    pub fn new(domain: DomainSpec) -> Self {
        Problem { domain, body_force: BodyForce::None, dirichlet_field: None }
    }
}

/// Nodal displacement solution, two interleaved dofs per node.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub u: Vec<f64>,
    /// Relative residual of the final linear solve.
    pub residual: f64,
}

/// Per-dof constraint table: `value[dof]` is `Some(prescribed)` for
/// constrained dofs.
pub fn dirichlet_constraints(mesh: &PolyMesh, problem: &Problem) -> Vec<Option<f64>> {
    let node_segs = mesh.node_boundary_segments();
    let mut constraint = vec![None; 2 * mesh.n_nodes()];
    for (node, segs) in node_segs.iter().enumerate() {
        for &s in segs {
            let (px, py) = mesh.boundary[s].condition.prescribed();
            let field = problem.dirichlet_field.as_ref().map(|f| f(mesh.nodes[node]));
            if px.is_some() {
                constraint[2 * node] = Some(field.map_or(px.unwrap(), |v| v[0]));
            }
            if py.is_some() {
                constraint[2 * node + 1] = Some(field.map_or(py.unwrap(), |v| v[1]));
            }
        }
    }
    constraint
}

/// Assemble and solve K u = f. Returns the full nodal displacement vector
/// with Dirichlet values satisfied exactly.
pub fn assemble_and_solve(
    mesh: &PolyMesh,
    problem: &Problem,
    material: &MaterialParams,
) -> Result<SolutionField> {
    let d = constitutive_matrix(material)?;
    let n_dofs = 2 * mesh.n_nodes();

    let constraint = dirichlet_constraints(mesh, problem);
    let n_con = constraint.iter().filter(|c| c.is_some()).count();
    if n_con == 0 {
        return Err(Error::Constraint(
            "no Dirichlet dofs: rigid translations and rotation are unconstrained".into(),
        ));
    }

    // Element stiffness matrices.
    let mut stiff: Vec<ElementStiffness> = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        stiff.push(element_matrices(mesh, e, &d, material.mu)?);
    }

    // Load vector: lumped body force + consistent constant edge tractions.
    let mut f = vec![0.0; n_dofs];
    if !problem.body_force.is_none() {
        for e in 0..mesh.n_elements() {
            let area = mesh.element_area(e)?;
            let cycle = &mesh.elements[e];
            let w = area / cycle.len() as f64;
            for &v in cycle {
                let b = problem.body_force.eval(mesh.nodes[v]);
                f[2 * v] += w * b[0];
                f[2 * v + 1] += w * b[1];
            }
        }
    }
    for (e, i, s) in mesh.boundary_edges() {
        if let Some((tx, ty)) = mesh.boundary[s].condition.traction() {
            let cycle = &mesh.elements[e];
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            let half = 0.5 * mesh.nodes[a].dist(mesh.nodes[b]);
            f[2 * a] += half * tx;
            f[2 * a + 1] += half * ty;
            f[2 * b] += half * tx;
            f[2 * b + 1] += half * ty;
        }
    }

    // Free-dof numbering in RCM order of the node graph.
    let order = rcm_node_order(mesh);
    let mut free_index = vec![usize::MAX; n_dofs];
    let mut free_dofs = Vec::with_capacity(n_dofs - n_con);
    for &node in &order {
        for comp in 0..2 {
            let dof = 2 * node + comp;
            if constraint[dof].is_none() {
                free_index[dof] = free_dofs.len();
                free_dofs.push(dof);
            }
        }
    }
    let n_free = free_dofs.len();
    if n_free == 0 {
        // Everything prescribed; nothing to solve.
        let u: Vec<f64> = constraint.iter().map(|c| c.unwrap_or(0.0)).collect();
        return Ok(SolutionField { u, residual: 0.0 });
    }

    // Reduced rhs including the Dirichlet lifting, and triplets of the
    // reduced matrix.
    let mut rhs: Vec<f64> = free_dofs.iter().map(|&dof| f[dof]).collect();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (e, ks) in stiff.iter().enumerate() {
        let cycle = &mesh.elements[e];
        let k = ks.total();
        let dofs: Vec<usize> = cycle.iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
        for (li, &gi) in dofs.iter().enumerate() {
            let fi = free_index[gi];
            if fi == usize::MAX {
                continue;
            }
            for (lj, &gj) in dofs.iter().enumerate() {
                let v = k[(li, lj)];
                if v == 0.0 {
                    continue;
                }
                let fj = free_index[gj];
                if fj == usize::MAX {
                    rhs[fi] -= v * constraint[gj].unwrap();
                } else if fj <= fi {
                    triplets.push((fi, fj, v));
                }
            }
        }
    }

    let mut skyline = Skyline::assemble(n_free, &triplets);
    let rhs_v = DVector::from_vec(rhs.clone());
    skyline.factorize().map_err(|dof| {
        let g = free_dofs[dof];
        Error::Constraint(format!(
            "singular system at node {} component {} (free rigid mode or degenerate mesh)",
            g / 2,
            g % 2
        ))
    })?;
    let mut x = skyline.solve(&rhs_v);

    // Iterative refinement against the triplet representation.
    let norm_rhs = rhs_v.norm().max(1e-300);
    let mut residual = f64::INFINITY;
    for _ in 0..4 {
        let mut r = rhs_v.clone();
        for &(i, j, v) in &triplets {
            r[i] -= v * x[j];
            if i != j {
                r[j] -= v * x[i];
            }
        }
        residual = r.norm() / norm_rhs;
        if residual <= 1e-13 {
            break;
        }
        let dx = skyline.solve(&r);
        x += dx;
    }
    if !residual.is_finite() || residual > 1e-10 {
        return Err(Error::Numeric(format!("solver did not converge (relative residual {residual:.3e})")));
    }

    let mut u = vec![0.0; n_dofs];
    for (dof, c) in constraint.iter().enumerate() {
        if let Some(v) = c {
            u[dof] = *v;
        }
    }
    for (fi, &dof) in free_dofs.iter().enumerate() {
        u[dof] = x[fi];
    }
    Ok(SolutionField { u, residual })
}

/// Strain energy u^T K u computed by element sums (2x the elastic energy).
pub fn quadratic_form(mesh: &PolyMesh, material: &MaterialParams, u: &[f64]) -> Result<f64> {
    let d = constitutive_matrix(material)?;
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let ks = element_matrices(mesh, e, &d, material.mu)?;
        let de = crate::vem::element_dofs(mesh, e, u);
        acc += (de.transpose() * ks.total() * &de)[(0, 0)];
    }
    Ok(acc)
}

/// Reverse Cuthill-McKee ordering of mesh nodes (deterministic).
fn rcm_node_order(mesh: &PolyMesh) -> Vec<usize> {
    let n = mesh.n_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for cycle in &mesh.elements {
        // Element couples all its nodes pairwise (dense element block).
        for i in 0..cycle.len() {
            for j in 0..cycle.len() {
                if i != j {
                    adj[cycle[i]].push(cycle[j]);
                }
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    loop {
        // Start each component from a minimum-degree unvisited node.
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (adj[i].len(), i));
        let Some(start) = start else { break };
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().cloned().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric skyline matrix (lower triangle stored column-wise by rows up to
/// the diagonal), factored in place as L D L^T.
struct Skyline {
    n: usize,
    /// First stored row of each column.
    jmin: Vec<usize>,
    /// Column pointer into `vals`; column j occupies rows jmin[j]..=j.
    colptr: Vec<usize>,
    vals: Vec<f64>,
    factored: bool,
}

impl Skyline {
    /// Build from lower-triangle triplets (i >= j entries are given as
    /// (row=i, col=j); here we receive (fi, fj) with fj <= fi and store
    /// symmetric skyline on column max(fi,fj)).
    fn assemble(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        // Stored column-wise: column c holds rows jmin[c]..=c of the upper
        // triangle equivalently; we use A[i][j] with i <= j stored in column j.
        let mut jmin: Vec<usize> = (0..n).collect();
        for &(i, j, _) in triplets {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            if lo < jmin[hi] {
                jmin[hi] = lo;
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for j in 0..n {
            colptr[j + 1] = colptr[j] + (j - jmin[j] + 1);
        }
        let mut vals = vec![0.0; colptr[n]];
        for &(i, j, v) in triplets {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            let idx = colptr[hi] + (lo - jmin[hi]);
            vals[idx] += v;
        }
        Skyline { n, jmin, colptr, vals, factored: false }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= self.jmin[j] && i <= j);
        self.colptr[j] + (i - self.jmin[j])
    }

    /// In-place LDL^T factorization. Returns the offending column on a
    /// non-positive pivot.
    fn factorize(&mut self) -> std::result::Result<(), usize> {
        let n = self.n;
        let mut g = vec![0.0; n];
        for j in 0..n {
            let mj = self.jmin[j];
            // g[i] = A[i,j] - sum_{k} l[k,i] g[k]
            for i in mj..=j {
                g[i] = self.vals[self.idx(i, j)];
            }
            for i in (mj + 1)..j {
                let mi = self.jmin[i].max(mj);
                let mut s = 0.0;
                for k in mi..i {
                    s += self.vals[self.idx(k, i)] * g[k];
                }
                g[i] -= s;
            }
            // Diagonal d[j] and scaled column l[i,j] = g[i]/d[i].
            let mut djj = g[j];
            for k in mj..j {
                djj -= g[k] * g[k] / self.diag(k);
            }
            if !(djj > 0.0) || !djj.is_finite() {
                return Err(j);
            }
            for i in mj..j {
                let v = g[i] / self.diag(i);
                let at = self.idx(i, j);
                self.vals[at] = v;
            }
            let at = self.idx(j, j);
            self.vals[at] = djj;
        }
        self.factored = true;
        Ok(())
    }

    #[inline]
    fn diag(&self, j: usize) -> f64 {
        self.vals[self.colptr[j] + (j - self.jmin[j])]
    }

    /// Solve L D L^T x = b (after factorize).
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert!(self.factored);
        let n = self.n;
        let mut x = b.clone();
        // Forward: (L z) with unit lower triangle given by columns.
        for j in 0..n {
            let mj = self.jmin[j];
            let mut s = 0.0;
            for i in mj..j {
                s += self.vals[self.idx(i, j)] * x[i];
            }
            x[j] -= s;
        }
        for j in 0..n {
            x[j] /= self.diag(j);
        }
        // Backward: L^T x = z, processed column by column.
        for j in (0..n).rev() {
            let mj = self.jmin[j];
            let xj = x[j];
            for i in mj..j {
                x[i] -= self.vals[self.idx(i, j)] * xj;
            }
        }
        x
    }
}
