//! A-posteriori error machinery: superconvergent patch recovery of nodal
//! stresses from element-constant stresses, element-level and global energy
//! error approximations, and the per-node coarsening error prediction.

use nalgebra::{Matrix3, Vector3};

use crate::material::ConstitutiveMatrix;
use crate::mesh::PolyMesh;
use crate::vem::element_stress;
use crate::{Error, Result};

/// Recovered nodal stresses (Voigt), one per mesh node.
#[derive(Debug, Clone)]
pub struct RecoveredStress {
    pub sigma: Vec<Vector3<f64>>,
}

/// Element and global energy-error data for one solved state.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// Element error contributions e_i.
    pub e: Vec<f64>,
    /// Element energy contributions U_i.
    pub u_energy: Vec<f64>,
    /// Element energy error norms ||e_i|| = sqrt(e_i / 2).
    pub norm_e: Vec<f64>,
    /// Per-node coarsening predictions ||e_p||.
    pub patch_prediction: Vec<f64>,
    /// Global energy error ||e||_H1 = sqrt(sum e_i / 2).
    pub global_error: f64,
    /// Elastic energy ||U|| = sqrt(sum U_i / 2).
    pub global_energy: f64,
    /// Relative energy error ||e||_H1 / ||U|| (fraction, not percent).
    pub rel_error: f64,
}

/// Constant stresses of all elements for a solved displacement field.
pub fn element_stresses(
    mesh: &PolyMesh,
    u: &[f64],
    d: &ConstitutiveMatrix,
) -> Result<Vec<Vector3<f64>>> {
    (0..mesh.n_elements()).map(|e| element_stress(mesh, e, u, d)).collect()
}

/// Elements connected (by at least one shared node) to any element in `base`.
fn enlarge_patch(mesh: &PolyMesh, adjacency: &[Vec<usize>], base: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = base.to_vec();
    for &e in base {
        for &v in &mesh.elements[e] {
            out.extend_from_slice(&adjacency[v]);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Least-squares linear fit of the patch samples, evaluated at `node_pos`.
/// Coordinates are shifted to the node and scaled by the patch diameter
/// before solving; mathematically the same fit, numerically conditioned.
/// Returns `None` when the normal matrix is singular or badly conditioned.
fn fit_at_node(
    node_pos: crate::geometry::Point2,
    samples: &[(crate::geometry::Point2, Vector3<f64>)],
) -> Option<Vector3<f64>> {
    if samples.len() < 3 {
        return None;
    }
    let h = samples
        .iter()
        .map(|(p, _)| p.dist(node_pos))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut a = Matrix3::<f64>::zeros();
    let mut b = [Vector3::<f64>::zeros(); 3];
    for (p, s) in samples {
        let xi = (p.x - node_pos.x) / h;
        let eta = (p.y - node_pos.y) / h;
        let row = Vector3::new(1.0, xi, eta);
        a += row * row.transpose();
        for c in 0..3 {
            b[c] += row * s[c];
        }
    }
    let svd = a.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return None;
    }
    let inv = a.try_inverse()?;
    // The fit evaluated at the node is the constant coefficient.
    let mut out = Vector3::zeros();
    for c in 0..3 {
        out[c] = (inv * b[c])[0];
    }
    Some(out)
}

/// Superconvergent patch recovery: per node, a linear least-squares fit of
/// the element stresses sampled at patch element centroids, enlarged when a
/// node connects to fewer than three elements (or the sampling geometry is
/// degenerate). Falls back to the area-weighted mean stress when enlargement
/// cannot fix the fit.
pub fn recover_stress(mesh: &PolyMesh, stresses: &[Vector3<f64>]) -> Result<RecoveredStress> {
    if stresses.len() != mesh.n_elements() {
        return Err(Error::Precondition("one stress per element required".into()));
    }
    let adjacency = mesh.node_to_elements();
    let centroids: Vec<crate::geometry::Point2> =
        (0..mesh.n_elements()).map(|e| mesh.element_centroid(e)).collect::<Result<_>>()?;
    let areas: Vec<f64> =
        (0..mesh.n_elements()).map(|e| mesh.element_area(e)).collect::<Result<_>>()?;

    let mut sigma = Vec::with_capacity(mesh.n_nodes());
    for node in 0..mesh.n_nodes() {
        let base = &adjacency[node];
        if base.is_empty() {
            sigma.push(Vector3::zeros());
            continue;
        }
        let mut patch: Vec<usize> = base.clone();
        if patch.len() < 3 {
            patch = enlarge_patch(mesh, &adjacency, &patch);
        }
        let samples = |patch: &[usize]| -> Vec<(crate::geometry::Point2, Vector3<f64>)> {
            patch.iter().map(|&e| (centroids[e], stresses[e])).collect()
        };
        let mut fit = fit_at_node(mesh.nodes[node], &samples(&patch));
        for _ in 0..2 {
            if fit.is_some() {
                break;
            }
            patch = enlarge_patch(mesh, &adjacency, &patch);
            fit = fit_at_node(mesh.nodes[node], &samples(&patch));
        }
        let value = match fit {
            Some(v) => v,
            None => {
                // Degenerate sampling geometry: area-weighted mean stress.
                let total: f64 = patch.iter().map(|&e| areas[e]).sum();
                if total <= 0.0 {
                    return Err(Error::Estimation(format!(
                        "stress recovery failed at node {node}: degenerate patch"
                    )));
                }
                let mut mean = Vector3::zeros();
                for &e in &patch {
                    mean += areas[e] * stresses[e];
                }
                mean / total
            }
        };
        sigma.push(value);
    }
    Ok(RecoveredStress { sigma })
}

/// Element error and energy contributions by the nodal-average quadrature:
/// e_i = (|E_i|/n_v) sum_j (s*_j - s^h)^T D^-1 (s*_j - s^h), U_i analogous
/// with s*_j alone, ||e_i|| = sqrt(e_i/2).
pub fn element_error(
    mesh: &PolyMesh,
    elem: usize,
    recovered: &RecoveredStress,
    stress_h: Vector3<f64>,
    d_inv: &Matrix3<f64>,
) -> Result<(f64, f64, f64)> {
    let cycle = &mesh.elements[elem];
    let area = mesh.element_area(elem)?;
    let w = area / cycle.len() as f64;
    let mut e_i = 0.0;
    let mut u_i = 0.0;
    for &v in cycle {
        let s = recovered.sigma[v];
        let diff = s - stress_h;
        e_i += (diff.transpose() * d_inv * diff)[0];
        u_i += (s.transpose() * d_inv * s)[0];
    }
    e_i *= w;
    u_i *= w;
    Ok((e_i, u_i, (0.5 * e_i).sqrt()))
}

/// Global energy error, elastic energy and their ratio from element sums.
pub fn global_error(e: &[f64], u_energy: &[f64]) -> Result<(f64, f64, f64)> {
    let err = (0.5 * e.iter().sum::<f64>()).sqrt();
    let energy = (0.5 * u_energy.iter().sum::<f64>()).sqrt();
    if energy == 0.0 {
        return Err(Error::Estimation("relative error undefined: zero elastic energy".into()));
    }
    Ok((err, energy, err / energy))
}

/// Coarsening error prediction for the patch of `node`: the energy error the
/// merged patch would show if its stress were the area-weighted average of
/// the patch element stresses, evaluated over the patch's unique nodes.
pub fn predict_patch_error(
    mesh: &PolyMesh,
    node: usize,
    recovered: &RecoveredStress,
    stresses: &[Vector3<f64>],
    d_inv: &Matrix3<f64>,
    adjacency: &[Vec<usize>],
) -> Result<f64> {
    let patch = &adjacency[node];
    if patch.is_empty() {
        return Err(Error::Precondition(format!("node {node} has no patch")));
    }
    let mut patch_area = 0.0;
    let mut mean = Vector3::zeros();
    let mut nodes: Vec<usize> = Vec::new();
    for &e in patch {
        let a = mesh.element_area(e)?;
        patch_area += a;
        mean += a * stresses[e];
        nodes.extend_from_slice(&mesh.elements[e]);
    }
    mean /= patch_area;
    nodes.sort_unstable();
    nodes.dedup();
    let w = patch_area / nodes.len() as f64;
    let mut acc = 0.0;
    for &v in &nodes {
        let diff = recovered.sigma[v] - mean;
        acc += (diff.transpose() * d_inv * diff)[0];
    }
    Ok((0.5 * w * acc).sqrt())
}

/// Run the full estimation chain for a solved displacement field.
pub fn compute_error_report(
    mesh: &PolyMesh,
    u: &[f64],
    d: &ConstitutiveMatrix,
) -> Result<ErrorReport> {
    let stresses = element_stresses(mesh, u, d)?;
    let recovered = recover_stress(mesh, &stresses)?;
    let d_inv = d.inverse();
    let adjacency = mesh.node_to_elements();

    let mut e = Vec::with_capacity(mesh.n_elements());
    let mut u_energy = Vec::with_capacity(mesh.n_elements());
    let mut norm_e = Vec::with_capacity(mesh.n_elements());
    for elem in 0..mesh.n_elements() {
        let (ei, ui, ne) = element_error(mesh, elem, &recovered, stresses[elem], &d_inv)?;
        e.push(ei);
        u_energy.push(ui);
        norm_e.push(ne);
    }
    let (global_err, global_energy, rel_error) = global_error(&e, &u_energy)?;

    let mut patch_prediction = Vec::with_capacity(mesh.n_nodes());
    for node in 0..mesh.n_nodes() {
        if adjacency[node].is_empty() {
            patch_prediction.push(f64::INFINITY);
        } else {
            patch_prediction.push(predict_patch_error(
                mesh, node, &recovered, &stresses, &d_inv, &adjacency,
            )?);
        }
    }

    Ok(ErrorReport {
        e,
        u_energy,
        norm_e,
        patch_prediction,
        global_error: global_err,
        global_energy,
        rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::mesh::{BoundarySegment, PolyMesh};
    use approx::assert_relative_eq;

    fn grid_mesh(k: usize) -> PolyMesh {
        let mut nodes = Vec::new();
        for j in 0..=k {
            for i in 0..=k {
                nodes.push(Point2::new(i as f64 / k as f64, j as f64 / k as f64));
            }
        }
        let id = |i: usize, j: usize| j * (k + 1) + i;
        let mut elements = Vec::new();
        for j in 0..k {
            for i in 0..k {
                elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        PolyMesh::new(nodes, elements, Vec::<BoundarySegment>::new())
    }

    fn identity_d() -> Matrix3<f64> {
        Matrix3::identity()
    }

    #[test]
    fn constant_field_recovers_exactly() {
        let mesh = grid_mesh(3);
        let stresses = vec![Vector3::new(1.0, 2.0, 3.0); mesh.n_elements()];
        let rec = recover_stress(&mesh, &stresses).unwrap();
        for s in &rec.sigma {
            assert_relative_eq!(s[0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(s[1], 2.0, epsilon = 1e-12);
            assert_relative_eq!(s[2], 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_field_recovers_exactly() {
        let mesh = grid_mesh(4);
        let stresses: Vec<Vector3<f64>> = (0..mesh.n_elements())
            .map(|e| {
                let c = mesh.element_centroid(e).unwrap();
                Vector3::new(1.0 + 2.0 * c.x + 3.0 * c.y, 0.0, 0.0)
            })
            .collect();
        let rec = recover_stress(&mesh, &stresses).unwrap();
        for (node, s) in rec.sigma.iter().enumerate() {
            let p = mesh.nodes[node];
            assert_relative_eq!(s[0], 1.0 + 2.0 * p.x + 3.0 * p.y, epsilon = 1e-10);
        }
    }

    #[test]
    fn corner_patch_is_enlarged() {
        // 2x2 grid: every corner node touches exactly one element, so the
        // fit must come from the enlarged patch (all four elements).
        let mesh = grid_mesh(2);
        let stresses: Vec<Vector3<f64>> = (0..mesh.n_elements())
            .map(|e| {
                let c = mesh.element_centroid(e).unwrap();
                Vector3::new(c.x + c.y, 0.0, 0.0)
            })
            .collect();
        let rec = recover_stress(&mesh, &stresses).unwrap();
        // Exact for the linear field even at corners.
        assert_relative_eq!(rec.sigma[0][0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(rec.sigma[8][0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn element_error_hand_case() {
        let mesh = grid_mesh(1); // single unit square
        let rec = RecoveredStress { sigma: vec![Vector3::new(1.0, 0.0, 0.0); 4] };
        let d_inv = identity_d();
        let (e, _u, ne) = element_error(&mesh, 0, &rec, Vector3::zeros(), &d_inv).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-14);
        assert_relative_eq!(ne, 0.5f64.sqrt(), epsilon = 1e-14);

        // sigma* == sigma^h -> zero error.
        let (e, _, _) =
            element_error(&mesh, 0, &rec, Vector3::new(1.0, 0.0, 0.0), &d_inv).unwrap();
        assert_relative_eq!(e, 0.0);
    }

    #[test]
    fn element_error_scales_with_area() {
        // Two rectangles, the second with twice the area.
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 1.0),
        ];
        let elements = vec![vec![0, 1, 2, 3], vec![1, 4, 5, 2]];
        let mesh = PolyMesh::new(nodes, elements, Vec::new());
        let rec = RecoveredStress { sigma: vec![Vector3::new(1.0, 0.0, 0.0); 6] };
        let d_inv = identity_d();
        let (e1, _, _) = element_error(&mesh, 0, &rec, Vector3::zeros(), &d_inv).unwrap();
        let (e2, _, _) = element_error(&mesh, 1, &rec, Vector3::zeros(), &d_inv).unwrap();
        assert_relative_eq!(e2, 2.0 * e1, epsilon = 1e-12);
    }

    #[test]
    fn global_error_arithmetic() {
        let (err, energy, rel) = global_error(&[2.0, 2.0], &[100.0, 100.0]).unwrap();
        assert_relative_eq!(err, 2.0f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(energy, 10.0, epsilon = 1e-14);
        assert_relative_eq!(rel, 2.0f64.sqrt() / 10.0, epsilon = 1e-14);

        let (err, _, rel) = global_error(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(err, 0.0);
        assert_relative_eq!(rel, 0.0);

        assert!(global_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn global_error_is_partition_invariant() {
        let e = [0.1, 0.4, 0.3, 0.2, 0.7];
        let u = [1.0, 2.0, 1.5, 0.5, 3.0];
        let (full, _, _) = global_error(&e, &u).unwrap();
        // Grouping contributions before the square root changes nothing.
        let grouped_e = [e[0] + e[1], e[2] + e[3] + e[4]];
        let grouped_u = [u[0] + u[1], u[2] + u[3] + u[4]];
        let (grouped, _, _) = global_error(&grouped_e, &grouped_u).unwrap();
        assert_relative_eq!(full, grouped, epsilon = 1e-14);
    }

    #[test]
    fn patch_prediction_cases() {
        let mesh = grid_mesh(2);
        let adjacency = mesh.node_to_elements();
        let d_inv = identity_d();

        // Equal stresses + matching recovery -> zero prediction.
        let stresses = vec![Vector3::new(1.0, 2.0, 3.0); mesh.n_elements()];
        let rec = RecoveredStress { sigma: vec![Vector3::new(1.0, 2.0, 3.0); mesh.n_nodes()] };
        let p = predict_patch_error(&mesh, 4, &rec, &stresses, &d_inv, &adjacency).unwrap();
        assert_relative_eq!(p, 0.0, epsilon = 1e-14);

        // Single-element patch: the averaged stress is that element's own.
        let p = predict_patch_error(&mesh, 0, &rec, &stresses, &d_inv, &adjacency).unwrap();
        assert_relative_eq!(p, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn patch_prediction_hand_case() {
        // Two equal-area unit squares side by side sharing an edge.
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 1.0),
        ];
        let elements = vec![vec![0, 1, 4, 3], vec![1, 2, 5, 4]];
        let mesh = PolyMesh::new(nodes, elements, Vec::new());
        let adjacency = mesh.node_to_elements();
        let d_inv = identity_d();
        let stresses = vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)];
        // Weighted average stress = (1,0,0); recovery equal to it at every
        // node -> prediction 0.
        let rec = RecoveredStress { sigma: vec![Vector3::new(1.0, 0.0, 0.0); 6] };
        let p = predict_patch_error(&mesh, 1, &rec, &stresses, &d_inv, &adjacency).unwrap();
        assert_relative_eq!(p, 0.0, epsilon = 1e-14);

        // Recovery offset by (1,0,0) at each node: patch area 2, 6 unique
        // nodes, sum of squared diffs 6 -> sqrt(0.5 * (2/6) * 6) = 1.
        let rec = RecoveredStress { sigma: vec![Vector3::new(2.0, 0.0, 0.0); 6] };
        let p = predict_patch_error(&mesh, 1, &rec, &stresses, &d_inv, &adjacency).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-14);
    }
}
