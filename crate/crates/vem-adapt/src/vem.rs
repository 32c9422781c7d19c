//! First-order virtual element matrices: the constant-strain projection
//! operator computed from boundary integrals, the consistency stiffness, and
//! the rank-completing stabilization built from the scaled linear monomial
//! basis.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::geometry::{centroid, diameter, signed_area};
use crate::material::ConstitutiveMatrix;
use crate::mesh::PolyMesh;
use crate::{Error, Result};

/// Per-element stiffness data.
#[derive(Debug, Clone)]
pub struct ElementStiffness {
    /// Consistency stiffness |E| B^T D B, 2n_v x 2n_v, rank <= 3.
    pub k_c: DMatrix<f64>,
    /// Stabilization stiffness mu [I - D (D^T D)^-1 D^T].
    pub k_s: DMatrix<f64>,
    /// Projection operator: Voigt strain of the projection = B * d.
    pub b: DMatrix<f64>,
    /// Nodal values of the scaled linear monomials, 2n_v x 6.
    pub dmat: DMatrix<f64>,
}

impl ElementStiffness {
    /// Total element stiffness K_c + K_s.
    pub fn total(&self) -> DMatrix<f64> {
        &self.k_c + &self.k_s
    }
}

/// Dof ordering: interleaved (u1x, u1y, u2x, u2y, ...) following the element
/// vertex cycle.
pub fn element_dofs(mesh: &PolyMesh, elem: usize, u: &[f64]) -> DVector<f64> {
    let cycle = &mesh.elements[elem];
    let mut d = DVector::zeros(2 * cycle.len());
    for (a, &v) in cycle.iter().enumerate() {
        d[2 * a] = u[2 * v];
        d[2 * a + 1] = u[2 * v + 1];
    }
    d
}

/// Projection operator B (3 x 2n_v) mapping element dofs to the Voigt strain
/// (eps_xx, eps_yy, gamma_xy) of the constant projected strain. Edge
/// integrals of the linear traces are evaluated with the trapezoid rule,
/// which is exact here.
pub fn projection_operator(mesh: &PolyMesh, elem: usize) -> Result<DMatrix<f64>> {
    let poly = mesh.element_polygon(elem);
    let n = poly.len();
    if n < 3 {
        return Err(Error::Topology(format!("element {elem} has fewer than 3 vertices")));
    }
    let area = signed_area(&poly);
    if area <= 0.0 {
        return Err(Error::Topology(format!("element {elem} has non-positive area")));
    }
    // q_a = 1/2 * sum over the two edges incident to vertex a of |e| n_e.
    // |e| n_e for edge (p, q) of a CCW polygon is (q.y - p.y, p.x - q.x).
    let mut b = DMatrix::zeros(3, 2 * n);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        if p.dist(q) == 0.0 {
            return Err(Error::Topology(format!("element {elem} has a zero-length edge")));
        }
        let ex = q.y - p.y;
        let ey = p.x - q.x;
        for &a in [i, (i + 1) % n].iter() {
            let qx = 0.5 * ex;
            let qy = 0.5 * ey;
            b[(0, 2 * a)] += qx / area;
            b[(1, 2 * a + 1)] += qy / area;
            b[(2, 2 * a)] += qy / area;
            b[(2, 2 * a + 1)] += qx / area;
        }
    }
    Ok(b)
}

/// Nodal-value matrix of the six scaled linear displacement monomials
/// {1, (x-x_c)/h, (y-y_c)/h} per component.
pub fn monomial_matrix(mesh: &PolyMesh, elem: usize) -> DMatrix<f64> {
    let poly = mesh.element_polygon(elem);
    let n = poly.len();
    let c = centroid(&poly);
    let h = diameter(&poly).max(1e-300);
    let mut dmat = DMatrix::zeros(2 * n, 6);
    for (a, p) in poly.iter().enumerate() {
        let xi = (p.x - c.x) / h;
        let eta = (p.y - c.y) / h;
        dmat[(2 * a, 0)] = 1.0;
        dmat[(2 * a, 1)] = xi;
        dmat[(2 * a, 2)] = eta;
        dmat[(2 * a + 1, 3)] = 1.0;
        dmat[(2 * a + 1, 4)] = xi;
        dmat[(2 * a + 1, 5)] = eta;
    }
    dmat
}

/// Consistency and stabilization matrices of one element.
pub fn element_matrices(
    mesh: &PolyMesh,
    elem: usize,
    d: &ConstitutiveMatrix,
    mu: f64,
) -> Result<ElementStiffness> {
    let b = projection_operator(mesh, elem)?;
    let poly = mesh.element_polygon(elem);
    let area = signed_area(&poly);
    let n = poly.len();

    // K_c = |E| B^T D B; the projected strain is constant so the integrand is.
    let db = d.d * &b;
    let k_c = area * b.transpose() * db;

    let dmat = monomial_matrix(mesh, elem);
    let dtd = dmat.transpose() * &dmat;
    let dtd_inv = dtd
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("element {elem}: all nodes collinear")))?;
    let proj = &dmat * dtd_inv * dmat.transpose();
    let mut k_s = DMatrix::identity(2 * n, 2 * n) - proj;
    k_s *= mu;
    // Symmetrize against rounding.
    let k_s = 0.5 * (&k_s + k_s.transpose());

    Ok(ElementStiffness { k_c, k_s, b, dmat })
}

/// Constant element stress sigma^h = D (B d) in Voigt form.
pub fn element_stress(
    mesh: &PolyMesh,
    elem: usize,
    u: &[f64],
    d: &ConstitutiveMatrix,
) -> Result<Vector3<f64>> {
    let b = projection_operator(mesh, elem)?;
    let dofs = element_dofs(mesh, elem, u);
    let strain = &b * dofs;
    Ok(d.d * Vector3::new(strain[0], strain[1], strain[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::material::{constitutive_matrix, MaterialParams, PlaneRegime};
    use crate::mesh::BoundarySegment;
    use approx::assert_relative_eq;

    fn single_element(points: &[Point2]) -> PolyMesh {
        let cycle = (0..points.len()).collect();
        PolyMesh::new(points.to_vec(), vec![cycle], Vec::<BoundarySegment>::new())
    }

    fn unit_square_mesh() -> PolyMesh {
        single_element(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
    }

    fn dofs_from_field(mesh: &PolyMesh, f: impl Fn(Point2) -> (f64, f64)) -> DVector<f64> {
        let cycle = &mesh.elements[0];
        let mut d = DVector::zeros(2 * cycle.len());
        for (a, &v) in cycle.iter().enumerate() {
            let (ux, uy) = f(mesh.nodes[v]);
            d[2 * a] = ux;
            d[2 * a + 1] = uy;
        }
        d
    }

    #[test]
    fn projection_of_linear_field_is_exact() {
        let mesh = unit_square_mesh();
        let b = projection_operator(&mesh, 0).unwrap();
        let d = dofs_from_field(&mesh, |p| (p.x, 0.0));
        let strain = &b * d;
        assert_relative_eq!(strain[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(strain[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(strain[2], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn projection_of_rotation_is_zero() {
        // Irregular pentagon; rigid rotation u = (-y, x).
        let mesh = single_element(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.3, 0.1),
            Point2::new(1.6, 1.2),
            Point2::new(0.7, 1.8),
            Point2::new(-0.2, 0.9),
        ]);
        let b = projection_operator(&mesh, 0).unwrap();
        let d = dofs_from_field(&mesh, |p| (-p.y, p.x));
        let strain = &b * d;
        for k in 0..3 {
            assert_relative_eq!(strain[k], 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn projection_with_hanging_node() {
        // Unit square with a collinear node on the bottom edge.
        let mesh = single_element(&[
            Point2::new(0.0, 0.0),
            Point2::new(0.4, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]);
        let b = projection_operator(&mesh, 0).unwrap();
        let d = dofs_from_field(&mesh, |p| (p.x, 0.0));
        let strain = &b * d;
        assert_relative_eq!(strain[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(strain[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(strain[2], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn stabilization_kernel_contains_linear_fields() {
        let params = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
        let d = constitutive_matrix(&params).unwrap();
        let mesh = single_element(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.1, -0.1),
            Point2::new(1.5, 0.9),
            Point2::new(0.6, 1.4),
            Point2::new(-0.3, 0.8),
        ]);
        let ks = element_matrices(&mesh, 0, &d, params.mu).unwrap();
        for col in 0..6 {
            let s = DVector::from_fn(6, |r, _| if r == col { 1.0 } else { 0.0 });
            let lin = &ks.dmat * s;
            let out = &ks.k_s * lin;
            assert!(out.amax() < 1e-12, "K_s must annihilate linear fields");
        }
    }

    #[test]
    fn stiffness_has_three_rigid_modes() {
        let params = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
        let d = constitutive_matrix(&params).unwrap();
        let mesh = unit_square_mesh();
        let ks = element_matrices(&mesh, 0, &d, params.mu).unwrap();
        let k = ks.total();
        let eig = nalgebra::SymmetricEigen::new(k.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let zero_count = vals.iter().filter(|&&v| v.abs() < 1e-12).count();
        assert_eq!(zero_count, 3, "eigenvalues: {vals:?}");
        assert!(vals[3] > 1e-8);
    }

    #[test]
    fn stress_of_uniaxial_field() {
        let params = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
        let d = constitutive_matrix(&params).unwrap();
        let mesh = unit_square_mesh();
        // u = (x, 0) over all four nodes: interleaved global vector.
        let mut u = vec![0.0; 8];
        for (i, p) in mesh.nodes.iter().enumerate() {
            u[2 * i] = p.x;
        }
        let s = element_stress(&mesh, 0, &u, &d).unwrap();
        assert_relative_eq!(s[0], params.lambda + 2.0 * params.mu, epsilon = 1e-14);
        assert_relative_eq!(s[1], params.lambda, epsilon = 1e-14);
        assert_relative_eq!(s[2], 0.0, epsilon = 1e-14);

        // Rigid translation: zero stress.
        let u = vec![0.25; 8];
        let s = element_stress(&mesh, 0, &u, &d).unwrap();
        for k in 0..3 {
            assert_relative_eq!(s[k], 0.0, epsilon = 1e-14);
        }
    }
}
