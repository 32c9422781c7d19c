//! Independent numerical oracles for the element machinery: a hand-assembled
//! constant-strain-triangle stiffness, a high-order boundary quadrature for
//! the projection, a dense eigensolver for the stiffness spectrum, and
//! closed-form solutions for simple load cases.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use vem_adapt::bench::{build_uniaxial, uniaxial_exact};
use vem_adapt::estimate::{compute_error_report, element_stresses};
use vem_adapt::geometry::Point2;
use vem_adapt::material::{constitutive_matrix, MaterialParams, PlaneRegime};
use vem_adapt::mesh::PolyMesh;
use vem_adapt::meshgen::{generate_mesh, MeshMode};
use vem_adapt::solve::assemble_and_solve;
use vem_adapt::vem::{element_matrices, projection_operator};

fn single_element(points: &[Point2]) -> PolyMesh {
    PolyMesh::new(points.to_vec(), vec![(0..points.len()).collect()], Vec::new())
}

/// Plane-strain constant-strain-triangle stiffness assembled from the
/// textbook B-matrix: an implementation path fully independent of the
/// boundary-integral projection.
fn cst_stiffness(p: [Point2; 3], d: &Matrix3<f64>) -> DMatrix<f64> {
    let area = 0.5
        * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
    assert!(area > 0.0, "triangle must be CCW");
    let y = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
    let x = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
    let mut b = DMatrix::zeros(3, 6);
    for i in 0..3 {
        b[(0, 2 * i)] = y[i];
        b[(1, 2 * i + 1)] = x[i];
        b[(2, 2 * i)] = x[i];
        b[(2, 2 * i + 1)] = y[i];
    }
    b /= 2.0 * area;
    let db = DMatrix::from_fn(3, 6, |r, c| {
        (0..3).map(|k| d[(r, k)] * b[(k, c)]).sum::<f64>()
    });
    area * b.transpose() * db
}

#[test]
fn consistency_matches_cst_on_random_triangles() {
    let material = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
    let d = constitutive_matrix(&material).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tested = 0;
    while tested < 20 {
        let p = [
            Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ];
        let area = 0.5
            * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
        if area < 0.05 {
            continue; // reject thin or flipped triangles
        }
        tested += 1;
        let mesh = single_element(&p);
        let ks = element_matrices(&mesh, 0, &d, material.mu).unwrap();
        let oracle = cst_stiffness(p, &d.d);
        let diff = (&ks.k_c - &oracle).amax();
        assert!(
            diff <= 1e-12,
            "K_c deviates from the CST oracle by {diff:.3e} on triangle {p:?}"
        );
    }
}

/// Evaluate the projection boundary integral with 5-point Gauss-Legendre
/// quadrature on each edge: independent of the trapezoid rule used by the
/// implementation.
fn projected_strain_quadrature(
    poly: &[Point2],
    dofs: &DVector<f64>,
) -> Vector3<f64> {
    let n = poly.len();
    let area = vem_adapt::geometry::signed_area(poly);
    // 5-point Gauss-Legendre nodes/weights on [-1, 1].
    let gx = [
        -0.906179845938664,
        -0.5384693101056831,
        0.0,
        0.5384693101056831,
        0.906179845938664,
    ];
    let gw = [
        0.23692688505618908,
        0.47862867049936647,
        0.5688888888888889,
        0.47862867049936647,
        0.23692688505618908,
    ];
    let mut t = nalgebra::Matrix2::<f64>::zeros();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let len = a.dist(b);
        let nx = (b.y - a.y) / len;
        let ny = -(b.x - a.x) / len;
        let (ua, va) = (dofs[2 * i], dofs[2 * i + 1]);
        let j = (i + 1) % n;
        let (ub, vb) = (dofs[2 * j], dofs[2 * j + 1]);
        for k in 0..5 {
            let s = 0.5 * (gx[k] + 1.0);
            let w = 0.5 * gw[k] * len;
            let u = ua + s * (ub - ua);
            let v = va + s * (vb - va);
            t[(0, 0)] += w * u * nx;
            t[(0, 1)] += w * 0.5 * (u * ny + v * nx);
            t[(1, 0)] += w * 0.5 * (u * ny + v * nx);
            t[(1, 1)] += w * v * ny;
        }
    }
    t /= area;
    Vector3::new(t[(0, 0)], t[(1, 1)], 2.0 * t[(0, 1)])
}

#[test]
fn projection_matches_quadrature_oracle() {
    // Pentagon with one hanging (collinear) node on its lower edge.
    let poly = vec![
        Point2::new(0.0, 0.0),
        Point2::new(0.6, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.2, 0.9),
        Point2::new(0.3, 1.3),
    ];
    let mesh = single_element(&poly);
    let b = projection_operator(&mesh, 0).unwrap();

    // u = (x, 0): exact unit strain in x.
    let mut dofs = DVector::zeros(10);
    for (i, p) in poly.iter().enumerate() {
        dofs[2 * i] = p.x;
    }
    let implemented = &b * &dofs;
    let oracle = projected_strain_quadrature(&poly, &dofs);
    for k in 0..3 {
        assert!((implemented[k] - oracle[k]).abs() < 1e-13);
    }
    assert!((implemented[0] - 1.0).abs() < 1e-13);
    assert!(implemented[1].abs() < 1e-13);
    assert!(implemented[2].abs() < 1e-13);

    // A generic (non-polynomial) dof vector: both routes must still agree,
    // since the trace is piecewise linear either way.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dofs = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
    let implemented = &b * &dofs;
    let oracle = projected_strain_quadrature(&poly, &dofs);
    for k in 0..3 {
        assert!((implemented[k] - oracle[k]).abs() < 1e-12);
    }
}

#[test]
fn stiffness_spectrum_has_exactly_three_rigid_modes() {
    let material = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
    let d = constitutive_matrix(&material).unwrap();
    // Unit square element.
    let mesh = single_element(&[
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ]);
    let ks = element_matrices(&mesh, 0, &d, material.mu).unwrap();
    let eig = nalgebra::SymmetricEigen::new(ks.total());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(vals.iter().filter(|&&v| v.abs() < 1e-12).count(), 3);
    assert!(vals[3] > 1e-6);
    assert!(vals.iter().all(|&v| v > -1e-12), "stiffness must be PSD");
}

#[test]
fn uniaxial_stretch_matches_closed_form() {
    let problem = build_uniaxial();
    let material = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
    let d = constitutive_matrix(&material).unwrap();
    let ([eps_xx, eps_yy], sigma) = uniaxial_exact(material.lambda, material.mu);

    for (mode, n) in [(MeshMode::Structured, 16), (MeshMode::Voronoi, 40)] {
        let mesh = generate_mesh(&problem.domain, n, mode, 9).unwrap();
        let solution = assemble_and_solve(&mesh, &problem, &material).unwrap();
        // Displacements match u = (eps_xx x, eps_yy y) at every node.
        for (i, p) in mesh.nodes.iter().enumerate() {
            assert!((solution.u[2 * i] - eps_xx * p.x).abs() < 1e-10);
            assert!((solution.u[2 * i + 1] - eps_yy * p.y).abs() < 1e-10);
        }
        // Constant stress on every element, equal to the closed form.
        let stresses = element_stresses(&mesh, &solution.u, &d).unwrap();
        for s in &stresses {
            for k in 0..3 {
                assert!(
                    (s[k] - sigma[k]).abs() < 1e-10,
                    "stress {k}: {} vs {}",
                    s[k],
                    sigma[k]
                );
            }
        }
        // The estimated relative error of an exactly-reproduced field is
        // numerically zero.
        let report = compute_error_report(&mesh, &solution.u, &d).unwrap();
        assert!(report.rel_error <= 1e-10, "rel error {}", report.rel_error);
    }
}

#[test]
fn global_quadratic_form_matches_element_sum() {
    let problem = build_uniaxial();
    let material = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
    let mesh = generate_mesh(&problem.domain, 25, MeshMode::Voronoi, 4).unwrap();
    let solution = assemble_and_solve(&mesh, &problem, &material).unwrap();
    // u^T K u via per-element sums equals twice the elastic energy of the
    // uniaxial state integrated over the domain.
    let q = vem_adapt::solve::quadratic_form(&mesh, &material, &solution.u).unwrap();
    let ([eps_xx, eps_yy], sigma) = uniaxial_exact(material.lambda, material.mu);
    let exact = sigma[0] * eps_xx + sigma[1] * eps_yy; // sigma : eps per unit area
    assert!((q - exact).abs() < 1e-10, "{q} vs {exact}");
}
