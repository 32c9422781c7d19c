//! Benchmark problem definitions: the L-shaped domain under prescribed
//! corner displacements, the pseudo-dynamic punch, the linear patch test,
//! a uniaxial stretch with a closed-form solution, and a manufactured
//! smooth solution for convergence studies.

use crate::geometry::Point2;
use crate::mesh::{BoundaryCondition, BoundarySegment, DomainSpec};
use crate::solve::{BodyForce, Problem};
use crate::{Error, Result};

/// Benchmark selector for the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    LDomain,
    Punch,
    PatchTest,
    Uniaxial,
}

impl BenchmarkKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "l-domain" | "l_domain" => Ok(BenchmarkKind::LDomain),
            "punch" => Ok(BenchmarkKind::Punch),
            "patch-test" | "patch_test" => Ok(BenchmarkKind::PatchTest),
            "uniaxial" => Ok(BenchmarkKind::Uniaxial),
            other => Err(Error::Precondition(format!("unknown benchmark '{other}'"))),
        }
    }
}

/// L-shaped domain: unit bounding square, legs of thickness 1/4. The bottom
/// edge is constrained vertically, the left edge horizontally (fully fixing
/// the origin); the short top and right edges carry prescribed displacements
/// of 0.5 m outward.
pub fn build_l_domain() -> Problem {
    let p = |x: f64, y: f64| Point2::new(x, y);
    let outline = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.25), p(0.25, 0.25), p(0.25, 1.0), p(0.0, 1.0)];
    let segments = vec![
        BoundarySegment::new(outline[0], outline[1], BoundaryCondition::DirichletY(0.0)),
        BoundarySegment::new(outline[1], outline[2], BoundaryCondition::DirichletX(0.5)),
        BoundarySegment::new(outline[2], outline[3], BoundaryCondition::Free),
        BoundarySegment::new(outline[3], outline[4], BoundaryCondition::Free),
        BoundarySegment::new(outline[4], outline[5], BoundaryCondition::DirichletY(0.5)),
        BoundarySegment::new(outline[5], outline[0], BoundaryCondition::DirichletX(0.0)),
    ];
    Problem::new(DomainSpec::new(outline, segments).expect("valid outline"))
}

/// Punch load magnitude (N/m) and geometry constants.
pub const PUNCH_LOAD: f64 = 0.675;
pub const PUNCH_WIDTH: f64 = 0.3;
/// Punch centers: 0.45 m from the side edges of the 2 m square.
pub const PUNCH_LEFT_CENTER: f64 = 0.45;
pub const PUNCH_RIGHT_CENTER: f64 = 2.0 - 0.45;

/// Pseudo-dynamic punch: 2 m square, bottom edge constrained vertically.
/// Odd cycles load the left punch span, even cycles the right one; the
/// loaded span is also horizontally constrained. Both punch spans exist as
/// outline vertices for every cycle so that meshes can be reused unchanged.
pub fn build_punch(cycle_index: usize) -> Result<Problem> {
    if cycle_index == 0 {
        return Err(Error::Precondition("punch cycles are 1-based".into()));
    }
    let left = cycle_index % 2 == 1;
    let p = |x: f64, y: f64| Point2::new(x, y);
    let (l0, l1) = (PUNCH_LEFT_CENTER - PUNCH_WIDTH / 2.0, PUNCH_LEFT_CENTER + PUNCH_WIDTH / 2.0);
    let (r0, r1) = (PUNCH_RIGHT_CENTER - PUNCH_WIDTH / 2.0, PUNCH_RIGHT_CENTER + PUNCH_WIDTH / 2.0);
    // CCW outline; the top edge runs right-to-left, so spans appear in
    // descending x.
    let outline = vec![
        p(0.0, 0.0),
        p(2.0, 0.0),
        p(2.0, 2.0),
        p(r1, 2.0),
        p(r0, 2.0),
        p(l1, 2.0),
        p(l0, 2.0),
        p(0.0, 2.0),
    ];
    let mut segments = vec![
        BoundarySegment::new(outline[0], outline[1], BoundaryCondition::DirichletY(0.0)),
        BoundarySegment::new(outline[1], outline[2], BoundaryCondition::Free),
        BoundarySegment::new(outline[2], outline[3], BoundaryCondition::Free),
        BoundarySegment::new(outline[4], outline[5], BoundaryCondition::Free),
        BoundarySegment::new(outline[6], outline[7], BoundaryCondition::Free),
        BoundarySegment::new(outline[7], outline[0], BoundaryCondition::Free),
    ];
    let (active0, active1, idle0, idle1) = if left {
        (outline[6], outline[5], outline[4], outline[3])
    } else {
        (outline[4], outline[3], outline[6], outline[5])
    };
    // Active span: downward traction stacked with a horizontal constraint.
    segments.push(BoundarySegment::new(active0, active1, BoundaryCondition::Neumann(0.0, -PUNCH_LOAD)));
    segments.push(BoundarySegment::new(active0, active1, BoundaryCondition::DirichletX(0.0)));
    segments.push(BoundarySegment::new(idle0, idle1, BoundaryCondition::Free));
    Ok(Problem::new(DomainSpec::new(outline, segments)?))
}

/// Linear patch-test field: u = (0.3 x + 0.1 y, 0.2 x - 0.4 y).
pub fn patch_test_field(p: Point2) -> [f64; 2] {
    [0.3 * p.x + 0.1 * p.y, 0.2 * p.x - 0.4 * p.y]
}

/// Patch test: unit square with the linear field prescribed on the whole
/// boundary; a first-order method must reproduce it exactly.
pub fn build_patch_test() -> Problem {
    let p = |x: f64, y: f64| Point2::new(x, y);
    let outline = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
    let segments = (0..4)
        .map(|i| {
            BoundarySegment::new(
                outline[i],
                outline[(i + 1) % 4],
                BoundaryCondition::DirichletXY(0.0, 0.0),
            )
        })
        .collect();
    let mut problem = Problem::new(DomainSpec::new(outline, segments).expect("valid outline"));
    problem.dirichlet_field = Some(Box::new(patch_test_field));
    problem
}

/// Prescribed top displacement of the uniaxial benchmark.
pub const UNIAXIAL_TOP_UY: f64 = 0.1;

/// Uniaxial stretch of the unit square: bottom constrained vertically, left
/// horizontally, top pulled up by a prescribed uy; the exact solution is a
/// homogeneous strain state with zero horizontal stress.
pub fn build_uniaxial() -> Problem {
    let p = |x: f64, y: f64| Point2::new(x, y);
    let outline = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
    let segments = vec![
        BoundarySegment::new(outline[0], outline[1], BoundaryCondition::DirichletY(0.0)),
        BoundarySegment::new(outline[1], outline[2], BoundaryCondition::Free),
        BoundarySegment::new(outline[2], outline[3], BoundaryCondition::DirichletY(UNIAXIAL_TOP_UY)),
        BoundarySegment::new(outline[3], outline[0], BoundaryCondition::DirichletX(0.0)),
    ];
    Problem::new(DomainSpec::new(outline, segments).expect("valid outline"))
}

/// Exact uniaxial solution for regime-effective Lame parameters: strains
/// (eps_xx, eps_yy) and the constant Voigt stress.
pub fn uniaxial_exact(lambda: f64, mu: f64) -> ([f64; 2], [f64; 3]) {
    let eps_yy = UNIAXIAL_TOP_UY;
    let eps_xx = -lambda / (lambda + 2.0 * mu) * eps_yy;
    let sxx = (lambda + 2.0 * mu) * eps_xx + lambda * eps_yy;
    let syy = lambda * eps_xx + (lambda + 2.0 * mu) * eps_yy;
    ([eps_xx, eps_yy], [sxx, syy, 0.0])
}

/// Manufactured smooth solution on the unit square:
/// u = (sin(pi x) sin(pi y), 0), homogeneous Dirichlet boundary.
pub fn manufactured_displacement(p: Point2) -> [f64; 2] {
    [(std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin(), 0.0]
}

/// Exact Voigt stress of the manufactured solution.
pub fn manufactured_stress(lambda: f64, mu: f64, p: Point2) -> [f64; 3] {
    let pi = std::f64::consts::PI;
    let exx = pi * (pi * p.x).cos() * (pi * p.y).sin();
    let gxy = pi * (pi * p.x).sin() * (pi * p.y).cos();
    [(lambda + 2.0 * mu) * exx, lambda * exx, mu * gxy]
}

/// Matching body force b = -div sigma for the manufactured solution.
pub fn manufactured_body_force(lambda: f64, mu: f64, p: Point2) -> [f64; 2] {
    let pi = std::f64::consts::PI;
    let s = (pi * p.x).sin() * (pi * p.y).sin();
    let c = (pi * p.x).cos() * (pi * p.y).cos();
    [pi * pi * (lambda + 3.0 * mu) * s, -pi * pi * (lambda + mu) * c]
}

/// Manufactured-solution problem with the matching body force.
pub fn build_manufactured(lambda: f64, mu: f64) -> Problem {
    let p = |x: f64, y: f64| Point2::new(x, y);
    let outline = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
    let segments = (0..4)
        .map(|i| {
            BoundarySegment::new(
                outline[i],
                outline[(i + 1) % 4],
                BoundaryCondition::DirichletXY(0.0, 0.0),
            )
        })
        .collect();
    let mut problem = Problem::new(DomainSpec::new(outline, segments).expect("valid outline"));
    problem.body_force =
        BodyForce::Field(Box::new(move |pt| manufactured_body_force(lambda, mu, pt)));
    problem
}
