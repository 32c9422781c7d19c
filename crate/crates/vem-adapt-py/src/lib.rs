//! Python bindings for the adaptive VEM library: mesh generation, the
//! elasticity solve with error estimation, and the adaptive remeshing loop,
//! exposed over plain Python types.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use vem_adapt::adapt::{run_adaptation, AdaptCaps, AdaptTarget};
use vem_adapt::bench::{
    build_l_domain, build_patch_test, build_punch, build_uniaxial, BenchmarkKind,
};
use vem_adapt::estimate::compute_error_report;
use vem_adapt::material::{constitutive_matrix, MaterialParams, PlaneRegime};
use vem_adapt::meshgen::{generate_mesh, MeshMode};
use vem_adapt::output::mesh_svg;
use vem_adapt::solve::{assemble_and_solve, Problem};

fn to_py(e: vem_adapt::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<MeshMode> {
    match mode {
        "structured" => Ok(MeshMode::Structured),
        "voronoi" => Ok(MeshMode::Voronoi),
        other => Err(PyValueError::new_err(format!(
            "unknown mesh mode '{other}' (use 'structured' or 'voronoi')"
        ))),
    }
}

fn parse_regime(regime: &str) -> PyResult<PlaneRegime> {
    match regime {
        "plane-strain" => Ok(PlaneRegime::PlaneStrain),
        "plane-stress" => Ok(PlaneRegime::PlaneStress),
        other => Err(PyValueError::new_err(format!(
            "unknown regime '{other}' (use 'plane-strain' or 'plane-stress')"
        ))),
    }
}

fn build_problem(bench: &str, cycle: usize) -> PyResult<Problem> {
    let kind = BenchmarkKind::parse(bench).map_err(to_py)?;
    match kind {
        BenchmarkKind::LDomain => Ok(build_l_domain()),
        BenchmarkKind::Punch => build_punch(cycle).map_err(to_py),
        BenchmarkKind::PatchTest => Ok(build_patch_test()),
        BenchmarkKind::Uniaxial => Ok(build_uniaxial()),
    }
}

/// A conforming polygonal mesh.
#[pyclass]
#[derive(Clone)]
struct Mesh {
    inner: vem_adapt::PolyMesh,
}

#[pymethods]
impl Mesh {
    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    /// Node coordinates as a list of (x, y) pairs.
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p.x, p.y)).collect()
    }

    /// Element vertex cycles as lists of node indices (CCW).
    fn elements(&self) -> Vec<Vec<usize>> {
        self.inner.elements.clone()
    }

    fn element_area(&self, elem: usize) -> PyResult<f64> {
        self.inner.element_area(elem).map_err(to_py)
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    /// Human-readable conformity violations; an empty list means the mesh
    /// satisfies every invariant.
    fn conformity_violations(&self) -> Vec<String> {
        self.inner.check_conformity().iter().map(|v| v.to_string()).collect()
    }

    /// All elements sharing the given node.
    fn node_patch(&self, node: usize) -> Vec<usize> {
        self.inner.node_patch(node)
    }

    fn write_json(&self, path: &str) -> PyResult<()> {
        vem_adapt::mesh::write_mesh(&self.inner, std::path::Path::new(path)).map_err(to_py)
    }

    #[staticmethod]
    fn read_json(path: &str) -> PyResult<Mesh> {
        vem_adapt::mesh::read_mesh(std::path::Path::new(path))
            .map(|inner| Mesh { inner })
            .map_err(to_py)
    }

    /// SVG rendering (optionally colored by per-element values).
    #[pyo3(signature = (errors=None))]
    fn svg(&self, errors: Option<Vec<f64>>) -> String {
        mesh_svg(&self.inner, errors.as_deref())
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n_nodes={}, n_elements={})", self.inner.n_nodes(), self.inner.n_elements())
    }
}

/// Solution of one elasticity solve with its error estimate.
#[pyclass]
struct Solution {
    /// Interleaved nodal displacements (ux0, uy0, ux1, ...).
    #[pyo3(get)]
    displacements: Vec<f64>,
    #[pyo3(get)]
    rel_error: f64,
    #[pyo3(get)]
    energy_error: f64,
    #[pyo3(get)]
    energy: f64,
    /// Per-element energy error norms ||e_i||.
    #[pyo3(get)]
    element_errors: Vec<f64>,
}

/// Generate an initial mesh for a named benchmark domain
/// (l-domain, punch, patch-test, uniaxial).
#[pyfunction]
#[pyo3(signature = (bench, n, mode="voronoi", seed=0))]
fn generate(bench: &str, n: usize, mode: &str, seed: u64) -> PyResult<Mesh> {
    let problem = build_problem(bench, 1)?;
    let mode = parse_mode(mode)?;
    generate_mesh(&problem.domain, n, mode, seed)
        .map(|inner| Mesh { inner })
        .map_err(to_py)
}

/// Solve a benchmark problem on a mesh and estimate the energy error.
#[pyfunction]
#[pyo3(signature = (bench, mesh, regime="plane-strain", cycle=1))]
fn solve(bench: &str, mesh: &Mesh, regime: &str, cycle: usize) -> PyResult<Solution> {
    let problem = build_problem(bench, cycle)?;
    let material = MaterialParams::new(1.0, 0.3, parse_regime(regime)?).map_err(to_py)?;
    let d = constitutive_matrix(&material).map_err(to_py)?;
    let solution = assemble_and_solve(&mesh.inner, &problem, &material).map_err(to_py)?;
    let report = compute_error_report(&mesh.inner, &solution.u, &d).map_err(to_py)?;
    Ok(Solution {
        displacements: solution.u,
        rel_error: report.rel_error,
        energy_error: report.global_error,
        energy: report.global_energy,
        element_errors: report.norm_e,
    })
}

/// Run the adaptive remeshing loop. `target_kind` is one of
/// "error" (percent), "elements", "nodes". Returns the final mesh, the
/// per-iteration history (list of dicts) and a convergence flag.
#[pyfunction]
#[pyo3(signature = (bench, mesh, target_kind, target_value, mode="voronoi",
                    seed=0, max_iter=50, regime="plane-strain", cycle=1))]
#[allow(clippy::too_many_arguments)]
fn adapt<'py>(
    py: Python<'py>,
    bench: &str,
    mesh: &Mesh,
    target_kind: &str,
    target_value: f64,
    mode: &str,
    seed: u64,
    max_iter: usize,
    regime: &str,
    cycle: usize,
) -> PyResult<(Mesh, Bound<'py, PyList>, bool)> {
    let problem = build_problem(bench, cycle)?;
    let material = MaterialParams::new(1.0, 0.3, parse_regime(regime)?).map_err(to_py)?;
    let target = match target_kind {
        "error" => AdaptTarget::RelError(target_value),
        "elements" => AdaptTarget::Elements(target_value as usize),
        "nodes" => AdaptTarget::Nodes(target_value as usize),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown target kind '{other}' (use 'error', 'elements' or 'nodes')"
            )))
        }
    };
    let (final_mesh, history) = run_adaptation(
        mesh.inner.clone(),
        &problem,
        &material,
        target,
        parse_mode(mode)?,
        seed,
        &AdaptCaps { max_iter },
    )
    .map_err(to_py)?;
    let rows = PyList::empty(py);
    for r in &history.records {
        let row = PyDict::new(py);
        row.set_item("iter", r.iter)?;
        row.set_item("phase", r.phase.as_str())?;
        row.set_item("n_el", r.n_el)?;
        row.set_item("n_v", r.n_v)?;
        row.set_item("rel_error", r.rel_error)?;
        row.set_item("energy_error", r.energy_error)?;
        row.set_item("energy", r.energy)?;
        row.set_item("working_target", r.working_target)?;
        row.set_item("n_refined", r.n_refined)?;
        row.set_item("n_coarsened", r.n_coarsened)?;
        rows.append(row)?;
    }
    Ok((Mesh { inner: final_mesh }, rows, history.converged))
}

/// Refine a set of elements in place, returning a new mesh.
#[pyfunction]
#[pyo3(signature = (mesh, elements, mode="voronoi", seed=0))]
fn refine(mesh: &Mesh, elements: Vec<usize>, mode: &str, seed: u64) -> PyResult<Mesh> {
    let mut out = mesh.inner.clone();
    vem_adapt::refine::refine_batch(&mut out, &elements, parse_mode(mode)?, seed)
        .map_err(to_py)?;
    Ok(Mesh { inner: out })
}

/// Coarsen the patches around the given nodes (skips ineligible patches),
/// returning a new mesh.
#[pyfunction]
fn coarsen(bench: &str, mesh: &Mesh, nodes: Vec<usize>) -> PyResult<Mesh> {
    let problem = build_problem(bench, 1)?;
    let mut out = mesh.inner.clone();
    vem_adapt::coarsen::coarsen_batch(&mut out, &problem.domain, &nodes);
    Ok(Mesh { inner: out })
}

#[pymodule]
fn _vem_adapt(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mesh>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(coarsen, m)?)?;
    Ok(())
}
