//! The adaptation driver: element selection for refinement and patch
//! selection for coarsening under a target relative error, a target element
//! count, or a target node count, with stability- and accuracy-based
//! termination.

use serde::{Deserialize, Serialize};

use crate::coarsen::{coarsen_batch, patch_eligible_with};
use crate::estimate::{compute_error_report, ErrorReport};
use crate::material::{constitutive_matrix, MaterialParams};
use crate::mesh::PolyMesh;
use crate::meshgen::MeshMode;
use crate::refine::refine_batch;
use crate::solve::{assemble_and_solve, Problem};
use crate::{Error, Result};

/// What the adaptation should drive the mesh toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptTarget {
    /// Target relative energy error in percent (0 < p < 100).
    RelError(f64),
    /// Target number of elements.
    Elements(usize),
    /// Target number of nodes.
    Nodes(usize),
}

impl AdaptTarget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AdaptTarget::RelError(p) if p <= 0.0 || p >= 100.0 => Err(Error::Precondition(
                format!("target error must lie in (0, 100) percent, got {p}"),
            )),
            AdaptTarget::Elements(0) | AdaptTarget::Nodes(0) => {
                Err(Error::Precondition("resource target must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Expected net effect of one refinement / one coarsening, per mesh family.
#[derive(Debug, Clone, Copy)]
pub struct PlanningConstants {
    pub n_refine: f64,
    pub n_coarsen: f64,
}

impl PlanningConstants {
    pub fn for_mode(mode: MeshMode) -> Self {
        match mode {
            MeshMode::Structured => PlanningConstants { n_refine: 4.0, n_coarsen: 4.0 },
            MeshMode::Voronoi => PlanningConstants { n_refine: 5.0, n_coarsen: 3.0 },
        }
    }
}

/// Fitted nodes-per-element ratio r = a * n_v^b, per mesh family and size
/// regime.
pub fn nodes_per_element_ratio(mode: MeshMode, n_v: f64) -> f64 {
    let (a, b) = match (mode, n_v <= 1000.0) {
        (MeshMode::Structured, true) => (2.2763, -0.102),
        (MeshMode::Structured, false) => (1.5032, -0.04),
        (MeshMode::Voronoi, true) => (2.2225, -0.054),
        (MeshMode::Voronoi, false) => (2.0871, -0.044),
    };
    a * n_v.powf(b)
}

/// Convert a node target into an equivalent element target through the
/// fitted ratio, evaluated at the target node count.
pub fn nodes_to_elements(n_v_target: usize, mode: MeshMode) -> usize {
    let r = nodes_per_element_ratio(mode, n_v_target as f64);
    ((n_v_target as f64 / r).round() as usize).max(1)
}

/// Element-level error target and its admissible band for a global error
/// target on a mesh with `n_el` elements.
#[derive(Debug, Clone, Copy)]
pub struct ErrorBounds {
    /// e_targ = 2 (||e||_targ)^2 / n_el.
    pub e_targ: f64,
    /// ||e_loc||_targ = sqrt(e_targ / 2).
    pub norm_loc_targ: f64,
    /// Refinement threshold, 2x the local target.
    pub upper: f64,
    /// Lower band edge, 0.5x the local target.
    pub lower: f64,
}

pub fn element_error_bounds(global_target: f64, n_el: usize) -> ErrorBounds {
    let e_targ = 2.0 * global_target * global_target / n_el.max(1) as f64;
    let norm_loc_targ = (0.5 * e_targ).sqrt();
    ErrorBounds { e_targ, norm_loc_targ, upper: 2.0 * norm_loc_targ, lower: 0.5 * norm_loc_targ }
}

/// Shift the working target by half the discrepancy between the measured
/// error and the specified target. Repeated applications drive the measured
/// error to the specified value even when the process responds to the
/// working target with a systematic bias.
pub fn update_working_target(working: f64, measured: f64, specified: f64) -> f64 {
    working - (measured - specified) / 2.0
}

/// Relative change |a - b| / |b| with a zero-safe convention.
fn rel_change(current: f64, previous: f64) -> f64 {
    if previous == 0.0 {
        if current == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((current - previous) / previous).abs()
    }
}

/// Stability tolerance per mesh family (relative deviation per iteration).
pub fn stability_tol(mode: MeshMode) -> f64 {
    match mode {
        MeshMode::Structured => 0.01,
        MeshMode::Voronoi => 0.02,
    }
}

/// The system is stable when neither the node count nor the relative error
/// moved by more than the tolerance across each of the last three
/// successive iteration pairs.
pub fn check_stability(history: &AdaptHistory, mode: MeshMode) -> bool {
    let recs = &history.records;
    if recs.len() < 4 {
        return false;
    }
    let tol = stability_tol(mode);
    let last = &recs[recs.len() - 4..];
    (1..4).all(|k| {
        rel_change(last[k].n_v as f64, last[k - 1].n_v as f64) <= tol
            && rel_change(last[k].rel_error, last[k - 1].rel_error) <= tol
    })
}

/// Accuracy test: the measured relative error (percent) lies within 1%
/// (structured) or 2% (Voronoi) of the target, relatively.
pub fn check_accuracy(measured_pct: f64, target_pct: f64, mode: MeshMode) -> bool {
    let tol = stability_tol(mode);
    (measured_pct - target_pct).abs() / target_pct <= tol
}

/// Safety factor on the coarsening threshold. The patch prediction slightly
/// underestimates the post-merge error (the recovered field smooths the
/// real one), so marking patches all the way up to the refinement bound
/// produces merge/refine limit cycles on elements whose equilibrium error
/// sits near the bound. Coarsening only clearly-below-bound patches keeps
/// the post-merge error inside the admissible band.
pub const COARSEN_SAFETY: f64 = 0.85;

/// Marked element ids to refine and node ids whose patches to coarsen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkedSets {
    pub refine: Vec<usize>,
    pub coarsen: Vec<usize>,
}

impl MarkedSets {
    pub fn is_empty(&self) -> bool {
        self.refine.is_empty() && self.coarsen.is_empty()
    }
}

/// Greedily select coarsening patches from candidates sorted by ascending
/// prediction: eligible, pairwise element-disjoint, not touching any element
/// marked for refinement, at most `limit` picks.
fn select_coarsen_patches(
    mesh: &PolyMesh,
    domain: &crate::mesh::DomainSpec,
    adjacency: &[Vec<usize>],
    candidates: &[(f64, usize)],
    exclude: &[bool],
    limit: usize,
) -> Vec<usize> {
    let mut taken_elems = vec![false; mesh.n_elements()];
    let mut picks = Vec::new();
    for &(_, node) in candidates {
        if picks.len() >= limit {
            break;
        }
        let patch = &adjacency[node];
        if patch.is_empty() || patch.iter().any(|&e| exclude[e] || taken_elems[e]) {
            continue;
        }
        if !patch_eligible_with(mesh, domain, node, adjacency) {
            continue;
        }
        for &e in patch {
            taken_elems[e] = true;
        }
        picks.push(node);
    }
    picks
}

/// Error-target marking: refine every element whose error exceeds the upper
/// bound; coarsen every eligible patch predicted below the upper bound.
pub fn mark_for_error_target(
    mesh: &PolyMesh,
    domain: &crate::mesh::DomainSpec,
    report: &ErrorReport,
    bounds: &ErrorBounds,
) -> MarkedSets {
    let refine: Vec<usize> = (0..mesh.n_elements())
        .filter(|&i| report.norm_e[i] > bounds.upper)
        .collect();
    let mut exclude = vec![false; mesh.n_elements()];
    for &e in &refine {
        exclude[e] = true;
    }
    let adjacency = mesh.node_to_elements();
    let mut candidates: Vec<(f64, usize)> = (0..mesh.n_nodes())
        .filter(|&v| report.patch_prediction[v] < COARSEN_SAFETY * bounds.upper)
        .map(|v| (report.patch_prediction[v], v))
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let coarsen =
        select_coarsen_patches(mesh, domain, &adjacency, &candidates, &exclude, usize::MAX);
    MarkedSets { refine, coarsen }
}

/// Round-half-up with a floor of one for positive raw counts.
fn planning_round(raw: f64) -> usize {
    if raw <= 0.0 {
        0
    } else {
        (raw.round() as usize).max(1)
    }
}

/// Phase-1 resource marking: move the element count toward the target with
/// uniform refinement/coarsening when far away, partial otherwise.
pub fn plan_resource_phase1(
    mesh: &PolyMesh,
    domain: &crate::mesh::DomainSpec,
    report: &ErrorReport,
    n_el_target: usize,
    constants: &PlanningConstants,
) -> MarkedSets {
    let n_el = mesh.n_elements();
    let adjacency = mesh.node_to_elements();
    if n_el < n_el_target {
        let ratio = n_el_target as f64 / n_el as f64;
        let refine: Vec<usize> = if ratio >= constants.n_refine {
            (0..n_el).collect()
        } else {
            let count =
                planning_round((n_el_target - n_el) as f64 / (constants.n_refine - 1.0));
            let mut by_err: Vec<(f64, usize)> =
                report.norm_e.iter().cloned().zip(0..n_el).collect();
            by_err.sort_by(|a, b| (b.0, a.1).partial_cmp(&(a.0, b.1)).unwrap());
            let mut ids: Vec<usize> = by_err.into_iter().take(count).map(|(_, i)| i).collect();
            ids.sort_unstable();
            ids
        };
        MarkedSets { refine, coarsen: Vec::new() }
    } else if n_el > n_el_target {
        let ratio = n_el as f64 / n_el_target as f64;
        let limit = if ratio >= constants.n_coarsen {
            usize::MAX
        } else {
            planning_round((n_el - n_el_target) as f64 / (constants.n_coarsen - 1.0))
        };
        let mut candidates: Vec<(f64, usize)> = (0..mesh.n_nodes())
            .map(|v| (report.patch_prediction[v], v))
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exclude = vec![false; n_el];
        let coarsen =
            select_coarsen_patches(mesh, domain, &adjacency, &candidates, &exclude, limit);
        MarkedSets { refine: Vec::new(), coarsen }
    } else {
        MarkedSets::default()
    }
}

/// Phase-2 resource marking: identify candidates with the error-target rules
/// at the current global error, then trim both lists so refinement adds as
/// many elements as coarsening removes. The trim uses the actual expected
/// size of every operation (children per refinement, patch size per merge)
/// rather than the planning averages, which keeps the per-iteration element
/// drift within the rounding slack.
pub fn plan_resource_phase2(
    mesh: &PolyMesh,
    domain: &crate::mesh::DomainSpec,
    report: &ErrorReport,
    constants: &PlanningConstants,
) -> MarkedSets {
    let _ = constants;
    let n_el = mesh.n_elements();
    let bounds = element_error_bounds(report.global_error, n_el);
    let mut refine_cand: Vec<(f64, usize)> = (0..n_el)
        .filter(|&i| report.norm_e[i] > bounds.upper)
        .map(|i| (report.norm_e[i], i))
        .collect();
    refine_cand.sort_by(|a, b| (b.0, a.1).partial_cmp(&(a.0, b.1)).unwrap());

    let mut exclude = vec![false; n_el];
    for &(_, e) in &refine_cand {
        exclude[e] = true;
    }
    let adjacency = mesh.node_to_elements();
    let mut coarsen_cand: Vec<(f64, usize)> = (0..mesh.n_nodes())
        .filter(|&v| report.patch_prediction[v] < COARSEN_SAFETY * bounds.upper)
        .map(|v| (report.patch_prediction[v], v))
        .collect();
    coarsen_cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let coarsen_all =
        select_coarsen_patches(mesh, domain, &adjacency, &coarsen_cand, &exclude, usize::MAX);

    // Net element change of each operation.
    let add_w: Vec<usize> = refine_cand
        .iter()
        .map(|&(_, e)| crate::refine::corner_count(mesh, e).saturating_sub(1))
        .collect();
    let rem_w: Vec<usize> =
        coarsen_all.iter().map(|&v| adjacency[v].len().saturating_sub(1)).collect();
    let total_add: usize = add_w.iter().sum();
    let total_rem: usize = rem_w.iter().sum();
    let n_mod = total_add.min(total_rem);
    if n_mod == 0 {
        return MarkedSets::default();
    }
    let take_until = |weights: &[usize], cap: usize| -> (usize, usize) {
        let mut k = 0;
        let mut sum = 0;
        for &w in weights {
            if sum + w > cap && sum > 0 {
                break;
            }
            sum += w;
            k += 1;
            if sum >= cap {
                break;
            }
        }
        (k, sum)
    };
    let (k_ref, added) = take_until(&add_w, n_mod);
    let (k_coar, _removed) = take_until(&rem_w, added);
    let mut refine: Vec<usize> =
        refine_cand.into_iter().take(k_ref).map(|(_, i)| i).collect();
    refine.sort_unstable();
    let coarsen: Vec<usize> = coarsen_all.into_iter().take(k_coar).collect();
    MarkedSets { refine, coarsen }
}

/// Trim candidate counts so that the elements added by refinement equal the
/// elements removed by coarsening: n_mod = min(n_add, n_rem), then back to
/// per-operation counts.
pub fn phase2_trim(
    refine_candidates: usize,
    coarsen_candidates: usize,
    constants: &PlanningConstants,
) -> (usize, usize) {
    let n_add = (constants.n_refine - 1.0) * refine_candidates as f64;
    let n_rem = (constants.n_coarsen - 1.0) * coarsen_candidates as f64;
    let n_mod = n_add.min(n_rem);
    if n_mod <= 0.0 {
        return (0, 0);
    }
    let n_ref = planning_round(n_mod / (constants.n_refine - 1.0)).min(refine_candidates);
    let n_coar = planning_round(n_mod / (constants.n_coarsen - 1.0)).min(coarsen_candidates);
    (n_ref, n_coar)
}

/// Adaptation phase, recorded per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Error-target loop.
    Error,
    /// Resource loop, phase 1 (meet the count).
    Resource1,
    /// Resource loop, phase 2 (hold the count, even out the error).
    Resource2,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Error => "error",
            Phase::Resource1 => "phase1",
            Phase::Resource2 => "phase2",
        }
    }
}

/// Distribution statistics of the element error norms ||e_i||.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorStats {
    pub max_trim5: f64,
    pub min_trim5: f64,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// 5%-trimmed extrema and quartiles of the element error norms.
pub fn error_stats(norm_e: &[f64]) -> ErrorStats {
    let mut v: Vec<f64> = norm_e.to_vec();
    if v.is_empty() {
        return ErrorStats::default();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let k = (0.05 * n as f64).floor() as usize;
    let quantile = |p: f64| -> f64 {
        let pos = p * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    ErrorStats {
        max_trim5: v[n - 1 - k],
        min_trim5: v[k],
        mean: v.iter().sum::<f64>() / n as f64,
        median: quantile(0.5),
        q1: quantile(0.25),
        q3: quantile(0.75),
    }
}

/// One row of the adaptation history: the solved state plus the marks that
/// were applied to leave it.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub phase: Phase,
    pub n_el: usize,
    pub n_v: usize,
    /// Relative error as a fraction.
    pub rel_error: f64,
    pub energy_error: f64,
    pub energy: f64,
    /// Working target: percent for error runs, element target for resource
    /// runs.
    pub working_target: f64,
    pub n_refined: usize,
    pub n_coarsened: usize,
    pub marks: MarkedSets,
    pub stats: ErrorStats,
}

/// Full run record.
#[derive(Debug, Clone, Default)]
pub struct AdaptHistory {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl AdaptHistory {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Iteration cap and knobs for the outer loop.
#[derive(Debug, Clone, Copy)]
pub struct AdaptCaps {
    pub max_iter: usize,
}

impl Default for AdaptCaps {
    fn default() -> Self {
        AdaptCaps { max_iter: 50 }
    }
}

fn mix_iteration_seed(rng_seed: u64, iter: usize) -> u64 {
    let mut z = rng_seed ^ (iter as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z = (z ^ (z >> 32)).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z ^ (z >> 32)
}

/// Observer invoked with every solved state (iteration index, mesh, report).
pub type IterationObserver<'a> = &'a mut dyn FnMut(usize, &PolyMesh, &ErrorReport);

/// Run the adaptation loop on `mesh` until the target and termination
/// criteria are met or the iteration cap is exhausted.
pub fn run_adaptation(
    mesh: PolyMesh,
    problem: &Problem,
    material: &MaterialParams,
    target: AdaptTarget,
    mode: MeshMode,
    rng_seed: u64,
    caps: &AdaptCaps,
) -> Result<(PolyMesh, AdaptHistory)> {
    run_adaptation_with(mesh, problem, material, target, mode, rng_seed, caps, None)
}

/// [`run_adaptation`] with an observer for per-iteration snapshots.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptation_with(
    mut mesh: PolyMesh,
    problem: &Problem,
    material: &MaterialParams,
    target: AdaptTarget,
    mode: MeshMode,
    rng_seed: u64,
    caps: &AdaptCaps,
    mut observer: Option<IterationObserver<'_>>,
) -> Result<(PolyMesh, AdaptHistory)> {
    target.validate()?;
    let d = constitutive_matrix(material)?;
    let constants = PlanningConstants::for_mode(mode);
    let domain = &problem.domain;
    let mut history = AdaptHistory::default();

    // Working state for the error strategy.
    let mut working_pct = match target {
        AdaptTarget::RelError(p) => p,
        _ => 0.0,
    };
    let mut last_retarget: Option<usize> = None;

    // Working state for the resource strategies.
    let table_el_target = match target {
        AdaptTarget::Elements(n) => n,
        AdaptTarget::Nodes(n) => nodes_to_elements(n, mode),
        AdaptTarget::RelError(_) => 0,
    };
    let mut phase = match target {
        AdaptTarget::RelError(_) => Phase::Error,
        _ => Phase::Resource1,
    };
    let mut stagnant = 0usize;

    let solve_and_report = |mesh: &PolyMesh| -> Result<ErrorReport> {
        let solution = assemble_and_solve(mesh, problem, material)?;
        compute_error_report(mesh, &solution.u, &d)
    };

    let mut report = solve_and_report(&mesh)?;

    for iter in 0..=caps.max_iter {
        let rel_pct = 100.0 * report.rel_error;
        let mut record = IterationRecord {
            iter,
            phase,
            n_el: mesh.n_elements(),
            n_v: mesh.n_nodes(),
            rel_error: report.rel_error,
            energy_error: report.global_error,
            energy: report.global_energy,
            working_target: match target {
                AdaptTarget::RelError(_) => working_pct,
                _ => table_el_target as f64,
            },
            n_refined: 0,
            n_coarsened: 0,
            marks: MarkedSets::default(),
            stats: error_stats(&report.norm_e),
        };

        if let Some(obs) = observer.as_mut() {
            obs(iter, &mesh, &report);
        }
        // Termination checks on the solved state.
        history.records.push(record.clone());
        let stable = check_stability(&history, mode);
        let marks = match (target, phase) {
            (AdaptTarget::RelError(target_pct), _) => {
                if stable && check_accuracy(rel_pct, target_pct, mode) {
                    history.converged = true;
                    history.records.last_mut().unwrap().working_target = working_pct;
                    break;
                }
                if stable && last_retarget.map_or(true, |l| iter - l >= 3) {
                    working_pct = update_working_target(working_pct, rel_pct, target_pct);
                    last_retarget = Some(iter);
                }
                let bounds =
                    element_error_bounds(working_pct / 100.0 * report.global_energy, mesh.n_elements());
                mark_for_error_target(&mesh, domain, &report, &bounds)
            }
            (_, Phase::Resource1) => {
                let (count_now, count_targ) = match target {
                    AdaptTarget::Elements(n) => (mesh.n_elements(), n),
                    AdaptTarget::Nodes(n) => (mesh.n_nodes(), n),
                    AdaptTarget::RelError(_) => unreachable!(),
                };
                let within =
                    (count_now as f64 - count_targ as f64).abs() <= 0.01 * count_targ as f64;
                if within || stagnant >= 3 {
                    phase = Phase::Resource2;
                    history.records.last_mut().unwrap().phase = phase;
                    record.phase = phase;
                    plan_resource_phase2(&mesh, domain, &report, &constants)
                } else {
                    // For node targets the fitted table ratio provides the
                    // first element-count estimate; afterwards the measured
                    // nodes-per-element ratio of the current mesh steers the
                    // element target so the node count, which cannot be
                    // controlled directly, converges.
                    let working_el_target = match target {
                        AdaptTarget::Elements(n) => n,
                        AdaptTarget::Nodes(n) => {
                            if iter == 0 {
                                table_el_target
                            } else {
                                let ratio = mesh.n_nodes() as f64 / mesh.n_elements() as f64;
                                ((n as f64 / ratio).round() as usize).max(1)
                            }
                        }
                        AdaptTarget::RelError(_) => unreachable!(),
                    };
                    history.records.last_mut().unwrap().working_target =
                        working_el_target as f64;
                    plan_resource_phase1(&mesh, domain, &report, working_el_target, &constants)
                }
            }
            (_, Phase::Resource2) | (_, Phase::Error) => {
                // Batch skips can let the count drift out of the window;
                // phase 1 reasserts it before phase 2 may terminate.
                let (count_now, count_targ) = match target {
                    AdaptTarget::Elements(n) => (mesh.n_elements(), n),
                    AdaptTarget::Nodes(n) => (mesh.n_nodes(), n),
                    AdaptTarget::RelError(_) => unreachable!(),
                };
                let within =
                    (count_now as f64 - count_targ as f64).abs() <= 0.01 * count_targ as f64;
                if !within {
                    let working_el_target = match target {
                        AdaptTarget::Elements(n) => n,
                        AdaptTarget::Nodes(n) => {
                            let ratio = mesh.n_nodes() as f64 / mesh.n_elements() as f64;
                            ((n as f64 / ratio).round() as usize).max(1)
                        }
                        AdaptTarget::RelError(_) => unreachable!(),
                    };
                    plan_resource_phase1(&mesh, domain, &report, working_el_target, &constants)
                } else {
                    if stable {
                        history.converged = true;
                        break;
                    }
                    plan_resource_phase2(&mesh, domain, &report, &constants)
                }
            }
        };

        if iter == caps.max_iter {
            // Cap reached: the last record keeps its empty marks.
            break;
        }

        if marks.is_empty() {
            stagnant += 1;
            // No-op iteration: the state repeats; stability will pick it up.
            history.records.last_mut().unwrap().marks = MarkedSets::default();
            continue;
        }
        stagnant = 0;

        // Apply: coarsen first, then refine the surviving marked elements.
        let outcome = coarsen_batch(&mut mesh, domain, &marks.coarsen);
        let refine_ids: Vec<usize> = marks
            .refine
            .iter()
            .filter_map(|&e| outcome.element_map[e])
            .collect();
        let refined =
            refine_batch(&mut mesh, &refine_ids, mode, mix_iteration_seed(rng_seed, iter))?;

        {
            let last = history.records.last_mut().unwrap();
            last.marks = marks.clone();
            last.n_refined = refined;
            last.n_coarsened = outcome.coarsened;
        }

        report = solve_and_report(&mesh)?;
    }

    Ok((mesh, history))
}
