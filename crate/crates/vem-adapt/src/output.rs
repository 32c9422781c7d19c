//! Run outputs: the per-iteration history as CSV, mesh snapshots as JSON,
//! and simple SVG renderings of the mesh (optionally colored by element
//! error).

use std::path::Path;

use crate::adapt::AdaptHistory;
use crate::geometry::bbox;
use crate::mesh::{write_mesh, PolyMesh};
use crate::Result;

pub const HISTORY_HEADER: &str = "iter,phase,n_el,n_v,rel_error,energy_error,energy,working_target,n_refined,n_coarsened,max_elem_err_trim5,min_elem_err_trim5,mean_elem_err,median_elem_err,q1,q3";

/// Render the adaptation history as CSV. The relative error column is in
/// percent; floats use the shortest round-trip decimal form.
pub fn history_csv(history: &AdaptHistory) -> String {
    let mut out = String::with_capacity(256 * (history.records.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in &history.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.phase.as_str(),
            r.n_el,
            r.n_v,
            100.0 * r.rel_error,
            r.energy_error,
            r.energy,
            r.working_target,
            r.n_refined,
            r.n_coarsened,
            r.stats.max_trim5,
            r.stats.min_trim5,
            r.stats.mean,
            r.stats.median,
            r.stats.q1,
            r.stats.q3,
        ));
    }
    out
}

pub fn write_history_csv(history: &AdaptHistory, path: &Path) -> Result<()> {
    std::fs::write(path, history_csv(history))?;
    Ok(())
}

fn error_color(t: f64) -> String {
    // Light blue (low) to red (high).
    let t = t.clamp(0.0, 1.0);
    let r = (60.0 + 195.0 * t) as u8;
    let g = (110.0 * (1.0 - t) + 40.0) as u8;
    let b = (210.0 * (1.0 - t) + 30.0) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Render the mesh as an SVG document. When `errors` is given (one value per
/// element, e.g. ||e_i||), elements are filled on a normalized color ramp.
pub fn mesh_svg(mesh: &PolyMesh, errors: Option<&[f64]>) -> String {
    let (lo, hi) = bbox(&mesh.nodes);
    let w = (hi.x - lo.x).max(1e-12);
    let h = (hi.y - lo.y).max(1e-12);
    let pad = 0.02 * w.max(h);
    let stroke = 0.002 * w.max(h);
    let (emin, emax) = errors
        .map(|e| {
            let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .unwrap_or((0.0, 1.0));
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        lo.x - pad,
        -(hi.y + pad),
        w + 2.0 * pad,
        h + 2.0 * pad
    ));
    for (e, cycle) in mesh.elements.iter().enumerate() {
        let fill = match errors {
            Some(err) if emax > emin => error_color((err[e] - emin) / (emax - emin)),
            Some(_) => error_color(0.0),
            None => "#ffffff".to_string(),
        };
        let pts: Vec<String> = cycle
            .iter()
            .map(|&v| format!("{},{}", mesh.nodes[v].x, -mesh.nodes[v].y))
            .collect();
        out.push_str(&format!(
            "  <polygon points=\"{}\" fill=\"{}\" stroke=\"#222222\" stroke-width=\"{}\"/>\n",
            pts.join(" "),
            fill,
            stroke
        ));
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_mesh_svg(mesh: &PolyMesh, errors: Option<&[f64]>, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_svg(mesh, errors))?;
    Ok(())
}

/// Write one per-iteration snapshot pair (JSON mesh, optional SVG).
pub fn write_snapshot(
    mesh: &PolyMesh,
    errors: Option<&[f64]>,
    out_dir: &Path,
    iter: usize,
    svg: bool,
) -> Result<()> {
    write_mesh(mesh, &out_dir.join(format!("mesh_{iter:04}.json")))?;
    if svg {
        write_mesh_svg(mesh, errors, &out_dir.join(format!("mesh_{iter:04}.svg")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{AdaptHistory, ErrorStats, IterationRecord, MarkedSets, Phase};
    use crate::geometry::Point2;

    fn small_history() -> AdaptHistory {
        AdaptHistory {
            records: vec![IterationRecord {
                iter: 0,
                phase: Phase::Error,
                n_el: 4,
                n_v: 9,
                rel_error: 0.031415926535897934,
                energy_error: 0.125,
                energy: 4.0,
                working_target: 3.0,
                n_refined: 2,
                n_coarsened: 1,
                marks: MarkedSets::default(),
                stats: ErrorStats {
                    max_trim5: 0.2,
                    min_trim5: 0.01,
                    mean: 0.1,
                    median: 0.09,
                    q1: 0.05,
                    q3: 0.15,
                },
            }],
            converged: true,
        }
    }

    #[test]
    fn csv_round_trips_floats() {
        let csv = history_csv(&small_history());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), HISTORY_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 16);
        // Percent conversion and full round-trip precision.
        let rel: f64 = row[4].parse().unwrap();
        assert_eq!(rel, 3.1415926535897936);
    }

    #[test]
    fn svg_lists_every_element_vertex() {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 0.0),
        ];
        let elements = vec![vec![0, 4, 1, 2, 3]];
        let mesh = PolyMesh::new(nodes, elements, Vec::new());
        let svg = mesh_svg(&mesh, Some(&[0.5]));
        let vertex_count: usize = svg
            .lines()
            .filter(|l| l.contains("<polygon"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
                pts.split(' ').count()
            })
            .sum();
        assert_eq!(vertex_count, 5);
    }
}
