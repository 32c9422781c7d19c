use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vem_adapt::adapt::{run_adaptation_with, AdaptCaps, AdaptTarget};
use vem_adapt::bench::{
    build_l_domain, build_patch_test, build_punch, build_uniaxial, BenchmarkKind,
};
use vem_adapt::estimate::compute_error_report;
use vem_adapt::material::{constitutive_matrix, MaterialParams, PlaneRegime};
use vem_adapt::mesh::{read_mesh, PolyMesh};
use vem_adapt::meshgen::{generate_mesh, MeshMode};
use vem_adapt::output::{write_history_csv, write_snapshot};
use vem_adapt::solve::{assemble_and_solve, Problem};

#[derive(Parser)]
#[command(
    name = "vem-adapt",
    about = "Adaptive remeshing for first-order virtual elements in 2D elasticity",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an initial mesh for a benchmark domain and write it out.
    Generate(GenerateArgs),
    /// Solve a benchmark once and report the estimated error.
    Solve(SolveArgs),
    /// Run the adaptive remeshing loop on a benchmark.
    Adapt(AdaptArgs),
    /// Run a multi-stage benchmark (e.g. the punch load cycles).
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshArg {
    Structured,
    Voronoi,
}

impl From<MeshArg> for MeshMode {
    fn from(m: MeshArg) -> MeshMode {
        match m {
            MeshArg::Structured => MeshMode::Structured,
            MeshArg::Voronoi => MeshMode::Voronoi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    PlaneStrain,
    PlaneStress,
}

impl From<RegimeArg> for PlaneRegime {
    fn from(r: RegimeArg) -> PlaneRegime {
        match r {
            RegimeArg::PlaneStrain => PlaneRegime::PlaneStrain,
            RegimeArg::PlaneStress => PlaneRegime::PlaneStress,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SvgArg {
    On,
    Off,
}

#[derive(Args)]
struct CommonArgs {
    /// Benchmark problem.
    #[arg(long, default_value = "l-domain")]
    bench: String,
    /// Mesh family.
    #[arg(long, value_enum, default_value_t = MeshArg::Voronoi)]
    mesh: MeshArg,
    /// Approximate number of elements in the initial mesh.
    #[arg(long, default_value_t = 100)]
    initial_elements: usize,
    /// RNG seed for mesh generation and refinement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plane strain or plane stress.
    #[arg(long, value_enum, default_value_t = RegimeArg::PlaneStrain)]
    regime: RegimeArg,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write per-iteration SVG renderings.
    #[arg(long, value_enum, default_value_t = SvgArg::On)]
    svg: SvgArg,
}

#[derive(Args)]
struct TargetArgs {
    /// Target relative energy error in percent.
    #[arg(long)]
    target_error: Option<f64>,
    /// Target number of elements.
    #[arg(long)]
    target_elements: Option<usize>,
    /// Target number of nodes.
    #[arg(long)]
    target_nodes: Option<usize>,
    /// Iteration cap for the adaptive loop.
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solve on a mesh loaded from this JSON file instead of generating one.
    #[arg(long)]
    mesh_file: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    target: TargetArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark name: l-domain, punch, patch-test, uniaxial.
    name: String,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// Number of punch load cycles.
    #[arg(long, default_value_t = 1)]
    cycles: usize,
}

fn parse_target(t: &TargetArgs) -> Result<AdaptTarget, String> {
    let mut chosen: Vec<AdaptTarget> = Vec::new();
    if let Some(p) = t.target_error {
        chosen.push(AdaptTarget::RelError(p));
    }
    if let Some(n) = t.target_elements {
        chosen.push(AdaptTarget::Elements(n));
    }
    if let Some(n) = t.target_nodes {
        chosen.push(AdaptTarget::Nodes(n));
    }
    match chosen.len() {
        0 => Err("missing target: pass one of --target-error, --target-elements, --target-nodes"
            .to_string()),
        1 => Ok(chosen[0]),
        _ => Err("conflicting targets: pass only one of --target-error, --target-elements, \
                  --target-nodes"
            .to_string()),
    }
}

fn build_problem(kind: BenchmarkKind, cycle: usize) -> Result<Problem, vem_adapt::Error> {
    match kind {
        BenchmarkKind::LDomain => Ok(build_l_domain()),
        BenchmarkKind::Punch => build_punch(cycle),
        BenchmarkKind::PatchTest => Ok(build_patch_test()),
        BenchmarkKind::Uniaxial => Ok(build_uniaxial()),
    }
}

fn run() -> Result<u8, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let kind = BenchmarkKind::parse(&args.common.bench).map_err(|e| e.to_string())?;
            let problem = build_problem(kind, 1).map_err(|e| e.to_string())?;
            let mesh = generate_mesh(
                &problem.domain,
                args.common.initial_elements,
                args.common.mesh.into(),
                args.common.seed,
            )
            .map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&args.common.out_dir).map_err(|e| e.to_string())?;
            write_snapshot(
                &mesh,
                None,
                &args.common.out_dir,
                0,
                matches!(args.common.svg, SvgArg::On),
            )
            .map_err(|e| e.to_string())?;
            println!(
                "generated {} elements / {} nodes -> {}",
                mesh.n_elements(),
                mesh.n_nodes(),
                args.common.out_dir.join("mesh_0000.json").display()
            );
            Ok(0)
        }
        Command::Solve(args) => {
            let kind = BenchmarkKind::parse(&args.common.bench).map_err(|e| e.to_string())?;
            let problem = build_problem(kind, 1).map_err(|e| e.to_string())?;
            let material = MaterialParams::new(1.0, 0.3, args.common.regime.into())
                .map_err(|e| e.to_string())?;
            let mesh: PolyMesh = match &args.mesh_file {
                Some(path) => read_mesh(path).map_err(|e| e.to_string())?,
                None => generate_mesh(
                    &problem.domain,
                    args.common.initial_elements,
                    args.common.mesh.into(),
                    args.common.seed,
                )
                .map_err(|e| e.to_string())?,
            };
            let d = constitutive_matrix(&material).map_err(|e| e.to_string())?;
            let solution =
                assemble_and_solve(&mesh, &problem, &material).map_err(|e| e.to_string())?;
            let report =
                compute_error_report(&mesh, &solution.u, &d).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&args.common.out_dir).map_err(|e| e.to_string())?;
            write_snapshot(
                &mesh,
                Some(&report.norm_e),
                &args.common.out_dir,
                0,
                matches!(args.common.svg, SvgArg::On),
            )
            .map_err(|e| e.to_string())?;
            println!(
                "solved: n_el {} n_v {} rel_error {:.4}% energy_error {:.6e} energy {:.6e}",
                mesh.n_elements(),
                mesh.n_nodes(),
                100.0 * report.rel_error,
                report.global_error,
                report.global_energy
            );
            Ok(0)
        }
        Command::Adapt(args) => {
            let kind = BenchmarkKind::parse(&args.common.bench).map_err(|e| e.to_string())?;
            let target = parse_target(&args.target)?;
            let problem = build_problem(kind, 1).map_err(|e| e.to_string())?;
            let converged =
                adapt_once(&args.common, &args.target, target, &problem, "history.csv")?;
            Ok(if converged { 0 } else { 2 })
        }
        Command::Bench(args) => {
            let kind = BenchmarkKind::parse(&args.name).map_err(|e| e.to_string())?;
            let target = parse_target(&args.target)?;
            match kind {
                BenchmarkKind::Punch => run_punch_cycles(&args, target),
                other => {
                    let problem = build_problem(other, 1).map_err(|e| e.to_string())?;
                    let converged =
                        adapt_once(&args.common, &args.target, target, &problem, "history.csv")?;
                    Ok(if converged { 0 } else { 2 })
                }
            }
        }
    }
}

/// Punch cycles alternate the loaded span while the mesh carries over.
fn run_punch_cycles(args: &BenchArgs, target: AdaptTarget) -> Result<u8, String> {
    if args.cycles == 0 {
        return Err("punch needs --cycles >= 1".to_string());
    }
    let material =
        MaterialParams::new(1.0, 0.3, args.common.regime.into()).map_err(|e| e.to_string())?;
    let caps = AdaptCaps { max_iter: args.target.max_iter };
    let mode: MeshMode = args.common.mesh.into();
    std::fs::create_dir_all(&args.common.out_dir).map_err(|e| e.to_string())?;
    let first = build_punch(1).map_err(|e| e.to_string())?;
    let mut mesh =
        generate_mesh(&first.domain, args.common.initial_elements, mode, args.common.seed)
            .map_err(|e| e.to_string())?;
    let mut all_converged = true;
    for cycle in 1..=args.cycles {
        let problem = build_punch(cycle).map_err(|e| e.to_string())?;
        let (final_mesh, history) = run_adaptation_with(
            mesh,
            &problem,
            &material,
            target,
            mode,
            args.common.seed.wrapping_add(cycle as u64),
            &caps,
            None,
        )
        .map_err(|e| e.to_string())?;
        let path = args.common.out_dir.join(format!("history_cycle_{cycle:02}.csv"));
        write_history_csv(&history, &path).map_err(|e| e.to_string())?;
        let last = history.last().expect("non-empty history");
        println!(
            "cycle {cycle}: converged={} iters={} n_el={} n_v={} rel_error={:.4}%",
            history.converged,
            history.records.len(),
            last.n_el,
            last.n_v,
            100.0 * last.rel_error
        );
        write_snapshot(
            &final_mesh,
            None,
            &args.common.out_dir,
            cycle,
            matches!(args.common.svg, SvgArg::On),
        )
        .map_err(|e| e.to_string())?;
        all_converged &= history.converged;
        mesh = final_mesh;
    }
    Ok(if all_converged { 0 } else { 2 })
}

fn adapt_once(
    common: &CommonArgs,
    target_args: &TargetArgs,
    target: AdaptTarget,
    problem: &Problem,
    history_name: &str,
) -> Result<bool, String> {
    let material =
        MaterialParams::new(1.0, 0.3, common.regime.into()).map_err(|e| e.to_string())?;
    let mode: MeshMode = common.mesh.into();
    let mesh = generate_mesh(&problem.domain, common.initial_elements, mode, common.seed)
        .map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&common.out_dir).map_err(|e| e.to_string())?;
    let caps = AdaptCaps { max_iter: target_args.max_iter };
    let out_dir = common.out_dir.clone();
    let svg = matches!(common.svg, SvgArg::On);
    let mut snapshot_err: Option<String> = None;
    let mut observer = |iter: usize, mesh: &PolyMesh, report: &vem_adapt::ErrorReport| {
        if let Err(e) = write_snapshot(mesh, Some(&report.norm_e), &out_dir, iter, svg) {
            snapshot_err.get_or_insert(e.to_string());
        }
    };
    let (final_mesh, history) = run_adaptation_with(
        mesh,
        problem,
        &material,
        target,
        mode,
        common.seed,
        &caps,
        Some(&mut observer),
    )
    .map_err(|e| e.to_string())?;
    if let Some(e) = snapshot_err {
        return Err(format!("failed to write snapshots: {e}"));
    }
    write_history_csv(&history, &common.out_dir.join(history_name))
        .map_err(|e| e.to_string())?;
    let last = history.last().expect("non-empty history");
    println!(
        "adaptation {}: iters={} final n_el={} n_v={} rel_error={:.4}%",
        if history.converged { "converged" } else { "hit the iteration cap" },
        history.records.len(),
        final_mesh.n_elements(),
        last.n_v,
        100.0 * last.rel_error
    );
    Ok(history.converged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("VEM_ADAPT_LOG", "error"))
        .init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
