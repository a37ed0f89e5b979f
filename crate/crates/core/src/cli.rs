//! Command-line driver: convergence sweeps, evolution runs and mesh export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{eoc, final_error, ErrorReport};
use crate::assembly::Discretization;
use crate::error::Error;
use crate::integrator::{run_with, step_count, BdfScheme, StartMode, Trajectory};
use crate::mesh::{generate_disk_mesh, import_mesh, Mesh2D};
use crate::problems::ProblemSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<crate::mesh::MeshError> for CliError {
    fn from(e: crate::mesh::MeshError) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "chdbc",
    version,
    about = "Cahn-Hilliard with dynamic boundary conditions on a disk"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spatial convergence sweep against the manufactured solution.
    Convergence(ConvergenceArgs),
    /// Phase-separation run with random ±1 initial data.
    Evolve(EvolveArgs),
    /// Generate a disk mesh in the MESH v1 text format.
    Mesh(MeshArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartModeArg {
    Exact,
    Bootstrap,
}

impl From<StartModeArg> for StartMode {
    fn from(m: StartModeArg) -> Self {
        match m {
            StartModeArg::Exact => StartMode::Exact,
            StartModeArg::Bootstrap => StartMode::Bootstrap,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, default_value = "linear")]
    pub problem: String,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Refinement levels i; level i uses 2^i * 10 nodes.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    pub refinements: Vec<u32>,
    #[arg(long = "tau", default_values_t = [0.025, 0.0125, 0.005, 0.0025])]
    pub taus: Vec<f64>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub start_mode: StartModeArg,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long, default_value = "evolution")]
    pub problem: String,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 640)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long = "tau", default_value_t = 0.00125)]
    pub tau: f64,
    #[arg(long = "T", default_value_t = 3.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Double-well strength s in W(u) = s (u² - 1)².
    #[arg(long, default_value_t = 10.0)]
    pub strength: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0, 3.0])]
    pub snapshots: Vec<f64>,
    #[arg(long, value_enum, default_value = "bootstrap")]
    pub start_mode: StartModeArg,
    /// Output directory.
    #[arg(long, default_value = "evolution_out")]
    pub out: PathBuf,
    /// Also write legacy-VTK snapshots.
    #[arg(long)]
    pub vtk: bool,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Target node count.
    #[arg(long, conflicts_with = "refinements")]
    pub nodes: Option<usize>,
    /// Refinement level i (2^i * 10 nodes).
    #[arg(long)]
    pub refinements: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-import the written mesh and check every invariant.
    #[arg(long)]
    pub validate: bool,
}

pub fn nodes_for_level(i: u32) -> usize {
    10usize << i
}

/// Validated settings of a convergence sweep.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub problem: String,
    pub k: usize,
    pub refinements: Vec<u32>,
    pub taus: Vec<f64>,
    pub t_final: f64,
    pub start_mode: StartMode,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !matches!(self.problem.as_str(), "linear" | "nonlinear") {
            return Err(usage(format!(
                "convergence needs --problem linear|nonlinear, got `{}`",
                self.problem
            )));
        }
        check_k(self.k)?;
        if self.refinements.is_empty() || self.taus.is_empty() {
            return Err(usage("need at least one refinement and one time step"));
        }
        if let Some(i) = self.refinements.iter().find(|&&i| !(1..=12).contains(&i)) {
            return Err(usage(format!("refinement level {i} outside 1..=12")));
        }
        for &tau in &self.taus {
            step_count(tau, self.t_final).map_err(|e| usage(e.to_string()))?;
        }
        Ok(())
    }
}

fn check_k(k: usize) -> Result<(), CliError> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(usage(format!("--k must be 1, 2 or 3, got {k}")))
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: u32,
    pub report: ErrorReport,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
}

/// Runs every `(τ, i)` combination and computes EOCs along `i` for each `τ`.
///
/// Rows are ordered by the position of `τ` in the configuration, then by `i`.
pub fn run_convergence(config: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>, CliError> {
    config.validate()?;
    let problem = ProblemSpec::by_name(&config.problem, 0.0, 0).expect("validated problem name");
    let scheme = BdfScheme::new(config.k)?;
    let mut levels = config.refinements.clone();
    levels.sort_unstable();
    levels.dedup();

    let meshes = levels
        .iter()
        .map(|&i| {
            let mesh = generate_disk_mesh(nodes_for_level(i), 1.0)?;
            let disc = Discretization::assemble(&mesh)?;
            Ok((i, mesh, disc))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let jobs: Vec<(usize, usize)> = (0..config.taus.len())
        .flat_map(|t| (0..meshes.len()).map(move |m| (t, m)))
        .collect();
    let results: Vec<Result<ErrorReport, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(t, m)| {
                let (problem, scheme, meshes) = (&problem, &scheme, &meshes);
                let tau = config.taus[t];
                scope.spawn(move || {
                    let (_, mesh, disc) = &meshes[m];
                    let traj = run_with(problem, mesh, disc, tau, config.t_final, scheme, config.start_mode)?;
                    final_error(&traj, problem, mesh, disc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });

    let mut rows = Vec::with_capacity(jobs.len());
    for (&(t, m), result) in jobs.iter().zip(results) {
        let report = result?;
        let prev: Option<&ConvergenceRow> = if m > 0 { rows.last() } else { None };
        let pair = |a: f64, b: f64, ha: f64, hb: f64| eoc(&[a, b], &[ha, hb]).ok().and_then(|v| v[0]);
        let (eoc_l2, eoc_h1) = match prev {
            Some(p) => (
                pair(p.report.err_l2, report.err_l2, p.report.h, report.h),
                pair(p.report.err_h1, report.err_h1, p.report.h, report.h),
            ),
            None => (None, None),
        };
        debug_assert_eq!(report.tau, config.taus[t]);
        rows.push(ConvergenceRow {
            level: meshes[m].0,
            report,
            eoc_l2,
            eoc_h1,
        });
    }
    Ok(rows)
}

pub const CONVERGENCE_HEADER: &str = "i,nodes,h,tau,err_L2,err_H1,eoc_L2,eoc_H1";

fn fmt_eoc(value: Option<f64>, first: bool) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None if first => "NA".into(),
        None => "undefined".into(),
    }
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    let mut last_tau = None;
    for row in rows {
        let first = last_tau != Some(row.report.tau);
        last_tau = Some(row.report.tau);
        let r = &row.report;
        let _ = writeln!(
            out,
            "{},{},{:.12e},{},{:.12e},{:.12e},{},{}",
            row.level,
            r.nodes,
            r.h,
            r.tau,
            r.err_l2,
            r.err_h1,
            fmt_eoc(row.eoc_l2, first),
            fmt_eoc(row.eoc_h1, first)
        );
    }
    out
}

/// Builds the convergence table as CSV text.
pub fn cmd_convergence(config: &ConvergenceConfig) -> Result<String, CliError> {
    Ok(convergence_csv(&run_convergence(config)?))
}

/// Validated settings of an evolution run.
#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub problem: String,
    pub k: usize,
    pub nodes: usize,
    pub radius: f64,
    pub tau: f64,
    pub t_final: f64,
    pub seed: u64,
    pub strength: f64,
    pub snapshots: Vec<f64>,
    pub start_mode: StartMode,
    pub out: PathBuf,
    pub vtk: bool,
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.problem != "evolution" {
            return Err(usage(format!(
                "evolve needs --problem evolution, got `{}`",
                self.problem
            )));
        }
        check_k(self.k)?;
        if self.nodes < 4 {
            return Err(usage(format!("a disk mesh needs at least 4 nodes, got {}", self.nodes)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(usage(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.strength.is_finite() && self.strength > 0.0) {
            return Err(usage(format!("strength must be positive, got {}", self.strength)));
        }
        if self.start_mode == StartMode::Exact {
            return Err(usage(
                "the evolution problem has no exact solution; use --start-mode bootstrap",
            ));
        }
        let steps = step_count(self.tau, self.t_final).map_err(|e| usage(e.to_string()))?;
        for &t in &self.snapshots {
            let n = (t / self.tau).round();
            if !(t >= 0.0 && n as usize <= steps && (n * self.tau - t).abs() <= 1e-9 * self.tau.max(t)) {
                return Err(usage(format!(
                    "snapshot time {t} is not a step time in [0, {}]",
                    self.t_final
                )));
            }
        }
        Ok(())
    }
}

/// Files written by [`cmd_evolve`].
#[derive(Debug)]
pub struct EvolveOutput {
    pub trajectory: Trajectory,
    pub mesh: Mesh2D,
    pub snapshot_files: Vec<PathBuf>,
    pub diagnostics_file: PathBuf,
}

pub fn cmd_evolve(config: &EvolveConfig) -> Result<EvolveOutput, CliError> {
    config.validate()?;
    let problem = crate::problems::evolution_problem(config.strength, config.seed);
    let mesh = generate_disk_mesh(config.nodes, config.radius)?;
    let disc = Discretization::assemble(&mesh)?;
    let scheme = BdfScheme::new(config.k)?;
    let traj = run_with(
        &problem,
        &mesh,
        &disc,
        config.tau,
        config.t_final,
        &scheme,
        config.start_mode,
    )?;

    fs::create_dir_all(&config.out)?;
    write_atomic(&config.out.join("mesh.txt"), &mesh.export())?;

    let mut snapshot_files = Vec::new();
    for &t in &config.snapshots {
        let n = traj
            .index_of(t)
            .ok_or_else(|| usage(format!("snapshot time {t} not reached")))?;
        let path = config.out.join(format!("snapshot_t{t}.csv"));
        write_atomic(&path, &snapshot_csv(&mesh, &traj.u[n], &traj.w[n]))?;
        snapshot_files.push(path);
        if config.vtk {
            let path = config.out.join(format!("snapshot_t{t}.vtk"));
            write_atomic(&path, &snapshot_vtk(&mesh, &traj.u[n], &traj.w[n], traj.times[n]))?;
            snapshot_files.push(path);
        }
    }

    let diagnostics_file = config.out.join("diagnostics.csv");
    write_atomic(&diagnostics_file, &diagnostics_csv(&traj))?;
    Ok(EvolveOutput {
        trajectory: traj,
        mesh,
        snapshot_files,
        diagnostics_file,
    })
}

pub fn snapshot_csv(mesh: &Mesh2D, u: &[f64], w: &[f64]) -> String {
    let mut out = String::from("node,x,y,u,w\n");
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", p[0], p[1], u[i], w[i]);
    }
    out
}

pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,mass,energy\n");
    for (n, t) in traj.times.iter().enumerate() {
        let energy = traj.energy.as_ref().map_or(String::new(), |e| format!("{:.15e}", e[n]));
        let _ = writeln!(out, "{t},{:.15e},{energy}", traj.mass[n]);
    }
    out
}

/// Legacy VTK (ASCII) unstructured grid with `u` and `w` as point data.
pub fn snapshot_vtk(mesh: &Mesh2D, u: &[f64], w: &[f64], t: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# vtk DataFile Version 3.0\nchdbc snapshot t={t}\nASCII\nDATASET UNSTRUCTURED_GRID"
    );
    let _ = writeln!(out, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{} {} 0", p[0], p[1]);
    }
    let nt = mesh.triangles().len();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
    for (name, values) in [("u", u), ("w", w)] {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(out, "{v}");
        }
    }
    out
}

/// Generates the mesh; with `validate`, re-imports the text and compares.
pub fn cmd_mesh(nodes: usize, radius: f64, validate: bool) -> Result<String, CliError> {
    if nodes < 4 {
        return Err(usage(format!("a disk mesh needs at least 4 nodes, got {nodes}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(usage(format!("radius must be positive, got {radius}")));
    }
    let mesh = generate_disk_mesh(nodes, radius)?;
    let text = mesh.export();
    if validate {
        let back = import_mesh(&text)?;
        if back != mesh {
            return Err(Error::InvalidArgument("mesh did not round-trip".into()).into());
        }
    }
    Ok(text)
}

/// Writes through a temporary sibling so a failed run leaves no partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    if let Err(e) = fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convergence(a) => {
            let config = ConvergenceConfig {
                problem: a.problem,
                k: a.k,
                refinements: a.refinements,
                taus: a.taus,
                t_final: a.t_final,
                start_mode: a.start_mode.into(),
            };
            let csv = cmd_convergence(&config)?;
            emit(a.out.as_deref(), &csv)
        }
        Command::Evolve(a) => {
            let config = EvolveConfig {
                problem: a.problem,
                k: a.k,
                nodes: a.nodes,
                radius: a.radius,
                tau: a.tau,
                t_final: a.t_final,
                seed: a.seed,
                strength: a.strength,
                snapshots: a.snapshots,
                start_mode: a.start_mode.into(),
                out: a.out,
                vtk: a.vtk,
            };
            let output = cmd_evolve(&config)?;
            let energy = output
                .trajectory
                .energy
                .as_ref()
                .expect("double-well potential is known");
            eprintln!(
                "wrote {} snapshots and {}; energy {:.6e} -> {:.6e}",
                output.snapshot_files.len(),
                output.diagnostics_file.display(),
                energy[0],
                energy[energy.len() - 1]
            );
            Ok(())
        }
        Command::Mesh(a) => {
            let nodes = match (a.nodes, a.refinements) {
                (Some(n), _) => n,
                (None, Some(i)) if i <= 16 => nodes_for_level(i),
                (None, Some(i)) => return Err(usage(format!("refinement level {i} is too large"))),
                (None, None) => return Err(usage("mesh needs --nodes or --refinements")),
            };
            let text = cmd_mesh(nodes, a.radius, a.validate)?;
            emit(a.out.as_deref(), &text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_node_counts() {
        assert_eq!(nodes_for_level(1), 20);
        assert_eq!(nodes_for_level(6), 640);
        assert_eq!(nodes_for_level(8), 2560);
    }

    #[test]
    fn convergence_rejects_evolution_problem() {
        let config = ConvergenceConfig {
            problem: "evolution".into(),
            k: 3,
            refinements: vec![1],
            taus: vec![0.01],
            t_final: 1.0,
            start_mode: StartMode::Exact,
        };
        assert_eq!(config.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn tau_must_divide_final_time() {
        let config = ConvergenceConfig {
            problem: "linear".into(),
            k: 3,
            refinements: vec![1],
            taus: vec![0.3],
            t_final: 1.0,
            start_mode: StartMode::Exact,
        };
        assert!(matches!(config.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn eoc_sentinels() {
        assert_eq!(fmt_eoc(None, true), "NA");
        assert_eq!(fmt_eoc(None, false), "undefined");
        assert_eq!(fmt_eoc(Some(2.0), false), "2.000000");
    }

    #[test]
    fn mesh_command_usage_error() {
        assert_eq!(cmd_mesh(3, 1.0, false).unwrap_err().exit_code(), 2);
        let text = cmd_mesh(20, 1.0, true).unwrap();
        assert!(text.starts_with("MESH v1\nRADIUS 1\nNODES 20\n"));
    }
}
