//! Command-line front end. Exit codes: 0 success, 2 configuration or usage
//! error, 3 solver failure (including runs that stop without converging).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentKind, RunConfig};
use super::history::{write_history_csv, HistoryRecord};
use super::msh::write_msh;
use super::protocol::serve;
use super::vtk::{write_vtk, PointData};
use crate::coarse_opt::optimize;
use crate::error::{Error, Result};
use crate::mesh::generate::generate_disk_in_square;
use crate::mesh::{inverse_retraction, Mesh};
use crate::models::flow::{flow_rates, pressure, solve_flow, velocity};
use crate::models::transmission::solve_transmission;
use crate::models::ModelResponse;
use crate::par::Exec;
use crate::shape_grad::check::{central_difference_check, smooth_random_field, typical_edge_length, DEFAULT_STEPS};
use crate::space_mapping::{asm_run_with, AsmTermination};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Accepted range of the observed finite-difference order.
pub const ORDER_RANGE: (f64, f64) = (1.8, 2.2);

#[derive(Debug, Parser)]
#[command(name = "shapemap", version, about = "Shape optimization with volume-based aggressive space mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fidelity {
    Coarse,
    Fine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One forward solve on the reference mesh, written as VTK.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "fine")]
        model: Fidelity,
    },
    /// Solve the coarse design problem only.
    OptimizeCoarse {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full space-mapping run: per-iteration VTK and a history CSV.
    SpaceMap {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference check of the shape derivative on random fields.
    CheckGradient {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "fine")]
        model: Fidelity,
    },
    /// Write a disk-in-square mesh.
    GenMesh {
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Answer external fine-model requests in a directory with the
    /// internal solvers until it has been idle for the given time.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        idle_timeout_s: f64,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(&args.config, &args.overrides)
}

fn reference(cfg: &RunConfig) -> Result<Arc<Mesh>> {
    Ok(Arc::new(cfg.mesh.load()?))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { cfg, model } => simulate(&load(&cfg)?, model),
        Command::OptimizeCoarse { cfg } => optimize_coarse(&load(&cfg)?),
        Command::SpaceMap { cfg } => space_map(&load(&cfg)?),
        Command::CheckGradient { cfg, model } => check_gradient(&load(&cfg)?, model),
        Command::GenMesh { radius, resolution, output } => {
            let mesh = generate_disk_in_square(radius, resolution).map_err(|e| Error::Config(e.to_string()))?;
            write_msh(&output, &mesh)?;
            println!("wrote {} ({} nodes, {} triangles)", output.display(), mesh.n_nodes(), mesh.n_triangles());
            Ok(EXIT_OK)
        }
        Command::Serve { dir, idle_timeout_s } => {
            if !(idle_timeout_s > 0.0) {
                return Err(Error::Config("idle timeout must be positive".into()));
            }
            let n = serve(&dir, Duration::from_secs_f64(idle_timeout_s), Exec::default())?;
            println!("served {n} requests");
            Ok(EXIT_OK)
        }
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(name))
}

/// Writes `mesh` with its displacement from `reference` and, for field
/// responses, the state.
fn write_iterate(path: &Path, reference: &Arc<Mesh>, mesh: &Mesh, response: Option<&ModelResponse>) -> Result<()> {
    let d = inverse_retraction(reference, mesh)?;
    let mut fields = vec![("deformation", PointData::Vector(d.values()))];
    if let Some(ModelResponse::Field(u)) = response {
        fields.push(("u", PointData::Scalar(u.values())));
    }
    write_vtk(path, mesh, &fields)
}

fn simulate(cfg: &RunConfig, model: Fidelity) -> Result<i32> {
    let mesh = reference(cfg)?;
    let exec = cfg.exec();
    let tag = match model {
        Fidelity::Coarse => "coarse",
        Fidelity::Fine => "fine",
    };
    let path = out_path(cfg, &format!("simulate_{tag}.vtk"))?;
    match cfg.experiment {
        ExperimentKind::Transmission => {
            let p = if model == Fidelity::Coarse { cfg.transmission.linear() } else { cfg.transmission };
            let u = solve_transmission(&mesh, &p, exec)?;
            write_vtk(&path, &mesh, &[("u", PointData::Scalar(u.values()))])?;
        }
        ExperimentKind::Flow => {
            let p = if model == Fidelity::Coarse { cfg.flow.stokes() } else { cfg.flow.clone() };
            let z = solve_flow(&mesh, &p, exec)?;
            let vel = velocity(&z);
            let vertex: Vec<[f64; 2]> = (0..mesh.n_nodes()).map(|n| [vel[2 * n], vel[2 * n + 1]]).collect();
            write_vtk(&path, &mesh, &[("velocity", PointData::Vector(&vertex)), ("pressure", PointData::Scalar(pressure(&z)))])?;
            let q = flow_rates(&z, &p.outlet_markers)?;
            println!("outlet rates {}", join(&q));
        }
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn optimize_coarse(cfg: &RunConfig) -> Result<i32> {
    let mesh = reference(cfg)?;
    let exec = cfg.exec();
    let experiment = cfg.experiment(&mesh)?;
    let result = optimize(&mesh, experiment.design_problem(exec).as_ref(), &cfg.optimizer(), exec)?;
    for (k, (j, g)) in result.costs.iter().zip(&result.grad_norms).enumerate() {
        println!("{k:4} cost {j:.6e} |G| {g:.3e}");
    }
    let path = out_path(cfg, "coarse_optimum.vtk")?;
    let state = experiment.coarse_model().respond(&result.mesh, exec)?;
    write_iterate(&path, &mesh, &result.mesh, Some(&state))?;
    println!("{:?} after {} iterations; wrote {}", result.termination, result.iterations, path.display());
    Ok(EXIT_OK)
}

fn space_map(cfg: &RunConfig) -> Result<i32> {
    let mesh = reference(cfg)?;
    let exec = cfg.exec();
    let experiment = cfg.experiment(&mesh)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut write_err = None;
    let run = asm_run_with(&cfg.asm, &experiment, &mesh, &cfg.backend, exec, &mut |r| {
        let path = cfg.output_dir.join(format!("iter_{:03}.vtk", r.iter));
        if let Err(e) = write_iterate(&path, &mesh, &r.mesh, Some(&r.response)) {
            write_err.get_or_insert(e);
        }
        println!("{:4} cost {:.6e} sigma {:.3e} coarse iterations {}", r.iter, r.fine_cost, r.sigma, r.coarse_iters);
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let mut history: Vec<HistoryRecord> = run.history();
    if cfg.deterministic {
        for h in &mut history {
            h.wall_s = 0.0;
        }
    }
    let path = cfg.output_dir.join("history.csv");
    write_history_csv(&path, &history)?;
    println!("{:?}; wrote {}", run.termination, path.display());
    if run.termination == AsmTermination::Converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("space mapping stopped without reaching tau = {:e} ({:?})", cfg.asm.tau, run.termination);
        Ok(EXIT_SOLVER)
    }
}

fn check_gradient(cfg: &RunConfig, model: Fidelity) -> Result<i32> {
    let mesh = reference(cfg)?;
    let exec = cfg.exec();
    let experiment = cfg.experiment(&mesh)?;
    let problem = match model {
        Fidelity::Coarse => experiment.design_problem(exec),
        Fidelity::Fine => experiment.fine_problem(exec),
    };
    let fixed = problem.fixed_nodes(&mesh)?;
    let amplitude = cfg.check.amplitude * typical_edge_length(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.check.seed);
    let mut ok = true;
    println!("field  dJ[V]                 errors at t = {}  order", join(&DEFAULT_STEPS));
    for k in 0..cfg.check.fields {
        let v = smooth_random_field(&mesh, &fixed, amplitude, &mut rng);
        let report = central_difference_check(problem.as_ref(), &mesh, &v, &DEFAULT_STEPS)?;
        let order = report.order();
        let pass = order >= ORDER_RANGE.0 && order <= ORDER_RANGE.1;
        ok &= pass;
        println!("{k:5}  {:+.15e}  {}  {order:.3} {}", report.analytic, join(&report.errors), if pass { "ok" } else { "OUT OF RANGE" });
    }
    Ok(if ok { EXIT_OK } else { EXIT_SOLVER })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(dispatch(["shapemap", "no-such-command"]), EXIT_CONFIG);
        assert_eq!(dispatch(["shapemap", "simulate"]), EXIT_CONFIG);
        assert_eq!(dispatch(["shapemap", "--help"]), EXIT_OK);
    }

    #[test]
    fn config_errors_exit_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "experiment = transmission\nmesh.resolution = 8\n").unwrap();
        let c = cfg.to_str().unwrap();
        assert_eq!(dispatch(["shapemap", "simulate", "--config", c, "--set", "model.nope=1"]), EXIT_CONFIG);
        assert_eq!(dispatch(["shapemap", "simulate", "--config", "/no/such/file.cfg"]), EXIT_CONFIG);
        assert_eq!(dispatch(["shapemap", "gen-mesh", "--resolution", "1", "-o", dir.path().join("m.msh").to_str().unwrap()]), EXIT_CONFIG);
    }

    #[test]
    fn simulate_writes_vtk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "mesh.resolution = 8\noutput.dir = out\n").unwrap();
        assert_eq!(dispatch(["shapemap", "simulate", "--config", cfg.to_str().unwrap(), "--model", "coarse"]), EXIT_OK);
        let text = std::fs::read_to_string(dir.path().join("out/simulate_coarse.vtk")).unwrap();
        assert!(text.contains("SCALARS u double"));
    }
}
