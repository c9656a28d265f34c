use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use eroopt::config::RunConfig;
use eroopt::erosion::{impact_rate, impact_rate_suspicious, integrated_erosion};
use eroopt::mesh::gmsh::write_mesh;
use eroopt::optimizer::{run, Termination};
use eroopt::study::{sweep, write_checks_csv, write_history_csv, write_state_vtk, write_sweep_csv, write_taylor_csv, SpeciesResult};
use eroopt::verify::{run_suite, Suite};
use eroopt::Error;

#[derive(Parser)]
#[command(name = "eroopt", version, about = "Shape optimisation of particle-laden flows against wall erosion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve flow, particle velocity and volume fraction; print the cost terms and impact rate.
    Forward(Common),
    /// Forward pipeline for each particle diameter of `[sweep]`.
    Sweep(Common),
    /// Run the shape optimisation loop.
    Optimize(Common),
    /// Run the verification suite selected in `[verify]`.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write VTK files.
    #[arg(long)]
    vtk: bool,
}

enum Failure {
    Check(String),
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Solver(_) | Error::Quality(_) => Failure::Solver(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    vtk: bool,
}

impl Context {
    fn new(c: &Common) -> Result<Self, Failure> {
        let mut cfg = match &c.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if c.vtk {
            cfg.output.vtk = true;
        }
        let out = c.out.clone().unwrap_or_else(|| cfg.output_dir());
        fs::create_dir_all(&out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(Context { vtk: cfg.output.vtk, cfg, out })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.out.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))
    }

    fn mesh(&self) -> Result<eroopt::mesh::Mesh, Failure> {
        self.cfg.load_mesh().map_err(|e| Failure::Usage(format!("mesh: {e}")))
    }
}

fn stage<T>(name: &str, r: eroopt::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Solver(m) => Failure::Solver(format!("{name}: {m}")),
        Failure::Usage(m) => Failure::Usage(format!("{name}: {m}")),
        f => f,
    })
}

fn forward(ctx: &Context) -> Outcome {
    let mesh = ctx.mesh()?;
    let problem = stage("setup", ctx.cfg.problem())?;
    let t = Instant::now();
    let e = stage("forward", problem.evaluate(&mesh))?;
    let eta = stage("impact rate", impact_rate(&mesh, &e.state.alpha, &e.state.up))?;
    let big_e = integrated_erosion(&mesh, &e.state.up, &e.state.alpha, &problem.erosion);
    println!("mesh          {} vertices, {} cells", mesh.n_vertices(), mesh.n_cells());
    println!("newton        flow {} particle {} transport {}", e.report.flow.iterations, e.report.particle.iterations, e.report.transport.iterations);
    println!("J             {:.6e}", e.cost.total);
    println!("J_erosion     {:.6e}", e.cost.erosion);
    println!("J_willmore    {:.6e}  (c1 = {:.3e})", e.cost.willmore, e.cost.c1);
    println!("E             {big_e:.6e}");
    println!("eta           {eta:.6}");
    if impact_rate_suspicious(eta) {
        eprintln!("warning: impact rate {eta} outside [-0.05, 1.05]; check the mesh resolution");
    }
    println!("time          {:.2} s", t.elapsed().as_secs_f64());
    if ctx.vtk {
        stage("vtk", write_state_vtk(&ctx.out, "forward", &mesh, &e.state, &problem.erosion))?;
    }
    Ok(())
}

fn species_rows(ctx: &Context, mesh: &eroopt::mesh::Mesh) -> Vec<SpeciesResult> {
    let si: Vec<_> = ctx.cfg.sweep.diameters.iter().map(|d| ctx.cfg.sweep.si(*d)).collect();
    sweep(mesh, &ctx.cfg.physics, &ctx.cfg.erosion, &ctx.cfg.solver.forward(), &si, ctx.cfg.solver.exec())
}

fn print_rows(rows: &[SpeciesResult]) {
    println!("{:>10} {:>8} {:>9} {:>12}", "d_p [m]", "Stk", "eta", "E");
    for r in rows {
        if r.ok() {
            println!("{:>10.3e} {:>8.4} {:>9.5} {:>12.5e}", r.d_p, r.stk, r.eta, r.erosion);
        } else {
            println!("{:>10.3e} {:>8.4} failed: {}", r.d_p, r.stk, r.error);
        }
    }
}

fn write_rows(ctx: &Context, name: &str, rows: &[SpeciesResult]) -> Outcome {
    stage(name, write_sweep_csv(ctx.create(name)?, rows))
}

fn cmd_sweep(ctx: &Context) -> Outcome {
    if ctx.cfg.sweep.diameters.is_empty() {
        return Err(Failure::Usage("[sweep] diameters is empty".into()));
    }
    let mesh = ctx.mesh()?;
    let rows = species_rows(ctx, &mesh);
    print_rows(&rows);
    write_rows(ctx, "sweep.csv", &rows)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed == rows.len() {
        return Err(Failure::Solver("every species failed".into()));
    }
    if failed > 0 {
        eprintln!("warning: {failed} of {} species failed", rows.len());
    }
    Ok(())
}

fn optimize(ctx: &Context) -> Outcome {
    let mesh0 = ctx.mesh()?;
    let mut problem = stage("setup", ctx.cfg.problem())?;
    let gcfg = ctx.cfg.solver.gradient();
    let every = ctx.cfg.output.snapshot_every;
    let mut io_error = None;
    let t = Instant::now();
    let (mesh, history) = stage(
        "optimize",
        run(&mesh0, &mut problem, &gcfg, &ctx.cfg.optimizer, |k, m, e| {
            println!("iter {k:>3}  J {:.6e}  eta {:.5}  {:.1} s", e.cost.total, impact_rate(m, &e.state.alpha, &e.state.up).unwrap_or(f64::NAN), t.elapsed().as_secs_f64());
            if ctx.vtk && (k == 0 || (every > 0 && k % every == 0)) {
                if let Err(err) = write_state_vtk(&ctx.out, &format!("iter_{k:04}"), m, &e.state, &ctx.cfg.erosion) {
                    io_error.get_or_insert(err);
                }
            }
        }),
    )?;
    if let Some(e) = io_error {
        return Err(Failure::Usage(format!("snapshot: {e}")));
    }
    stage("history", write_history_csv(ctx.create("history.csv")?, &history.records))?;
    stage("final mesh", write_mesh(&mesh, &ctx.cfg.mesh.tags(), ctx.out.join("final.msh")))?;
    println!("termination   {:?} after {} accepted steps", history.termination, history.accepted());

    let e0 = stage("initial evaluation", problem.evaluate(&mesh0))?;
    let e1 = stage("final evaluation", problem.evaluate(&mesh))?;
    let big0 = integrated_erosion(&mesh0, &e0.state.up, &e0.state.alpha, &problem.erosion);
    let big1 = integrated_erosion(&mesh, &e1.state.up, &e1.state.alpha, &problem.erosion);
    println!("E initial     {big0:.6e}");
    println!("E final       {big1:.6e}  ({:+.1}%)", 100.0 * (big1 / big0 - 1.0));
    if ctx.vtk {
        stage("vtk", write_state_vtk(&ctx.out, "final", &mesh, &e1.state, &problem.erosion))?;
    }
    if !ctx.cfg.sweep.diameters.is_empty() {
        let before = species_rows(ctx, &mesh0);
        let after = species_rows(ctx, &mesh);
        println!("initial shape");
        print_rows(&before);
        println!("final shape");
        print_rows(&after);
        write_rows(ctx, "sweep_initial.csv", &before)?;
        write_rows(ctx, "sweep_final.csv", &after)?;
    }
    match history.termination {
        Termination::Failure(m) => Err(Failure::Solver(m)),
        _ => Ok(()),
    }
}

fn verify(ctx: &Context) -> Outcome {
    let v = &ctx.cfg.verify;
    if v.checks.is_empty() {
        eprintln!("warning: no checks selected");
        return Ok(());
    }
    let mesh = ctx.mesh()?;
    let mut problem = stage("setup", ctx.cfg.problem())?;
    problem.params.stk = v.stk;
    let out = run_suite(Suite {
        checks: v.checks.clone(),
        mesh: &mesh,
        problem,
        taylor_fields: v.taylor_fields,
        amplitude: v.amplitude,
        seed: v.seed,
        lemma_fields: v.lemma_fields,
        lemma_n_across: v.lemma_n_across,
        sensitivity_samples: v.sensitivity_samples,
    });
    for r in &out.results {
        println!("{} {:<18} value {:.3e} tol {:.1e}  {:.1} s  {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.value, r.tolerance, r.seconds, r.detail);
    }
    stage("report", write_checks_csv(ctx.create("verify.csv")?, &out.results))?;
    if let Some(t) = &out.taylor {
        stage("taylor report", write_taylor_csv(ctx.create("taylor.csv")?, &t.reports))?;
    }
    let failed: Vec<&str> = out.results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(s) = std::env::var("EROOPT_THREADS") {
        let n: usize = s.trim().parse().map_err(|_| Failure::Usage(format!("EROOPT_THREADS must be a positive integer, got {s:?}")))?;
        if n == 0 {
            return Err(Failure::Usage("EROOPT_THREADS must be at least 1".into()));
        }
        eroopt::exec::set_threads(n);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    configure_threads()?;
    let (common, f): (&Common, fn(&Context) -> Outcome) = match &cli.command {
        Command::Forward(c) => (c, forward),
        Command::Sweep(c) => (c, cmd_sweep),
        Command::Optimize(c) => (c, optimize),
        Command::Verify(c) => (c, verify),
    };
    let ctx = Context::new(common)?;
    f(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
