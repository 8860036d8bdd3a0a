use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use burgers_fem::config::Config;
use burgers_fem::fem::l2_norm;
use burgers_fem::integrator::fit_decay_rate;
use burgers_fem::mesh::build_square_mesh;
use burgers_fem::steady::{assumption_report, manufacture_forcing, solve_steady_with, SteadyMode, SteadyOptions};
use burgers_fem::study::{run_example1, run_example2, ExampleOptions, Study, StudyConfig};

#[derive(Parser)]
#[command(name = "burgers", version, about = "Boundary feedback stabilization of the forced 2D viscous Burgers equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the steady state and report the smallness diagnostics.
    Steady {
        #[arg(short, long)]
        config: PathBuf,
        /// Subdivisions per side (overrides `domain.n`).
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Run one trajectory and write `trajectory.csv`.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Mesh-convergence study; writes `rates_state.csv` and `rates_control.csv`.
    Study {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Reproduce the two stabilization experiments.
    Examples {
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Subdivisions per side for the long trajectories.
        #[arg(long, default_value_t = 32)]
        level: usize,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        /// Skip the convergence study of the first experiment.
        #[arg(long)]
        no_study: bool,
    },
    /// Write a plain-text dump of a square mesh.
    Mesh {
        #[arg(short, long, default_value_t = 4)]
        n: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    One,
    Two,
    All,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Steady { config, n } => steady(&load(&config)?, n),
        Command::Simulate { config, n } => simulate(&load(&config)?, n),
        Command::Study { config } => study(&load(&config)?),
        Command::Examples {
            which,
            out,
            level,
            t_end,
            no_study,
        } => examples(which, &out, level, t_end, no_study),
        Command::Mesh { n, out } => {
            let mesh = build_square_mesh([0.0, 0.0], 1.0, n)?;
            match out {
                Some(path) => mesh.write_dump(BufWriter::new(File::create(&path)?))?,
                None => mesh.write_dump(std::io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<Config> {
    Config::load(path).with_context(|| format!("reading {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(BufWriter::new(file))
}

fn steady(cfg: &Config, n: Option<usize>) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = Arc::new(problem.mesh(n.unwrap_or(cfg.domain.n))?);
    let spec = &problem.steady;
    let outcome = solve_steady_with(&mesh, spec, &SteadyOptions::default())?;
    let u = &outcome.field;
    println!("mesh size h = {}", mesh.h());
    println!("newton residuals: {:?}", outcome.residual_history);
    println!("||u||_L2 = {:.6e}", l2_norm(u));
    let forcing = match &spec.mode {
        SteadyMode::SolveFromForcing { forcing, .. } => Arc::clone(forcing),
        SteadyMode::ManufacturedAnalytic(exact) => manufacture_forcing(exact, spec.nu),
    };
    let report = assumption_report(&mesh, u, &forcing, spec.nu)?;
    println!("||grad u||_L2 = {:.6e}", report.grad_norm);
    println!("estimated N = {:.6e}", report.n_hat);
    println!("smallness bound nu/(4N) = {:.6e} (satisfied: {})", report.bound, report.satisfied);
    println!("zero-Neumann steady residual = {:.6e}", report.residual_norm);
    Ok(())
}

fn simulate(cfg: &Config, n: Option<usize>) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = Arc::new(problem.mesh(n.unwrap_or(cfg.domain.n))?);
    let trajectory = problem.simulate(&mesh, cfg.time.k, cfg.time.t_end)?;
    let record = &trajectory.record;
    record.write_csv(create(&cfg.output.dir, "trajectory.csv")?)?;
    let last = record.len() - 1;
    println!(
        "t = {}: ||w|| = {:.6e}, control = {:.6e}",
        record.times[last], record.l2_norms[last], record.control_norms[last]
    );
    let window = [record.times[0], record.times[last]];
    match fit_decay_rate(record, window, problem.nu, problem.c0, mesh.friedrichs_constant()) {
        Ok(fit) => println!(
            "fitted decay rate {:.6e} (predicted lower bound {:.6e}, C_LYP {:.6e})",
            fit.fitted_rate, fit.predicted_alpha, fit.c_lyp
        ),
        Err(e) => println!("no decay fit: {e}"),
    }
    Ok(())
}

fn write_tables(study: &Study, dir: &Path) -> Result<()> {
    let table = study.rate_table()?;
    table.write_state_csv(create(dir, "rates_state.csv")?)?;
    if !table.control.is_empty() {
        table.write_control_csv(create(dir, "rates_control.csv")?)?;
    }
    let mut out = std::io::stdout().lock();
    for row in &table.state {
        writeln!(
            out,
            "h = {:.5}  L2 {:.6e} ({})  H1 {:.6e} ({})",
            row.h,
            row.error_l2,
            rate(row.rate_l2),
            row.error_h1,
            rate(row.rate_h1)
        )?;
    }
    for row in &table.control {
        writeln!(out, "h = {:.5}  control {:.6e} ({})", row.h, row.error_ctrl, rate(row.rate_ctrl))?;
    }
    Ok(())
}

fn rate(r: Option<f64>) -> String {
    r.map(|v| format!("rate {v:.4}")).unwrap_or_else(|| "-".into())
}

fn study(cfg: &Config) -> Result<()> {
    let study = Study::new(cfg.study_config()?)?;
    write_tables(&study, &cfg.output.dir)
}

fn examples(which: Which, out: &Path, level: usize, t_end: f64, no_study: bool) -> Result<()> {
    if level == 0 {
        bail!("level must be positive");
    }
    let opts = ExampleOptions {
        level,
        t_end,
        study: (!no_study).then(StudyConfig::example1),
        ..ExampleOptions::default()
    };
    if matches!(which, Which::One | Which::All) {
        let a = run_example1(&opts, Some(out))?;
        for f in &a.files {
            println!("wrote {}", f.display());
        }
        println!(
            "example 1 at t = {t_end}: controlled {:.6e}, uncontrolled {:.6e}",
            a.controlled.record.l2_norms.last().copied().unwrap_or(0.0),
            a.uncontrolled.record.l2_norms.last().copied().unwrap_or(0.0)
        );
    }
    if matches!(which, Which::Two | Which::All) {
        let b = run_example2(&opts, Some(out))?;
        for f in &b.files {
            println!("wrote {}", f.display());
        }
        println!(
            "example 2 at t = {t_end}: controlled {:.6e}, control {:.6e}",
            b.controlled.record.l2_norms.last().copied().unwrap_or(0.0),
            b.controlled.record.control_norms.last().copied().unwrap_or(0.0)
        );
    }
    Ok(())
}
