//! Mesh-convergence studies against a fine reference run, and the two
//! stabilization experiments on the unit square.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::control::{control_trace, control_trace_distance, ControlParams};
use crate::error::{Error, Result};
use crate::fem::{h1_seminorm, l2_norm, prolong, FeField, SmoothField, ALL_TAGS};
use crate::integrator::{
    discretize_initial, run_with_coefficient, steady_coefficient, CoefficientSource, EvolutionConfig, InitialDatum,
    NonlinearSolver, Trajectory,
};
use crate::mesh::{build_square_mesh, refine_uniform, DirichletRegion, Mesh, Point, Segment};
use crate::steady::{SteadyMode, SteadySpec};

/// Everything that defines one evolution problem apart from the mesh and
/// the time grid.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    /// Lower-left corner and side length of the square domain.
    pub origin: Point,
    pub side: f64,
    pub nu: f64,
    pub c0: f64,
    pub steady: SteadySpec,
    /// `None` runs the uncontrolled problem.
    pub control: Option<ControlParams>,
    pub dirichlet: DirichletRegion,
    pub w0: SmoothField,
    pub initial: InitialDatum,
    pub coefficient_source: CoefficientSource,
    pub nonlinear: NonlinearSolver,
}

impl ProblemConfig {
    /// `u_inf = -0.2 x1` on the unit square with `nu = 0.1`, `c0 = 1`,
    /// controlled on the whole boundary, started from
    /// `sin(pi x1) sin(pi x2) + 0.2 x1`.
    pub fn example1() -> Self {
        use std::f64::consts::PI;
        let nu = 0.1;
        let c0 = 1.0;
        Self {
            origin: [0.0, 0.0],
            side: 1.0,
            nu,
            c0,
            steady: SteadySpec {
                mode: SteadyMode::ManufacturedAnalytic(SmoothField::affine(0.0, -0.2, 0.0)),
                nu,
                mean_value: -0.1,
            },
            control: Some(ControlParams::new(nu, c0, ALL_TAGS.to_vec()).expect("valid constants")),
            dirichlet: DirichletRegion::Empty,
            w0: SmoothField::new(
                |x| (PI * x[0]).sin() * (PI * x[1]).sin() + 0.2 * x[0],
                |x| {
                    [
                        PI * (PI * x[0]).cos() * (PI * x[1]).sin() + 0.2,
                        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                },
                |x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
            ),
            initial: InitialDatum::Interpolate,
            coefficient_source: CoefficientSource::AnalyticSteady,
            nonlinear: NonlinearSolver::Newton,
        }
    }

    /// Homogeneous Dirichlet data on `{1} x [0, 1]`, control on the rest of
    /// the boundary, started from `sin(pi x1) sin(pi x2)`.
    pub fn example2() -> Self {
        use std::f64::consts::PI;
        let mut p = Self::example1();
        p.dirichlet = DirichletRegion::Segments(vec![Segment::new(0, 1.0, 0.0, 1.0)]);
        p.control = Some(ControlParams::on_neumann(p.nu, p.c0).expect("valid constants"));
        p.w0 = SmoothField::new(
            |x| (PI * x[0]).sin() * (PI * x[1]).sin(),
            |x| {
                [
                    PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                    PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                ]
            },
            |x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
        );
        p
    }

    /// The same problem without feedback (zero Neumann data where the
    /// control would act).
    pub fn uncontrolled(&self) -> Self {
        Self {
            control: None,
            ..self.clone()
        }
    }

    /// Tagged `n x n` mesh of the domain.
    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        build_square_mesh(self.origin, self.side, n)?.tag_boundary(&self.dirichlet)
    }

    pub fn evolution(&self, k: f64, t_end: f64) -> Result<EvolutionConfig> {
        let mut cfg = EvolutionConfig::new(k, t_end, self.nu, self.control.clone())?;
        cfg.nonlinear = self.nonlinear;
        cfg.coefficient_source = self.coefficient_source;
        Ok(cfg)
    }

    /// Integrates on `mesh` from the discretized initial datum.
    pub fn simulate(&self, mesh: &Arc<Mesh>, k: f64, t_end: f64) -> Result<Trajectory> {
        let cfg = self.evolution(k, t_end)?;
        let u_inf = steady_coefficient(mesh, &self.steady, self.coefficient_source)?;
        let w0 = discretize_initial(mesh, &self.w0, self.initial)?;
        run_with_coefficient(&w0, &cfg, &u_inf)
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    /// Subdivisions per side of each compared mesh.
    pub mesh_levels: Vec<usize>,
    pub reference_level: usize,
    pub k: f64,
    pub t_eval: f64,
    pub problem: ProblemConfig,
}

impl StudyConfig {
    pub fn example1() -> Self {
        Self {
            mesh_levels: vec![4, 8, 16, 32],
            reference_level: 64,
            k: 0.0005,
            t_eval: 1.0,
            problem: ProblemConfig::example1(),
        }
    }
}

/// `rate_i = log(e_{i-1} / e_i) / log(h_{i-1} / h_i)`, which is
/// `log2(e_{i-1} / e_i)` when the mesh size halves.
pub fn compute_rates(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() {
        return Err(Error::DimensionMismatch {
            expected: hs.len(),
            found: errors.len(),
        });
    }
    if errors.len() < 2 {
        return Err(Error::InvalidParameter("rates need at least two levels".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidParameter(format!("error {e} is not positive")));
    }
    if hs.windows(2).any(|p| !(p[1] > 0.0 && p[1] < p[0])) {
        return Err(Error::InvalidParameter("mesh sizes must be positive and decreasing".into()));
    }
    Ok((1..errors.len())
        .map(|i| (errors[i - 1] / errors[i]).ln() / (hs[i - 1] / hs[i]).ln())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateRow {
    pub h: f64,
    pub error_l2: f64,
    pub rate_l2: Option<f64>,
    pub error_h1: f64,
    pub rate_h1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlRow {
    pub h: f64,
    pub error_ctrl: f64,
    pub rate_ctrl: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTable {
    pub state: Vec<StateRow>,
    /// Empty for uncontrolled problems.
    pub control: Vec<ControlRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.16e}")).unwrap_or_default()
}

impl RateTable {
    pub const STATE_HEADER: &'static str = "h,error_l2,rate_l2,error_h1,rate_h1";
    pub const CONTROL_HEADER: &'static str = "h,error_ctrl,rate_ctrl";

    pub fn write_state_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::STATE_HEADER)?;
        for r in &self.state {
            writeln!(
                out,
                "{:.16e},{:.16e},{},{:.16e},{}",
                r.h,
                r.error_l2,
                opt(r.rate_l2),
                r.error_h1,
                opt(r.rate_h1)
            )?;
        }
        Ok(())
    }

    pub fn write_control_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CONTROL_HEADER)?;
        for r in &self.control {
            writeln!(out, "{:.16e},{:.16e},{}", r.h, r.error_ctrl, opt(r.rate_ctrl))?;
        }
        Ok(())
    }
}

/// Final state of one level, with the steady coefficient it was run with.
#[derive(Debug)]
pub struct LevelRun {
    pub trajectory: Trajectory,
    pub u_inf: FeField,
}

/// A convergence study over a nested mesh chain. Level runs are computed on
/// first use and cached.
#[derive(Debug)]
pub struct Study {
    config: StudyConfig,
    /// Meshes from the coarsest level up to the reference, each the uniform
    /// refinement of the previous one.
    chain: Vec<Arc<Mesh>>,
    runs: Vec<Mutex<Option<Arc<LevelRun>>>>,
}

impl Study {
    pub fn new(config: StudyConfig) -> Result<Self> {
        let levels = &config.mesh_levels;
        if levels.is_empty() {
            return Err(Error::InvalidConfiguration("no mesh levels".into()));
        }
        if levels.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidConfiguration("mesh levels must be strictly increasing".into()));
        }
        let coarsest = levels[0];
        if coarsest == 0 {
            return Err(Error::InvalidParameter("mesh level 0".into()));
        }
        let on_chain = |n: usize| n % coarsest == 0 && (n / coarsest).is_power_of_two();
        if let Some(&n) = levels.iter().find(|&&n| !on_chain(n)) {
            return Err(Error::NonNested(format!("level {n} is not a dyadic refinement of level {coarsest}")));
        }
        if !on_chain(config.reference_level) || config.reference_level < *levels.last().expect("nonempty") {
            return Err(Error::NonNested(format!(
                "reference level {} is not a dyadic refinement of every level",
                config.reference_level
            )));
        }
        let steps = config.t_eval / config.k;
        if !(config.t_eval > 0.0) || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "t_eval {} is not a multiple of k {}",
                config.t_eval, config.k
            )));
        }
        config.problem.evolution(config.k, config.t_eval)?;

        let mut chain = vec![Arc::new(config.problem.mesh(coarsest)?)];
        let mut n = coarsest;
        while n < config.reference_level {
            let next = refine_uniform(chain.last().expect("nonempty"))?;
            chain.push(Arc::new(next));
            n *= 2;
        }
        let runs = chain.iter().map(|_| Mutex::new(None)).collect();
        Ok(Self { config, chain, runs })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    fn chain_index(&self, n: usize) -> Result<usize> {
        let coarsest = self.config.mesh_levels[0];
        if n >= coarsest && n % coarsest == 0 && (n / coarsest).is_power_of_two() && n <= self.config.reference_level {
            Ok((n / coarsest).trailing_zeros() as usize)
        } else {
            Err(Error::NonNested(format!(
                "level {n} is not nested between {coarsest} and {}",
                self.config.reference_level
            )))
        }
    }

    pub fn mesh(&self, n: usize) -> Result<&Arc<Mesh>> {
        Ok(&self.chain[self.chain_index(n)?])
    }

    /// The run on level `n`, computed on first request.
    pub fn level_run(&self, n: usize) -> Result<Arc<LevelRun>> {
        let i = self.chain_index(n)?;
        let mut slot = self.runs[i].lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        if let Some(run) = slot.as_ref() {
            return Ok(Arc::clone(run));
        }
        let mesh = &self.chain[i];
        let p = &self.config.problem;
        let u_inf = steady_coefficient(mesh, &p.steady, p.coefficient_source)?;
        let w0 = discretize_initial(mesh, &p.w0, p.initial)?;
        let cfg = p.evolution(self.config.k, self.config.t_eval)?;
        let trajectory = run_with_coefficient(&w0, &cfg, &u_inf)?;
        let run = Arc::new(LevelRun { trajectory, u_inf });
        *slot = Some(Arc::clone(&run));
        Ok(run)
    }

    /// Runs the reference and all levels, concurrently.
    pub fn run_all(&self) -> Result<()> {
        let mut levels = vec![self.config.reference_level];
        levels.extend(self.config.mesh_levels.iter().rev().copied());
        levels.par_iter().try_for_each(|&n| self.level_run(n).map(|_| ()))
    }

    fn on_reference(&self, field: &FeField) -> Result<FeField> {
        prolong(field, self.mesh(self.config.reference_level)?)
    }

    /// `L2` and `H1`-seminorm distance at `t_eval` between the prolonged
    /// level-`n` solution and the reference solution.
    pub fn state_errors(&self, n: usize) -> Result<(f64, f64)> {
        let reference = self.level_run(self.config.reference_level)?;
        let level = self.level_run(n)?;
        let diff = self
            .on_reference(&level.trajectory.final_state)?
            .sub(&reference.trajectory.final_state)?;
        Ok((l2_norm(&diff), h1_seminorm(&diff)))
    }

    /// Boundary `L2` distance at `t_eval` between the level-`n` and reference
    /// controls, on the reference boundary quadrature.
    pub fn control_errors(&self, n: usize) -> Result<f64> {
        let p = self
            .config
            .problem
            .control
            .as_ref()
            .ok_or_else(|| Error::InvalidConfiguration("control errors of an uncontrolled problem".into()))?;
        let reference = self.level_run(self.config.reference_level)?;
        let level = self.level_run(n)?;
        let reference_trace = control_trace(&reference.trajectory.final_state, &reference.u_inf, p)?;
        let level_trace = control_trace(
            &self.on_reference(&level.trajectory.final_state)?,
            &self.on_reference(&level.u_inf)?,
            p,
        )?;
        control_trace_distance(&level_trace, &reference_trace, p)
    }

    /// Error and rate rows for every configured level.
    pub fn rate_table(&self) -> Result<RateTable> {
        self.run_all()?;
        let levels = &self.config.mesh_levels;
        let hs: Vec<f64> = levels
            .iter()
            .map(|&n| self.mesh(n).map(|m| m.h()))
            .collect::<Result<_>>()?;
        let state: Vec<(f64, f64)> = levels.iter().map(|&n| self.state_errors(n)).collect::<Result<_>>()?;
        let rate = |errors: &[f64]| -> Result<Vec<Option<f64>>> {
            if errors.len() < 2 {
                return Ok(vec![None; errors.len()]);
            }
            let mut rates = vec![None];
            rates.extend(compute_rates(errors, &hs)?.into_iter().map(Some));
            Ok(rates)
        };
        let l2: Vec<f64> = state.iter().map(|e| e.0).collect();
        let h1: Vec<f64> = state.iter().map(|e| e.1).collect();
        let (rate_l2, rate_h1) = (rate(&l2)?, rate(&h1)?);
        let mut table = RateTable {
            state: (0..levels.len())
                .map(|i| StateRow {
                    h: hs[i],
                    error_l2: l2[i],
                    rate_l2: rate_l2[i],
                    error_h1: h1[i],
                    rate_h1: rate_h1[i],
                })
                .collect(),
            control: Vec::new(),
        };
        if self.config.problem.control.is_some() {
            let ctrl: Vec<f64> = levels.iter().map(|&n| self.control_errors(n)).collect::<Result<_>>()?;
            let rate_ctrl = rate(&ctrl)?;
            table.control = (0..levels.len())
                .map(|i| ControlRow {
                    h: hs[i],
                    error_ctrl: ctrl[i],
                    rate_ctrl: rate_ctrl[i],
                })
                .collect();
        }
        Ok(table)
    }
}

/// Settings shared by the two experiments.
#[derive(Clone, Debug)]
pub struct ExampleOptions {
    /// Subdivisions per side for the long trajectories.
    pub level: usize,
    pub k: f64,
    pub t_end: f64,
    /// Convergence study for the first experiment; skipped when `None`.
    pub study: Option<StudyConfig>,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        Self {
            level: 32,
            k: 0.0005,
            t_end: 5.0,
            study: Some(StudyConfig::example1()),
        }
    }
}

#[derive(Debug)]
pub struct ExampleArtifacts {
    pub controlled: Trajectory,
    pub uncontrolled: Trajectory,
    pub rates: Option<RateTable>,
    pub files: Vec<PathBuf>,
}

fn create(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)?;
    files.push(path);
    Ok(BufWriter::new(file))
}

fn run_pair(problem: &ProblemConfig, opts: &ExampleOptions) -> Result<(Trajectory, Trajectory)> {
    let mesh = Arc::new(problem.mesh(opts.level)?);
    let uncontrolled = problem.uncontrolled();
    let (a, b) = rayon::join(
        || problem.simulate(&mesh, opts.k, opts.t_end),
        || uncontrolled.simulate(&mesh, opts.k, opts.t_end),
    );
    Ok((a?, b?))
}

/// Whole-boundary feedback: controlled and uncontrolled trajectories (the
/// controlled file's `control_l2` column is the control history) and, when
/// configured, the state and control rate tables.
pub fn run_example1(opts: &ExampleOptions, output_dir: Option<&Path>) -> Result<ExampleArtifacts> {
    let problem = ProblemConfig::example1();
    let (pair, rates) = rayon::join(
        || run_pair(&problem, opts),
        || opts.study.clone().map(|cfg| Study::new(cfg)?.rate_table()).transpose(),
    );
    let (controlled, uncontrolled) = pair?;
    let rates = rates?;
    let mut files = Vec::new();
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
        controlled.record.write_csv(create(dir, "example1_controlled.csv", &mut files)?)?;
        uncontrolled.record.write_csv(create(dir, "example1_uncontrolled.csv", &mut files)?)?;
        if let Some(table) = &rates {
            table.write_state_csv(create(dir, "rates_state.csv", &mut files)?)?;
            table.write_control_csv(create(dir, "rates_control.csv", &mut files)?)?;
        }
    }
    Ok(ExampleArtifacts {
        controlled,
        uncontrolled,
        rates,
        files,
    })
}

/// Dirichlet data on the right side, feedback on the remaining sides.
pub fn run_example2(opts: &ExampleOptions, output_dir: Option<&Path>) -> Result<ExampleArtifacts> {
    let (controlled, uncontrolled) = run_pair(&ProblemConfig::example2(), opts)?;
    let mut files = Vec::new();
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
        controlled.record.write_csv(create(dir, "example2_controlled.csv", &mut files)?)?;
        uncontrolled.record.write_csv(create(dir, "example2_uncontrolled.csv", &mut files)?)?;
    }
    Ok(ExampleArtifacts {
        controlled,
        uncontrolled,
        rates: None,
        files,
    })
}
