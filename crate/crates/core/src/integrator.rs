//! Backward-Euler time stepping of the perturbation `w = u - u_inf`:
//!
//! `(1/k) M (W - W_prev) + nu K W + B(u_inf; W) + B(W; u_inf) + B(W; W)
//!  + boundary(W) = 0`
//!
//! where `boundary(W)` is the weak form of the feedback law on the actuated
//! edges (absent for the uncontrolled, zero-Neumann problem).

use std::io::Write;
use std::sync::{Arc, Mutex};

use crate::control::{control_boundary_l2, control_linear_matrix, ControlParams};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, assemble_convection_by_gradient, assemble_convection_by_transport, assemble_mass,
    assemble_stiffness, boundary_cubic_jacobian, boundary_cubic_residual, elliptic_projection, h1_seminorm,
    interpolate, l2_norm, BoundaryField, FeField, SmoothField,
};
use crate::mesh::Mesh;
use crate::sparse::{norm2, ReusableLu, SparseMatrix};
use crate::steady::{solve_steady, SteadyMode, SteadySpec, DEFAULT_STEADY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearSolver {
    /// Full Newton on the implicit equations.
    Newton,
    /// One linear solve per step with the transport coefficient and the
    /// cubic boundary weight taken from the previous step.
    PicardLagged,
}

/// Where the convection coefficient `u_inf` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientSource {
    /// Discrete steady solve on the simulation mesh.
    DiscreteSteady,
    /// Nodal interpolant of a closed-form steady state.
    AnalyticSteady,
}

#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    pub k: f64,
    pub t_end: f64,
    pub nu: f64,
    pub nonlinear: NonlinearSolver,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// `None` runs the uncontrolled problem with zero Neumann data.
    pub control: Option<ControlParams>,
    pub coefficient_source: CoefficientSource,
}

impl EvolutionConfig {
    pub fn new(k: f64, t_end: f64, nu: f64, control: Option<ControlParams>) -> Result<Self> {
        let cfg = Self {
            k,
            t_end,
            nu,
            nonlinear: NonlinearSolver::Newton,
            newton_tol: 1e-10,
            newton_max: 20,
            control,
            coefficient_source: CoefficientSource::AnalyticSteady,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::InvalidParameter(format!("time step {} outside (0, 1)", self.k)));
        }
        if !(self.t_end >= self.k) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "final time {} shorter than one step {}",
                self.t_end, self.k
            )));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity {} must be positive", self.nu)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(Error::InvalidParameter("Newton tolerance and iteration cap must be positive".into()));
        }
        if let Some(p) = &self.control {
            p.validate()?;
            if p.nu != self.nu {
                return Err(Error::InvalidConfiguration(format!(
                    "control viscosity {} differs from the flow viscosity {}",
                    p.nu, self.nu
                )));
            }
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; a final partial step is rounded up.
    pub fn num_steps(&self) -> usize {
        ((self.t_end / self.k) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Assembled, state-independent parts of the scheme for one mesh, steady
/// state and step size.
#[derive(Debug)]
pub struct Operators {
    mesh: Arc<Mesh>,
    u_inf: FeField,
    control: Option<ControlParams>,
    mass: SparseMatrix,
    /// `M/k + nu K + B(u_inf; .) + B(.; u_inf) + boundary linear part`.
    lhs: SparseMatrix,
    k: f64,
    dirichlet: Vec<bool>,
    has_dirichlet: bool,
    /// Every step matrix shares one sparsity pattern, so the symbolic
    /// factorization is kept between solves.
    solver: Mutex<ReusableLu>,
}

impl Operators {
    pub fn new(u_inf: &FeField, cfg: &EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = Arc::clone(u_inf.mesh());
        let mass = assemble_mass(&mesh);
        let mut lhs = mass
            .scaled(1.0 / cfg.k)
            .add(cfg.nu, &assemble_stiffness(&mesh))?
            .add(1.0, &assemble_convection_by_transport(u_inf))?
            .add(1.0, &assemble_convection_by_gradient(u_inf))?;
        if let Some(p) = &cfg.control {
            lhs = lhs.add(1.0, &control_linear_matrix(u_inf, p)?)?;
        }
        let dirichlet = mesh.dirichlet_mask();
        let has_dirichlet = dirichlet.iter().any(|&d| d);
        Ok(Self {
            u_inf: u_inf.clone(),
            control: cfg.control.clone(),
            mass,
            lhs,
            k: cfg.k,
            has_dirichlet,
            dirichlet,
            mesh,
            solver: Mutex::new(ReusableLu::new()),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn u_inf(&self) -> &FeField {
        &self.u_inf
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Galerkin residual of the step equations at `w`, with Dirichlet rows
    /// zeroed.
    pub fn residual(&self, w: &FeField, w_prev: &FeField) -> Result<Vec<f64>> {
        let transport = assemble_convection_by_transport(w);
        self.residual_with(w, w_prev, &transport)
    }

    fn residual_with(&self, w: &FeField, w_prev: &FeField, transport: &SparseMatrix) -> Result<Vec<f64>> {
        w.check_on(&self.mesh)?;
        w_prev.check_on(&self.mesh)?;
        let mut r = self.lhs.spmv(w.values())?;
        let m_prev = self.mass.spmv(w_prev.values())?;
        let tw = transport.spmv(w.values())?;
        for i in 0..r.len() {
            r[i] += tw[i] - m_prev[i] / self.k;
        }
        if let Some(p) = &self.control {
            let beta = p.cubic_weight();
            for (ri, ci) in r.iter_mut().zip(boundary_cubic_residual(w, &p.active_tags)) {
                *ri += beta * ci;
            }
        }
        self.zero_dirichlet(&mut r);
        Ok(r)
    }

    /// Newton Jacobian of [`Operators::residual`], with Dirichlet rows and
    /// columns replaced by the identity.
    pub fn jacobian(&self, w: &FeField) -> Result<SparseMatrix> {
        let transport = assemble_convection_by_transport(w);
        self.jacobian_with(w, &transport)
    }

    fn jacobian_with(&self, w: &FeField, transport: &SparseMatrix) -> Result<SparseMatrix> {
        let mut j = self.lhs.add(1.0, transport)?.add(1.0, &assemble_convection_by_gradient(w))?;
        if let Some(p) = &self.control {
            j = j.add(p.cubic_weight(), &boundary_cubic_jacobian(w, &p.active_tags))?;
        }
        Ok(self.eliminate(j))
    }

    /// Matrix and right-hand side of the lagged linear step.
    fn picard_system(&self, w_prev: &FeField) -> Result<(SparseMatrix, Vec<f64>)> {
        let mut a = self.lhs.add(1.0, &assemble_convection_by_transport(w_prev))?;
        if let Some(p) = &self.control {
            let weight = BoundaryField::trace(w_prev, &p.active_tags).map(|v| v * v);
            a = a.add(p.cubic_weight(), &assemble_boundary_mass(&self.mesh, &weight, &p.active_tags)?)?;
        }
        let mut rhs: Vec<f64> = self.mass.spmv(w_prev.values())?.iter().map(|v| v / self.k).collect();
        self.zero_dirichlet(&mut rhs);
        Ok((self.eliminate(a), rhs))
    }

    fn eliminate(&self, a: SparseMatrix) -> SparseMatrix {
        if self.has_dirichlet {
            a.eliminate(&self.dirichlet)
        } else {
            a
        }
    }

    fn zero_dirichlet(&self, v: &mut [f64]) {
        if self.has_dirichlet {
            v.iter_mut().zip(&self.dirichlet).filter(|(_, &d)| d).for_each(|(x, _)| *x = 0.0);
        }
    }

    fn field(&self, values: Vec<f64>) -> Result<FeField> {
        FeField::new(Arc::clone(&self.mesh), values)
    }

    fn solve(&self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let mut solver = self.solver.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        solver.solve(a, b)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: FeField,
    /// Linear solves performed.
    pub iterations: usize,
    /// Residual norm before each solve and after the last one.
    pub residual_history: Vec<f64>,
}

/// One backward-Euler step from `w_prev`, starting Newton at `w_prev`.
pub fn step(w_prev: &FeField, cfg: &EvolutionConfig, ops: &Operators) -> Result<StepOutcome> {
    w_prev.check_on(ops.mesh())?;
    match cfg.nonlinear {
        NonlinearSolver::PicardLagged => {
            let (a, rhs) = ops.picard_system(w_prev)?;
            let state = ops.field(ops.solve(&a, &rhs)?)?;
            let residual = norm2(&ops.residual(&state, w_prev)?);
            Ok(StepOutcome {
                state,
                iterations: 1,
                residual_history: vec![residual],
            })
        }
        NonlinearSolver::Newton => {
            let mut w = w_prev.clone();
            let mut history = Vec::new();
            for iteration in 0..=cfg.newton_max {
                let transport = assemble_convection_by_transport(&w);
                let r = ops.residual_with(&w, w_prev, &transport)?;
                let norm = norm2(&r);
                history.push(norm);
                if !norm.is_finite() {
                    break;
                }
                if norm <= cfg.newton_tol {
                    return Ok(StepOutcome {
                        state: w,
                        iterations: iteration,
                        residual_history: history,
                    });
                }
                if iteration == cfg.newton_max {
                    break;
                }
                let j = ops.jacobian_with(&w, &transport)?;
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                let delta = ops.solve(&j, &neg)?;
                let next: Vec<f64> = w.values().iter().zip(&delta).map(|(a, d)| a + d).collect();
                if next.iter().any(|v| !v.is_finite()) {
                    break;
                }
                w = ops.field(next)?;
            }
            Err(Error::Nonconvergence { history })
        }
    }
}

/// `V(w) = (1/2) int w^2 dx`.
pub fn lyapunov(w: &FeField) -> f64 {
    0.5 * l2_norm(w).powi(2)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub h1_seminorms: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub control_norms: Vec<f64>,
    pub newton_iterations: Vec<usize>,
}

impl TrajectoryRecord {
    pub const CSV_HEADER: &'static str = "time,l2,h1semi,lyapunov,control_l2,newton_iters";

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, w: &FeField, control: f64, iterations: usize) {
        let l2 = l2_norm(w);
        self.times.push(t);
        self.l2_norms.push(l2);
        self.h1_seminorms.push(h1_seminorm(w));
        self.lyapunov.push(0.5 * l2 * l2);
        self.control_norms.push(control);
        self.newton_iterations.push(iterations);
    }

    /// One row per recorded time, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.times[i],
                self.l2_norms[i],
                self.h1_seminorms[i],
                self.lyapunov[i],
                self.control_norms[i],
                self.newton_iterations[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Diagnostics at `t = 0` and after every step.
    pub record: TrajectoryRecord,
    pub final_state: FeField,
    /// Largest `|W|` seen at a Dirichlet vertex over the run.
    pub max_dirichlet_abs: f64,
}

/// Resolves the convection coefficient on `mesh`.
pub fn steady_coefficient(mesh: &Arc<Mesh>, steady: &SteadySpec, source: CoefficientSource) -> Result<FeField> {
    match (source, &steady.mode) {
        (CoefficientSource::AnalyticSteady, SteadyMode::ManufacturedAnalytic(u)) => interpolate(|x| u.eval(x), mesh),
        (CoefficientSource::AnalyticSteady, SteadyMode::SolveFromForcing { .. }) => Err(Error::InvalidConfiguration(
            "an analytic coefficient needs a closed-form steady state".into(),
        )),
        (CoefficientSource::DiscreteSteady, SteadyMode::ManufacturedAnalytic(u)) => solve_steady(
            mesh,
            &SteadySpec::manufactured_solve(u, steady.nu, steady.mean_value),
            DEFAULT_STEADY_TOL,
        ),
        (CoefficientSource::DiscreteSteady, SteadyMode::SolveFromForcing { .. }) => {
            solve_steady(mesh, steady, DEFAULT_STEADY_TOL)
        }
    }
}

/// Integrates from `w0` to `cfg.t_end` around the steady state described by
/// `steady`.
pub fn run(w0: &FeField, cfg: &EvolutionConfig, steady: &SteadySpec) -> Result<Trajectory> {
    let u_inf = steady_coefficient(w0.mesh(), steady, cfg.coefficient_source)?;
    run_with_coefficient(w0, cfg, &u_inf)
}

/// [`run`] with an already discretized steady state.
pub fn run_with_coefficient(w0: &FeField, cfg: &EvolutionConfig, u_inf: &FeField) -> Result<Trajectory> {
    w0.check_mesh(u_inf)?;
    let ops = Operators::new(u_inf, cfg)?;
    let mut w = w0.clone();
    if ops.has_dirichlet {
        let mut values = w.into_values();
        ops.zero_dirichlet(&mut values);
        w = ops.field(values)?;
    }

    let control_norm = |w: &FeField| match &cfg.control {
        Some(p) => control_boundary_l2(w, u_inf, p),
        None => Ok(0.0),
    };
    let mut record = TrajectoryRecord::default();
    record.push(0.0, &w, control_norm(&w)?, 0);
    let mut max_dirichlet_abs = 0.0f64;
    for n in 1..=cfg.num_steps() {
        let outcome = step(&w, cfg, &ops)?;
        w = outcome.state;
        for (v, _) in w.values().iter().zip(&ops.dirichlet).filter(|(_, &d)| d) {
            max_dirichlet_abs = max_dirichlet_abs.max(v.abs());
        }
        record.push(n as f64 * cfg.k, &w, control_norm(&w)?, outcome.iterations);
    }
    Ok(Trajectory {
        record,
        final_state: w,
        max_dirichlet_abs,
    })
}

/// How a closed-form initial datum becomes a P1 field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialDatum {
    #[default]
    Interpolate,
    /// Shifted elliptic projection with unit shift.
    Projection,
}

pub fn discretize_initial(mesh: &Arc<Mesh>, w0: &SmoothField, how: InitialDatum) -> Result<FeField> {
    match how {
        InitialDatum::Interpolate => interpolate(|x| w0.eval(x), mesh),
        InitialDatum::Projection => elliptic_projection(mesh, w0, 1.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    /// Least-squares decay rate of `||W^n||`, positive for decay.
    pub fitted_rate: f64,
    pub fit_window: [f64; 2],
    pub predicted_alpha: f64,
    pub c_lyp: f64,
}

/// `(1 / (2 C_F)) min(nu/2, c0 + 7 nu / 4)`.
pub fn predicted_alpha(nu: f64, c0: f64, friedrichs: f64) -> f64 {
    (0.5 * nu).min(c0 + 1.75 * nu) / (2.0 * friedrichs)
}

/// `(2 / C_F) min(7 nu / 8, c0 / 2 + 7 nu / 8)`.
pub fn lyapunov_rate_constant(nu: f64, c0: f64, friedrichs: f64) -> f64 {
    2.0 * (0.875 * nu).min(0.5 * c0 + 0.875 * nu) / friedrichs
}

const MIN_FIT_SAMPLES: usize = 10;

/// Fits `log ||W^n|| = a - rate t` over the samples with `t` in `window`.
pub fn fit_decay_rate(
    record: &TrajectoryRecord,
    window: [f64; 2],
    nu: f64,
    c0: f64,
    friedrichs: f64,
) -> Result<DecayReport> {
    let (first, last) = match (record.times.first(), record.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::FitDomain("empty record".into())),
    };
    if !(window[0] < window[1]) || window[0] < first || window[1] > last {
        return Err(Error::FitDomain(format!(
            "window [{}, {}] not inside [{first}, {last}]",
            window[0], window[1]
        )));
    }
    let mut samples = Vec::new();
    for (&t, &norm) in record.times.iter().zip(&record.l2_norms) {
        if t < window[0] || t > window[1] {
            continue;
        }
        if !(norm > 0.0) {
            return Err(Error::FitDomain(format!("norm {norm} at t = {t} is not positive")));
        }
        samples.push((t, norm.ln()));
    }
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::FitDomain(format!(
            "{} samples in the window, need {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    let count = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / count;
    let y_mean = samples.iter().map(|s| s.1).sum::<f64>() / count;
    let (mut sty, mut stt) = (0.0, 0.0);
    for &(t, y) in &samples {
        sty += (t - t_mean) * (y - y_mean);
        stt += (t - t_mean) * (t - t_mean);
    }
    Ok(DecayReport {
        fitted_rate: -sty / stt,
        fit_window: window,
        predicted_alpha: predicted_alpha(nu, c0, friedrichs),
        c_lyp: lyapunov_rate_constant(nu, c0, friedrichs),
    })
}
