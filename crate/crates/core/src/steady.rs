//! Steady states of the forced equation
//! `-nu Lap u + u (grad u . 1) = f` with Neumann data, their manufactured
//! forcings, and the smallness diagnostics reported alongside them.
//!
//! The pure-Neumann problem only determines `u` up to the nonlinear
//! selection made by its mean, so every solve prescribes `int u dx` through
//! a bordered Newton system.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_convection_by_gradient, assemble_convection_by_transport, assemble_mass, assemble_stiffness,
    boundary_load, discrete_laplacian, h1_seminorm, interpolate, l2_norm, load_vector, trilinear_B, BoundaryField,
    BoundaryFn, FeField, ScalarFn, SmoothField, ALL_TAGS,
};
use crate::mesh::Mesh;
use crate::sparse::{norm2, solve_bordered, BorderedSystem, SparseMatrix};

pub const DEFAULT_STEADY_TOL: f64 = 1e-10;
const CONSTRAINT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 8;

#[derive(Clone)]
pub enum SteadyMode {
    /// The steady state is known in closed form; its interpolant is used.
    ManufacturedAnalytic(SmoothField),
    /// Solve for the steady state. `boundary_flux` is the prescribed normal
    /// derivative (zero when absent).
    SolveFromForcing {
        forcing: ScalarFn,
        boundary_flux: Option<BoundaryFn>,
    },
}

impl std::fmt::Debug for SteadyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SteadyMode::ManufacturedAnalytic(_) => f.write_str("ManufacturedAnalytic"),
            SteadyMode::SolveFromForcing { boundary_flux, .. } => f
                .debug_struct("SolveFromForcing")
                .field("boundary_flux", &boundary_flux.is_some())
                .finish_non_exhaustive(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadySpec {
    pub mode: SteadyMode,
    pub nu: f64,
    /// Target `int u dx`.
    pub mean_value: f64,
}

impl SteadySpec {
    /// Solve mode for a manufactured steady state: forcing from
    /// [`manufacture_forcing`] and Neumann data `grad u . n`.
    pub fn manufactured_solve(u: &SmoothField, nu: f64, mean_value: f64) -> Self {
        Self {
            mode: SteadyMode::SolveFromForcing {
                forcing: manufacture_forcing(u, nu),
                boundary_flux: Some(u.normal_derivative()),
            },
            nu,
            mean_value,
        }
    }
}

/// `f = -nu Lap u + u (d1 u + d2 u)`.
pub fn manufacture_forcing(u: &SmoothField, nu: f64) -> ScalarFn {
    let u = u.clone();
    Arc::new(move |x| {
        let g = (u.gradient)(x);
        -nu * (u.laplacian)(x) + u.eval(x) * (g[0] + g[1])
    })
}

/// Discrete residual `nu K u + B(u; u, .) - (f, .) - nu <g, .>` and its
/// Jacobian.
pub struct SteadyOperator {
    mesh: Arc<Mesh>,
    nu: f64,
    stiffness: SparseMatrix,
    load: Vec<f64>,
    mean_row: Vec<f64>,
}

impl SteadyOperator {
    pub fn new(mesh: &Arc<Mesh>, nu: f64, forcing: &ScalarFn, flux: Option<&BoundaryFn>) -> Result<Self> {
        let mut load = load_vector(mesh, forcing);
        if let Some(g) = flux {
            let g = BoundaryField::from_fn(mesh, ALL_TAGS, |x, n| g(x, n));
            let b = boundary_load(mesh, &g, ALL_TAGS)?;
            load.iter_mut().zip(&b).for_each(|(l, bi)| *l += nu * bi);
        }
        let mass = assemble_mass(mesh);
        let mean_row = mass.spmv(&vec![1.0; mesh.num_vertices()])?;
        Ok(Self {
            mesh: Arc::clone(mesh),
            nu,
            stiffness: assemble_stiffness(mesh),
            load,
            mean_row,
        })
    }

    pub fn residual(&self, u: &FeField) -> Result<Vec<f64>> {
        let ku = self.stiffness.spmv(u.values())?;
        let cu = assemble_convection_by_transport(u).spmv(u.values())?;
        Ok((0..ku.len()).map(|i| self.nu * ku[i] + cu[i] - self.load[i]).collect())
    }

    pub fn jacobian(&self, u: &FeField) -> Result<SparseMatrix> {
        self.stiffness
            .scaled(self.nu)
            .add(1.0, &assemble_convection_by_transport(u))?
            .add(1.0, &assemble_convection_by_gradient(u))
    }

    fn mean(&self, u: &FeField) -> f64 {
        self.mean_row.iter().zip(u.values()).map(|(c, v)| c * v).sum()
    }

    fn field(&self, values: Vec<f64>) -> Result<FeField> {
        FeField::new(Arc::clone(&self.mesh), values)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SteadyOptions {
    pub tol: Option<f64>,
    /// Newton starting point; zero when absent.
    pub initial_guess: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SteadyOutcome {
    pub field: FeField,
    /// `|F(u_k) + mu_k m|` for each Newton iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub multiplier: f64,
}

/// Newton solve of the mean-constrained steady problem. In
/// `ManufacturedAnalytic` mode the interpolant is returned directly.
pub fn solve_steady(mesh: &Arc<Mesh>, spec: &SteadySpec, tol: f64) -> Result<FeField> {
    let options = SteadyOptions {
        tol: Some(tol),
        initial_guess: None,
    };
    Ok(solve_steady_with(mesh, spec, &options)?.field)
}

pub fn solve_steady_with(mesh: &Arc<Mesh>, spec: &SteadySpec, options: &SteadyOptions) -> Result<SteadyOutcome> {
    if !(spec.nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity {} must be positive", spec.nu)));
    }
    let (forcing, flux) = match &spec.mode {
        SteadyMode::ManufacturedAnalytic(u) => {
            return Ok(SteadyOutcome {
                field: interpolate(|x| u.eval(x), mesh)?,
                residual_history: Vec::new(),
                multiplier: 0.0,
            })
        }
        SteadyMode::SolveFromForcing { forcing, boundary_flux } => (forcing, boundary_flux.as_ref()),
    };
    let tol = options.tol.unwrap_or(DEFAULT_STEADY_TOL);
    let op = SteadyOperator::new(mesh, spec.nu, forcing, flux)?;
    let mut u = match &options.initial_guess {
        Some(values) => op.field(values.clone())?,
        None => FeField::zeros(mesh),
    };

    // Newton on the Lagrangian system `F(u) + mu m = 0`, `(m, u) = mean`:
    // the mean constraint is an extra equation, so the discrete residual
    // alone only vanishes when the discretization is exact.
    let augmented = |u: &FeField, mu: f64| -> Result<Vec<f64>> {
        let mut r = op.residual(u)?;
        r.iter_mut().zip(&op.mean_row).for_each(|(ri, m)| *ri += mu * m);
        Ok(r)
    };
    let merit = |f: &[f64], c: f64| (norm2(f).powi(2) + c * c).sqrt();
    let converged = |r: &[f64], gap: f64| norm2(r) <= tol && gap.abs() <= CONSTRAINT_TOL;
    let mut multiplier = 0.0;
    let mut residual = augmented(&u, multiplier)?;
    let mut constraint_gap = spec.mean_value - op.mean(&u);
    let mut history = vec![norm2(&residual)];
    for _ in 0..MAX_NEWTON {
        if converged(&residual, constraint_gap) {
            return Ok(SteadyOutcome {
                field: u,
                residual_history: history,
                multiplier,
            });
        }
        let system = BorderedSystem {
            core: op.jacobian(&u)?,
            constraint_row: op.mean_row.clone(),
            rhs: residual.iter().map(|r| -r).collect(),
            constraint_value: constraint_gap,
        };
        let (delta, dmu) = solve_bordered(&system)?;

        let current = merit(&residual, constraint_gap);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = op.field(u.values().iter().zip(&delta).map(|(v, d)| v + step * d).collect())?;
            let trial_mu = multiplier + step * dmu;
            let trial_residual = augmented(&trial, trial_mu)?;
            let trial_gap = spec.mean_value - op.mean(&trial);
            // Accept any step once the residual is at rounding level.
            if merit(&trial_residual, trial_gap) <= current || norm2(&trial_residual) <= tol {
                accepted = Some((trial, trial_mu, trial_residual, trial_gap));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_mu, next_residual, next_gap)) = accepted else {
            return Err(Error::Nonconvergence { history });
        };
        u = next;
        multiplier = next_mu;
        residual = next_residual;
        constraint_gap = next_gap;
        history.push(norm2(&residual));
    }
    if converged(&residual, constraint_gap) {
        return Ok(SteadyOutcome {
            field: u,
            residual_history: history,
            multiplier,
        });
    }
    Err(Error::Nonconvergence { history })
}

/// Euclidean norm of the discrete steady residual with zero Neumann data.
pub fn steady_residual(mesh: &Arc<Mesh>, u: &FeField, forcing: &ScalarFn, nu: f64) -> Result<f64> {
    u.check_on(mesh)?;
    let op = SteadyOperator::new(mesh, nu, forcing, None)?;
    Ok(norm2(&op.residual(u)?))
}

/// `|B(v; z, phi)| / (|grad v| |grad z| |grad phi|)`, or `None` when a
/// gradient vanishes.
pub fn n1_ratio(v: &FeField, z: &FeField, phi: &FeField) -> Result<Option<f64>> {
    let denom = h1_seminorm(v) * h1_seminorm(z) * h1_seminorm(phi);
    // Seminorms of constants come out at rounding level rather than zero.
    if !(denom > 1e-12) {
        return Ok(None);
    }
    Ok(Some(trilinear_B(v, z, phi)?.abs() / denom))
}

/// Running maximum of [`n1_ratio`] over the given triples.
pub fn estimate_n_from_samples<I>(samples: I) -> Result<f64>
where
    I: IntoIterator<Item = (FeField, FeField, FeField)>,
{
    let mut best: Option<f64> = None;
    for (v, z, phi) in samples {
        if let Some(r) = n1_ratio(&v, &z, &phi)? {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or(Error::NoValidSample)
}

/// Seeded random search for the trilinear constant over zero-mean P1
/// triples. The result is a lower bound on the supremum.
#[allow(non_snake_case)]
pub fn estimate_N(mesh: &Arc<Mesh>, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let mass_row = assemble_mass(mesh).spmv(&vec![1.0; mesh.num_vertices()])?;
    let area: f64 = mass_row.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = move || -> Result<FeField> {
        let mut v: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = v.iter().zip(&mass_row).map(|(a, b)| a * b).sum::<f64>() / area;
        v.iter_mut().for_each(|x| *x -= mean);
        FeField::new(Arc::clone(mesh), v)
    };
    let triples = (0..samples)
        .map(|_| Ok((draw()?, draw()?, draw()?)))
        .collect::<Result<Vec<_>>>()?;
    estimate_n_from_samples(triples)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub grad_norm: f64,
    pub n_hat: f64,
    /// `nu / (4 n_hat)`.
    pub bound: f64,
    /// `3 nu / (4 n_hat)`, the other root of the smallness quadratic.
    pub bound_large_branch: f64,
    /// Advisory only: `n_hat` underestimates the true constant.
    pub satisfied: bool,
    pub delta_laplacian_norm: f64,
    /// Zero-Neumann steady residual of the supplied field.
    pub residual_norm: f64,
}

pub const REPORT_SAMPLES: usize = 64;
pub const REPORT_SEED: u64 = 0x5eed;

pub fn assumption_report(mesh: &Arc<Mesh>, u_inf: &FeField, forcing: &ScalarFn, nu: f64) -> Result<AssumptionReport> {
    u_inf.check_on(mesh)?;
    let grad_norm = h1_seminorm(u_inf);
    let n_hat = estimate_N(mesh, REPORT_SAMPLES, REPORT_SEED)?;
    let bound = nu / (4.0 * n_hat);
    let laplacian = discrete_laplacian(mesh, u_inf, &BoundaryField::zeros(mesh))?;
    Ok(AssumptionReport {
        grad_norm,
        n_hat,
        bound,
        bound_large_branch: 3.0 * bound,
        satisfied: grad_norm <= bound,
        delta_laplacian_norm: l2_norm(&laplacian),
        residual_norm: steady_residual(mesh, u_inf, forcing, nu)?,
    })
}
