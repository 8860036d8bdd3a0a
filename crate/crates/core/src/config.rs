//! JSON run configuration. Closed-form fields are written as expressions in
//! `x1`, `x2` (with `PI`, `sin`, `cos`, `exp`, ...); gradients and Laplacians
//! are obtained by symbolic differentiation.

use std::path::PathBuf;
use std::sync::Arc;

use exmex::prelude::*;
use exmex::Differentiate;
use serde::Deserialize;

use crate::control::ControlParams;
use crate::error::{Error, Result};
use crate::fem::{BoundaryFn, ScalarFn, SmoothField};
use crate::integrator::{CoefficientSource, InitialDatum, NonlinearSolver};
use crate::mesh::{BoundaryTag, DirichletRegion, Point, Segment};
use crate::steady::{SteadyMode, SteadySpec};
use crate::study::{ProblemConfig, StudyConfig};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub domain: DomainSection,
    pub physics: PhysicsSection,
    pub steady: SteadySection,
    #[serde(default)]
    pub control: ControlSection,
    pub time: TimeSection,
    #[serde(default)]
    pub study: Option<StudySection>,
    #[serde(default)]
    pub output: OutputSection,
    pub initial: InitialSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default)]
    pub origin: Point,
    #[serde(default = "one")]
    pub side: f64,
    /// Subdivisions per side for `steady` and `simulate`.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Boundary segments carrying homogeneous Dirichlet data.
    #[serde(default)]
    pub dirichlet: Vec<SegmentSpec>,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0],
            side: 1.0,
            n: default_n(),
            dirichlet: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub axis: usize,
    pub value: f64,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu: f64,
    pub c0: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SteadyModeSpec {
    /// `u_inf` given in closed form and used as is.
    Analytic,
    /// Solve for the steady state whose forcing and Neumann data are
    /// manufactured from `u_inf`.
    Manufactured,
    /// Solve with forcing `f_inf` and zero Neumann data.
    Forcing,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSpec {
    #[default]
    Analytic,
    Discrete,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    pub mode: SteadyModeSpec,
    #[serde(default)]
    pub u_inf: Option<String>,
    #[serde(default)]
    pub f_inf: Option<String>,
    pub mean: f64,
    /// Source of the convection coefficient during time stepping.
    #[serde(default)]
    pub coefficient: CoefficientSpec,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ActiveRegion {
    /// Every boundary edge outside the Dirichlet segments.
    #[default]
    Neumann,
    /// No feedback: zero Neumann data.
    None,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// Overrides `physics.c0` for the feedback law.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub active_region: ActiveRegion,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverSpec {
    #[default]
    Newton,
    Picard,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub k: f64,
    pub t_end: f64,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub levels: Vec<usize>,
    pub reference: usize,
    pub t_eval: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub w0: String,
    /// Shifted elliptic projection instead of nodal interpolation.
    #[serde(default)]
    pub projection: bool,
}

fn one() -> f64 {
    1.0
}

fn default_n() -> usize {
    32
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn dirichlet_region(&self) -> DirichletRegion {
        if self.domain.dirichlet.is_empty() {
            DirichletRegion::Empty
        } else {
            DirichletRegion::Segments(
                self.domain
                    .dirichlet
                    .iter()
                    .map(|s| Segment::new(s.axis, s.value, s.from, s.to))
                    .collect(),
            )
        }
    }

    pub fn steady_spec(&self) -> Result<SteadySpec> {
        let nu = self.physics.nu;
        let mode = self.steady.mode;
        let need = |field: &Option<String>, name: &str| -> Result<String> {
            field
                .clone()
                .ok_or_else(|| Error::InvalidConfiguration(format!("steady mode {mode:?} needs `{name}`")))
        };
        let mode = match self.steady.mode {
            SteadyModeSpec::Analytic => SteadyMode::ManufacturedAnalytic(smooth_field(&need(&self.steady.u_inf, "u_inf")?)?),
            SteadyModeSpec::Manufactured => {
                let u = smooth_field(&need(&self.steady.u_inf, "u_inf")?)?;
                return Ok(SteadySpec::manufactured_solve(&u, nu, self.steady.mean));
            }
            SteadyModeSpec::Forcing => SteadyMode::SolveFromForcing {
                forcing: scalar_fn(&need(&self.steady.f_inf, "f_inf")?)?,
                boundary_flux: None::<BoundaryFn>,
            },
        };
        Ok(SteadySpec {
            mode,
            nu,
            mean_value: self.steady.mean,
        })
    }

    pub fn control_params(&self) -> Result<Option<ControlParams>> {
        match self.control.active_region {
            ActiveRegion::None => Ok(None),
            ActiveRegion::Neumann => {
                let c0 = self.control.c0.unwrap_or(self.physics.c0);
                ControlParams::new(self.physics.nu, c0, vec![BoundaryTag::NeumannControl]).map(Some)
            }
        }
    }

    pub fn problem(&self) -> Result<ProblemConfig> {
        let steady = self.steady_spec()?;
        let coefficient_source = match self.steady.coefficient {
            CoefficientSpec::Analytic => CoefficientSource::AnalyticSteady,
            CoefficientSpec::Discrete => CoefficientSource::DiscreteSteady,
        };
        if coefficient_source == CoefficientSource::AnalyticSteady && self.steady.mode == SteadyModeSpec::Forcing {
            return Err(Error::InvalidConfiguration(
                "steady mode `forcing` has no closed form; use coefficient `discrete`".into(),
            ));
        }
        Ok(ProblemConfig {
            origin: self.domain.origin,
            side: self.domain.side,
            nu: self.physics.nu,
            c0: self.control.c0.unwrap_or(self.physics.c0),
            steady,
            control: self.control_params()?,
            dirichlet: self.dirichlet_region(),
            w0: smooth_field(&self.initial.w0)?,
            initial: if self.initial.projection {
                InitialDatum::Projection
            } else {
                InitialDatum::Interpolate
            },
            coefficient_source,
            nonlinear: match self.time.solver {
                SolverSpec::Newton => NonlinearSolver::Newton,
                SolverSpec::Picard => NonlinearSolver::PicardLagged,
            },
        })
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        let s = self
            .study
            .as_ref()
            .ok_or_else(|| Error::InvalidConfiguration("missing `study` section".into()))?;
        Ok(StudyConfig {
            mesh_levels: s.levels.clone(),
            reference_level: s.reference,
            k: self.time.k,
            t_eval: s.t_eval,
            problem: self.problem()?,
        })
    }
}

/// A parsed expression in `x1`, `x2`.
struct Expr {
    flat: FlatEx<f64>,
    /// Position of `x1` and `x2` in the expression's variable list.
    slots: [Option<usize>; 2],
}

impl Expr {
    fn new(flat: FlatEx<f64>) -> Result<Self> {
        let mut slots = [None, None];
        for (i, name) in flat.var_names().iter().enumerate() {
            match name.as_str() {
                "x1" => slots[0] = Some(i),
                "x2" => slots[1] = Some(i),
                other => {
                    return Err(Error::InvalidConfiguration(format!(
                        "unknown variable `{other}` (use x1, x2)"
                    )))
                }
            }
        }
        Ok(Self { flat, slots })
    }

    fn parse(src: &str) -> Result<Self> {
        let flat = exmex::parse::<f64>(src).map_err(|e| Error::InvalidConfiguration(format!("`{src}`: {e}")))?;
        Self::new(flat)
    }

    /// Derivative with respect to `x1` (`axis = 0`) or `x2`; `None` for an
    /// identically zero derivative.
    fn partial(&self, axis: usize) -> Result<Option<Self>> {
        match self.slots[axis] {
            None => Ok(None),
            Some(i) => {
                let d = self
                    .flat
                    .clone()
                    .partial(i)
                    .map_err(|e| Error::InvalidConfiguration(format!("differentiation failed: {e}")))?;
                Self::new(d).map(Some)
            }
        }
    }

    fn eval(&self, x: Point) -> f64 {
        let mut args = [0.0; 2];
        let mut len = 0;
        for (slot, xi) in self.slots.iter().zip(x) {
            if let Some(i) = *slot {
                args[i] = xi;
                len = len.max(i + 1);
            }
        }
        self.flat.eval(&args[..len]).unwrap_or(f64::NAN)
    }

    fn into_fn(self) -> ScalarFn {
        Arc::new(move |x| self.eval(x))
    }
}

fn maybe_fn(e: Option<Expr>) -> ScalarFn {
    match e {
        Some(e) => e.into_fn(),
        None => Arc::new(|_| 0.0),
    }
}

/// Parses an expression in `x1`, `x2`.
pub fn scalar_fn(src: &str) -> Result<ScalarFn> {
    Ok(Expr::parse(src)?.into_fn())
}

/// Parses an expression and differentiates it twice.
pub fn smooth_field(src: &str) -> Result<SmoothField> {
    let e = Expr::parse(src)?;
    let d1 = e.partial(0)?;
    let d2 = e.partial(1)?;
    let d11 = d1.as_ref().map(|d| d.partial(0)).transpose()?.flatten();
    let d22 = d2.as_ref().map(|d| d.partial(1)).transpose()?.flatten();
    let (g1, g2) = (maybe_fn(d1), maybe_fn(d2));
    let (l1, l2) = (maybe_fn(d11), maybe_fn(d22));
    Ok(SmoothField {
        value: e.into_fn(),
        gradient: Arc::new(move |x| [g1(x), g2(x)]),
        laplacian: Arc::new(move |x| l1(x) + l2(x)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "physics": {"nu": 0.1, "c0": 1.0},
        "steady": {"mode": "analytic", "u_inf": "-0.2*x1", "mean": -0.1},
        "time": {"k": 0.0005, "t_end": 5.0},
        "study": {"levels": [4, 8, 16, 32], "reference": 64, "t_eval": 1.0},
        "initial": {"w0": "sin(PI*x1)*sin(PI*x2) + 0.2*x1"}
    }"#;

    #[test]
    fn expressions_and_derivatives() {
        let f = smooth_field("x1^2*x2 + sin(PI*x2)").unwrap();
        let x = [0.3, 0.7];
        let pi = std::f64::consts::PI;
        assert!((f.eval(x) - (0.09 * 0.7 + (pi * 0.7).sin())).abs() < 1e-14);
        let g = (f.gradient)(x);
        assert!((g[0] - 2.0 * 0.3 * 0.7).abs() < 1e-14);
        assert!((g[1] - (0.09 + pi * (pi * 0.7).cos())).abs() < 1e-13);
        assert!(((f.laplacian)(x) - (2.0 * 0.7 - pi * pi * (pi * 0.7).sin())).abs() < 1e-12);

        let only_x2 = smooth_field("3*x2").unwrap();
        assert_eq!(only_x2.eval([5.0, 2.0]), 6.0);
        assert_eq!((only_x2.gradient)([5.0, 2.0]), [0.0, 3.0]);
        let constant = smooth_field("1.5").unwrap();
        assert_eq!(constant.eval([0.1, 0.2]), 1.5);
        assert!(matches!(smooth_field("x3 + 1"), Err(Error::InvalidConfiguration(_))));
        assert!(matches!(scalar_fn("sin("), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn example_configuration() {
        let cfg = Config::from_json(EXAMPLE).unwrap();
        let study = cfg.study_config().unwrap();
        assert_eq!(study.mesh_levels, vec![4, 8, 16, 32]);
        let problem = cfg.problem().unwrap();
        assert!(problem.control.is_some());
        assert_eq!(problem.dirichlet, DirichletRegion::Empty);
        assert!((problem.w0.eval([0.5, 0.5]) - 1.1).abs() < 1e-14);
    }

    #[test]
    fn configuration_errors() {
        assert!(Config::from_json("{}").is_err());
        let unknown = EXAMPLE.replace("\"physics\"", "\"physic\"");
        assert!(Config::from_json(&unknown).is_err());
        let forcing = EXAMPLE.replace(r#""mode": "analytic""#, r#""mode": "forcing""#);
        let cfg = Config::from_json(&forcing).unwrap();
        assert!(matches!(cfg.steady_spec(), Err(Error::InvalidConfiguration(_))));
    }
}
