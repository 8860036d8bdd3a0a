//! The nonlinear Neumann feedback law
//!
//! `dw/dn = -(1/nu) ((c0 + nu + 2|u_inf|) w + 2/(9 c0) w^3)`
//!
//! on the actuated boundary part, and its weak-form contributions.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, boundary_cubic_jacobian, boundary_cubic_residual, BoundaryField, FeField,
};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::SparseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ControlParams {
    pub nu: f64,
    pub c0: f64,
    pub active_tags: Vec<BoundaryTag>,
}

impl ControlParams {
    pub fn new(nu: f64, c0: f64, active_tags: Vec<BoundaryTag>) -> Result<Self> {
        let p = Self { nu, c0, active_tags };
        p.validate()?;
        Ok(p)
    }

    /// Actuation on the `NeumannControl` part of the boundary.
    pub fn on_neumann(nu: f64, c0: f64) -> Result<Self> {
        Self::new(nu, c0, vec![BoundaryTag::NeumannControl])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !(self.c0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu = {} and c0 = {} must both be positive",
                self.nu, self.c0
            )));
        }
        if self.active_tags.is_empty() {
            return Err(Error::InvalidConfiguration("no active boundary tags".into()));
        }
        Ok(())
    }

    /// Weight of the cubic boundary term, `2 / (9 c0)`.
    pub fn cubic_weight(&self) -> f64 {
        2.0 / (9.0 * self.c0)
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        self.validate()?;
        if mesh.boundary_edges().iter().any(|e| self.active_tags.contains(&e.tag)) {
            Ok(())
        } else {
            Err(Error::InvalidConfiguration("control acts on an empty boundary part".into()))
        }
    }
}

/// Pointwise feedback law.
pub fn feedback_law(w: f64, u_inf: f64, nu: f64, c0: f64) -> f64 {
    -((c0 + nu + 2.0 * u_inf.abs()) * w + 2.0 / (9.0 * c0) * w * w * w) / nu
}

/// The control at every edge Gauss node of the active boundary part (zero
/// elsewhere).
pub fn control_trace(w: &FeField, u_inf: &FeField, p: &ControlParams) -> Result<BoundaryField> {
    w.check_mesh(u_inf)?;
    p.check_mesh(w.mesh())?;
    let wt = BoundaryField::trace(w, &p.active_tags);
    let ut = BoundaryField::trace(u_inf, &p.active_tags);
    wt.zip_map(&ut, |wv, uv| feedback_law(wv, uv, p.nu, p.c0))
}

/// `c0 + nu + 2|u_inf|` at the Gauss nodes of active edges.
pub fn boundary_coefficient(u_inf: &FeField, p: &ControlParams) -> BoundaryField {
    BoundaryField::trace(u_inf, &p.active_tags).map(|u| p.c0 + p.nu + 2.0 * u.abs())
}

#[derive(Clone, Debug)]
pub struct ControlWeakTerms {
    /// `<(c0 + nu + 2|u_inf|) phi_j, phi_i>`.
    pub linear_matrix: SparseMatrix,
    /// `2/(9 c0) <w^3, phi_i>`.
    pub cubic_vector: Vec<f64>,
    /// `2/(9 c0) <3 w^2 phi_j, phi_i>`.
    pub cubic_jacobian: SparseMatrix,
}

pub fn control_weak_terms(u_inf: &FeField, p: &ControlParams, w: &FeField) -> Result<ControlWeakTerms> {
    w.check_mesh(u_inf)?;
    p.check_mesh(w.mesh())?;
    let beta = p.cubic_weight();
    Ok(ControlWeakTerms {
        linear_matrix: control_linear_matrix(u_inf, p)?,
        cubic_vector: boundary_cubic_residual(w, &p.active_tags).into_iter().map(|v| beta * v).collect(),
        cubic_jacobian: boundary_cubic_jacobian(w, &p.active_tags).scaled(beta),
    })
}

/// The state-independent part of [`control_weak_terms`].
pub fn control_linear_matrix(u_inf: &FeField, p: &ControlParams) -> Result<SparseMatrix> {
    assemble_boundary_mass(u_inf.mesh(), &boundary_coefficient(u_inf, p), &p.active_tags)
}

/// `L2` norm of the control over the active boundary part.
pub fn control_boundary_l2(w: &FeField, u_inf: &FeField, p: &ControlParams) -> Result<f64> {
    Ok(control_trace(w, u_inf, p)?.l2_norm(&p.active_tags))
}

/// Helper used by [`crate::study`]: active-boundary L2 distance between two
/// control traces on the same mesh.
pub fn control_trace_distance(a: &BoundaryField, b: &BoundaryField, p: &ControlParams) -> Result<f64> {
    Ok(a.zip_map(b, |x, y| x - y)?.l2_norm(&p.active_tags))
}
