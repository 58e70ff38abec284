//! Explicit cylinder vector fields, their Jacobians and equilibria.

pub mod bump;
pub mod equilibria;
pub mod fields;
pub mod hamiltonian;
pub mod model;

use thiserror::Error;

pub use bump::{bump_deriv, bump_eval, BumpSpec};
pub use equilibria::{classify_singularity, equilibria, Equilibrium, SingularityClass, SingularityTag};
pub use fields::CylinderFieldEval;
pub use hamiltonian::Hamiltonian;
pub use model::{CylinderField, Family, ModelSpec};

use crate::compound_linalg::RealMatrix;
use crate::suspension::gluing::GluedField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bump window: plateau_end={plateau_end}, support_end={support_end}")]
    InvalidBump { plateau_end: f64, support_end: f64 },
    #[error("omega must exceed 1 for the Y2 family (domination of the fiber), got {omega}")]
    OmegaTooSmall { omega: f64 },
    #[error("zeta0 must lie in [0,1), got {zeta0}")]
    ZetaOutOfRange { zeta0: f64 },
    #[error("zeta0 must be 0 for the non-slowed family {family}")]
    ZetaWithoutSlowdown { family: String },
    #[error("epsilon must lie in (0, 1/6), got {epsilon}")]
    EpsilonOutOfRange { epsilon: f64 },
    #[error("collar bumps must be supported in [0, 1/2)")]
    CollarTooWide,
    #[error("outer level must be finite, got {k}")]
    InvalidOuterLevel { k: f64 },
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("family {family} is glued; operation needs a bare field")]
    GluedNotAllowed { family: String },
    #[error("closed-form point {name} is not an equilibrium (residual {residual:e})")]
    NotAnEquilibrium { name: String, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] crate::compound_linalg::LinalgError),
}

/// A smooth vector field on R^d.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, w: &[f64], out: &mut [f64]);
    /// Row-major d x d Jacobian.
    fn jacobian(&self, w: &[f64], out: &mut [f64]);
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, w: &[f64], out: &mut [f64]) {
        (**self).eval(w, out)
    }
    fn jacobian(&self, w: &[f64], out: &mut [f64]) {
        (**self).jacobian(w, out)
    }
}

impl<F: VectorField + ?Sized> VectorField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, w: &[f64], out: &mut [f64]) {
        (**self).eval(w, out)
    }
    fn jacobian(&self, w: &[f64], out: &mut [f64]) {
        (**self).jacobian(w, out)
    }
}

/// The field -Y, for backward-time and mirror checks.
pub struct Reversed<F>(pub F);

impl<F: VectorField> VectorField for Reversed<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, w: &[f64], out: &mut [f64]) {
        self.0.eval(w, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn jacobian(&self, w: &[f64], out: &mut [f64]) {
        self.0.jacobian(w, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Builds the field of any family in C0 coordinates. Glued families are
/// evaluated on the cylinder with the vertical coordinate in [-2, 2].
pub fn build_vector_field(model: &ModelSpec) -> Result<Box<dyn VectorField>, ModelError> {
    model.validate()?;
    if model.family.is_glued() {
        Ok(Box::new(GluedField::new(model)?))
    } else {
        Ok(Box::new(CylinderFieldEval::new(model)))
    }
}

fn check_dim(model: &ModelSpec, w: &[f64]) -> Result<usize, ModelError> {
    let d = model.dim();
    if w.len() != d {
        return Err(ModelError::DimensionMismatch { expected: d, got: w.len() });
    }
    Ok(d)
}

pub fn field_eval(model: &ModelSpec, w: &[f64]) -> Result<Vec<f64>, ModelError> {
    let d = check_dim(model, w)?;
    let f = build_vector_field(model)?;
    let mut out = vec![0.0; d];
    f.eval(w, &mut out);
    Ok(out)
}

pub fn field_jacobian(model: &ModelSpec, w: &[f64]) -> Result<RealMatrix, ModelError> {
    let d = check_dim(model, w)?;
    let f = build_vector_field(model)?;
    let mut out = vec![0.0; d * d];
    f.jacobian(w, &mut out);
    Ok(RealMatrix::from_row_slice(d, d, &out))
}

pub fn divergence(model: &ModelSpec, w: &[f64]) -> Result<f64, ModelError> {
    Ok(field_jacobian(model, w)?.trace())
}

/// H and its gradient for the model's bump and outer level.
pub fn hamiltonian_eval(model: &ModelSpec, x: f64, y: f64) -> (f64, [f64; 2]) {
    let h = Hamiltonian::new(model.xi0, model.resolved_outer_level());
    let p = h.parts(x, y);
    (p.h, [p.ha, p.hb])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_reported() {
        let m = ModelSpec::new(Family::Y3);
        assert!(matches!(field_eval(&m, &[0.0, 1.0]), Err(ModelError::DimensionMismatch { expected: 3, got: 2 })));
    }

    #[test]
    fn divergence_closed_forms() {
        let y0 = ModelSpec::new(Family::Y0);
        let y1 = ModelSpec::new(Family::Y1);
        let y3 = ModelSpec::new(Family::Y3);
        let y4 = ModelSpec::new(Family::Y4);
        for (x, y, z) in [(0.3, -1.1, 0.7), (-1.2, 0.4, -1.5), (0.9, 0.9, 1.8)] {
            assert!(divergence(&y0, &[x, y]).unwrap().abs() < 1e-15);
            assert!((divergence(&y1, &[x, y]).unwrap() - y / 5.0).abs() < 1e-15);
            assert!((divergence(&y3, &[x, y, z]).unwrap() + z / 5.0).abs() < 1e-15);
            assert!(divergence(&y4, &[x, y, z]).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn reversed_field_negates() {
        let f = CylinderFieldEval::new(&ModelSpec::new(Family::Y1));
        let r = Reversed(&f);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        f.eval(&[0.4, 0.3], &mut a);
        r.eval(&[0.4, 0.3], &mut b);
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], -b[1]);
    }
}
