use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fields::CylinderFieldEval;
use super::model::{CylinderField, ModelSpec};
use super::{ModelError, VectorField};
use crate::compound_linalg::{eigenvalues, RealMatrix};

/// Tolerance for the sectional inequalities and for "zero real part".
pub const CLASSIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularityTag {
    GeneralizedLorenzLike,
    GeneralizedRovellaLike,
    NonSectionalSaddle,
    NonHyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityClass {
    pub tag: SingularityTag,
    /// Largest negative real eigenvalue (NaN if there is none).
    pub lambda_s: f64,
    /// Smallest real part among eigenvalues with nonnegative real part.
    pub lambda_u: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("no eigenvalue with nonnegative real part: not a saddle")]
    NotSaddle,
    #[error("no negative real eigenvalue")]
    NoRealStable,
    #[error(transparent)]
    Linalg(#[from] crate::compound_linalg::LinalgError),
}

pub fn is_real(l: Complex<f64>) -> bool {
    l.im.abs() < 1e-9 * (1.0 + l.norm())
}

pub fn classify_singularity(j_cu: &RealMatrix) -> Result<SingularityClass, ClassifyError> {
    let eig = eigenvalues(j_cu)?;
    classify_spectrum(&eig)
}

pub fn classify_spectrum(eig: &[Complex<f64>]) -> Result<SingularityClass, ClassifyError> {
    let lambda_u = eig
        .iter()
        .filter(|l| l.re >= -CLASSIFY_TOL)
        .map(|l| l.re.max(0.0))
        .fold(f64::INFINITY, f64::min);
    if !lambda_u.is_finite() {
        return Err(ClassifyError::NotSaddle);
    }
    let lambda_s = eig
        .iter()
        .filter(|l| is_real(**l) && l.re < -CLASSIFY_TOL)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda_s = if lambda_s.is_finite() { lambda_s } else { f64::NAN };
    if eig.iter().any(|l| l.re.abs() <= CLASSIFY_TOL) {
        return Ok(SingularityClass { tag: SingularityTag::NonHyperbolic, lambda_s, lambda_u });
    }
    if lambda_s.is_nan() {
        return Err(ClassifyError::NoRealStable);
    }
    let tag = if (lambda_s + lambda_u).abs() <= CLASSIFY_TOL {
        SingularityTag::NonSectionalSaddle
    } else if lambda_s > -lambda_u {
        SingularityTag::GeneralizedLorenzLike
    } else {
        SingularityTag::GeneralizedRovellaLike
    };
    Ok(SingularityClass { tag, lambda_s, lambda_u })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub name: String,
    pub location: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    /// Eigenvalues of the cu-restricted Jacobian as (re, im) pairs.
    pub cu_spectrum: Vec<(f64, f64)>,
    /// None for sinks and sources, which are not saddles.
    pub sing_class: Option<SingularityClass>,
}

fn named_points(model: &ModelSpec) -> Vec<(String, Vec<f64>)> {
    let d = model.dim();
    let r = 3f64.sqrt() / 3.0;
    let vertical = |z: f64| {
        let mut v = vec![0.0; d];
        v[d - 1] = z;
        v
    };
    let horizontal = |x: f64, y: f64| {
        let mut v = vec![0.0; d];
        v[0] = x;
        if d > 2 {
            v[1] = y;
        }
        v
    };
    let mut pts = vec![("sigma1".to_string(), vertical(-1.0)), ("sigma2".to_string(), vertical(1.0))];
    match model.cylinder_field() {
        CylinderField::Y0 | CylinderField::Y1 | CylinderField::Y2 => {
            pts.push(("zeta+".into(), horizontal(r, 0.0)));
            pts.push(("zeta-".into(), horizontal(-r, 0.0)));
        }
        CylinderField::YPerturbed => {
            pts.push(("sink+".into(), vec![0.5, -0.5]));
            pts.push(("sink-".into(), vec![-0.5, -0.5]));
        }
        _ => {
            for (label, a) in [("0", 0.0f64), ("pi/2", std::f64::consts::FRAC_PI_2), ("pi", std::f64::consts::PI)] {
                pts.push((format!("zeta(alpha={label})"), horizontal(r * a.cos(), r * a.sin())));
            }
        }
    }
    pts
}

/// Indices of the coordinates carrying the cu dynamics of an equilibrium:
/// everything except the neutral fiber of the hat fields.
pub fn cu_coordinates(model: &ModelSpec) -> Vec<usize> {
    let d = model.dim();
    match model.cylinder_field() {
        CylinderField::Y3Hat | CylinderField::Y4Hat => vec![0, 1, d - 1],
        _ => (0..d).collect(),
    }
}

/// Closed-form equilibria of a bare cylinder field.
pub fn equilibria(model: &ModelSpec) -> Result<Vec<Equilibrium>, ModelError> {
    model.validate()?;
    if model.family.is_glued() {
        return Err(ModelError::GluedNotAllowed { family: model.family.name().to_string() });
    }
    let f = CylinderFieldEval::new(model);
    let d = f.dim();
    let cu = cu_coordinates(model);
    let mut out = Vec::new();
    for (name, loc) in named_points(model) {
        let mut v = vec![0.0; d];
        f.eval(&loc, &mut v);
        let resid = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if resid > 1e-12 {
            return Err(ModelError::NotAnEquilibrium { name, residual: resid });
        }
        let mut j = vec![0.0; d * d];
        f.jacobian(&loc, &mut j);
        let jm = RealMatrix::from_row_slice(d, d, &j);
        let jcu = RealMatrix::from_fn(cu.len(), cu.len(), |r, c| jm[(cu[r], cu[c])]);
        let eig = eigenvalues(&jcu)?;
        let sing_class = classify_spectrum(&eig).ok();
        out.push(Equilibrium {
            name,
            location: loc,
            jacobian: (0..d).map(|r| j[r * d..(r + 1) * d].to_vec()).collect(),
            cu_spectrum: eig.iter().map(|l| (l.re, l.im)).collect(),
            sing_class,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound_linalg::diag;
    use crate::field_library::model::Family;

    #[test]
    fn classification_examples() {
        let c = classify_singularity(&diag(&[-0.2, 0.4])).unwrap();
        assert_eq!(c.tag, SingularityTag::GeneralizedLorenzLike);
        let c = classify_singularity(&diag(&[-0.4, 0.2])).unwrap();
        assert_eq!(c.tag, SingularityTag::GeneralizedRovellaLike);
        assert_eq!((c.lambda_s, c.lambda_u), (-0.4, 0.2));
        let c = classify_singularity(&diag(&[-0.2, 0.2])).unwrap();
        assert_eq!(c.tag, SingularityTag::NonSectionalSaddle);
        assert_eq!(classify_singularity(&diag(&[-0.2, -0.3])), Err(ClassifyError::NotSaddle));
        let rot = crate::compound_linalg::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert_eq!(classify_singularity(&rot).unwrap().tag, SingularityTag::NonHyperbolic);
    }

    #[test]
    fn y0_equilibria() {
        let eq = equilibria(&ModelSpec::new(Family::Y0)).unwrap();
        assert_eq!(eq.len(), 4);
        assert_eq!(eq[0].sing_class.unwrap().tag, SingularityTag::NonSectionalSaddle);
        assert_eq!(eq[2].sing_class.unwrap().tag, SingularityTag::NonHyperbolic);
    }

    #[test]
    fn perturbed_field_has_sinks() {
        let eq = equilibria(&ModelSpec::new(Family::YPerturbed)).unwrap();
        assert_eq!(eq[0].sing_class.unwrap().tag, SingularityTag::GeneralizedRovellaLike);
        // divergence is -1/10 everywhere, so both saddles contract area
        assert_eq!(eq[1].sing_class.unwrap().tag, SingularityTag::GeneralizedRovellaLike);
        assert!(eq[2].sing_class.is_none() && eq[3].sing_class.is_none());
        assert!(eq[2].cu_spectrum.iter().all(|(re, _)| *re < 0.0));
    }

    #[test]
    fn glued_families_rejected() {
        assert!(equilibria(&ModelSpec::new(Family::G3)).is_err());
    }
}
