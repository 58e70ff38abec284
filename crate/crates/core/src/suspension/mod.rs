//! Suspension of the solenoid with the singular cylinder glued in.
//!
//! The cross-section is the phase-0 slice T^k x D. Outside the U-column a
//! point flows straight up for unit time and is identified with its image
//! under F0; inside it the glued field is integrated in C0 coordinates
//! from v = -2 to v = 2.

pub mod crossing;
pub mod gluing;
pub mod ledger;
pub mod orbit;
pub mod solenoid;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compound_linalg::RealMatrix;
use crate::field_library::{CylinderField, ModelError, ModelSpec, VectorField};
use crate::flow_engine::{FlowError, IntegratorConfig};

pub use crossing::{integrate_crossing, CrossingObserver, CrossingOptions, CrossingOutcome};
pub use gluing::{phase_of, vertical_of, GluedField, X_SPEED};
pub use ledger::{CrossingLedger, LedgerEntry};
pub use orbit::{orbit_generate, orbit_generate_many, orbit_generate_with_rng, initial_for_seed, sample_initial, OrbitConfig, OrbitOptions, OrbitOutcome};
pub use solenoid::{solenoid_map, SectionPoint, SolenoidSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SuspensionError {
    #[error("invalid solenoid: {0}")]
    InvalidSolenoid(String),
    #[error("chart point has {got} coordinates, expected {expected}")]
    ChartMismatch { expected: usize, got: usize },
    #[error("torus dimension {k} does not match the {horizontal} horizontal coordinates of the model")]
    KMismatch { k: usize, horizontal: usize },
    #[error("model {0} is not a glued family")]
    NotGlued(String),
    #[error("no crossing after time {elapsed} (stable-manifold suspect) at {point:?}")]
    NoCrossing { elapsed: f64, point: Vec<f64> },
    #[error("base point lies on the fiber of p")]
    AtFixedPoint,
    #[error(transparent)]
    Flow(FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<FlowError> for SuspensionError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NoCrossing { elapsed, point } => SuspensionError::NoCrossing { elapsed, point },
            FlowError::Model(m) => SuspensionError::Model(m),
            other => SuspensionError::Flow(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Laminar,
    Cylinder,
}

/// A point of the suspension: base point on the section, phase in [0, 1),
/// and C0 coordinates when it lies in the glued cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub base: SectionPoint,
    pub phase: f64,
    pub region: Region,
    pub cylinder_coords: Option<Vec<f64>>,
}

impl HybridState {
    /// The state sitting on the section at phase 0.
    pub fn on_section(spec: &SolenoidSpec, model: &ModelSpec, base: SectionPoint) -> Self {
        let x = spec.chart_of(&base);
        if in_u(model, &x) {
            let mut w = x;
            w.push(-2.0);
            Self { base, phase: 0.0, region: Region::Cylinder, cylinder_coords: Some(w) }
        } else {
            Self { base, phase: 0.0, region: Region::Laminar, cylinder_coords: None }
        }
    }
}

/// Membership of horizontal chart coordinates in U.
pub fn in_u(model: &ModelSpec, x: &[f64]) -> bool {
    let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    match model.cylinder_field() {
        CylinderField::Y0 | CylinderField::Y1 | CylinderField::YPerturbed => x[0].abs() < 3.0,
        CylinderField::Y2 => x[0].abs() < 3.0 && sq(&x[1..]) < 9.0,
        CylinderField::Y3 | CylinderField::Y4 => sq(&x[..2]) < 9.0,
        CylinderField::Y3Hat | CylinderField::Y4Hat => sq(&x[..2]) < 9.0 && sq(&x[2..]) < 9.0,
    }
}

/// The glued field at a cylinder chart point, with the last component in
/// phase units so the laminar flow reads (0, ..., 0, 1).
pub fn glued_field_eval(model: &ModelSpec, w: &[f64]) -> Result<Vec<f64>, SuspensionError> {
    if !model.family.is_glued() {
        return Err(SuspensionError::NotGlued(model.family.name().to_string()));
    }
    let d = model.dim();
    if w.len() != d {
        return Err(SuspensionError::ChartMismatch { expected: d, got: w.len() });
    }
    let g = GluedField::new(model)?;
    let mut out = vec![0.0; d];
    g.eval(w, &mut out);
    out[d - 1] /= X_SPEED;
    Ok(out)
}

/// One Poincare return with its cocycle on E^cu (C0-scaled torus
/// directions plus the flow direction), including the identification.
#[derive(Debug, Clone)]
pub struct ReturnStep {
    pub next: SectionPoint,
    pub tau: f64,
    pub crossing: Option<CrossingOutcome>,
    pub cocycle: RealMatrix,
}

/// Checks that the model and base fit together.
pub fn check_pair(spec: &SolenoidSpec, model: &ModelSpec) -> Result<(), SuspensionError> {
    if !model.family.is_glued() {
        return Err(SuspensionError::NotGlued(model.family.name().to_string()));
    }
    model.validate()?;
    spec.validate()?;
    if spec.k != model.horizontal_dim() {
        return Err(SuspensionError::KMismatch { k: spec.k, horizontal: model.horizontal_dim() });
    }
    Ok(())
}

/// The jump diag(Dg, 1) at the identification.
pub fn jump_matrix(spec: &SolenoidSpec) -> RealMatrix {
    let k = spec.k;
    let g = spec.real_matrix();
    RealMatrix::from_fn(k + 1, k + 1, |i, j| {
        if i < k && j < k {
            g[(i, j)]
        } else if i == j {
            1.0
        } else {
            0.0
        }
    })
}

/// First return to the section, using the exact map F0 on the base.
pub fn poincare_return(
    spec: &SolenoidSpec,
    model: &ModelSpec,
    s: &SectionPoint,
    cfg: &IntegratorConfig,
) -> Result<ReturnStep, SuspensionError> {
    check_pair(spec, model)?;
    if s.theta.iter().all(|&t| t == 0) {
        return Err(SuspensionError::AtFixedPoint);
    }
    let jump = jump_matrix(spec);
    let x = spec.chart_of(s);
    if !in_u(model, &x) {
        return Ok(ReturnStep { next: spec.map(s), tau: 1.0, crossing: None, cocycle: jump });
    }
    let field = GluedField::new(model)?;
    let opts = CrossingOptions { track_cocycle: true, sigma_rate: false };
    let out = integrate_crossing(&field, &x, f64::INFINITY, cfg, opts, &mut ())?;
    let dx: Vec<f64> = out.x_out.iter().zip(&out.x_in).map(|(a, b)| a - b).collect();
    let next = spec.map(&spec.shift_by_chart(s, &dx));
    let cocycle = &jump * out.z_total.as_ref().expect("tracked");
    Ok(ReturnStep { next, tau: out.tau, crossing: Some(out), cocycle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound_linalg::log_wedge_inv_norm;
    use crate::field_library::Family;

    #[test]
    fn blend_limits() {
        let m = ModelSpec::new(Family::G0);
        // v = -2 sits in the psi = 1 collar
        let g = glued_field_eval(&m, &[0.7, -2.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
        let g = glued_field_eval(&m, &[0.7, 0.0]).unwrap();
        let y = crate::field_library::field_eval(&ModelSpec::new(Family::Y0), &[0.7, 0.0]).unwrap();
        assert!((g[0] - y[0]).abs() < 1e-15 && (g[1] - y[1] / 4.0).abs() < 1e-15);
        let slow = ModelSpec::new(Family::GHat0).with_zeta0(0.5);
        let h = glued_field_eval(&slow, &[0.7, 0.0]).unwrap();
        assert!((h[0] - 0.5 * y[0]).abs() < 1e-15);
        assert!(glued_field_eval(&m, &[0.7]).is_err());
    }

    #[test]
    fn return_outside_u_is_the_base_map() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G0);
        let s = SectionPoint::from_f64(&[0.25], &[0.0, 0.0]);
        let r = poincare_return(&spec, &m, &s, &IntegratorConfig::default()).unwrap();
        assert_eq!(r.tau, 1.0);
        assert_eq!(r.next, spec.map(&s));
        assert!((log_wedge_inv_norm(&r.cocycle, 2).unwrap() + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn return_inside_u_cancels() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G0);
        let s = SectionPoint::from_f64(&[0.01], &[0.3, -0.2]);
        let r = poincare_return(&spec, &m, &s, &IntegratorConfig::default()).unwrap();
        assert!(r.tau > 1.0);
        let exact = spec.map(&s);
        let err = spec.chart_distance_to_p(&SectionPoint {
            theta: vec![r.next.theta[0].wrapping_sub(exact.theta[0])],
            disk: exact.disk.clone(),
        });
        assert!(err < 1e-5, "{err}");
        let z = r.crossing.unwrap().z_total.unwrap();
        assert!(log_wedge_inv_norm(&z, 2).unwrap().abs() < 1e-5);
    }

    #[test]
    fn pairing_is_checked() {
        let m = ModelSpec::new(Family::G3);
        assert!(matches!(check_pair(&SolenoidSpec::doubling(1), &m), Err(SuspensionError::KMismatch { .. })));
        assert!(check_pair(&SolenoidSpec::doubling(2), &m).is_ok());
        assert!(check_pair(&SolenoidSpec::doubling(1), &ModelSpec::new(Family::Y0)).is_err());
    }
}
