//! The glued cylinder field G = psi X + (1 - psi) zeta Y.
//!
//! Evaluated in C0 coordinates (horizontal..., v) with v in [-2, 2]; the
//! phase is u = (v + 2) / 4, so the unit-speed vertical flow X of the
//! suspension reads (0, ..., 0, 4) here.

use crate::field_library::{BumpSpec, CylinderFieldEval, ModelError, ModelSpec, VectorField};

/// Vertical speed of X in C0 units.
pub const X_SPEED: f64 = 4.0;

pub fn phase_of(v: f64) -> f64 {
    (v + 2.0) / 4.0
}

pub fn vertical_of(u: f64) -> f64 {
    4.0 * u - 2.0
}

#[derive(Debug, Clone)]
pub struct GluedField {
    inner: CylinderFieldEval,
    psi: BumpSpec,
    zeta: BumpSpec,
    zeta0: f64,
    dim: usize,
}

/// Collar weights at a phase u with their u-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collar {
    pub psi: f64,
    pub dpsi: f64,
    pub zeta: f64,
    pub dzeta: f64,
}

impl GluedField {
    pub fn new(model: &ModelSpec) -> Result<Self, ModelError> {
        model.validate()?;
        let inner = CylinderFieldEval::new(model);
        let dim = inner.dim();
        let zeta0 = if model.family.is_slowed() { model.zeta0 } else { 0.0 };
        Ok(Self { inner, psi: model.psi_bump(), zeta: model.zeta_bump(), zeta0, dim })
    }

    pub fn inner(&self) -> &CylinderFieldEval {
        &self.inner
    }

    pub fn zeta0(&self) -> f64 {
        self.zeta0
    }

    pub fn collar(&self, u: f64) -> Collar {
        let (p0, p1, _) = self.psi.derivs(u);
        let (q0, q1, _) = self.psi.derivs(1.0 - u);
        let (z0, z1, _) = self.zeta.derivs(u);
        let (w0, w1, _) = self.zeta.derivs(1.0 - u);
        let g = (z0 + w0).min(1.0);
        Collar {
            psi: (p0 + q0).min(1.0),
            dpsi: p1 - q1,
            zeta: 1.0 - self.zeta0 * (1.0 - g),
            dzeta: self.zeta0 * (z1 - w1),
        }
    }

    /// Longest step from phase `u` moving at phase speed `du` that cannot
    /// jump over a collar transition unsampled. Inside the collar zones the
    /// phase advance per step is held to twice the thinnest transition
    /// width, which puts at least one Runge-Kutta stage inside it; outside
    /// them a step may run up to the zone edge.
    pub fn collar_step_cap(&self, u: f64, du: f64) -> f64 {
        let mut width = self.psi.support_end - self.psi.plateau_end;
        let mut zone = self.psi.support_end;
        if self.zeta0 > 0.0 {
            width = width.min(self.zeta.support_end - self.zeta.plateau_end);
            zone = zone.max(self.zeta.support_end);
        }
        let speed = du.abs();
        if speed < 1e-300 {
            return f64::INFINITY;
        }
        let in_zone = 2.0 * width / speed;
        let free = if u < zone || u > 1.0 - zone {
            0.0
        } else if du > 0.0 {
            (1.0 - zone - u) / speed
        } else {
            (u - zone) / speed
        };
        free.max(in_zone)
    }
}

impl VectorField for GluedField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let c = self.collar(phase_of(w[d - 1]));
        let weight = (1.0 - c.psi) * c.zeta;
        if weight == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.inner.eval(w, out);
            out.iter_mut().for_each(|v| *v *= weight);
        }
        out[d - 1] += c.psi * X_SPEED;
    }

    fn jacobian(&self, w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let c = self.collar(phase_of(w[d - 1]));
        let weight = (1.0 - c.psi) * c.zeta;
        // d/dv = (1/4) d/du
        let dweight = (-c.dpsi * c.zeta + (1.0 - c.psi) * c.dzeta) / 4.0;
        let dpsi = c.dpsi / 4.0;
        if weight == 0.0 && dweight == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.inner.jacobian(w, out);
            out.iter_mut().for_each(|v| *v *= weight);
            if dweight != 0.0 {
                let mut y = vec![0.0; d];
                self.inner.eval(w, &mut y);
                for (r, yr) in y.iter().enumerate() {
                    out[r * d + d - 1] += dweight * yr;
                }
            }
        }
        out[(d - 1) * d + d - 1] += dpsi * X_SPEED;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::Family;

    fn eval(f: &dyn VectorField, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.dim()];
        f.eval(w, &mut out);
        out
    }

    #[test]
    fn reduces_to_x_and_y() {
        let m = ModelSpec::new(Family::G3);
        let g = GluedField::new(&m).unwrap();
        let y = CylinderFieldEval::new(&m);
        // u = 0.01 < eps/3
        let w = [0.3, -0.2, vertical_of(0.01)];
        assert_eq!(eval(&g, &w), vec![0.0, 0.0, X_SPEED]);
        let w = [0.3, -0.2, vertical_of(0.4)];
        assert_eq!(eval(&g, &w), eval(&y, &w));
        let slowed = ModelSpec::new(Family::GHat3).with_zeta0(0.5);
        let gs = GluedField::new(&slowed).unwrap();
        let a = eval(&gs, &w);
        let b = eval(&y, &w);
        for i in 0..3 {
            assert!((a[i] - 0.5 * b[i]).abs() < 1e-16);
        }
    }

    #[test]
    fn collar_symmetry() {
        let g = GluedField::new(&ModelSpec::new(Family::GHat4).with_zeta0(0.7)).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let (a, b) = (g.collar(u), g.collar(1.0 - u));
            assert!((a.psi - b.psi).abs() < 1e-12 && (a.zeta - b.zeta).abs() < 1e-12);
            assert!((a.dpsi + b.dpsi).abs() < 1e-12 && (a.dzeta + b.dzeta).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_in_collars() {
        for m in [ModelSpec::new(Family::G1), ModelSpec::new(Family::GHat4).with_zeta0(0.6)] {
            let g = GluedField::new(&m).unwrap();
            let d = g.dim();
            for u in [0.018, 0.021, 0.05, 0.07, 0.5, 0.93, 0.979] {
                let mut w: Vec<f64> = (0..d - 1).map(|i| 0.7 - 0.4 * i as f64).collect();
                w.push(vertical_of(u));
                let mut j = vec![0.0; d * d];
                g.jacobian(&w, &mut j);
                let h = 1e-7;
                for c in 0..d {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[c] += h;
                    wm[c] -= h;
                    let (fp, fm) = (eval(&g, &wp), eval(&g, &wm));
                    for r in 0..d {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!((j[r * d + c] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "u={u} ({r},{c})");
                    }
                }
            }
        }
    }
}
