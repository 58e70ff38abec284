use super::bump::BumpSpec;
use super::hamiltonian::Hamiltonian;
use super::model::{CylinderField, ModelSpec};
use super::VectorField;

/// Closed-form evaluation of a bare cylinder field in C0 coordinates.
///
/// Coordinate layouts (vertical coordinate always last):
/// - Y0, Y1, perturbed: (x, y)
/// - Y2: (x, y_1..y_ell, z)
/// - Y3, Y4: (x, y, z)
/// - hat fields: (x, y, w_1..w_ell, z), w neutral.
#[derive(Debug, Clone)]
pub struct CylinderFieldEval {
    pub kind: CylinderField,
    pub ell: usize,
    pub omega: f64,
    pub ham: Hamiltonian,
    pub xi1: BumpSpec,
    dim: usize,
}

impl CylinderFieldEval {
    pub fn new(model: &ModelSpec) -> Self {
        let kind = model.cylinder_field();
        Self {
            kind,
            ell: model.ell,
            omega: model.omega,
            ham: Hamiltonian::new(model.xi0, model.resolved_outer_level()),
            xi1: model.xi1,
            dim: kind.dim(model.ell),
        }
    }

    /// H evaluated at the planar (or meridional) coordinates of w.
    pub fn hamiltonian_at(&self, w: &[f64]) -> f64 {
        let (a, b) = self.meridional(w);
        self.ham.value(a, b)
    }

    /// (a, b) arguments of H: (x, y) in the plane, (x, z) for Y2 and
    /// (rho, z) for the rotational fields.
    pub fn meridional(&self, w: &[f64]) -> (f64, f64) {
        let z = w[self.dim - 1];
        match self.kind {
            CylinderField::Y0 | CylinderField::Y1 | CylinderField::YPerturbed | CylinderField::Y2 => (w[0], z),
            _ => (w[0].hypot(w[1]), z),
        }
    }
}

impl VectorField for CylinderFieldEval {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let gain = self.kind.vertical_gain();
        match self.kind {
            CylinderField::Y0 | CylinderField::Y1 | CylinderField::YPerturbed => {
                let p = self.ham.parts(w[0], w[1]);
                out[0] = p.hb;
                if self.kind == CylinderField::YPerturbed {
                    out[0] -= w[0] / 10.0;
                }
                out[1] = -gain * p.ha;
            }
            CylinderField::Y2 => {
                let p = self.ham.parts(w[0], w[d - 1]);
                out[0] = p.hb;
                let s: f64 = w[1..d - 1].iter().map(|v| v * v).sum();
                let f = self.omega * self.xi1.eval(s);
                for i in 1..d - 1 {
                    out[i] = f * w[i];
                }
                out[d - 1] = -gain * p.ha;
            }
            CylinderField::Y3 | CylinderField::Y4 | CylinderField::Y3Hat | CylinderField::Y4Hat => {
                let z = w[d - 1];
                let rho = w[0].hypot(w[1]);
                let p = self.ham.parts(rho, z);
                let radial = -z * p.xi / 5.0;
                out[0] = radial * w[0];
                out[1] = radial * w[1];
                for o in out.iter_mut().take(d - 1).skip(2) {
                    *o = 0.0;
                }
                out[d - 1] = -gain * p.ha;
            }
        }
    }

    fn jacobian(&self, w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        let gain = self.kind.vertical_gain();
        match self.kind {
            CylinderField::Y0 | CylinderField::Y1 | CylinderField::YPerturbed => {
                let p = self.ham.parts(w[0], w[1]);
                out[0] = p.hab;
                if self.kind == CylinderField::YPerturbed {
                    out[0] -= 0.1;
                }
                out[1] = p.hbb;
                out[2] = -gain * p.haa;
                out[3] = -gain * p.hab;
            }
            CylinderField::Y2 => {
                let z = d - 1;
                let p = self.ham.parts(w[0], w[z]);
                out[0] = p.hab;
                out[z] = p.hbb;
                let s: f64 = w[1..z].iter().map(|v| v * v).sum();
                let (x0, x1, _) = self.xi1.derivs(s);
                for i in 1..z {
                    for j in 1..z {
                        let mut v = 2.0 * x1 * w[i] * w[j];
                        if i == j {
                            v += x0;
                        }
                        out[i * d + j] = self.omega * v;
                    }
                }
                out[z * d] = -gain * p.haa;
                out[z * d + z] = -gain * p.hab;
            }
            CylinderField::Y3 | CylinderField::Y4 | CylinderField::Y3Hat | CylinderField::Y4Hat => {
                let zi = d - 1;
                let (x, y, z) = (w[0], w[1], w[zi]);
                let rho = x.hypot(y);
                let p = self.ham.parts(rho, z);
                let f = -z * p.xi / 5.0;
                let g = -z * p.xi1_over_a / 5.0;
                out[0] = f + g * x * x;
                out[1] = g * x * y;
                out[zi] = -x * p.xi / 5.0;
                out[d] = g * x * y;
                out[d + 1] = f + g * y * y;
                out[d + zi] = -y * p.xi / 5.0;
                out[zi * d] = -gain * p.haa_over_a * x;
                out[zi * d + 1] = -gain * p.haa_over_a * y;
                out[zi * d + zi] = -gain * p.hab;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::model::Family;

    fn eval(f: &CylinderFieldEval, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.dim()];
        f.eval(w, &mut out);
        out
    }

    fn jac(f: &CylinderFieldEval, w: &[f64]) -> Vec<f64> {
        let d = f.dim();
        let mut out = vec![0.0; d * d];
        f.jacobian(w, &mut out);
        out
    }

    #[test]
    fn y0_explicit_form() {
        let f = CylinderFieldEval::new(&ModelSpec::new(Family::Y0));
        for (x, y) in [(0.3, -1.2), (1.0, 0.0), (-1.1, 1.3), (0.0, -1.0)] {
            let v = eval(&f, &[x, y]);
            assert!((v[0] + x * y / 5.0).abs() < 1e-16);
            assert!((v[1] - (3.0 * x * x + y * y - 1.0) / 10.0).abs() < 1e-16);
        }
        assert_eq!(eval(&f, &[1.0, 0.0]), vec![0.0, 0.2]);
    }

    #[test]
    fn y3_explicit_form_and_axis() {
        let f = CylinderFieldEval::new(&ModelSpec::new(Family::Y3));
        let (x, y, z) = (0.4, -0.9, 0.7);
        let v = eval(&f, &[x, y, z]);
        assert!((v[0] + x * z / 5.0).abs() < 1e-16);
        assert!((v[1] + y * z / 5.0).abs() < 1e-16);
        assert!((v[2] - (3.0 * x * x + 3.0 * y * y + z * z - 1.0) / 10.0).abs() < 1e-15);
        let v = eval(&f, &[0.0, 0.0, 0.3]);
        assert_eq!((v[0], v[1]), (0.0, 0.0));
        let j = jac(&f, &[0.0, 0.0, 0.5]);
        assert!((j[0] + 0.1).abs() < 1e-16 && (j[8] - 0.1).abs() < 1e-16);
    }

    #[test]
    fn fiber_of_y2_and_hat_neutrality() {
        let f = CylinderFieldEval::new(&ModelSpec::new(Family::Y2).with_ell(2));
        let v = eval(&f, &[0.2, 0.5, -0.4, 1.1]);
        assert!((v[1] - 1.0).abs() < 1e-16 && (v[2] + 0.8).abs() < 1e-16);
        let f = CylinderFieldEval::new(&ModelSpec::new(Family::Y4Hat).with_ell(2));
        let v = eval(&f, &[0.2, 0.5, 7.0, -3.0, 1.1]);
        assert_eq!((v[2], v[3]), (0.0, 0.0));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let families = [
            Family::Y0,
            Family::Y1,
            Family::Y2,
            Family::Y3,
            Family::Y4,
            Family::Y3Hat,
            Family::Y4Hat,
            Family::YPerturbed,
        ];
        let pts = [[0.3, -1.7, 0.4, 1.2, -0.8], [2.3, 0.6, -1.5, 2.9, 0.1], [-2.6, 1.4, 0.2, -0.7, 1.9]];
        for fam in families {
            let f = CylinderFieldEval::new(&ModelSpec::new(fam).with_ell(2));
            let d = f.dim();
            for p in pts {
                let w = &p[..d];
                let j = jac(&f, w);
                let h = 1e-6;
                for c in 0..d {
                    let mut wp = w.to_vec();
                    let mut wm = w.to_vec();
                    wp[c] += h;
                    wm[c] -= h;
                    let (fp, fm) = (eval(&f, &wp), eval(&f, &wm));
                    for r in 0..d {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        let a = j[r * d + c];
                        assert!((a - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "{fam:?} w={w:?} ({r},{c}) {a} vs {fd}");
                    }
                }
            }
        }
    }
}
