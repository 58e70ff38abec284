use serde::{Deserialize, Serialize};

use super::ModelError;

/// Even C-infinity bump: 1 on [-plateau_end, plateau_end], 0 outside
/// [-support_end, support_end], monotone in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub plateau_end: f64,
    pub support_end: f64,
}

impl BumpSpec {
    pub fn new(plateau_end: f64, support_end: f64) -> Result<Self, ModelError> {
        let b = Self { plateau_end, support_end };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.plateau_end > 0.0 && self.support_end > self.plateau_end && self.support_end.is_finite()) {
            return Err(ModelError::InvalidBump {
                plateau_end: self.plateau_end,
                support_end: self.support_end,
            });
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivs(t).0
    }

    /// Value, first and second derivative at t.
    pub fn derivs(&self, t: f64) -> (f64, f64, f64) {
        let a = t.abs();
        if a <= self.plateau_end {
            return (1.0, 0.0, 0.0);
        }
        if a >= self.support_end {
            return (0.0, 0.0, 0.0);
        }
        let w = self.support_end - self.plateau_end;
        let (s, s1, s2) = smooth_step((a - self.plateau_end) / w);
        let sign = t.signum();
        (1.0 - s, -sign * s1 / w, -s2 / (w * w))
    }
}

pub fn bump_eval(spec: &BumpSpec, t: f64) -> f64 {
    spec.eval(t)
}

pub fn bump_deriv(spec: &BumpSpec, t: f64) -> f64 {
    spec.derivs(t).1
}

/// e^{-1/t} for t > 0 with its first two derivatives.
fn flat(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let v = (-1.0 / t).exp();
    if v == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let t2 = t * t;
    (v, v / t2, v * (1.0 - 2.0 * t) / (t2 * t2))
}

/// The standard transition s = f(t) / (f(t) + f(1 - t)) with
/// derivatives; 0 for t <= 0 and 1 for t >= 1.
pub fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (a, a1, a2) = flat(t);
    let (b0, b1, b2) = flat(1.0 - t);
    let (b, b1, b2) = (b0, -b1, b2);
    let d = a + b;
    let d1 = a1 + b1;
    let n = a1 * b - a * b1;
    let n1 = a2 * b - a * b2;
    let s = a / d;
    let s1 = n / (d * d);
    let s2 = n1 / (d * d) - 2.0 * n * d1 / (d * d * d);
    (s, s1, s2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi0() -> BumpSpec {
        BumpSpec::new(2.0, 3.0).unwrap()
    }

    #[test]
    fn plateau_and_support() {
        assert_eq!(xi0().eval(1.5), 1.0);
        assert_eq!(xi0().eval(-2.0), 1.0);
        assert_eq!(xi0().eval(-3.5), 0.0);
        assert_eq!(xi0().eval(3.0), 0.0);
        let v = xi0().eval(2.5);
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(v, xi0().eval(-2.5));
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = xi0();
        let h = 1e-6;
        for i in 1..100 {
            let t = 2.0 + i as f64 / 100.0;
            for t in [t, -t] {
                let (_, d1, d2) = b.derivs(t);
                let fd1 = (b.eval(t + h) - b.eval(t - h)) / (2.0 * h);
                let fd2 = (b.derivs(t + h).1 - b.derivs(t - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-7, "t={t} d1={d1} fd={fd1}");
                assert!((d2 - fd2).abs() < 1e-6 * (1.0 + d2.abs()), "t={t} d2={d2} fd={fd2}");
            }
        }
    }

    #[test]
    fn invalid_windows_rejected() {
        assert!(BumpSpec::new(3.0, 2.0).is_err());
        assert!(BumpSpec::new(0.0, 2.0).is_err());
        assert!(BumpSpec::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn smooth_step_is_flat_at_ends() {
        let (s, d1, d2) = smooth_step(1e-3);
        assert!(s < 1e-300 && d1.abs() < 1e-300 && d2.abs() < 1e-290);
        let (s, d1, _) = smooth_step(1.0 - 1e-3);
        assert!((1.0 - s) < 1e-300 && d1.abs() < 1e-300);
    }
}
