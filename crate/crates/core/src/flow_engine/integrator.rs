//! Dormand-Prince 5(4) with the 4th-order continuous extension.

use serde::{Deserialize, Serialize};

use super::FlowError;

/// Right-hand side of an autonomous or time-dependent ODE.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

fn default_rel_tol() -> f64 {
    1e-10
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_max_time() -> f64 {
    1e4
}
fn default_renorm() -> f64 {
    1.0
}
// The embedded error estimate can miss the fast rim layer of the glued
// fields when a step spans a whole crossing; 0.25 keeps it resolved.
fn default_max_step() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default = "default_renorm")]
    pub renorm_interval: f64,
    /// Upper bound on adaptive steps.
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    /// When set, every step has exactly this length (no error control).
    #[serde(default)]
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_time: default_max_time(),
            renorm_interval: default_renorm(),
            max_step: default_max_step(),
            fixed_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(mut self, rel: f64, abs: f64) -> Self {
        self.rel_tol = rel;
        self.abs_tol = abs;
        self
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let ok_tol = |x: f64| x > 0.0 && x <= 1e-3;
        if !ok_tol(self.rel_tol) || !ok_tol(self.abs_tol) {
            return Err(FlowError::InvalidConfig(format!(
                "tolerances must lie in (0, 1e-3], got rel={} abs={}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_time > 0.0 && self.renorm_interval > 0.0 && self.max_step > 0.0) {
            return Err(FlowError::InvalidConfig("max_time, renorm_interval and max_step must be positive".into()));
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(FlowError::InvalidConfig(format!("fixed_step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Dense-output coefficients of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    coeffs: Vec<f64>,
}

impl DenseSegment {
    pub fn dim(&self) -> usize {
        self.coeffs.len() / 5
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated state at time t within the step.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        for i in 0..n {
            out[i] = c[i] + th * (c[n + i] + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])));
        }
    }

    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let n = self.dim();
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        c[i] + th * (c[n + i] + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])))
    }
}

/// Adaptive Dormand-Prince stepper with reusable work buffers.
pub struct Stepper<S: OdeSystem> {
    pub sys: S,
    cfg: IntegratorConfig,
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    fsal: bool,
    /// Only the first `err_dims` components enter the error norm.
    err_dims: usize,
    last: Option<DenseSegment>,
    last_y0: Vec<f64>,
    pub n_steps: u64,
    pub n_rejected: u64,
}

impl<S: OdeSystem> Stepper<S> {
    pub fn new(sys: S, t0: f64, y0: &[f64], cfg: IntegratorConfig) -> Self {
        let n = sys.dim();
        assert_eq!(y0.len(), n, "initial state dimension");
        let mk = || vec![0.0; n];
        let h0 = cfg.fixed_step.unwrap_or(1e-2_f64.min(cfg.max_step));
        Self {
            sys,
            cfg,
            t: t0,
            y: y0.to_vec(),
            h: h0,
            k: [mk(), mk(), mk(), mk(), mk(), mk(), mk()],
            ytmp: mk(),
            ynew: mk(),
            fsal: false,
            err_dims: n,
            last: None,
            last_y0: mk(),
            n_steps: 0,
            n_rejected: 0,
        }
    }

    /// Restricts error control to the leading components.
    pub fn with_error_dims(mut self, dims: usize) -> Self {
        self.err_dims = dims.min(self.y.len());
        self
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// Replaces the state (e.g. after renormalization) keeping the step size.
    pub fn reset_state(&mut self, t: f64, y: &[f64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        self.fsal = false;
        self.last = None;
    }

    pub fn last_segment(&self) -> Option<&DenseSegment> {
        self.last.as_ref()
    }

    /// State at the start of the last accepted step.
    pub fn last_start(&self) -> &[f64] {
        &self.last_y0
    }

    fn stages(&mut self, h: f64) {
        let n = self.y.len();
        let t = self.t;
        if !self.fsal {
            let (k0, _) = self.k.split_at_mut(1);
            self.sys.rhs(t, &self.y, &mut k0[0]);
        }
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        self.sys.rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        self.sys.rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        self.sys.rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        self.sys.rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        self.sys.rhs(t + h, ytmp, k6);
        let ynew = &mut self.ynew;
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        self.sys.rhs(t + h, ynew, k7);
    }

    fn error_norm(&self, h: f64) -> f64 {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut acc = 0.0;
        let m = self.err_dims;
        for i in 0..m {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * self.y[i].abs().max(self.ynew[i].abs());
            let r = e / sc;
            acc += r * r;
        }
        (acc / m as f64).sqrt()
    }

    fn accept(&mut self, h: f64) {
        let n = self.y.len();
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut coeffs = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = self.ynew[i] - self.y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[i] = self.y[i];
            coeffs[n + i] = ydiff;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
            coeffs[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        self.last = Some(DenseSegment { t0: self.t, h, coeffs });
        self.last_y0.copy_from_slice(&self.y);
        self.t += h;
        std::mem::swap(&mut self.y, &mut self.ynew);
        self.k.swap(0, 6);
        self.fsal = true;
        self.n_steps += 1;
    }

    /// Takes one accepted step, never passing `t_limit`. Returns the step length.
    pub fn step(&mut self, t_limit: f64) -> Result<f64, FlowError> {
        let remaining = t_limit - self.t;
        if remaining <= 0.0 {
            return Ok(0.0);
        }
        if let Some(hf) = self.cfg.fixed_step {
            let h = if remaining < hf * (1.0 + 1e-12) { remaining } else { hf };
            self.stages(h);
            self.accept(h);
            if h == remaining {
                self.t = t_limit;
            }
            return Ok(h);
        }
        let mut h = self.h.min(self.cfg.max_step);
        loop {
            let hit = h >= remaining * (1.0 - 1e-12);
            let hs = if hit { remaining } else { h };
            self.stages(hs);
            let err = self.error_norm(hs);
            if !err.is_finite() {
                self.fsal = false;
                h = hs * 0.1;
                self.n_rejected += 1;
            } else if err <= 1.0 {
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let proposed = (hs * fac).min(self.cfg.max_step);
                self.accept(hs);
                if hit {
                    self.t = t_limit;
                    // do not let the clamped step shrink the next proposal
                    self.h = proposed.max(self.h.min(self.cfg.max_step));
                } else {
                    self.h = proposed;
                }
                return Ok(hs);
            } else {
                self.fsal = true;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h = hs * fac;
                self.n_rejected += 1;
                // keep the FSAL slope: k[0] still holds f(t, y)
            }
            if h < 1e-14 * (1.0 + self.t.abs()) {
                return Err(FlowError::StepUnderflow { t: self.t, h });
            }
        }
    }

    /// A single explicit step of length h from the start of the last
    /// accepted step; used to polish event locations.
    pub fn restep_from_last_start(&mut self, h: f64, out: &mut [f64]) {
        let seg_t0 = self.last.as_ref().map(|s| s.t0).unwrap_or(self.t);
        let saved_t = self.t;
        let saved_y = self.y.clone();
        let saved_k0 = self.k[0].clone();
        self.t = seg_t0;
        self.y.copy_from_slice(&self.last_y0);
        self.fsal = false;
        self.stages(h);
        out.copy_from_slice(&self.ynew);
        self.t = saved_t;
        self.y = saved_y;
        self.k[0] = saved_k0;
        self.fsal = true;
    }
}

/// Integrates to `t_end`, calling `on_step` after each accepted step.
pub fn integrate_with<S: OdeSystem, F: FnMut(&Stepper<S>)>(
    stepper: &mut Stepper<S>,
    t_end: f64,
    mut on_step: F,
) -> Result<(), FlowError> {
    while stepper.t < t_end {
        stepper.step(t_end)?;
        on_step(stepper);
    }
    Ok(())
}
