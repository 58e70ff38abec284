//! Trajectories, tangent and compound cocycles, and section crossings.

pub mod integrator;
pub mod systems;

use std::io::Write;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use integrator::{DenseSegment, IntegratorConfig, OdeSystem, Stepper};
pub use systems::{CompoundStencil, FieldSystem, VariationalSystem};

use crate::compound_linalg::{log_wedge_inv_norm, qr_renormalize, LinalgError, RealMatrix};
use crate::field_library::{build_vector_field, ModelError, ModelSpec, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("horizon {requested} exceeds max_time {max_time}")]
    HorizonTooLong { requested: f64, max_time: f64 },
    #[error("no section crossing within {elapsed} time units (stable-manifold suspect)")]
    NoCrossing { elapsed: f64, point: Vec<f64> },
    #[error("section coordinate {index} invalid for dimension {dim}")]
    InvalidSection { index: usize, dim: usize },
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub coordinate_index: usize,
    pub level: f64,
    pub direction: Direction,
}

impl SectionSpec {
    /// The top of the cylinder, {v = 2}, crossed upwards.
    pub fn top(dim: usize) -> Self {
        Self { coordinate_index: dim - 1, level: 2.0, direction: Direction::Increasing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub time: f64,
    pub point: Vec<f64>,
    pub residual: f64,
}

fn check_start(dim: usize, w0: &[f64], horizon: f64, cfg: &IntegratorConfig) -> Result<(), FlowError> {
    cfg.validate()?;
    if w0.len() != dim {
        return Err(FlowError::DimensionMismatch { expected: dim, got: w0.len() });
    }
    if horizon > cfg.max_time {
        return Err(FlowError::HorizonTooLong { requested: horizon, max_time: cfg.max_time });
    }
    Ok(())
}

/// Dense output over [0, T].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub segments: Vec<DenseSegment>,
    pub t_end: f64,
    pub final_state: Vec<f64>,
    pub initial_state: Vec<f64>,
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let n = self.initial_state.len();
        let mut out = vec![0.0; n];
        if self.segments.is_empty() || t <= self.segments[0].t0 {
            out.copy_from_slice(&self.initial_state);
            return out;
        }
        let i = self.segments.partition_point(|s| s.t1() < t).min(self.segments.len() - 1);
        self.segments[i].eval(t, &mut out);
        out
    }

    /// Accepted step boundaries.
    pub fn step_times(&self) -> Vec<f64> {
        let mut v = vec![0.0];
        v.extend(self.segments.iter().map(|s| s.t1()));
        v
    }
}

pub fn integrate_field<F: VectorField>(
    field: F,
    w0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, FlowError> {
    check_start(field.dim(), w0, t_end, cfg)?;
    let mut st = Stepper::new(FieldSystem(field), 0.0, w0, *cfg);
    let mut segments = Vec::new();
    integrator::integrate_with(&mut st, t_end, |s| {
        segments.push(s.last_segment().expect("accepted step").clone());
    })?;
    Ok(Trajectory { segments, t_end, final_state: st.y.clone(), initial_state: w0.to_vec() })
}

/// Trajectory sampler of the model's flow over [0, T].
pub fn integrate(model: &ModelSpec, w0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory, FlowError> {
    integrate_field(build_vector_field(model)?, w0, t_end, cfg)
}

/// Rate of growth of log||wedge^2(Dphi_t)^-1|| at t = 0 for the linear
/// part `a` (row-major d x d): the largest eigenvalue of -sym(a^[2]).
pub fn sectional_rate(stencil: &CompoundStencil, a: &[f64]) -> f64 {
    let m = stencil.m;
    if m == 1 {
        let d = stencil.d;
        return -(a[0] + a[d + 1]);
    }
    let mut buf = vec![0.0; m * m];
    stencil.fill(a, &mut buf);
    let b = RealMatrix::from_row_slice(m, m, &buf);
    let sym = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    -eig.iter().copied().fold(f64::INFINITY, f64::min)
}

const GAUSS3_NODES: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Integrates `f` of the leading `d` state components over an accepted
/// step using 3-point Gauss-Legendre on the dense output.
pub fn step_quadrature<G: FnMut(&[f64]) -> f64>(seg: &DenseSegment, d: usize, f: G) -> f64 {
    span_quadrature(seg, seg.t0, seg.t1(), d, f)
}

/// As [`step_quadrature`] over the sub-interval [a, b] of the step.
pub fn span_quadrature<G: FnMut(&[f64]) -> f64>(seg: &DenseSegment, a: f64, b: f64, d: usize, mut f: G) -> f64 {
    let mut buf = vec![0.0; seg.dim()];
    let mut acc = 0.0;
    for (x, wq) in GAUSS3_NODES.iter().zip(GAUSS3_WEIGHTS.iter()) {
        seg.eval(a + x * (b - a), &mut buf);
        acc += wq * f(&buf[..d]);
    }
    acc * (b - a)
}

/// Point, tangent cocycle and order-2 compound cocycle at time t.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub t: f64,
    pub point: Vec<f64>,
    /// Q-factor of the tangent cocycle after the last renormalization.
    pub frame: RealMatrix,
    /// Accumulated log R_ii per column.
    pub log_frame: Vec<f64>,
    /// Accumulated upper-triangular factor, scaled by exp(r_log_scale).
    pub r_accum: RealMatrix,
    pub r_log_scale: f64,
    /// Compound cocycle scaled by exp(-log_compound).
    pub compound_frame: RealMatrix,
    pub log_compound: f64,
    /// Integral of the sectional rate along the orbit.
    pub psi_cu_integral: f64,
}

impl VariationalState {
    pub fn dphi(&self) -> RealMatrix {
        &self.frame * &self.r_accum * self.r_log_scale.exp()
    }

    pub fn compound(&self) -> RealMatrix {
        &self.compound_frame * self.log_compound.exp()
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_frame.iter().sum()
    }

    /// log||wedge^p(Dphi_t)^-1||, computed without forming Dphi_t.
    pub fn log_wedge_inv(&self, p: usize) -> Result<f64, LinalgError> {
        let m = &self.frame * &self.r_accum;
        Ok(log_wedge_inv_norm(&m, p)? - p as f64 * self.r_log_scale)
    }
}

pub fn integrate_variational_field<F: VectorField>(
    field: F,
    w0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<VariationalState, FlowError> {
    let d = field.dim();
    check_start(d, w0, t_end, cfg)?;
    let sys = VariationalSystem::new(field, d >= 2);
    let (m, with_c) = (sys.m, sys.with_compound);
    let stencil = CompoundStencil::new(d);
    let y0 = sys.initial_state(w0);
    let mut st = Stepper::new(sys, 0.0, &y0, *cfg);
    let mut r_accum = RealMatrix::identity(d, d);
    let mut r_log_scale = 0.0;
    let mut log_frame = vec![0.0; d];
    let mut log_compound = 0.0;
    let mut psi_int = 0.0;
    let mut jac = vec![0.0; d * d];
    while st.t < t_end {
        let t_next = (st.t + cfg.renorm_interval).min(t_end);
        while st.t < t_next {
            st.step(t_next)?;
            if d >= 2 {
                let seg = st.last_segment().expect("accepted step");
                psi_int += step_quadrature(seg, d, |w| {
                    st.sys.field.jacobian(w, &mut jac);
                    sectional_rate(&stencil, &jac)
                });
            }
        }
        let mut y = st.y.clone();
        let z = RealMatrix::from_row_slice(d, d, &y[d..d + d * d]);
        let (q, logs) = qr_renormalize(&z)?;
        let r = q.transpose() * &z;
        r_accum = r * &r_accum;
        let s = r_accum.amax();
        r_accum /= s;
        r_log_scale += s.ln();
        for (acc, l) in log_frame.iter_mut().zip(logs) {
            *acc += l;
        }
        for i in 0..d {
            for j in 0..d {
                y[d + i * d + j] = q[(i, j)];
            }
        }
        if with_c {
            let off = d + d * d;
            let s = y[off..off + m * m].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            y[off..off + m * m].iter_mut().for_each(|v| *v /= s);
            log_compound += s.ln();
        }
        let t = st.t;
        st.reset_state(t, &y);
    }
    let y = &st.y;
    let frame = RealMatrix::from_row_slice(d, d, &y[d..d + d * d]);
    let compound_frame = if with_c {
        RealMatrix::from_row_slice(m, m, &y[d + d * d..d + d * d + m * m])
    } else {
        RealMatrix::identity(1, 1)
    };
    Ok(VariationalState {
        t: st.t,
        point: y[..d].to_vec(),
        frame,
        log_frame,
        r_accum,
        r_log_scale,
        compound_frame,
        log_compound,
        psi_cu_integral: psi_int,
    })
}

pub fn integrate_variational(
    model: &ModelSpec,
    w0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<VariationalState, FlowError> {
    integrate_variational_field(build_vector_field(model)?, w0, t_end, cfg)
}

/// Locates the event y[idx] = level inside the last accepted step by
/// bisection on the dense output, then polishes with explicit restarts
/// and one Newton correction.
pub fn locate_event<S: OdeSystem>(st: &mut Stepper<S>, idx: usize, level: f64) -> (f64, Vec<f64>) {
    let seg = st.last_segment().expect("accepted step").clone();
    let g = |t: f64| seg.eval_component(t, idx) - level;
    let (mut a, mut b) = (seg.t0, seg.t1());
    let ga = g(a);
    while b - a > 1e-13 * (1.0 + b.abs()) {
        let mid = 0.5 * (a + b);
        if (g(mid) > 0.0) == (ga > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut t = 0.5 * (a + b);
    let n = seg.dim();
    let mut y = vec![0.0; n];
    let mut dy = vec![0.0; n];
    st.restep_from_last_start(t - seg.t0, &mut y);
    st.sys.rhs(t, &y, &mut dy);
    if dy[idx] != 0.0 {
        let dt = -(y[idx] - level) / dy[idx];
        if dt.abs() < seg.h {
            t += dt;
            st.restep_from_last_start(t - seg.t0, &mut y);
        }
    }
    (t, y)
}

fn crosses(dir: Direction, g0: f64, g1: f64) -> bool {
    match dir {
        Direction::Increasing => g0 < 0.0 && g1 >= 0.0,
        Direction::Decreasing => g0 > 0.0 && g1 <= 0.0,
        Direction::Both => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
    }
}

pub fn section_crossing_field<F: VectorField>(
    field: F,
    w0: &[f64],
    section: &SectionSpec,
    cfg: &IntegratorConfig,
) -> Result<CrossingEvent, FlowError> {
    let d = field.dim();
    check_start(d, w0, 0.0, cfg)?;
    if section.coordinate_index >= d {
        return Err(FlowError::InvalidSection { index: section.coordinate_index, dim: d });
    }
    let idx = section.coordinate_index;
    let mut st = Stepper::new(FieldSystem(field), 0.0, w0, *cfg);
    let mut g_prev = w0[idx] - section.level;
    while st.t < cfg.max_time {
        st.step(cfg.max_time)?;
        let g = st.y[idx] - section.level;
        if g_prev != 0.0 && crosses(section.direction, g_prev, g) {
            let (t, y) = locate_event(&mut st, idx, section.level);
            let residual = (y[idx] - section.level).abs();
            return Ok(CrossingEvent { time: t, point: y, residual });
        }
        g_prev = g;
    }
    Err(FlowError::NoCrossing { elapsed: st.t, point: st.y.clone() })
}

pub fn section_crossing(
    model: &ModelSpec,
    w0: &[f64],
    section: &SectionSpec,
    cfg: &IntegratorConfig,
) -> Result<CrossingEvent, FlowError> {
    section_crossing_field(build_vector_field(model)?, w0, section, cfg)
}

/// Transition from the bottom {v = -2} to the top {v = 2} of C0: returns
/// the exit horizontal coordinates and the crossing time.
pub fn transition_map(
    model: &ModelSpec,
    x_entry: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64), FlowError> {
    let d = model.dim();
    if x_entry.len() != d - 1 {
        return Err(FlowError::DimensionMismatch { expected: d - 1, got: x_entry.len() });
    }
    let mut w0 = x_entry.to_vec();
    w0.push(-2.0);
    let ev = section_crossing(model, &w0, &SectionSpec::top(d), cfg)?;
    Ok((ev.point[..d - 1].to_vec(), ev.time))
}

/// log||wedge^2(Dphi_T|E^cu)^-1|| with E^cu the full tangent space of the
/// cylinder coordinates. For the hat fields the neutral fiber is included.
pub fn psi_cu_over_segment(
    model: &ModelSpec,
    w0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    let vs = integrate_variational(model, w0, t_end, cfg)?;
    Ok(vs.log_wedge_inv(2)?)
}

/// Writes t, coordinates, log||wedge^2 cocycle^-1|| and H (planar and
/// meridional families) sampled every `dt` as RFC-4180 CSV.
pub fn write_trajectory_csv<W: Write>(
    model: &ModelSpec,
    w0: &[f64],
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
    out: W,
) -> Result<(), FlowError> {
    let field = build_vector_field(model)?;
    let d = field.dim();
    let inner = crate::field_library::CylinderFieldEval::new(model);
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("w{i}")));
    header.push("log_wedge2_inv".into());
    header.push("H".into());
    wtr.write_record(&header).map_err(|e| FlowError::InvalidConfig(e.to_string()))?;
    let n = (t_end / dt).floor() as usize;
    let mut w = w0.to_vec();
    let mut t = 0.0;
    let mut log_inv = 0.0;
    for i in 0..=n {
        let mut rec = vec![fmt17(t)];
        rec.extend(w.iter().map(|v| fmt17(*v)));
        rec.push(fmt17(log_inv));
        rec.push(fmt17(inner.hamiltonian_at(&w)));
        wtr.write_record(&rec).map_err(|e| FlowError::InvalidConfig(e.to_string()))?;
        if i == n {
            break;
        }
        let vs = integrate_variational_field(&field, &w, dt, cfg)?;
        // per-sample increments are small, so the sum tracks the total
        // up to the submultiplicativity gap of the norm
        log_inv += vs.log_wedge_inv(2.min(d))?;
        w = vs.point.clone();
        t += dt;
    }
    wtr.flush().map_err(|e| FlowError::InvalidConfig(e.to_string()))?;
    Ok(())
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::Family;

    #[test]
    fn equilibrium_stays_put() {
        let m = ModelSpec::new(Family::Y0);
        let tr = integrate(&m, &[0.0, -1.0], 30.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.final_state, vec![0.0, -1.0]);
    }

    #[test]
    fn linear_flow_at_equilibrium() {
        let m = ModelSpec::new(Family::Y4);
        let vs = integrate_variational(&m, &[0.0, 0.0, 1.0], 3.0, &IntegratorConfig::default()).unwrap();
        let e = vs.dphi();
        let expect = [(-0.6f64).exp(), (-0.6f64).exp(), (1.2f64).exp()];
        for i in 0..3 {
            assert!((e[(i, i)] / expect[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn no_crossing_on_stable_axis() {
        let m = ModelSpec::new(Family::Y0);
        let cfg = IntegratorConfig::default().with_max_time(200.0);
        let r = section_crossing(&m, &[0.0, -2.0], &SectionSpec::top(2), &cfg);
        assert!(matches!(r, Err(FlowError::NoCrossing { .. })));
    }

    #[test]
    fn horizon_checked() {
        let m = ModelSpec::new(Family::Y0);
        let cfg = IntegratorConfig::default().with_max_time(10.0);
        assert!(matches!(integrate(&m, &[0.5, 0.0], 20.0, &cfg), Err(FlowError::HorizonTooLong { .. })));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let m = ModelSpec::new(Family::Y0);
        let mut buf = Vec::new();
        write_trajectory_csv(&m, &[0.5, -1.5], 2.0, 0.5, &IntegratorConfig::default(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,w0,w1,log_wedge2_inv,H");
        assert_eq!(lines.len(), 6);
    }
}
