//! One passage through the cylinder: from {v = -2} to {v = 2} under the
//! glued field, with the tangent cocycle cut at the integer times of the
//! global clock.

use crate::compound_linalg::{log_wedge_inv_norm, RealMatrix};
use crate::field_library::VectorField;
use crate::flow_engine::{
    locate_event, sectional_rate, span_quadrature, CompoundStencil, DenseSegment, FieldSystem, FlowError,
    IntegratorConfig, OdeSystem, Stepper, VariationalSystem,
};

use super::gluing::{phase_of, GluedField, X_SPEED};
use super::SuspensionError;

/// Hooks called while a crossing is integrated.
pub trait CrossingObserver {
    /// At a global integer time, `s` in local crossing time. `z` is the
    /// cocycle accumulated since the previous cut (identity-started), when
    /// tracked.
    fn on_cut(&mut self, _s: f64, _w: &[f64], _z: Option<&RealMatrix>) {}
    /// After each accepted step, covering [seg.t0, t_end]; the segment's
    /// leading `d` components are the position.
    fn on_step(&mut self, _seg: &DenseSegment, _t_end: f64, _d: usize) {}
}

impl CrossingObserver for () {}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrossingOptions {
    pub track_cocycle: bool,
    /// Integrate the sectional rate of the unslowed field along the orbit.
    pub sigma_rate: bool,
}

#[derive(Debug, Clone)]
pub struct CrossingOutcome {
    pub x_in: Vec<f64>,
    pub x_out: Vec<f64>,
    pub tau: f64,
    /// Cocycle since the last cut, when tracked.
    pub z_tail: Option<RealMatrix>,
    /// Cocycle of the whole passage, when tracked.
    pub z_total: Option<RealMatrix>,
    /// Integral of the sectional rate of the unslowed field.
    pub sigma_integral: f64,
    /// Integral of z/5 over the second half of the passage.
    pub z_half_integral: f64,
    /// Sums over the cut pieces (each at most unit time) of
    /// log||wedge^2 Z^-1|| and log|det Z|, when tracked. In two dimensions
    /// they telescope to the whole-passage values without the conditioning
    /// loss of the long product.
    pub piece_psi_sum: f64,
    pub piece_log_det_sum: f64,
    pub steps: u64,
}

fn extract_z(y: &[f64], d: usize) -> RealMatrix {
    RealMatrix::from_row_slice(d, d, &y[d..d + d * d])
}

fn reset_z(y: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            y[d + i * d + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
}

/// Integrates the passage starting at horizontal chart coordinates `x_in`.
/// `first_cut` is the local time of the first global integer time (in
/// (0, 1]).
pub fn integrate_crossing<O: CrossingObserver>(
    field: &GluedField,
    x_in: &[f64],
    first_cut: f64,
    cfg: &IntegratorConfig,
    opts: CrossingOptions,
    obs: &mut O,
) -> Result<CrossingOutcome, SuspensionError> {
    let d = field.dim();
    if x_in.len() != d - 1 {
        return Err(SuspensionError::ChartMismatch { expected: d - 1, got: x_in.len() });
    }
    let mut w0 = x_in.to_vec();
    w0.push(-2.0);
    // Entries close to p shadow the singular axis: the horizontal
    // coordinates stay of the entry's size, so the absolute tolerance must
    // follow it, and the relative exit error grows like rel_tol / |x|^2, so
    // the relative tolerance tightens down to a floor near round-off.
    let size = x_in.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cfg = &IntegratorConfig {
        rel_tol: cfg.rel_tol.min((1e-2 * size * size).max(1e-13)),
        abs_tol: cfg.abs_tol * size.min(1.0),
        ..*cfg
    };
    if opts.track_cocycle {
        let sys = VariationalSystem::new(field, false);
        let y0 = sys.initial_state(&w0);
        run(Stepper::new(sys, 0.0, &y0, *cfg), field, d, first_cut, cfg, opts, obs, true)
    } else {
        run(Stepper::new(FieldSystem(field), 0.0, &w0, *cfg), field, d, first_cut, cfg, opts, obs, false)
    }
}

#[allow(clippy::too_many_arguments)]
fn run<S: OdeSystem, O: CrossingObserver>(
    mut st: Stepper<S>,
    field: &GluedField,
    d: usize,
    first_cut: f64,
    cfg: &IntegratorConfig,
    opts: CrossingOptions,
    obs: &mut O,
    with_z: bool,
) -> Result<CrossingOutcome, SuspensionError> {
    let v_idx = d - 1;
    let x_in: Vec<f64> = st.y[..d - 1].to_vec();
    let stencil = CompoundStencil::new(d);
    let inner = field.inner();
    let mut jac = vec![0.0; d * d];
    let mut fbuf = vec![0.0; d];
    let mut z_total = if with_z { Some(RealMatrix::identity(d, d)) } else { None };
    let mut segments: Vec<(DenseSegment, f64)> = Vec::new();
    let mut sigma = 0.0;
    let (mut piece_psi, mut piece_det) = (0.0, 0.0);
    let mut add_piece = |z: &RealMatrix| {
        piece_psi += log_wedge_inv_norm(z, 2).unwrap_or(f64::NAN);
        piece_det += z.determinant().abs().ln();
    };
    let mut next_cut = first_cut;
    let map_err = |e: FlowError, st_t: f64, w: &[f64]| match e {
        FlowError::StepUnderflow { .. } => SuspensionError::Flow(e),
        _ => SuspensionError::NoCrossing { elapsed: st_t, point: w.to_vec() },
    };
    loop {
        if st.t >= cfg.max_time {
            return Err(SuspensionError::NoCrossing { elapsed: st.t, point: st.y[..d].to_vec() });
        }
        field.eval(&st.y[..d], &mut fbuf);
        let cap = field.collar_step_cap(phase_of(st.y[v_idx]), fbuf[v_idx] / X_SPEED);
        let limit = next_cut.min(cfg.max_time).min(st.t + cap);
        let v_before = st.y[v_idx];
        st.step(limit).map_err(|e| map_err(e, st.t, &st.y[..d]))?;
        let crossed = v_before < 2.0 && st.y[v_idx] >= 2.0;
        if crossed {
            let (t_ev, y_ev) = locate_event(&mut st, v_idx, 2.0);
            // the located event lies inside the last step
            let seg = st.last_segment().expect("accepted step").clone();
            let t_ev = t_ev.clamp(seg.t0, seg.t1());
            if opts.sigma_rate {
                sigma += span_quadrature(&seg, seg.t0, t_ev, d, |w| {
                    inner.jacobian(w, &mut jac);
                    sectional_rate(&stencil, &jac)
                });
                segments.push((seg.clone(), t_ev));
            }
            obs.on_step(&seg, t_ev, d);
            let z_tail = if with_z { Some(extract_z(&y_ev, d)) } else { None };
            if let (Some(zt), Some(tail)) = (z_total.as_mut(), z_tail.as_ref()) {
                *zt = tail * &*zt;
                add_piece(tail);
            }
            let x_out = y_ev[..d - 1].to_vec();
            let z_half = if opts.sigma_rate { half_integral(&segments, t_ev, v_idx) } else { 0.0 };
            return Ok(CrossingOutcome {
                x_in,
                x_out,
                tau: t_ev,
                z_tail,
                z_total,
                sigma_integral: sigma,
                z_half_integral: z_half,
                piece_psi_sum: piece_psi,
                piece_log_det_sum: piece_det,
                steps: st.n_steps,
            });
        }
        let seg = st.last_segment().expect("accepted step").clone();
        if opts.sigma_rate {
            sigma += span_quadrature(&seg, seg.t0, seg.t1(), d, |w| {
                inner.jacobian(w, &mut jac);
                sectional_rate(&stencil, &jac)
            });
            segments.push((seg.clone(), seg.t1()));
        }
        obs.on_step(&seg, seg.t1(), d);
        if st.t >= next_cut {
            let t = st.t;
            let mut y = st.y.clone();
            if with_z {
                let z = extract_z(&y, d);
                obs.on_cut(t, &y[..d], Some(&z));
                add_piece(&z);
                if let Some(zt) = z_total.as_mut() {
                    *zt = &z * &*zt;
                }
                reset_z(&mut y, d);
                st.reset_state(t, &y);
            } else {
                obs.on_cut(t, &y[..d], None);
            }
            next_cut += 1.0;
        }
    }
}

fn half_integral(segments: &[(DenseSegment, f64)], tau: f64, v_idx: usize) -> f64 {
    let half = 0.5 * tau;
    let mut acc = 0.0;
    for (seg, end) in segments {
        let (a, b) = (seg.t0.max(half), end.min(tau));
        if b > a {
            acc += span_quadrature(seg, a, b, v_idx + 1, |w| w[v_idx] / 5.0);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::{Family, ModelSpec};

    struct Count(usize, usize);
    impl CrossingObserver for Count {
        fn on_cut(&mut self, _s: f64, _w: &[f64], _z: Option<&RealMatrix>) {
            self.0 += 1;
        }
        fn on_step(&mut self, _seg: &DenseSegment, _t_end: f64, _d: usize) {
            self.1 += 1;
        }
    }

    #[test]
    fn vertical_region_takes_unit_time() {
        let g = GluedField::new(&ModelSpec::new(Family::G0)).unwrap();
        let out = integrate_crossing(&g, &[2.99], 1.0, &IntegratorConfig::default(), CrossingOptions::default(), &mut ())
            .unwrap();
        assert!((out.tau - 1.0).abs() < 1e-6);
        assert!((out.x_out[0] - 2.99).abs() < 1e-9);
    }

    #[test]
    fn transition_identity_and_cut_cocycle() {
        let g = GluedField::new(&ModelSpec::new(Family::G0)).unwrap();
        let cfg = IntegratorConfig::default();
        let opts = CrossingOptions { track_cocycle: true, sigma_rate: false };
        let mut c = Count(0, 0);
        let out = integrate_crossing(&g, &[0.8], 0.3, &cfg, opts, &mut c).unwrap();
        assert!((out.x_out[0] - 0.8).abs() < 1e-7);
        assert_eq!(c.0, (out.tau - 0.3).floor() as usize + 1);
        let det = out.z_total.unwrap().determinant();
        assert!((det - 1.0).abs() < 1e-6, "det {det}");
    }
}
