//! Slow-recurrence tools: distances to the singular set, closed-form
//! per-ball bounds, exact ball-passage integrals and the Lebesgue-weighted
//! recurrence profile of a glued model.

use serde::{Deserialize, Serialize};

use super::accumulator::truncated_distance;
use super::StatsError;
use crate::field_library::{CylinderField, ModelSpec};
use crate::flow_engine::{span_quadrature, DenseSegment, IntegratorConfig};
use crate::suspension::crossing::{integrate_crossing, CrossingObserver, CrossingOptions};
use crate::suspension::gluing::GluedField;
use crate::suspension::SolenoidSpec;

/// Coordinates that measure distance to the singular set: the neutral
/// fiber of the hat fields is skipped since sigma_1, sigma_2 extend along it.
#[derive(Debug, Clone)]
pub struct SingularSet {
    dim: usize,
    skip: std::ops::Range<usize>,
    /// W^s(sigma_2) is the curve z^2 + c rho^2 = 1, c = 3g / (g + 2) for
    /// vertical gain g.
    sep_c: f64,
}

impl SingularSet {
    pub fn of(model: &ModelSpec) -> Self {
        let dim = model.dim();
        let skip = match model.cylinder_field() {
            CylinderField::Y3Hat | CylinderField::Y4Hat => 2..dim - 1,
            _ => 0..0,
        };
        let g = model.cylinder_field().vertical_gain();
        Self { dim, skip, sep_c: 3.0 * g / (g + 2.0) }
    }

    fn horizontal_sq(&self, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, v) in w.iter().enumerate().take(self.dim - 1) {
            if !self.skip.contains(&j) {
                s += v * v;
            }
        }
        s
    }

    fn sq_dist(&self, w: &[f64], level: f64) -> f64 {
        let mut s = 0.0;
        for (i, v) in w.iter().enumerate().take(self.dim) {
            if self.skip.contains(&i) {
                continue;
            }
            let c = if i == self.dim - 1 { level } else { 0.0 };
            s += (v - c) * (v - c);
        }
        s
    }

    /// Chart distance to the nearer of sigma_1 = (0,..,-1), sigma_2 = (0,..,1).
    pub fn distance(&self, w: &[f64]) -> f64 {
        self.sq_dist(w, -1.0).min(self.sq_dist(w, 1.0)).sqrt()
    }

    /// Distance to sigma_i (i = 0 for sigma_1).
    pub fn distance_to(&self, w: &[f64], i: usize) -> f64 {
        self.sq_dist(w, if i == 0 { -1.0 } else { 1.0 }).sqrt()
    }

    /// Offset from the local stable manifold of sigma_i: the horizontal
    /// radius at sigma_1 (whose stable manifold is the axis), and the offset
    /// from the curved separatrix at sigma_2, which reduces to |z - 1| on
    /// the axis.
    pub fn unstable_component(&self, w: &[f64], i: usize) -> f64 {
        let rho2 = self.horizontal_sq(w);
        if i == 0 {
            rho2.sqrt()
        } else {
            let z = w[self.dim - 1];
            ((z * z + self.sep_c * rho2).sqrt() - 1.0).abs()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceBound {
    /// Exit time of the linearized flow from the r-ball.
    pub t0: f64,
    /// Closed-form upper bound of the time integral of -log d in the ball.
    pub s: f64,
}

/// Closed-form S and t0 for a passage entering the r-ball with unstable
/// component x0 under the linear flow diag(1/5, -1/5).
pub fn recurrence_bound_oracle(x0: f64, r: f64) -> Result<RecurrenceBound, StatsError> {
    let a = x0.abs();
    if !(a > 0.0 && a < r) {
        return Err(StatsError::InvalidOffset { x0, r });
    }
    let t0 = 5.0 * (r / a).ln();
    let s = 2.5 * (a.ln().powi(2) - r.ln().powi(2));
    Ok(RecurrenceBound { t0, s })
}

/// Time integral over [0, t0] of -log||e^{tD}(x0, r)|| with
/// D = diag(1/5, -1/5), by composite Gauss-Legendre.
pub fn linearized_ball_integral(x0: f64, r: f64, pieces: usize) -> Result<f64, StatsError> {
    let b = recurrence_bound_oracle(x0, r)?;
    let f = |s: f64| -0.5 * ((0.4 * s).exp() * x0 * x0 + (-0.4 * s).exp() * r * r).ln();
    let nodes = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let h = b.t0 / pieces as f64;
    let mut acc = 0.0;
    for k in 0..pieces {
        let a = k as f64 * h;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * h * f(a + x * h);
        }
    }
    Ok(acc)
}

/// Integral of (log|u|)^2 - (log r)^2 over the planar r-disk.
pub fn lebergodic_integral(r: f64) -> f64 {
    std::f64::consts::PI * r * r * (0.5 - r.ln())
}

/// Fits C' at the largest radius (times `headroom`) and returns it with
/// the per-radius check measured <= C' * integral.
pub fn fit_lebergodic(values: &[(f64, f64)], headroom: f64) -> Result<(f64, Vec<bool>), StatsError> {
    let (r_max, v_max) = values
        .iter()
        .copied()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(StatsError::Empty)?;
    let c = headroom * v_max / lebergodic_integral(r_max);
    Ok((c, values.iter().map(|&(r, v)| v <= c * lebergodic_integral(r) + 1e-300).collect()))
}

/// One stay inside B_r(sigma_i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPassage {
    pub sing: usize,
    pub entry_time: f64,
    pub exit_time: f64,
    /// Unstable component at the ball entry.
    pub x0: f64,
    /// Time integral of -log d inside the ball.
    pub integral: f64,
}

struct BallObserver<'a> {
    set: &'a SingularSet,
    r: f64,
    inside: [Option<(f64, f64, f64)>; 2],
    out: Vec<BallPassage>,
    buf: Vec<f64>,
}

impl BallObserver<'_> {
    fn eval(&mut self, seg: &DenseSegment, t: f64) -> &[f64] {
        seg.eval(t, &mut self.buf);
        &self.buf
    }

    fn gap(&mut self, seg: &DenseSegment, t: f64, i: usize) -> f64 {
        let (set, r) = (self.set, self.r);
        let w = self.eval(seg, t);
        set.distance_to(w, i) - r
    }

    fn root(&mut self, seg: &DenseSegment, mut a: f64, mut b: f64, i: usize) -> f64 {
        let ga = self.gap(seg, a, i);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (self.gap(seg, m, i) > 0.0) == (ga > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

impl CrossingObserver for BallObserver<'_> {
    fn on_step(&mut self, seg: &DenseSegment, t_end: f64, d: usize) {
        if self.buf.len() != seg.dim() {
            self.buf = vec![0.0; seg.dim()];
        }
        const SUB: usize = 16;
        let h = (t_end - seg.t0) / SUB as f64;
        for i in 0..2 {
            for k in 0..SUB {
                let (a, b) = (seg.t0 + k as f64 * h, seg.t0 + (k + 1) as f64 * h);
                let (ga, gb) = (self.gap(seg, a, i), self.gap(seg, b, i));
                let mut start = a;
                if ga > 0.0 && gb <= 0.0 {
                    let t = self.root(seg, a, b, i);
                    let set = self.set;
                    let x0 = set.unstable_component(self.eval(seg, t), i);
                    self.inside[i] = Some((t, x0, 0.0));
                    start = t;
                }
                if let Some((t_in, x0, acc)) = self.inside[i] {
                    let end = if ga <= 0.0 && gb > 0.0 { self.root(seg, a, b, i) } else { b };
                    let set = self.set;
                    let add = span_quadrature(seg, start, end, d, |w| -set.distance_to(w, i).ln());
                    if end < b || (ga <= 0.0 && gb > 0.0) {
                        self.out.push(BallPassage { sing: i, entry_time: t_in, exit_time: end, x0, integral: acc + add });
                        self.inside[i] = None;
                    } else {
                        self.inside[i] = Some((t_in, x0, acc + add));
                    }
                }
            }
        }
    }
}

/// Ball passages of the crossing that enters the cylinder at `x_in`.
pub fn ball_passages(
    model: &ModelSpec,
    x_in: &[f64],
    r: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<BallPassage>, StatsError> {
    let field = GluedField::new(model)?;
    let set = SingularSet::of(model);
    let mut obs = BallObserver { set: &set, r, inside: [None, None], out: Vec::new(), buf: Vec::new() };
    integrate_crossing(&field, x_in, f64::INFINITY, cfg, CrossingOptions::default(), &mut obs)?;
    Ok(obs.out)
}

/// Time integrals over one crossing of -log d_delta(., sing) for each
/// delta, using 16 Gauss panels per step.
pub fn crossing_delta_integrals(
    model: &ModelSpec,
    x_in: &[f64],
    deltas: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64), StatsError> {
    struct Obs<'a> {
        set: &'a SingularSet,
        deltas: &'a [f64],
        acc: Vec<f64>,
    }
    impl CrossingObserver for Obs<'_> {
        fn on_step(&mut self, seg: &DenseSegment, t_end: f64, d: usize) {
            const SUB: usize = 16;
            let h = (t_end - seg.t0) / SUB as f64;
            for (j, &delta) in self.deltas.iter().enumerate() {
                let set = self.set;
                for k in 0..SUB {
                    let a = seg.t0 + k as f64 * h;
                    self.acc[j] += span_quadrature(seg, a, a + h, d, |w| -truncated_distance(set.distance(w), delta).ln());
                }
            }
        }
    }
    let field = GluedField::new(model)?;
    let set = SingularSet::of(model);
    let mut obs = Obs { set: &set, deltas, acc: vec![0.0; deltas.len()] };
    let out = integrate_crossing(&field, x_in, f64::INFINITY, cfg, CrossingOptions::default(), &mut obs)?;
    Ok((obs.acc, out.tau))
}

/// Lebesgue-weighted continuous slow-recurrence averages of a rotational
/// glued model over the section: the ergodic-theorem value of
/// (1/T) int -log d_delta dt, computed by quadrature in the entry radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceProfile {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    pub mean_tau: f64,
}

pub fn lebesgue_recurrence_profile(
    model: &ModelSpec,
    spec: &SolenoidSpec,
    deltas: &[f64],
    nodes: usize,
    cfg: &IntegratorConfig,
) -> Result<RecurrenceProfile, StatsError> {
    let cf = model.cylinder_field();
    if !matches!(cf, CylinderField::Y3 | CylinderField::Y4) || spec.k != 2 {
        return Err(StatsError::Unsupported("profile needs a rotational glued model over a 2-torus".into()));
    }
    // log-spaced radii in (rho_lo, 3). Below rho_lo the offset from the
    // separatrix at sigma_2 drops under the resolution of the vertical
    // coordinate; the disk's weight there is ~1e-20 and is left out.
    let rho_lo: f64 = 1e-10;
    let (la, lb) = (rho_lo.ln(), 3f64.ln());
    let gl = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
    let gw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut sums = vec![0.0; deltas.len()];
    let mut tau_excess = 0.0;
    let h = (lb - la) / nodes as f64;
    for k in 0..nodes {
        for (x, w) in gl.iter().zip(gw) {
            let lr = la + (k as f64 + x) * h;
            let rho = lr.exp();
            // d area = 2 pi rho drho = 2 pi rho^2 d(log rho)
            let jac = 2.0 * std::f64::consts::PI * rho * rho * w * h;
            let (vals, tau) = crossing_delta_integrals(model, &[rho, 0.0], deltas, cfg)?;
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += jac * v;
            }
            tau_excess += jac * (tau - 1.0);
        }
    }
    let scale = (spec.u_radius / 3.0).powi(2);
    let mean_tau = 1.0 + scale * tau_excess;
    Ok(RecurrenceProfile {
        deltas: deltas.to_vec(),
        values: sums.iter().map(|s| scale * s / mean_tau).collect(),
        mean_tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::Family;

    #[test]
    fn oracle_examples() {
        let r = 1e-3;
        let b = recurrence_bound_oracle(r / std::f64::consts::E, r).unwrap();
        assert!((b.t0 - 5.0).abs() < 1e-12);
        let b = recurrence_bound_oracle(r / 2.0, r).unwrap();
        let expect = 2.5 * ((5e-4f64).ln().powi(2) - (1e-3f64).ln().powi(2));
        assert!((b.s - expect).abs() < 1e-12);
        assert!(recurrence_bound_oracle(2e-3, 1e-3).is_err());
    }

    #[test]
    fn linearized_integral_below_bound() {
        let s = recurrence_bound_oracle(1e-5, 1e-3).unwrap().s;
        let v = linearized_ball_integral(1e-5, 1e-3, 400).unwrap();
        assert!(v <= s, "{v} > {s}");
        assert!(v > 0.8 * s);
    }

    #[test]
    fn lebergodic_closed_form_matches_quadrature() {
        let r: f64 = 0.05;
        let n = 20000;
        let mut acc = 0.0;
        for k in 0..n {
            let s = r * (k as f64 + 0.5) / n as f64;
            acc += 2.0 * std::f64::consts::PI * s * (s.ln().powi(2) - r.ln().powi(2)) * r / n as f64;
        }
        assert!((acc / lebergodic_integral(r) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn distance_skips_neutral_fiber() {
        let m = ModelSpec::new(Family::G3Hat);
        let s = SingularSet::of(&m);
        assert_eq!(s.distance(&[0.0, 0.0, 2.5, -1.0]), 0.0);
        let m = ModelSpec::new(Family::G3);
        let s = SingularSet::of(&m);
        assert!((s.distance(&[0.3, 0.4, 1.0]) - 0.5).abs() < 1e-15);
        assert!((s.unstable_component(&[0.3, 0.4, -0.9], 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigma2_offset_vanishes_on_separatrix() {
        // the meridional separatrix of Y3 is the unit circle
        let s = SingularSet::of(&ModelSpec::new(Family::G3));
        let (a, b) = (0.06f64, 0.08f64);
        let z = (1.0 - a * a - b * b).sqrt();
        assert!(s.unstable_component(&[a, b, z], 1) < 1e-15);
        assert!((s.unstable_component(&[0.0, 0.0, 1.003], 1) - 0.003).abs() < 1e-15);
        // Y4: z^2 + 1.5 rho^2 = 1 is invariant
        let m = ModelSpec::new(Family::Y4);
        let s = SingularSet::of(&m);
        let z = (1.0 - 1.5 * 0.01f64).sqrt();
        assert!(s.unstable_component(&[0.1, 0.0, z], 1) < 1e-15);
        let f = crate::field_library::field_eval(&m, &[0.1, 0.0, z]).unwrap();
        let tangent = f[0] * 3.0 * 0.1 + f[2] * 2.0 * z;
        assert!(tangent.abs() < 1e-14, "{tangent}");
    }

    #[test]
    fn ball_passage_near_sigma1() {
        let m = ModelSpec::new(Family::G3);
        let r = 1e-2;
        let p = ball_passages(&m, &[1e-6, 0.0], r, &IntegratorConfig::default()).unwrap();
        assert!(p.iter().any(|b| b.sing == 0));
        for b in &p {
            let s = recurrence_bound_oracle(b.x0, r).unwrap().s;
            assert!(b.integral <= 1.25 * s, "{b:?} vs {s}");
        }
    }
}
