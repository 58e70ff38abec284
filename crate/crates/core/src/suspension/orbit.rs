//! Long orbits of the suspension flow, sampled at the section.
//!
//! The flow clock is the integer count of laminar returns plus a
//! compensated sum of crossing times. The tangent cocycle on E^cu is cut at
//! the integer times of the clock so that each piece is one iterate of the
//! time-one map; a jump at an integer time belongs to the interval ending
//! there.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crossing::{integrate_crossing, CrossingObserver, CrossingOptions};
use super::gluing::{phase_of, GluedField};
use super::ledger::{CrossingLedger, LedgerEntry};
use super::solenoid::{DiskCoord, SectionPoint, SolenoidSpec};
use super::{check_pair, in_u, jump_matrix, SuspensionError};
use crate::compound_linalg::{log_wedge_inv_norm, RealMatrix};
use crate::ergodic_stats::{BirkhoffAccumulator, EmpiricalMeasure, GridSpec, SingularSet};
use crate::field_library::ModelSpec;
use crate::flow_engine::{DenseSegment, IntegratorConfig};

fn default_true() -> bool {
    true
}
fn default_deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitOptions {
    /// Track the tangent cocycle and the per-iterate Birkhoff sums.
    #[serde(default = "default_true")]
    pub cocycle: bool,
    /// Orders p >= 3 of the sectional observable.
    #[serde(default)]
    pub p_orders: Vec<usize>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub radii: Vec<f64>,
    /// Time integrals of -log d_delta inside the cylinder.
    #[serde(default)]
    pub continuous_sr: bool,
    #[serde(default)]
    pub measure: Option<GridSpec>,
    /// Integrate the sectional rate of the unslowed field per crossing.
    #[serde(default)]
    pub sigma_rate: bool,
    /// Refill the torus bits shifted out by the expansion with random bits.
    #[serde(default = "default_true")]
    pub refill: bool,
    /// Keep every return time in the ledger.
    #[serde(default)]
    pub keep_return_taus: bool,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            cocycle: true,
            p_orders: Vec::new(),
            deltas: default_deltas(),
            radii: default_deltas(),
            continuous_sr: false,
            measure: None,
            sigma_rate: false,
            refill: true,
            keep_return_taus: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OrbitConfig {
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub options: OrbitOptions,
}

#[derive(Debug, Clone)]
pub struct OrbitOutcome {
    pub seed: u64,
    pub ledger: CrossingLedger,
    pub acc: BirkhoffAccumulator,
    pub measure: Option<EmpiricalMeasure>,
    pub final_point: SectionPoint,
    /// Set when a crossing failed; the orbit stops there.
    pub terminated: Option<SuspensionError>,
}

/// Uniform sample of the section away from the fiber of p.
pub fn sample_initial<R: RngCore>(spec: &SolenoidSpec, rng: &mut R) -> SectionPoint {
    loop {
        let theta: Vec<u64> = (0..spec.k).map(|_| rng.next_u64()).collect();
        let mut disk = Vec::with_capacity(2 * spec.k);
        for _ in 0..spec.k {
            let r = spec.disk_radius * rng.gen::<f64>().sqrt();
            let a = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            disk.push(r * a.cos());
            disk.push(r * a.sin());
        }
        let s = SectionPoint { theta, disk: disk.into_iter().map(DiskCoord::new).collect() };
        if spec.chart_distance_to_p(&s) * spec.u_radius / 3.0 > 10.0 * f64::EPSILON {
            return s;
        }
    }
}

/// The sampling stream for a seed, separate from the refill stream.
pub fn initial_for_seed(spec: &SolenoidSpec, seed: u64) -> SectionPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    sample_initial(spec, &mut rng)
}

enum Pending {
    Identity,
    Jump,
    General(RealMatrix),
}

struct CocycleCut {
    jump: RealMatrix,
    jump_psi2: f64,
    jump_logdet: f64,
    jump_psi_p: Vec<f64>,
    p_orders: Vec<usize>,
    pending: Pending,
    psi_p_buf: Vec<f64>,
}

impl CocycleCut {
    fn new(spec: &SolenoidSpec, p_orders: &[usize]) -> Result<Self, SuspensionError> {
        let jump = jump_matrix(spec);
        let lw = |m: &RealMatrix, p: usize| log_wedge_inv_norm(m, p).unwrap_or(f64::NAN);
        Ok(Self {
            jump_psi2: lw(&jump, 2),
            jump_logdet: jump.determinant().abs().ln(),
            jump_psi_p: p_orders.iter().map(|&p| lw(&jump, p)).collect(),
            jump,
            p_orders: p_orders.to_vec(),
            pending: Pending::Identity,
            psi_p_buf: vec![0.0; p_orders.len()],
        })
    }

    /// Composes `m` after the pending piece.
    fn push(&mut self, m: &RealMatrix) {
        self.pending = match std::mem::replace(&mut self.pending, Pending::Identity) {
            Pending::Identity => Pending::General(m.clone()),
            Pending::Jump => Pending::General(m * &self.jump),
            Pending::General(p) => Pending::General(m * p),
        };
    }

    fn push_jump(&mut self) {
        self.pending = match std::mem::replace(&mut self.pending, Pending::Identity) {
            Pending::Identity => Pending::Jump,
            Pending::Jump => Pending::General(&self.jump * &self.jump),
            Pending::General(p) => Pending::General(&self.jump * p),
        };
    }

    /// Emits the pending piece as one iterate.
    fn emit(&mut self, acc: &mut BirkhoffAccumulator, dist: Option<f64>, t: f64) {
        match std::mem::replace(&mut self.pending, Pending::Identity) {
            Pending::Identity => {
                self.psi_p_buf.iter_mut().for_each(|v| *v = 0.0);
                acc.record_iterate(0.0, 0.0, &self.psi_p_buf, dist, t);
            }
            Pending::Jump => acc.record_iterate(self.jump_psi2, self.jump_logdet, &self.jump_psi_p, dist, t),
            Pending::General(m) => {
                for (v, &p) in self.psi_p_buf.iter_mut().zip(&self.p_orders) {
                    *v = log_wedge_inv_norm(&m, p).unwrap_or(f64::NAN);
                }
                let psi2 = log_wedge_inv_norm(&m, 2).unwrap_or(f64::NAN);
                acc.record_iterate(psi2, m.determinant().abs().ln(), &self.psi_p_buf, dist, t);
            }
        }
    }
}

/// Flow time as laminar count plus a compensated sum of crossing times.
#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    laminar: u64,
    sum: f64,
    comp: f64,
}

impl Clock {
    fn add_crossing(&mut self, tau: f64) {
        let t = self.sum + tau;
        if self.sum.abs() >= tau.abs() {
            self.comp += (self.sum - t) + tau;
        } else {
            self.comp += (tau - t) + self.sum;
        }
        self.sum = t;
    }

    fn crossing_part(&self) -> f64 {
        self.sum + self.comp
    }

    fn now(&self) -> f64 {
        self.laminar as f64 + self.crossing_part()
    }

    fn frac(&self) -> f64 {
        let c = self.crossing_part();
        c - c.floor()
    }
}

struct Obs<'a> {
    cut: Option<&'a mut CocycleCut>,
    acc: &'a mut BirkhoffAccumulator,
    measure: Option<&'a mut EmpiricalMeasure>,
    set: &'a SingularSet,
    t0: f64,
    continuous: bool,
    u_radius: f64,
    buf: Vec<f64>,
}

impl CrossingObserver for Obs<'_> {
    fn on_cut(&mut self, s: f64, w: &[f64], z: Option<&RealMatrix>) {
        let dist = Some(self.set.distance(w));
        if let (Some(cut), Some(z)) = (self.cut.as_deref_mut(), z) {
            cut.push(z);
            cut.emit(self.acc, dist, self.t0 + s);
        }
    }

    fn on_step(&mut self, seg: &DenseSegment, t_end: f64, d: usize) {
        if !self.continuous && self.measure.is_none() {
            return;
        }
        if self.buf.len() != seg.dim() {
            self.buf = vec![0.0; seg.dim()];
        }
        const SUB: usize = 16;
        const GL: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
        const GW: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let h = (t_end - seg.t0) / SUB as f64;
        for k in 0..SUB {
            let a = seg.t0 + k as f64 * h;
            if self.continuous {
                for (x, wt) in GL.iter().zip(GW) {
                    seg.eval(a + x * h, &mut self.buf);
                    let dist = self.set.distance(&self.buf[..d]);
                    self.acc.record_continuous(dist, wt * h);
                }
            }
            if let Some(m) = self.measure.as_deref_mut() {
                seg.eval(a + 0.5 * h, &mut self.buf);
                let th = |x: f64| (x * self.u_radius / 3.0).rem_euclid(1.0);
                let p = if d == 2 {
                    (th(self.buf[0]), phase_of(self.buf[1]).clamp(0.0, 1.0 - 1e-16))
                } else {
                    (th(self.buf[0]), th(self.buf[1]))
                };
                let _ = m.update(p, h);
            }
        }
    }
}

/// Base-coordinate point for the measure grid.
fn measure_point(s: &SectionPoint) -> (f64, f64) {
    let th = s.theta_f64();
    if th.len() == 1 {
        (th[0], 0.0)
    } else {
        (th[0], th[1])
    }
}

pub fn orbit_generate(
    spec: &SolenoidSpec,
    model: &ModelSpec,
    s0: &SectionPoint,
    n_returns: u64,
    cfg: &OrbitConfig,
) -> Result<OrbitOutcome, SuspensionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    orbit_generate_with_rng(spec, model, s0, n_returns, cfg, &mut rng)
}

/// As `orbit_generate`, with the source of refill bits supplied.
pub fn orbit_generate_with_rng<R: RngCore>(
    spec: &SolenoidSpec,
    model: &ModelSpec,
    s0: &SectionPoint,
    n_returns: u64,
    cfg: &OrbitConfig,
    rng: &mut R,
) -> Result<OrbitOutcome, SuspensionError> {
    check_pair(spec, model)?;
    cfg.integrator.validate()?;
    let opts = &cfg.options;
    let field = GluedField::new(model)?;
    let set = SingularSet::of(model);
    let mut acc = BirkhoffAccumulator::new(&opts.p_orders, &opts.deltas, &opts.radii);
    let mut measure = opts.measure.map(EmpiricalMeasure::new);
    let mut ledger = CrossingLedger::new(opts.keep_return_taus);
    let mut cut = if opts.cocycle { Some(CocycleCut::new(spec, &opts.p_orders)?) } else { None };
    let copts = CrossingOptions { track_cocycle: opts.cocycle, sigma_rate: opts.sigma_rate };
    let mut clock = Clock::default();
    let mut s = s0.clone();
    let mut terminated = None;

    for _ in 0..n_returns {
        let t_start = clock.now();
        let f = clock.frac();
        let x = spec.chart_of(&s);
        let (next, tau) = if !in_u(model, &x) {
            if let Some(c) = cut.as_mut() {
                if f > 0.0 {
                    c.emit(&mut acc, None, t_start + 1.0 - f);
                }
                c.push_jump();
            }
            if let Some(m) = measure.as_mut() {
                let (a, b) = measure_point(&s);
                if spec.k == 1 {
                    let _ = m.update_column(a, 1.0);
                } else {
                    let _ = m.update((a, b), 1.0);
                }
            }
            clock.laminar += 1;
            (if opts.refill { spec.map_refill(&s, rng) } else { spec.map(&s) }, 1.0)
        } else {
            let first_cut = if f > 0.0 { 1.0 - f } else { 1.0 };
            let mut obs = Obs {
                cut: cut.as_mut(),
                acc: &mut acc,
                measure: measure.as_mut(),
                set: &set,
                t0: t_start,
                continuous: opts.continuous_sr,
                u_radius: spec.u_radius,
                buf: Vec::new(),
            };
            let out = match integrate_crossing(&field, &x, first_cut, &cfg.integrator, copts, &mut obs) {
                Ok(o) => o,
                Err(e) => {
                    terminated = Some(e);
                    break;
                }
            };
            let (mut psi, mut logdet) = (f64::NAN, f64::NAN);
            if let (Some(c), Some(tail)) = (cut.as_mut(), out.z_tail.as_ref()) {
                c.push(tail);
                c.push_jump();
                psi = out.piece_psi_sum;
                logdet = out.piece_log_det_sum;
            }
            acc.record_crossing(psi, logdet, out.sigma_integral, out.tau);
            ledger.entries.push(LedgerEntry {
                n: t_start,
                m: t_start + out.tau,
                tau: out.tau,
                return_index: ledger.total_returns,
                entry_distance: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
                entry: x,
                psi_cu: psi,
                log_det: logdet,
                sigma: out.sigma_integral,
                z_half: out.z_half_integral,
            });
            clock.add_crossing(out.tau);
            let dx: Vec<f64> = out.x_out.iter().zip(&out.x_in).map(|(a, b)| a - b).collect();
            let shifted = spec.shift_by_chart(&s, &dx);
            (if opts.refill { spec.map_refill(&shifted, rng) } else { spec.map(&shifted) }, out.tau)
        };
        if let Some(c) = cut.as_mut() {
            if clock.frac() == 0.0 {
                c.emit(&mut acc, None, clock.now());
            }
        }
        acc.record_return(tau);
        ledger.push_return(tau);
        s = next;
    }
    ledger.total_iterates = acc.n;
    if !opts.cocycle {
        ledger.total_iterates = clock.now().floor() as u64;
    }
    Ok(OrbitOutcome { seed: cfg.seed, ledger, acc, measure, final_point: s, terminated })
}

/// Independent orbits from the given seeds, fanned out over the rayon
/// pool; results come back in seed order.
pub fn orbit_generate_many(
    spec: &SolenoidSpec,
    model: &ModelSpec,
    seeds: &[u64],
    n_returns: u64,
    cfg: &OrbitConfig,
) -> Vec<Result<OrbitOutcome, SuspensionError>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let s0 = initial_for_seed(spec, seed);
            let c = OrbitConfig { seed, ..cfg.clone() };
            orbit_generate(spec, model, &s0, n_returns, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::Family;

    #[test]
    fn zero_returns_is_empty() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G0);
        let s0 = initial_for_seed(&spec, 3);
        let out = orbit_generate(&spec, &m, &s0, 0, &OrbitConfig::default()).unwrap();
        assert!(out.ledger.entries.is_empty());
        assert_eq!(out.acc.n, 0);
        assert_eq!(out.acc.sum_psi_cu, 0.0);
    }

    #[test]
    fn orbit_avoiding_u_has_pure_base_expansion() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G0);
        // the period-two orbit {1/3, 2/3}: the doubling shifts in the bits
        // 0, 1, 0, 1, ...
        struct Alternate(u64);
        impl RngCore for Alternate {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0 += 1;
                (self.0 + 1) & 1
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {}
            fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
                Ok(())
            }
        }
        let s0 = SectionPoint { theta: vec![0x5555_5555_5555_5555], disk: vec![DiskCoord::new(0.0); 2] };
        let out =
            orbit_generate_with_rng(&spec, &m, &s0, 1000, &OrbitConfig::default(), &mut Alternate(0)).unwrap();
        assert_eq!(out.final_point.theta, s0.theta);
        assert!(out.ledger.entries.is_empty());
        assert_eq!(out.acc.n, 1000);
        let avg = out.acc.psi_cu_avg().unwrap();
        assert!((avg + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn generic_orbit_books_balance() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G0);
        let s0 = initial_for_seed(&spec, 11);
        let cfg = OrbitConfig {
            seed: 11,
            options: OrbitOptions { keep_return_taus: true, ..Default::default() },
            ..Default::default()
        };
        let out = orbit_generate(&spec, &m, &s0, 400, &cfg).unwrap();
        assert!(out.terminated.is_none());
        assert!(out.ledger.entries.len() > 10);
        assert!(out.ledger.ordering_holds());
        assert!(out.ledger.time_identity_error().unwrap() < 1e-9);
        // iterates = floor of total time, up to the unfinished last piece
        assert!((out.acc.n as f64 - out.acc.total_time).abs() <= 1.0);
        for e in &out.ledger.entries {
            assert!(e.psi_cu.abs() < 1e-4, "{e:?}");
        }
        // area preservation telescopes: sum psi = -(returns) log 2 up to
        // the last unfinished piece
        let jumps = out.acc.n_returns as f64;
        assert!((out.acc.sum_psi_cu + jumps * 2f64.ln()).abs() < 2.0 * 2f64.ln());
    }

    #[test]
    fn many_is_ordered_and_deterministic() {
        let spec = SolenoidSpec::doubling(1);
        let m = ModelSpec::new(Family::G1);
        let a = orbit_generate_many(&spec, &m, &[5, 6], 200, &OrbitConfig::default());
        let b = orbit_generate_many(&spec, &m, &[5, 6], 200, &OrbitConfig::default());
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.acc, y.acc);
            assert_eq!(x.final_point, y.final_point);
        }
        assert_eq!(a[0].as_ref().unwrap().seed, 5);
    }
}
