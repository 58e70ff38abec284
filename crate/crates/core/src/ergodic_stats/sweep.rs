//! Sweep of the inner-cylinder slowdown zeta0.
//!
//! For each zeta0 the slowed model is run over a set of seeds and the
//! per-iterate averages of the order-2 and order-p observables are
//! recorded. On a fixed list of entry points the crossing integral of the
//! sectional rate of the unslowed field is compared with its zeta0 = 0
//! value.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::field_library::ModelSpec;
use crate::flow_engine::IntegratorConfig;
use crate::suspension::crossing::{integrate_crossing, CrossingOptions};
use crate::suspension::gluing::GluedField;
use crate::suspension::{orbit_generate_many, OrbitConfig, OrbitOptions, SolenoidSpec};

use super::accumulator::BirkhoffAccumulator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub solenoid: SolenoidSpec,
    pub zeta0: Vec<f64>,
    pub n_returns: u64,
    pub seeds: Vec<u64>,
    /// Horizontal chart coordinates of the matched entry points.
    pub entries: Vec<Vec<f64>>,
    /// Order of the higher sectional observable.
    pub p: usize,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub zeta0: f64,
    pub n_iterates: u64,
    pub total_time: f64,
    pub psi_cu_avg: f64,
    pub psi_p_avg: f64,
    pub p_margin: f64,
    pub crossing_psi_cu_mean: f64,
    pub tau_mean: f64,
    /// Per entry point: integral of the unslowed sectional rate.
    pub sigma_integrals: Vec<f64>,
    /// Per entry point: ratio to the zeta0 = 0 value.
    pub sigma_ratios: Vec<f64>,
    pub z_half_ratios: Vec<f64>,
    /// 1 / (1 - zeta0).
    pub expected_ratio: f64,
    pub terminated_orbits: usize,
}

fn crossing_sigma(model: &ModelSpec, x: &[f64], cfg: &IntegratorConfig) -> Result<(f64, f64), StatsError> {
    let field = GluedField::new(model)?;
    let opts = CrossingOptions { track_cocycle: false, sigma_rate: true };
    let out = integrate_crossing(&field, x, f64::INFINITY, cfg, opts, &mut ())?;
    Ok((out.sigma_integral, out.z_half_integral))
}

pub fn slowdown_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, StatsError> {
    if !cfg.model.family.is_slowed() {
        return Err(StatsError::InvalidSweep(format!("{} is not a slowed family", cfg.model.family.name())));
    }
    if cfg.zeta0.iter().any(|z| !(0.0..=0.95).contains(z)) {
        return Err(StatsError::InvalidSweep("zeta0 grid must lie in [0, 0.95]".into()));
    }
    if cfg.p < 2 || cfg.p > cfg.model.dim() {
        return Err(StatsError::InvalidSweep(format!("order p = {} out of range", cfg.p)));
    }
    let base_model = cfg.model.clone().with_zeta0(0.0);
    let mut base = Vec::with_capacity(cfg.entries.len());
    for x in &cfg.entries {
        base.push(crossing_sigma(&base_model, x, &cfg.integrator)?);
    }
    let p_orders = if cfg.p == 2 { Vec::new() } else { vec![cfg.p] };
    let ocfg = OrbitConfig {
        integrator: cfg.integrator,
        seed: 0,
        options: OrbitOptions { p_orders: p_orders.clone(), ..Default::default() },
    };
    let mut rows = Vec::with_capacity(cfg.zeta0.len());
    for &z in &cfg.zeta0 {
        let model = cfg.model.clone().with_zeta0(z);
        let mut acc = BirkhoffAccumulator::new(&p_orders, &ocfg.options.deltas, &ocfg.options.radii);
        let mut terminated = 0;
        for r in orbit_generate_many(&cfg.solenoid, &model, &cfg.seeds, cfg.n_returns, &ocfg) {
            let o = r?;
            terminated += o.terminated.is_some() as usize;
            acc.merge(&o.acc)?;
        }
        let mut sig = Vec::with_capacity(cfg.entries.len());
        let mut ratios = Vec::with_capacity(cfg.entries.len());
        let mut zr = Vec::with_capacity(cfg.entries.len());
        for (x, &(s0, h0)) in cfg.entries.iter().zip(&base) {
            let (s, h) = crossing_sigma(&model, x, &cfg.integrator)?;
            sig.push(s);
            ratios.push(s / s0);
            zr.push(h / h0);
        }
        let psi_p_avg = acc.psi_p_avg(cfg.p)?;
        rows.push(SweepRow {
            zeta0: z,
            n_iterates: acc.n,
            total_time: acc.total_time,
            psi_cu_avg: acc.psi_cu_avg()?,
            psi_p_avg,
            p_margin: -psi_p_avg,
            crossing_psi_cu_mean: if acc.n_crossings > 0 {
                acc.crossing_psi_cu_sum / acc.n_crossings as f64
            } else {
                f64::NAN
            },
            tau_mean: acc.tau_mean()?,
            sigma_integrals: sig,
            sigma_ratios: ratios,
            z_half_ratios: zr,
            expected_ratio: 1.0 / (1.0 - z),
            terminated_orbits: terminated,
        });
    }
    Ok(rows)
}

/// True when the values never decrease along the grid, allowing `slack`.
pub fn nondecreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_library::Family;

    #[test]
    fn rejects_bad_grids() {
        let cfg = SweepConfig {
            model: ModelSpec::new(Family::G3),
            solenoid: SolenoidSpec::doubling(2),
            zeta0: vec![0.0],
            n_returns: 10,
            seeds: vec![1],
            entries: vec![],
            p: 3,
            integrator: IntegratorConfig::default(),
        };
        assert!(slowdown_sweep(&cfg).is_err());
        let cfg = SweepConfig { model: ModelSpec::new(Family::GHat3), zeta0: vec![0.97], ..cfg };
        assert!(slowdown_sweep(&cfg).is_err());
    }

    #[test]
    fn sigma_doubles_at_half_speed() {
        let m = ModelSpec::new(Family::GHat3);
        let cfg = IntegratorConfig::default();
        let (a, _) = crossing_sigma(&m.clone().with_zeta0(0.0), &[0.5, 0.2], &cfg).unwrap();
        let (b, _) = crossing_sigma(&m.with_zeta0(0.5), &[0.5, 0.2], &cfg).unwrap();
        let r = b / a;
        assert!((r - 2.0).abs() < 0.2, "ratio {r}");
    }

    #[test]
    fn monotone_helper() {
        assert!(nondecreasing(&[-1.0, -0.5, -0.5, 0.1], 0.0));
        assert!(!nondecreasing(&[-1.0, -1.2], 0.1));
    }
}
