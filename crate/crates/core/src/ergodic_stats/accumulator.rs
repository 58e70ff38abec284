//! Mergeable Birkhoff sums along suspension orbits.

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Cumulative sums at an iterate count that is a power of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub total_time: f64,
    pub sum_psi_cu: f64,
    pub sum_log_jcu: f64,
    pub sum_psi_p: Vec<f64>,
    pub sum_trunc_dist: Vec<f64>,
}

/// Cumulative return-time sum at a return count that is a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauCheckpoint {
    pub returns: u64,
    pub sum_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffAccumulator {
    /// Iterates of the time-one map (integer times of the flow).
    pub n: u64,
    pub total_time: f64,
    pub n_returns: u64,
    pub n_crossings: u64,
    pub sum_psi_cu: f64,
    pub sum_log_jcu: f64,
    /// Orders p >= 3 tracked besides p = 2.
    pub p_orders: Vec<usize>,
    pub sum_psi_p: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Discrete sums of -log d_delta per delta.
    pub sum_trunc_dist: Vec<f64>,
    /// Time integrals of -log d_delta per delta.
    pub cont_trunc_dist: Vec<f64>,
    pub radii: Vec<f64>,
    pub visit_counts: Vec<u64>,
    pub visit_time: Vec<f64>,
    pub sum_tau: f64,
    pub max_tau: f64,
    /// Per-crossing sums over the whole passage.
    pub crossing_psi_cu_sum: f64,
    pub crossing_psi_cu_max_abs: f64,
    pub crossing_log_det_sum: f64,
    pub crossing_sigma_sum: f64,
    pub crossing_time: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub tau_checkpoints: Vec<TauCheckpoint>,
}

fn is_pow2(n: u64) -> bool {
    n != 0 && n & (n - 1) == 0
}

impl BirkhoffAccumulator {
    pub fn new(p_orders: &[usize], deltas: &[f64], radii: &[f64]) -> Self {
        Self {
            n: 0,
            total_time: 0.0,
            n_returns: 0,
            n_crossings: 0,
            sum_psi_cu: 0.0,
            sum_log_jcu: 0.0,
            p_orders: p_orders.to_vec(),
            sum_psi_p: vec![0.0; p_orders.len()],
            deltas: deltas.to_vec(),
            sum_trunc_dist: vec![0.0; deltas.len()],
            cont_trunc_dist: vec![0.0; deltas.len()],
            radii: radii.to_vec(),
            visit_counts: vec![0; radii.len()],
            visit_time: vec![0.0; radii.len()],
            sum_tau: 0.0,
            max_tau: 0.0,
            crossing_psi_cu_sum: 0.0,
            crossing_psi_cu_max_abs: 0.0,
            crossing_log_det_sum: 0.0,
            crossing_sigma_sum: 0.0,
            crossing_time: 0.0,
            checkpoints: Vec::new(),
            tau_checkpoints: Vec::new(),
        }
    }

    /// One iterate of the time-one map: cocycle terms of the unit-time
    /// piece and, if inside the cylinder, the chart distance to the
    /// singular set.
    pub fn record_iterate(&mut self, psi2: f64, log_det: f64, psi_p: &[f64], dist: Option<f64>, t: f64) {
        self.n += 1;
        self.sum_psi_cu += psi2;
        self.sum_log_jcu += log_det;
        for (s, v) in self.sum_psi_p.iter_mut().zip(psi_p) {
            *s += v;
        }
        if let Some(d) = dist {
            for (s, &delta) in self.sum_trunc_dist.iter_mut().zip(&self.deltas) {
                *s -= truncated_distance(d, delta).ln();
            }
            for (c, &r) in self.visit_counts.iter_mut().zip(&self.radii) {
                if d < r {
                    *c += 1;
                }
            }
        }
        if is_pow2(self.n) {
            self.checkpoints.push(Checkpoint {
                n: self.n,
                total_time: t,
                sum_psi_cu: self.sum_psi_cu,
                sum_log_jcu: self.sum_log_jcu,
                sum_psi_p: self.sum_psi_p.clone(),
                sum_trunc_dist: self.sum_trunc_dist.clone(),
            });
        }
    }

    pub fn record_return(&mut self, tau: f64) {
        self.n_returns += 1;
        self.total_time += tau;
        self.sum_tau += tau;
        self.max_tau = self.max_tau.max(tau);
        if is_pow2(self.n_returns) {
            self.tau_checkpoints.push(TauCheckpoint { returns: self.n_returns, sum_tau: self.sum_tau });
        }
    }

    pub fn record_crossing(&mut self, psi_cu: f64, log_det: f64, sigma: f64, tau: f64) {
        self.n_crossings += 1;
        self.crossing_psi_cu_sum += psi_cu;
        self.crossing_psi_cu_max_abs = self.crossing_psi_cu_max_abs.max(psi_cu.abs());
        self.crossing_log_det_sum += log_det;
        self.crossing_sigma_sum += sigma;
        self.crossing_time += tau;
    }

    /// Continuous-time contribution of a piece of orbit of length dt at
    /// chart distance d (quadrature node).
    pub fn record_continuous(&mut self, d: f64, weight: f64) {
        for (s, &delta) in self.cont_trunc_dist.iter_mut().zip(&self.deltas) {
            if d < 2.0 * delta {
                *s -= weight * truncated_distance(d, delta).ln();
            }
        }
        for (s, &r) in self.visit_time.iter_mut().zip(&self.radii) {
            if d < r {
                *s += weight;
            }
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), StatsError> {
        if self.p_orders != other.p_orders || self.deltas != other.deltas || self.radii != other.radii {
            return Err(StatsError::IncompatibleGrids);
        }
        Ok(())
    }

    /// Adds the sums of `other`. Checkpoints present in both (same n) are
    /// added; others are dropped, so merging equal-length orbits keeps the
    /// full dyadic ladder.
    pub fn merge(&mut self, other: &Self) -> Result<(), StatsError> {
        self.check_compatible(other)?;
        self.n += other.n;
        self.total_time += other.total_time;
        self.n_returns += other.n_returns;
        self.n_crossings += other.n_crossings;
        self.sum_psi_cu += other.sum_psi_cu;
        self.sum_log_jcu += other.sum_log_jcu;
        add(&mut self.sum_psi_p, &other.sum_psi_p);
        add(&mut self.sum_trunc_dist, &other.sum_trunc_dist);
        add(&mut self.cont_trunc_dist, &other.cont_trunc_dist);
        for (a, b) in self.visit_counts.iter_mut().zip(&other.visit_counts) {
            *a += b;
        }
        add(&mut self.visit_time, &other.visit_time);
        self.sum_tau += other.sum_tau;
        self.max_tau = self.max_tau.max(other.max_tau);
        self.crossing_psi_cu_sum += other.crossing_psi_cu_sum;
        self.crossing_psi_cu_max_abs = self.crossing_psi_cu_max_abs.max(other.crossing_psi_cu_max_abs);
        self.crossing_log_det_sum += other.crossing_log_det_sum;
        self.crossing_sigma_sum += other.crossing_sigma_sum;
        self.crossing_time += other.crossing_time;
        let mut cps = Vec::new();
        for a in &self.checkpoints {
            if let Some(b) = other.checkpoints.iter().find(|b| b.n == a.n) {
                let mut c = a.clone();
                c.n += b.n;
                c.total_time += b.total_time;
                c.sum_psi_cu += b.sum_psi_cu;
                c.sum_log_jcu += b.sum_log_jcu;
                add(&mut c.sum_psi_p, &b.sum_psi_p);
                add(&mut c.sum_trunc_dist, &b.sum_trunc_dist);
                cps.push(c);
            }
        }
        self.checkpoints = cps;
        let mut tcs = Vec::new();
        for a in &self.tau_checkpoints {
            if let Some(b) = other.tau_checkpoints.iter().find(|b| b.returns == a.returns) {
                tcs.push(TauCheckpoint { returns: a.returns + b.returns, sum_tau: a.sum_tau + b.sum_tau });
            }
        }
        self.tau_checkpoints = tcs;
        Ok(())
    }

    fn require_data(&self) -> Result<(), StatsError> {
        if self.n == 0 {
            Err(StatsError::Empty)
        } else {
            Ok(())
        }
    }

    pub fn psi_cu_avg(&self) -> Result<f64, StatsError> {
        self.require_data()?;
        Ok(self.sum_psi_cu / self.n as f64)
    }

    /// Per-return normalization of the same sum.
    pub fn psi_cu_per_return(&self) -> Result<f64, StatsError> {
        if self.n_returns == 0 {
            return Err(StatsError::Empty);
        }
        Ok(self.sum_psi_cu / self.n_returns as f64)
    }

    pub fn wase_rate(&self) -> Result<f64, StatsError> {
        self.require_data()?;
        Ok(self.sum_log_jcu / self.n as f64)
    }

    pub fn psi_p_avg(&self, p: usize) -> Result<f64, StatsError> {
        self.require_data()?;
        if p == 2 {
            return self.psi_cu_avg();
        }
        let i = self.p_orders.iter().position(|&q| q == p).ok_or(StatsError::NotInGrid(p as f64))?;
        Ok(self.sum_psi_p[i] / self.n as f64)
    }

    pub fn tau_mean(&self) -> Result<f64, StatsError> {
        if self.n_returns == 0 {
            return Err(StatsError::Empty);
        }
        Ok(self.sum_tau / self.n_returns as f64)
    }

    fn delta_index(&self, delta: f64) -> Result<usize, StatsError> {
        self.deltas.iter().position(|&d| d == delta).ok_or(StatsError::NotInGrid(delta))
    }

    fn radius_index(&self, r: f64) -> Result<usize, StatsError> {
        self.radii.iter().position(|&d| d == r).ok_or(StatsError::NotInGrid(r))
    }

    pub fn continuous_sr(&self, delta: f64) -> Result<f64, StatsError> {
        self.require_data()?;
        let i = self.delta_index(delta)?;
        Ok(self.cont_trunc_dist[i] / self.total_time)
    }

    pub fn visit_time_fraction(&self, r: f64) -> Result<f64, StatsError> {
        self.require_data()?;
        let i = self.radius_index(r)?;
        Ok(self.visit_time[i] / self.total_time)
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// d_delta: the distance truncated at 2 delta with a linear ramp.
pub fn truncated_distance(d: f64, delta: f64) -> f64 {
    if d <= delta {
        d
    } else if d < 2.0 * delta {
        (1.0 - delta) / delta * d + 2.0 * delta - 1.0
    } else {
        1.0
    }
}

/// Discrete slow-recurrence average (1/n) sum -log d_delta.
pub fn sr_average(acc: &BirkhoffAccumulator, delta: f64) -> Result<f64, StatsError> {
    acc.require_data()?;
    let i = acc.delta_index(delta)?;
    Ok(acc.sum_trunc_dist[i] / acc.n as f64)
}

/// Visit frequency of the r-ball around the singular set.
pub fn wsr_frequency(acc: &BirkhoffAccumulator, r: f64) -> Result<f64, StatsError> {
    acc.require_data()?;
    let i = acc.radius_index(r)?;
    Ok(acc.visit_counts[i] as f64 / acc.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_distance_branches() {
        let delta = 0.01;
        assert_eq!(truncated_distance(delta / 2.0, delta), delta / 2.0);
        assert_eq!(truncated_distance(3.0 * delta, delta), 1.0);
        assert!((truncated_distance(1.5 * delta, delta) - (0.5 + 0.5 * delta)).abs() < 1e-15);
        assert!((truncated_distance(delta, delta) - delta).abs() < 1e-12);
        assert!((truncated_distance(2.0 * delta * (1.0 - 1e-15), delta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sr_examples() {
        let mut acc = BirkhoffAccumulator::new(&[], &[0.01], &[0.01, 10.0]);
        assert!(matches!(sr_average(&acc, 0.01), Err(StatsError::Empty)));
        acc.record_iterate(0.0, 0.0, &[], Some(0.01 / std::f64::consts::E), 1.0);
        let v = sr_average(&acc, 0.01).unwrap();
        assert!((v - (1.0 - 0.01f64.ln())).abs() < 1e-12);
        assert_eq!(wsr_frequency(&acc, 10.0).unwrap(), 1.0);
        let mut far = BirkhoffAccumulator::new(&[], &[0.01], &[0.01]);
        for i in 0..10 {
            far.record_iterate(0.0, 0.0, &[], if i % 2 == 0 { None } else { Some(0.5) }, i as f64);
        }
        assert_eq!(sr_average(&far, 0.01).unwrap(), 0.0);
        assert_eq!(wsr_frequency(&far, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn merge_adds() {
        let mut a = BirkhoffAccumulator::new(&[3], &[0.1], &[0.1]);
        let mut b = a.clone();
        for i in 0..8 {
            a.record_iterate(-0.5, 0.7, &[-1.0], Some(0.05), i as f64);
            b.record_iterate(-0.3, 0.7, &[-1.0], None, i as f64);
            a.record_return(1.0);
            b.record_return(2.0);
        }
        let mut m = a.clone();
        m.merge(&b).unwrap();
        assert_eq!(m.n, 16);
        assert!((m.psi_cu_avg().unwrap() + 0.4).abs() < 1e-15);
        assert_eq!(m.checkpoints.len(), 4);
        assert_eq!(m.checkpoints[3].n, 16);
        assert!((m.tau_mean().unwrap() - 1.5).abs() < 1e-15);
        let other = BirkhoffAccumulator::new(&[], &[0.1], &[0.1]);
        assert!(m.merge(&other).is_err());
    }
}
