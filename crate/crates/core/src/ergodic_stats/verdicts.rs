//! Convergence diagnostics, condition verdicts and the crossing-time law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::accumulator::{sr_average, wsr_frequency, BirkhoffAccumulator, Checkpoint};
use super::StatsError;

/// Relative agreement required between the last two dyadic windows.
pub const WINDOW_REL_TOL: f64 = 0.02;
/// Absolute agreement accepted for near-zero quantities.
pub const WINDOW_ABS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub earlier: f64,
    pub later: f64,
    pub converged: bool,
}

/// Averages over the last two complete dyadic windows
/// (2^(J-2), 2^(J-1)] and (2^(J-1), 2^J] of a cumulative sum.
pub fn window_check<F: Fn(&Checkpoint) -> f64>(cps: &[Checkpoint], f: F) -> Option<WindowCheck> {
    if cps.len() < 3 {
        return None;
    }
    let (a, b, c) = (&cps[cps.len() - 3], &cps[cps.len() - 2], &cps[cps.len() - 1]);
    let earlier = (f(b) - f(a)) / (b.n - a.n) as f64;
    let later = (f(c) - f(b)) / (c.n - b.n) as f64;
    let diff = (later - earlier).abs();
    let converged = diff <= WINDOW_ABS_TOL || diff <= WINDOW_REL_TOL * earlier.abs().max(later.abs());
    Some(WindowCheck { earlier, later, converged })
}

/// Cumulative averages at the checkpoints of the second half of the run
/// and at the end; their extremes estimate liminf and limsup.
fn late_averages<F: Fn(&Checkpoint) -> f64>(acc: &BirkhoffAccumulator, final_sum: f64, f: F) -> Vec<f64> {
    let mut v: Vec<f64> =
        acc.checkpoints.iter().filter(|c| 2 * c.n >= acc.n).map(|c| f(c) / c.n as f64).collect();
    v.push(final_sum / acc.n as f64);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSectional {
    pub p: usize,
    pub average: f64,
    pub margin: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaValue {
    pub delta: f64,
    pub discrete: f64,
    pub continuous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusValue {
    pub r: f64,
    pub frequency: f64,
    pub time_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub seed: u64,
    pub n_iterates: u64,
    pub n_returns: u64,
    pub n_crossings: u64,
    pub total_time: f64,
    pub psi_cu_avg: f64,
    /// The same Birkhoff sum normalized by the number of returns.
    pub psi_cu_per_return: f64,
    pub wase_rate: f64,
    pub nu2se_margin: f64,
    /// -limsup estimate: the smallest margin among late cumulative averages.
    pub nu2se_margin_limsup: f64,
    pub p_sectional: Vec<PSectional>,
    pub sr_values: Vec<DeltaValue>,
    pub wsr_frequencies: Vec<RadiusValue>,
    pub tau_mean: f64,
    pub tau_max: f64,
    pub tau_loglaw_slope: Option<f64>,
    pub crossing_psi_cu_mean: Option<f64>,
    pub crossing_psi_cu_max_abs: f64,
    pub converged: BTreeMap<String, bool>,
    pub verdicts: BTreeMap<String, Verdict>,
    /// Positive margin without positive volume growth on this orbit.
    pub implication_violated: bool,
}

fn tri(converged: bool, holds: bool) -> Verdict {
    match (converged, holds) {
        (false, _) => Verdict::Inconclusive,
        (true, true) => Verdict::Holds,
        (true, false) => Verdict::Fails,
    }
}

/// Slow-recurrence tolerance used for the SR and wSR verdicts at the
/// smallest grid value.
pub const SR_EPSILON: f64 = 1e-2;

pub fn condition_verdicts(
    acc: &BirkhoffAccumulator,
    seed: u64,
    tau_loglaw_slope: Option<f64>,
) -> Result<ErgodicReport, StatsError> {
    if acc.n == 0 {
        return Ok(empty_report(seed));
    }
    let psi = acc.psi_cu_avg()?;
    let wase = acc.wase_rate()?;
    let mut converged = BTreeMap::new();
    let mut verdicts = BTreeMap::new();

    let psi_conv = window_check(&acc.checkpoints, |c| c.sum_psi_cu).map(|w| w.converged).unwrap_or(false);
    let wase_conv = window_check(&acc.checkpoints, |c| c.sum_log_jcu).map(|w| w.converged).unwrap_or(false);
    converged.insert("psi_cu".to_string(), psi_conv);
    converged.insert("wase".to_string(), wase_conv);

    let late = late_averages(acc, acc.sum_psi_cu, |c| c.sum_psi_cu);
    let liminf = late.iter().cloned().fold(f64::INFINITY, f64::min);
    let limsup = late.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    verdicts.insert("wNU2SE".to_string(), tri(psi_conv, liminf < 0.0));
    verdicts.insert("NU2SE".to_string(), tri(psi_conv, limsup < 0.0));
    verdicts.insert("wASE".to_string(), tri(wase_conv, wase > 0.0));

    let mut p_sectional = Vec::new();
    for (i, &p) in acc.p_orders.iter().enumerate() {
        let avg = acc.sum_psi_p[i] / acc.n as f64;
        let conv = window_check(&acc.checkpoints, |c| c.sum_psi_p[i]).map(|w| w.converged).unwrap_or(false);
        converged.insert(format!("psi_{p}"), conv);
        verdicts.insert(format!("wNU{p}SE"), tri(conv, avg < 0.0));
        p_sectional.push(PSectional { p, average: avg, margin: -avg, converged: conv });
    }

    let mut sr_values = Vec::new();
    for (i, &delta) in acc.deltas.iter().enumerate() {
        sr_values.push(DeltaValue {
            delta,
            discrete: sr_average(acc, delta)?,
            continuous: acc.continuous_sr(delta)?,
        });
        let conv = window_check(&acc.checkpoints, |c| c.sum_trunc_dist[i]).map(|w| w.converged).unwrap_or(false);
        converged.insert(format!("sr_{delta:e}"), conv);
    }
    if let Some(last) = sr_values.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)) {
        let idx = acc.deltas.iter().position(|&d| d == last.delta).unwrap();
        let conv = converged[&format!("sr_{:e}", acc.deltas[idx])];
        verdicts.insert("SR".to_string(), tri(conv, last.discrete < SR_EPSILON));
    }
    let mut wsr_frequencies = Vec::new();
    for &r in &acc.radii {
        wsr_frequencies.push(RadiusValue { r, frequency: wsr_frequency(acc, r)?, time_fraction: acc.visit_time_fraction(r)? });
    }
    if let Some(smallest) = wsr_frequencies.iter().min_by(|a, b| a.r.total_cmp(&b.r)) {
        verdicts.insert("wSR".to_string(), tri(acc.n >= 4, smallest.frequency < SR_EPSILON));
    }

    Ok(ErgodicReport {
        seed,
        n_iterates: acc.n,
        n_returns: acc.n_returns,
        n_crossings: acc.n_crossings,
        total_time: acc.total_time,
        psi_cu_avg: psi,
        psi_cu_per_return: acc.psi_cu_per_return().unwrap_or(f64::NAN),
        wase_rate: wase,
        nu2se_margin: -psi,
        nu2se_margin_limsup: -limsup,
        p_sectional,
        sr_values,
        wsr_frequencies,
        tau_mean: acc.tau_mean().unwrap_or(f64::NAN),
        tau_max: acc.max_tau,
        tau_loglaw_slope,
        crossing_psi_cu_mean: (acc.n_crossings > 0).then(|| acc.crossing_psi_cu_sum / acc.n_crossings as f64),
        crossing_psi_cu_max_abs: acc.crossing_psi_cu_max_abs,
        converged,
        verdicts,
        implication_violated: -psi > 0.0 && wase <= 0.0,
    })
}

fn empty_report(seed: u64) -> ErgodicReport {
    let mut verdicts = BTreeMap::new();
    for k in ["wNU2SE", "NU2SE", "wASE", "SR", "wSR"] {
        verdicts.insert(k.to_string(), Verdict::Inconclusive);
    }
    ErgodicReport {
        seed,
        n_iterates: 0,
        n_returns: 0,
        n_crossings: 0,
        total_time: 0.0,
        psi_cu_avg: f64::NAN,
        psi_cu_per_return: f64::NAN,
        wase_rate: f64::NAN,
        nu2se_margin: f64::NAN,
        nu2se_margin_limsup: f64::NAN,
        p_sectional: Vec::new(),
        sr_values: Vec::new(),
        wsr_frequencies: Vec::new(),
        tau_mean: f64::NAN,
        tau_max: 0.0,
        tau_loglaw_slope: None,
        crossing_psi_cu_mean: None,
        crossing_psi_cu_max_abs: 0.0,
        converged: BTreeMap::new(),
        verdicts,
        implication_violated: false,
    }
}

/// Cesaro stability of the mean return time over the last decade of
/// returns: the running means at the dyadic checkpoints within the final
/// factor of 10 agree within `rel`.
pub fn tau_cesaro_stable(acc: &BirkhoffAccumulator, rel: f64) -> Option<bool> {
    let last = acc.tau_checkpoints.last()?;
    let means: Vec<f64> = acc
        .tau_checkpoints
        .iter()
        .filter(|c| 10 * c.returns >= last.returns)
        .map(|c| c.sum_tau / c.returns as f64)
        .collect();
    if means.len() < 2 {
        return None;
    }
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(hi - lo <= rel * lo.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub max_residual: f64,
    /// Largest tau / (slope |log d| + intercept).
    pub envelope_ratio: f64,
}

/// Least-squares fit of tau against |log d|.
pub fn tau_loglaw_fit(taus: &[f64], distances: &[f64]) -> Result<LogLawFit, StatsError> {
    if taus.len() != distances.len() {
        return Err(StatsError::LengthMismatch);
    }
    if taus.len() < 30 {
        return Err(StatsError::InsufficientCrossings { got: taus.len(), need: 30 });
    }
    let xs: Vec<f64> = distances.iter().map(|d| d.ln().abs()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = taus.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(taus).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = taus.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mut max_residual = 0.0f64;
    let mut envelope_ratio = 0.0f64;
    let mut sse = 0.0;
    for (x, y) in xs.iter().zip(taus) {
        let fit = slope * x + intercept;
        max_residual = max_residual.max((y - fit).abs());
        sse += (y - fit) * (y - fit);
        if fit > 0.0 {
            envelope_ratio = envelope_ratio.max(y / fit);
        }
    }
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LogLawFit { slope, intercept, r_squared, max_residual, envelope_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_log_law() {
        let d: Vec<f64> = (3..40).map(|j| 2f64.powi(-j)).collect();
        let t: Vec<f64> = d.iter().map(|x| 5.0 * x.ln().abs()).collect();
        let f = tau_loglaw_fit(&t, &d).unwrap();
        assert!((f.slope - 5.0).abs() < 1e-9);
        let c = vec![2.5; d.len()];
        assert!(tau_loglaw_fit(&c, &d).unwrap().slope.abs() < 1e-12);
        assert!(tau_loglaw_fit(&t[..10], &d[..10]).is_err());
    }

    #[test]
    fn empty_is_inconclusive() {
        let acc = BirkhoffAccumulator::new(&[], &[0.01], &[0.01]);
        let r = condition_verdicts(&acc, 7, None).unwrap();
        assert!(r.verdicts.values().all(|v| *v == Verdict::Inconclusive));
        assert_eq!(r.seed, 7);
    }

    #[test]
    fn pure_base_orbit_verdicts() {
        let mut acc = BirkhoffAccumulator::new(&[], &[0.01], &[0.01]);
        let l2 = 2f64.ln();
        for i in 0..1024 {
            acc.record_return(1.0);
            acc.record_iterate(-l2, l2, &[], None, i as f64 + 1.0);
        }
        let r = condition_verdicts(&acc, 1, None).unwrap();
        assert!((r.nu2se_margin - l2).abs() < 1e-12);
        assert_eq!(r.verdicts["wNU2SE"], Verdict::Holds);
        assert_eq!(r.verdicts["NU2SE"], Verdict::Holds);
        assert_eq!(r.verdicts["wASE"], Verdict::Holds);
        assert_eq!(r.verdicts["SR"], Verdict::Holds);
        assert!(!r.implication_violated);
        assert_eq!(tau_cesaro_stable(&acc, 0.01), Some(true));
    }
}
