//! Bookkeeping of cylinder crossings along an orbit.
//!
//! n_i is the flow time at which the i-th crossing enters the cylinder and
//! m_i = n_i + tau_i the time it leaves. Between m_i and n_{i+1} the orbit
//! makes laminar returns of unit time. Consecutive crossings give
//! m_i = n_{i+1}, so the ordering is n_i < m_i <= n_{i+1}.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::flow_engine::fmt17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub n: f64,
    pub m: f64,
    pub tau: f64,
    /// Index of the Poincare return that is this crossing.
    pub return_index: u64,
    /// Horizontal chart coordinates at entry.
    pub entry: Vec<f64>,
    /// Chart distance of the entry point from p.
    pub entry_distance: f64,
    pub psi_cu: f64,
    pub log_det: f64,
    pub sigma: f64,
    pub z_half: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingLedger {
    pub entries: Vec<LedgerEntry>,
    /// Number of returns recorded so far.
    pub total_returns: u64,
    /// Number of time-one iterates completed.
    pub total_iterates: u64,
    /// Return times of every return, when kept.
    pub return_taus: Option<Vec<f64>>,
}

fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

impl CrossingLedger {
    pub fn new(keep_taus: bool) -> Self {
        Self { return_taus: keep_taus.then(Vec::new), ..Default::default() }
    }

    pub fn push_return(&mut self, tau: f64) {
        self.total_returns += 1;
        if let Some(t) = self.return_taus.as_mut() {
            t.push(tau);
        }
    }

    pub fn taus(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.tau).collect()
    }

    pub fn entry_distances(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.entry_distance).collect()
    }

    /// Laminar returns between crossing i and i+1.
    pub fn laminar_between(&self, i: usize) -> Option<u64> {
        let (a, b) = (self.entries.get(i)?, self.entries.get(i + 1)?);
        Some(b.return_index - a.return_index - 1)
    }

    /// Lap number: i plus the laminar returns up to crossing i, i.e. the
    /// index, counted from the first crossing, of the last return before
    /// crossing i+1. Defined when crossing i+1 exists.
    pub fn lap(&self, i: usize) -> Option<u64> {
        let first = self.entries.first()?.return_index;
        Some(self.entries.get(i + 1)?.return_index - first - 1)
    }

    pub fn lap_numbers(&self) -> Vec<u64> {
        (0..self.entries.len().saturating_sub(1)).filter_map(|i| self.lap(i)).collect()
    }

    /// Two-argument lap count: i + sum_{k<i} L_k + q.
    pub fn lap_two_arg(&self, i: usize, q: u64) -> Option<u64> {
        let first = self.entries.first()?.return_index;
        Some(self.entries.get(i)?.return_index - first + q)
    }

    /// The reading with q = n_{i+1} - m_i - 1 (laminar steps minus one).
    pub fn lap_second_reading(&self, i: usize) -> Option<i64> {
        let l = self.laminar_between(i)? as i64;
        Some(self.lap_two_arg(i, 0)? as i64 + l - 1)
    }

    /// Largest |n_{i+1} - n_0 - sum_{k <= lap(i)} tau_k| over the ledger,
    /// with the return times summed independently from the stored list.
    pub fn time_identity_error(&self) -> Option<f64> {
        let taus = self.return_taus.as_ref()?;
        let first = self.entries.first()?;
        let mut worst = 0.0f64;
        for i in 0..self.entries.len().saturating_sub(1) {
            let lap = self.lap(i)? as usize;
            let start = first.return_index as usize;
            let sum = neumaier(taus[start..=start + lap].iter().copied());
            worst = worst.max((self.entries[i + 1].n - first.n - sum).abs());
        }
        Some(worst)
    }

    /// n_i < m_i <= n_{i+1}.
    pub fn ordering_holds(&self) -> bool {
        self.entries.iter().all(|e| e.n < e.m)
            && self.entries.windows(2).all(|w| w[0].m <= w[1].n + 1e-9 * w[1].n.abs().max(1.0))
    }

    /// CSV with columns i, n_i, m_i, tau_i, lap (empty for the last entry).
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "n_i", "m_i", "tau_i", "lap"])?;
        for (i, e) in self.entries.iter().enumerate() {
            let lap = self.lap(i).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([i.to_string(), fmt17(e.n), fmt17(e.m), fmt17(e.tau), lap])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Appends another orbit's ledger, shifting return indices and times so
    /// the result reads as one concatenated record.
    pub fn append(&mut self, other: &Self, time_offset: f64) {
        let r0 = self.total_returns;
        for e in &other.entries {
            let mut e = e.clone();
            e.return_index += r0;
            e.n += time_offset;
            e.m += time_offset;
            self.entries.push(e);
        }
        self.total_returns += other.total_returns;
        self.total_iterates += other.total_iterates;
        match (self.return_taus.as_mut(), other.return_taus.as_ref()) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.return_taus = None,
        }
    }
}
