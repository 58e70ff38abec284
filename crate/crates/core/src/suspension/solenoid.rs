//! Solenoid base dynamics F0 on T^k x D.
//!
//! Torus coordinates are stored as 64-bit fixed point (value = theta * 2^64)
//! so that the expanding endomorphism acts exactly by wrapping integer
//! arithmetic. Disk coordinates are floats: D is a product of k planar
//! disks and the j-th factor is contracted by alpha and pushed to
//! beta * (cos 2 pi theta_j, sin 2 pi theta_j).

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::SuspensionError;
use crate::compound_linalg::{singular_values, RealMatrix};

pub const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

fn default_alpha() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.5
}
fn default_u_radius() -> f64 {
    0.05
}
fn default_disk_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolenoidSpec {
    pub k: usize,
    /// Integer matrix of the torus endomorphism, row-major. Empty means
    /// the doubling map 2 I.
    #[serde(default)]
    pub expansion: Vec<Vec<i64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Radius of U around the base coordinate of p; the cylinder chart maps
    /// horizontal C0 coordinate 3 to this radius.
    #[serde(default = "default_u_radius")]
    pub u_radius: f64,
    #[serde(default = "default_disk_radius")]
    pub disk_radius: f64,
}

/// A point of the cross-section: torus part in fixed point, disk part.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectionPoint {
    pub theta: Vec<u64>,
    pub disk: Vec<DiskCoord>,
}

/// Disk coordinate stored by bit pattern so section points are hashable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiskCoord(u64);

impl DiskCoord {
    pub fn new(v: f64) -> Self {
        Self(v.to_bits())
    }
    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

pub fn theta_to_fixed(t: f64) -> u64 {
    let f = t - t.floor();
    // rounding can land exactly on 2^64; wrap to 0
    let v = (f * TWO_POW_64).round();
    if v >= TWO_POW_64 {
        0
    } else {
        v as u64
    }
}

pub fn fixed_to_theta(v: u64) -> f64 {
    v as f64 / TWO_POW_64
}

/// Representative in [-1/2, 1/2).
pub fn fixed_to_signed(v: u64) -> f64 {
    (v as i64) as f64 / TWO_POW_64
}

/// Fixed-point offset for a signed torus displacement.
pub fn signed_to_fixed(d: f64) -> u64 {
    ((d * TWO_POW_64).round() as i64) as u64
}

impl SectionPoint {
    pub fn from_f64(theta: &[f64], disk: &[f64]) -> Self {
        Self {
            theta: theta.iter().map(|&t| theta_to_fixed(t)).collect(),
            disk: disk.iter().map(|&d| DiskCoord::new(d)).collect(),
        }
    }

    pub fn theta_f64(&self) -> Vec<f64> {
        self.theta.iter().map(|&v| fixed_to_theta(v)).collect()
    }

    pub fn disk_f64(&self) -> Vec<f64> {
        self.disk.iter().map(|d| d.get()).collect()
    }
}

impl SolenoidSpec {
    pub fn doubling(k: usize) -> Self {
        Self {
            k,
            expansion: Vec::new(),
            alpha: default_alpha(),
            beta: default_beta(),
            u_radius: default_u_radius(),
            disk_radius: default_disk_radius(),
        }
    }

    pub fn with_u_radius(mut self, r: f64) -> Self {
        self.u_radius = r;
        self
    }

    /// The expansion matrix with the doubling default resolved.
    pub fn matrix(&self) -> Vec<Vec<i64>> {
        if self.expansion.is_empty() {
            (0..self.k).map(|i| (0..self.k).map(|j| if i == j { 2 } else { 0 }).collect()).collect()
        } else {
            self.expansion.clone()
        }
    }

    pub fn real_matrix(&self) -> RealMatrix {
        let m = self.matrix();
        RealMatrix::from_fn(self.k, self.k, |i, j| m[i][j] as f64)
    }

    fn is_diagonal(&self) -> bool {
        let m = self.matrix();
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || m[i][j] == 0))
    }

    /// Smallest and largest singular values of the expansion.
    pub fn expansion_bounds(&self) -> (f64, f64) {
        let s = singular_values(&self.real_matrix());
        (*s.last().unwrap(), s[0])
    }

    pub fn disk_dim(&self) -> usize {
        2 * self.k
    }

    /// The fixed point p: theta = 0 and each disk factor at beta / (1 - alpha).
    pub fn fixed_point(&self) -> SectionPoint {
        let c = self.beta / (1.0 - self.alpha);
        let mut disk = Vec::with_capacity(2 * self.k);
        for _ in 0..self.k {
            disk.push(c);
            disk.push(0.0);
        }
        SectionPoint::from_f64(&vec![0.0; self.k], &disk)
    }

    /// Smallest chord between image-disk centers of two distinct preimages,
    /// maximized over the disk factors.
    fn min_preimage_separation(&self) -> f64 {
        let g = self.real_matrix();
        let det = g.determinant().round().abs() as i64;
        let inv = match g.clone().try_inverse() {
            Some(m) => m,
            None => return 0.0,
        };
        let k = self.k;
        let total = (det as usize).pow(k as u32);
        let mut best = f64::INFINITY;
        for code in 1..total {
            let mut m = vec![0.0; k];
            let mut c = code;
            for v in m.iter_mut() {
                *v = (c % det as usize) as f64;
                c /= det as usize;
            }
            let delta: Vec<f64> = (0..k)
                .map(|i| {
                    let s: f64 = (0..k).map(|j| inv[(i, j)] * m[j]).sum();
                    s - s.round()
                })
                .collect();
            if delta.iter().all(|d| d.abs() < 1e-12) {
                continue;
            }
            let sep = delta.iter().map(|d| 2.0 * self.beta * (std::f64::consts::PI * d).sin().abs()).fold(0.0, f64::max);
            best = best.min(sep);
        }
        best
    }

    pub fn validate(&self) -> Result<(), SuspensionError> {
        let bad = |m: String| Err(SuspensionError::InvalidSolenoid(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        let m = self.matrix();
        if m.len() != self.k || m.iter().any(|r| r.len() != self.k) {
            return bad(format!("expansion must be {0}x{0}", self.k));
        }
        let (lo, _) = self.expansion_bounds();
        if lo <= 1.0 {
            return bad(format!("expansion must be uniformly expanding, smallest singular value {lo}"));
        }
        if !(self.alpha > 0.0 && self.alpha < (-0.4f64).exp()) {
            return bad(format!("alpha must lie in (0, e^(-2/5)), got {}", self.alpha));
        }
        if !(self.u_radius > 0.0 && self.u_radius < 0.25) {
            return bad(format!("u_radius must lie in (0, 1/4), got {}", self.u_radius));
        }
        if self.alpha * self.disk_radius + self.beta.abs() > self.disk_radius {
            return bad("F0 does not map the disk into itself".into());
        }
        if self.min_preimage_separation() <= 2.0 * self.alpha * self.disk_radius {
            return bad("image disks of distinct preimages overlap".into());
        }
        Ok(())
    }

    /// F0 with the low bits left empty: the exact map on dyadic points.
    pub fn map(&self, s: &SectionPoint) -> SectionPoint {
        self.map_with(s, &mut |_: usize| 0)
    }

    /// F0 refilling the bits pushed out of the fixed-point window with
    /// fresh random bits, so the orbit stays Lebesgue-typical.
    pub fn map_refill<R: RngCore>(&self, s: &SectionPoint, rng: &mut R) -> SectionPoint {
        let bits = self.refill_bits();
        if bits == 0 {
            return self.map(s);
        }
        let mask = (1u64 << bits) - 1;
        self.map_with(s, &mut |_| rng.next_u64() & mask)
    }

    /// Number of low bits that carry no information after one step.
    pub fn refill_bits(&self) -> u32 {
        let m = self.matrix();
        let row_max = m.iter().map(|r| r.iter().map(|v| v.unsigned_abs()).sum::<u64>()).max().unwrap_or(1);
        64 - (row_max.max(1) - 1).leading_zeros().min(64)
    }

    fn map_with(&self, s: &SectionPoint, low: &mut dyn FnMut(usize) -> u64) -> SectionPoint {
        let k = self.k;
        let mut theta = vec![0u64; k];
        if self.is_diagonal() && self.expansion.is_empty() {
            for i in 0..k {
                theta[i] = s.theta[i].wrapping_shl(1) | low(i);
            }
        } else {
            let m = self.matrix();
            for i in 0..k {
                let mut acc = 0u64;
                for j in 0..k {
                    acc = acc.wrapping_add((m[i][j] as u64).wrapping_mul(s.theta[j]));
                }
                theta[i] = acc ^ low(i);
            }
        }
        let mut disk = Vec::with_capacity(2 * k);
        for j in 0..k {
            let a = 2.0 * std::f64::consts::PI * fixed_to_theta(s.theta[j]);
            disk.push(self.alpha * s.disk[2 * j].get() + self.beta * a.cos());
            disk.push(self.alpha * s.disk[2 * j + 1].get() + self.beta * a.sin());
        }
        SectionPoint { theta, disk: disk.into_iter().map(DiskCoord::new).collect() }
    }

    /// Horizontal C0 chart coordinates of a base point (3 at the rim of U).
    pub fn chart_of(&self, s: &SectionPoint) -> Vec<f64> {
        s.theta.iter().map(|&v| 3.0 * fixed_to_signed(v) / self.u_radius).collect()
    }

    /// Moves the torus part by a chart displacement, keeping the bits below
    /// the displacement's resolution untouched.
    pub fn shift_by_chart(&self, s: &SectionPoint, dx: &[f64]) -> SectionPoint {
        let mut out = s.clone();
        for (t, d) in out.theta.iter_mut().zip(dx) {
            *t = t.wrapping_add(signed_to_fixed(d * self.u_radius / 3.0));
        }
        out
    }

    /// Distance from p on the torus, in chart units.
    pub fn chart_distance_to_p(&self, s: &SectionPoint) -> f64 {
        self.chart_of(s).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Public entry point for one application of F0.
pub fn solenoid_map(spec: &SolenoidSpec, s: &SectionPoint) -> SectionPoint {
    spec.map(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixed_point_is_fixed() {
        let s = SolenoidSpec::doubling(1);
        let p = s.fixed_point();
        let q = s.map(&p);
        assert_eq!(p.theta, q.theta);
        for (a, b) in p.disk_f64().iter().zip(q.disk_f64()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn() {
        let s = SolenoidSpec::doubling(1);
        let q = s.map(&SectionPoint::from_f64(&[0.25], &[0.0, 0.0]));
        assert_eq!(q.theta_f64(), vec![0.5]);
        let d = q.disk_f64();
        assert!(d[0].abs() < 1e-16 && (d[1] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn disk_contracts_by_alpha() {
        let s = SolenoidSpec::doubling(1);
        let mut a = SectionPoint::from_f64(&[0.3], &[0.2, -0.1]);
        let mut b = SectionPoint::from_f64(&[0.3], &[-0.3, 0.4]);
        let d0 = (0.5f64.powi(2) + 0.5f64.powi(2)).sqrt();
        for _ in 0..10 {
            a = s.map(&a);
            b = s.map(&b);
        }
        let (da, db) = (a.disk_f64(), b.disk_f64());
        let d = ((da[0] - db[0]).powi(2) + (da[1] - db[1]).powi(2)).sqrt();
        assert!((d - 0.1f64.powi(10) * d0).abs() < 1e-12);
    }

    #[test]
    fn conjugacy_is_exact() {
        let s = SolenoidSpec::doubling(2);
        let p = SectionPoint::from_f64(&[0.3, 0.71], &[0.0; 4]);
        let q = s.map(&p);
        for i in 0..2 {
            assert_eq!(q.theta[i], p.theta[i].wrapping_mul(2));
        }
        let cat = SolenoidSpec { expansion: vec![vec![2, 1], vec![1, 1]], ..SolenoidSpec::doubling(2) };
        let q = cat.map(&p);
        assert_eq!(q.theta[0], p.theta[0].wrapping_mul(2).wrapping_add(p.theta[1]));
    }

    #[test]
    fn refill_keeps_high_bits() {
        let s = SolenoidSpec::doubling(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = SectionPoint::from_f64(&[0.123456789], &[0.0, 0.0]);
        let a = s.map(&p);
        let b = s.map_refill(&p, &mut rng);
        assert_eq!(a.theta[0] >> 1, b.theta[0] >> 1);
        assert_eq!(s.refill_bits(), 1);
    }

    #[test]
    fn validation() {
        assert!(SolenoidSpec::doubling(1).validate().is_ok());
        assert!(SolenoidSpec::doubling(3).validate().is_ok());
        let mut s = SolenoidSpec::doubling(1);
        s.alpha = 0.9;
        assert!(s.validate().is_err());
        let mut s = SolenoidSpec::doubling(1);
        s.expansion = vec![vec![1]];
        assert!(s.validate().is_err());
    }

    #[test]
    fn chart_round_trip() {
        let s = SolenoidSpec::doubling(1);
        let p = SectionPoint::from_f64(&[0.99], &[0.0, 0.0]);
        let x = s.chart_of(&p);
        assert!((x[0] + 0.6).abs() < 1e-12);
        let q = s.shift_by_chart(&p, &[1.2]);
        assert!((s.chart_of(&q)[0] - 0.6).abs() < 1e-12);
    }
}
