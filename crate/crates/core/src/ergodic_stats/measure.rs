//! Time-weighted empirical measures on a uniform grid over [0,1)^2.

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: 64, ny: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
    pub total_time: f64,
}

impl EmpiricalMeasure {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, weights: vec![0.0; grid.nx * grid.ny], total_time: 0.0 }
    }

    fn cell(&self, a: f64, b: f64) -> Result<(usize, usize), StatsError> {
        if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) {
            return Err(StatsError::OutsideGrid { a, b });
        }
        let i = ((a * self.grid.nx as f64) as usize).min(self.grid.nx - 1);
        let j = ((b * self.grid.ny as f64) as usize).min(self.grid.ny - 1);
        Ok((i, j))
    }

    /// Adds mass `tau` at the point (a, b).
    pub fn update(&mut self, point: (f64, f64), tau: f64) -> Result<(), StatsError> {
        let (i, j) = self.cell(point.0, point.1)?;
        self.weights[i * self.grid.ny + j] += tau;
        self.total_time += tau;
        Ok(())
    }

    /// Spreads mass uniformly over the column of cells containing a.
    pub fn update_column(&mut self, a: f64, mass: f64) -> Result<(), StatsError> {
        let (i, _) = self.cell(a, 0.0)?;
        let per = mass / self.grid.ny as f64;
        for w in &mut self.weights[i * self.grid.ny..(i + 1) * self.grid.ny] {
            *w += per;
        }
        self.total_time += mass;
        Ok(())
    }

    pub fn normalized(&self) -> Vec<f64> {
        if self.total_time == 0.0 {
            return self.weights.clone();
        }
        let s: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / s).collect()
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), StatsError> {
        if self.grid != other.grid {
            return Err(StatsError::IncompatibleGrids);
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        self.total_time += other.total_time;
        Ok(())
    }

    /// Marginal on the first coordinate.
    pub fn first_marginal(&self) -> Vec<f64> {
        self.normalized().chunks(self.grid.ny).map(|c| c.iter().sum()).collect()
    }
}

/// Total-variation distance between the normalized measures.
pub fn tv_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64, StatsError> {
    if a.grid != b.grid {
        return Err(StatsError::IncompatibleGrids);
    }
    let (na, nb) = (a.normalized(), b.normalized());
    Ok(0.5 * na.iter().zip(&nb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

pub fn empirical_measure_update(
    mut m: EmpiricalMeasure,
    point: (f64, f64),
    tau: f64,
) -> Result<EmpiricalMeasure, StatsError> {
    m.update(point, tau)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_double_updates() {
        let m = empirical_measure_update(EmpiricalMeasure::new(GridSpec::default()), (0.3, 0.7), 1.0).unwrap();
        let n = m.normalized();
        assert_eq!(n.iter().filter(|v| **v == 1.0).count(), 1);
        let m = empirical_measure_update(m, (0.301, 0.701), 1.0).unwrap();
        assert_eq!(m.normalized().iter().cloned().fold(0.0, f64::max), 1.0);
        assert_eq!(m.total_time, 2.0);
    }

    #[test]
    fn outside_rejected() {
        let mut m = EmpiricalMeasure::new(GridSpec::default());
        assert!(m.update((1.0, 0.5), 1.0).is_err());
    }

    #[test]
    fn column_spread_and_tv() {
        let mut a = EmpiricalMeasure::new(GridSpec { nx: 4, ny: 4 });
        a.update_column(0.1, 2.0).unwrap();
        assert!((a.normalized().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut b = EmpiricalMeasure::new(GridSpec { nx: 4, ny: 4 });
        b.update_column(0.9, 1.0).unwrap();
        assert!((tv_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
    }
}
