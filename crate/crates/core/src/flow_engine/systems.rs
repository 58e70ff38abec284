use super::integrator::OdeSystem;
use crate::compound_linalg::{binomial, multi_indices};
use crate::field_library::VectorField;

/// Largest state dimension supported by the stack buffers below.
pub const MAX_DIM: usize = 8;

/// w' = F(w).
pub struct FieldSystem<F>(pub F);

impl<F: VectorField> OdeSystem for FieldSystem<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.0.eval(y, dy)
    }
}

/// Sparse description of the additive compound of order 2: entry
/// (row, col) accumulates sign * a[src].
#[derive(Debug, Clone)]
pub struct CompoundStencil {
    pub d: usize,
    pub m: usize,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl CompoundStencil {
    pub fn new(d: usize) -> Self {
        let idx = multi_indices(d, 2);
        let m = idx.len();
        let mut entries = Vec::new();
        for (col, j) in idx.iter().enumerate() {
            for pos in 0..2 {
                for i in 0..d {
                    let mut v = [j[0], j[1]];
                    v[pos] = i;
                    if v[0] == v[1] {
                        continue;
                    }
                    let sign = if v[0] < v[1] { 1.0 } else { -1.0 };
                    let key = [v[0].min(v[1]), v[0].max(v[1])];
                    let row = idx.iter().position(|r| r[0] == key[0] && r[1] == key[1]).unwrap();
                    entries.push((row, col, i * d + j[pos], sign));
                }
            }
        }
        Self { d, m, entries }
    }

    /// Writes the dense m x m compound of the row-major d x d matrix `a`.
    pub fn fill(&self, a: &[f64], out: &mut [f64]) {
        out[..self.m * self.m].iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, s, sign) in &self.entries {
            out[r * self.m + c] += sign * a[s];
        }
    }
}

/// Augmented system (w, Z, W) with Z' = DF Z and W' = DF^[2] W.
/// Z and W are stored row-major after w.
pub struct VariationalSystem<F> {
    pub field: F,
    pub d: usize,
    pub m: usize,
    stencil: CompoundStencil,
    pub with_compound: bool,
}

impl<F: VectorField> VariationalSystem<F> {
    pub fn new(field: F, with_compound: bool) -> Self {
        let d = field.dim();
        assert!(d <= MAX_DIM, "dimension {d} exceeds {MAX_DIM}");
        let m = if d >= 2 { binomial(d, 2) } else { 0 };
        Self { field, d, m, stencil: CompoundStencil::new(d), with_compound }
    }

    pub fn state_len(&self) -> usize {
        self.d + self.d * self.d + if self.with_compound { self.m * self.m } else { 0 }
    }

    /// Initial state (w0, I, I).
    pub fn initial_state(&self, w0: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.state_len()];
        y[..self.d].copy_from_slice(w0);
        for i in 0..self.d {
            y[self.d + i * self.d + i] = 1.0;
        }
        if self.with_compound {
            let off = self.d + self.d * self.d;
            for i in 0..self.m {
                y[off + i * self.m + i] = 1.0;
            }
        }
        y
    }
}

impl<F: VectorField> OdeSystem for VariationalSystem<F> {
    fn dim(&self) -> usize {
        self.state_len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.d;
        let mut jac = [0.0; MAX_DIM * MAX_DIM];
        self.field.eval(&y[..d], &mut dy[..d]);
        self.field.jacobian(&y[..d], &mut jac[..d * d]);
        let z = &y[d..d + d * d];
        let dz = &mut dy[d..d + d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += jac[i * d + k] * z[k * d + j];
                }
                dz[i * d + j] = acc;
            }
        }
        if self.with_compound {
            let m = self.m;
            let off = d + d * d;
            let mut a2 = [0.0; 28 * 28];
            self.stencil.fill(&jac[..d * d], &mut a2);
            let w = &y[off..off + m * m];
            let dw = &mut dy[off..off + m * m];
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        acc += a2[i * m + k] * w[k * m + j];
                    }
                    dw[i * m + j] = acc;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound_linalg::{additive_compound, RealMatrix};
    use rand::{Rng, SeedableRng};

    #[test]
    fn stencil_matches_dense_compound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for d in 2..=6 {
            let a: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let st = CompoundStencil::new(d);
            let mut out = vec![0.0; st.m * st.m];
            st.fill(&a, &mut out);
            let dense = additive_compound(&RealMatrix::from_row_slice(d, d, &a), 2).unwrap();
            let got = RealMatrix::from_row_slice(st.m, st.m, &out);
            assert!((got - dense).abs().max() < 1e-15);
        }
    }
}
