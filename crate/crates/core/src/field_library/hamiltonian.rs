use super::bump::BumpSpec;

/// H(a, b) = a (1 - (a^2 + b^2) xi(a) - K (1 - xi(a))) / 10.
///
/// With K = 2 this is the literal blend; larger K keeps -H_a positive on the
/// whole collar 2 < |a| < 3 (see `ModelSpec::outer_level`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian {
    pub xi: BumpSpec,
    pub outer_level: f64,
}

/// H and its partial derivatives up to order two.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HParts {
    pub h: f64,
    pub ha: f64,
    pub hb: f64,
    pub haa: f64,
    pub hab: f64,
    pub hbb: f64,
    /// haa / a, finite at a = 0.
    pub haa_over_a: f64,
    /// xi(a), needed by the rotational fields.
    pub xi: f64,
    /// xi'(a) / a, finite at a = 0.
    pub xi1_over_a: f64,
}

impl Hamiltonian {
    pub fn new(xi: BumpSpec, outer_level: f64) -> Self {
        Self { xi, outer_level }
    }

    pub fn parts(&self, a: f64, b: f64) -> HParts {
        let k = self.outer_level;
        let (x0, x1, x2) = self.xi.derivs(a);
        let r2 = a * a + b * b;
        let h = a * (1.0 - r2 * x0 - k * (1.0 - x0)) / 10.0;
        let ha = (1.0 - k + x0 * (k - 3.0 * a * a - b * b) + a * x1 * (k - r2)) / 10.0;
        let hb = -a * b * x0 / 5.0;
        let haa = (x1 * (2.0 * k - 6.0 * a * a - 2.0 * b * b) - 6.0 * a * x0 + a * x2 * (k - r2)) / 10.0;
        let hab = -b * (x0 + a * x1) / 5.0;
        let hbb = -a * x0 / 5.0;
        let on_plateau = a.abs() <= self.xi.plateau_end;
        let haa_over_a = if on_plateau { -0.6 } else { haa / a };
        let xi1_over_a = if on_plateau { 0.0 } else { x1 / a };
        HParts { h, ha, hb, haa, hab, hbb, haa_over_a, xi: x0, xi1_over_a }
    }

    pub fn value(&self, a: f64, b: f64) -> f64 {
        self.parts(a, b).h
    }

    pub fn gradient(&self, a: f64, b: f64) -> [f64; 2] {
        let p = self.parts(a, b);
        [p.ha, p.hb]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(k: f64) -> Hamiltonian {
        Hamiltonian::new(BumpSpec::new(2.0, 3.0).unwrap(), k)
    }

    #[test]
    fn closed_form_values() {
        let hh = h(41.0);
        for y in [-2.0, -0.3, 0.0, 1.7] {
            assert_eq!(hh.value(0.0, y), 0.0);
        }
        assert_eq!(hh.value(1.0, 0.0), 0.0);
        let g = hh.gradient(3f64.sqrt() / 3.0, 0.0);
        assert!(g[0].abs() < 1e-16 && g[1].abs() < 1e-16);
        // literal and repaired blends agree on the plateau
        assert_eq!(h(2.0).value(1.3, -0.4), hh.value(1.3, -0.4));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for k in [2.0, 21.0, 41.0] {
            let hh = h(k);
            let e = 1e-6;
            for i in 0..40 {
                let a = -3.2 + 0.16 * i as f64 + 0.013;
                for b in [-2.0, -0.7, 0.4, 1.9] {
                    let p = hh.parts(a, b);
                    let fa = (hh.value(a + e, b) - hh.value(a - e, b)) / (2.0 * e);
                    let fb = (hh.value(a, b + e) - hh.value(a, b - e)) / (2.0 * e);
                    assert!((p.ha - fa).abs() < 1e-7 * (1.0 + fa.abs()));
                    assert!((p.hb - fb).abs() < 1e-7 * (1.0 + fb.abs()));
                    let faa = (hh.parts(a + e, b).ha - hh.parts(a - e, b).ha) / (2.0 * e);
                    let fab = (hh.parts(a, b + e).ha - hh.parts(a, b - e).ha) / (2.0 * e);
                    let fbb = (hh.parts(a, b + e).hb - hh.parts(a, b - e).hb) / (2.0 * e);
                    assert!((p.haa - faa).abs() < 1e-6 * (1.0 + faa.abs()), "a={a} b={b}");
                    assert!((p.hab - fab).abs() < 1e-6 * (1.0 + fab.abs()));
                    assert!((p.hbb - fbb).abs() < 1e-6 * (1.0 + fbb.abs()));
                }
            }
        }
    }

    #[test]
    fn odd_in_a_even_in_b() {
        let hh = h(41.0);
        for (a, b) in [(0.3, 1.2), (2.4, -1.1), (2.9, 0.2), (3.4, 1.0)] {
            assert_eq!(hh.value(-a, b), -hh.value(a, b));
            assert_eq!(hh.value(a, -b), hh.value(a, b));
        }
    }
}
