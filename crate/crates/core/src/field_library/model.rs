use serde::{Deserialize, Serialize};

use super::bump::BumpSpec;
use super::ModelError;

/// Which vector field a model describes.
///
/// `Y*` families are the bare cylinder fields in C0 coordinates. `G*` glue
/// the cylinder field to the vertical flow with the collar bump; `Ghat*`
/// additionally slow the cylinder field down by the factor zeta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Y0,
    Y1,
    Y2,
    Y3,
    Y4,
    #[serde(rename = "Y3hat")]
    Y3Hat,
    #[serde(rename = "Y4hat")]
    Y4Hat,
    #[serde(rename = "Yperturbed")]
    YPerturbed,
    G0,
    G1,
    G2,
    G3,
    G4,
    #[serde(rename = "G3hat")]
    G3Hat,
    #[serde(rename = "G4hat")]
    G4Hat,
    #[serde(rename = "Ghat0")]
    GHat0,
    #[serde(rename = "Ghat1")]
    GHat1,
    #[serde(rename = "Ghat2")]
    GHat2,
    #[serde(rename = "Ghat3")]
    GHat3,
    #[serde(rename = "Ghat4")]
    GHat4,
    #[serde(rename = "Ghat3hat")]
    GHat3Hat,
    #[serde(rename = "Ghat4hat")]
    GHat4Hat,
}

/// The cylinder field underlying a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CylinderField {
    Y0,
    Y1,
    Y2,
    Y3,
    Y4,
    Y3Hat,
    Y4Hat,
    YPerturbed,
}

impl CylinderField {
    pub fn dim(self, ell: usize) -> usize {
        match self {
            CylinderField::Y0 | CylinderField::Y1 | CylinderField::YPerturbed => 2,
            CylinderField::Y2 => ell + 2,
            CylinderField::Y3 | CylinderField::Y4 => 3,
            CylinderField::Y3Hat | CylinderField::Y4Hat => ell + 3,
        }
    }

    /// Factor in front of -H_a in the vertical component.
    pub fn vertical_gain(self) -> f64 {
        match self {
            CylinderField::Y1 | CylinderField::Y2 | CylinderField::Y4 | CylinderField::Y4Hat => 2.0,
            _ => 1.0,
        }
    }

    /// Rotationally symmetric about the vertical axis.
    pub fn is_rotational(self) -> bool {
        matches!(self, CylinderField::Y3 | CylinderField::Y4 | CylinderField::Y3Hat | CylinderField::Y4Hat)
    }
}

impl Family {
    pub fn cylinder_field(self) -> CylinderField {
        use Family::*;
        match self {
            Y0 | G0 | GHat0 => CylinderField::Y0,
            Y1 | G1 | GHat1 => CylinderField::Y1,
            Y2 | G2 | GHat2 => CylinderField::Y2,
            Y3 | G3 | GHat3 => CylinderField::Y3,
            Y4 | G4 | GHat4 => CylinderField::Y4,
            Y3Hat | G3Hat | GHat3Hat => CylinderField::Y3Hat,
            Y4Hat | G4Hat | GHat4Hat => CylinderField::Y4Hat,
            YPerturbed => CylinderField::YPerturbed,
        }
    }

    pub fn is_glued(self) -> bool {
        !matches!(
            self,
            Family::Y0
                | Family::Y1
                | Family::Y2
                | Family::Y3
                | Family::Y4
                | Family::Y3Hat
                | Family::Y4Hat
                | Family::YPerturbed
        )
    }

    pub fn is_slowed(self) -> bool {
        use Family::*;
        matches!(self, GHat0 | GHat1 | GHat2 | GHat3 | GHat4 | GHat3Hat | GHat4Hat)
    }

    pub fn name(self) -> &'static str {
        use Family::*;
        match self {
            Y0 => "Y0",
            Y1 => "Y1",
            Y2 => "Y2",
            Y3 => "Y3",
            Y4 => "Y4",
            Y3Hat => "Y3hat",
            Y4Hat => "Y4hat",
            YPerturbed => "Yperturbed",
            G0 => "G0",
            G1 => "G1",
            G2 => "G2",
            G3 => "G3",
            G4 => "G4",
            G3Hat => "G3hat",
            G4Hat => "G4hat",
            GHat0 => "Ghat0",
            GHat1 => "Ghat1",
            GHat2 => "Ghat2",
            GHat3 => "Ghat3",
            GHat4 => "Ghat4",
            GHat3Hat => "Ghat3hat",
            GHat4Hat => "Ghat4hat",
        }
    }
}

fn default_omega() -> f64 {
    2.0
}
fn default_ell() -> usize {
    1
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_xi0() -> BumpSpec {
    BumpSpec { plateau_end: 2.0, support_end: 3.0 }
}
fn default_xi1() -> BumpSpec {
    BumpSpec { plateau_end: 4.0, support_end: 9.0 }
}

/// A vector field family together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Fiber expansion rate of Y2.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Extra fiber dimensions for Y2 and the hat fields.
    #[serde(default = "default_ell")]
    pub ell: usize,
    /// Slowdown depth; only nonzero for `Ghat*`.
    #[serde(default)]
    pub zeta0: f64,
    /// Gluing collar width in the phase coordinate u.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Bump in the Hamiltonian, applied to the first argument.
    #[serde(default = "default_xi0")]
    pub xi0: BumpSpec,
    /// Fiber cutoff of Y2, applied to the squared norm.
    #[serde(default = "default_xi1")]
    pub xi1: BumpSpec,
    /// Override for the gluing bump (default: plateau epsilon/3, support epsilon/2).
    #[serde(default)]
    pub psi: Option<BumpSpec>,
    /// Override for the slowdown bump (default: plateau epsilon, support 2 epsilon).
    #[serde(default)]
    pub zeta: Option<BumpSpec>,
    /// Constant K the Hamiltonian blends to outside the plateau. Defaults
    /// to the value making the field equal to the vertical flow (speed 4
    /// in C0 units) for |a| >= 3: 41 for gain 1, 21 for gain 2.
    #[serde(default)]
    pub outer_level: Option<f64>,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            omega: default_omega(),
            ell: default_ell(),
            zeta0: 0.0,
            epsilon: default_epsilon(),
            xi0: default_xi0(),
            xi1: default_xi1(),
            psi: None,
            zeta: None,
            outer_level: None,
        }
    }

    pub fn with_ell(mut self, ell: usize) -> Self {
        self.ell = ell;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_zeta0(mut self, zeta0: f64) -> Self {
        self.zeta0 = zeta0;
        self
    }

    pub fn with_outer_level(mut self, k: f64) -> Self {
        self.outer_level = Some(k);
        self
    }

    pub fn cylinder_field(&self) -> CylinderField {
        self.family.cylinder_field()
    }

    /// Dimension of the cylinder coordinates (horizontal..., vertical).
    pub fn dim(&self) -> usize {
        self.cylinder_field().dim(self.ell)
    }

    /// Number of horizontal coordinates, which is the torus dimension of
    /// the base when the field is glued into a suspension.
    pub fn horizontal_dim(&self) -> usize {
        self.dim() - 1
    }

    pub fn resolved_outer_level(&self) -> f64 {
        self.outer_level.unwrap_or(if self.cylinder_field().vertical_gain() == 2.0 { 21.0 } else { 41.0 })
    }

    pub fn psi_bump(&self) -> BumpSpec {
        self.psi.unwrap_or(BumpSpec { plateau_end: self.epsilon / 3.0, support_end: self.epsilon / 2.0 })
    }

    pub fn zeta_bump(&self) -> BumpSpec {
        self.zeta.unwrap_or(BumpSpec { plateau_end: self.epsilon, support_end: 2.0 * self.epsilon })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.xi0.validate()?;
        self.xi1.validate()?;
        if let Some(b) = self.psi {
            b.validate()?;
        }
        if let Some(b) = self.zeta {
            b.validate()?;
        }
        if self.cylinder_field() == CylinderField::Y2 && !(self.omega > 1.0) {
            return Err(ModelError::OmegaTooSmall { omega: self.omega });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(ModelError::OmegaTooSmall { omega: self.omega });
        }
        if !(self.zeta0 >= 0.0 && self.zeta0 < 1.0) {
            return Err(ModelError::ZetaOutOfRange { zeta0: self.zeta0 });
        }
        if self.zeta0 != 0.0 && !self.family.is_slowed() {
            return Err(ModelError::ZetaWithoutSlowdown { family: self.family.name().to_string() });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / 6.0) {
            return Err(ModelError::EpsilonOutOfRange { epsilon: self.epsilon });
        }
        let psi = self.psi_bump();
        let zeta = self.zeta_bump();
        if psi.support_end >= 0.5 || zeta.support_end >= 0.5 {
            return Err(ModelError::CollarTooWide);
        }
        if let Some(k) = self.outer_level {
            if !k.is_finite() {
                return Err(ModelError::InvalidOuterLevel { k });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let m = ModelSpec::new(Family::Y2);
        assert_eq!(m.omega, 2.0);
        assert_eq!(m.zeta0, 0.0);
        assert_eq!(m.dim(), 3);
        assert!(m.validate().is_ok());
        assert_eq!(ModelSpec::new(Family::Y3Hat).with_ell(2).dim(), 5);
        assert_eq!(ModelSpec::new(Family::G0).resolved_outer_level(), 41.0);
        assert_eq!(ModelSpec::new(Family::G1).resolved_outer_level(), 21.0);
    }

    #[test]
    fn omega_domination_enforced() {
        let m = ModelSpec::new(Family::Y2).with_omega(0.5);
        assert!(matches!(m.validate(), Err(ModelError::OmegaTooSmall { .. })));
        let m = ModelSpec::new(Family::G2).with_omega(1.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn zeta_only_for_slowed_families() {
        assert!(ModelSpec::new(Family::G3).with_zeta0(0.5).validate().is_err());
        assert!(ModelSpec::new(Family::GHat3).with_zeta0(0.5).validate().is_ok());
        assert!(ModelSpec::new(Family::GHat3).with_zeta0(1.0).validate().is_err());
    }

    #[test]
    fn serde_round_trip_and_unknown_keys() {
        let m = ModelSpec::new(Family::GHat4).with_zeta0(0.25);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"Ghat4\""));
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = serde_json::from_str::<ModelSpec>(r#"{"family":"Y2","omge":3.0}"#);
        assert!(bad.unwrap_err().to_string().contains("omge"));
    }
}
