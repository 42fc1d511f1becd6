//! Planar composite mass model of the quadruped with its roller arm, used for
//! CoM projection and support polygons during intermediate motions.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Limb order shared with the contact sequencer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Limb {
    Wheel,
    FL,
    FR,
    BL,
    BR,
}

impl Limb {
    pub const ALL: [Limb; 5] = [Limb::Wheel, Limb::FL, Limb::FR, Limb::BL, Limb::BR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Limb::Wheel => "wheel",
            Limb::FL => "FL",
            Limb::FR => "FR",
            Limb::BL => "BL",
            Limb::BR => "BR",
        }
    }
}

/// Body frame masses. Limb configuration is the planar contact-point offset
/// of each limb in the body frame, stacked as `q = [wheel, FL, FR, BL, BR]`
/// (two entries each). Each limb's mass sits halfway between its anchor and
/// its contact point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarComposite {
    pub body_mass: f64,
    pub body_com: [f64; 2],
    pub limb_mass: [f64; 5],
    pub anchors: [[f64; 2]; 5],
}

impl Default for PlanarComposite {
    fn default() -> Self {
        Self {
            body_mass: 12.0,
            body_com: [0.04, 0.0],
            limb_mass: [2.5, 1.5, 1.5, 1.5, 1.5],
            anchors: [[0.25, 0.0], [0.18, 0.13], [0.18, -0.13], [-0.18, 0.13], [-0.18, -0.13]],
        }
    }
}

impl PlanarComposite {
    pub const CONFIG_DIM: usize = 10;

    pub fn total_mass(&self) -> f64 {
        self.body_mass + self.limb_mass.iter().sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.body_mass > 0.0) || self.limb_mass.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("composite masses must be positive".into()));
        }
        Ok(())
    }

    pub fn contact_point(q: &DVector<f64>, limb: Limb) -> Vector2<f64> {
        let i = 2 * limb.index();
        Vector2::new(q[i], q[i + 1])
    }

    /// Projected CoM in the body frame.
    pub fn com(&self, q: &DVector<f64>) -> Vector2<f64> {
        let mut acc = Vector2::from(self.body_com) * self.body_mass;
        for limb in Limb::ALL {
            let i = limb.index();
            let mid = (Vector2::from(self.anchors[i]) + Self::contact_point(q, limb)) * 0.5;
            acc += mid * self.limb_mass[i];
        }
        acc / self.total_mass()
    }

    /// Configuration with every contact directly at its anchor.
    pub fn nominal_configuration(&self) -> DVector<f64> {
        DVector::from_iterator(Self::CONFIG_DIM, self.anchors.iter().flatten().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn com_is_mass_weighted_mean() {
        let m = PlanarComposite::default();
        let q = m.nominal_configuration();
        // limbs at their anchors: symmetric legs cancel
        let c = m.com(&q);
        assert_relative_eq!(c.x, (12.0 * 0.04 + 2.5 * 0.25) / m.total_mass(), epsilon = 1e-15);
        assert_relative_eq!(c.y, 0.0, epsilon = 1e-15);

        let mut moved = q.clone();
        moved[0] += 0.2;
        let d = m.com(&moved) - c;
        assert_relative_eq!(d.x, 0.5 * 2.5 * 0.2 / m.total_mass(), epsilon = 1e-15);
    }
}
