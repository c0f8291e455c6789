//! Phenomenological six-axis contact force.

use serde::{Deserialize, Serialize};

use crate::dataset::{ForceVector, Pose};
use crate::error::{Error, Result};
use crate::rigsim::shapes::{ContactProfile, IndenterShape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceModel {
    /// Sphere normal stiffness, N / mm^2 (scaled by sqrt of the radius, times depth^1.5).
    pub k_sphere: f64,
    /// Flat-face normal stiffness, N / mm^3 (times indented volume).
    pub k_flat: f64,
    /// Tangential stiffness, N / mm of lateral offset.
    pub k_t: f64,
    /// Torsional stiffness, N·mm / (rad·mm²).
    pub k_r: f64,
    /// Depth at which shear coupling reaches half strength, mm.
    pub shear_depth: f64,
    /// Distance from the contact face to the force sensor, mm.
    pub lever_arm: f64,
}

impl Default for ForceModel {
    fn default() -> Self {
        Self { k_sphere: 5.0, k_flat: 0.25, k_t: 3.0, k_r: 2.0, shear_depth: 0.2, lever_arm: 10.0 }
    }
}

impl ForceModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_sphere", self.k_sphere),
            ("k_flat", self.k_flat),
            ("k_t", self.k_t),
            ("k_r", self.k_r),
            ("shear_depth", self.shear_depth),
            ("lever_arm", self.lever_arm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Shear coupling in `[0, 1)`: zero out of contact, saturating with depth.
    pub fn shear_factor(&self, depth: f64) -> f64 {
        if depth <= 0.0 {
            0.0
        } else {
            depth / (depth + self.shear_depth)
        }
    }
}

/// Pressed depth in mm for a pose (`z` is negative in contact).
pub fn depth_of(pose: &Pose) -> f64 {
    (-pose.z).max(0.0)
}

/// Contact area in mm² at `depth`.
pub fn contact_area_mm2(shape: &IndenterShape, profile: &ContactProfile, depth: f64) -> f64 {
    match *shape {
        IndenterShape::Sphere { diameter } => {
            let r = diameter / 2.0;
            let d = depth.clamp(0.0, r);
            std::f64::consts::PI * (2.0 * r * d - d * d)
        }
        _ => profile.area(depth),
    }
}

/// Force for one pose, with a precomputed profile of `shape`.
pub fn contact_force_with(shape: &IndenterShape, profile: &ContactProfile, pose: &Pose, model: &ForceModel) -> ForceVector {
    let d = depth_of(pose);
    if d == 0.0 {
        return ForceVector::default();
    }
    let fz = match *shape {
        IndenterShape::Sphere { diameter } => model.k_sphere * (diameter / 2.0).sqrt() * d.powf(1.5),
        _ => model.k_flat * profile.volume(d),
    };
    let s = model.shear_factor(d);
    let fx = model.k_t * pose.x * s;
    let fy = model.k_t * pose.y * s;
    let mz = model.k_r * pose.twist.to_radians() * contact_area_mm2(shape, profile, d) * s;
    ForceVector::new(fx, fy, fz, -fy * model.lever_arm, fx * model.lever_arm, mz)
}

pub fn contact_force(shape: &IndenterShape, pose: &Pose, model: &ForceModel) -> ForceVector {
    contact_force_with(shape, &shape.profile(), pose, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: IndenterShape = IndenterShape::Sphere { diameter: 8.0 };

    #[test]
    fn zero_depth_gives_exact_zero() {
        let f = contact_force(&SPHERE, &Pose::new(1.0, 2.0, 0.0, 5.0), &ForceModel::default());
        assert_eq!(f.to_array(), [0.0; 6]);
    }

    #[test]
    fn doubling_sphere_depth_scales_fz_by_two_to_the_three_halves() {
        let m = ForceModel::default();
        let a = contact_force(&SPHERE, &Pose::new(0.0, 0.0, -0.4, 0.0), &m).fz;
        let b = contact_force(&SPHERE, &Pose::new(0.0, 0.0, -0.8, 0.0), &m).fz;
        assert!((b / a - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn centred_twist_gives_pure_torsion() {
        let f = contact_force(&SPHERE, &Pose::new(0.0, 0.0, -0.8, 5.0), &ForceModel::default());
        assert_eq!((f.fx, f.fy, f.mx, f.my), (0.0, 0.0, 0.0, 0.0));
        assert!(f.mz > 0.0);
    }

    #[test]
    fn moments_follow_the_lever_arm() {
        let m = ForceModel::default();
        let f = contact_force(&SPHERE, &Pose::new(1.0, -2.0, -1.2, 0.0), &m);
        assert!(f.fx > 0.0 && f.fy < 0.0);
        assert_eq!(f.mx, -f.fy * m.lever_arm);
        assert_eq!(f.my, f.fx * m.lever_arm);
    }
}
