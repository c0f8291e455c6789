//! Parametric indenters described in their own frame (mm, origin at the
//! lowest point of the contact face, y pointing the same way as image rows).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius of the rounding on the rim of flat faces, mm.
pub const EDGE_RADIUS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndenterShape {
    Sphere { diameter: f64 },
    Square { edge: f64 },
    Ring { outer_diameter: f64, inner_diameter: f64 },
    /// `size` is the tip-to-lobe height.
    Heart { size: f64 },
    /// Square plate whose face carries a sinusoidal bump texture.
    TexturedPlate { edge: f64, amplitude: f64, period: f64 },
}

/// A shape with the name used in record ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub name: String,
    pub shape: IndenterShape,
}

/// The six objects of the default acquisition set.
pub fn default_shapes() -> Vec<ShapeSpec> {
    let s = |name: &str, shape| ShapeSpec { name: name.into(), shape };
    vec![
        s("sphere8", IndenterShape::Sphere { diameter: 8.0 }),
        s("sphere5", IndenterShape::Sphere { diameter: 5.0 }),
        s("square", IndenterShape::Square { edge: 6.0 }),
        s("ring", IndenterShape::Ring { outer_diameter: 8.0, inner_diameter: 4.0 }),
        s("heart", IndenterShape::Heart { size: 7.0 }),
        s("textured", IndenterShape::TexturedPlate { edge: 6.0, amplitude: 0.3, period: 1.5 }),
    ]
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

fn sd_box(u: f64, v: f64, half: f64) -> f64 {
    let (qx, qy) = (u.abs() - half, v.abs() - half);
    qx.max(0.0).hypot(qy.max(0.0)) + qx.max(qy).min(0.0)
}

/// Exact heart distance for a unit heart with its tip at the origin and lobes towards +y.
fn sd_heart_unit(x: f64, y: f64) -> f64 {
    let x = x.abs();
    if y + x > 1.0 {
        return (x - 0.25).hypot(y - 0.75) - std::f64::consts::SQRT_2 / 4.0;
    }
    let a = x * x + (y - 1.0).powi(2);
    let m = 0.5 * (x + y).max(0.0);
    let b = (x - m).powi(2) + (y - m).powi(2);
    a.min(b).sqrt() * (x - y).signum()
}

impl IndenterShape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IndenterShape::Sphere { diameter } => positive("diameter", diameter),
            IndenterShape::Square { edge } => positive("edge", edge),
            IndenterShape::Ring { outer_diameter, inner_diameter } => {
                positive("outer_diameter", outer_diameter)?;
                positive("inner_diameter", inner_diameter)?;
                if inner_diameter >= outer_diameter {
                    return Err(Error::param("inner_diameter", "must be smaller than outer_diameter"));
                }
                Ok(())
            }
            IndenterShape::Heart { size } => positive("size", size),
            IndenterShape::TexturedPlate { edge, amplitude, period } => {
                positive("edge", edge)?;
                positive("amplitude", amplitude)?;
                positive("period", period)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            IndenterShape::Sphere { .. } => "sphere",
            IndenterShape::Square { .. } => "square",
            IndenterShape::Ring { .. } => "ring",
            IndenterShape::Heart { .. } => "heart",
            IndenterShape::TexturedPlate { .. } => "textured_plate",
        }
    }

    /// Signed distance to the outline of the face in the sensor plane (negative inside).
    pub fn signed_distance(&self, u: f64, v: f64) -> f64 {
        match *self {
            IndenterShape::Sphere { diameter } => u.hypot(v) - diameter / 2.0,
            IndenterShape::Square { edge } | IndenterShape::TexturedPlate { edge, .. } => sd_box(u, v, edge / 2.0),
            IndenterShape::Ring { outer_diameter, inner_diameter } => {
                let r = u.hypot(v);
                (r - outer_diameter / 2.0).max(inner_diameter / 2.0 - r)
            }
            IndenterShape::Heart { size } => {
                // unit heart is ~1.06 tall; centre it on the origin with the tip at +v
                let s = size / 1.06;
                s * sd_heart_unit(u / s, -v / s + 0.5)
            }
        }
    }

    /// Height of the face above its lowest point at `(u, v)`; zero where it
    /// touches first, growing continuously outside the outline.
    pub fn gap(&self, u: f64, v: f64) -> f64 {
        match *self {
            IndenterShape::Sphere { diameter } => {
                let r_s = diameter / 2.0;
                let r = u.hypot(v);
                if r <= r_s {
                    r_s - (r_s * r_s - r * r).sqrt()
                } else {
                    r
                }
            }
            IndenterShape::TexturedPlate { amplitude, period, .. } => {
                let tau = std::f64::consts::TAU;
                let texture = 0.5 * amplitude * (1.0 - (tau * u / period).cos() * (tau * v / period).cos());
                self.rim(u, v) + texture
            }
            _ => self.rim(u, v),
        }
    }

    fn rim(&self, u: f64, v: f64) -> f64 {
        let d = self.signed_distance(u, v).max(0.0);
        d * d / (2.0 * EDGE_RADIUS)
    }

    /// Half-size of a square centred on the origin that contains the face.
    pub fn extent(&self) -> f64 {
        match *self {
            IndenterShape::Sphere { diameter } => diameter / 2.0,
            IndenterShape::Square { edge } | IndenterShape::TexturedPlate { edge, .. } => edge / 2.0,
            IndenterShape::Ring { outer_diameter, .. } => outer_diameter / 2.0,
            IndenterShape::Heart { size } => 0.6 * size,
        }
    }

    /// Sorted gap samples on a fixed grid over the face, for area and
    /// volume integrals as functions of depth.
    pub fn profile(&self) -> ContactProfile {
        const CELL: f64 = 0.05;
        let half = self.extent() + 1.0;
        let n = (2.0 * half / CELL).ceil() as usize;
        let mut gaps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = -half + (j as f64 + 0.5) * CELL;
                let v = -half + (i as f64 + 0.5) * CELL;
                gaps.push(self.gap(u, v));
            }
        }
        gaps.sort_by(f64::total_cmp);
        ContactProfile { gaps, cell_area: CELL * CELL }
    }
}

/// Depth-indexed contact integrals of one shape.
#[derive(Clone, Debug)]
pub struct ContactProfile {
    gaps: Vec<f64>,
    cell_area: f64,
}

/// Depth over which the contact indicator ramps from 0 to 1, mm.
const AREA_RAMP: f64 = 0.02;

impl ContactProfile {
    fn touching(&self, depth: f64) -> &[f64] {
        let n = self.gaps.partition_point(|&g| g < depth);
        &self.gaps[..n]
    }

    /// Contact area in mm², with a short linear ramp so it is continuous in depth.
    pub fn area(&self, depth: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        self.touching(depth).iter().map(|g| ((depth - g) / AREA_RAMP).min(1.0)).sum::<f64>() * self.cell_area
    }

    /// Indented volume `∫ max(0, depth - gap) dA` in mm³.
    pub fn volume(&self, depth: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        self.touching(depth).iter().map(|g| depth - g).sum::<f64>() * self.cell_area
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_distances_on_known_points() {
        let sq = IndenterShape::Square { edge: 4.0 };
        assert_eq!(sq.signed_distance(0.0, 0.0), -2.0);
        assert_eq!(sq.signed_distance(3.0, 0.0), 1.0);
        assert!((sq.signed_distance(3.0, 3.0) - 2f64.sqrt()).abs() < 1e-12);
        let ring = IndenterShape::Ring { outer_diameter: 8.0, inner_diameter: 4.0 };
        assert_eq!(ring.signed_distance(0.0, 0.0), 2.0);
        assert_eq!(ring.signed_distance(3.0, 0.0), -1.0);
        let heart = IndenterShape::Heart { size: 7.0 };
        assert!(heart.signed_distance(0.0, 0.0) < 0.0);
        assert!(heart.signed_distance(0.0, 5.0) > 0.0);
        assert!(heart.signed_distance(5.0, 0.0) > 0.0);
    }

    #[test]
    fn gap_is_zero_at_first_contact_and_continuous() {
        for spec in default_shapes() {
            let s = spec.shape;
            s.validate().unwrap();
            let min = s.profile().gaps[0];
            // grid cells need not land on texture peaks
            assert!(min.abs() < 5e-3, "{}: {min}", spec.name);
            let h = 1e-6;
            for k in 0..400 {
                let (u, v) = (-s.extent() - 0.5 + k as f64 * 0.031, 0.37 - k as f64 * 0.017);
                assert!((s.gap(u + h, v) - s.gap(u, v)).abs() < 1e-3, "{} at {u},{v}", spec.name);
            }
        }
    }

    #[test]
    fn flat_punch_volume_is_depth_times_area() {
        let s = IndenterShape::Square { edge: 4.0 };
        let p = s.profile();
        // the rounded rim adds a thin band; stay shallow so it is negligible
        let d = 0.01;
        assert!((p.volume(d) - 16.0 * d).abs() / (16.0 * d) < 0.05);
        assert_eq!(p.volume(0.0), 0.0);
        assert_eq!(p.area(0.0), 0.0);
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        let e = IndenterShape::Ring { outer_diameter: 4.0, inner_diameter: 6.0 }.validate().unwrap_err();
        assert!(e.to_string().contains("inner_diameter"));
        assert!(IndenterShape::Sphere { diameter: -1.0 }.validate().unwrap_err().to_string().contains("diameter"));
    }
}
