//! Press / slide / twist acquisition path.

use serde::{Deserialize, Serialize};

use crate::dataset::Pose;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// mm pressed per depth level.
    pub press_depth_step: f64,
    /// mm travelled along each lateral leg.
    pub lateral_excursion: f64,
    /// degrees.
    pub twist_angle: f64,
    /// mm; the last level sits at `z = -max_depth`.
    pub max_depth: f64,
    /// mm/s along translation legs.
    pub speed: f64,
    /// degrees/s while twisting.
    pub twist_speed: f64,
    /// Hz of the rig clock.
    pub sample_rate: f64,
    /// Keep one frame per this many clock ticks.
    pub capture_stride: usize,
    /// Seconds held at each waypoint.
    pub dwell: f64,
    /// Twist at every depth level, not just the last.
    pub twist_every_level: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            press_depth_step: 0.4,
            lateral_excursion: 2.0,
            twist_angle: 5.0,
            max_depth: 1.6,
            speed: 0.01,
            twist_speed: 0.25,
            sample_rate: 1.0,
            capture_stride: 8,
            dwell: 0.0,
            twist_every_level: true,
        }
    }
}

/// Rig pose at one captured frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigState {
    pub pose: Pose,
    /// Seconds since the initial contact point.
    pub timestamp: f64,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("press_depth_step", self.press_depth_step),
            ("lateral_excursion", self.lateral_excursion),
            ("twist_angle", self.twist_angle),
            ("max_depth", self.max_depth),
            ("speed", self.speed),
            ("twist_speed", self.twist_speed),
            ("sample_rate", self.sample_rate),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.capture_stride == 0 {
            return Err(Error::param("capture_stride", "must be at least 1"));
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0) {
            return Err(Error::param("dwell", format!("must be non-negative, got {}", self.dwell)));
        }
        let levels = self.max_depth / self.press_depth_step;
        if levels < 0.5 || (levels - levels.round()).abs() > 1e-9 * levels.max(1.0) {
            return Err(Error::param("press_depth_step", format!("must divide max_depth ({})", self.max_depth)));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        (self.max_depth / self.press_depth_step).round() as usize
    }

    /// Depth-level z values, snapped to a nanometre grid so that 3 x 0.4 reads as 1.2.
    pub fn depth_levels(&self) -> Vec<f64> {
        (1..=self.levels()).map(|k| -(k as f64 * self.press_depth_step * 1e6).round() / 1e6).collect()
    }

    fn frame_period(&self) -> f64 {
        self.capture_stride as f64 / self.sample_rate
    }
}

/// Segment endpoints of the path, starting at the initial contact point.
pub fn waypoints(cfg: &TrajectoryConfig) -> Result<Vec<Pose>> {
    cfg.validate()?;
    let e = cfg.lateral_excursion;
    let levels = cfg.depth_levels();
    let mut out = vec![Pose::default()];
    for (k, &z) in levels.iter().enumerate() {
        let p = |x, y| Pose::new(x, y, z, 0.0);
        out.extend([p(0.0, 0.0), p(0.0, e), p(e, e), p(0.0, 0.0), p(0.0, -e), p(-e, -e), p(0.0, 0.0)]);
        if cfg.twist_every_level || k + 1 == levels.len() {
            out.push(Pose::new(0.0, 0.0, z, cfg.twist_angle));
            out.push(Pose::new(0.0, 0.0, z, 0.0));
        }
    }
    Ok(out)
}

fn lerp(a: &Pose, b: &Pose, s: f64) -> Pose {
    Pose::new(a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.z + (b.z - a.z) * s, a.twist + (b.twist - a.twist) * s)
}

/// Captured frames along the path. Each constant-speed segment is split
/// into whole capture periods, so every waypoint is itself a frame.
pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<Vec<RigState>> {
    let pts = waypoints(cfg)?;
    let period = cfg.frame_period();
    let mut t = 0.0;
    let mut out = vec![RigState { pose: pts[0], timestamp: 0.0 }];
    let holds = (cfg.dwell / period).floor() as usize;
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dist = (b.x - a.x).hypot(b.y - a.y).hypot(b.z - a.z);
        let duration = dist / cfg.speed + (b.twist - a.twist).abs() / cfg.twist_speed;
        let n = ((duration / period).round() as usize).max(1);
        for i in 1..=n {
            let s = i as f64 / n as f64;
            let pose = if i == n { *b } else { lerp(a, b, s) };
            out.push(RigState { pose, timestamp: t + duration * s });
        }
        t += duration;
        for i in 1..=holds {
            out.push(RigState { pose: *b, timestamp: t + i as f64 * period });
        }
        t += cfg.dwell;
    }
    Ok(out)
}
