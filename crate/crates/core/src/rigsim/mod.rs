//! Synthetic acquisition rig: parametric indenters pressed along the
//! press / slide / twist path, with phenomenological forces and images.
//!
//! Nothing here is physically calibrated. The models only need to be
//! continuous, monotone where contact grows, and deterministic, so that the
//! generated datasets can serve as oracles for training and evaluation.

pub mod force;
pub mod generate;
pub mod render;
pub mod shapes;
pub mod trajectory;

pub use force::{contact_force, contact_force_with, ForceModel};
pub use generate::{generate_dataset, simulate_records, write_dataset, MANIFEST_FILE};
pub use render::{contact_area, dot_grid_image, render_object, render_tactile, render_tactile_with, Light, MarkerGrid, RenderConfig};
pub use shapes::{default_shapes, IndenterShape, ShapeSpec};
pub use trajectory::{generate_trajectory, waypoints, RigState, TrajectoryConfig};
