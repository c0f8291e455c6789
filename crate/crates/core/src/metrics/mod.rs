//! Evaluation: image similarity, marker displacement and marker flow.

pub mod flow;
pub mod markers;
pub mod reference;
pub mod similarity;

pub use flow::{compute_flow, export_flow, render_flow, FlowField, FlowStyle, FlowVector};
pub use markers::{
    detect_markers, marker_displacement_error, match_by_assignment, DetectParams, DisplacementError, Marker, MarkerSet,
    Roi,
};
pub use similarity::{image_similarity, mae, mse, psnr, ssim, MetricReport};
