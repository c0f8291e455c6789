//! Figures reported for a real RGB-light sensor dataset. They are only
//! comparable on that data and serve as documentation, not test targets.

use crate::metrics::similarity::MetricReport;

pub const RGB_LIGHT_REPORT: MetricReport = MetricReport { mse: 21.00, mae: 3.39, ssim: 0.97, psnr: 36.62 };

/// Summed marker displacement over the central grid, px.
pub const MARKER_D_SUM: f64 = 91.0;
/// The same figure quoted per marker, px.
pub const MARKER_D_MEAN: f64 = 0.28;
pub const MARKER_GRID: (usize, usize) = (18, 18);
