//! Median-based flow and image filters.

mod median;
mod weighted;

pub use median::{iterated_median, median_filter};
pub use weighted::{liosher_weight, weighted_median, weighted_median_filter_flow, WmfParams};
