//! File formats: grayscale images, Middlebury `.flo`, flow color rendering
//! and the run manifest.

mod color;
mod flo;
mod image;
mod manifest;

pub use color::{flow_to_color, magnitude_percentile};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC, FLO_TAG};
pub use image::{read_image, write_png_gray};
pub use manifest::{InputRecord, RunManifest, RunMetrics};
