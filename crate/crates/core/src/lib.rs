//! Edge-preserving TV-L1 optical flow.
//!
//! The flow between two grayscale frames is estimated coarse-to-fine. At
//! every warp the brightness constancy constraint is linearized and the
//! resulting convex problem (L1 data term, total variation and an
//! edge-weighted divergence penalty) is solved with a Chambolle-Pock
//! primal-dual iteration. Iterated median filtering cleans the flow after
//! every warp and a patch-weighted median filter refines flow edges at the
//! end.
//!
//! ```no_run
//! use tvl1flow::{estimate_flow, io, SolverConfig};
//!
//! let f1 = io::read_image("frame10.png")?;
//! let f2 = io::read_image("frame11.png")?;
//! let result = estimate_flow(&f1, &f2, &SolverConfig::default())?;
//! io::write_flo("out.flo", &result.flow)?;
//! # Ok::<(), tvl1flow::Error>(())
//! ```

pub mod config;
pub mod error;
pub mod field;
pub mod filters;
pub mod image_ops;
pub mod io;
pub mod metrics;
pub mod pd;
pub mod pipeline;
pub mod synth;

pub use config::{
    validate_config, validate_config_with_bound, CheckedConfig, ConfigWarning, DataTerm,
    MedianMode, PyramidLevels, SolverConfig, TvProjection,
};
pub use error::{Error, Result};
pub use field::{field_linf_diff, DualField, FlowField, ScalarField};
pub use metrics::{aae, average_report, epe, EvalReport, SequenceEval, ValidMask};
pub use pipeline::{estimate_flow, Estimate};
