//! Coarse-to-fine warping driver.

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, ConfigWarning, MedianMode, PyramidLevels, SolverConfig};
use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};
use crate::filters::{median_filter, weighted_median_filter_flow, WmfParams};
use crate::image_ops::{derivative_5pt, resample, warp_image, Axis};
use crate::pd::{perona_malik_weight, solve_from, LinearizedData};

/// Smallest image side accepted by [`estimate_flow`].
pub const MIN_INPUT_SIDE: usize = 16;
/// Smallest side of any pyramid level.
pub const MIN_LEVEL_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub f1: ScalarField,
    pub f2: ScalarField,
    /// 0 is the coarsest level.
    pub level_index: usize,
    /// Width of this level relative to the input width.
    pub scale: f64,
}

impl PyramidLevel {
    pub fn dims(&self) -> (usize, usize) {
        self.f1.dims()
    }
}

/// `1 + floor(log(min(m, n) / 16) / log(spacing))`, clamped to `[1, cap]`.
pub fn pyramid_levels_auto(m: usize, n: usize, spacing: f64, cap: usize) -> Result<usize> {
    let side = m.min(n);
    if side < MIN_INPUT_SIDE {
        return Err(Error::Undersized(format!(
            "{m}x{n}: both sides must be at least {MIN_INPUT_SIDE}"
        )));
    }
    if !(spacing.is_finite() && spacing > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pyramid spacing must exceed 1, got {spacing}"
        )));
    }
    let ratio = (side as f64 / MIN_INPUT_SIDE as f64).ln() / spacing.ln();
    // nudge so that exact powers of the spacing are not lost to rounding
    let levels = 1 + (ratio + 1e-9).floor() as usize;
    Ok(levels.clamp(1, cap.max(1)))
}

fn level_count(cfg: &SolverConfig, w: usize, h: usize) -> Result<usize> {
    match cfg.pyramid_levels {
        PyramidLevels::Auto => {
            pyramid_levels_auto(w, h, cfg.pyramid_spacing, cfg.pyramid_max_levels)
        }
        PyramidLevels::Fixed(n) => Ok(n.max(1)),
    }
}

fn scaled_size(side: usize, spacing: f64) -> usize {
    (side as f64 / spacing).round() as usize
}

/// Image pyramid ordered coarsest first; each level is resampled from the
/// next finer one and the last level is the input pair.
pub fn build_pyramid(
    f1: &ScalarField,
    f2: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Vec<PyramidLevel>> {
    f1.check_same_dims(f2)?;
    let (w0, h0) = f1.dims();
    let count = level_count(cfg, w0, h0)?;
    let mut fine_to_coarse = vec![(f1.clone(), f2.clone())];
    for _ in 1..count {
        let (a, b) = fine_to_coarse.last().expect("non-empty");
        let (w, h) = a.dims();
        let (nw, nh) = (
            scaled_size(w, cfg.pyramid_spacing),
            scaled_size(h, cfg.pyramid_spacing),
        );
        if nw < MIN_LEVEL_SIDE || nh < MIN_LEVEL_SIDE {
            return Err(Error::Undersized(format!(
                "{count} pyramid levels reduce {w0}x{h0} below {MIN_LEVEL_SIDE} pixels"
            )));
        }
        let next = (resample(a, nw, nh)?, resample(b, nw, nh)?);
        fine_to_coarse.push(next);
    }
    Ok(fine_to_coarse
        .into_iter()
        .rev()
        .enumerate()
        .map(|(level_index, (f1, f2))| PyramidLevel {
            scale: f1.width() as f64 / w0 as f64,
            f1,
            f2,
            level_index,
        })
        .collect())
}

/// `(r * fw_x + (1 - r) * f1_x, r * fw_y + (1 - r) * f1_y)`.
pub fn blend_derivatives(
    fw_x: &ScalarField,
    fw_y: &ScalarField,
    f1_x: &ScalarField,
    f1_y: &ScalarField,
    r: f64,
) -> Result<(ScalarField, ScalarField)> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "blend ratio {r} outside [0, 1]"
        )));
    }
    let mix = |a: f64, b: f64| r * a + (1.0 - r) * b;
    Ok((fw_x.zip_map(f1_x, mix)?, fw_y.zip_map(f1_y, mix)?))
}

/// Linearizes brightness constancy around `flow`: warps the second frame
/// and its derivatives, forms `ft = f2(x + flow) - f1` and the blended
/// gradient, and evaluates the edge weight on that gradient.
pub fn linearize_at(
    level: &PyramidLevel,
    flow: &FlowField,
    cfg: &SolverConfig,
) -> Result<LinearizedData> {
    flow.check_dims(level.dims())?;
    let f1x = derivative_5pt(&level.f1, Axis::X)?;
    let f1y = derivative_5pt(&level.f1, Axis::Y)?;
    let f2x = derivative_5pt(&level.f2, Axis::X)?;
    let f2y = derivative_5pt(&level.f2, Axis::Y)?;
    let f2w = warp_image(&level.f2, flow)?;
    let fwx = warp_image(&f2x, flow)?;
    let fwy = warp_image(&f2y, flow)?;
    let ft = f2w.zip_map(&level.f1, |a, b| a - b)?;
    let (fx, fy) = blend_derivatives(&fwx, &fwy, &f1x, &f1y, cfg.blend_r)?;
    let phi = perona_malik_weight(&fx.zip_map(&fy, f64::hypot)?, cfg.kappa);
    LinearizedData::new(fx, fy, ft, phi)
}

/// Resizes a flow field, scaling each component by the size ratio along
/// its axis.
pub fn upsample_flow(flow: &FlowField, width: usize, height: usize) -> Result<FlowField> {
    let (w, h) = flow.dims();
    let sx = width as f64 / w as f64;
    let sy = height as f64 / h as f64;
    FlowField::new(
        resample(flow.u1(), width, height)?.map(|v| v * sx),
        resample(flow.u2(), width, height)?.map(|v| v * sy),
    )
}

/// Per-warp median filter. In iterated mode the two stages are spread over
/// the pyramid: the coarse window on every level below the finest (whose
/// result the pyramid upsamples), the fine window on the finest level.
fn median_flow(flow: FlowField, cfg: &SolverConfig, finest: bool) -> Result<FlowField> {
    let window = match cfg.median_mode {
        MedianMode::Off => return Ok(flow),
        MedianMode::Single => cfg.median_coarse,
        MedianMode::Iterated if finest => cfg.median_fine,
        MedianMode::Iterated => cfg.median_coarse,
    };
    FlowField::new(
        median_filter(flow.u1(), window)?,
        median_filter(flow.u2(), window)?,
    )
}

fn check_finite(flow: &FlowField) -> Result<()> {
    let n = flow.u1().len();
    let bad = flow
        .u1()
        .as_slice()
        .iter()
        .chain(flow.u2().as_slice())
        .position(|v| !v.is_finite());
    match bad {
        Some(i) => Err(Error::NonFinite { index: i % n }),
        None => Ok(()),
    }
}

/// Normalized-error trace of one primal-dual solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpTrace {
    pub level: usize,
    pub warp: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub flow: FlowField,
    pub traces: Vec<WarpTrace>,
    pub warnings: Vec<ConfigWarning>,
}

impl Estimate {
    /// All solver traces concatenated in execution order.
    pub fn concatenated_trace(&self) -> Vec<f64> {
        self.traces
            .iter()
            .flat_map(|t| t.trace.iter().copied())
            .collect()
    }
}

/// Estimates the flow from `f1` to `f2`, so that `f2(x + u(x)) ~ f1(x)`.
///
/// Each warp linearizes around the current flow and solves for the updated
/// flow, starting the primal iterate there with zeroed duals; the TV term
/// therefore acts on the accumulated flow rather than on the increment.
pub fn estimate_flow(f1: &ScalarField, f2: &ScalarField, cfg: &SolverConfig) -> Result<Estimate> {
    let checked = validate_config(cfg)?;
    f1.check_same_dims(f2)?;
    let (w, h) = f1.dims();
    if w.min(h) < MIN_INPUT_SIDE {
        return Err(Error::Undersized(format!(
            "{w}x{h}: both sides must be at least {MIN_INPUT_SIDE}"
        )));
    }
    let pyramid = build_pyramid(f1, f2, cfg)?;
    let (cw, ch) = pyramid[0].dims();
    let mut flow = FlowField::zeros(cw, ch);
    let mut traces = Vec::new();
    let finest = pyramid.len() - 1;
    for (li, level) in pyramid.iter().enumerate() {
        let (lw, lh) = level.dims();
        if flow.dims() != (lw, lh) {
            flow = upsample_flow(&flow, lw, lh)?;
        }
        for warp in 0..cfg.warps_per_level {
            let lin = linearize_at(level, &flow, cfg)?.with_base_flow(&flow)?;
            let outcome = solve_from(&lin, flow, cfg)?;
            log::debug!(
                "level {} ({lw}x{lh}) warp {warp}: {} iterations, final error {:.3e}",
                level.level_index,
                outcome.trace.len(),
                outcome.trace.last().copied().unwrap_or(0.0)
            );
            check_finite(&outcome.flow)?;
            flow = median_flow(outcome.flow, cfg, li == finest)?;
            traces.push(WarpTrace {
                level: level.level_index,
                warp,
                trace: outcome.trace,
            });
        }
    }
    if cfg.wmf_enabled {
        flow = weighted_median_filter_flow(&flow, f1, &WmfParams::from_config(cfg)?)?;
    }
    Ok(Estimate {
        flow,
        traces,
        warnings: checked.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::epe;
    use crate::synth::{interior_mask, make_ball_sequence, BallSpec};

    fn texture(w: usize, h: usize, dx: f64) -> ScalarField {
        ScalarField::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - dx, y as f64);
            0.5 + 0.2 * (0.3 * x).sin() * (0.25 * y).cos() + 0.15 * (0.11 * x + 0.17 * y).sin()
        })
    }

    #[test]
    fn level_formula() {
        assert_eq!(pyramid_levels_auto(584, 388, 2.0, 5).unwrap(), 5);
        assert_eq!(pyramid_levels_auto(64, 64, 2.0, 5).unwrap(), 3);
        assert_eq!(pyramid_levels_auto(16, 300, 2.0, 5).unwrap(), 1);
        assert_eq!(pyramid_levels_auto(16, 16, 1.5, 5).unwrap(), 1);
        assert_eq!(pyramid_levels_auto(4096, 4096, 2.0, 5).unwrap(), 5);
        assert!(pyramid_levels_auto(15, 100, 2.0, 5).is_err());
        assert!(pyramid_levels_auto(100, 100, 1.0, 5).is_err());
    }

    #[test]
    fn pyramid_sizes_and_constants() {
        let f = ScalarField::filled(64, 64, 0.4);
        let levels = build_pyramid(&f, &f, &SolverConfig::default()).unwrap();
        let sides: Vec<usize> = levels.iter().map(|l| l.f1.width()).collect();
        assert_eq!(sides, vec![16, 32, 64]);
        assert_eq!(levels[2].f1, f);
        assert_eq!(levels[0].scale, 0.25);
        for l in &levels {
            assert!(l.f1.as_slice().iter().all(|&v| (v - 0.4).abs() < 1e-12));
        }
        let one = SolverConfig {
            pyramid_levels: PyramidLevels::Fixed(1),
            ..SolverConfig::default()
        };
        let levels = build_pyramid(&f, &f, &one).unwrap();
        assert_eq!(levels.len(), 1);
        assert!(build_pyramid(&f, &ScalarField::zeros(32, 64), &one).is_err());
    }

    #[test]
    fn blend_examples() {
        let one = ScalarField::filled(2, 2, 1.0);
        let zero = ScalarField::zeros(2, 2);
        assert_eq!(
            blend_derivatives(&one, &one, &zero, &zero, 1.0).unwrap().0,
            one
        );
        assert_eq!(
            blend_derivatives(&one, &one, &zero, &zero, 0.0).unwrap().1,
            zero
        );
        let (x, _) = blend_derivatives(&one, &one, &zero, &zero, 0.5).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.5));
        assert!(blend_derivatives(&one, &one, &zero, &zero, 1.5).is_err());
    }

    #[test]
    fn linearize_examples() {
        let cfg = SolverConfig::default();
        let f = texture(20, 20, 0.0);
        let level = PyramidLevel {
            f1: f.clone(),
            f2: f,
            level_index: 0,
            scale: 1.0,
        };
        let lin = linearize_at(&level, &FlowField::zeros(20, 20), &cfg).unwrap();
        assert!(lin.ft.as_slice().iter().all(|&v| v == 0.0));

        let c = ScalarField::filled(20, 20, 0.3);
        let level = PyramidLevel {
            f1: c.clone(),
            f2: c,
            level_index: 0,
            scale: 1.0,
        };
        let lin = linearize_at(&level, &FlowField::uniform(20, 20, 1.3, -0.2), &cfg).unwrap();
        assert!(lin.fx.as_slice().iter().all(|&v| v.abs() < 1e-12));
        assert!(lin.phi.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn linearize_ball_ground_truth() {
        let spec = BallSpec::new(64, 20.0, 3.0, 1.0, 0.0).centered(true);
        let s = make_ball_sequence(&spec).unwrap();
        let level = PyramidLevel {
            f1: s.f1,
            f2: s.f2,
            level_index: 0,
            scale: 1.0,
        };
        let lin = linearize_at(&level, &s.ground_truth, &SolverConfig::default()).unwrap();
        let (mut sum, mut n) = (0.0, 0.0);
        for y in 0..64 {
            for x in 0..64 {
                if s.mask.get(x, y) {
                    sum += lin.ft.get(x, y).abs();
                    n += 1.0;
                }
            }
        }
        assert!(sum / n < 0.02, "{}", sum / n);
    }

    #[test]
    fn upsampling_scales_values() {
        let f = upsample_flow(&FlowField::uniform(8, 6, 1.0, -0.5), 16, 12).unwrap();
        for (a, b) in f.u1().as_slice().iter().zip(f.u2().as_slice()) {
            assert!((a - 2.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let f = texture(40, 32, 0.0);
        let est = estimate_flow(&f, &f, &SolverConfig::default()).unwrap();
        let e = epe(&est.flow, &FlowField::zeros(40, 32), None).unwrap();
        assert!(e < 0.05, "{e}");
        assert_eq!(est.traces.len(), 2 * 10);
    }

    #[test]
    fn recovers_textured_translation() {
        let f1 = texture(48, 48, 0.0);
        let f2 = texture(48, 48, 1.5);
        let est = estimate_flow(&f1, &f2, &SolverConfig::default()).unwrap();
        let mask = crate::metrics::ValidMask::from_fn(48, 48, |x, y| {
            (6..42).contains(&x) && (6..42).contains(&y)
        });
        let e = epe(
            &est.flow,
            &FlowField::uniform(48, 48, 1.5, 0.0),
            Some(&mask),
        )
        .unwrap();
        assert!(e < 0.2, "{e}");
    }

    #[test]
    fn small_ball() {
        let spec = BallSpec::new(64, 22.0, 3.0, 1.0, 0.0).centered(true);
        let s = make_ball_sequence(&spec).unwrap();
        let est = estimate_flow(&s.f1, &s.f2, &SolverConfig::default()).unwrap();
        let mask = interior_mask(&spec, 6.0).unwrap();
        let e = epe(&est.flow, &s.ground_truth, Some(&mask)).unwrap();
        assert!(e < 0.5, "{e}");
    }

    #[test]
    fn deterministic_and_validated() {
        let f1 = texture(32, 32, 0.0);
        let f2 = texture(32, 32, 0.7);
        let cfg = SolverConfig {
            warps_per_level: 3,
            ..SolverConfig::default()
        };
        let a = estimate_flow(&f1, &f2, &cfg).unwrap();
        let b = estimate_flow(&f1, &f2, &cfg).unwrap();
        assert_eq!(a.flow, b.flow);
        assert_eq!(a.concatenated_trace(), b.concatenated_trace());
        assert!(estimate_flow(&f1, &texture(32, 30, 0.0), &cfg).is_err());
        let small = texture(12, 40, 0.0);
        assert!(matches!(
            estimate_flow(&small, &small, &cfg),
            Err(Error::Undersized(_))
        ));
        let bad = SolverConfig { tau: -1.0, ..cfg };
        assert!(estimate_flow(&f1, &f2, &bad).is_err());
    }
}
