use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::image_ops::resample;

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "median window must be odd and >= 3, got {window}"
        )));
    }
    Ok(())
}

/// Lower-middle order statistic of `buf` (reorders it).
pub(crate) fn lower_median(buf: &mut [f64]) -> f64 {
    let mid = (buf.len() - 1) / 2;
    *buf.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// `window` x `window` median with replicated borders.
pub fn median_filter(f: &ScalarField, window: usize) -> Result<ScalarField> {
    check_window(window)?;
    let (w, h) = f.dims();
    let r = (window / 2) as isize;
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let mut buf = Vec::with_capacity(window * window);
            for (x, out) in row.iter_mut().enumerate() {
                buf.clear();
                for dy in -r..=r {
                    for dx in -r..=r {
                        buf.push(f.get_clamped(x as isize + dx, y as isize + dy));
                    }
                }
                *out = lower_median(&mut buf);
            }
        });
    Ok(ScalarField::from_vec_unchecked(w, h, data))
}

/// Two-stage iterated median: median with `coarse_window` on a copy
/// downsampled by `spacing`, bicubic upsampling back to full size (clamped to
/// the input's value range), then a median with `fine_window`.
pub fn iterated_median(
    f: &ScalarField,
    coarse_window: usize,
    fine_window: usize,
    spacing: f64,
) -> Result<ScalarField> {
    check_window(coarse_window)?;
    check_window(fine_window)?;
    if !(spacing.is_finite() && spacing > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "downsampling factor must exceed 1, got {spacing}"
        )));
    }
    let (w, h) = f.dims();
    let cw = (w as f64 / spacing).round() as usize;
    let ch = (h as f64 / spacing).round() as usize;
    if cw < 2 || ch < 2 {
        return Err(Error::Undersized(format!(
            "{w}x{h} cannot be downsampled by {spacing}"
        )));
    }
    let coarse = median_filter(&resample(f, cw, ch)?, coarse_window)?;
    let (lo, hi) = (f.min(), f.max());
    let up = resample(&coarse, w, h)?.map(|v| v.clamp(lo, hi));
    median_filter(&up, fine_window)
}
