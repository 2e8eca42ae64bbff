//! Image primitives: bicubic sampling and warping, 5-point derivatives,
//! Gaussian smoothing, resampling, synthetic noise and PSNR.
//!
//! Every sampler uses replicated borders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};

/// Border handling for all samplers. Only edge replication is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    #[default]
    ReplicateEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Builds a field by evaluating `f(x, y)` in parallel over rows. The result
/// does not depend on the thread count since every pixel is independent.
pub(crate) fn par_from_fn(
    width: usize,
    height: usize,
    f: impl Fn(usize, usize) -> f64 + Sync,
) -> ScalarField {
    let mut data = vec![0.0; width * height];
    if width > 0 {
        data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = f(x, y);
            }
        });
    }
    ScalarField::from_vec_unchecked(width, height, data)
}

/// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 given the fractional
/// position `t` in [0, 1).
#[inline]
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Catmull-Rom bicubic interpolation of `f` at `(x, y)`. Coordinates outside
/// the grid are clamped to it.
pub fn bicubic_sample(f: &ScalarField, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (f.width() - 1) as f64);
    let y = y.clamp(0.0, (f.height() - 1) as f64);
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = catmull_rom_weights(x - x0);
    let wy = catmull_rom_weights(y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    for (j, wyj) in wy.iter().enumerate() {
        if *wyj == 0.0 {
            continue;
        }
        let yy = yi + j as isize - 1;
        let mut row = 0.0;
        for (i, wxi) in wx.iter().enumerate() {
            row += wxi * f.get_clamped(xi + i as isize - 1, yy);
        }
        acc += wyj * row;
    }
    acc
}

/// Resamples `f2` along `flow`: `out(x, y) = f2(x + u1, y + u2)`.
pub fn warp_image(f2: &ScalarField, flow: &FlowField) -> Result<ScalarField> {
    flow.check_dims(f2.dims())?;
    let (u1, u2) = (flow.u1(), flow.u2());
    Ok(par_from_fn(f2.width(), f2.height(), |x, y| {
        bicubic_sample(f2, x as f64 + u1.get(x, y), y as f64 + u2.get(x, y))
    }))
}

/// Central 5-point derivative `(f[-2] - 8 f[-1] + 8 f[+1] - f[+2]) / 12`.
pub fn derivative_5pt(f: &ScalarField, axis: Axis) -> Result<ScalarField> {
    let n = match axis {
        Axis::X => f.width(),
        Axis::Y => f.height(),
    };
    if n < 5 {
        return Err(Error::Undersized(format!(
            "5-point derivative needs at least 5 samples along {axis:?}, got {n}"
        )));
    }
    let (dx, dy) = match axis {
        Axis::X => (1, 0),
        Axis::Y => (0, 1),
    };
    Ok(par_from_fn(f.width(), f.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let s = |k: isize| f.get_clamped(x + k * dx, y + k * dy);
        (8.0 * (s(1) - s(-1)) - (s(2) - s(-2))) / 12.0
    }))
}

/// Sampled Gaussian truncated at 4 standard deviations, normalized to sum 1.
pub fn gaussian_kernel(std: f64) -> Vec<f64> {
    if std <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * std).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * std * std)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_axis(f: &ScalarField, kernel: &[f64], axis: Axis) -> ScalarField {
    let r = (kernel.len() / 2) as isize;
    par_from_fn(f.width(), f.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        kernel
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let o = i as isize - r;
                match axis {
                    Axis::X => w * f.get_clamped(x + o, y),
                    Axis::Y => w * f.get_clamped(x, y + o),
                }
            })
            .sum()
    })
}

fn gaussian_smooth_xy(f: &ScalarField, std_x: f64, std_y: f64) -> ScalarField {
    let mut out = if std_x > 0.0 {
        convolve_axis(f, &gaussian_kernel(std_x), Axis::X)
    } else {
        f.clone()
    };
    if std_y > 0.0 {
        out = convolve_axis(&out, &gaussian_kernel(std_y), Axis::Y);
    }
    out
}

/// Separable Gaussian blur. `std == 0` returns the input.
pub fn gaussian_smooth(f: &ScalarField, std: f64) -> Result<ScalarField> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing std must be non-negative, got {std}"
        )));
    }
    Ok(gaussian_smooth_xy(f, std, std))
}

/// Bicubic resampling onto a `new_w` x `new_h` grid with pixel centers
/// aligned. Downsampling along an axis is preceded by a Gaussian blur with
/// `std = 0.5 * (factor - 1)`.
pub fn resample(f: &ScalarField, new_w: usize, new_h: usize) -> Result<ScalarField> {
    if new_w < 2 || new_h < 2 {
        return Err(Error::Undersized(format!(
            "resample target {new_w}x{new_h} is below 2x2"
        )));
    }
    if (new_w, new_h) == f.dims() {
        return Ok(f.clone());
    }
    let sx = f.width() as f64 / new_w as f64;
    let sy = f.height() as f64 / new_h as f64;
    let pre_std = |s: f64| if s > 1.0 { 0.5 * (s - 1.0) } else { 0.0 };
    let src = gaussian_smooth_xy(f, pre_std(sx), pre_std(sy));
    Ok(par_from_fn(new_w, new_h, |x, y| {
        bicubic_sample(
            &src,
            (x as f64 + 0.5) * sx - 0.5,
            (y as f64 + 0.5) * sy - 0.5,
        )
    }))
}

/// Adds zero-mean Gaussian noise of the given variance and clamps to [0, 1].
pub fn add_gaussian_noise(f: &ScalarField, variance: f64, seed: u64) -> Result<ScalarField> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be non-negative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(f.clone());
    }
    let normal =
        Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = f
        .as_slice()
        .iter()
        .map(|&v| (v + rng.sample(normal)).clamp(0.0, 1.0))
        .collect();
    Ok(ScalarField::from_vec_unchecked(f.width(), f.height(), data))
}

/// Replaces each pixel with probability `density` by 0 or 1 (equally likely).
pub fn add_salt_pepper_noise(f: &ScalarField, density: f64, seed: u64) -> Result<ScalarField> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!(
            "salt-and-pepper density must lie in [0, 1], got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = f
        .as_slice()
        .iter()
        .map(|&v| {
            let hit = rng.random::<f64>() < density;
            let salt = rng.random::<bool>();
            match (hit, salt) {
                (false, _) => v,
                (true, true) => 1.0,
                (true, false) => 0.0,
            }
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(f.width(), f.height(), data))
}

/// Peak signal-to-noise ratio in dB for unit peak. Identical images give
/// `f64::INFINITY`.
pub fn psnr(clean: &ScalarField, noisy: &ScalarField) -> Result<f64> {
    clean.check_same_dims(noisy)?;
    let mse = clean
        .as_slice()
        .iter()
        .zip(noisy.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / clean.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
