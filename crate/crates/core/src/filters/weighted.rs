//! Weighted median filtering with patch-similarity weights
//! `w(x, y) = exp(-(1/h^2) * sum_t G(t) |f(x + t) - f(y + t)|)`.

use rayon::prelude::*;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmfParams {
    /// Standard deviation of the patch Gaussian, in pixels.
    pub delta: f64,
    /// Search window half-width.
    pub radius: usize,
    /// Half-width of the compared patches.
    pub patch_radius: usize,
    /// Scale in the exponent.
    pub h: f64,
}

impl WmfParams {
    pub fn new(delta: f64, radius: usize, patch_radius: usize, h: f64) -> Result<Self> {
        if !(delta > 0.0 && h > 0.0 && delta.is_finite() && h.is_finite())
            || radius == 0
            || patch_radius == 0
        {
            return Err(Error::InvalidArgument(format!(
                "weighted median parameters must be positive: delta={delta} radius={radius} \
                 patch_radius={patch_radius} h={h}"
            )));
        }
        Ok(Self {
            delta,
            radius,
            patch_radius,
            h,
        })
    }

    pub fn from_config(cfg: &SolverConfig) -> Result<Self> {
        Self::new(
            cfg.wmf_delta,
            cfg.wmf_radius,
            cfg.wmf_patch_radius,
            cfg.wmf_h,
        )
    }
}

/// Normalized patch Gaussian with its offsets.
struct PatchKernel {
    offsets: Vec<(isize, isize)>,
    weights: Vec<f64>,
    inv_h2: f64,
}

impl PatchKernel {
    fn new(params: &WmfParams) -> Self {
        let r = params.patch_radius as isize;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for ty in -r..=r {
            for tx in -r..=r {
                offsets.push((tx, ty));
                let d2 = (tx * tx + ty * ty) as f64;
                weights.push((-d2 / (2.0 * params.delta * params.delta)).exp());
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Self {
            offsets,
            weights,
            inv_h2: 1.0 / (params.h * params.h),
        }
    }

    fn weight(&self, f: &ScalarField, a: (isize, isize), b: (isize, isize)) -> f64 {
        let dist: f64 = self
            .offsets
            .iter()
            .zip(&self.weights)
            .map(|(&(tx, ty), g)| {
                g * (f.get_clamped(a.0 + tx, a.1 + ty) - f.get_clamped(b.0 + tx, b.1 + ty)).abs()
            })
            .sum();
        (-dist * self.inv_h2).exp()
    }
}

/// Patch-similarity weight between pixels `a` and `b` of `f`.
pub fn liosher_weight(
    f: &ScalarField,
    a: (usize, usize),
    b: (usize, usize),
    params: &WmfParams,
) -> f64 {
    PatchKernel::new(params).weight(
        f,
        (a.0 as isize, a.1 as isize),
        (b.0 as isize, b.1 as isize),
    )
}

/// Minimizer of `sum_i w_i |x - v_i|` over the samples: the smallest value
/// whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::Empty("weighted median needs at least one sample"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    weighted_median_in_place(&mut pairs).ok_or(Error::Empty("total weight is zero"))
}

/// Sorts `pairs` by value and applies the cumulative-weight rule.
fn weighted_median_in_place(pairs: &mut [(f64, f64)]) -> Option<f64> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return None;
    }
    let mut cum = 0.0;
    for &(v, w) in pairs.iter() {
        cum += w;
        if 2.0 * cum >= total {
            return Some(v);
        }
    }
    pairs.last().map(|p| p.0)
}

/// Replaces each flow component by the weighted median over the
/// `(2R+1)^2` window, weighting neighbours by patch similarity in `guide`.
/// Borders are replicated.
pub fn weighted_median_filter_flow(
    flow: &FlowField,
    guide: &ScalarField,
    params: &WmfParams,
) -> Result<FlowField> {
    flow.check_dims(guide.dims())?;
    let (w, h) = flow.dims();
    let kernel = PatchKernel::new(params);
    let r = params.radius as isize;
    let n = (2 * params.radius + 1).pow(2);

    // Guide padded by the patch radius, so patches around clamped window
    // positions need no further clamping.
    let pr = params.patch_radius as isize;
    let pw = w + 2 * params.patch_radius;
    let padded: Vec<f64> = (-pr..h as isize + pr)
        .flat_map(|y| (-pr..w as isize + pr).map(move |x| (x, y)))
        .map(|(x, y)| guide.get_clamped(x, y))
        .collect();
    let offsets: Vec<isize> = kernel
        .offsets
        .iter()
        .map(|&(tx, ty)| ty * pw as isize + tx)
        .collect();
    let at = |x: isize, y: isize| ((y + pr) * pw as isize + x + pr) as usize;
    let patch_weight = |a: usize, b: usize| -> f64 {
        let mut dist = 0.0;
        for (o, g) in offsets.iter().zip(&kernel.weights) {
            let (i, j) = ((a as isize + o) as usize, (b as isize + o) as usize);
            dist += g * (padded[i] - padded[j]).abs();
        }
        (-dist * kernel.inv_h2).exp()
    };
    let (f1, f2) = (flow.u1().as_slice(), flow.u2().as_slice());

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut window = Vec::with_capacity(n);
            let mut p1 = Vec::with_capacity(n);
            let mut p2 = Vec::with_capacity(n);
            let mut o1 = Vec::with_capacity(w);
            let mut o2 = Vec::with_capacity(w);
            for x in 0..w {
                let (cx, cy) = (x as isize, y as isize);
                let here = y * w + x;
                window.clear();
                for dy in -r..=r {
                    let ny = (cy + dy).clamp(0, h as isize - 1);
                    for dx in -r..=r {
                        let nx = (cx + dx).clamp(0, w as isize - 1);
                        window.push((ny as usize * w + nx as usize, at(nx, ny)));
                    }
                }
                // A window of identical values needs no weights.
                if window
                    .iter()
                    .all(|&(k, _)| f1[k] == f1[here] && f2[k] == f2[here])
                {
                    o1.push(f1[here]);
                    o2.push(f2[here]);
                    continue;
                }
                p1.clear();
                p2.clear();
                let centre = at(cx, cy);
                for &(k, pk) in &window {
                    let wt = patch_weight(centre, pk);
                    p1.push((f1[k], wt));
                    p2.push((f2[k], wt));
                }
                // the centre pixel always has weight 1, so the total is positive
                o1.push(weighted_median_in_place(&mut p1).unwrap_or(f1[here]));
                o2.push(weighted_median_in_place(&mut p2).unwrap_or(f2[here]));
            }
            (o1, o2)
        })
        .collect();

    let mut u1 = Vec::with_capacity(w * h);
    let mut u2 = Vec::with_capacity(w * h);
    for (a, b) in rows {
        u1.extend(a);
        u2.extend(b);
    }
    FlowField::new(
        ScalarField::from_vec_unchecked(w, h, u1),
        ScalarField::from_vec_unchecked(w, h, u2),
    )
}
