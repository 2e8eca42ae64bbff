//! The linear operator `K u = (grad u1, grad u2, phi * div u)` and its adjoint.
//!
//! Gradients use forward differences with a zero difference on the last
//! column/row. The adjoint uses the matching backward differences so that
//! `<K u, d> = <u, K* d>` holds to rounding error.

use crate::error::Result;
use crate::field::{DualField, FlowField, ScalarField};

/// Edge-stopping weight `kappa^2 / (kappa^2 + g^2)` per pixel.
pub fn perona_malik_weight(grad_mag: &ScalarField, kappa: f64) -> ScalarField {
    let k2 = kappa * kappa;
    grad_mag.map(|g| k2 / (k2 + g * g))
}

pub(crate) fn forward_x(u: &ScalarField) -> Vec<f64> {
    let (w, h) = u.dims();
    let s = u.as_slice();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = y * w;
        for x in 0..w.saturating_sub(1) {
            out[row + x] = s[row + x + 1] - s[row + x];
        }
    }
    out
}

pub(crate) fn forward_y(u: &ScalarField) -> Vec<f64> {
    let (w, h) = u.dims();
    let s = u.as_slice();
    let mut out = vec![0.0; w * h];
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            out[y * w + x] = s[(y + 1) * w + x] - s[y * w + x];
        }
    }
    out
}

/// Adds the transpose of `forward_x` applied to `p` into `acc`.
fn add_forward_x_transpose(p: &[f64], w: usize, h: usize, acc: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let mut v = 0.0;
            if x >= 1 {
                v += p[row + x - 1];
            }
            if x + 1 < w {
                v -= p[row + x];
            }
            acc[row + x] += v;
        }
    }
}

fn add_forward_y_transpose(p: &[f64], w: usize, h: usize, acc: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            if y >= 1 {
                v += p[(y - 1) * w + x];
            }
            if y + 1 < h {
                v -= p[y * w + x];
            }
            acc[y * w + x] += v;
        }
    }
}

/// Applies `K` to the flow.
pub fn apply_k(u: &FlowField, phi: &ScalarField) -> Result<DualField> {
    u.check_dims(phi.dims())?;
    let (w, h) = u.dims();
    let u1x = forward_x(u.u1());
    let u1y = forward_y(u.u1());
    let u2x = forward_x(u.u2());
    let u2y = forward_y(u.u2());
    let d3: Vec<f64> = phi
        .as_slice()
        .iter()
        .zip(u1x.iter().zip(&u2y))
        .map(|(p, (a, b))| p * (a + b))
        .collect();
    let mk = |v| ScalarField::from_vec_unchecked(w, h, v);
    Ok(DualField {
        d1x: mk(u1x),
        d1y: mk(u1y),
        d2x: mk(u2x),
        d2y: mk(u2y),
        d3: mk(d3),
    })
}

/// Applies the adjoint `K*`:
/// `(-div d1 - dx(phi d3), -div d2 - dy(phi d3))`.
pub fn apply_k_star(d: &DualField, phi: &ScalarField) -> Result<FlowField> {
    d.d3.check_same_dims(phi)?;
    let (w, h) = phi.dims();
    let weighted: Vec<f64> = phi
        .as_slice()
        .iter()
        .zip(d.d3.as_slice())
        .map(|(p, q)| p * q)
        .collect();

    let mut r1 = vec![0.0; w * h];
    add_forward_x_transpose(d.d1x.as_slice(), w, h, &mut r1);
    add_forward_y_transpose(d.d1y.as_slice(), w, h, &mut r1);
    add_forward_x_transpose(&weighted, w, h, &mut r1);

    let mut r2 = vec![0.0; w * h];
    add_forward_x_transpose(d.d2x.as_slice(), w, h, &mut r2);
    add_forward_y_transpose(d.d2y.as_slice(), w, h, &mut r2);
    add_forward_y_transpose(&weighted, w, h, &mut r2);

    FlowField::new(
        ScalarField::from_vec_unchecked(w, h, r1),
        ScalarField::from_vec_unchecked(w, h, r2),
    )
}

/// Upper bound on `||K||^2` for an edge weight bounded by `max_phi`.
///
/// Each forward-difference gradient has squared norm at most 8 and each
/// single difference at most 4, so the weighted divergence row contributes
/// at most `2 * 4 * max_phi^2`.
pub fn operator_norm_bound_for(max_phi: f64) -> f64 {
    8.0 + 8.0 * max_phi * max_phi
}

pub fn operator_norm_bound(phi: &ScalarField) -> f64 {
    let m = phi.as_slice().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    operator_norm_bound_for(m)
}
