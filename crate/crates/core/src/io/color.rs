//! Middlebury color-wheel rendering of flow fields.

use image::{Rgb, RgbImage};

use crate::field::FlowField;

const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6]; // RY, YG, GC, CB, BM, MR

fn color_wheel() -> Vec<[f64; 3]> {
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
    let [ry, yg, gc, cb, bm, mr] = SEGMENTS;
    wheel.extend((0..ry).map(|i| [255.0, ramp(i, ry), 0.0]));
    wheel.extend((0..yg).map(|i| [255.0 - ramp(i, yg), 255.0, 0.0]));
    wheel.extend((0..gc).map(|i| [0.0, 255.0, ramp(i, gc)]));
    wheel.extend((0..cb).map(|i| [0.0, 255.0 - ramp(i, cb), 255.0]));
    wheel.extend((0..bm).map(|i| [ramp(i, bm), 0.0, 255.0]));
    wheel.extend((0..mr).map(|i| [255.0, 0.0, 255.0 - ramp(i, mr)]));
    wheel
}

/// The `p`-th percentile (0..=100) of the flow magnitude, nearest rank.
pub fn magnitude_percentile(flow: &FlowField, p: f64) -> f64 {
    let mut mags: Vec<f64> = flow
        .u1()
        .as_slice()
        .iter()
        .zip(flow.u2().as_slice())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * (mags.len() - 1) as f64).round() as usize;
    mags[rank.min(mags.len() - 1)]
}

/// Encodes direction as hue and magnitude (relative to `max_magnitude`, or
/// the 99th percentile when `None`) as saturation. Zero flow is white;
/// magnitudes beyond the maximum are darkened.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> RgbImage {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let max = max_magnitude
        .filter(|m| m.is_finite() && *m > 0.0)
        .unwrap_or_else(|| magnitude_percentile(flow, 99.0));
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let (w, h) = flow.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (u, v) = flow.get(x as usize, y as usize);
        let (u, v) = (u * scale, v * scale);
        let rad = u.hypot(v);
        let a = (-v).atan2(-u) / std::f64::consts::PI;
        let fk = (a + 1.0) / 2.0 * (ncols - 1) as f64;
        let k0 = (fk.floor() as usize).min(ncols - 1);
        let k1 = (k0 + 1) % ncols;
        let f = fk - k0 as f64;
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let col = (1.0 - f) * wheel[k0][c] / 255.0 + f * wheel[k1][c] / 255.0;
            let col = if rad <= 1.0 {
                1.0 - rad * (1.0 - col)
            } else {
                col * 0.75
            };
            *out = (255.0 * col).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wheel_size_and_anchors() {
        let wheel = color_wheel();
        assert_eq!(wheel.len(), 55);
        assert_eq!(wheel[0], [255.0, 0.0, 0.0]);
        assert_eq!(wheel[15], [255.0, 255.0, 0.0]);
    }

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::zeros(4, 3), None);
        assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
    }

    #[test]
    fn uniform_flow_is_uniform_color() {
        let img = flow_to_color(&FlowField::uniform(5, 5, 0.3, -1.2), None);
        let first = *img.get_pixel(0, 0);
        assert!(img.pixels().all(|p| *p == first));
        assert_ne!(first.0, [255, 255, 255]);
    }

    #[test]
    fn unit_rightward_flow_is_saturated_red() {
        let img = flow_to_color(&FlowField::uniform(2, 2, 3.0, 0.0), Some(3.0));
        assert_eq!(img.get_pixel(0, 0).0, [255, 0, 0]);
        let half = flow_to_color(&FlowField::uniform(1, 1, 1.5, 0.0), Some(3.0));
        assert_eq!(half.get_pixel(0, 0).0, [255, 128, 128]);
    }

    #[test]
    fn deterministic_and_auto_scale() {
        let f = FlowField::from_fn(8, 8, |x, y| (x as f64 - 4.0, y as f64 * 0.5));
        assert_eq!(flow_to_color(&f, None), flow_to_color(&f, None));
        assert_eq!(
            magnitude_percentile(&FlowField::uniform(3, 3, 3.0, 4.0), 99.0),
            5.0
        );
    }
}
