//! Synthetic translating-disc sequence with known flow.

use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};
use crate::metrics::ValidMask;

/// Width of the band around either circle that is excluded from evaluation.
pub const BOUNDARY_BAND: f64 = 2.0;

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub size: usize,
    pub radius: f64,
    /// Horizontal displacement of the disc from frame 1 to frame 2.
    pub shift: f64,
    pub fg: f64,
    pub bg: f64,
    /// Place the frame-1 disc at the image centre (shifted left by half the
    /// motion) instead of at pixel (0, 0).
    pub centered: bool,
}

impl Default for BallSpec {
    fn default() -> Self {
        Self {
            size: 200,
            radius: 100.0,
            shift: 4.0,
            fg: 1.0,
            bg: 0.0,
            centered: false,
        }
    }
}

impl BallSpec {
    pub fn new(size: usize, radius: f64, shift: f64, fg: f64, bg: f64) -> Self {
        Self {
            size,
            radius,
            shift,
            fg,
            bg,
            centered: false,
        }
    }

    pub fn centered(mut self, centered: bool) -> Self {
        self.centered = centered;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.size == 0 {
            return bad("ball sequence size must be positive".into());
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return bad(format!("shift must be non-negative, got {}", self.shift));
        }
        if self.size as f64 <= 2.0 * self.shift {
            return bad(format!(
                "size {} must exceed twice the shift {}",
                self.size, self.shift
            ));
        }
        for (name, v) in [("fg", self.fg), ("bg", self.bg)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} intensity {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Centre of the frame-1 disc.
    pub fn center(&self) -> (f64, f64) {
        if self.centered {
            let c = (self.size as f64 - 1.0) / 2.0;
            (c - self.shift / 2.0, c)
        } else {
            (0.0, 0.0)
        }
    }

    fn render(&self, cx: f64, cy: f64) -> ScalarField {
        let r2 = self.radius * self.radius;
        let n = SUPERSAMPLE as f64;
        ScalarField::from_fn(self.size, self.size, |x, y| {
            let mut inside = 0usize;
            for j in 0..SUPERSAMPLE {
                let sy = y as f64 + (j as f64 + 0.5) / n - 0.5 - cy;
                for i in 0..SUPERSAMPLE {
                    let sx = x as f64 + (i as f64 + 0.5) / n - 0.5 - cx;
                    if sx * sx + sy * sy < r2 {
                        inside += 1;
                    }
                }
            }
            let cover = inside as f64 / (n * n);
            self.bg + (self.fg - self.bg) * cover
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSequence {
    pub f1: ScalarField,
    pub f2: ScalarField,
    pub ground_truth: FlowField,
    /// Pixels at least [`BOUNDARY_BAND`] away from both circles.
    pub mask: ValidMask,
}

/// Frame pair of a disc translating right by `spec.shift` pixels.
///
/// Intensities are area coverage from 4x4 supersampling. The ground truth
/// is `(shift, 0)` at pixel centres inside either disc and zero elsewhere.
pub fn make_ball_sequence(spec: &BallSpec) -> Result<BallSequence> {
    spec.validate()?;
    let (cx, cy) = spec.center();
    let f1 = spec.render(cx, cy);
    let f2 = spec.render(cx + spec.shift, cy);
    let n = spec.size;
    let dist = |x: usize, y: usize, ox: f64| (x as f64 - cx - ox).hypot(y as f64 - cy);
    let ground_truth = FlowField::from_fn(n, n, |x, y| {
        if dist(x, y, 0.0) < spec.radius || dist(x, y, spec.shift) < spec.radius {
            (spec.shift, 0.0)
        } else {
            (0.0, 0.0)
        }
    });
    let mask = ValidMask::from_fn(n, n, |x, y| {
        (dist(x, y, 0.0) - spec.radius).abs() >= BOUNDARY_BAND
            && (dist(x, y, spec.shift) - spec.radius).abs() >= BOUNDARY_BAND
    });
    Ok(BallSequence {
        f1,
        f2,
        ground_truth,
        mask,
    })
}

/// Pixels inside the frame-1 disc at least `erosion` pixels from its circle.
pub fn interior_mask(spec: &BallSpec, erosion: f64) -> Result<ValidMask> {
    spec.validate()?;
    let (cx, cy) = spec.center();
    Ok(ValidMask::from_fn(spec.size, spec.size, |x, y| {
        (x as f64 - cx).hypot(y as f64 - cy) <= spec.radius - erosion
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_ops::warp_image;

    #[test]
    fn zero_shift_gives_identical_frames() {
        let s = make_ball_sequence(&BallSpec::new(40, 15.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(s.f1, s.f2);
        assert!(s.ground_truth.u1().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_layout() {
        let s = make_ball_sequence(&BallSpec::default()).unwrap();
        assert_eq!(s.f1.dims(), (200, 200));
        assert_eq!(s.f1.get(10, 10), 1.0);
        assert_eq!(s.f1.get(150, 150), 0.0);
        assert_eq!(s.ground_truth.get(10, 10), (4.0, 0.0));
        assert_eq!(s.ground_truth.get(150, 150), (0.0, 0.0));
        // the shifted disc covers the strip just right of the first circle
        assert_eq!(s.ground_truth.get(102, 0), (4.0, 0.0));
        assert!(!s.mask.get(100, 0));
        assert!(s.mask.get(50, 50));
        let edge = s.f1.get(100, 0);
        assert!(edge > 0.0 && edge < 1.0);
    }

    #[test]
    fn deterministic() {
        let spec = BallSpec::default().centered(true);
        assert_eq!(
            make_ball_sequence(&spec).unwrap(),
            make_ball_sequence(&spec).unwrap()
        );
    }

    #[test]
    fn warp_back_matches_first_frame() {
        for spec in [
            BallSpec::default(),
            BallSpec::new(64, 20.0, 3.0, 0.8, 0.2).centered(true),
        ] {
            let s = make_ball_sequence(&spec).unwrap();
            let warped = warp_image(&s.f2, &s.ground_truth).unwrap();
            let (w, h) = s.f1.dims();
            let mut max = 0.0f64;
            for y in 0..h {
                for x in 0..w.saturating_sub(spec.shift.ceil() as usize) {
                    if s.mask.get(x, y) {
                        max = max.max((warped.get(x, y) - s.f1.get(x, y)).abs());
                    }
                }
            }
            assert!(max < 0.05, "{max}");
        }
    }

    #[test]
    fn interior_mask_is_eroded_disc() {
        let spec = BallSpec::new(40, 15.0, 2.0, 1.0, 0.0).centered(true);
        let m = interior_mask(&spec, 6.0).unwrap();
        let (cx, cy) = spec.center();
        assert!(m.get(cx.round() as usize, cy.round() as usize));
        assert!(!m.get(0, 0));
        let area = std::f64::consts::PI * 81.0;
        assert!((m.count() as f64 - area).abs() < 0.1 * area);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(make_ball_sequence(&BallSpec::new(8, 3.0, 4.0, 1.0, 0.0)).is_err());
        assert!(make_ball_sequence(&BallSpec::new(8, 0.0, 1.0, 1.0, 0.0)).is_err());
        assert!(make_ball_sequence(&BallSpec::new(8, 3.0, 1.0, 2.0, 0.0)).is_err());
        assert!(make_ball_sequence(&BallSpec::new(0, 3.0, 0.0, 1.0, 0.0)).is_err());
    }
}
