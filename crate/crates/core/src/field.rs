//! Grid-valued fields: scalar images, flow fields and the dual variable.
//!
//! All fields are row-major with the origin at the top-left pixel; `x` is the
//! column index and `y` the row index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel real-valued field on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    /// Builds a field from row-major data, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Evaluates `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec_unchecked(width, height, data)
    }

    /// Internal constructor for values produced by finite arithmetic on
    /// finite inputs. Debug builds still verify finiteness.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite field value");
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with replicated borders; coordinates may lie outside the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yi * self.width + xi]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pixelwise combination of two equally sized fields.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self::from_vec_unchecked(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

/// Largest absolute pixel difference between two fields.
pub fn field_linf_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.check_same_dims(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Per-pixel displacement `(u1, u2)` in pixels: `u1` horizontal, `u2` vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    u1: ScalarField,
    u2: ScalarField,
}

impl FlowField {
    pub fn new(u1: ScalarField, u2: ScalarField) -> Result<Self> {
        u1.check_same_dims(&u2)?;
        Ok(Self { u1, u2 })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, u1: f64, u2: f64) -> Self {
        Self {
            u1: ScalarField::filled(width, height, u1),
            u2: ScalarField::filled(width, height, u2),
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut a = Vec::with_capacity(width * height);
        let mut b = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (p, q) = f(x, y);
                a.push(p);
                b.push(q);
            }
        }
        Self {
            u1: ScalarField::from_vec_unchecked(width, height, a),
            u2: ScalarField::from_vec_unchecked(width, height, b),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u1.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.u1.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.u1.dims()
    }

    pub fn u1(&self) -> &ScalarField {
        &self.u1
    }

    pub fn u2(&self) -> &ScalarField {
        &self.u2
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut ScalarField, &mut ScalarField) {
        (&mut self.u1, &mut self.u2)
    }

    pub fn into_parts(self) -> (ScalarField, ScalarField) {
        (self.u1, self.u2)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u1.get(x, y), self.u2.get(x, y))
    }

    /// Componentwise sum of two flows.
    pub fn add(&self, other: &FlowField) -> Result<FlowField> {
        Ok(Self {
            u1: self.u1.zip_map(&other.u1, |a, b| a + b)?,
            u2: self.u2.zip_map(&other.u2, |a, b| a + b)?,
        })
    }

    pub fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Dual variable of the primal-dual solver: `d1` pairs with the gradient of
/// `u1`, `d2` with the gradient of `u2`, `d3` with the weighted divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    pub(crate) d1x: ScalarField,
    pub(crate) d1y: ScalarField,
    pub(crate) d2x: ScalarField,
    pub(crate) d2y: ScalarField,
    pub(crate) d3: ScalarField,
}

impl DualField {
    pub fn new(
        d1: (ScalarField, ScalarField),
        d2: (ScalarField, ScalarField),
        d3: ScalarField,
    ) -> Result<Self> {
        for other in [&d1.1, &d2.0, &d2.1, &d3] {
            d1.0.check_same_dims(other)?;
        }
        Ok(Self {
            d1x: d1.0,
            d1y: d1.1,
            d2x: d2.0,
            d2y: d2.1,
            d3,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let z = ScalarField::zeros(width, height);
        Self {
            d1x: z.clone(),
            d1y: z.clone(),
            d2x: z.clone(),
            d2y: z.clone(),
            d3: z,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.d3.dims()
    }

    pub fn d1(&self) -> (&ScalarField, &ScalarField) {
        (&self.d1x, &self.d1y)
    }

    pub fn d2(&self) -> (&ScalarField, &ScalarField) {
        (&self.d2x, &self.d2y)
    }

    pub fn d3(&self) -> &ScalarField {
        &self.d3
    }

    /// The five channels in a fixed order: d1x, d1y, d2x, d2y, d3.
    pub fn channels(&self) -> [&ScalarField; 5] {
        [&self.d1x, &self.d1y, &self.d2x, &self.d2y, &self.d3]
    }

    /// Euclidean inner product over all channels and pixels.
    pub fn dot(&self, other: &DualField) -> f64 {
        self.channels()
            .iter()
            .zip(other.channels())
            .map(|(a, b)| dot(a.as_slice(), b.as_slice()))
            .sum()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        assert!(ScalarField::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            ScalarField::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn mismatched_channels_fail() {
        assert!(FlowField::new(ScalarField::zeros(3, 2), ScalarField::zeros(2, 3)).is_err());
        let z = ScalarField::zeros(3, 3);
        assert!(DualField::new(
            (z.clone(), z.clone()),
            (z.clone(), ScalarField::zeros(3, 2)),
            z
        )
        .is_err());
    }

    #[test]
    fn linf_diff() {
        let a = ScalarField::zeros(4, 3);
        let b = ScalarField::filled(4, 3, 1.0);
        assert_eq!(field_linf_diff(&a, &a).unwrap(), 0.0);
        assert_eq!(field_linf_diff(&a, &b).unwrap(), 1.0);
        assert!(field_linf_diff(&a, &ScalarField::zeros(3, 4)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ScalarField::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = ScalarField::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let mut expected: f64 = 0.0;
        for y in 0..4 {
            for x in 0..4 {
                let d = (p.get(x, y) - q.get(x, y)).abs();
                if d > expected {
                    expected = d;
                }
            }
        }
        assert_eq!(field_linf_diff(&p, &q).unwrap(), expected);
    }

    #[test]
    fn clamped_access_replicates_edges() {
        let f = ScalarField::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        assert_eq!(f.get_clamped(-5, 0), 0.0);
        assert_eq!(f.get_clamped(7, 9), 12.0);
        assert_eq!(f.get_clamped(1, 1), 11.0);
    }
}
