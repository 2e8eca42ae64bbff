//! Flow error metrics and dataset aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};

/// Components with magnitude above this mark unknown flow in ground truth.
pub const UNKNOWN_FLOW_THRESHOLD: f64 = 1e9;

#[inline]
pub fn is_known(u1: f64, u2: f64) -> bool {
    u1.is_finite()
        && u2.is_finite()
        && u1.abs() <= UNKNOWN_FLOW_THRESHOLD
        && u2.abs() <= UNKNOWN_FLOW_THRESHOLD
}

/// Per-pixel validity used to restrict evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl ValidMask {
    pub fn new(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != width * height {
            return Err(Error::LengthMismatch {
                width,
                height,
                len: valid.len(),
            });
        }
        Ok(Self {
            width,
            height,
            valid,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                valid.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            valid,
        }
    }

    /// Marks every pixel whose flow is not the unknown sentinel.
    pub fn known(flow: &FlowField) -> Self {
        let (w, h) = flow.dims();
        Self::from_fn(w, h, |x, y| {
            let (a, b) = flow.get(x, y);
            is_known(a, b)
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &ValidMask) -> Result<ValidMask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            valid: self
                .valid
                .iter()
                .zip(&other.valid)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }
}

/// Pixels included in an evaluation: the caller's mask intersected with the
/// pixels where `exact` is known.
fn evaluation_pixels(
    computed: &FlowField,
    exact: &FlowField,
    mask: Option<&ValidMask>,
) -> Result<Vec<usize>> {
    computed.check_dims(exact.dims())?;
    if let Some(m) = mask {
        if m.dims() != exact.dims() {
            return Err(Error::DimensionMismatch {
                expected: exact.dims(),
                found: m.dims(),
            });
        }
    }
    let (e1, e2) = (exact.u1().as_slice(), exact.u2().as_slice());
    let idx: Vec<usize> = (0..e1.len())
        .filter(|&i| is_known(e1[i], e2[i]) && mask.is_none_or(|m| m.valid[i]))
        .collect();
    if idx.is_empty() {
        return Err(Error::Empty("no valid pixels to evaluate"));
    }
    Ok(idx)
}

/// Angle in degrees between `(a1, a2, 1)` and `(b1, b2, 1)`.
#[inline]
pub fn angular_error(a: (f64, f64), b: (f64, f64)) -> f64 {
    // atan2 of |cross| and dot is the same angle as the arccos form but
    // stays exact for nearly parallel vectors
    let dot = a.0 * b.0 + a.1 * b.1 + 1.0;
    let cross = (a.1 - b.1).hypot(b.0 - a.0).hypot(a.0 * b.1 - a.1 * b.0);
    cross.atan2(dot).to_degrees()
}

/// Average angular error in degrees, using the space-time angle between
/// the homogeneous vectors `(u1, u2, 1)`.
pub fn aae(computed: &FlowField, exact: &FlowField, mask: Option<&ValidMask>) -> Result<f64> {
    let idx = evaluation_pixels(computed, exact, mask)?;
    let (c1, c2) = (computed.u1().as_slice(), computed.u2().as_slice());
    let (e1, e2) = (exact.u1().as_slice(), exact.u2().as_slice());
    let sum: f64 = idx
        .iter()
        .map(|&i| angular_error((c1[i], c2[i]), (e1[i], e2[i])))
        .sum();
    Ok(sum / idx.len() as f64)
}

/// Mean of `u_c . u_e / (|u_c| |u_e|)` without the arccos or homogeneous
/// component. Pixels where either vector is zero are skipped. Diagnostic
/// only; it is not an angle.
pub fn mean_flow_cosine(
    computed: &FlowField,
    exact: &FlowField,
    mask: Option<&ValidMask>,
) -> Result<f64> {
    let idx = evaluation_pixels(computed, exact, mask)?;
    let (c1, c2) = (computed.u1().as_slice(), computed.u2().as_slice());
    let (e1, e2) = (exact.u1().as_slice(), exact.u2().as_slice());
    let cosines: Vec<f64> = idx
        .iter()
        .filter_map(|&i| {
            let den = c1[i].hypot(c2[i]) * e1[i].hypot(e2[i]);
            (den > 0.0).then(|| (c1[i] * e1[i] + c2[i] * e2[i]) / den)
        })
        .collect();
    if cosines.is_empty() {
        return Err(Error::Empty("no pixels with non-zero flow in both fields"));
    }
    Ok(cosines.iter().sum::<f64>() / cosines.len() as f64)
}

/// Mean end-point error in pixels.
pub fn epe(computed: &FlowField, exact: &FlowField, mask: Option<&ValidMask>) -> Result<f64> {
    let idx = evaluation_pixels(computed, exact, mask)?;
    let (c1, c2) = (computed.u1().as_slice(), computed.u2().as_slice());
    let (e1, e2) = (exact.u1().as_slice(), exact.u2().as_slice());
    let sum: f64 = idx
        .iter()
        .map(|&i| (c1[i] - e1[i]).hypot(c2[i] - e2[i]))
        .sum();
    Ok(sum / idx.len() as f64)
}

/// Per-pixel end-point error; excluded pixels are set to zero.
pub fn epe_map(
    computed: &FlowField,
    exact: &FlowField,
    mask: Option<&ValidMask>,
) -> Result<ScalarField> {
    let idx = evaluation_pixels(computed, exact, mask)?;
    let (w, h) = exact.dims();
    let mut data = vec![0.0; w * h];
    let (c1, c2) = (computed.u1().as_slice(), computed.u2().as_slice());
    let (e1, e2) = (exact.u1().as_slice(), exact.u2().as_slice());
    for i in idx {
        data[i] = (c1[i] - e1[i]).hypot(c2[i] - e2[i]);
    }
    ScalarField::new(w, h, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aae_degrees: f64,
    pub epe_pixels: f64,
    #[serde(skip)]
    pub per_pixel_epe: Option<ScalarField>,
    pub convergence_trace: Vec<f64>,
}

/// AAE, EPE and the per-pixel EPE map of `computed` against `exact`.
pub fn evaluate(
    computed: &FlowField,
    exact: &FlowField,
    mask: Option<&ValidMask>,
) -> Result<EvalReport> {
    Ok(EvalReport {
        aae_degrees: aae(computed, exact, mask)?,
        epe_pixels: epe(computed, exact, mask)?,
        per_pixel_epe: Some(epe_map(computed, exact, mask)?),
        convergence_trace: Vec::new(),
    })
}

/// Error figures for one named sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEval {
    pub name: String,
    pub aae_degrees: f64,
    pub epe_pixels: f64,
}

/// Unweighted means of AAE and EPE over sequences.
pub fn average_report(evals: &[SequenceEval]) -> Result<(f64, f64)> {
    if evals.is_empty() {
        return Err(Error::Empty("no sequences to average"));
    }
    let n = evals.len() as f64;
    Ok((
        evals.iter().map(|e| e.aae_degrees).sum::<f64>() / n,
        evals.iter().map(|e| e.epe_pixels).sum::<f64>() / n,
    ))
}
