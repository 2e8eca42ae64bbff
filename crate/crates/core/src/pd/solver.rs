use crate::config::{DataTerm, SolverConfig, TvProjection};
use crate::error::{Error, Result};
use crate::field::{DualField, FlowField, ScalarField};
use crate::pd::operator::{apply_k, apply_k_star};
use crate::pd::prox::{quadratic_prox_pixel, soft_threshold_pixel};
use crate::pd::LinearizedData;

/// Iterate of the primal-dual method.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: FlowField,
    /// Over-relaxed primal iterate.
    pub u_bar: FlowField,
    pub d: DualField,
    pub k: usize,
    /// Normalized residual error after each iteration.
    pub trace: Vec<f64>,
    /// Row buffers reused across steps.
    scratch: Vec<f64>,
}

impl SolverState {
    /// Zero primal and dual variables.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_flow(FlowField::zeros(width, height))
    }

    /// Starts the primal iterate at `u` with zero dual variables.
    pub fn from_flow(u: FlowField) -> Self {
        let (w, h) = u.dims();
        Self {
            u_bar: u.clone(),
            u,
            d: DualField::zeros(w, h),
            k: 0,
            trace: Vec::new(),
            scratch: Vec::new(),
        }
    }

    /// Runs one full primal-dual cycle and returns the normalized error.
    pub fn step(&mut self, lin: &LinearizedData, cfg: &SolverConfig) -> Result<f64> {
        self.u.check_dims(lin.dims())?;
        self.u_bar.check_dims(lin.dims())?;
        if self.d.dims() != lin.dims() {
            return Err(Error::DimensionMismatch {
                expected: lin.dims(),
                found: self.d.dims(),
            });
        }
        let e = match cfg.data_term {
            DataTerm::L1 => self.sweep(lin, cfg, soft_threshold_pixel),
            DataTerm::Quadratic => self.sweep(lin, cfg, quadratic_prox_pixel),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "data_term {other} has no proximal operator"
                )))
            }
        };
        self.k += 1;
        self.trace.push(e);
        Ok(e)
    }

    /// One fused pass over the rows: dual update of row `y`, primal update
    /// of row `y`, then the dual residual of row `y - 1`.
    fn sweep(
        &mut self,
        lin: &LinearizedData,
        cfg: &SolverConfig,
        prox: impl Fn((f64, f64), (f64, f64), f64, f64) -> (f64, f64),
    ) -> f64 {
        let (w, h) = lin.dims();
        let n = w * h;
        // Rolling two-row buffers: d_prev - d (five channels) and u_prev - u
        // (two channels), indexed by row parity.
        self.scratch.resize(14 * w, 0.0);
        let (de, ue) = self.scratch.split_at_mut(10 * w);
        let slot = |c: usize, y: usize| (2 * c + (y & 1)) * w;
        let phi = lin.phi.as_slice();
        let (fx, fy, ft) = (lin.fx.as_slice(), lin.fy.as_slice(), lin.ft.as_slice());
        let (tau, sigma) = cfg.effective_steps(&lin.phi);
        let (gamma, theta) = (cfg.gamma, cfg.theta);
        let shrink = cfg.eta / (cfg.eta + sigma);
        let (inv_tau, inv_sigma) = (1.0 / tau, 1.0 / sigma);
        let isotropic = cfg.tv_projection == TvProjection::Isotropic;

        let (u1, u2) = self.u.parts_mut();
        let (u1, u2) = (u1.as_mut_slice(), u2.as_mut_slice());
        let (ub1, ub2) = self.u_bar.parts_mut();
        let (ub1, ub2) = (ub1.as_mut_slice(), ub2.as_mut_slice());
        let d = &mut self.d;
        let d1x = d.d1x.as_mut_slice();
        let d1y = d.d1y.as_mut_slice();
        let d2x = d.d2x.as_mut_slice();
        let d2y = d.d2y.as_mut_slice();
        let d3 = d.d3.as_mut_slice();

        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        // `|d_e / sigma - K u_e|` for row `y`, once `u_e` is known on rows
        // `y` and `y + 1`.
        let dual_residual_row = |y: usize, de: &[f64], ue: &[f64]| -> f64 {
            let mut acc = 0.0;
            for x in 0..w {
                let i = y * w + x;
                let (a1, a2) = (ue[slot(0, y) + x], ue[slot(1, y) + x]);
                let mut k = [0.0; 5];
                if x + 1 < w {
                    k[0] = ue[slot(0, y) + x + 1] - a1;
                    k[2] = ue[slot(1, y) + x + 1] - a2;
                }
                if y + 1 < h {
                    k[1] = ue[slot(0, y + 1) + x] - a1;
                    k[3] = ue[slot(1, y + 1) + x] - a2;
                }
                k[4] = phi[i] * (k[0] + k[3]);
                for (c, kc) in k.iter().enumerate() {
                    acc += (de[slot(c, y) + x] * inv_sigma - kc).abs();
                }
            }
            acc
        };

        for y in 0..h {
            // Dual ascent on row y; u_bar rows y and y + 1 are still the
            // previous iterate here.
            for x in 0..w {
                let i = y * w + x;
                let (ux1, ux2) = if x + 1 < w {
                    (ub1[i + 1] - ub1[i], ub2[i + 1] - ub2[i])
                } else {
                    (0.0, 0.0)
                };
                let (uy1, uy2) = if y + 1 < h {
                    (ub1[i + w] - ub1[i], ub2[i + w] - ub2[i])
                } else {
                    (0.0, 0.0)
                };
                let t = [
                    d1x[i] + sigma * ux1,
                    d1y[i] + sigma * uy1,
                    d2x[i] + sigma * ux2,
                    d2y[i] + sigma * uy2,
                ];
                let p = if isotropic {
                    let s1 = gamma / gamma.max(t[0].hypot(t[1]));
                    let s2 = gamma / gamma.max(t[2].hypot(t[3]));
                    [t[0] * s1, t[1] * s1, t[2] * s2, t[3] * s2]
                } else {
                    t.map(|v| v.clamp(-gamma, gamma))
                };
                let q = shrink * (d3[i] + sigma * (phi[i] * (ux1 + uy2)));
                de[slot(0, y) + x] = d1x[i] - p[0];
                de[slot(1, y) + x] = d1y[i] - p[1];
                de[slot(2, y) + x] = d2x[i] - p[2];
                de[slot(3, y) + x] = d2y[i] - p[3];
                de[slot(4, y) + x] = d3[i] - q;
                d1x[i] = p[0];
                d1y[i] = p[1];
                d2x[i] = p[2];
                d2y[i] = p[3];
                d3[i] = q;
            }

            // Primal descent on row y; d is final on rows y - 1 and y.
            for x in 0..w {
                let i = y * w + x;
                let dd = [&*d1x, &*d1y, &*d2x, &*d2y, &*d3];
                let ([k1, k2], [e1, e2]) = match (x >= 1, x + 1 < w) {
                    (true, true) => (
                        k_star_at::<true, true>(x, y, w, h, dd, phi, |_, yy| yy * w),
                        k_star_at::<true, true>(x, y, w, h, [&*de; 5], phi, slot),
                    ),
                    (false, true) => (
                        k_star_at::<false, true>(x, y, w, h, dd, phi, |_, yy| yy * w),
                        k_star_at::<false, true>(x, y, w, h, [&*de; 5], phi, slot),
                    ),
                    (true, false) => (
                        k_star_at::<true, false>(x, y, w, h, dd, phi, |_, yy| yy * w),
                        k_star_at::<true, false>(x, y, w, h, [&*de; 5], phi, slot),
                    ),
                    (false, false) => (
                        k_star_at::<false, false>(x, y, w, h, dd, phi, |_, yy| yy * w),
                        k_star_at::<false, false>(x, y, w, h, [&*de; 5], phi, slot),
                    ),
                };
                let (o1, o2) = (u1[i], u2[i]);
                let (n1, n2) = prox((o1 - tau * k1, o2 - tau * k2), (fx[i], fy[i]), ft[i], tau);
                u1[i] = n1;
                u2[i] = n2;
                ub1[i] = n1 + theta * (n1 - o1);
                ub2[i] = n2 + theta * (n2 - o2);
                let (a1, a2) = (o1 - n1, o2 - n2);
                ue[slot(0, y) + x] = a1;
                ue[slot(1, y) + x] = a2;
                primal += (a1 * inv_tau - e1).abs() + (a2 * inv_tau - e2).abs();
            }

            if y >= 1 {
                dual += dual_residual_row(y - 1, de, ue);
            }
        }
        if h >= 1 {
            dual += dual_residual_row(h - 1, de, ue);
        }

        (primal + dual) / n as f64
    }
}

/// `K* d` at one pixel, with the boundary truncation of [`apply_k_star`].
/// `row(c, y)` is the offset of row `y` of channel `c` within `d[c]`.
/// `LEFT` and `RIGHT` say whether the pixel has a neighbour on that side.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn k_star_at<const LEFT: bool, const RIGHT: bool>(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    d: [&[f64]; 5],
    phi: &[f64],
    row: impl Fn(usize, usize) -> usize,
) -> [f64; 2] {
    let at = |c: usize, xx: usize, yy: usize| d[c][row(c, yy) + xx];
    let wd = |xx: usize, yy: usize| phi[yy * w + xx] * at(4, xx, yy);
    // Transposed forward differences: `(0 + p[prev]) - p[here]`, edge
    // terms dropped.
    let back = |has_prev: bool, has_here: bool, prev: f64, here: f64| {
        let mut v = 0.0;
        if has_prev {
            v += prev;
        }
        if has_here {
            v -= here;
        }
        v
    };
    let (left, right) = (LEFT, RIGHT);
    let (up, down) = (y >= 1, y + 1 < h);
    let xl = x.saturating_sub(1);
    let yu = y.saturating_sub(1);
    [
        back(left, right, at(0, xl, y), at(0, x, y))
            + back(up, down, at(1, x, yu), at(1, x, y))
            + back(left, right, wd(xl, y), wd(x, y)),
        back(left, right, at(2, xl, y), at(2, x, y))
            + back(up, down, at(3, x, yu), at(3, x, y))
            + back(up, down, wd(x, yu), wd(x, y)),
    ]
}

/// Functional form of [`SolverState::step`].
pub fn pd_iterate(
    mut state: SolverState,
    lin: &LinearizedData,
    cfg: &SolverConfig,
) -> Result<SolverState> {
    state.step(lin, cfg)?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    /// `(primal + dual) / pixel_count`.
    pub normalized: f64,
}

/// Primal and dual residuals between two successive iterates, measured in
/// the L1 norm over all channels and pixels.
pub fn residuals(
    u_prev: &FlowField,
    u_next: &FlowField,
    d_prev: &DualField,
    d_next: &DualField,
    phi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Residuals> {
    let diff = |a: &ScalarField, b: &ScalarField| a.zip_map(b, |p, q| p - q);
    let u_e = FlowField::new(
        diff(u_prev.u1(), u_next.u1())?,
        diff(u_prev.u2(), u_next.u2())?,
    )?;
    let d_e = DualField::new(
        (
            diff(&d_prev.d1x, &d_next.d1x)?,
            diff(&d_prev.d1y, &d_next.d1y)?,
        ),
        (
            diff(&d_prev.d2x, &d_next.d2x)?,
            diff(&d_prev.d2y, &d_next.d2y)?,
        ),
        diff(&d_prev.d3, &d_next.d3)?,
    )?;
    let ks = apply_k_star(&d_e, phi)?;
    let ku = apply_k(&u_e, phi)?;

    let l1 = |a: &ScalarField, b: &ScalarField, s: f64| -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x / s - y).abs())
            .sum()
    };
    let (tau, sigma) = cfg.effective_steps(phi);
    let primal = l1(u_e.u1(), ks.u1(), tau) + l1(u_e.u2(), ks.u2(), tau);
    let dual: f64 = d_e
        .channels()
        .iter()
        .zip(ku.channels())
        .map(|(a, b)| l1(a, b, sigma))
        .sum();
    let n = phi.len() as f64;
    Ok(Residuals {
        primal,
        dual,
        normalized: (primal + dual) / n,
    })
}

/// Result of solving one linearized problem.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub flow: FlowField,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Iterates from zero until the normalized error drops below `cfg.pd_tol`
/// or `cfg.pd_max_iter` iterations have run.
pub fn solve(lin: &LinearizedData, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let (w, h) = lin.dims();
    solve_from(lin, FlowField::zeros(w, h), cfg)
}

/// Like [`solve`], with the primal iterate started at `init`.
pub fn solve_from(
    lin: &LinearizedData,
    init: FlowField,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    let mut state = SolverState::from_flow(init);
    let mut converged = false;
    while state.k < cfg.pd_max_iter {
        if state.step(lin, cfg)? < cfg.pd_tol {
            converged = true;
            break;
        }
    }
    Ok(SolveOutcome {
        flow: state.u,
        trace: state.trace,
        converged,
    })
}
