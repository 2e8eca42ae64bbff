//! Chambolle-Pock primal-dual solver for one linearized flow problem.
//!
//! The primal variable is the flow `u`, the dual variable
//! `d = (d1, d2, d3)` pairs with `K u = (grad u1, grad u2, phi div u)`.
//! Each iteration performs
//!
//! ```text
//! d~ = d + sigma K u_bar
//! d1,2 = proj_[-gamma, gamma](d~1,2)
//! d3 = eta / (eta + sigma) d~3
//! u~ = u - tau K* d
//! u = prox_data(u~)
//! u_bar = u + theta (u - u_old)
//! ```

mod operator;
mod prox;
mod solver;

pub use operator::{
    apply_k, apply_k_star, operator_norm_bound, operator_norm_bound_for, perona_malik_weight,
};
pub use prox::{
    prox_dual_div, prox_dual_tv, prox_dual_tv_isotropic, prox_primal_data, prox_primal_quadratic,
    quadratic_prox_pixel, soft_threshold_pixel, DEGENERATE_GRADIENT,
};
pub use solver::{pd_iterate, residuals, solve, solve_from, Residuals, SolveOutcome, SolverState};

use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};

/// Image data for one linearization: blended spatial derivatives, the
/// temporal difference at the current warp and the edge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedData {
    pub fx: ScalarField,
    pub fy: ScalarField,
    pub ft: ScalarField,
    pub phi: ScalarField,
}

impl LinearizedData {
    pub fn new(
        fx: ScalarField,
        fy: ScalarField,
        ft: ScalarField,
        phi: ScalarField,
    ) -> Result<Self> {
        for other in [&fy, &ft, &phi] {
            fx.check_same_dims(other)?;
        }
        if let Some(v) = phi.as_slice().iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "edge weight {v} outside (0, 1]"
            )));
        }
        Ok(Self { fx, fy, ft, phi })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fx.dims()
    }

    /// Re-expresses data linearized around `base` in terms of the total
    /// flow: `ft + grad f . (u - base)` becomes `ft' + grad f . u`.
    pub fn with_base_flow(&self, base: &FlowField) -> Result<Self> {
        base.check_dims(self.dims())?;
        let (b1, b2) = (base.u1().as_slice(), base.u2().as_slice());
        let (fx, fy) = (self.fx.as_slice(), self.fy.as_slice());
        let ft: Vec<f64> = self
            .ft
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, t)| t - fx[i] * b1[i] - fy[i] * b2[i])
            .collect();
        let (w, h) = self.dims();
        Ok(Self {
            ft: ScalarField::new(w, h, ft)?,
            ..self.clone()
        })
    }
}
