//! Neutral equations `d/dt D(θ·t, z_t) = G(θ·t, z_t)` with a stable operator `D`.

mod operator;

pub use operator::{Atom, Density, Inversion, NeutralBounds, NeutralOperator, StabilityConstants};

use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::fde::{integrate_functional, run_engine, Grid, HistoryFunctional, Problem, RightHandSide, Trajectory};
use crate::history::{HistoryFunction, OrderParams};

/// Default stopping tolerance of the Neumann iteration.
pub const INVERSE_TOL: f64 = 1e-10;
/// Default iteration cap of the Neumann iteration.
pub const INVERSE_MAX_ITER: usize = 200;

#[derive(Clone, Debug)]
pub struct NfdeModel {
    op: NeutralOperator,
    rhs: RightHandSide,
    order: OrderParams,
    grid: Grid,
}

impl NfdeModel {
    pub fn new(op: NeutralOperator, rhs: RightHandSide, order: OrderParams, grid: Grid) -> Result<Self> {
        if op.dim() != rhs.dim() || order.dim() != rhs.dim() {
            return Err(Error::ShapeMismatch(format!(
                "operator, right side and order have dimensions {}, {}, {}",
                op.dim(),
                rhs.dim(),
                order.dim()
            )));
        }
        rhs.validate(op.base(), &grid)?;
        op.validate_grid(&grid)?;
        Ok(Self { op, rhs, order, grid })
    }

    pub fn dim(&self) -> usize {
        self.rhs.dim()
    }

    pub fn base(&self) -> &TorusBase {
        self.op.base()
    }

    pub fn operator(&self) -> &NeutralOperator {
        &self.op
    }

    pub fn rhs(&self) -> &RightHandSide {
        &self.rhs
    }

    pub fn order(&self) -> &OrderParams {
        &self.order
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn with_order(mut self, order: OrderParams) -> Result<Self> {
        if order.dim() != self.dim() {
            return Err(Error::ShapeMismatch("order dimension differs from the model".into()));
        }
        self.order = order;
        Ok(self)
    }

    /// `G(θ, x)`.
    #[allow(non_snake_case)]
    pub fn eval_G(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<Vec<f64>> {
        self.grid.check(x)?;
        self.rhs.eval(self.base(), theta, x)
    }

    /// Dual-history integration: RK4 on `w = D(θ·t, z_t)` with `z` recovered pointwise.
    pub fn integrate(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
        let problem = Problem { base: self.base(), rhs: &self.rhs, neutral: Some(&self.op), grid: self.grid };
        run_engine(&problem, theta0, x0, horizon)
    }

    /// The transformed right side `F = G ∘ D̂⁻¹` acting on neutral coordinates.
    pub fn transform_to_fde(&self) -> TransformedFde<'_> {
        TransformedFde { model: self }
    }

    /// Integrates the transformed equation `ŷ′ = F(θ·t, ŷ_t)` from `ŷ₀ = D̂₂(θ₀, x₀)`.
    /// The heads of the result are `D(θ₀·t, z_t)`; use [`Self::recover`] for `z_t`.
    pub fn integrate_transformed(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
        self.grid.check(x0)?;
        let y0 = self.op.eval_dhat2(theta0, x0)?;
        integrate_functional(&self.transform_to_fde(), self.base(), self.grid, theta0, &y0, horizon)
    }

    /// `D̂⁻¹(θ, ŷ)`.
    pub fn recover(&self, theta: &BasePoint, y: &HistoryFunction) -> Result<HistoryFunction> {
        self.op.invert(theta, y)
    }

    /// Largest `‖D(θ₀·t_k, z_{t_k}) − w(t_k)‖` over every `stride`-th output time.
    pub fn conservation_defect(&self, traj: &Trajectory, stride: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in (0..=traj.steps()).step_by(stride.max(1)) {
            let d = self.op.eval_d(&traj.base_point(k), &traj.snapshot_at(k))?;
            let w = traj
                .neutral_head(k)
                .ok_or_else(|| Error::InvalidArgument("trajectory has no neutral coordinates".into()))?;
            worst = d.iter().zip(w).fold(worst, |a, (p, q)| a.max((p - q).abs()));
        }
        Ok(worst)
    }
}

/// `(θ, ŷ) ↦ G(θ, D̂⁻¹(θ, ŷ))`.
pub struct TransformedFde<'a> {
    model: &'a NfdeModel,
}

impl HistoryFunctional for TransformedFde<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, theta: &BasePoint, y: &HistoryFunction) -> Result<Vec<f64>> {
        let x = self.model.op.invert(theta, y)?;
        self.model.rhs.eval(self.model.base(), theta, &x)
    }
}
