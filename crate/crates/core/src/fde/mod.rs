//! Functional differential equations `z′(t) = F(θ·t, z_t)` over the torus flow.

mod coef;
mod engine;
mod functional;
pub mod probes;
mod rhs;
pub(crate) mod series;
mod trajectory;

pub use coef::{Coef, CoefMatrix};
pub use engine::BLOW_UP;
pub use functional::{integrate_functional, HistoryFunctional};
pub use rhs::{DelayTerm, Grid, MemoryTerm, RightHandSide, TRUNCATION_BUDGET};
pub use trajectory::Trajectory;

use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::{HistoryFunction, OrderParams};

pub(crate) use engine::{integrate as run_engine, Problem};

/// A model `z′(t) = F(θ·t, z_t)` together with the order it is meant to preserve.
#[derive(Clone, Debug)]
pub struct FdeModel {
    base: TorusBase,
    rhs: RightHandSide,
    order: OrderParams,
    grid: Grid,
}

impl FdeModel {
    pub fn new(base: TorusBase, rhs: RightHandSide, order: OrderParams, grid: Grid) -> Result<Self> {
        rhs.validate(&base, &grid)?;
        if order.dim() != rhs.dim() {
            return Err(Error::ShapeMismatch(format!(
                "order of dimension {} for a system of dimension {}",
                order.dim(),
                rhs.dim()
            )));
        }
        Ok(Self { base, rhs, order, grid })
    }

    pub fn dim(&self) -> usize {
        self.rhs.dim()
    }

    pub fn base(&self) -> &TorusBase {
        &self.base
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

    /// The same model with another order.
    pub fn with_order(mut self, order: OrderParams) -> Result<Self> {
        if order.dim() != self.dim() {
            return Err(Error::ShapeMismatch("order dimension differs from the model".into()));
        }
        self.order = order;
        Ok(self)
    }

    /// The same model on another grid.
    pub fn with_grid(self, grid: Grid) -> Result<Self> {
        Self::new(self.base, self.rhs, self.order, grid)
    }

    /// `F(θ, x)`.
    #[allow(non_snake_case)]
    pub fn eval_F(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<Vec<f64>> {
        self.grid.check(x)?;
        self.rhs.eval(&self.base, theta, x)
    }

    /// Integrates from `(θ₀, x₀)` over `[0, T]`; `T` is rounded up to a whole number of steps.
    pub fn integrate(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
        let problem = Problem { base: &self.base, rhs: &self.rhs, neutral: None, grid: self.grid };
        run_engine(&problem, theta0, x0, horizon)
    }
}

#[cfg(test)]
mod tests;
