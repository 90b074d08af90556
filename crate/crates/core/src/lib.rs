//! Simulation and verification of nonautonomous functional and neutral
//! differential equations with infinite delay, driven by a quasi-periodic
//! torus rotation.
//!
//! * [`history`]: the phase space, its compact-open metric, the exponential
//!   order and the bounded-variation constructions around it.
//! * [`baseflow`]: the torus rotation and quasi-periodic coefficients.
//! * [`fde`]: models `z′ = F(θ·t, z_t)`, the RK4 method of steps, and probes.
//! * [`neutral`]: the operator `D`, its convolution operator `D̂` and inverse,
//!   and neutral models `d/dt D(θ·t, z_t) = G(θ·t, z_t)`.
//! * [`models`]: ready-made model families and the hypothesis audit.

pub mod baseflow;
pub mod error;
pub mod fde;
pub mod history;
pub mod models;
pub mod neutral;
mod quadrature;
pub mod sampling;

pub use baseflow::{base_distance, BasePoint, TorusBase, TrigTerm};
pub use error::{Error, Result};
pub use fde::probes::{
    CopyOfBaseReport, MonotonicityReport, ProbeConfig, QuasimonotoneReport, SkewProductSystem, StabilityTable,
};
pub use fde::{Coef, CoefMatrix, FdeModel, Grid, RightHandSide, Trajectory};
pub use history::{metric, seminorm, HistoryFunction, OrderParams, METRIC_TERMS};
pub use neutral::{NeutralOperator, NfdeModel};
