//! The phase space of bounded continuous histories on `(−∞, 0]`.
//!
//! A [`HistoryFunction`] stores `x(0), x(−Δ), …, x(−L)` and treats `x(s)` as
//! constant for `s ≤ −L`. Between nodes it interpolates linearly unless
//! one-sided slopes are attached, in which case each segment is cubic Hermite.
//! Trajectory snapshots carry slopes so that lookups inside a step are
//! fourth-order accurate.

mod envelope;
mod order;
mod variation;

pub use envelope::{order_envelope, shifted_envelope};
pub use order::{OrderCheck, OrderParams};
pub use variation::{construct_h, construct_h0, regularity, total_variation, Regularity};

use crate::error::{Error, Result};
use crate::quadrature::hermite;

/// Relative tolerance used when checking that lengths are multiples of the step.
pub(crate) const GRID_EPS: f64 = 1e-9;

/// Number of whole steps in `length`, or `None` when `length` is not a multiple of `step`.
pub(crate) fn steps_in(length: f64, step: f64) -> Option<usize> {
    let q = length / step;
    let r = q.round();
    if r >= 0.0 && (q - r).abs() <= GRID_EPS * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryFunction {
    dim: usize,
    step: f64,
    segments: usize,
    /// Node `i` (time `−iΔ`) occupies `values[i*dim..(i+1)*dim]`.
    values: Vec<f64>,
    /// Per segment `i` (between `−(i+1)Δ` and `−iΔ`): the slope at the older end
    /// followed by the slope at the newer end, `2*dim` entries in total.
    slopes: Option<Vec<f64>>,
}

impl HistoryFunction {
    /// Builds a history from node values listed newest first.
    pub fn from_nodes(dim: usize, step: f64, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        if !values.len().is_multiple_of(dim) || values.len() < 2 * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form at least two nodes of dimension {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let segments = values.len() / dim - 1;
        Ok(Self { dim, step, segments, values, slopes: None })
    }

    /// Samples `f` at the grid `0, −Δ, …, −L`.
    pub fn from_fn<V, F>(dim: usize, step: f64, depth: f64, mut f: F) -> Result<Self>
    where
        V: AsRef<[f64]>,
        F: FnMut(f64) -> V,
    {
        let segments = grid_segments(step, depth)?;
        let mut values = Vec::with_capacity((segments + 1) * dim);
        for i in 0..=segments {
            let v = f(-(i as f64) * step);
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!("sampler returned {} components, expected {dim}", v.len())));
            }
            values.extend_from_slice(v);
        }
        Self::from_nodes(dim, step, values)
    }

    pub fn constant(step: f64, depth: f64, value: &[f64]) -> Result<Self> {
        Self::from_fn(value.len(), step, depth, |_| value)
    }

    pub fn zeros(dim: usize, step: f64, depth: f64) -> Result<Self> {
        Self::constant(step, depth, &vec![0.0; dim])
    }

    /// Attaches per-segment slopes (see the field layout above), switching
    /// evaluation to cubic Hermite interpolation.
    pub fn with_slopes(mut self, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != 2 * self.segments * self.dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} slope entries, got {}",
                2 * self.segments * self.dim,
                slopes.len()
            )));
        }
        if slopes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.slopes = Some(slopes);
        Ok(self)
    }

    /// Drops attached slopes, reverting to linear interpolation.
    pub fn without_slopes(mut self) -> Self {
        self.slopes = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn depth(&self) -> f64 {
        self.segments as f64 * self.step
    }

    /// Number of grid segments `L/Δ`.
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Number of stored nodes, `L/Δ + 1`.
    pub fn len(&self) -> usize {
        self.segments + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of node `i`.
    pub fn time(&self, i: usize) -> f64 {
        -(i as f64) * self.step
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn head(&self) -> &[f64] {
        self.node(0)
    }

    /// The constant value taken for `s ≤ −L`.
    pub fn tail(&self) -> &[f64] {
        self.node(self.segments)
    }

    pub fn slopes(&self) -> Option<&[f64]> {
        self.slopes.as_deref()
    }

    /// Slope of component `k` at the older (`lo`) and newer (`hi`) end of segment `i`.
    pub(crate) fn segment_slopes(&self, i: usize, k: usize) -> Option<(f64, f64)> {
        self.slopes.as_ref().map(|sl| (sl[2 * i * self.dim + k], sl[(2 * i + 1) * self.dim + k]))
    }

    /// `x(s)` for `s ≤ 0`.
    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(s, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        if s > 0.0 || s.is_nan() {
            return Err(Error::FuturePoint(s));
        }
        if out.len() != self.dim {
            return Err(Error::ShapeMismatch("output buffer has the wrong length".into()));
        }
        let u = -s / self.step;
        if u >= self.segments as f64 {
            out.copy_from_slice(self.tail());
            return Ok(());
        }
        let i = u.floor() as usize;
        let frac = u - i as f64;
        if frac == 0.0 {
            out.copy_from_slice(self.node(i));
            return Ok(());
        }
        let newer = self.node(i);
        let older = self.node(i + 1);
        match &self.slopes {
            None => {
                for k in 0..self.dim {
                    out[k] = (1.0 - frac) * newer[k] + frac * older[k];
                }
            }
            Some(_) => {
                for k in 0..self.dim {
                    let (lo, hi) = self.segment_slopes(i, k).unwrap_or_default();
                    out[k] = hermite(older[k], lo, newer[k], hi, self.step, 1.0 - frac);
                }
            }
        }
        Ok(())
    }

    /// `‖x‖∞`, the maximum over nodes and components (the tail is the last node).
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest change between neighbouring nodes, the grid modulus of continuity.
    pub fn grid_modulus(&self) -> f64 {
        let d = self.dim;
        self.values.windows(d + 1).map(|w| (w[d] - w[0]).abs()).fold(0.0, f64::max)
    }

    /// Errors unless `other` lives on the same grid.
    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!("dimensions {} and {}", self.dim, other.dim)));
        }
        if self.segments != other.segments || (self.step - other.step).abs() > GRID_EPS * self.step {
            return Err(Error::ShapeMismatch(format!(
                "grids (Δ={}, L={}) and (Δ={}, L={})",
                self.step,
                self.depth(),
                other.step,
                other.depth()
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`. Slopes are kept when both operands carry them.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let slopes = match (&self.slopes, &other.slopes) {
            (Some(p), Some(q)) => Some(p.iter().zip(q).map(|(x, y)| a * x + b * y).collect()),
            _ => None,
        };
        Ok(Self { values, slopes, ..self.clone() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            slopes: self.slopes.as_ref().map(|s| s.iter().map(|v| c * v).collect()),
            ..self.clone()
        }
    }

    /// Adds the constant vector `c` to every value.
    pub fn offset(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim {
            return Err(Error::ShapeMismatch("offset has the wrong dimension".into()));
        }
        let mut out = self.clone();
        for node in out.values.chunks_mut(self.dim) {
            for (v, ck) in node.iter_mut().zip(c) {
                *v += ck;
            }
        }
        Ok(out)
    }
}

pub(crate) fn grid_segments(step: f64, depth: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    match steps_in(depth, step) {
        Some(n) if n >= 1 => Ok(n),
        _ => Err(Error::Grid(format!("depth {depth} is not a positive multiple of the step {step}"))),
    }
}

/// `‖x − y‖_n = sup_{s∈[−n,0]} ‖x(s) − y(s)‖`, the maximum norm taken over the
/// grid points in the window together with its left end.
pub fn seminorm(x: &HistoryFunction, y: &HistoryFunction, n: usize) -> Result<f64> {
    x.check_same_grid(y)?;
    if n == 0 {
        return Err(Error::InvalidArgument("seminorm index must be at least 1".into()));
    }
    let mut sup = 0.0f64;
    let last = nodes_within(n as f64, x.step).min(x.segments);
    for i in 0..=last {
        sup = sup.max(node_gap(x, y, i));
    }
    Ok(sup.max(end_gap(x, y, n as f64)))
}

/// The compact-open metric `Σ_{n=1}^{N} 2^{−n} ‖x−y‖_n / (1 + ‖x−y‖_n)`.
///
/// Dropping the terms beyond `N = n_terms` changes the value by at most `2^{−N}`.
pub fn metric(x: &HistoryFunction, y: &HistoryFunction, n_terms: usize) -> Result<f64> {
    x.check_same_grid(y)?;
    if n_terms == 0 {
        return Err(Error::InvalidArgument("metric needs at least one term".into()));
    }
    let mut sup = 0.0f64;
    let mut next = 0usize;
    let mut total = 0.0;
    let mut weight = 1.0;
    for n in 1..=n_terms {
        let last = nodes_within(n as f64, x.step).min(x.segments);
        while next <= last {
            sup = sup.max(node_gap(x, y, next));
            next += 1;
        }
        let sn = sup.max(end_gap(x, y, n as f64));
        weight *= 0.5;
        total += weight * sn / (1.0 + sn);
    }
    Ok(total)
}

/// Default number of metric terms; the truncation error `2^{−40}` is far below every test tolerance.
pub const METRIC_TERMS: usize = 40;

fn nodes_within(window: f64, step: f64) -> usize {
    (window / step * (1.0 + GRID_EPS)).floor() as usize
}

fn node_gap(x: &HistoryFunction, y: &HistoryFunction, i: usize) -> f64 {
    x.node(i).iter().zip(y.node(i)).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn end_gap(x: &HistoryFunction, y: &HistoryFunction, n: f64) -> f64 {
    if n >= x.depth() || steps_in(n, x.step).is_some() {
        return 0.0;
    }
    let (Ok(a), Ok(b)) = (x.eval(-n), y.eval(-n)) else {
        return 0.0;
    };
    a.iter().zip(&b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}
