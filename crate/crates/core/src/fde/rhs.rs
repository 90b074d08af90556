use serde::Serialize;

use super::coef::{Coef, CoefMatrix};
use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::{steps_in, HistoryFunction};
use crate::quadrature::memory_integral;

/// Kernel mass allowed beyond the truncation depth.
pub const TRUNCATION_BUDGET: f64 = 1e-8;

/// The discretisation `(Δ, L)` shared by a model and its histories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    step: f64,
    segments: usize,
}

impl Grid {
    pub fn new(step: f64, depth: f64) -> Result<Self> {
        let segments = crate::history::grid_segments(step, depth)?;
        Ok(Self { step, segments })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn depth(&self) -> f64 {
        self.segments as f64 * self.step
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Number of steps in a delay, which must be a positive multiple of `Δ` not beyond `L`.
    pub fn delay_steps(&self, delay: f64) -> Result<usize> {
        match steps_in(delay, self.step) {
            Some(d) if d >= 1 && d <= self.segments => Ok(d),
            Some(0) => Err(Error::Grid(format!("delay {delay} is shorter than the step {}", self.step))),
            Some(_) => Err(Error::Grid(format!("delay {delay} exceeds the depth {}", self.depth()))),
            None => Err(Error::Grid(format!("delay {delay} is not a multiple of the step {}", self.step))),
        }
    }

    /// Errors unless `x` is sampled on this grid.
    pub fn check(&self, x: &HistoryFunction) -> Result<()> {
        if x.segments() != self.segments || (x.step() - self.step).abs() > 1e-9 * self.step {
            return Err(Error::Grid(format!(
                "history on (Δ={}, L={}) does not match the model grid (Δ={}, L={})",
                x.step(),
                x.depth(),
                self.step,
                self.depth()
            )));
        }
        Ok(())
    }

    pub fn constant(&self, value: &[f64]) -> Result<HistoryFunction> {
        HistoryFunction::constant(self.step, self.depth(), value)
    }

    pub fn sample<V: AsRef<[f64]>>(&self, dim: usize, f: impl FnMut(f64) -> V) -> Result<HistoryFunction> {
        HistoryFunction::from_fn(dim, self.step, self.depth(), f)
    }

    pub(crate) fn check_decay(&self, decay: f64) -> Result<()> {
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel decay must be positive, got {decay}")));
        }
        if (-decay * self.depth()).exp() >= TRUNCATION_BUDGET {
            return Err(Error::DepthTooSmall { depth: self.depth(), needed: -TRUNCATION_BUDGET.ln() / decay });
        }
        Ok(())
    }
}

/// `coef(θ) x(−delay)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayTerm {
    pub delay: f64,
    pub coef: CoefMatrix,
}

/// `coef(θ) ∫_{−∞}^0 e^{decay·s} x(s) ds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryTerm {
    pub decay: f64,
    pub coef: CoefMatrix,
}

/// Right-hand side of the class used throughout: linear in the history with
/// quasi-periodic coefficients, plus forcing and an optional bounded
/// nonlinearity `amp_i tanh(x_i(0))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RightHandSide {
    dim: usize,
    instant: CoefMatrix,
    delays: Vec<DelayTerm>,
    memory: Vec<MemoryTerm>,
    forcing: Vec<Coef>,
    tanh_amp: Option<Vec<f64>>,
}

impl RightHandSide {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            instant: CoefMatrix::zeros(dim),
            delays: Vec::new(),
            memory: Vec::new(),
            forcing: vec![Coef::Const(0.0); dim],
            tanh_amp: None,
        }
    }

    pub fn with_instant(mut self, m: CoefMatrix) -> Self {
        self.instant = m;
        self
    }

    pub fn with_delay(mut self, delay: f64, coef: CoefMatrix) -> Self {
        self.delays.push(DelayTerm { delay, coef });
        self
    }

    pub fn with_memory(mut self, decay: f64, coef: CoefMatrix) -> Self {
        self.memory.push(MemoryTerm { decay, coef });
        self
    }

    pub fn with_forcing(mut self, forcing: Vec<Coef>) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_tanh(mut self, amp: Vec<f64>) -> Self {
        self.tanh_amp = Some(amp);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instant(&self) -> &CoefMatrix {
        &self.instant
    }

    pub fn delays(&self) -> &[DelayTerm] {
        &self.delays
    }

    pub fn memory(&self) -> &[MemoryTerm] {
        &self.memory
    }

    pub fn forcing(&self) -> &[Coef] {
        &self.forcing
    }

    pub fn tanh_amp(&self) -> Option<&[f64]> {
        self.tanh_amp.as_deref()
    }

    pub fn is_linear(&self) -> bool {
        self.tanh_amp.as_ref().is_none_or(|a| a.iter().all(|v| *v == 0.0))
    }

    /// Validates dimensions, coefficient references, delays and decays against a grid.
    pub fn validate(&self, base: &TorusBase, grid: &Grid) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        self.instant.check(base, self.dim)?;
        for d in &self.delays {
            d.coef.check(base, self.dim)?;
            grid.delay_steps(d.delay)?;
        }
        for t in &self.memory {
            t.coef.check(base, self.dim)?;
            grid.check_decay(t.decay)?;
        }
        if self.forcing.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "{} forcing entries for dimension {}",
                self.forcing.len(),
                self.dim
            )));
        }
        self.forcing.iter().try_for_each(|c| c.check(base))?;
        if let Some(a) = &self.tanh_amp {
            if a.len() != self.dim || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch("nonlinearity amplitudes do not match the dimension".into()));
            }
        }
        Ok(())
    }

    /// Evaluates the right side on a history at `θ`.
    pub fn eval(&self, base: &TorusBase, theta: &BasePoint, x: &HistoryFunction) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "history of dimension {} for a system of dimension {}",
                x.dim(),
                self.dim
            )));
        }
        let m = self.dim;
        let mut delayed = vec![0.0; m * self.delays.len()];
        for (t, d) in self.delays.iter().enumerate() {
            x.eval_into(-d.delay, &mut delayed[t * m..(t + 1) * m])?;
        }
        let mut memory = Vec::with_capacity(m * self.memory.len());
        for t in &self.memory {
            memory.extend(memory_integral(x, t.decay));
        }
        let mut vals = vec![0.0; base.coeff_count()];
        base.eval_all(theta.theta(), &mut vals);
        let mut out = vec![0.0; m];
        self.apply(&vals, x.head(), &delayed, &memory, &mut out);
        Ok(out)
    }

    /// `out = F` given the coefficient values, the head, the delayed values
    /// (term by term) and the memory integrals (term by term).
    #[inline]
    pub(crate) fn apply(&self, vals: &[f64], head: &[f64], delayed: &[f64], memory: &[f64], out: &mut [f64]) {
        let m = self.dim;
        for (o, f) in out.iter_mut().zip(&self.forcing) {
            *o = f.value(vals);
        }
        self.instant.apply_add(vals, head, out);
        for (t, d) in self.delays.iter().enumerate() {
            d.coef.apply_add(vals, &delayed[t * m..(t + 1) * m], out);
        }
        for (t, mt) in self.memory.iter().enumerate() {
            mt.coef.apply_add(vals, &memory[t * m..(t + 1) * m], out);
        }
        if let Some(a) = &self.tanh_amp {
            for i in 0..m {
                out[i] += a[i] * head[i].tanh();
            }
        }
    }

    /// Lipschitz constant of the history dependence in the sup norm.
    pub fn lipschitz_bound(&self, base: &TorusBase) -> f64 {
        let mut l = self.instant.norm_bound(base);
        l += self.delays.iter().map(|d| d.coef.norm_bound(base)).sum::<f64>();
        l += self.memory.iter().map(|t| t.coef.norm_bound(base) / t.decay).sum::<f64>();
        l + self.tanh_amp.as_ref().map_or(0.0, |a| a.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// `sup_θ ‖forcing(θ)‖`.
    pub fn forcing_bound(&self, base: &TorusBase) -> f64 {
        self.forcing.iter().map(|c| c.bound(base)).fold(0.0, f64::max)
    }
}
