use serde::Serialize;

use crate::baseflow::TorusBase;
use crate::error::{Error, Result};

/// A scalar coefficient: a constant or a registered function on the base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Coef {
    Const(f64),
    /// Index of a coefficient registered on the [`TorusBase`].
    Base(usize),
}

impl Coef {
    #[inline]
    pub(crate) fn value(&self, vals: &[f64]) -> f64 {
        match *self {
            Coef::Const(c) => c,
            Coef::Base(i) => vals[i],
        }
    }

    #[inline]
    pub(crate) fn rate(&self, rates: &[f64]) -> f64 {
        match *self {
            Coef::Const(_) => 0.0,
            Coef::Base(i) => rates[i],
        }
    }

    /// `sup_θ |c(θ)|` as bounded by the amplitude sum.
    pub fn bound(&self, base: &TorusBase) -> f64 {
        match *self {
            Coef::Const(c) => c.abs(),
            Coef::Base(i) => base.bound(i),
        }
    }

    /// Lower bound of `c(θ)` over the torus.
    pub fn lower_bound(&self, base: &TorusBase) -> f64 {
        match *self {
            Coef::Const(c) => c,
            Coef::Base(i) => base.lower_bound(i),
        }
    }

    /// Value at an explicit base point.
    pub fn at(&self, base: &TorusBase, theta: &[f64]) -> f64 {
        match *self {
            Coef::Const(c) => c,
            Coef::Base(i) => base.eval_index(i, theta),
        }
    }

    pub(crate) fn check(&self, base: &TorusBase) -> Result<()> {
        match *self {
            Coef::Const(c) if !c.is_finite() => Err(Error::NonFinite),
            Coef::Base(i) if i >= base.coeff_count() => Err(Error::UnknownCoefficient(format!("#{i}"))),
            _ => Ok(()),
        }
    }
}

impl From<f64> for Coef {
    fn from(c: f64) -> Self {
        Coef::Const(c)
    }
}

/// A sparse `m × m` matrix of coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefMatrix {
    dim: usize,
    entries: Vec<(usize, usize, Coef)>,
}

impl CoefMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// The `1 × 1` matrix `[c]`.
    pub fn scalar(c: impl Into<Coef>) -> Self {
        Self::zeros(1).with(0, 0, c)
    }

    pub fn diagonal(diag: Vec<Coef>) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, c) in diag.into_iter().enumerate() {
            m.set(i, i, c);
        }
        m
    }

    /// Dense constant matrix from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::ShapeMismatch(format!("row {i} has {} entries, expected {dim}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m.set(i, j, v);
                }
            }
        }
        Ok(m)
    }

    pub fn with(mut self, i: usize, j: usize, c: impl Into<Coef>) -> Self {
        self.set(i, j, c);
        self
    }

    /// Sets entry `(i, j)`, replacing any previous value.
    pub fn set(&mut self, i: usize, j: usize, c: impl Into<Coef>) {
        assert!(i < self.dim && j < self.dim, "entry ({i}, {j}) outside a {0}×{0} matrix", self.dim);
        let c = c.into();
        self.entries.retain(|(a, b, _)| (*a, *b) != (i, j));
        if c != Coef::Const(0.0) {
            self.entries.push((i, j, c));
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Coef)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Coef {
        self.entries.iter().find(|(a, b, _)| (*a, *b) == (i, j)).map(|e| e.2).unwrap_or(Coef::Const(0.0))
    }

    /// `out += M(θ) x`.
    #[inline]
    pub(crate) fn apply_add(&self, vals: &[f64], x: &[f64], out: &mut [f64]) {
        for &(i, j, c) in &self.entries {
            out[i] += c.value(vals) * x[j];
        }
    }

    /// `out += Ṁ(θ) x`, the derivative of the coefficients along the flow.
    #[inline]
    pub(crate) fn apply_rate_add(&self, rates: &[f64], x: &[f64], out: &mut [f64]) {
        for &(i, j, c) in &self.entries {
            if let Coef::Base(_) = c {
                out[i] += c.rate(rates) * x[j];
            }
        }
    }

    /// Dense row-major values at the coefficient values `vals`.
    pub(crate) fn dense(&self, vals: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.dim * self.dim];
        for &(i, j, c) in &self.entries {
            d[i * self.dim + j] += c.value(vals);
        }
        d
    }

    /// Dense row-major derivative along the flow at the coefficient rates `rates`.
    pub(crate) fn dense_rate(&self, rates: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.dim * self.dim];
        for &(i, j, c) in &self.entries {
            d[i * self.dim + j] += c.rate(rates);
        }
        d
    }

    /// Row sums of `sup_θ |M_ij(θ)|`.
    pub fn row_bounds(&self, base: &TorusBase) -> Vec<f64> {
        let mut rows = vec![0.0; self.dim];
        for &(i, _, c) in &self.entries {
            rows[i] += c.bound(base);
        }
        rows
    }

    /// `sup_θ ‖M(θ)‖` in the operator norm induced by the maximum norm.
    pub fn norm_bound(&self, base: &TorusBase) -> f64 {
        self.row_bounds(base).into_iter().fold(0.0, f64::max)
    }

    /// Base coefficient indices referenced by the matrix.
    pub(crate) fn base_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().filter_map(|e| match e.2 {
            Coef::Base(i) => Some(i),
            Coef::Const(_) => None,
        })
    }

    pub(crate) fn check(&self, base: &TorusBase, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::ShapeMismatch(format!(
                "{0}×{0} coefficient matrix in a system of dimension {dim}",
                self.dim
            )));
        }
        self.entries.iter().try_for_each(|e| e.2.check(base))
    }
}
