//! The driving flow: an irrational rotation on the `d`-torus and the
//! quasi-periodic coefficients read off along its orbits.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `amp · cos(2π k·θ + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

impl TrigTerm {
    pub fn new(k: Vec<i64>, amp: f64, phase: f64) -> Self {
        Self { k, amp, phase }
    }

    /// The constant `c`, written as a term with `k = 0`.
    pub fn constant(dim_base: usize, c: f64) -> Self {
        Self { k: vec![0; dim_base], amp: c, phase: 0.0 }
    }
}

/// A point `θ ∈ [0, 1)^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasePoint {
    theta: Vec<f64>,
}

impl BasePoint {
    /// Wraps every coordinate into `[0, 1)`.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("base point needs finite coordinates".into()));
        }
        Ok(Self { theta: theta.into_iter().map(wrap).collect() })
    }

    pub fn origin(dim_base: usize) -> Self {
        Self { theta: vec![0.0; dim_base] }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

fn wrap(t: f64) -> f64 {
    let w = t.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// The torus rotation `θ ↦ θ + γt (mod 1)` together with named coefficient
/// functions `Σ amp·cos(2π k·θ + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TorusBase {
    freq: Vec<f64>,
    names: Vec<String>,
    coeffs: Vec<Vec<TrigTerm>>,
}

impl TorusBase {
    /// The rotation with frequency vector `freq`. Rational independence is the
    /// caller's responsibility; small integer relations are reported as a warning.
    pub fn new(freq: Vec<f64>) -> Result<Self> {
        if freq.is_empty() {
            return Err(Error::InvalidArgument("base needs at least one frequency".into()));
        }
        if let Some(bad) = freq.iter().find(|g| !(g.is_finite() && **g != 0.0)) {
            return Err(Error::InvalidArgument(format!("frequencies must be finite and nonzero, got {bad}")));
        }
        let base = Self { freq, names: Vec::new(), coeffs: Vec::new() };
        if let Some(k) = base.resonance() {
            log::warn!(
                "frequency vector satisfies the integer relation k = {k:?}; the flow is not minimal on the full torus"
            );
        }
        Ok(base)
    }

    /// Golden-mean rotation on the 2-torus, `γ = (1, (√5 − 1)/2)`.
    pub fn golden() -> Self {
        Self::new(vec![1.0, (5f64.sqrt() - 1.0) / 2.0]).expect("valid frequencies")
    }

    /// Registers a coefficient under `id`.
    pub fn add_coeff(&mut self, id: &str, terms: Vec<TrigTerm>) -> Result<usize> {
        if self.names.iter().any(|n| n == id) {
            return Err(Error::InvalidArgument(format!("coefficient `{id}` is defined twice")));
        }
        for t in &terms {
            if t.k.len() != self.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "coefficient `{id}` has a multi-index of length {} on a {}-torus",
                    t.k.len(),
                    self.dim()
                )));
            }
            if !(t.amp.is_finite() && t.phase.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        self.names.push(id.to_string());
        self.coeffs.push(terms);
        Ok(self.coeffs.len() - 1)
    }

    pub fn with_coeff(mut self, id: &str, terms: Vec<TrigTerm>) -> Result<Self> {
        self.add_coeff(id, terms)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.freq.len()
    }

    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    pub fn coeff_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff_names(&self) -> &[String] {
        &self.names
    }

    /// Index of a registered coefficient.
    pub fn coeff_index(&self, id: &str) -> Result<usize> {
        self.names.iter().position(|n| n == id).ok_or_else(|| Error::UnknownCoefficient(id.to_string()))
    }

    pub fn terms(&self, index: usize) -> &[TrigTerm] {
        &self.coeffs[index]
    }

    /// `θ·t`.
    pub fn advance(&self, theta: &BasePoint, t: f64) -> BasePoint {
        BasePoint { theta: theta.theta.iter().zip(&self.freq).map(|(th, g)| wrap(th + g * t)).collect() }
    }

    /// Value of coefficient `id` at `θ`.
    pub fn eval_coeff(&self, id: &str, theta: &BasePoint) -> Result<f64> {
        let i = self.coeff_index(id)?;
        self.check_point(theta)?;
        Ok(self.eval_index(i, theta.theta()))
    }

    pub(crate) fn eval_index(&self, index: usize, theta: &[f64]) -> f64 {
        self.coeffs[index].iter().map(|t| t.amp * (TAU * dot(&t.k, theta) + t.phase).cos()).sum()
    }

    /// Derivative of coefficient `index` along the flow, `d/dt c(θ·t)` at `t = 0`.
    pub(crate) fn rate_index(&self, index: usize, theta: &[f64]) -> f64 {
        self.coeffs[index]
            .iter()
            .map(|t| {
                let kg: f64 = t.k.iter().zip(&self.freq).map(|(k, g)| *k as f64 * g).sum();
                -t.amp * TAU * kg * (TAU * dot(&t.k, theta) + t.phase).sin()
            })
            .sum()
    }

    /// Values of all registered coefficients at `θ`.
    pub(crate) fn eval_all(&self, theta: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.eval_index(i, theta);
        }
    }

    pub(crate) fn rate_all(&self, theta: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.rate_index(i, theta);
        }
    }

    /// `Σ |amp|`, a bound for the coefficient over the whole torus.
    pub fn bound(&self, index: usize) -> f64 {
        self.coeffs[index].iter().map(|t| t.amp.abs()).sum()
    }

    /// Smallest value the coefficient can take according to `Σ|amp|` of its
    /// oscillating part: the `k = 0` terms minus the amplitudes of the rest.
    pub fn lower_bound(&self, index: usize) -> f64 {
        self.coeffs[index]
            .iter()
            .map(|t| if t.k.iter().all(|k| *k == 0) { t.amp * t.phase.cos() } else { -t.amp.abs() })
            .sum()
    }

    fn check_point(&self, theta: &BasePoint) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "base point has {} coordinates, torus has {}",
                theta.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Sampled times `t ∈ [t_min, t_max]` at which the orbit of `θ₀` comes
    /// within `δ` of `θ₀`, one per excursion (the closest sample of each run).
    /// When `δ ≥ 1/2` every sample qualifies and none are thinned.
    pub fn return_times(&self, theta0: &BasePoint, delta: f64, t_min: f64, t_max: f64, step: f64) -> Result<Vec<f64>> {
        self.check_point(theta0)?;
        if !(delta > 0.0 && step > 0.0 && t_min < t_max) {
            return Err(Error::InvalidArgument(format!(
                "return-time search needs δ > 0, step > 0 and t_min < t_max (got δ={delta}, step={step}, [{t_min}, {t_max}])"
            )));
        }
        let count = ((t_max - t_min) / step * (1.0 + 1e-12)).floor() as usize;
        let sample = |j: usize| t_min + j as f64 * step;
        let dist = |t: f64| base_distance(&self.advance(theta0, t), theta0).expect("same torus");
        if delta >= 0.5 {
            return Ok((0..=count).map(sample).collect());
        }
        let mut out = Vec::new();
        let mut best: Option<(f64, f64)> = None;
        for j in 0..=count {
            let t = sample(j);
            let d = dist(t);
            if d < delta {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((t, d));
                }
            } else if let Some((bt, _)) = best.take() {
                out.push(bt);
            }
        }
        if let Some((bt, _)) = best {
            out.push(bt);
        }
        Ok(out)
    }

    /// A nonzero integer vector `k` with `|k_i| ≤ 20` and `|k·γ| < 1e-9`, if one
    /// exists. Only searched for `d ≤ 4`.
    pub fn resonance(&self) -> Option<Vec<i64>> {
        const K: i64 = 20;
        let d = self.dim();
        if !(2..=4).contains(&d) {
            return None;
        }
        let mut k = vec![-K; d];
        loop {
            // Skip sign-reversed duplicates by requiring the first nonzero entry to be positive.
            let lead = k.iter().find(|v| **v != 0).copied();
            if lead.is_some_and(|v| v > 0) {
                let s: f64 = k.iter().zip(&self.freq).map(|(a, g)| *a as f64 * g).sum();
                if s.abs() < 1e-9 {
                    return Some(k);
                }
            }
            let mut i = 0;
            loop {
                if i == d {
                    return None;
                }
                k[i] += 1;
                if k[i] > K {
                    k[i] = -K;
                    i += 1;
                } else {
                    break;
                }
            }
        }
    }
}

fn dot(k: &[i64], theta: &[f64]) -> f64 {
    k.iter().zip(theta).map(|(a, b)| *a as f64 * b).sum()
}

/// Max-coordinate circle distance on the torus.
pub fn base_distance(a: &BasePoint, b: &BasePoint) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch("base points live on different tori".into()));
    }
    Ok(a.theta
        .iter()
        .zip(&b.theta)
        .map(|(x, y)| {
            let d = (x - y).abs();
            d.min(1.0 - d)
        })
        .fold(0.0, f64::max))
}
