use super::series::{snapshot_metric, Series};
use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::{metric, steps_in, HistoryFunction};

/// The output of an integration run on the uniform grid `t_k = kΔ`, `k = 0..=n`.
///
/// The run starts at `t = 0` from `θ₀`; the base point at `t_k` is `θ₀·t_k`.
/// For neutral equations the trajectory also carries `w(t) = D(θ₀·t, z_t)`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    theta0: BasePoint,
    freq: Vec<f64>,
    step: f64,
    segments: usize,
    steps: usize,
    pub(crate) z: Series,
    pub(crate) w: Option<Series>,
}

impl Trajectory {
    pub(crate) fn new(
        base: &TorusBase,
        theta0: &BasePoint,
        segments: usize,
        steps: usize,
        z: Series,
        w: Option<Series>,
        step: f64,
    ) -> Self {
        Self { theta0: theta0.clone(), freq: base.freq().to_vec(), step, segments, steps, z, w }
    }

    pub fn t0(&self) -> f64 {
        0.0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    /// Number of integration steps; output times are `0..=steps`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.step
    }

    /// Grid segments per snapshot, `L/Δ`.
    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn is_neutral(&self) -> bool {
        self.w.is_some()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    pub fn theta0(&self) -> &BasePoint {
        &self.theta0
    }

    /// `θ₀·t_k`.
    pub fn base_point(&self, k: usize) -> BasePoint {
        let t = self.time(k);
        let theta = self.theta0.theta().iter().zip(&self.freq).map(|(th, g)| th + g * t).collect();
        BasePoint::new(theta).expect("finite base point")
    }

    /// `z(t_k)`.
    pub fn head(&self, k: usize) -> &[f64] {
        self.z.node(k as i64)
    }

    /// `w(t_k) = D(θ₀·t_k, z_{t_k})` for neutral runs.
    pub fn neutral_head(&self, k: usize) -> Option<&[f64]> {
        self.w.as_ref().map(|w| w.node(k as i64))
    }

    /// Grid index of an output time.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        match steps_in(t, self.step) {
            Some(k) if k <= self.steps => Ok(k),
            _ => Err(Error::InvalidArgument(format!(
                "t = {t} is not an output time in [0, {}] with step {}",
                self.horizon(),
                self.step
            ))),
        }
    }

    /// The state `u(t, θ₀, x) = z_t`.
    pub fn snapshot(&self, t: f64) -> Result<HistoryFunction> {
        Ok(self.snapshot_at(self.index_of(t)?))
    }

    pub fn snapshot_at(&self, k: usize) -> HistoryFunction {
        self.z.snapshot(k as i64, self.segments)
    }

    /// `D̂₂(θ₀·t_k, z_{t_k})`, the neutral coordinates of the state.
    pub fn neutral_snapshot_at(&self, k: usize) -> Option<HistoryFunction> {
        self.w.as_ref().map(|w| w.snapshot(k as i64, self.segments))
    }

    /// Snapshot in the coordinates where the order is checked: the neutral
    /// coordinates for neutral runs, the state itself otherwise.
    pub fn order_snapshot_at(&self, k: usize) -> HistoryFunction {
        self.neutral_snapshot_at(k).unwrap_or_else(|| self.snapshot_at(k))
    }

    pub(crate) fn order_series(&self) -> &Series {
        self.w.as_ref().unwrap_or(&self.z)
    }

    /// Largest `‖z(t)‖` over the run, initial history included.
    pub fn sup_norm(&self) -> f64 {
        (self.z.first()..=self.z.last()).flat_map(|j| self.z.node(j).iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `d(z_{t_j}, z'_{t_k})` between snapshots of this run and `other` (possibly the same run).
    pub fn snapshot_distance(&self, j: usize, other: &Trajectory, k: usize, n_terms: usize) -> f64 {
        series_distance(&self.z, j, &other.z, k, self.segments, self.step, n_terms)
    }

    /// As [`Self::snapshot_distance`] in neutral coordinates (falls back to the state).
    pub fn order_distance(&self, j: usize, other: &Trajectory, k: usize, n_terms: usize) -> f64 {
        series_distance(self.order_series(), j, other.order_series(), k, self.segments, self.step, n_terms)
    }
}

fn series_distance(a: &Series, j: usize, b: &Series, k: usize, segments: usize, step: f64, n_terms: usize) -> f64 {
    match steps_in(1.0, step) {
        Some(per_unit) if per_unit >= 1 => snapshot_metric(a, j as i64, b, k as i64, segments, per_unit, n_terms),
        _ => metric(&a.snapshot(j as i64, segments), &b.snapshot(k as i64, segments), n_terms)
            .expect("snapshots share a grid"),
    }
}
