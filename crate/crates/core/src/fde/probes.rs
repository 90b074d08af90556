//! Empirical checks of the hypotheses and conclusions of the monotone theory:
//! quasimonotonicity, order preservation, uniform stability for the order,
//! continuity on balls, and the copy-of-the-base behaviour of omega-limit sets.
//!
//! Every probe is written against [`SkewProductSystem`], implemented both by
//! [`FdeModel`] and by [`NfdeModel`]. For neutral models the order lives in the
//! coordinates `D̂₂(θ, x)`, and the probes work there.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use super::{FdeModel, Grid, Trajectory};
use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::{metric, regularity, HistoryFunction, OrderParams, Regularity, METRIC_TERMS};
use crate::neutral::NfdeModel;
use crate::sampling;

/// What the probes need from a model: its flow, its order, and the
/// quasimonotonicity gap.
pub trait SkewProductSystem: Sync {
    fn dim(&self) -> usize;
    fn base(&self) -> &TorusBase;
    fn grid(&self) -> Grid;
    fn order(&self) -> &OrderParams;
    fn integrate(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory>;
    /// Coordinates in which `≤_A` is applied.
    fn to_order_space(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<HistoryFunction>;
    /// Inverse of [`Self::to_order_space`].
    fn order_space_preimage(&self, theta: &BasePoint, y: &HistoryFunction) -> Result<HistoryFunction>;
    /// Componentwise `F(θ,y) − F(θ,x) − A(y(0) − x(0))`, or its neutral analogue
    /// `G(θ,y) − G(θ,x) − A(D(θ,y) − D(θ,x))`, together with a magnitude scale for tolerances.
    fn quasimonotone_gap(&self, theta: &BasePoint, x: &HistoryFunction, y: &HistoryFunction)
        -> Result<(Vec<f64>, f64)>;
}

fn gap(a: &[f64], b: &[f64], da: &[f64], db: &[f64], order: &OrderParams) -> (Vec<f64>, f64) {
    let mut scale = 0.0f64;
    let g = (0..a.len())
        .map(|i| {
            let lin = order.diag()[i] * (db[i] - da[i]);
            scale = scale.max(a[i].abs()).max(b[i].abs()).max(lin.abs());
            b[i] - a[i] - lin
        })
        .collect();
    (g, scale)
}

impl SkewProductSystem for FdeModel {
    fn dim(&self) -> usize {
        FdeModel::dim(self)
    }
    fn base(&self) -> &TorusBase {
        FdeModel::base(self)
    }
    fn grid(&self) -> Grid {
        FdeModel::grid(self)
    }
    fn order(&self) -> &OrderParams {
        FdeModel::order(self)
    }
    fn integrate(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
        FdeModel::integrate(self, theta0, x0, horizon)
    }
    fn to_order_space(&self, _: &BasePoint, x: &HistoryFunction) -> Result<HistoryFunction> {
        Ok(x.clone())
    }
    fn order_space_preimage(&self, _: &BasePoint, y: &HistoryFunction) -> Result<HistoryFunction> {
        Ok(y.clone())
    }
    fn quasimonotone_gap(
        &self,
        theta: &BasePoint,
        x: &HistoryFunction,
        y: &HistoryFunction,
    ) -> Result<(Vec<f64>, f64)> {
        let fx = self.eval_F(theta, x)?;
        let fy = self.eval_F(theta, y)?;
        Ok(gap(&fx, &fy, x.head(), y.head(), self.order()))
    }
}

impl SkewProductSystem for NfdeModel {
    fn dim(&self) -> usize {
        NfdeModel::dim(self)
    }
    fn base(&self) -> &TorusBase {
        NfdeModel::base(self)
    }
    fn grid(&self) -> Grid {
        NfdeModel::grid(self)
    }
    fn order(&self) -> &OrderParams {
        NfdeModel::order(self)
    }
    fn integrate(&self, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
        NfdeModel::integrate(self, theta0, x0, horizon)
    }
    fn to_order_space(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<HistoryFunction> {
        self.operator().eval_dhat2(theta, x)
    }
    fn order_space_preimage(&self, theta: &BasePoint, y: &HistoryFunction) -> Result<HistoryFunction> {
        self.operator().invert(theta, y)
    }
    fn quasimonotone_gap(
        &self,
        theta: &BasePoint,
        x: &HistoryFunction,
        y: &HistoryFunction,
    ) -> Result<(Vec<f64>, f64)> {
        let gx = self.eval_G(theta, x)?;
        let gy = self.eval_G(theta, y)?;
        let dx = self.operator().eval_d(theta, x)?;
        let dy = self.operator().eval_d(theta, y)?;
        Ok(gap(&gx, &gy, &dx, &dy, self.order()))
    }
}

/// A random pair `x ≤ y` in the order of `sys` at `θ`: `x` a smooth history with
/// `‖x‖∞ ≤ amplitude`, and `y = x + D̂⁻¹(d)` for a cone element `d` with `‖d‖∞ ≤ scale`.
pub fn ordered_pair<S: SkewProductSystem + ?Sized, R: Rng>(
    sys: &S,
    rng: &mut R,
    theta: &BasePoint,
    amplitude: f64,
    scale: f64,
) -> Result<(HistoryFunction, HistoryFunction)> {
    let grid = sys.grid();
    let x = sampling::history(rng, sys.dim(), &grid, amplitude)?;
    let d = sampling::cone_element(rng, sys.order(), &grid, scale)?;
    let y = x.add(&sys.order_space_preimage(theta, &d)?)?;
    Ok((x, y))
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasimonotoneReport {
    pub samples: usize,
    /// Smallest component of the gap over all samples.
    pub min_margin: f64,
    /// Largest tolerance applied to a sample.
    pub tolerance: f64,
    pub pass: bool,
}

/// Samples `n_pairs` random base points and ordered pairs and reports the
/// smallest quasimonotonicity gap. A sample passes when its gap is at least
/// `−tol·(1 + scale)`, with `tol` the order tolerance.
pub fn check_quasimonotone<S: SkewProductSystem + ?Sized>(
    sys: &S,
    seed: u64,
    n_pairs: usize,
) -> Result<QuasimonotoneReport> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("at least one pair is needed".into()));
    }
    let mut rng = sampling::rng(seed);
    let mut min_margin = f64::INFINITY;
    let mut tolerance = 0.0f64;
    let mut pass = true;
    for _ in 0..n_pairs {
        let theta = sampling::base_point(&mut rng, sys.base());
        let (x, y) = ordered_pair(sys, &mut rng, &theta, 1.0, 1.0)?;
        let (g, scale) = sys.quasimonotone_gap(&theta, &x, &y)?;
        let tol = sys.order().tol() * (1.0 + scale);
        let m = g.iter().copied().fold(f64::INFINITY, f64::min);
        pass &= m >= -tol;
        min_margin = min_margin.min(m);
        tolerance = tolerance.max(tol);
    }
    Ok(QuasimonotoneReport { samples: n_pairs, min_margin, tolerance, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub samples: usize,
    /// Smallest gap over the separated components.
    pub min_margin: f64,
    pub pass: bool,
    /// Always true: the hypothesis concerns points with a backward extension,
    /// for which late-time states of a forward run only stand in.
    pub heuristic: bool,
}

/// Componentwise separation: starting from late states `x` of a run from
/// `(θ₀, x₀)`, shifts a random nonempty set `J` of components by a positive
/// constant in the order coordinates and requires a strictly positive gap on `J`.
pub fn check_separation<S: SkewProductSystem + ?Sized>(
    sys: &S,
    theta0: &BasePoint,
    x0: &HistoryFunction,
    horizon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SeparationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is needed".into()));
    }
    let traj = sys.integrate(theta0, x0, horizon)?;
    let mut rng = sampling::rng(seed);
    let m = sys.dim();
    let grid = sys.grid();
    let mut min_margin = f64::INFINITY;
    for _ in 0..n_samples {
        // Late half of the run.
        let k = rng.random_range(traj.steps() / 2..=traj.steps());
        let theta = traj.base_point(k);
        let x = traj.snapshot_at(k);
        let mut shift = vec![0.0; m];
        let mut chosen: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        if chosen.is_empty() {
            chosen.push(rng.random_range(0..m));
        }
        let size = rng.random_range(0.01..1.0);
        for &i in &chosen {
            shift[i] = size;
        }
        let y = x.add(&sys.order_space_preimage(&theta, &grid.constant(&shift)?)?)?;
        let (g, _) = sys.quasimonotone_gap(&theta, &x, &y)?;
        min_margin = chosen.iter().map(|&i| g[i]).fold(min_margin, f64::min);
    }
    Ok(SeparationReport { samples: n_samples, min_margin, pass: min_margin > 0.0, heuristic: true })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// First output time at which the order failed.
    pub first_violation: Option<f64>,
    /// Smallest order condition seen (negative means some step decreased).
    pub worst_margin: f64,
    /// Largest `‖ŷ(t) − x̂(t)‖` over the run, in order coordinates.
    pub max_gap: f64,
    pub checked_steps: usize,
}

/// Integrates from an ordered pair and checks `u(t,θ₀,x₀) ≤ u(t,θ₀,y₀)` at every output step.
pub fn check_monotonicity<S: SkewProductSystem + ?Sized>(
    sys: &S,
    theta0: &BasePoint,
    x0: &HistoryFunction,
    y0: &HistoryFunction,
    horizon: f64,
) -> Result<MonotonicityReport> {
    let order = sys.order();
    let initial = order.compare(&sys.to_order_space(theta0, x0)?, &sys.to_order_space(theta0, y0)?)?;
    if !initial.holds {
        return Err(Error::Precondition(format!("initial data are not ordered (margin {:.3e})", initial.margin)));
    }
    let tx = sys.integrate(theta0, x0, horizon)?;
    let ty = sys.integrate(theta0, y0, horizon)?;
    let (a, b) = (tx.order_series(), ty.order_series());
    let m = sys.dim();
    let n = tx.segments() as i64;
    let decay: Vec<f64> = order.diag().iter().map(|d| (d * tx.step()).exp()).collect();
    let diff = |j: i64, c: usize| b.node(j)[c] - a.node(j)[c];
    let node_cond = |j: i64| (0..m).map(|c| diff(j, c)).fold(f64::INFINITY, f64::min);
    // Node condition at `j` combined with the step condition from `j − 1` to `j`.
    let cond = |j: i64| {
        (0..m)
            .map(|c| {
                let d = diff(j, c);
                d.min(d - decay[c] * diff(j - 1, c))
            })
            .fold(f64::INFINITY, f64::min)
    };
    let size = |j: i64| (0..m).map(|c| diff(j, c).abs()).fold(0.0, f64::max);

    // Sliding windows over nodes k−N..=k: minimum of `cond` on (k−N, k] and maximum of `size` on [k−N, k].
    let mut mins: VecDeque<(i64, f64)> = VecDeque::new();
    let mut maxs: VecDeque<(i64, f64)> = VecDeque::new();
    let push_min = |q: &mut VecDeque<(i64, f64)>, j: i64, v: f64| {
        while q.back().is_some_and(|&(_, w)| w >= v) {
            q.pop_back();
        }
        q.push_back((j, v));
    };
    let push_max = |q: &mut VecDeque<(i64, f64)>, j: i64, v: f64| {
        while q.back().is_some_and(|&(_, w)| w <= v) {
            q.pop_back();
        }
        q.push_back((j, v));
    };
    push_max(&mut maxs, -n, size(-n));
    for j in (-n + 1)..=0 {
        push_min(&mut mins, j, cond(j));
        push_max(&mut maxs, j, size(j));
    }
    let mut worst_margin = f64::INFINITY;
    let mut max_gap = 0.0f64;
    let mut first_violation = None;
    let steps = tx.steps() as i64;
    for k in 0..=steps {
        if k > 0 {
            push_min(&mut mins, k, cond(k));
            push_max(&mut maxs, k, size(k));
        }
        while mins.front().is_some_and(|&(j, _)| j <= k - n) {
            mins.pop_front();
        }
        while maxs.front().is_some_and(|&(j, _)| j < k - n) {
            maxs.pop_front();
        }
        let sup = maxs.front().map_or(0.0, |p| p.1);
        let margin = node_cond(k - n).min(mins.front().map_or(f64::INFINITY, |p| p.1));
        worst_margin = worst_margin.min(margin);
        max_gap = max_gap.max(sup);
        if first_violation.is_none() && margin < -order.tol() * (1.0 + sup) {
            first_violation = Some(tx.time(k as usize));
        }
    }
    Ok(MonotonicityReport {
        pass: first_violation.is_none(),
        first_violation,
        worst_margin,
        max_gap,
        checked_steps: tx.steps() + 1,
    })
}

/// Largest metric distance between two runs over output steps `0, stride, 2·stride, …` and the last one.
fn sup_distance(a: &Trajectory, b: &Trajectory, stride: usize, n_terms: usize) -> f64 {
    let steps = a.steps().min(b.steps());
    (0..=steps)
        .step_by(stride.max(1))
        .chain(std::iter::once(steps))
        .map(|k| a.snapshot_distance(k, b, k, n_terms))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    /// Largest initial distance found for which every sampled pair stayed within `eps`.
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityTable {
    pub radius: f64,
    pub horizon: f64,
    pub pairs: usize,
    pub rows: Vec<StabilityRow>,
    /// Set when some `δ/ε` fell below `1e-2`, a sign of instability.
    pub collapsed: bool,
}

/// One sampled direction of the stability probe: `y(λ) = x + λ·v` with `x ≤ y(λ)`.
struct Ray {
    x: HistoryFunction,
    v: HistoryFunction,
    traj: Trajectory,
}

impl Ray {
    /// Largest `λ ≤ λ_max` with `d(x, x + λv) ≤ δ`.
    fn lambda_for(&self, delta: f64, lambda_max: f64) -> f64 {
        let dist = |l: f64| {
            metric(&self.x, &self.x.combine(1.0, &self.v, l).expect("same grid"), METRIC_TERMS).expect("same grid")
        };
        if dist(lambda_max) <= delta {
            return lambda_max;
        }
        let (mut lo, mut hi) = (0.0, lambda_max);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dist(mid) <= delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// For each `ε`, the largest `δ` (bisected in log scale) such that every sampled
/// ordered pair in `B_r` at initial distance at most `δ` stays within `ε` on `[0, T]`.
///
/// Pairs lie on rays `x + λv` with `v` an order direction of unit sup-norm, and
/// only the ray point at distance exactly `δ` is integrated.
pub fn uniform_stability_probe<S: SkewProductSystem + ?Sized>(
    sys: &S,
    theta0: &BasePoint,
    radius: f64,
    eps_list: &[f64],
    n_pairs: usize,
    horizon: f64,
    seed: u64,
) -> Result<StabilityTable> {
    if radius.is_nan() || radius <= 0.0 || n_pairs == 0 || eps_list.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return Err(Error::InvalidArgument("need r > 0, at least one pair and positive ε".into()));
    }
    let grid = sys.grid();
    let stride = ((horizon / grid.step()) as usize / 200).max(1);
    let mut rng = sampling::rng(seed);
    let half = 0.5 * radius;
    let mut rays = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let x = sampling::history(&mut rng, sys.dim(), &grid, half)?;
        let d = sampling::cone_element(&mut rng, sys.order(), &grid, 1.0)?;
        let v = sys.order_space_preimage(theta0, &d)?;
        let s = v.sup_norm();
        if s == 0.0 {
            continue;
        }
        let traj = sys.integrate(theta0, &x, horizon)?;
        rays.push(Ray { x, v: v.scale(1.0 / s), traj });
    }
    if rays.is_empty() {
        log::warn!("stability probe sampled no usable direction");
    }
    let passes = |eps: f64, delta: f64| -> Result<bool> {
        for ray in &rays {
            let y = ray.x.combine(1.0, &ray.v, ray.lambda_for(delta, half))?;
            let ty = sys.integrate(theta0, &y, horizon)?;
            if sup_distance(&ray.traj, &ty, stride, METRIC_TERMS) >= eps {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let reach = rays
        .iter()
        .map(|r| metric(&r.x, &r.x.combine(1.0, &r.v, half).expect("same grid"), METRIC_TERMS).expect("same grid"))
        .fold(0.0, f64::max);

    let mut order: Vec<usize> = (0..eps_list.len()).collect();
    order.sort_by(|a, b| eps_list[*a].total_cmp(&eps_list[*b]));
    let mut deltas = vec![0.0; eps_list.len()];
    let mut best = 0.0f64;
    for &i in &order {
        let eps = eps_list[i];
        let hi_start = reach.max(1e-12);
        let delta = if passes(eps, hi_start)? {
            hi_start
        } else {
            let (mut lo, mut hi) = (1e-10f64, hi_start);
            if !passes(eps, lo)? {
                0.0
            } else {
                for _ in 0..30 {
                    let mid = (lo * hi).sqrt();
                    if passes(eps, mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        };
        // A δ that works for a smaller ε works for this one too.
        best = best.max(delta);
        deltas[i] = best;
    }
    let rows: Vec<StabilityRow> =
        eps_list.iter().zip(&deltas).map(|(&eps, &delta)| StabilityRow { eps, delta }).collect();
    let collapsed = rows.iter().any(|r| r.delta < 1e-2 * r.eps.min(reach.max(1e-12)));
    Ok(StabilityTable { radius, horizon, pairs: rays.len(), rows, collapsed })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityRow {
    /// The perturbation is supported on `[−n−1, −n]`.
    pub depth: f64,
    /// `d(x_n, x₀)`.
    pub perturbation: f64,
    /// `sup_t d(u(t,θ₀,x_n), u(t,θ₀,x₀))`.
    pub deviation: f64,
    /// `sup_t ‖z_n(t) − z(t)‖`.
    pub head_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub amplitude: f64,
    pub rows: Vec<ContinuityRow>,
    /// Head deviations nonincreasing in depth.
    pub decreasing: bool,
    pub pass: bool,
}

/// Perturbs `x₀` by a bump `(r − ‖x₀‖∞)·sin²(π(s + n + 1))` on `[−n−1, −n]`, so that
/// `x_n ∈ B_r` and `x_n → x₀` in the compact-open metric, and measures the response.
/// Passes when head deviations are nonincreasing in `n` and the deepest is below `tol`.
pub fn continuity_probe<S: SkewProductSystem + ?Sized>(
    sys: &S,
    theta0: &BasePoint,
    x0: &HistoryFunction,
    radius: f64,
    horizon: f64,
    depths: &[f64],
    tol: f64,
) -> Result<ContinuityReport> {
    let grid = sys.grid();
    grid.check(x0)?;
    let amplitude = radius - x0.sup_norm();
    if amplitude < 0.0 {
        return Err(Error::Precondition(format!("x₀ has norm {} > r = {radius}", x0.sup_norm())));
    }
    if let Some(d) = depths.iter().find(|d| !(**d >= 0.0 && **d + 1.0 <= grid.depth())) {
        return Err(Error::InvalidArgument(format!("perturbation depth {d} does not fit in [0, L − 1]")));
    }
    let stride = ((horizon / grid.step()) as usize / 400).max(1);
    let base = sys.integrate(theta0, x0, horizon)?;
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        let bump = grid.sample(sys.dim(), |s| {
            let u = s + depth + 1.0;
            let v = if (0.0..=1.0).contains(&u) { amplitude * (std::f64::consts::PI * u).sin().powi(2) } else { 0.0 };
            vec![v; sys.dim()]
        })?;
        let xn = x0.add(&bump)?;
        let traj = sys.integrate(theta0, &xn, horizon)?;
        let head_deviation = (0..=traj.steps())
            .flat_map(|k| traj.head(k).iter().zip(base.head(k)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        rows.push(ContinuityRow {
            depth,
            perturbation: metric(&xn, x0, METRIC_TERMS)?,
            deviation: sup_distance(&traj, &base, stride, METRIC_TERMS),
            head_deviation,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].head_deviation <= w[0].head_deviation);
    let pass = decreasing && rows.last().is_none_or(|r| r.head_deviation < tol);
    Ok(ContinuityReport { amplitude, rows, decreasing, pass })
}

/// Settings of the omega-limit probe.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeConfig {
    /// Transient lengths after which return pairs are inspected, increasing.
    pub transients: Vec<f64>,
    pub t_max: f64,
    /// Base points closer than this count as a return.
    pub delta_base: f64,
    /// Pass threshold for pair and two-solution distances.
    pub threshold: f64,
    /// Spacing of the anchor times `t` of pairs `(t, t + lag)`.
    pub anchor_stride: f64,
    /// Smallest return lag considered.
    pub lag_min: f64,
    pub n_terms: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            transients: vec![100.0, 400.0, 1600.0],
            t_max: 2000.0,
            delta_base: 0.02,
            threshold: 1e-3,
            anchor_stride: 1.0,
            lag_min: 1.0,
            n_terms: METRIC_TERMS,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransientRow {
    pub transient: f64,
    /// Number of return pairs `(t, t + lag)` with `t ≥ transient`.
    pub pairs: usize,
    /// Largest `d(u(t), u(t + lag))` over those pairs.
    pub pair_max: f64,
    /// The same in neutral coordinates, for neutral models.
    pub pair_max_neutral: Option<f64>,
    /// `d(u(t,θ₀,x₀), u(t,θ₀,y₀))` at `t = transient`.
    pub two_solution: f64,
    pub two_solution_neutral: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnLag {
    pub lag: f64,
    pub base_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CopyOfBaseReport {
    pub lags: Vec<ReturnLag>,
    pub rows: Vec<TransientRow>,
    /// Two-solution distance at `t_max`.
    pub two_solution_final: f64,
    pub two_solution_final_neutral: Option<f64>,
    /// Least-squares slope of `ln pair_max` against the transient length.
    pub pair_decay_rate: Option<f64>,
    pub two_solution_decay_rate: Option<f64>,
    /// Unit-window variation of the initial datum in order coordinates. Only
    /// windows inside `[−L, 0]` are inspected, so this is a partial certificate.
    pub initial_regularity: Regularity,
    pub threshold: f64,
    /// Pair maxima nonincreasing across transients.
    pub monotone: bool,
    pub pass: bool,
}

fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|p| (p.0, p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Observable content of the copy-of-the-base theorems. Along the run from
/// `(θ₀, x₀)`, states at times whose base points nearly coincide should nearly
/// coincide too once transients have died out, and a second run from `y₀`
/// should approach the first. `y₀` defaults to the constant history `x₀(0) + 1`.
pub fn omega_limit_probe<S: SkewProductSystem + ?Sized>(
    sys: &S,
    theta0: &BasePoint,
    x0: &HistoryFunction,
    y0: Option<&HistoryFunction>,
    cfg: &ProbeConfig,
) -> Result<CopyOfBaseReport> {
    let grid = sys.grid();
    if cfg.transients.is_empty() || cfg.transients.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("transients must be a nonempty increasing list".into()));
    }
    let first = cfg.transients[0];
    if !(first >= 0.0 && cfg.t_max > first + cfg.lag_min) {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ transient and transient + lag_min < t_max (got {first}, {}, {})",
            cfg.lag_min, cfg.t_max
        )));
    }
    let default_y0;
    let y0 = match y0 {
        Some(y) => y,
        None => {
            let shifted: Vec<f64> = x0.head().iter().map(|v| v + 1.0).collect();
            default_y0 = grid.constant(&shifted)?;
            &default_y0
        }
    };
    let initial_regularity = regularity(&sys.to_order_space(theta0, x0)?, None)?;
    let tx = sys.integrate(theta0, x0, cfg.t_max)?;
    let ty = sys.integrate(theta0, y0, cfg.t_max)?;
    let step = tx.step();
    let index = |t: f64| ((t / step) + 1e-9).round() as usize;

    let raw = sys.base().return_times(theta0, cfg.delta_base, cfg.lag_min, cfg.t_max - first, step)?;
    let mut lags: Vec<(usize, ReturnLag)> = Vec::new();
    for t in raw {
        let k = index(t);
        if k == 0 || lags.last().is_some_and(|l| l.0 == k) {
            continue;
        }
        let d = crate::baseflow::base_distance(&tx.base_point(k), theta0)?;
        lags.push((k, ReturnLag { lag: tx.time(k), base_distance: d }));
    }
    if lags.is_empty() {
        return Err(Error::NoReturnPairs);
    }

    let neutral = tx.is_neutral();
    let n_tr = cfg.transients.len();
    let starts: Vec<usize> = cfg.transients.iter().map(|t| index(*t)).collect();
    let mut pair_max = vec![0.0f64; n_tr];
    let mut pair_max_neutral = vec![0.0f64; n_tr];
    let mut pairs = vec![0usize; n_tr];
    let anchor_stride = index(cfg.anchor_stride).max(1);
    let last = tx.steps();
    for (lag, _) in &lags {
        let mut k = starts[0];
        while k + lag <= last {
            let d = tx.snapshot_distance(k, &tx, k + lag, cfg.n_terms);
            let dn = if neutral { tx.order_distance(k, &tx, k + lag, cfg.n_terms) } else { 0.0 };
            for i in 0..n_tr {
                if k >= starts[i] {
                    pairs[i] += 1;
                    pair_max[i] = pair_max[i].max(d);
                    pair_max_neutral[i] = pair_max_neutral[i].max(dn);
                }
            }
            k += anchor_stride;
        }
    }

    let rows: Vec<TransientRow> = (0..n_tr)
        .map(|i| {
            let k = starts[i].min(last);
            TransientRow {
                transient: cfg.transients[i],
                pairs: pairs[i],
                pair_max: pair_max[i],
                pair_max_neutral: neutral.then_some(pair_max_neutral[i]),
                two_solution: tx.snapshot_distance(k, &ty, k, cfg.n_terms),
                two_solution_neutral: neutral.then(|| tx.order_distance(k, &ty, k, cfg.n_terms)),
            }
        })
        .collect();
    let two_solution_final = tx.snapshot_distance(last, &ty, last, cfg.n_terms);
    let two_solution_final_neutral = neutral.then(|| tx.order_distance(last, &ty, last, cfg.n_terms));
    let pair_decay_rate = log_slope(&rows.iter().map(|r| (r.transient, r.pair_max)).collect::<Vec<_>>());
    let two_solution_decay_rate = log_slope(&rows.iter().map(|r| (r.transient, r.two_solution)).collect::<Vec<_>>());

    let monotone = rows.windows(2).all(|w| {
        w[1].pair_max <= w[0].pair_max && w[1].pair_max_neutral.unwrap_or(0.0) <= w[0].pair_max_neutral.unwrap_or(0.0)
    });
    let last_row = rows.last().expect("nonempty");
    let below = |v: f64| v < cfg.threshold;
    let pass = monotone
        && last_row.pairs > 0
        && below(last_row.pair_max)
        && last_row.pair_max_neutral.is_none_or(below)
        && below(two_solution_final)
        && two_solution_final_neutral.is_none_or(below);
    Ok(CopyOfBaseReport {
        lags: lags.into_iter().map(|l| l.1).collect(),
        rows,
        two_solution_final,
        two_solution_final_neutral,
        pair_decay_rate,
        two_solution_decay_rate,
        initial_regularity,
        threshold: cfg.threshold,
        monotone,
        pass,
    })
}
