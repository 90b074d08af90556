use serde::Serialize;

use super::{HistoryFunction, OrderParams, GRID_EPS};
use crate::error::{Error, Result};

/// Grid total variation of each component over `[a, b] ⊂ [−L, 0]`.
///
/// Sums absolute increments between `a`, the nodes strictly inside, and `b`.
/// This is a lower bound for the true variation and is exact for functions
/// that are monotone between grid points.
pub fn total_variation(x: &HistoryFunction, a: f64, b: f64) -> Result<Vec<f64>> {
    let lo = -x.depth();
    let eps = GRID_EPS * x.step();
    if a.is_nan() || b.is_nan() || a >= b || a < lo - eps || b > eps {
        return Err(Error::OutsideWindow { a, b, lo });
    }
    let (a, b) = (a.max(lo), b.min(0.0));
    let step = x.step();
    // Nodes within [a, b]; a node landing on an end point only adds a zero increment.
    let first = (-b / step - GRID_EPS).ceil().max(0.0) as usize;
    let last = ((-a / step + GRID_EPS).floor() as usize).min(x.segments());

    let mut prev = x.eval(b)?;
    let mut out = vec![0.0; x.dim()];
    let mut acc = |prev: &mut Vec<f64>, next: &[f64]| {
        for (o, (n, p)) in out.iter_mut().zip(next.iter().zip(prev.iter())) {
            *o += (n - p).abs();
        }
        prev.copy_from_slice(next);
    };
    let mut i = first;
    while i <= last {
        acc(&mut prev, x.node(i));
        i += 1;
    }
    let end = x.eval(a)?;
    acc(&mut prev, &end);
    Ok(out)
}

/// Unit-window variation profile of a history, the checkable part of property (R).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regularity {
    /// `max_k max_i V_{[−k,−k+1]}(x_i)` over the inspected windows.
    pub sup_var: f64,
    /// `‖x‖∞ + sup_var`.
    pub norm_r: f64,
    /// Whether `sup_var` stays below the requested bound (always true without a bound).
    pub satisfied: bool,
    /// Largest componentwise variation of each window `[−k, −k+1]`, `k = 1, 2, …`.
    pub windows: Vec<f64>,
    /// Number of unit windows inside `[−L, 0]`; nothing beyond them is certified.
    pub inspected: usize,
    /// Slope of a least-squares line through `windows` against `k`.
    pub growth: f64,
    /// Set when the fitted trend dominates the mean window variation, a sign
    /// that the variation would keep growing beyond the represented window.
    pub nonuniform: bool,
}

/// Computes the unit-window variations of `x`, optionally against a bound on `sup_var`.
pub fn regularity(x: &HistoryFunction, bound: Option<f64>) -> Result<Regularity> {
    let depth = x.depth();
    if depth < 2.0 - GRID_EPS {
        return Err(Error::DepthTooSmall { depth, needed: 2.0 });
    }
    let count = (depth * (1.0 + GRID_EPS)).floor() as usize;
    let mut windows = Vec::with_capacity(count);
    for k in 1..=count {
        let v = total_variation(x, -(k as f64), -(k as f64) + 1.0)?;
        windows.push(v.into_iter().fold(0.0, f64::max));
    }
    let sup_var = windows.iter().copied().fold(0.0, f64::max);
    let growth = trend(&windows);
    let mean = windows.iter().sum::<f64>() / count as f64;
    let nonuniform = count >= 4 && growth > 0.0 && growth * (count - 1) as f64 > mean;
    Ok(Regularity {
        sup_var,
        norm_r: x.sup_norm() + sup_var,
        satisfied: bound.is_none_or(|b| sup_var <= b),
        windows,
        inspected: count,
        growth,
        nonuniform,
    })
}

fn trend(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n + 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = (i + 1) as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// The dominating history `h(t) = e^{−at} V_{(−∞,t]}(e^{a·} x)` per component, `a = −A_ii`.
///
/// Below `−L` the history is constant, so the variation there is exactly
/// `|x(−L)| e^{−aL}`. The recursion
/// `h(t_i) = e^{−aΔ} h(t_i − Δ) + |x(t_i) − e^{−aΔ} x(t_i − Δ)|`
/// avoids the overflow of `e^{aL}` and returns constants unchanged.
/// The result satisfies `x ≤_A h` and `0 ≤_A h`.
pub fn construct_h(x: &HistoryFunction, order: &OrderParams) -> Result<HistoryFunction> {
    if x.dim() != order.dim() {
        return Err(Error::ShapeMismatch("order and history dimensions differ".into()));
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = x.dim();
    let n = x.segments();
    let mut out = vec![0.0; x.values().len()];
    for (k, a) in order.diag().iter().enumerate() {
        let decay = (a * x.step()).exp();
        let xv = |i: usize| x.values()[i * m + k];
        let mut h = xv(n).abs();
        out[n * m + k] = h;
        for i in (0..n).rev() {
            h = decay * h + (xv(i) - decay * xv(i + 1)).abs();
            out[i * m + k] = h;
        }
    }
    HistoryFunction::from_nodes(m, x.step(), out)
}

/// `h₀ = h + ‖x‖∞` (the same constant in every component), which additionally
/// dominates `x − x(0)`.
pub fn construct_h0(x: &HistoryFunction, order: &OrderParams) -> Result<HistoryFunction> {
    let h = construct_h(x, order)?;
    h.offset(&vec![x.sup_norm(); x.dim()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar(step: f64, depth: f64, f: impl Fn(f64) -> f64) -> HistoryFunction {
        HistoryFunction::from_fn(1, step, depth, |s| [f(s)]).unwrap()
    }

    #[test]
    fn variation_examples() {
        let c = scalar(0.01, 2.0, |_| 4.0);
        assert_eq!(total_variation(&c, -1.0, 0.0).unwrap(), vec![0.0]);
        let lin = scalar(0.01, 2.0, |s| s);
        assert!((total_variation(&lin, -1.0, 0.0).unwrap()[0] - 1.0).abs() < 1e-12);
        let sin = scalar(0.001, 4.0, f64::sin);
        assert!((total_variation(&sin, -PI, 0.0).unwrap()[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn variation_between_grid_points() {
        let lin = scalar(0.1, 2.0, |s| s);
        let v = total_variation(&lin, -0.55, -0.05).unwrap()[0];
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variation_rejects_bad_window() {
        let x = scalar(0.1, 2.0, |s| s);
        assert!(total_variation(&x, -3.0, 0.0).is_err());
        assert!(total_variation(&x, -1.0, -1.0).is_err());
        assert!(total_variation(&x, -1.0, 0.5).is_err());
    }

    #[test]
    fn regularity_of_constant() {
        let r = regularity(&scalar(0.01, 5.0, |_| -3.0), None).unwrap();
        assert_eq!(r.sup_var, 0.0);
        assert_eq!(r.norm_r, 3.0);
        assert!(r.satisfied);
        assert_eq!(r.inspected, 5);
        assert!(!r.nonuniform);
    }

    #[test]
    fn regularity_of_sine_is_uniform() {
        let r = regularity(&scalar(0.001, 30.0, f64::sin), Some(1.0)).unwrap();
        assert!(r.sup_var <= 1.0);
        assert!(r.satisfied);
        assert!(!r.nonuniform);
    }

    #[test]
    fn chirp_is_flagged() {
        let r = regularity(&scalar(0.0005, 30.0, |s| (s * s).sin()), None).unwrap();
        // The variation on [−k, −k+1] is about (k² − (k−1)²)·2/π.
        let last = r.windows[29];
        assert!((last - 59.0 * 2.0 / PI).abs() < 2.0, "{last}");
        assert!(r.nonuniform);
        assert!(r.growth > 1.0);
    }

    #[test]
    fn regularity_needs_two_windows() {
        assert!(matches!(regularity(&scalar(0.1, 1.0, |s| s), None), Err(Error::DepthTooSmall { .. })));
    }

    #[test]
    fn h_of_constant_is_exact() {
        let a = OrderParams::new(vec![-1.0]).unwrap();
        for &c in &[0.0, 0.7, 3.25, 1e6] {
            let x = scalar(0.01, 10.0, |_| c);
            let h = construct_h(&x, &a).unwrap();
            assert!(h.values().iter().all(|&v| v == c), "c = {c}");
            let h0 = construct_h0(&x, &a).unwrap();
            assert!(h0.values().iter().all(|&v| v == 2.0 * c));
        }
    }

    #[test]
    fn h_of_increasing_exponential_is_itself() {
        let a = OrderParams::new(vec![-1.0]).unwrap();
        let x = scalar(0.01, 30.0, f64::exp);
        let h = construct_h(&x, &a).unwrap();
        for (hv, xv) in h.values().iter().zip(x.values()) {
            assert!((hv - xv).abs() < 1e-14);
        }
    }

    #[test]
    fn h_dominates() {
        let a = OrderParams::new(vec![-0.5, -2.0]).unwrap();
        let x = HistoryFunction::from_fn(2, 0.01, 8.0, |s| [(3.0 * s).cos() - 0.2, (s * 0.7).sin() * 2.0]).unwrap();
        let h = construct_h(&x, &a).unwrap();
        let zero = HistoryFunction::zeros(2, 0.01, 8.0).unwrap();
        assert!(a.leq(&x, &h).unwrap());
        assert!(a.leq(&zero, &h).unwrap());
        let h0 = construct_h0(&x, &a).unwrap();
        let shifted = x.offset(&[-x.head()[0], -x.head()[1]]).unwrap();
        assert!(a.leq(&x, &h0).unwrap());
        assert!(a.leq(&zero, &h0).unwrap());
        assert!(a.leq(&shifted, &h0).unwrap());
    }
}
