use super::{HistoryFunction, OrderParams};
use crate::error::{Error, Result};
use crate::quadrature::linear_exp_weights;

/// `h̄_T(s) = h̄(s + T)` where `h̄(s) = e^{As} h₀(0)` for `s > 0` and `h₀(s)` otherwise.
///
/// `0 ≤_A h̄_T` whenever `0 ≤_A h₀`, and `h̄_T → 0` in the compact-open metric
/// as `T → ∞`. Values below `−L` are represented by the node at `−L`.
pub fn shifted_envelope(h0: &HistoryFunction, order: &OrderParams, t: f64) -> Result<HistoryFunction> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("shift must be nonnegative, got {t}")));
    }
    if h0.dim() != order.dim() {
        return Err(Error::ShapeMismatch("order and history dimensions differ".into()));
    }
    if t == 0.0 {
        return Ok(h0.clone());
    }
    let head = h0.head().to_vec();
    let diag = order.diag().to_vec();
    let mut buf = vec![0.0; h0.dim()];
    HistoryFunction::from_fn(h0.dim(), h0.step(), h0.depth(), |s| {
        let u = s + t;
        if u > 0.0 {
            for k in 0..buf.len() {
                buf[k] = (diag[k] * u).exp() * head[k];
            }
        } else {
            h0.eval_into(u, &mut buf).expect("u ≤ 0 and buffer sized to dim");
        }
        buf.clone()
    })
}

/// The lower and upper envelopes `a_{v,c}` and `b_{v,c}`:
/// `a(s) = ∫_{−∞}^s e^{A(s−τ)} min{v′ − Av, c′ − Ac}(τ) dτ`, and `b` likewise with max.
///
/// Derivatives are central differences (one-sided at the ends). The integrand is
/// integrated exactly as a piecewise linear function against the exponential
/// kernel, and below `−L` the closed form for the constant tail is used
/// (there `v′ = c′ = 0`). Both envelopes bracket `v` and `c` in `≤_A` up to
/// the discretisation error.
pub fn order_envelope(
    v: &HistoryFunction,
    c: &HistoryFunction,
    order: &OrderParams,
) -> Result<(HistoryFunction, HistoryFunction)> {
    v.check_same_grid(c)?;
    if v.dim() != order.dim() {
        return Err(Error::ShapeMismatch("order and history dimensions differ".into()));
    }
    let m = v.dim();
    let n = v.segments();
    let step = v.step();
    let mut lower = vec![0.0; v.values().len()];
    let mut upper = vec![0.0; v.values().len()];
    for (k, rate) in order.rates().into_iter().enumerate() {
        let drift = |x: &HistoryFunction, i: usize| {
            let xv = |j: usize| x.values()[j * m + k];
            let slope = if n == 0 {
                0.0
            } else if i == 0 {
                (xv(0) - xv(1)) / step
            } else if i == n {
                (xv(n - 1) - xv(n)) / step
            } else {
                (xv(i - 1) - xv(i + 1)) / (2.0 * step)
            };
            slope + rate * xv(i)
        };
        let decay = (-rate * step).exp();
        let w = linear_exp_weights(rate * step);
        let (vt, ct) = (v.tail()[k], c.tail()[k]);
        let mut lo = vt.min(ct);
        let mut hi = vt.max(ct);
        lower[n * m + k] = lo;
        upper[n * m + k] = hi;
        let (mut g_lo_prev, mut g_hi_prev) = {
            let (p, q) = (drift(v, n), drift(c, n));
            (p.min(q), p.max(q))
        };
        for i in (0..n).rev() {
            let (p, q) = (drift(v, i), drift(c, i));
            let (g_lo, g_hi) = (p.min(q), p.max(q));
            lo = decay * lo + step * decay * (w[0] * g_lo_prev + w[1] * g_lo);
            hi = decay * hi + step * decay * (w[0] * g_hi_prev + w[1] * g_hi);
            lower[i * m + k] = lo;
            upper[i * m + k] = hi;
            g_lo_prev = g_lo;
            g_hi_prev = g_hi;
        }
    }
    Ok((HistoryFunction::from_nodes(m, step, lower)?, HistoryFunction::from_nodes(m, step, upper)?))
}
