//! Exponentially weighted integrals of piecewise polynomial interpolants.
//!
//! Every memory term in the crate integrates `e^{γs} x(s)` over a grid segment,
//! where `x` is linear or cubic Hermite on the segment. The weights below are
//! exact for those interpolants, so the only quadrature error left is the
//! interpolation error itself.

use crate::history::HistoryFunction;

/// `M_n = ∫_0^1 θ^n e^{cθ} dθ` for `n = 0..=3`.
pub(crate) fn exp_moments(c: f64) -> [f64; 4] {
    let mut m = [0.0; 4];
    if c.abs() <= 2.0 {
        // Series Σ c^k / (k! (n + k + 1)); terms fall below 1e-18 before k = 30.
        let mut term = 1.0;
        for k in 0..40 {
            let kf = k as f64;
            for (n, slot) in m.iter_mut().enumerate() {
                *slot += term / (n as f64 + kf + 1.0);
            }
            term *= c / (kf + 1.0);
            if term.abs() < 1e-19 {
                break;
            }
        }
    } else {
        let ec = c.exp();
        m[0] = (ec - 1.0) / c;
        for n in 1..4 {
            m[n] = (ec - n as f64 * m[n - 1]) / c;
        }
    }
    m
}

/// Weights `[w0, w1]` with `∫_0^1 e^{cθ} ((1−θ) y0 + θ y1) dθ = w0 y0 + w1 y1`.
pub(crate) fn linear_exp_weights(c: f64) -> [f64; 2] {
    let m = exp_moments(c);
    [m[0] - m[1], m[1]]
}

/// Weights for the cubic Hermite basis on `[0, 1]`, ordered as
/// `[value at 0, slope at 0, value at 1, slope at 1]` (slopes in θ units).
pub(crate) fn hermite_exp_weights(c: f64) -> [f64; 4] {
    let m = exp_moments(c);
    [m[0] - 3.0 * m[2] + 2.0 * m[3], m[1] - 2.0 * m[2] + m[3], 3.0 * m[2] - 2.0 * m[3], m[3] - m[2]]
}

/// Cubic Hermite interpolation on a segment of length `h`, `u ∈ [0, 1]`.
#[inline]
pub(crate) fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// `J(t_i) = ∫_{−∞}^0 e^{γu} x(t_i + u) du` at every node `t_i = −iΔ` of `x`,
/// returned newest first. Segments are integrated exactly as cubic Hermite
/// pieces when `x` carries slopes and as linear pieces otherwise; below `−L`
/// the constant tail contributes `x(−L) e^{γ(−L − t_i)}/γ`.
pub(crate) fn memory_profile(x: &HistoryFunction, decay: f64) -> Vec<f64> {
    let m = x.dim();
    let n = x.segments();
    let h = x.step();
    let c = decay * h;
    let e = (-c).exp();
    let wl = linear_exp_weights(c);
    let wh = hermite_exp_weights(c);
    let mut out = vec![0.0; (n + 1) * m];
    for k in 0..m {
        let mut j = x.tail()[k] / decay;
        out[n * m + k] = j;
        for i in (0..n).rev() {
            let older = x.node(i + 1)[k];
            let newer = x.node(i)[k];
            let seg = match x.segment_slopes(i, k) {
                Some((lo, hi)) => wh[0] * older + wh[1] * h * lo + wh[2] * newer + wh[3] * h * hi,
                None => wl[0] * older + wl[1] * newer,
            };
            j = e * j + h * e * seg;
            out[i * m + k] = j;
        }
    }
    out
}

/// `∫_{−∞}^0 e^{γs} x(s) ds`, the newest entry of [`memory_profile`].
pub(crate) fn memory_integral(x: &HistoryFunction, decay: f64) -> Vec<f64> {
    memory_profile(x, decay)[..x.dim()].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64) -> f64 {
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn moments_match_direct_quadrature() {
        for &c in &[-7.5, -2.0, -0.3, 0.0, 1e-6, 0.01, 1.9, 2.1, 6.0] {
            let m = exp_moments(c);
            for (n, &mn) in m.iter().enumerate() {
                let want = simpson(|t| t.powi(n as i32) * (c * t).exp());
                assert!((mn - want).abs() < 1e-11 * want.abs().max(1.0), "c={c} n={n}: {mn} vs {want}");
            }
        }
    }

    #[test]
    fn zero_rate_gives_polynomial_integrals() {
        let m = exp_moments(0.0);
        assert_eq!(m, [1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert_eq!(linear_exp_weights(0.0), [0.5, 0.5]);
    }

    #[test]
    fn hermite_weights_integrate_cubics_exactly() {
        let c = 0.37;
        let p = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t + 3.0 * t * t * t;
        let dp = |t: f64| -2.0 + t + 9.0 * t * t;
        let w = hermite_exp_weights(c);
        let got = w[0] * p(0.0) + w[1] * dp(0.0) + w[2] * p(1.0) + w[3] * dp(1.0);
        let want = simpson(|t| (c * t).exp() * p(t));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn memory_of_constant_is_exact() {
        let x = HistoryFunction::constant(0.01, 20.0, &[2.0]).unwrap();
        let j = memory_profile(&x, 1.5);
        assert!(j.iter().all(|v| (v - 2.0 / 1.5).abs() < 1e-13));
    }

    #[test]
    fn memory_of_smooth_history() {
        // ∫_{−∞}^0 e^{s} cos(s) ds = 1/2.
        let x = HistoryFunction::from_fn(1, 0.01, 40.0, |s| [s.cos()]).unwrap();
        let j = memory_integral(&x, 1.0)[0];
        assert!((j - 0.5).abs() < 1e-5, "{j}");
        let mut slopes = Vec::new();
        for i in 0..x.segments() {
            slopes.push(-(-((i + 1) as f64) * 0.01).sin());
            slopes.push(-(-(i as f64) * 0.01).sin());
        }
        let x = x.with_slopes(slopes).unwrap();
        let j = memory_integral(&x, 1.0)[0];
        assert!((j - 0.5).abs() < 1e-10, "{j}");
    }

    #[test]
    fn hermite_reproduces_endpoints() {
        assert_eq!(hermite(2.0, 5.0, -1.0, 3.0, 0.1, 0.0), 2.0);
        assert!((hermite(2.0, 5.0, -1.0, 3.0, 0.1, 1.0) + 1.0).abs() < 1e-15);
    }
}
