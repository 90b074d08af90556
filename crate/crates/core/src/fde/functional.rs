use super::rhs::Grid;
use super::series::Series;
use super::trajectory::Trajectory;
use super::BLOW_UP;
use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::HistoryFunction;

/// Any right side `F(θ, x)` evaluated on a whole history.
pub trait HistoryFunctional {
    fn dim(&self) -> usize;
    fn eval(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<Vec<f64>>;
}

/// RK4 for `z′ = F(θ·t, z_t)` with an arbitrary functional `F`.
///
/// Each stage hands `F` the full stage history: the stage value at `0` and
/// Hermite lookups of the stored solution at the grid points behind it.
/// This is much slower than the structured integrator and serves as an
/// independent pipeline.
pub fn integrate_functional<F: HistoryFunctional + ?Sized>(
    f: &F,
    base: &TorusBase,
    grid: Grid,
    theta0: &BasePoint,
    x0: &HistoryFunction,
    horizon: f64,
) -> Result<Trajectory> {
    grid.check(x0)?;
    let m = f.dim();
    if x0.dim() != m {
        return Err(Error::ShapeMismatch("initial history does not match the functional".into()));
    }
    let step = grid.step();
    let n = grid.segments();
    let steps = ((horizon / step) - 1e-9).ceil().max(0.0) as usize;
    let mut z = Series::from_history(x0);

    // Stage node `i ≥ 1` sits at stored node `index − i`, or at the midpoint of
    // the stored segment starting there. Slopes come from the stored Hermite
    // pieces; the newest stage segment uses its chord at the head end.
    let stage = |z: &Series, t: f64, index: i64, half: bool, head: &[f64]| -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity((n + 1) * m);
        values.extend_from_slice(head);
        let mut buf = vec![0.0; m];
        for i in 1..=n as i64 {
            z.lookup(index - i, half, &mut buf);
            values.extend_from_slice(&buf);
        }
        let deriv = |i: i64, k: usize, newer_side: bool| -> f64 {
            let j = index - i;
            if half {
                z.mid_slope(j, k)
            } else if newer_side {
                z.left_slope(j, k)
            } else {
                z.right_slope(j, k)
            }
        };
        let mut slopes = Vec::with_capacity(2 * n * m);
        for i in 0..n as i64 {
            for k in 0..m {
                // Older end of stage segment i → i + 1.
                slopes.push(deriv(i + 1, k, i == 0));
            }
            for k in 0..m {
                slopes.push(if i == 0 {
                    let (a, b) = (values[m + k], values[k]);
                    let lo = deriv(1, k, true);
                    if half {
                        // Pass through the stored node halfway along the segment.
                        lo - 8.0 * (z.node(index)[k] - 0.5 * (a + b)) / step
                    } else {
                        2.0 * (b - a) / step - lo
                    }
                } else {
                    deriv(i, k, true)
                });
            }
        }
        let hist = HistoryFunction::from_nodes(m, step, values)?.with_slopes(slopes)?;
        f.eval(&base.advance(theta0, t), &hist)
    };

    let mut y = x0.head().to_vec();
    let mut k1 = f.eval(theta0, x0)?;
    let mut ys = vec![0.0; m];
    for k in 0..steps {
        let t = k as f64 * step;
        let node = k as i64;
        for i in 0..m {
            ys[i] = y[i] + 0.5 * step * k1[i];
        }
        let k2 = stage(&z, t + 0.5 * step, node, true, &ys)?;
        for i in 0..m {
            ys[i] = y[i] + 0.5 * step * k2[i];
        }
        let k3 = stage(&z, t + 0.5 * step, node, true, &ys)?;
        for i in 0..m {
            ys[i] = y[i] + step * k3[i];
        }
        let t1 = (k + 1) as f64 * step;
        let k4 = stage(&z, t1, node + 1, false, &ys)?;
        for i in 0..m {
            y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let norm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm.is_nan() || norm > BLOW_UP {
            return Err(Error::BlowUp { t: t1, norm });
        }
        let g = stage(&z, t1, node + 1, false, &y)?;
        z.push(&y, &k1, &g);
        k1 = g;
    }
    Ok(Trajectory::new(base, theta0, n, steps, z, None, step))
}
