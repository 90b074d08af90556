//! Fixed-step RK4 method of steps for `d/dt D(θ·t, z_t) = G(θ·t, z_t)`.
//!
//! The stepped state is `w = D(θ·t, z_t)` together with one memory variable
//! `J′ = z − γJ` per exponential kernel. The state `z` is recovered pointwise
//! from `z = w + Σ c_j z(t − r_j) + g e^{−γs₀} J(t − s₀)`, which only reads the
//! past because every atom sits at least one step back. Without a neutral part
//! `z = w` and this is plain RK4 on `z′ = F(θ·t, z_t)`.
//!
//! Stage lookups at `t + Δ/2 − r` use cubic Hermite interpolation with the
//! one-sided derivatives stored at every node, so kinks of the solution at
//! grid times (where `z′` jumps for neutral equations) are represented exactly.

use super::rhs::{Grid, RightHandSide};
use super::series::Series;
use super::trajectory::Trajectory;
use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::history::HistoryFunction;
use crate::neutral::NeutralOperator;
use crate::quadrature::{hermite_exp_weights, memory_integral, memory_profile};

/// Heads larger than this abort the run.
pub const BLOW_UP: f64 = 1e12;

pub(crate) struct Problem<'a> {
    pub base: &'a TorusBase,
    pub rhs: &'a RightHandSide,
    pub neutral: Option<&'a NeutralOperator>,
    pub grid: Grid,
}

struct Density<'a> {
    decay: f64,
    offset: usize,
    factor: f64,
    coef: &'a super::CoefMatrix,
}

struct Engine<'a> {
    p: &'a Problem<'a>,
    theta0: &'a BasePoint,
    m: usize,
    delays: Vec<usize>,
    decays: Vec<f64>,
    atoms: Vec<usize>,
    density: Option<Density<'a>>,
    z: Series,
    w: Option<Series>,
    jd: Option<Series>,
    vals: Vec<f64>,
    rates: Vec<f64>,
    delayed: Vec<f64>,
    tmp: Vec<f64>,
}

/// Where a stage reads its history: node `index`, or the midpoint after it.
#[derive(Clone, Copy)]
struct At {
    index: i64,
    half: bool,
}

impl<'a> Engine<'a> {
    fn n_state(&self) -> usize {
        self.m * (1 + self.decays.len() + usize::from(self.density.is_some()))
    }

    fn jd_offset(&self) -> usize {
        self.m * (1 + self.decays.len())
    }

    fn set_coefficients(&mut self, t: f64, with_rates: bool) {
        let theta = self.p.base.advance(self.theta0, t);
        self.p.base.eval_all(theta.theta(), &mut self.vals);
        if with_rates {
            self.p.base.rate_all(theta.theta(), &mut self.rates);
        }
    }

    /// Recovers `z` at a stage from the state `y`; coefficients must be set.
    fn recover(&mut self, at: At, y: &[f64], z: &mut [f64]) {
        let m = self.m;
        z.copy_from_slice(&y[..m]);
        let Some(op) = self.p.neutral else { return };
        for (a, &d) in op.atoms().iter().zip(&self.atoms) {
            self.z.lookup(at.index - d as i64, at.half, &mut self.tmp);
            a.coef.apply_add(&self.vals, &self.tmp, z);
        }
        if let Some(den) = &self.density {
            if den.offset == 0 {
                let jo = self.jd_offset();
                self.tmp.copy_from_slice(&y[jo..jo + m]);
            } else if let Some(jd) = &self.jd {
                jd.lookup(at.index - den.offset as i64, at.half, &mut self.tmp);
            }
            for v in self.tmp.iter_mut() {
                *v *= den.factor;
            }
            den.coef.apply_add(&self.vals, &self.tmp, z);
        }
    }

    /// Stage derivative `dy` at time `t`; also returns the recovered `z`.
    fn stage(&mut self, t: f64, at: At, y: &[f64], z: &mut [f64], dy: &mut [f64]) {
        let m = self.m;
        self.set_coefficients(t, false);
        self.recover(at, y, z);
        for (i, &d) in self.delays.iter().enumerate() {
            let (lo, hi) = (i * m, (i + 1) * m);
            self.z.lookup(at.index - d as i64, at.half, &mut self.delayed[lo..hi]);
        }
        let memory = &y[m..m * (1 + self.decays.len())];
        self.p.rhs.apply(&self.vals, z, &self.delayed, memory, &mut dy[..m]);
        for (i, g) in self.decays.iter().enumerate() {
            let o = m * (1 + i);
            for k in 0..m {
                dy[o + k] = z[k] - g * y[o + k];
            }
        }
        if let Some(den) = &self.density {
            let o = self.jd_offset();
            for k in 0..m {
                dy[o + k] = z[k] - den.decay * y[o + k];
            }
        }
    }

    /// One-sided derivatives `z′(t_n−)` and `z′(t_n+)` at node `n`, given
    /// `w′ = G` there, the state `y`, and the right slope `pending` at node `n − 1`
    /// (segment `n − 1 → n` is not stored yet). Coefficients and rates must be set.
    fn node_slopes(&mut self, n: i64, g: &[f64], y: &[f64], z: &[f64], pending: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut left = g.to_vec();
        let Some(op) = self.p.neutral else {
            return (left.clone(), left);
        };
        let mut right = g.to_vec();
        let mut common = vec![0.0; m];
        let mut dl = vec![0.0; m];
        let mut dr = vec![0.0; m];
        for (a, &d) in op.atoms().iter().zip(&self.atoms) {
            let j = n - d as i64;
            a.coef.apply_rate_add(&self.rates, self.z.node(j), &mut common);
            for k in 0..m {
                dl[k] = self.z.left_slope(j, k);
                dr[k] = if j == n - 1 { pending[k] } else { self.z.right_slope(j, k) };
            }
            a.coef.apply_add(&self.vals, &dl, &mut left);
            a.coef.apply_add(&self.vals, &dr, &mut right);
        }
        if let Some(den) = &self.density {
            let (jv, zv) = if den.offset == 0 {
                let jo = self.jd_offset();
                (y[jo..jo + m].to_vec(), z.to_vec())
            } else {
                let j = n - den.offset as i64;
                let jd = self.jd.as_ref().expect("density series");
                (jd.node(j).to_vec(), self.z.node(j).to_vec())
            };
            let scaled: Vec<f64> = jv.iter().map(|v| den.factor * v).collect();
            den.coef.apply_rate_add(&self.rates, &scaled, &mut common);
            let dj: Vec<f64> = (0..m).map(|k| den.factor * (zv[k] - den.decay * jv[k])).collect();
            den.coef.apply_add(&self.vals, &dj, &mut common);
        }
        for k in 0..m {
            left[k] += common[k];
            right[k] += common[k];
        }
        (left, right)
    }
}

pub(crate) fn integrate(p: &Problem, theta0: &BasePoint, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory> {
    let m = p.rhs.dim();
    p.grid.check(x0)?;
    if x0.dim() != m {
        return Err(Error::ShapeMismatch(format!(
            "initial history of dimension {} for a system of dimension {m}",
            x0.dim()
        )));
    }
    if theta0.dim() != p.base.dim() {
        return Err(Error::ShapeMismatch("initial base point lives on a different torus".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {horizon}")));
    }
    let step = p.grid.step();
    let steps = ((horizon / step) - 1e-9).ceil().max(0.0) as usize;
    let delays = p.rhs.delays().iter().map(|d| p.grid.delay_steps(d.delay)).collect::<Result<Vec<_>>>()?;
    let decays: Vec<f64> = p.rhs.memory().iter().map(|t| t.decay).collect();
    let (atoms, density) = match p.neutral {
        Some(op) => {
            let lay = op.layout(step)?;
            let density = op.density().map(|d| Density {
                decay: d.decay,
                offset: lay.offset,
                factor: op.density_factor(),
                coef: &d.coef,
            });
            (lay.atoms, density)
        }
        None => (Vec::new(), None),
    };
    let ncoef = p.base.coeff_count();
    let mut e = Engine {
        p,
        theta0,
        m,
        delays,
        decays,
        atoms,
        density,
        z: Series::from_history(x0),
        w: None,
        jd: None,
        vals: vec![0.0; ncoef],
        rates: vec![0.0; ncoef],
        delayed: vec![0.0; m * p.rhs.delays().len()],
        tmp: vec![0.0; m],
    };

    let ns = e.n_state();
    let mut y = vec![0.0; ns];
    if let Some(op) = p.neutral {
        let w_hist = op.eval_dhat2(theta0, x0)?;
        y[..m].copy_from_slice(w_hist.head());
        e.w = Some(Series::from_history(&w_hist));
    } else {
        y[..m].copy_from_slice(x0.head());
    }
    for (i, g) in e.decays.iter().enumerate() {
        y[m * (1 + i)..m * (2 + i)].copy_from_slice(&memory_integral(x0, *g));
    }
    if let Some(den) = &e.density {
        let prof = memory_profile(x0, den.decay);
        let jo = e.jd_offset();
        y[jo..jo + m].copy_from_slice(&prof[..m]);
        let n = x0.segments();
        let mut slopes = Vec::with_capacity(2 * n * m);
        for i in 0..n {
            for idx in [i + 1, i] {
                for k in 0..m {
                    slopes.push(x0.node(idx)[k] - den.decay * prof[idx * m + k]);
                }
            }
        }
        let jh = HistoryFunction::from_nodes(m, step, prof)?.with_slopes(slopes)?;
        e.jd = Some(Series::from_history(&jh));
    }

    let half = 0.5 * step;
    let mut k1 = vec![0.0; ns];
    let (mut k2, mut k3, mut k4) = (vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]);
    let mut ys = vec![0.0; ns];
    let mut z = vec![0.0; m];
    e.stage(0.0, At { index: 0, half: false }, &y, &mut z, &mut k1);
    e.set_coefficients(0.0, true);
    let g0 = k1[..m].to_vec();
    let before: Vec<f64> = (0..m).map(|k| e.z.right_slope(-1, k)).collect();
    let (_, mut pending) = e.node_slopes(0, &g0, &y, &z, &before);

    for k in 0..steps {
        let t = k as f64 * step;
        let node = k as i64;
        for i in 0..ns {
            ys[i] = y[i] + half * k1[i];
        }
        e.stage(t + half, At { index: node, half: true }, &ys, &mut z, &mut k2);
        for i in 0..ns {
            ys[i] = y[i] + half * k2[i];
        }
        e.stage(t + half, At { index: node, half: true }, &ys, &mut z, &mut k3);
        for i in 0..ns {
            ys[i] = y[i] + step * k3[i];
        }
        let next = At { index: node + 1, half: false };
        let t1 = (k + 1) as f64 * step;
        e.stage(t1, next, &ys, &mut z, &mut k4);
        for i in 0..ns {
            y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let z_prev = e.z.node(node).to_vec();
        let g_prev = k1[..m].to_vec();
        e.stage(t1, next, &y, &mut z, &mut k1);

        let norm = z.iter().chain(&y[..m]).fold(0.0f64, |a, v| a.max(v.abs()));
        if norm.is_nan() || norm > BLOW_UP {
            return Err(Error::BlowUp { t: t1, norm });
        }

        e.set_coefficients(t1, true);
        let g = k1[..m].to_vec();
        let (left, right) = e.node_slopes(node + 1, &g, &y, &z, &pending);
        e.z.push(&z, &pending, &left);
        pending = right;
        if let Some(w) = e.w.as_mut() {
            w.push(&y[..m], &g_prev, &g);
        }
        if let (Some(jd), Some(den)) = (e.jd.as_mut(), e.density.as_ref()) {
            // Replace the RK4 value by the exact integral over the stored
            // Hermite segment, so that D evaluated on snapshots reproduces w.
            let jo = m * (1 + e.decays.len());
            let c = den.decay * step;
            let (ex, wh) = ((-c).exp(), hermite_exp_weights(c));
            let j_prev = jd.node(node).to_vec();
            for k in 0..m {
                let seg = wh[0] * z_prev[k]
                    + wh[1] * step * e.z.right_slope(node, k)
                    + wh[2] * z[k]
                    + wh[3] * step * e.z.left_slope(node + 1, k);
                y[jo + k] = ex * j_prev[k] + step * ex * seg;
            }
            let lo: Vec<f64> = (0..m).map(|c| z_prev[c] - den.decay * j_prev[c]).collect();
            let hi: Vec<f64> = (0..m).map(|c| z[c] - den.decay * y[jo + c]).collect();
            jd.push(&y[jo..jo + m], &lo, &hi);
        }
    }
    Ok(Trajectory::new(p.base, theta0, p.grid.segments(), steps, e.z, e.w, step))
}
