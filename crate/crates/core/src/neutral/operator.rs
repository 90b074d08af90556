use serde::Serialize;

use crate::baseflow::{BasePoint, TorusBase};
use crate::error::{Error, Result};
use crate::fde::{CoefMatrix, Grid};
use crate::history::{steps_in, HistoryFunction, OrderParams};
use crate::quadrature::{hermite_exp_weights, linear_exp_weights, memory_profile};

/// A point mass `coef(θ)` at `−delay`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub delay: f64,
    pub coef: CoefMatrix,
}

/// The density `coef(θ) e^{decay·s}` on `(−∞, −offset]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Density {
    pub decay: f64,
    pub offset: f64,
    pub coef: CoefMatrix,
}

/// `D(θ, x) = x(0) − Σ_j c_j(θ) x(−r_j) − g(θ) ∫_{−∞}^{−s₀} e^{γs} x(s) ds`.
///
/// The kernel has no mass at `0`, and its total mass is bounded by
/// `q = sup_θ ‖ν(θ)‖∞ < 1`, which makes `D` stable and `D̂` invertible by a
/// Neumann series with `‖D̂⁻¹‖ ≤ 1/(1 − q)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeutralOperator {
    dim: usize,
    #[serde(skip)]
    base: TorusBase,
    atoms: Vec<Atom>,
    density: Option<Density>,
    q: f64,
    #[serde(skip)]
    indices: Vec<usize>,
}

/// Result of inverting `D̂₂(θ, ·)`.
#[derive(Clone, Debug)]
pub struct Inversion {
    pub x: HistoryFunction,
    pub iterations: usize,
    /// Sup-norm change in the last iteration.
    pub change: f64,
    /// `‖D̂₂(θ, x) − h‖∞`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityConstants {
    pub q: f64,
    /// `1/(1 − q)`, the adopted bound on `‖D̂⁻¹‖`.
    pub k_bound: f64,
    /// Largest `‖D̂⁻¹h‖∞/‖h‖∞` observed.
    pub k_emp: f64,
    /// `(t, c(t))` where `c(t)` is the largest `sup_{s≥t} ‖x(s)‖/‖φ‖∞` over
    /// sampled homogeneous solutions; nonincreasing by construction.
    pub c_profile: Vec<(f64, f64)>,
    /// Whether `c` has fallen below `1e-3` by the end of the window.
    pub decays: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeutralBounds {
    /// `1 + q ≥ sup_θ ‖D(θ, ·)‖`.
    pub k_d: f64,
    /// `1/(1 − q) ≥ sup_θ ‖D̂⁻¹(θ, ·)‖`.
    pub k_d_prime: f64,
    pub k_d_emp: f64,
    pub k_d_prime_emp: f64,
}

/// Grid positions of the kernel: atom delays and the density offset in steps.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub(crate) atoms: Vec<usize>,
    pub(crate) offset: usize,
}

/// Dense coefficient matrices at a sequence of times.
struct NodeCoefs {
    m: usize,
    n_atoms: usize,
    uniform: bool,
    atoms: Vec<f64>,
    density: Vec<f64>,
    /// Derivatives along the flow, filled only when slopes are propagated.
    atom_rates: Vec<f64>,
    density_rates: Vec<f64>,
}

impl NodeCoefs {
    #[inline]
    fn atom(&self, node: usize, j: usize) -> &[f64] {
        let node = if self.uniform { 0 } else { node };
        let mm = self.m * self.m;
        let p = (node * self.n_atoms + j) * mm;
        &self.atoms[p..p + mm]
    }

    #[inline]
    fn density(&self, node: usize) -> &[f64] {
        let node = if self.uniform { 0 } else { node };
        let mm = self.m * self.m;
        &self.density[node * mm..(node + 1) * mm]
    }

    #[inline]
    fn atom_rate(&self, node: usize, j: usize) -> &[f64] {
        let node = if self.uniform { 0 } else { node };
        let mm = self.m * self.m;
        let p = (node * self.n_atoms + j) * mm;
        &self.atom_rates[p..p + mm]
    }

    #[inline]
    fn density_rate(&self, node: usize) -> &[f64] {
        let node = if self.uniform { 0 } else { node };
        let mm = self.m * self.m;
        &self.density_rates[node * mm..(node + 1) * mm]
    }
}

/// Per-segment slopes `[older end, newer end]` of `x`, chords when it carries none.
fn slopes_or_chords(x: &HistoryFunction) -> Vec<f64> {
    if let Some(s) = x.slopes() {
        return s.to_vec();
    }
    let m = x.dim();
    let mut out = Vec::with_capacity(2 * x.segments() * m);
    for i in 0..x.segments() {
        let chord: Vec<f64> = (0..m).map(|k| (x.node(i)[k] - x.node(i + 1)[k]) / x.step()).collect();
        out.extend_from_slice(&chord);
        out.extend_from_slice(&chord);
    }
    out
}

#[inline]
fn mat_add(m: usize, a: &[f64], x: &[f64], scale: f64, out: &mut [f64]) {
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += a[i * m + j] * x[j];
        }
        out[i] += scale * s;
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

impl NeutralOperator {
    pub fn new(dim: usize, base: TorusBase, atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut rows = vec![0.0; dim];
        for a in &atoms {
            a.coef.check(&base, dim)?;
            if !(a.delay > 0.0 && a.delay.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "atom delays must be positive (mass at 0 belongs to the identity part), got {}",
                    a.delay
                )));
            }
            for (r, b) in rows.iter_mut().zip(a.coef.row_bounds(&base)) {
                *r += b;
            }
        }
        if let Some(d) = &density {
            d.coef.check(&base, dim)?;
            if !(d.decay > 0.0 && d.decay.is_finite()) {
                return Err(Error::InvalidArgument(format!("density decay must be positive, got {}", d.decay)));
            }
            if !(d.offset >= 0.0 && d.offset.is_finite()) {
                return Err(Error::InvalidArgument(format!("density offset must be nonnegative, got {}", d.offset)));
            }
            let mass = (-d.decay * d.offset).exp() / d.decay;
            for (r, b) in rows.iter_mut().zip(d.coef.row_bounds(&base)) {
                *r += b * mass;
            }
        }
        let q = rows.into_iter().fold(0.0, f64::max);
        if q >= 1.0 {
            return Err(Error::NotContracting(q));
        }
        let mut indices: Vec<usize> = atoms
            .iter()
            .flat_map(|a| a.coef.base_indices())
            .chain(density.iter().flat_map(|d| d.coef.base_indices()))
            .collect();
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { dim, base, atoms, density, q, indices })
    }

    /// `D(θ, x) = x(0)`.
    pub fn identity(dim: usize, base: TorusBase) -> Self {
        Self::new(dim, base, Vec::new(), None).expect("empty kernel")
    }

    /// Scalar operator `x(0) − c x(−r)` with a constant coefficient.
    pub fn single_atom(base: TorusBase, c: f64, delay: f64) -> Result<Self> {
        Self::new(1, base, vec![Atom { delay, coef: CoefMatrix::scalar(c) }], None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> &TorusBase {
        &self.base
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    /// `sup_θ ‖ν(θ)‖∞` from amplitude sums.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r_min(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.delay).reduce(f64::min)
    }

    pub fn r_max(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.delay).reduce(f64::max)
    }

    pub fn is_identity(&self) -> bool {
        self.atoms.is_empty() && self.density.is_none()
    }

    /// Checks that the kernel sits on the grid: atom delays at whole steps of at
    /// least one step, the density offset at a whole number of steps.
    pub fn validate_grid(&self, grid: &Grid) -> Result<()> {
        self.layout(grid.step()).map(|_| ())?;
        if let Some(d) = &self.density {
            grid.check_decay(d.decay)?;
        }
        Ok(())
    }

    pub(crate) fn layout(&self, step: f64) -> Result<Layout> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match steps_in(a.delay, step) {
                Some(d) if d >= 1 => atoms.push(d),
                _ => {
                    return Err(Error::Grid(format!(
                        "atom delay {} is not a positive multiple of the step {step}",
                        a.delay
                    )))
                }
            }
        }
        let offset = match &self.density {
            None => 0,
            Some(d) => steps_in(d.offset, step).ok_or_else(|| {
                Error::Grid(format!("density offset {} is not a multiple of the step {step}", d.offset))
            })?,
        };
        Ok(Layout { atoms, offset })
    }

    fn check_history(&self, x: &HistoryFunction) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "history of dimension {} for an operator of dimension {}",
                x.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn coeff_values(&self, theta: &[f64], out: &mut [f64]) {
        for &i in &self.indices {
            out[i] = self.base.eval_index(i, theta);
        }
    }

    /// `e^{−γ s₀}`, the factor relating the density integral to the memory
    /// variable `J(t) = ∫_{−∞}^0 e^{γu} z(t+u) du` evaluated at `t − s₀`.
    pub(crate) fn density_factor(&self) -> f64 {
        self.density.as_ref().map_or(0.0, |d| (-d.decay * d.offset).exp())
    }

    fn node_coefs(&self, theta: &BasePoint, times: impl Iterator<Item = f64>, with_rates: bool) -> NodeCoefs {
        let m = self.dim;
        let n_atoms = self.atoms.len();
        let uniform = self.indices.is_empty();
        let mut vals = vec![0.0; self.base.coeff_count()];
        let mut rates = vec![0.0; self.base.coeff_count()];
        let mut nc = NodeCoefs {
            m,
            n_atoms,
            uniform,
            atoms: Vec::new(),
            density: Vec::new(),
            atom_rates: Vec::new(),
            density_rates: Vec::new(),
        };
        for t in times {
            let th = self.base.advance(theta, t);
            self.coeff_values(th.theta(), &mut vals);
            if with_rates {
                for &i in &self.indices {
                    rates[i] = self.base.rate_index(i, th.theta());
                }
            }
            for a in &self.atoms {
                nc.atoms.extend(a.coef.dense(&vals));
                if with_rates {
                    nc.atom_rates.extend(a.coef.dense_rate(&rates));
                }
            }
            match &self.density {
                Some(d) => {
                    nc.density.extend(d.coef.dense(&vals));
                    if with_rates {
                        nc.density_rates.extend(d.coef.dense_rate(&rates));
                    }
                }
                None => {
                    nc.density.extend(std::iter::repeat_n(0.0, m * m));
                    if with_rates {
                        nc.density_rates.extend(std::iter::repeat_n(0.0, m * m));
                    }
                }
            }
            if uniform {
                break;
            }
        }
        nc
    }

    /// `d/ds` of the delayed part `Σ_j c_j(θ·s) x(s − r_j) + f g(θ·s) J(s − s₀)` at
    /// node `node`, added to `out`. `end` picks the one-sided slope: 0 for the
    /// older end of a segment (right derivative), 1 for the newer end.
    #[allow(clippy::too_many_arguments)]
    fn kernel_rate(
        &self,
        lay: &Layout,
        coefs: &NodeCoefs,
        values: &[f64],
        slopes: &[f64],
        j: &[f64],
        n: usize,
        node: usize,
        end: usize,
        out: &mut [f64],
    ) {
        let m = self.dim;
        let mut tmp = vec![0.0; m];
        for (ja, &d) in lay.atoms.iter().enumerate() {
            let p = (node + d).min(n);
            mat_add(m, coefs.atom_rate(node, ja), &values[p * m..(p + 1) * m], 1.0, out);
            // Segment whose `end` sits at node + d; the constant tail has zero slope.
            let seg = node + d - (1 - end);
            if seg < n {
                tmp.copy_from_slice(&slopes[(2 * seg + end) * m..(2 * seg + end + 1) * m]);
                mat_add(m, coefs.atom(node, ja), &tmp, 1.0, out);
            }
        }
        if let Some(den) = &self.density {
            let f = self.density_factor();
            let p = (node + lay.offset).min(n);
            let jp = &j[p * m..(p + 1) * m];
            mat_add(m, coefs.density_rate(node), jp, f, out);
            for k in 0..m {
                tmp[k] = values[p * m + k] - den.decay * jp[k];
            }
            mat_add(m, coefs.density(node), &tmp, f, out);
        }
    }

    /// `D(θ, x)`.
    pub fn eval_d(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<Vec<f64>> {
        self.check_history(x)?;
        let lay = self.layout(x.step())?;
        let m = self.dim;
        let mut vals = vec![0.0; self.base.coeff_count()];
        self.coeff_values(theta.theta(), &mut vals);
        let mut out = x.head().to_vec();
        let mut neg = vec![0.0; m];
        for (a, &d) in self.atoms.iter().zip(&lay.atoms) {
            a.coef.apply_add(&vals, x.node(d.min(x.segments())), &mut neg);
        }
        if let Some(den) = &self.density {
            let j = memory_profile(x, den.decay);
            let node = lay.offset.min(x.segments());
            let mut dj = vec![0.0; m];
            den.coef.apply_add(&vals, &j[node * m..(node + 1) * m], &mut dj);
            let f = self.density_factor();
            for (n, v) in neg.iter_mut().zip(dj) {
                *n += f * v;
            }
        }
        for (o, n) in out.iter_mut().zip(neg) {
            *o -= n;
        }
        Ok(out)
    }

    /// `‖ν(θ)‖∞([a, b])`: the largest row sum of atom masses in `[a, b]` plus the
    /// density mass there. `a` may be `−∞`.
    pub fn kernel_variation(&self, theta: &BasePoint, a: f64, b: f64) -> Result<f64> {
        if !(a < b && b <= 0.0) {
            return Err(Error::InvalidArgument(format!("need a < b ≤ 0, got [{a}, {b}]")));
        }
        let m = self.dim;
        let mut rows = vec![0.0; m];
        for at in &self.atoms {
            let s = -at.delay;
            if a <= s && s <= b {
                for &(i, _, c) in at.coef.entries() {
                    rows[i] += c.at(&self.base, theta.theta()).abs();
                }
            }
        }
        if let Some(d) = &self.density {
            let hi = b.min(-d.offset);
            if a < hi {
                let mass = ((d.decay * hi).exp() - (d.decay * a).exp()) / d.decay;
                for &(i, _, c) in d.coef.entries() {
                    rows[i] += c.at(&self.base, theta.theta()).abs() * mass;
                }
            }
        }
        Ok(rows.into_iter().fold(0.0, f64::max))
    }

    /// `D̂₂(θ, x)(s) = D(θ·s, x_s)` on the grid of `x`; `x` is extended by its tail below `−L`.
    /// The result carries Hermite slopes; chords of `x` stand in when it has none.
    pub fn eval_dhat2(&self, theta: &BasePoint, x: &HistoryFunction) -> Result<HistoryFunction> {
        self.check_history(x)?;
        let lay = self.layout(x.step())?;
        let n = x.segments();
        let m = self.dim;
        let coefs = self.node_coefs(theta, (0..=n).map(|i| x.time(i)), true);
        let j = match &self.density {
            Some(d) => memory_profile(x, d.decay),
            None => Vec::new(),
        };
        let f = self.density_factor();
        let mut out = Vec::with_capacity((n + 1) * m);
        let mut acc = vec![0.0; m];
        for i in 0..=n {
            acc.fill(0.0);
            for (ja, &d) in lay.atoms.iter().enumerate() {
                mat_add(m, coefs.atom(i, ja), x.node((i + d).min(n)), 1.0, &mut acc);
            }
            if self.density.is_some() {
                let p = (i + lay.offset).min(n) * m;
                mat_add(m, coefs.density(i), &j[p..p + m], f, &mut acc);
            }
            out.extend(x.node(i).iter().zip(&acc).map(|(v, a)| v - a));
        }
        let xs = slopes_or_chords(x);
        let mut slopes = Vec::with_capacity(2 * n * m);
        for i in 0..n {
            for (node, end) in [(i + 1, 0), (i, 1)] {
                acc.fill(0.0);
                self.kernel_rate(&lay, &coefs, x.values(), &xs, &j, n, node, end, &mut acc);
                let own = &xs[(2 * i + end) * m..(2 * i + end + 1) * m];
                slopes.extend(own.iter().zip(&acc).map(|(v, a)| v - a));
            }
        }
        HistoryFunction::from_nodes(m, x.step(), out)?.with_slopes(slopes)
    }

    /// Solves `D̂₂(θ, x) = h` by the Neumann iteration
    /// `x⁽ᵏ⁺¹⁾(s) = h(s) + Σ c_j(θ·s) x⁽ᵏ⁾(s − r_j) + density term`, from `x⁽⁰⁾ = h`,
    /// until the sup-norm change is at most `tol`. The iterate is extended by
    /// its value at `−L`; the change contracts by `q` per iteration, so about
    /// `log(tol)/log(q)` iterations are needed.
    pub fn dhat_inverse(&self, theta: &BasePoint, h: &HistoryFunction, tol: f64, max_iter: usize) -> Result<Inversion> {
        self.check_history(h)?;
        let lay = self.layout(h.step())?;
        let n = h.segments();
        let m = self.dim;
        let step = h.step();
        let coefs = self.node_coefs(theta, (0..=n).map(|i| h.time(i)), false);
        let f = self.density_factor();
        let mut x = h.values().to_vec();
        let mut next = vec![0.0; x.len()];
        let mut j = vec![0.0; x.len()];
        let mut iterations = 0;
        let mut change = f64::INFINITY;
        if self.is_identity() {
            change = 0.0;
        }
        while change > tol {
            if iterations == max_iter {
                return Err(Error::NoConvergence { iterations, change });
            }
            if let Some(d) = &self.density {
                linear_profile(&x, m, n, step, d.decay, &mut j);
            }
            for i in 0..=n {
                let head = &mut next[i * m..(i + 1) * m];
                head.copy_from_slice(&h.values()[i * m..(i + 1) * m]);
                for (ja, &d) in lay.atoms.iter().enumerate() {
                    let p = (i + d).min(n) * m;
                    mat_add(m, coefs.atom(i, ja), &x[p..p + m], 1.0, head);
                }
                if self.density.is_some() {
                    let p = (i + lay.offset).min(n) * m;
                    mat_add(m, coefs.density(i), &j[p..p + m], f, head);
                }
            }
            change = sup_diff(&x, &next);
            std::mem::swap(&mut x, &mut next);
            iterations += 1;
        }
        let x = HistoryFunction::from_nodes(m, step, x)?;
        let residual = sup_diff(self.eval_dhat2(theta, &x)?.values(), h.values());
        Ok(Inversion { x, iterations, change, residual })
    }

    /// Exact solution of the discrete equations `D̂₂(θ, x) = h` by substitution
    /// from the oldest node forward. Every atom reads strictly older nodes, so
    /// only the tail node (and, for `s₀ = 0`, the density weight of the current
    /// segment) needs a small fixed-point solve.
    pub fn invert(&self, theta: &BasePoint, h: &HistoryFunction) -> Result<HistoryFunction> {
        self.check_history(h)?;
        if self.is_identity() {
            return Ok(h.clone());
        }
        let lay = self.layout(h.step())?;
        let n = h.segments();
        // Slopes propagate only when every delayed term reads strictly older nodes.
        let hermite = h.slopes().is_some() && (self.density.is_none() || lay.offset >= 1);
        let coefs = self.node_coefs(theta, (0..=n).map(|i| h.time(i)), hermite);
        let x = self.substitute(&lay, &coefs, h.values(), n, h.step())?;
        if hermite {
            let hs = h.slopes().expect("checked above");
            let (x, slopes) = self.propagate_slopes(&lay, &coefs, h.values(), hs, x, n, h.step());
            return HistoryFunction::from_nodes(self.dim, h.step(), x)?.with_slopes(slopes);
        }
        HistoryFunction::from_nodes(self.dim, h.step(), x)
    }

    /// Hermite variant of the substitution: node values and slopes of the
    /// inverse, oldest segment first, with the memory profile built from the
    /// same Hermite segments that `eval_dhat2` integrates. `x` holds the
    /// linear solution, of which only the tail node is kept.
    #[allow(clippy::too_many_arguments)]
    fn propagate_slopes(
        &self,
        lay: &Layout,
        coefs: &NodeCoefs,
        h: &[f64],
        hs: &[f64],
        mut x: Vec<f64>,
        n: usize,
        step: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let m = self.dim;
        let f = self.density_factor();
        let mut slopes = vec![0.0; 2 * n * m];
        let mut j = vec![0.0; (n + 1) * m];
        let (e, wh) = match &self.density {
            Some(d) => {
                let c = d.decay * step;
                for k in 0..m {
                    j[n * m + k] = x[n * m + k] / d.decay;
                }
                ((-c).exp(), hermite_exp_weights(c))
            }
            None => (0.0, [0.0; 4]),
        };
        let mut acc = vec![0.0; m];
        for i in (0..n).rev() {
            acc.copy_from_slice(&h[i * m..(i + 1) * m]);
            for (ja, &d) in lay.atoms.iter().enumerate() {
                let p = (i + d).min(n) * m;
                mat_add(m, coefs.atom(i, ja), &x[p..p + m], 1.0, &mut acc);
            }
            if self.density.is_some() {
                let p = (i + lay.offset).min(n) * m;
                mat_add(m, coefs.density(i), &j[p..p + m], f, &mut acc);
            }
            x[i * m..(i + 1) * m].copy_from_slice(&acc);
            for (node, end) in [(i + 1, 0), (i, 1)] {
                acc.fill(0.0);
                self.kernel_rate(lay, coefs, &x, &slopes, &j, n, node, end, &mut acc);
                let r = (2 * i + end) * m;
                for k in 0..m {
                    slopes[r + k] = hs[r + k] + acc[k];
                }
            }
            if self.density.is_some() {
                for k in 0..m {
                    let seg = wh[0] * x[(i + 1) * m + k]
                        + wh[1] * step * slopes[2 * i * m + k]
                        + wh[2] * x[i * m + k]
                        + wh[3] * step * slopes[(2 * i + 1) * m + k];
                    j[i * m + k] = e * j[(i + 1) * m + k] + step * e * seg;
                }
            }
        }
        (x, slopes)
    }

    fn substitute(&self, lay: &Layout, coefs: &NodeCoefs, h: &[f64], n: usize, step: f64) -> Result<Vec<f64>> {
        let m = self.dim;
        let f = self.density_factor();
        let mut x = vec![0.0; (n + 1) * m];
        let mut j = vec![0.0; (n + 1) * m];
        let (decay, e, w) = match &self.density {
            Some(d) => {
                let c = d.decay * step;
                (d.decay, (-c).exp(), linear_exp_weights(c))
            }
            None => (1.0, 0.0, [0.0, 0.0]),
        };
        let mut b = vec![0.0; m];
        let mut cur = vec![0.0; m];
        // Tail: x(−L) = h(−L) + (Σ c_j + f g / γ) x(−L).
        {
            let hn = &h[n * m..];
            let mut tail = hn.to_vec();
            for it in 0.. {
                cur.copy_from_slice(hn);
                for ja in 0..lay.atoms.len() {
                    mat_add(m, coefs.atom(n, ja), &tail, 1.0, &mut cur);
                }
                if self.density.is_some() {
                    mat_add(m, coefs.density(n), &tail, f / decay, &mut cur);
                }
                let ch = sup_diff(&cur, &tail);
                tail.copy_from_slice(&cur);
                if ch <= 1e-15 * (1.0 + tail.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                    break;
                }
                if it > 100_000 {
                    return Err(Error::NoConvergence { iterations: it, change: ch });
                }
            }
            x[n * m..].copy_from_slice(&tail);
            for k in 0..m {
                j[n * m + k] = tail[k] / decay;
            }
        }
        for i in (0..n).rev() {
            b.copy_from_slice(&h[i * m..(i + 1) * m]);
            for (ja, &d) in lay.atoms.iter().enumerate() {
                let p = (i + d).min(n) * m;
                mat_add(m, coefs.atom(i, ja), &x[p..p + m], 1.0, &mut b);
            }
            // J_i = e J_{i+1} + Δ e (w0 x_{i+1} + w1 x_i).
            let mut jpart = vec![0.0; m];
            for k in 0..m {
                jpart[k] = e * j[(i + 1) * m + k] + step * e * w[0] * x[(i + 1) * m + k];
            }
            if self.density.is_some() && lay.offset >= 1 {
                let p = (i + lay.offset).min(n) * m;
                mat_add(m, coefs.density(i), &j[p..p + m], f, &mut b);
                cur.copy_from_slice(&b);
            } else if self.density.is_some() {
                // x_i = b + f G (jpart + Δ e w1 x_i), solved by fixed point.
                cur.copy_from_slice(&b);
                for _ in 0..200 {
                    let mut ji = jpart.clone();
                    for k in 0..m {
                        ji[k] += step * e * w[1] * cur[k];
                    }
                    let mut nx = b.clone();
                    mat_add(m, coefs.density(i), &ji, f, &mut nx);
                    let ch = sup_diff(&nx, &cur);
                    cur.copy_from_slice(&nx);
                    if ch <= 1e-16 * (1.0 + cur.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                        break;
                    }
                }
            } else {
                cur.copy_from_slice(&b);
            }
            x[i * m..(i + 1) * m].copy_from_slice(&cur);
            for k in 0..m {
                j[i * m + k] = jpart[k] + step * e * w[1] * cur[k];
            }
        }
        Ok(x)
    }

    /// Solves `D(θ·t, x_t) = h(t)` for `t ∈ [0, T]` with `x_0 = φ`, returning
    /// `x(kΔ)` for `k = 0..=T/Δ`. Requires `D(θ, φ) = h(0)` to within `1e-8`.
    pub fn solve_nonhomogeneous<V, F>(
        &self,
        theta: &BasePoint,
        phi: &HistoryFunction,
        h: F,
        horizon: f64,
    ) -> Result<Vec<Vec<f64>>>
    where
        V: AsRef<[f64]>,
        F: Fn(f64) -> V,
    {
        self.check_history(phi)?;
        let lay = self.layout(phi.step())?;
        let m = self.dim;
        let n = phi.segments();
        let step = phi.step();
        let d0 = self.eval_d(theta, phi)?;
        let h0 = h(0.0);
        let h0 = h0.as_ref();
        if h0.len() != m {
            return Err(Error::ShapeMismatch("forcing has the wrong dimension".into()));
        }
        let gap = sup_diff(&d0, h0);
        if gap > 1e-8 * (1.0 + h0.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            return Err(Error::Precondition(format!("D(θ, φ) differs from h(0) by {gap:e}")));
        }
        let steps = ((horizon / step) - 1e-9).ceil().max(0.0) as usize;
        let coefs = self.node_coefs(theta, (1..=steps).map(|k| k as f64 * step), false);
        let f = self.density_factor();
        // Index p = n + k holds time kΔ, k ≥ −n.
        let total = n + steps + 1;
        let mut x = vec![0.0; total * m];
        let mut j = vec![0.0; total * m];
        for i in 0..=n {
            x[(n - i) * m..(n - i + 1) * m].copy_from_slice(phi.node(i));
        }
        let (e, w) = match &self.density {
            Some(d) => {
                let prof = memory_profile(phi, d.decay);
                for i in 0..=n {
                    j[(n - i) * m..(n - i + 1) * m].copy_from_slice(&prof[i * m..(i + 1) * m]);
                }
                let c = d.decay * step;
                ((-c).exp(), linear_exp_weights(c))
            }
            None => (0.0, [0.0, 0.0]),
        };
        let mut b = vec![0.0; m];
        for k in 1..=steps {
            let p = n + k;
            let node = k - 1;
            b.copy_from_slice(h(k as f64 * step).as_ref());
            for (ja, &d) in lay.atoms.iter().enumerate() {
                let q = p.saturating_sub(d) * m;
                mat_add(m, coefs.atom(node, ja), &x[q..q + m], 1.0, &mut b);
            }
            let mut jpart = vec![0.0; m];
            for c in 0..m {
                jpart[c] = e * j[(p - 1) * m + c] + step * e * w[0] * x[(p - 1) * m + c];
            }
            let mut cur = b.clone();
            if self.density.is_some() && lay.offset >= 1 {
                let q = p.saturating_sub(lay.offset) * m;
                mat_add(m, coefs.density(node), &j[q..q + m], f, &mut cur);
            } else if self.density.is_some() {
                for _ in 0..200 {
                    let mut ji = jpart.clone();
                    for c in 0..m {
                        ji[c] += step * e * w[1] * cur[c];
                    }
                    let mut nx = b.clone();
                    mat_add(m, coefs.density(node), &ji, f, &mut nx);
                    let ch = sup_diff(&nx, &cur);
                    cur = nx;
                    if ch <= 1e-16 * (1.0 + cur.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                        break;
                    }
                }
            }
            x[p * m..(p + 1) * m].copy_from_slice(&cur);
            for c in 0..m {
                j[p * m + c] = jpart[c] + step * e * w[1] * cur[c];
            }
        }
        Ok((0..=steps).map(|k| x[(n + k) * m..(n + k + 1) * m].to_vec()).collect())
    }

    /// Empirical stability constants on `grid`, sampling `n_samples` base
    /// points, right sides `h ∈ B₁` and homogeneous data `φ` with `D(θ, φ) = 0`.
    pub fn stability_constants(
        &self,
        grid: &Grid,
        n_samples: usize,
        horizon: f64,
        seed: u64,
    ) -> Result<StabilityConstants> {
        use crate::sampling;
        let mut rng = sampling::rng(seed);
        let k_bound = 1.0 / (1.0 - self.q);
        let mut k_emp = 0.0f64;
        let steps = ((horizon / grid.step()) - 1e-9).ceil().max(0.0) as usize;
        let mut envelope = vec![0.0f64; steps + 1];
        for _ in 0..n_samples {
            let theta = sampling::base_point(&mut rng, &self.base);
            let h = sampling::history(&mut rng, self.dim, grid, 1.0)?;
            let x = self.invert(&theta, &h)?;
            if h.sup_norm() > 0.0 {
                k_emp = k_emp.max(x.sup_norm() / h.sup_norm());
            }
            let phi = self.homogeneous_datum(&theta, sampling::history(&mut rng, self.dim, grid, 1.0)?)?;
            let norm = phi.sup_norm();
            if norm == 0.0 {
                continue;
            }
            let zero = vec![0.0; self.dim];
            let sol = self.solve_nonhomogeneous(&theta, &phi, |_| zero.as_slice(), horizon)?;
            for (e, v) in envelope.iter_mut().zip(&sol) {
                *e = e.max(v.iter().fold(0.0f64, |a, b| a.max(b.abs())) / norm);
            }
        }
        for k in (0..steps).rev() {
            envelope[k] = envelope[k].max(envelope[k + 1]);
        }
        let stride = (steps / 1000).max(1);
        let mut c_profile: Vec<(f64, f64)> =
            (0..=steps).step_by(stride).map(|k| (k as f64 * grid.step(), envelope[k])).collect();
        if !steps.is_multiple_of(stride) {
            c_profile.push((steps as f64 * grid.step(), envelope[steps]));
        }
        let decays = envelope[steps] < 1e-3;
        Ok(StabilityConstants { q: self.q, k_bound, k_emp, c_profile, decays })
    }

    /// Adjusts the head of `phi` so that `D(θ, φ) = 0`.
    pub fn homogeneous_datum(&self, theta: &BasePoint, phi: HistoryFunction) -> Result<HistoryFunction> {
        let mut phi = phi.without_slopes();
        for _ in 0..100 {
            let d = self.eval_d(theta, &phi)?;
            if d.iter().all(|v| v.abs() < 1e-15) {
                break;
            }
            let mut values = phi.values().to_vec();
            for (v, dk) in values.iter_mut().zip(&d) {
                *v -= dk;
            }
            phi = HistoryFunction::from_nodes(phi.dim(), phi.step(), values)?;
        }
        Ok(phi)
    }

    /// `K_D = 1 + q` and `K_D′ = 1/(1 − q)` with their empirical counterparts.
    pub fn bounds(&self, grid: &Grid, n_samples: usize, seed: u64) -> Result<NeutralBounds> {
        use crate::sampling;
        let mut rng = sampling::rng(seed);
        let (mut kd, mut kdp) = (0.0f64, 0.0f64);
        for _ in 0..n_samples {
            let theta = sampling::base_point(&mut rng, &self.base);
            let x = sampling::history(&mut rng, self.dim, grid, 1.0)?;
            kd = kd.max(self.eval_dhat2(&theta, &x)?.sup_norm() / x.sup_norm());
            let h = sampling::history(&mut rng, self.dim, grid, 1.0)?;
            kdp = kdp.max(self.invert(&theta, &h)?.sup_norm() / h.sup_norm());
        }
        Ok(NeutralBounds { k_d: 1.0 + self.q, k_d_prime: 1.0 / (1.0 - self.q), k_d_emp: kd, k_d_prime_emp: kdp })
    }

    /// `x ≤_{D,A} y`, that is `D̂₂(θ, x) ≤_A D̂₂(θ, y)`.
    pub fn leq_da(
        &self,
        theta: &BasePoint,
        x: &HistoryFunction,
        y: &HistoryFunction,
        order: &OrderParams,
    ) -> Result<bool> {
        order.leq(&self.eval_dhat2(theta, x)?, &self.eval_dhat2(theta, y)?)
    }
}

/// Memory profile of raw node values with linear segments (see `memory_profile`).
fn linear_profile(x: &[f64], m: usize, n: usize, step: f64, decay: f64, out: &mut [f64]) {
    let c = decay * step;
    let e = (-c).exp();
    let w = linear_exp_weights(c);
    for k in 0..m {
        let mut j = x[n * m + k] / decay;
        out[n * m + k] = j;
        for i in (0..n).rev() {
            j = e * j + step * e * (w[0] * x[(i + 1) * m + k] + w[1] * x[i * m + k]);
            out[i * m + k] = j;
        }
    }
}
