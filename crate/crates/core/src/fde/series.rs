//! Growing node store with per-segment one-sided slopes, the backing store
//! of trajectories. Node `j` sits at time `jΔ`; the oldest node stands for the
//! constant tail before it.

use crate::history::HistoryFunction;

#[derive(Clone, Debug)]
pub(crate) struct Series {
    dim: usize,
    step: f64,
    first: i64,
    values: Vec<f64>,
    /// Segment `j → j+1`: right slope at node `j`.
    lo: Vec<f64>,
    /// Segment `j → j+1`: left slope at node `j + 1`.
    hi: Vec<f64>,
}

impl Series {
    /// Nodes `−N..=0` of a history, with its Hermite slopes or the chord slopes.
    pub(crate) fn from_history(x: &HistoryFunction) -> Self {
        let m = x.dim();
        let n = x.segments();
        let mut values = Vec::with_capacity((n + 1) * m);
        for i in (0..=n).rev() {
            values.extend_from_slice(x.node(i));
        }
        let mut lo = Vec::with_capacity(n * m);
        let mut hi = Vec::with_capacity(n * m);
        for i in (0..n).rev() {
            for k in 0..m {
                let (a, b) = x.segment_slopes(i, k).unwrap_or_else(|| {
                    let chord = (x.node(i)[k] - x.node(i + 1)[k]) / x.step();
                    (chord, chord)
                });
                lo.push(a);
                hi.push(b);
            }
        }
        Self { dim: m, step: x.step(), first: -(n as i64), values, lo, hi }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn first(&self) -> i64 {
        self.first
    }

    /// Index of the newest node.
    pub(crate) fn last(&self) -> i64 {
        self.first + (self.values.len() / self.dim) as i64 - 1
    }

    #[inline]
    pub(crate) fn node(&self, j: i64) -> &[f64] {
        let p = (j.max(self.first) - self.first) as usize * self.dim;
        &self.values[p..p + self.dim]
    }

    /// Right slope of component `k` at node `j`; zero inside the constant tail.
    #[inline]
    pub(crate) fn right_slope(&self, j: i64, k: usize) -> f64 {
        if j < self.first {
            0.0
        } else {
            self.lo[(j - self.first) as usize * self.dim + k]
        }
    }

    /// Left slope of component `k` at node `j`.
    #[inline]
    pub(crate) fn left_slope(&self, j: i64, k: usize) -> f64 {
        if j <= self.first {
            0.0
        } else {
            self.hi[(j - 1 - self.first) as usize * self.dim + k]
        }
    }

    /// Value at node `j`, or at the midpoint of segment `j → j+1` when `half` is set.
    #[inline]
    pub(crate) fn lookup(&self, j: i64, half: bool, out: &mut [f64]) {
        if !half || j < self.first {
            out.copy_from_slice(self.node(j));
            return;
        }
        let a = self.node(j);
        let b = self.node(j + 1);
        let s = (j - self.first) as usize * self.dim;
        let q = self.step / 8.0;
        for k in 0..self.dim {
            out[k] = 0.5 * (a[k] + b[k]) + q * (self.lo[s + k] - self.hi[s + k]);
        }
    }

    /// Slope of component `k` at the midpoint of segment `j → j+1`.
    #[inline]
    pub(crate) fn mid_slope(&self, j: i64, k: usize) -> f64 {
        if j < self.first {
            return 0.0;
        }
        let s = (j - self.first) as usize * self.dim + k;
        1.5 * (self.node(j + 1)[k] - self.node(j)[k]) / self.step - 0.25 * (self.lo[s] + self.hi[s])
    }

    /// Appends node `last + 1` with the slopes of the segment leading to it.
    pub(crate) fn push(&mut self, value: &[f64], lo: &[f64], hi: &[f64]) {
        self.values.extend_from_slice(value);
        self.lo.extend_from_slice(lo);
        self.hi.extend_from_slice(hi);
    }

    /// The history `s ↦ x(jΔ + s)` on a window of `segments` steps, with slopes.
    pub(crate) fn snapshot(&self, j: i64, segments: usize) -> HistoryFunction {
        let m = self.dim;
        let mut values = Vec::with_capacity((segments + 1) * m);
        for i in 0..=segments as i64 {
            values.extend_from_slice(self.node(j - i));
        }
        let mut slopes = Vec::with_capacity(2 * segments * m);
        for i in 0..segments as i64 {
            let seg = j - i - 1;
            for k in 0..m {
                slopes.push(self.right_slope(seg, k));
            }
            for k in 0..m {
                slopes.push(self.left_slope(seg + 1, k));
            }
        }
        HistoryFunction::from_nodes(m, self.step, values)
            .and_then(|h| h.with_slopes(slopes))
            .expect("series values are finite")
    }
}

/// Compact-open distance between the snapshots `a` at node `ja` and `b` at `jb`
/// when unit windows align with the grid (`per_unit` nodes per time unit).
pub(crate) fn snapshot_metric(
    a: &Series,
    ja: i64,
    b: &Series,
    jb: i64,
    segments: usize,
    per_unit: usize,
    n_terms: usize,
) -> f64 {
    let gap = |i: usize| {
        let (p, q) = (a.node(ja - i as i64), b.node(jb - i as i64));
        p.iter().zip(q).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let mut sup = 0.0f64;
    let mut next = 0usize;
    let mut total = 0.0;
    let mut weight = 1.0;
    for n in 1..=n_terms {
        let last = (n * per_unit).min(segments);
        while next <= last {
            sup = sup.max(gap(next));
            next += 1;
        }
        weight *= 0.5;
        total += weight * sup / (1.0 + sup);
    }
    total
}
