use serde::Serialize;

use super::HistoryFunction;
use crate::error::{Error, Result};

/// The diagonal matrix `A` (negative entries) defining the exponential order
/// `x ≤_A y  ⇔  y − x ≥ 0 and e^{−At}(y − x)(t) is nondecreasing`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderParams {
    diag: Vec<f64>,
    tol: f64,
}

/// Outcome of a cone-membership test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderCheck {
    pub holds: bool,
    /// Smallest value among the node conditions `(y−x)(t_i) ≥ 0` and the step
    /// conditions `(y−x)(t_i) − e^{AΔ}(y−x)(t_i − Δ) ≥ 0`.
    pub margin: f64,
    /// Allowed violation, `tol·(1 + ‖y − x‖∞)`.
    pub slack: f64,
}

impl OrderParams {
    pub const DEFAULT_TOL: f64 = 1e-9;

    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidArgument("order matrix must have at least one entry".into()));
        }
        if let Some(bad) = diag.iter().find(|a| !(**a < 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument(format!("order matrix entries must be negative and finite, got {bad}")));
        }
        Ok(Self { diag, tol: Self::DEFAULT_TOL })
    }

    /// `A = −a I` in dimension `dim`.
    pub fn uniform(dim: usize, rate: f64) -> Result<Self> {
        Self::new(vec![-rate; dim])
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be nonnegative, got {tol}")));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Decay rates `a_i = −A_ii > 0`.
    pub fn rates(&self) -> Vec<f64> {
        self.diag.iter().map(|a| -a).collect()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Tests `x ≤_A y` on the grid.
    ///
    /// Because `e^{A(t−s)}` factors over grid steps, the one-step conditions
    /// imply the inequality for every pair of grid times. Below `−L` both
    /// histories are constant, where the conditions reduce to the one at `−L`.
    pub fn compare(&self, x: &HistoryFunction, y: &HistoryFunction) -> Result<OrderCheck> {
        x.check_same_grid(y)?;
        if x.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "order has dimension {}, histories have {}",
                self.dim(),
                x.dim()
            )));
        }
        let m = x.dim();
        let n = x.segments();
        let mut margin = f64::INFINITY;
        let mut sup = 0.0f64;
        for (k, a) in self.diag.iter().enumerate() {
            let decay = (a * x.step()).exp();
            let diff = |i: usize| y.values()[i * m + k] - x.values()[i * m + k];
            let mut newer = diff(0);
            margin = margin.min(newer);
            sup = sup.max(newer.abs());
            for i in 1..=n {
                let older = diff(i);
                margin = margin.min(older).min(newer - decay * older);
                sup = sup.max(older.abs());
                newer = older;
            }
        }
        let slack = self.tol * (1.0 + sup);
        Ok(OrderCheck { holds: margin >= -slack, margin, slack })
    }

    pub fn leq(&self, x: &HistoryFunction, y: &HistoryFunction) -> Result<bool> {
        Ok(self.compare(x, y)?.holds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: impl Fn(f64) -> f64) -> HistoryFunction {
        HistoryFunction::from_fn(1, 0.01, 5.0, |s| [f(s)]).unwrap()
    }

    #[test]
    fn rejects_nonnegative_entries() {
        assert!(OrderParams::new(vec![-1.0, 0.0]).is_err());
        assert!(OrderParams::new(vec![]).is_err());
        assert!(OrderParams::new(vec![-1.0]).unwrap().with_tol(-1.0).is_err());
    }

    #[test]
    fn reflexive() {
        let a = OrderParams::new(vec![-1.0]).unwrap();
        let x = scalar(|s| (3.0 * s).sin());
        let c = a.compare(&x, &x).unwrap();
        assert!(c.holds);
        assert_eq!(c.margin, 0.0);
    }

    #[test]
    fn positive_constant_is_in_cone() {
        let a = OrderParams::new(vec![-1.0]).unwrap();
        assert!(a.leq(&scalar(|_| 0.0), &scalar(|_| 1.0)).unwrap());
    }

    #[test]
    fn decreasing_weighted_difference_is_rejected() {
        // e^{t}(−t) has derivative −e^{t}(1 + t) < 0 on (−1, 0].
        let a = OrderParams::new(vec![-1.0]).unwrap();
        assert!(!a.leq(&scalar(|_| 0.0), &scalar(|s| -s)).unwrap());
    }

    #[test]
    fn cone_generator_is_accepted() {
        // e^{−as} times a nondecreasing nonnegative function.
        let a = OrderParams::new(vec![-2.0]).unwrap();
        let y = scalar(|s| (-2.0 * s).exp() * (s + 3.0).max(0.0));
        assert!(a.leq(&scalar(|_| 0.0), &y).unwrap());
    }

    #[test]
    fn dimension_must_match_order() {
        let a = OrderParams::new(vec![-1.0, -1.0]).unwrap();
        let x = scalar(|_| 0.0);
        assert!(a.compare(&x, &x).is_err());
    }
}
