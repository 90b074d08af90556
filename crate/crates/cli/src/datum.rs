//! Histories given in the config: constants, expressions in `s`, or CSV files.

use std::ops::Range;
use std::path::Path;

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError,
    Function, HashMapContext, Node, Value,
};
use fadeflow::{Grid, HistoryFunction};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    /// Broadcasts a single entry to `dim` components.
    fn expand(&self, dim: usize) -> Option<Vec<T>> {
        match self {
            OneOrMany::One(v) => Some(vec![v.clone(); dim]),
            OneOrMany::Many(v) if v.len() == dim => Some(v.clone()),
            OneOrMany::Many(_) => None,
        }
    }
}

/// Exactly one of the three fields is set.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    pub constant: Option<OneOrMany<f64>>,
    /// One expression per component in the variable `s ≤ 0`.
    pub expr: Option<OneOrMany<String>>,
    /// CSV with a header row and columns `s, x_1, .., x_m`.
    pub file: Option<String>,
}

type Ctx = HashMapContext<DefaultNumericTypes>;
type Unary = fn(f64) -> f64;

fn unary(f: Unary) -> Function<DefaultNumericTypes> {
    Function::new(move |v: &Value<DefaultNumericTypes>| Ok(Value::Float(f(v.as_number()?))))
}

fn context() -> Ctx {
    let mut ctx = Ctx::new();
    let fns: [(&str, Unary); 8] = [
        ("sin", f64::sin),
        ("cos", f64::cos),
        ("tan", f64::tan),
        ("exp", f64::exp),
        ("ln", f64::ln),
        ("sqrt", f64::sqrt),
        ("abs", f64::abs),
        ("tanh", f64::tanh),
    ];
    for (name, f) in fns {
        ctx.set_function(name.into(), unary(f)).expect("mutable context");
    }
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).expect("mutable context");
    ctx
}

fn eval(node: &Node<DefaultNumericTypes>, ctx: &mut Ctx, s: f64) -> Result<f64, EvalexprError<DefaultNumericTypes>> {
    ctx.set_value("s".into(), Value::Float(s))?;
    node.eval_number_with_context(ctx)
}

/// Piecewise linear interpolation of sorted samples, constant outside their range.
fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let n = ts.len();
    if t <= ts[0] {
        return ys[0];
    }
    if t >= ts[n - 1] {
        return ys[n - 1];
    }
    let i = ts.partition_point(|&v| v <= t);
    let (a, b) = (ts[i - 1], ts[i]);
    ys[i - 1] + (ys[i] - ys[i - 1]) * (t - a) / (b - a)
}

impl DatumSpec {
    pub fn build(
        &self,
        dim: usize,
        grid: &Grid,
        dir: &Path,
        span: Range<usize>,
        err: &dyn Fn(String, Range<usize>) -> CliError,
    ) -> Result<HistoryFunction, CliError> {
        let fail = |msg: String| err(msg, span.clone());
        let set = self.constant.is_some() as usize + self.expr.is_some() as usize + self.file.is_some() as usize;
        if set != 1 {
            return Err(fail("a history needs exactly one of `constant`, `expr`, `file`".into()));
        }
        if let Some(c) = &self.constant {
            let v = c.expand(dim).ok_or_else(|| fail(format!("expected {dim} values")))?;
            return grid.constant(&v).map_err(|e| fail(e.to_string()));
        }
        if let Some(e) = &self.expr {
            let exprs = e.expand(dim).ok_or_else(|| fail(format!("expected {dim} expressions")))?;
            let nodes = exprs
                .iter()
                .map(|x| build_operator_tree::<DefaultNumericTypes>(x).map_err(|e| fail(format!("in `{x}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let mut ctx = context();
            let mut bad = None;
            let h = grid.sample(dim, |s| {
                nodes
                    .iter()
                    .zip(&exprs)
                    .map(|(n, x)| {
                        eval(n, &mut ctx, s).unwrap_or_else(|e| {
                            bad.get_or_insert_with(|| format!("in `{x}` at s = {s}: {e}"));
                            0.0
                        })
                    })
                    .collect::<Vec<_>>()
            });
            if let Some(msg) = bad {
                return Err(fail(msg));
            }
            return h.map_err(|e| fail(e.to_string()));
        }
        let file = dir.join(self.file.as_deref().expect("one field is set"));
        let mut reader = csv::Reader::from_path(&file).map_err(|e| fail(format!("{}: {e}", file.display())))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| fail(format!("{}: {e}", file.display())))?;
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fail(format!("{} row {}: {e}", file.display(), line + 2)))?;
            if row.len() != dim + 1 {
                return Err(fail(format!("{} row {}: expected {} columns", file.display(), line + 2, dim + 1)));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(fail(format!("{} has no samples", file.display())));
        }
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let ts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let cols: Vec<Vec<f64>> = (1..=dim).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        grid.sample(dim, |s| cols.iter().map(|ys| interpolate(&ts, ys, s)).collect::<Vec<_>>())
            .map_err(|e| fail(e.to_string()))
    }
}
