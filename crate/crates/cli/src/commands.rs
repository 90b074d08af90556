use fadeflow::fde::probes::{omega_limit_probe, SkewProductSystem};
use fadeflow::models::{audit_fde, audit_nfde, Status};
use fadeflow::neutral::INVERSE_TOL;
use fadeflow::{Error, HistoryFunction, Trajectory};
use rayon::prelude::*;
use serde_json::{json, Value};
use toml::Spanned;

use crate::config::{Config, Model};
use crate::datum::DatumSpec;
use crate::error::CliError;
use crate::output::{names, nums, Report};

/// A report, and the failure to exit with once it has been written.
pub type Outcome = (Report, Option<CliError>);

fn datum(
    cfg: &Config,
    spec: Option<&Spanned<DatumSpec>>,
    what: &str,
    model: &Model,
) -> Result<HistoryFunction, CliError> {
    let spec = spec.ok_or_else(|| cfg.error(format!("missing {what}"), None))?;
    let err = |msg: String, span| cfg.error(msg, Some(span));
    spec.get_ref().build(model.dim(), &model.grid(), cfg.dir(), spec.span(), &err)
}

fn integrate(model: &Model, cfg: &Config, x0: &HistoryFunction, horizon: f64) -> Result<Trajectory, CliError> {
    let theta0 = cfg.theta0(model.base())?;
    Ok(match model {
        Model::Fde(m) => m.integrate(&theta0, x0, horizon)?,
        Model::Nfde(m) => m.integrate(&theta0, x0, horizon)?,
    })
}

fn trajectory_columns(model: &Model) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(names("theta", model.base().dim()));
    cols.extend(names("z", model.dim()));
    if matches!(model, Model::Nfde(_)) {
        cols.extend(names("w", model.dim()));
    }
    cols
}

pub fn simulate(cfg: &Config) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let x0 = datum(cfg, cfg.raw.run.initial.as_ref(), "[run].initial", &model)?;
    let traj = integrate(&model, cfg, &x0, cfg.horizon())?;
    let mut report = Report::new("simulate", trajectory_columns(&model))
        .meta("step", traj.step())
        .meta("steps", traj.steps())
        .meta("seed", cfg.seed());
    let stride = cfg.stride();
    let last = traj.steps();
    for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
        let mut row = vec![json!(traj.time(k))];
        row.extend(nums(traj.base_point(k).theta()));
        row.extend(nums(traj.head(k)));
        if let Some(w) = traj.neutral_head(k) {
            row.extend(nums(w));
        }
        report.rows.push(row);
    }
    Ok((report, None))
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::ByConstruction => "by_construction",
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Heuristic => "heuristic",
    }
}

pub fn verify(cfg: &Config) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let audit_cfg = cfg.audit();
    let audit = match &model {
        Model::Fde(m) => audit_fde(m, &audit_cfg)?,
        Model::Nfde(m) => audit_nfde(m, &audit_cfg)?,
    };
    let mut report = Report::new("verify", ["hypothesis", "status", "margin", "detail"].map(String::from).to_vec())
        .meta("passed", audit.passed())
        .meta("audit", &audit)
        .meta("settings", &audit_cfg);
    for c in &audit.checks {
        report.rows.push(vec![json!(c.name), json!(status_name(c.status)), json!(c.margin), json!(c.detail)]);
    }
    let failed: Vec<&str> = audit.failures().map(|c| c.name.as_str()).collect();
    let failure = (!failed.is_empty()).then(|| CliError::AuditFail(failed.join(", ")));
    Ok((report, failure))
}

pub fn invert(cfg: &Config) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let Model::Nfde(nfde) = &model else {
        return Err(cfg.error("`invert` needs a neutral (compartmental) model", Some(cfg.raw.model.span())));
    };
    let op = nfde.operator();
    let inv = &cfg.raw.invert;
    let h = datum(cfg, inv.h.as_ref(), "[invert].h", &model)?;
    let theta = match &inv.theta {
        Some(t) => cfg.point(Some(t), model.base())?,
        None => cfg.theta0(model.base())?,
    };
    let tol = inv.tol.unwrap_or(INVERSE_TOL);
    // The change contracts by q per sweep; allow twice the expected count.
    let expected = if op.q() > 0.0 { (2.0 * tol.ln() / op.q().ln()).ceil() as usize } else { 1 };
    let max_iter = inv.max_iter.unwrap_or(expected.max(fadeflow::neutral::INVERSE_MAX_ITER));
    let residual_tol = inv.residual_tol.unwrap_or(1e-8);
    let res = match op.dhat_inverse(&theta, &h, tol, max_iter) {
        Ok(r) => r,
        Err(Error::NoConvergence { iterations, change }) => {
            return Err(CliError::Residual { residual: change, tol: residual_tol })
                .inspect_err(|_| log::error!("no convergence after {iterations} iterations"));
        }
        Err(e) => return Err(e.into()),
    };
    eprintln!("iterations: {}, residual: {:e}", res.iterations, res.residual);
    let mut cols = vec!["s".to_string()];
    cols.extend(names("x", model.dim()));
    let mut report = Report::new("invert", cols)
        .meta("iterations", res.iterations)
        .meta("residual", res.residual)
        .meta("change", res.change)
        .meta("q", op.q())
        .meta("k_bound", 1.0 / (1.0 - op.q()))
        .meta("tol", tol)
        .meta("residual_tol", residual_tol);
    for i in (0..=res.x.segments()).rev() {
        let mut row = vec![json!(res.x.time(i) + 0.0)];
        row.extend(nums(res.x.node(i)));
        report.rows.push(row);
    }
    let failure =
        (res.residual > residual_tol).then_some(CliError::Residual { residual: res.residual, tol: residual_tol });
    Ok((report, failure))
}

pub fn omega(cfg: &Config) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let x0 = datum(cfg, cfg.raw.run.initial.as_ref(), "[run].initial", &model)?;
    let y0 = match &cfg.raw.run.y0 {
        Some(s) => Some(datum(cfg, Some(s), "[run].y0", &model)?),
        None => None,
    };
    let theta0 = cfg.theta0(model.base())?;
    let probe = cfg.probe();
    let sys: &dyn SkewProductSystem = match &model {
        Model::Fde(m) => m,
        Model::Nfde(m) => m,
    };
    let r = omega_limit_probe(sys, &theta0, &x0, y0.as_ref(), &probe)?;
    let cols = ["transient", "pairs", "pair_max", "pair_max_neutral", "two_solution", "two_solution_neutral"];
    let mut report = Report::new("omega", cols.map(String::from).to_vec())
        .meta("pass", r.pass)
        .meta("report", &r)
        .meta("settings", &probe);
    for row in &r.rows {
        report.rows.push(vec![
            json!(row.transient),
            json!(row.pairs),
            json!(row.pair_max),
            json!(row.pair_max_neutral),
            json!(row.two_solution),
            json!(row.two_solution_neutral),
        ]);
    }
    Ok((report, None))
}

/// One simulation per sweep value; blow-ups are recorded, not fatal.
pub fn sweep(cfg: &Config) -> Result<Outcome, CliError> {
    let sweep = cfg.raw.sweep.as_ref().ok_or_else(|| cfg.error("missing [sweep] section", None))?;
    let model = cfg.model()?;
    let mut cols = vec![sweep.param.clone(), "status".into(), "t_end".into()];
    cols.extend(names("z", model.dim()));
    cols.push("sup_norm".into());
    let configs = sweep.values.iter().map(|v| cfg.with_value(&sweep.param, *v)).collect::<Result<Vec<_>, _>>()?;
    let rows = configs
        .par_iter()
        .zip(&sweep.values)
        .map(|(c, v)| {
            let model = c.model()?;
            if model.dim() != cols.len() - 4 {
                return Err(c.error("sweep must not change the model dimension", None));
            }
            let x0 = datum(c, c.raw.run.initial.as_ref(), "[run].initial", &model)?;
            let mut row = vec![json!(v)];
            match integrate(&model, c, &x0, c.horizon()) {
                Ok(t) => {
                    row.extend([json!("ok"), json!(t.horizon())]);
                    row.extend(nums(t.head(t.steps())));
                    row.push(json!(t.sup_norm()));
                }
                Err(CliError::BlowUp(Error::BlowUp { t, .. })) => {
                    row.extend([json!("blow_up"), json!(t)]);
                    row.extend(std::iter::repeat_n(Value::Null, model.dim() + 1));
                }
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut report = Report::new("sweep", cols).meta("param", &sweep.param).meta("horizon", cfg.horizon());
    report.rows = rows;
    Ok((report, None))
}
