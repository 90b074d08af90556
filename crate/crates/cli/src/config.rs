//! The TOML run configuration and the models it describes. See `docs/config.md`
//! for the grammar.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use fadeflow::models::{
    build_compartmental_nfde, build_scalar_fde, AuditConfig, CompartmentalSpec, NeutralLink, Transport,
};
use fadeflow::{BasePoint, FdeModel, Grid, NfdeModel, OrderParams, ProbeConfig, TorusBase, TrigTerm};
use serde::Deserialize;
use toml::Spanned;

use crate::datum::DatumSpec;
use crate::error::CliError;

const DEFAULT_STEP: f64 = 0.05;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Spanned<ModelSection>,
    #[serde(default)]
    pub base: BaseSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub invert: InvertSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Scalar,
    Compartmental,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    // scalar
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub forcing: Option<Spanned<CoefSpec>>,
    // compartmental
    pub compartments: Option<usize>,
    #[serde(default)]
    pub transports: Vec<TransportSpec>,
    #[serde(default)]
    pub neutral: Vec<NeutralSpec>,
    #[serde(default)]
    pub inflow: Vec<Spanned<CoefSpec>>,
    /// Rates `a_i` of the exponential order, `A = −diag(a)`.
    pub order: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    pub from: usize,
    pub to: usize,
    pub rate: Spanned<CoefSpec>,
    #[serde(default)]
    pub delay: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutralSpec {
    pub i: usize,
    pub j: usize,
    pub coef: Spanned<CoefSpec>,
    pub delay: f64,
}

/// A quasi-periodic coefficient: a constant, an inline list of terms, or the
/// id of a list declared under `[base.coefficients]`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum CoefSpec {
    Const(f64),
    Id(String),
    Terms(Vec<TrigTerm>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub freq: Option<Spanned<Vec<f64>>>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, Spanned<Vec<TrigTerm>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub step: Option<f64>,
    pub depth: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub theta0: Option<Spanned<Vec<f64>>>,
    pub horizon: Option<f64>,
    pub initial: Option<Spanned<DatumSpec>>,
    /// Second initial datum for the omega probe.
    pub y0: Option<Spanned<DatumSpec>>,
    pub seed: Option<u64>,
    /// Write every `stride`-th step.
    pub stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub transients: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub delta_base: Option<f64>,
    pub threshold: Option<f64>,
    pub anchor_stride: Option<f64>,
    pub lag_min: Option<f64>,
    pub n_samples: Option<usize>,
    pub audit_horizon: Option<f64>,
    pub stability_radius: Option<f64>,
    pub stability_eps: Option<Vec<f64>>,
    pub stability_pairs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertSection {
    pub h: Option<Spanned<DatumSpec>>,
    pub theta: Option<Spanned<Vec<f64>>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted path of a numeric key, e.g. `model.beta` or `grid.step`.
    pub param: String,
    pub values: Vec<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub depth: Option<f64>,
}

pub enum Model {
    Fde(FdeModel),
    Nfde(NfdeModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Fde(m) => m.dim(),
            Model::Nfde(m) => m.dim(),
        }
    }

    pub fn base(&self) -> &TorusBase {
        match self {
            Model::Fde(m) => m.base(),
            Model::Nfde(m) => m.base(),
        }
    }

    pub fn grid(&self) -> Grid {
        match self {
            Model::Fde(m) => m.grid(),
            Model::Nfde(m) => m.grid(),
        }
    }
}

/// A parsed and resolved configuration.
pub struct Config {
    pub source: String,
    pub path: PathBuf,
    pub raw: RawConfig,
    pub overrides: Overrides,
}

/// Line and column (1-based) of byte offset `at` in `src`.
pub fn locate(src: &str, at: usize) -> (usize, usize) {
    let before = &src[..at.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl Config {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { msg: format!("cannot read {}: {e}", path.display()), at: None })?;
        Self::parse(source, path.to_path_buf(), overrides)
    }

    pub fn parse(source: String, path: PathBuf, overrides: Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(&source).map_err(|e| CliError::Config {
            msg: e.message().to_string(),
            at: e.span().map(|s| locate(&source, s.start)),
        })?;
        let cfg = Self { source, path, raw, overrides };
        cfg.check_coefficients()?;
        Ok(cfg)
    }

    /// The same file with the numeric key at dotted `param` replaced by `value`.
    pub fn with_value(&self, param: &str, value: f64) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(&self.source).expect("parsed before");
        let mut keys = param.split('.').peekable();
        let mut table = &mut doc;
        while let Some(key) = keys.next() {
            if keys.peek().is_none() {
                let v = match table.get(key) {
                    Some(toml::Value::Integer(_)) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
                    None | Some(toml::Value::Float(_)) | Some(toml::Value::Integer(_)) => toml::Value::Float(value),
                    Some(_) => return Err(self.error(format!("sweep parameter `{param}` is not numeric"), None)),
                };
                table.insert(key.to_string(), v);
                break;
            }
            table = match table.entry(key).or_insert_with(|| toml::Value::Table(Default::default())) {
                toml::Value::Table(t) => t,
                _ => return Err(self.error(format!("sweep parameter `{param}` does not name a table key"), None)),
            };
        }
        let src = toml::to_string(&doc).map_err(|e| self.error(e.to_string(), None))?;
        Self::parse(src, self.path.clone(), self.overrides.clone())
    }

    pub fn error(&self, msg: impl Into<String>, span: Option<Range<usize>>) -> CliError {
        CliError::Config { msg: msg.into(), at: span.map(|s| locate(&self.source, s.start)) }
    }

    fn model_error(&self, msg: impl Into<String>) -> CliError {
        self.error(msg, Some(self.raw.model.span()))
    }

    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn base(&self) -> Result<TorusBase, CliError> {
        match &self.raw.base.freq {
            None => Ok(TorusBase::golden()),
            Some(f) => TorusBase::new(f.get_ref().clone()).map_err(|e| self.error(e.to_string(), Some(f.span()))),
        }
    }

    fn base_dim(&self) -> usize {
        self.raw.base.freq.as_ref().map_or(2, |f| f.get_ref().len())
    }

    fn check_terms(&self, terms: &[TrigTerm], span: Range<usize>) -> Result<(), CliError> {
        let d = self.base_dim();
        match terms.iter().find(|t| t.k.len() != d) {
            Some(t) => {
                Err(self.error(format!("term has {} wave numbers, the base has dimension {d}", t.k.len()), Some(span)))
            }
            None => Ok(()),
        }
    }

    fn check_coefficients(&self) -> Result<(), CliError> {
        for terms in self.raw.base.coefficients.values() {
            self.check_terms(terms.get_ref(), terms.span())?;
        }
        let m = self.raw.model.get_ref();
        let specs = m
            .forcing
            .iter()
            .chain(m.inflow.iter())
            .chain(m.transports.iter().map(|t| &t.rate))
            .chain(m.neutral.iter().map(|n| &n.coef));
        for s in specs {
            self.terms(s)?;
        }
        Ok(())
    }

    /// Resolves a coefficient to its terms.
    pub fn terms(&self, spec: &Spanned<CoefSpec>) -> Result<Vec<TrigTerm>, CliError> {
        let terms = match spec.get_ref() {
            CoefSpec::Const(c) => vec![TrigTerm::constant(self.base_dim(), *c)],
            CoefSpec::Id(id) => match self.raw.base.coefficients.get(id) {
                Some(t) => t.get_ref().clone(),
                None => return Err(self.error(format!("unknown coefficient id `{id}`"), Some(spec.span()))),
            },
            CoefSpec::Terms(t) => t.clone(),
        };
        self.check_terms(&terms, spec.span())?;
        Ok(terms)
    }

    pub fn step(&self) -> f64 {
        self.overrides.dt.or(self.raw.grid.step).unwrap_or(DEFAULT_STEP)
    }

    pub fn seed(&self) -> u64 {
        self.overrides.seed.or(self.raw.run.seed).unwrap_or(0)
    }

    pub fn horizon(&self) -> f64 {
        self.raw.run.horizon.unwrap_or(10.0)
    }

    pub fn stride(&self) -> usize {
        self.raw.run.stride.unwrap_or(1).max(1)
    }

    fn grid(&self, default_depth: impl FnOnce(f64) -> f64) -> Result<Grid, CliError> {
        let step = self.step();
        let depth = self.overrides.depth.or(self.raw.grid.depth).unwrap_or_else(|| default_depth(step));
        Grid::new(step, depth).map_err(|e| self.error(format!("[grid]: {e}"), None))
    }

    fn order(&self, dim: usize, fallback: f64) -> Result<OrderParams, CliError> {
        let m = self.raw.model.get_ref();
        let r = match &m.order {
            None => OrderParams::uniform(dim, fallback),
            Some(rates) if rates.len() != dim => {
                return Err(self.model_error(format!("order has {} rates for dimension {dim}", rates.len())))
            }
            Some(rates) => OrderParams::new(rates.iter().map(|a| -a).collect()),
        };
        r.map_err(|e| self.model_error(e.to_string()))
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let m = self.raw.model.get_ref();
        let base = self.base()?;
        match m.family {
            Family::Scalar => {
                let need =
                    |v: Option<f64>, k: &str| v.ok_or_else(|| self.model_error(format!("scalar model needs `{k}`")));
                let alpha = need(m.alpha, "alpha")?;
                let beta = m.beta.unwrap_or(0.0);
                let gamma = m.gamma.unwrap_or(1.0);
                if m.compartments.is_some() || !m.transports.is_empty() || !m.neutral.is_empty() || !m.inflow.is_empty()
                {
                    return Err(self.model_error("compartmental keys in a scalar model"));
                }
                let forcing = match &m.forcing {
                    Some(f) => self.terms(f)?,
                    None => Vec::new(),
                };
                // Deep enough for the memory kernel mass beyond the window to fall below 1e-8.
                let grid = self.grid(|step| ((20.0 / gamma.max(1e-3)) / step).ceil() * step)?;
                let built = build_scalar_fde(alpha, beta, gamma, &forcing, base, grid)
                    .map_err(|e| self.model_error(e.to_string()))?;
                let order = self.order(1, alpha)?;
                let model = built.model.with_order(order).map_err(|e| self.model_error(e.to_string()))?;
                Ok(Model::Fde(model))
            }
            Family::Compartmental => {
                if m.alpha.is_some() || m.beta.is_some() || m.gamma.is_some() || m.forcing.is_some() {
                    return Err(self.model_error("scalar keys in a compartmental model"));
                }
                let n = m.compartments.ok_or_else(|| self.model_error("compartmental model needs `compartments`"))?;
                let mut spec = CompartmentalSpec { compartments: n, ..Default::default() };
                for t in &m.transports {
                    spec.transports.push(Transport {
                        from: t.from,
                        to: t.to,
                        rate: self.terms(&t.rate)?,
                        delay: t.delay,
                    });
                }
                for l in &m.neutral {
                    spec.neutral.push(NeutralLink { i: l.i, j: l.j, coef: self.terms(&l.coef)?, delay: l.delay });
                }
                for i in &m.inflow {
                    spec.inflow.push(self.terms(i)?);
                }
                let grid = match (self.overrides.depth.or(self.raw.grid.depth), spec.default_grid(self.step())) {
                    (None, Ok(g)) => g,
                    _ => self.grid(|s| s)?,
                };
                let order = self.order(n, 1.0)?;
                build_compartmental_nfde(&spec, base, order, grid)
                    .map(Model::Nfde)
                    .map_err(|e| self.model_error(e.to_string()))
            }
        }
    }

    pub fn point(&self, p: Option<&Spanned<Vec<f64>>>, base: &TorusBase) -> Result<BasePoint, CliError> {
        match p {
            None => Ok(BasePoint::origin(base.dim())),
            Some(p) if p.get_ref().len() != base.dim() => Err(self.error(
                format!("base point has {} coordinates, the base has dimension {}", p.get_ref().len(), base.dim()),
                Some(p.span()),
            )),
            Some(p) => BasePoint::new(p.get_ref().clone()).map_err(|e| self.error(e.to_string(), Some(p.span()))),
        }
    }

    pub fn theta0(&self, base: &TorusBase) -> Result<BasePoint, CliError> {
        self.point(self.raw.run.theta0.as_ref(), base)
    }

    pub fn probe(&self) -> ProbeConfig {
        let p = &self.raw.probe;
        let d = ProbeConfig::default();
        ProbeConfig {
            transients: p.transients.clone().unwrap_or(d.transients),
            t_max: p.t_max.unwrap_or(d.t_max),
            delta_base: p.delta_base.unwrap_or(d.delta_base),
            threshold: p.threshold.unwrap_or(d.threshold),
            anchor_stride: p.anchor_stride.unwrap_or(d.anchor_stride),
            lag_min: p.lag_min.unwrap_or(d.lag_min),
            n_terms: d.n_terms,
        }
    }

    pub fn audit(&self) -> AuditConfig {
        let p = &self.raw.probe;
        let d = AuditConfig::default();
        AuditConfig {
            n_samples: p.n_samples.unwrap_or(d.n_samples),
            seed: self.seed(),
            stability_radius: p.stability_radius.unwrap_or(d.stability_radius),
            stability_eps: p.stability_eps.clone().unwrap_or(d.stability_eps),
            stability_pairs: p.stability_pairs.unwrap_or(d.stability_pairs),
            horizon: p.audit_horizon.unwrap_or(d.horizon),
        }
    }
}
