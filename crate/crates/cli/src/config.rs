use std::fmt;
use std::path::PathBuf;

use effdim::concentration::{NonlinearitySpec, SearchConfig};
use effdim::erm::PrecondConfig;
use effdim::smoothing::SmoothExperimentConfig;
use effdim::CovarianceSpectrum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Effdim,
    Entropy,
    Cover,
    Concentration,
    Precondition,
    Smooth,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Effdim,
        Subcommand::Entropy,
        Subcommand::Cover,
        Subcommand::Concentration,
        Subcommand::Precondition,
        Subcommand::Smooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Effdim => "effdim",
            Subcommand::Entropy => "entropy",
            Subcommand::Cover => "cover",
            Subcommand::Concentration => "concentration",
            Subcommand::Precondition => "precondition",
            Subcommand::Smooth => "smooth",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("effdim-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub parameters: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffdimParams {
    pub spectrum: CovarianceSpectrum<f64>,
    pub r: Vec<u32>,
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyParams {
    /// Semi-axes of the ellipsoid; exclusive with `spectrum`.
    #[serde(default)]
    pub axes: Option<Vec<f64>>,
    #[serde(default)]
    pub spectrum: Option<CovarianceSpectrum<f64>>,
    pub eps: Vec<f64>,
    pub r: Vec<u32>,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_samples() -> usize {
    100_000
}
fn default_control() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverParams {
    pub axes: Vec<f64>,
    #[serde(default = "default_c")]
    pub eps: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Fraction of centers removed around the origin for the negative control; 0 disables it.
    #[serde(default = "default_control")]
    pub negative_control_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpectrum {
    pub id: String,
    pub spectrum: CovarianceSpectrum<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationParams {
    pub spectra: Vec<NamedSpectrum>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Identity nonlinearities of this order, unless `fs` is given.
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub fs: Option<NonlinearitySpec<f64>>,
    #[serde(default = "default_true")]
    pub centered: bool,
    #[serde(default)]
    pub search: Option<SearchConfig<f64>>,
    #[serde(default)]
    pub reference_size: usize,
}

impl ConcentrationParams {
    pub fn nonlinearities(&self) -> Result<NonlinearitySpec<f64>, String> {
        match (&self.fs, self.r) {
            (Some(fs), None) => Ok(fs.clone()),
            (Some(fs), Some(r)) if fs.order() == r => Ok(fs.clone()),
            (None, Some(r)) => Ok(NonlinearitySpec::identity(r)),
            (Some(_), Some(_)) => Err("r disagrees with the length of fs".into()),
            (None, None) => Err("one of r or fs is required".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Params {
    Effdim(EffdimParams),
    Entropy(EntropyParams),
    Cover(CoverParams),
    Concentration(ConcentrationParams),
    Precondition(PrecondConfig<f64>),
    Smooth(SmoothExperimentConfig<f64>),
}

/// One schema problem, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

fn diag(field: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { field: field.into(), message: message.into() }
}

const TOP_LEVEL: [&str; 5] = ["subcommand", "master_seed", "output_dir", "parallelism", "parameters"];

fn typed<P: for<'de> Deserialize<'de>>(v: &Value) -> Result<P, Diagnostic> {
    P::deserialize(v).map_err(|e| diag("parameters", e.to_string()))
}

fn semantic(params: &Params) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &str, msg: &str| {
        if !ok {
            out.push(diag(field, msg));
        }
    };
    match params {
        Params::Effdim(p) => {
            check(!p.r.is_empty(), "parameters.r", "at least one r is required");
            check(p.r.iter().all(|&r| r >= 1), "parameters.r", "every r must be at least 1");
        }
        Params::Entropy(p) => {
            check(p.axes.is_some() != p.spectrum.is_some(), "parameters", "exactly one of axes or spectrum is required");
            check(!p.eps.is_empty() && p.eps.iter().all(|&e| e > 0.0 && e <= 1.0), "parameters.eps", "every eps must lie in (0, 1]");
            check(!p.r.is_empty() && p.r.iter().all(|&r| r >= 1), "parameters.r", "every r must be at least 1");
            check(p.c > 0.0, "parameters.c", "c must be positive");
        }
        Params::Cover(p) => {
            check(p.eps > 0.0, "parameters.eps", "eps must be positive");
            check(p.samples >= 1, "parameters.samples", "samples must be at least 1");
            check((0.0..1.0).contains(&p.negative_control_fraction), "parameters.negative_control_fraction", "must lie in [0, 1)");
        }
        Params::Concentration(p) => {
            check(!p.spectra.is_empty(), "parameters.spectra", "at least one spectrum is required");
            check(!p.n_grid.is_empty() && p.n_grid.iter().all(|&n| n >= 1), "parameters.n_grid", "at least one positive sample size is required");
            check(p.trials >= 30, "parameters.trials", "at least 30 trials per grid point are required");
            let bad = p.nonlinearities().err();
            check(bad.is_none(), "parameters.r", bad.as_deref().unwrap_or_default());
        }
        Params::Precondition(p) => {
            check(p.lambda > 0.0, "parameters.lambda", "lambda must be positive");
            check(p.loss.is_smooth(), "parameters.loss", "preconditioning needs a smooth loss (logistic or ridge)");
            check(p.n >= 1 && p.n_aux >= 1, "parameters.n", "sample sizes must be positive");
            check(p.iters >= 1, "parameters.iters", "iters must be at least 1");
        }
        Params::Smooth(p) => {
            check(p.loss.lipschitz(1.0).is_some(), "parameters.loss", "loss must be Lipschitz");
            check(p.m >= 1, "parameters.m", "m must be at least 1");
            check(p.iters >= 1, "parameters.iters", "iters must be at least 1");
            check(p.seeds >= 1, "parameters.seeds", "seeds must be at least 1");
            check(p.delta > 0.0 && p.delta < 1.0, "parameters.delta", "delta must lie in (0, 1)");
        }
    }
    out
}

/// Schema check of a configuration document; an empty list means it is valid.
pub fn validate_str(text: &str) -> Vec<Diagnostic> {
    match parse_str(text) {
        Ok(_) => Vec::new(),
        Err(d) => d,
    }
}

/// Parses and validates a configuration document.
pub fn parse_str(text: &str) -> Result<(ExperimentConfig, Params), Vec<Diagnostic>> {
    let root: Value = serde_json::from_str(text).map_err(|e| vec![diag("", format!("malformed JSON: {e}"))])?;
    let Some(obj) = root.as_object() else {
        return Err(vec![diag("", "configuration must be a JSON object")]);
    };
    let mut diags: Vec<Diagnostic> = obj
        .keys()
        .filter(|k| !TOP_LEVEL.contains(&k.as_str()))
        .map(|k| diag(k, "unknown field"))
        .collect();
    match obj.get("subcommand") {
        None => diags.push(diag("subcommand", "missing required field")),
        Some(Value::String(s)) if Subcommand::parse(s).is_some() => {}
        Some(other) => {
            let names: Vec<&str> = Subcommand::ALL.iter().map(|c| c.name()).collect();
            diags.push(diag("subcommand", format!("unknown subcommand {other}; expected one of {}", names.join(", "))));
        }
    }
    match obj.get("master_seed") {
        None => diags.push(diag("master_seed", "missing required field (wall-clock seeding is not supported)")),
        Some(v) if v.as_u64().is_none() => diags.push(diag("master_seed", "must be an unsigned 64-bit integer")),
        _ => {}
    }
    if let Some(v) = obj.get("parallelism") {
        if !v.is_null() && v.as_u64().is_none_or(|j| j == 0) {
            diags.push(diag("parallelism", "must be a positive integer"));
        }
    }
    if let Some(v) = obj.get("output_dir") {
        if !v.is_string() {
            diags.push(diag("output_dir", "must be a path string"));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| vec![diag("", e.to_string())])?;
    let params = parse_params(cfg.subcommand, &cfg.parameters).map_err(|d| vec![d])?;
    let diags = semantic(&params);
    if diags.is_empty() {
        Ok((cfg, params))
    } else {
        Err(diags)
    }
}

fn parse_params(sub: Subcommand, v: &Value) -> Result<Params, Diagnostic> {
    if !v.is_object() {
        return Err(diag("parameters", "must be a JSON object"));
    }
    Ok(match sub {
        Subcommand::Effdim => Params::Effdim(typed(v)?),
        Subcommand::Entropy => Params::Entropy(typed(v)?),
        Subcommand::Cover => Params::Cover(typed(v)?),
        Subcommand::Concentration => Params::Concentration(typed(v)?),
        Subcommand::Precondition => Params::Precondition(typed(v)?),
        Subcommand::Smooth => Params::Smooth(typed(v)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_document() {
        let text = r#"{"subcommand":"effdim","master_seed":1,"parameters":{"spectrum":[2,1],"r":[1,2]}}"#;
        assert!(validate_str(text).is_empty());
        let (cfg, params) = parse_str(text).unwrap();
        assert_eq!(cfg.subcommand, Subcommand::Effdim);
        assert_eq!(cfg.output_dir, PathBuf::from("effdim-out"));
        assert!(matches!(params, Params::Effdim(_)));
    }

    #[test]
    fn unknown_subcommand_is_one_diagnostic() {
        let d = validate_str(r#"{"subcommand":"fly","master_seed":1,"parameters":{}}"#);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "subcommand");
    }

    #[test]
    fn ascending_spectrum_cites_order() {
        let d = validate_str(r#"{"subcommand":"effdim","master_seed":1,"parameters":{"spectrum":[1,2],"r":[1]}}"#);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("descending order"), "{}", d[0]);
    }

    #[test]
    fn missing_seed_and_unknown_keys() {
        let d = validate_str(r#"{"subcommand":"effdim","seed":1}"#);
        let fields: Vec<&str> = d.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"seed") && fields.contains(&"master_seed"));
        assert!(validate_str("{not json")[0].message.starts_with("malformed JSON"));
        let d = validate_str(r#"{"subcommand":"effdim","master_seed":1,"parameters":{"spectrum":[1],"r":[1],"x":2}}"#);
        assert!(d[0].message.contains("unknown field"), "{}", d[0]);
    }

    #[test]
    fn semantic_checks() {
        let d = validate_str(r#"{"subcommand":"concentration","master_seed":1,"parameters":{"spectra":[{"id":"a","spectrum":[1]}],"n_grid":[10,20],"trials":5,"r":2}}"#);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "parameters.trials");
    }
}
