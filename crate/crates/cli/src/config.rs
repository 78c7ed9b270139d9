//! Run configuration: a TOML file plus `--set key=value` overrides, resolved
//! into typed sections with defaults filled in.

use std::path::{Path, PathBuf};

use kgd_core::synthetic::SyntheticSpec;
use kgd_core::train::TrainConfig;
use kgd_core::{CertConfig, Split};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "KGD_OUT_DIR";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ValidationError> {
    Err(ValidationError(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Checkpoint to load for eval, certify and multihop.
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub output: OutputConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub certify: CertifySection,
    pub multihop: MultihopSection,
    pub grid: GridSection,
    /// Whether `train.family` was given explicitly (checked against
    /// loaded checkpoints).
    #[serde(skip)]
    pub family_explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub separator: char,
    /// Generate a synthetic graph instead of reading triple files.
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            valid: None,
            test: None,
            separator: '\t',
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; defaults to `$KGD_OUT_DIR/<command>`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub split: Split,
    /// Perturbation scales; 0 means the clean condition.
    pub alphas: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            alphas: vec![0.0, 2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub split: Split,
    pub n0: u64,
    pub confidence: f64,
    /// Noise level; defaults to the model's sigma-quantile.
    pub sigma: Option<f64>,
    /// Radii of the CA curve as multiples of σ.
    pub radii_over_sigma: Vec<f64>,
    /// Certify at most this many queries (in split order).
    pub max_queries: Option<usize>,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            n0: CertConfig::DEFAULT_N0,
            confidence: CertConfig::DEFAULT_CONFIDENCE,
            sigma: None,
            radii_over_sigma: (0..=20).map(|i| i as f64 / 10.0).collect(),
            max_queries: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultihopSection {
    pub split: Split,
    pub hops: Vec<usize>,
    pub beam: usize,
    /// Path queries sampled per hop count.
    pub max_queries: usize,
}

impl Default for MultihopSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            hops: vec![1, 2, 3],
            beam: 32,
            max_queries: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.2, 0.5, 1.0],
            lambdas: vec![0.1, 0.2, 0.5, 1.0],
        }
    }
}

/// Parse the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_override_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

/// Apply `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(root: &mut Table, assignment: &str) -> Result<(), ValidationError> {
    let Some((key, raw)) = assignment.split_once('=') else {
        return invalid(format!("override `{assignment}` is not of the form key=value"));
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return invalid(format!("override key `{key}` is malformed"));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return invalid(format!("override `{key}`: `{part}` is not a section")),
        };
    }
    table.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

/// Load, override and resolve a configuration.
pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ValidationError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ValidationError(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| ValidationError(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let train_key = |k: &str| {
        table
            .get("train")
            .and_then(Value::as_table)
            .is_some_and(|t| t.contains_key(k))
    };
    let explicit_train_seed = train_key("seed");
    let family_explicit = train_key("family");
    let mut cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ValidationError(format!("config: {}", e.message())))?;
    if explicit_train_seed && cfg.train.seed != cfg.seed {
        return invalid("train.seed is taken from the top-level `seed`; set that instead");
    }
    cfg.train.seed = cfg.seed;
    cfg.family_explicit = family_explicit;
    if let Some(base) = path.and_then(Path::parent) {
        cfg.rebase_paths(base);
    }
    Ok(cfg)
}

impl RunConfig {
    /// Interpret relative paths in the file against the file's directory.
    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.data.train);
        fix(&mut self.data.valid);
        fix(&mut self.data.test);
        fix(&mut self.checkpoint);
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        match &self.output.dir {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
                .join(command),
        }
    }

    pub fn validate_data(&self) -> Result<(), ValidationError> {
        let d = &self.data;
        match (&d.train, &d.synthetic) {
            (Some(_), Some(_)) => return invalid("data: set either data.train or data.synthetic, not both"),
            (None, None) => return invalid("data: one of data.train or data.synthetic is required"),
            _ => {}
        }
        for (name, p) in [("data.train", &d.train), ("data.valid", &d.valid), ("data.test", &d.test)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return invalid(format!("{name}: file {} does not exist", p.display()));
                }
            }
        }
        if d.synthetic.is_none() && d.train.is_none() && (d.valid.is_some() || d.test.is_some()) {
            return invalid("data: valid/test files require data.train");
        }
        Ok(())
    }

    pub fn validate_train(&self) -> Result<(), ValidationError> {
        self.train
            .validate()
            .map_err(|e| ValidationError(e.to_string()))
    }

    pub fn validate_eval(&self) -> Result<(), ValidationError> {
        if let Some(a) = self.eval.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return invalid(format!("eval.alphas: {a} is not a finite value >= 0"));
        }
        Ok(())
    }

    pub fn validate_certify(&self) -> Result<(), ValidationError> {
        let c = &self.certify;
        if c.n0 == 0 {
            return invalid("certify.n0 must be at least 1");
        }
        if !(c.confidence > 0.0 && c.confidence < 1.0) {
            return invalid(format!("certify.confidence must be in (0, 1), got {}", c.confidence));
        }
        if let Some(s) = c.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid(format!("certify.sigma must be >= 0, got {s}"));
            }
        }
        if c.radii_over_sigma.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return invalid("certify.radii_over_sigma must be finite values >= 0");
        }
        if c.max_queries == Some(0) {
            return invalid("certify.max_queries must be at least 1");
        }
        Ok(())
    }

    pub fn validate_multihop(&self) -> Result<(), ValidationError> {
        let m = &self.multihop;
        if m.hops.is_empty() || m.hops.iter().any(|h| !(1..=3).contains(h)) {
            return invalid("multihop.hops must be a non-empty list drawn from 1, 2, 3");
        }
        if m.beam == 0 {
            return invalid("multihop.beam must be at least 1");
        }
        if m.max_queries == 0 {
            return invalid("multihop.max_queries must be at least 1");
        }
        Ok(())
    }

    pub fn validate_grid(&self) -> Result<(), ValidationError> {
        let g = &self.grid;
        if g.alphas.is_empty() || g.lambdas.is_empty() {
            return invalid("grid.alphas and grid.lambdas must be non-empty");
        }
        if g.alphas.iter().chain(&g.lambdas).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return invalid("grid values must be finite and >= 0");
        }
        Ok(())
    }

    pub fn require_checkpoint(&self) -> Result<&Path, ValidationError> {
        match &self.checkpoint {
            Some(p) if p.is_file() => Ok(p),
            Some(p) => invalid(format!("checkpoint: file {} does not exist", p.display())),
            None => invalid("checkpoint: pass --checkpoint or set `checkpoint` in the config"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
