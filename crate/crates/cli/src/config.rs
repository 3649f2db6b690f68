//! Run configuration read from TOML.
//!
//! Parsing is strict: unknown keys and unknown variants are errors, reported
//! with their line and the closest valid name.

use crate::error::{CliError, CliResult};
use ddonet::ddm::{Scheme, Termination, Transmission};
use ddonet::neuralop::{Fusion, Loss};
use ddonet::pipeline::ShapeKind;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    pub network: Option<NetworkBlock>,
    pub data: Option<DataBlock>,
    pub bench: Option<BenchBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    /// Box corners; required unless `shapes` is given.
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    /// Grid spacing of every subdomain and of the reference solve.
    pub spacing: f64,
    #[serde(default)]
    pub axis: usize,
    /// Two overlapping subdomains `[lo, overlap.1]` and `[overlap.0, hi]`.
    pub overlap: Option<[f64; 2]>,
    /// Non-overlapping chain split at these coordinates.
    pub cuts: Option<Vec<f64>>,
    pub diffusion: Option<Vec<f64>>,
    #[serde(default)]
    pub source: f64,
    /// Faces without an entry are insulated.
    #[serde(default)]
    pub boundary: Vec<FaceBlock>,
    pub shapes: Option<ShapesBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceKindName {
    Dirichlet,
    Neumann,
    Robin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceBlock {
    /// `x-lo`, `x-hi`, `y-lo`, ...
    pub face: String,
    pub kind: FaceKindName,
    #[serde(default)]
    pub value: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapesBlock {
    pub kind: ShapeKind,
    #[serde(default = "default_shape_count")]
    pub count: usize,
    /// Drawn parameters are rounded to multiples of this.
    #[serde(default = "default_lattice")]
    pub lattice: f64,
    /// Explicit `[h, w1, w2, l1, l2, l3]` rows instead of random draws.
    pub params: Option<Vec<[f64; 6]>>,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Reference grid spacing; half of `geometry.spacing` when unset.
    pub reference_spacing: Option<f64>,
    /// Nodes per axis of the unit cube for neural subdomains.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_shape_count() -> usize {
    20
}
fn default_lattice() -> f64 {
    0.5
}
fn default_nodes() -> usize {
    5
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    #[default]
    Classical,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransmissionSpec {
    Named(TransmissionName),
    Coefficients { a: [f64; 2], b: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionName {
    DirichletDirichlet,
    DirichletRobin,
}

impl TransmissionSpec {
    pub fn resolve(&self) -> Transmission {
        match *self {
            TransmissionSpec::Named(TransmissionName::DirichletDirichlet) => {
                Transmission::DIRICHLET_DIRICHLET
            }
            TransmissionSpec::Named(TransmissionName::DirichletRobin) => {
                Transmission::DIRICHLET_ROBIN
            }
            TransmissionSpec::Coefficients { a, b } => Transmission {
                a: (a[0], a[1]),
                b: (b[0], b[1]),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub binding: Binding,
    /// Scheme default when unset (Schwarz 1, framework 1 0, framework 2 0.5).
    pub theta: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub termination: Option<Termination>,
    /// Constant initial interface data.
    pub initial: Option<f64>,
    pub transmission: Option<TransmissionSpec>,
    pub robin_weight: Option<f64>,
    pub order: Option<Vec<usize>>,
    /// Compare against a monolithic solve.
    #[serde(default = "yes")]
    pub oracle: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Framework2
}
fn yes() -> bool {
    true
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            scheme: default_scheme(),
            binding: Binding::Classical,
            theta: None,
            tolerance: None,
            max_iterations: None,
            termination: None,
            initial: None,
            transmission: None,
            robin_weight: None,
            order: None,
            oracle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    /// Named desk preset; input widths are taken from the data.
    pub preset: Option<String>,
    /// Hidden widths shared by every branch and the trunk.
    pub hidden: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub fusion: Option<Fusion>,
    #[serde(default)]
    pub train: TrainBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr_init: f64,
    #[serde(default = "default_decay")]
    pub lr_decay_per_step: f64,
    /// Preset value when unset.
    pub iterations: Option<usize>,
    pub points_per_step: Option<usize>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_loss")]
    pub loss: Loss,
}

fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_decay() -> f64 {
    0.99998
}
fn default_log_every() -> usize {
    1000
}
fn default_loss() -> Loss {
    Loss::Ml2re
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            batch_size: default_batch(),
            lr_init: default_lr(),
            lr_decay_per_step: default_decay(),
            iterations: None,
            points_per_step: None,
            log_every: default_log_every(),
            loss: default_loss(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMethod {
    #[default]
    Gp,
    Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformName {
    Log10Shift,
    Log10,
    Zscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpBlock {
    #[serde(default = "default_corr")]
    pub correlation_length: f64,
    #[serde(default = "one")]
    pub variance: f64,
    pub jitter: Option<f64>,
}

fn default_corr() -> f64 {
    0.5
}

impl Default for GpBlock {
    fn default() -> Self {
        GpBlock {
            correlation_length: default_corr(),
            variance: 1.0,
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default)]
    pub method: DataMethod,
    /// Preset sample count when unset.
    pub count: Option<usize>,
    /// Physical faces whose data is drawn from the GP during training.
    #[serde(default)]
    pub gp_faces: Vec<String>,
    #[serde(default)]
    pub gp: GpBlock,
    #[serde(default)]
    pub transforms: Vec<TransformName>,
    #[serde(default = "default_split")]
    pub split: Vec<f64>,
    /// Also build a dataset for the undecomposed domain (label `global`).
    #[serde(default)]
    pub global: bool,
}

fn default_split() -> Vec<f64> {
    vec![0.8, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchBlock {
    pub variants: Vec<VariantBlock>,
}

/// Overrides of the geometry and solver blocks for one bench run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantBlock {
    pub name: String,
    pub scheme: Option<Scheme>,
    pub transmission: Option<TransmissionSpec>,
    pub theta: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub termination: Option<Termination>,
    pub overlap: Option<[f64; 2]>,
    pub cuts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub vtk: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("ddonet-run")
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: default_dir(),
            seed: 0,
            vtk: false,
        }
    }
}

/// Common spellings that are too far from the real key for edit distance.
const ALIASES: &[(&str, &str)] = &[
    ("learningrate", "lr_init"),
    ("learning_rate", "lr_init"),
    ("lr", "lr_init"),
    ("steps", "iterations"),
    ("epochs", "iterations"),
    ("batch", "batch_size"),
    ("eps", "tolerance"),
    ("epsilon", "tolerance"),
    ("tol", "tolerance"),
    ("relaxation", "theta"),
    ("samples", "count"),
    ("h", "spacing"),
];

/// Closest of `candidates` to `word`, if any is reasonably close.
pub fn suggest<'a>(word: &str, candidates: &[&'a str]) -> Option<&'a str> {
    let norm = word.to_ascii_lowercase();
    for (alias, target) in ALIASES {
        if norm == *alias {
            if let Some(c) = candidates.iter().find(|c| *c == target) {
                return Some(c);
            }
        }
    }
    candidates
        .iter()
        .map(|c| (c, strsim::jaro_winkler(&norm, &c.to_ascii_lowercase())))
        .filter(|(_, s)| *s >= 0.8)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| *c)
}

/// Backtick-quoted words of a serde message: the offending name first,
/// then the expected ones.
fn quoted(msg: &str) -> Vec<&str> {
    msg.split('`').skip(1).step_by(2).collect()
}

fn config_error(text: &str, e: toml::de::Error) -> CliError {
    let message = e.message().trim().to_string();
    let mut location = String::new();
    if let Some(span) = e.span() {
        let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
        location = format!("line {line}: ");
    }
    let mut detail = message.clone();
    if message.starts_with("unknown field") || message.starts_with("unknown variant") {
        let q = quoted(&message);
        if let Some((bad, expected)) = q.split_first() {
            location = format!("{location}key `{bad}`: ");
            if let Some(s) = suggest(bad, expected) {
                detail = format!("{message}; did you mean `{s}`?");
            }
        }
    }
    CliError::Config {
        location,
        message: detail,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::parse(&text)
    }

    fn check(&self) -> CliResult<()> {
        let g = &self.geometry;
        if !(g.spacing > 0.0) {
            return Err(CliError::config("geometry.spacing must be positive"));
        }
        match (&g.lo, &g.hi, &g.shapes) {
            (Some(lo), Some(hi), None) => {
                if lo.len() != hi.len() || !(2..=3).contains(&lo.len()) {
                    return Err(CliError::config(
                        "geometry.lo and geometry.hi need 2 or 3 matching coordinates",
                    ));
                }
                if g.axis >= lo.len() {
                    return Err(CliError::config(format!(
                        "geometry.axis {} out of range",
                        g.axis
                    )));
                }
            }
            (None, None, Some(s)) => {
                if s.count == 0 && s.params.is_none() {
                    return Err(CliError::config("geometry.shapes.count must be at least 1"));
                }
            }
            _ => {
                return Err(CliError::config(
                    "geometry needs either `lo` and `hi` or a `shapes` table, not both",
                ))
            }
        }
        if g.overlap.is_some() && g.cuts.is_some() {
            return Err(CliError::config(
                "geometry.overlap and geometry.cuts are exclusive",
            ));
        }
        for b in &g.boundary {
            crate::problem::parse_face(&b.face, g.lo.as_ref().map_or(3, Vec::len))?;
            if b.kind == FaceKindName::Robin && (b.alpha.is_none() || b.beta.is_none()) {
                return Err(CliError::config(format!(
                    "geometry.boundary `{}`: robin faces need `alpha` and `beta`",
                    b.face
                )));
            }
        }
        if let Some(n) = &self.network {
            if let Some(p) = &n.preset {
                if ddonet::neuralop::preset(p).is_none() {
                    let names = ddonet::neuralop::preset_names();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    let hint = suggest(p, &refs)
                        .map(|s| format!("; did you mean `{s}`?"))
                        .unwrap_or_default();
                    return Err(CliError::Config {
                        location: "key `network.preset`: ".into(),
                        message: format!("unknown preset `{p}`{hint}"),
                    });
                }
                if n.hidden.is_some() {
                    return Err(CliError::config(
                        "network.preset and network.hidden are exclusive",
                    ));
                }
            } else if n.hidden.is_none() || n.latent_dim.is_none() {
                return Err(CliError::config(
                    "network needs a `preset` or both `hidden` and `latent_dim`",
                ));
            }
        }
        if let Some(d) = &self.data {
            for f in &d.gp_faces {
                crate::problem::parse_face(f, g.lo.as_ref().map_or(3, Vec::len))?;
            }
            if d.split.is_empty() || d.split.iter().any(|f| !(*f > 0.0)) {
                return Err(CliError::config("data.split fractions must be positive"));
            }
        }
        Ok(())
    }
}
