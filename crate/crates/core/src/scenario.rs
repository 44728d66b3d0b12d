//! Scenario files: JSON with a mandatory `"schema": 1`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{KinematicState, Problem};
use crate::field::{FieldError, MetricField, ParticleParams, DEFAULT_GUARD};
use crate::geometry::{dot, SignConvention};
use crate::potential::{EvalPoint, Params, ParseError, PotentialExpr};
use crate::verify::Tolerances;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const ADAPTIVE_TOLERANCE: f64 = 1e-9;

/// Relative mismatch allowed between a given energy and one implied by `v₀`.
const ENERGY_MATCH: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported schema version {0}; expected {SCHEMA_VERSION}")]
    UnsupportedSchema(u32),
    #[error("`potential`: {0}")]
    Potential(#[from] ParseError),
    #[error("`{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
    #[error("`particle.energy` = {energy} is inconsistent with `initial.v` (speed {speed} implies energy {implied})")]
    Inconsistent {
        energy: f64,
        speed: f64,
        implied: f64,
    },
    #[error("initial state not admissible: g00 = {goo} ({detail})")]
    Inadmissible { goo: f64, detail: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    #[default]
    Both,
    Reference,
    Geodesic,
}

impl ModeSelection {
    pub fn reference(self) -> bool {
        self != ModeSelection::Geodesic
    }

    pub fn geodesic(self) -> bool {
        self != ModeSelection::Reference
    }
}

impl fmt::Display for ModeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeSelection::Both => "both",
            ModeSelection::Reference => "reference",
            ModeSelection::Geodesic => "geodesic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SignChoice {
    #[default]
    Auto,
    Plus,
    Minus,
}

impl fmt::Display for SignChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignChoice::Auto => "auto",
            SignChoice::Plus => "plus",
            SignChoice::Minus => "minus",
        })
    }
}

impl SignChoice {
    pub fn fixed(self) -> Option<SignConvention> {
        match self {
            SignChoice::Auto => None,
            SignChoice::Plus => Some(SignConvention::Plus),
            SignChoice::Minus => Some(SignConvention::Minus),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticleFile {
    m: f64,
    c: f64,
    #[serde(default)]
    energy: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    x: [f64; 3],
    #[serde(default)]
    v: Option<[f64; 3]>,
    #[serde(default)]
    direction: Option<[f64; 3]>,
    #[serde(default)]
    t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    name: String,
    potential: String,
    #[serde(default)]
    parameters: Params,
    particle: ParticleFile,
    initial: InitialFile,
    t_end: f64,
    #[serde(default = "default_step")]
    h: f64,
    #[serde(default)]
    mode: ModeSelection,
    #[serde(default)]
    adaptive: bool,
    #[serde(default = "default_guard")]
    guard_band: f64,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    sign_convention: SignChoice,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub source: String,
    pub field: MetricField,
    pub initial: KinematicState,
    pub t_end: f64,
    pub h: f64,
    pub mode: ModeSelection,
    pub adaptive: bool,
    pub tolerances: Tolerances,
    pub sign: SignChoice,
    canonical: String,
}

impl Scenario {
    pub fn potential(&self) -> &PotentialExpr {
        self.field.potential()
    }

    pub fn particle(&self) -> &ParticleParams {
        self.field.particle()
    }

    pub fn problem(&self) -> Problem {
        Problem {
            field: self.field.clone(),
            initial: self.initial,
            t_end: self.t_end,
        }
    }

    /// The scenario with defaults filled in, as compact JSON with sorted keys.
    pub fn canonical_json(&self) -> &str {
        &self.canonical
    }

    /// SHA-256 over the canonical scenario and any run-time overrides.
    pub fn fingerprint(&self, overrides: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical.as_bytes());
        hasher.update([0u8]);
        hasher.update(overrides.as_bytes());
        hex::encode(hasher.finalize())
    }
}

fn finite(field: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::Invalid {
            field,
            message: format!("must be finite, got {v}"),
        })
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::Invalid {
            field,
            message: format!("must be positive, got {v}"),
        })
    }
}

/// Parses and validates scenario JSON.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile =
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    validate(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if file.schema != SCHEMA_VERSION {
        return Err(ScenarioError::UnsupportedSchema(file.schema));
    }
    if file.name.is_empty()
        || !file
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        || file.name.starts_with('.')
    {
        return Err(ScenarioError::Invalid {
            field: "name",
            message: format!(
                "`{}` must be non-empty and use only letters, digits, `-`, `_`, `.`",
                file.name
            ),
        });
    }
    let declared: Vec<&str> = file.parameters.keys().map(String::as_str).collect();
    let potential = PotentialExpr::parse(&file.potential, &declared)?;
    for (k, v) in &file.parameters {
        if !v.is_finite() {
            return Err(ScenarioError::Invalid {
                field: "parameters",
                message: format!("`{k}` must be finite"),
            });
        }
    }
    let m = positive("particle.m", file.particle.m)?;
    let c = positive("particle.c", file.particle.c)?;
    let t0 = finite("initial.t", file.initial.t)?;
    for &xi in &file.initial.x {
        finite("initial.x", xi)?;
    }
    let t_end = finite("t_end", file.t_end)?;
    if !(t_end > t0) {
        return Err(ScenarioError::Invalid {
            field: "t_end",
            message: format!("must exceed initial.t = {t0}, got {t_end}"),
        });
    }
    let h = positive("h", file.h)?;
    let guard = positive("guard_band", file.guard_band)?;
    if guard >= 0.5 {
        return Err(ScenarioError::Invalid {
            field: "guard_band",
            message: format!("must be below 0.5, got {guard}"),
        });
    }

    let u0 = potential
        .eval(&EvalPoint::new(file.initial.x, t0, &file.parameters))
        .map_err(|e| ScenarioError::Field(e.into()))?;
    let rest = m * c * c;
    let goo_for = |energy: f64| 1.0 - (rest / (energy - u0)).powi(2);

    let (energy, v0) = match (file.particle.energy, file.initial.v, file.initial.direction) {
        (_, Some(_), Some(_)) => {
            return Err(ScenarioError::Invalid {
                field: "initial.direction",
                message: "give either `initial.v` or `initial.direction`, not both".into(),
            })
        }
        (energy, Some(v), None) => {
            for &vi in &v {
                finite("initial.v", vi)?;
            }
            let speed = dot(v, v).sqrt();
            if !(speed > 0.0 && speed < c) {
                let goo = (speed / c).powi(2);
                return Err(ScenarioError::Inadmissible {
                    goo,
                    detail: format!("|v0|/c = {} must lie strictly between 0 and 1", speed / c),
                });
            }
            let implied = ParticleParams::energy_for_speed(m, c, speed, u0);
            if let Some(e) = energy {
                if !((e - implied).abs() <= ENERGY_MATCH * implied.abs().max(rest)) {
                    return Err(ScenarioError::Inconsistent {
                        energy: e,
                        speed,
                        implied,
                    });
                }
            }
            (implied, v)
        }
        (Some(energy), None, direction) => {
            let energy = finite("particle.energy", energy)?;
            let goo = goo_for(energy);
            if !(energy - u0 > rest) {
                return Err(ScenarioError::Inadmissible {
                    goo,
                    detail: format!(
                        "energy − U(x0) = {} does not exceed m·c² = {rest}",
                        energy - u0
                    ),
                });
            }
            let d = direction.ok_or(ScenarioError::Invalid {
                field: "initial.direction",
                message: "required when `initial.v` is absent".into(),
            })?;
            let norm = dot(d, d).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(ScenarioError::Invalid {
                    field: "initial.direction",
                    message: "must be a non-zero vector".into(),
                });
            }
            let speed = c * goo.sqrt();
            (energy, d.map(|di| di / norm * speed))
        }
        (None, None, _) => {
            return Err(ScenarioError::Invalid {
                field: "initial.v",
                message: "one of `initial.v` or `particle.energy` is required".into(),
            })
        }
    };

    let particle = ParticleParams::new(m, c, energy)?;
    let field = MetricField::new(potential, file.parameters.clone(), particle)?.with_guard(guard);
    let initial = KinematicState::new(t0, file.initial.x, v0);
    field.goo(initial.event()).map_err(|e| match e {
        FieldError::TurningPoint { goo, .. } | FieldError::LightSpeed { goo, .. } => {
            ScenarioError::Inadmissible {
                goo,
                detail: e.to_string(),
            }
        }
        other => other.into(),
    })?;

    let mut canonical_file = file.clone();
    canonical_file.particle.energy = Some(energy);
    canonical_file.initial.v = Some(v0);
    canonical_file.initial.direction = None;
    let value = serde_json::to_value(&canonical_file).expect("scenario serializes");
    let canonical = serde_json::to_string(&value).expect("scenario serializes");

    Ok(Scenario {
        name: file.name,
        source: file.potential,
        field,
        initial,
        t_end,
        h,
        mode: file.mode,
        adaptive: file.adaptive,
        tolerances: file.tolerances,
        sign: file.sign_convention,
        canonical,
    })
}
