//! Versioned system configuration files (TOML or JSON).
//!
//! ```toml
//! version = 1
//!
//! [[sites]]
//! name = "u"
//! initial = "infinity"
//! coalescence = { density = { family = "beta", params = { a = 0.5, b = 1.5 } } }
//!
//! [[sites]]
//! name = "v"
//! initial = 0
//!
//! [[edges]]
//! from = "u"
//! to = "v"
//! migration = { density = { family = "power_law", params = { gamma = 0.75 } } }
//! ```

use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measures::{DensityFamily, MeasureSpec};
use crate::system::{InitialCount, Measure, SystemSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub version: u32,
    pub sites: Vec<SiteConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub name: String,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalescence: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<MeasureConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub migration: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduction: Option<MeasureConfig>,
}

/// Initial count: a nonnegative integer or the literal `"infinity"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InitialConfig(pub Option<u64>);

impl Serialize for InitialConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(n) => s.serialize_u64(n),
            None => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for InitialConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = InitialConfig;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative integer or \"infinity\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(InitialConfig(Some(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                u64::try_from(v)
                    .map(|n| InitialConfig(Some(n)))
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "infinity" {
                    Ok(InitialConfig(None))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default, skip_serializing_if = "is_zero")]
    pub atom_zero: f64,
    /// `[z, mass]` pairs with `z ∈ (0, 1]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform,
    Constant(ConstantParams),
    PowerLaw(PowerLawParams),
    Beta(BetaParams),
    Tabulated(TabulatedParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantParams {
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawParams {
    #[serde(default = "one")]
    pub scale: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedParams {
    /// `[z, f(z)]` knots of a piecewise-linear density.
    pub points: Vec<[f64; 2]>,
}

impl MeasureConfig {
    pub fn to_measure(&self) -> Result<Measure> {
        let density = match &self.density {
            None => DensityFamily::None,
            Some(DensityConfig::Uniform) => DensityFamily::Constant { value: 1.0 },
            Some(DensityConfig::Constant(p)) => DensityFamily::Constant { value: p.value },
            Some(DensityConfig::PowerLaw(p)) => DensityFamily::PowerLaw {
                scale: p.scale,
                gamma: p.gamma,
            },
            Some(DensityConfig::Beta(p)) => DensityFamily::Beta {
                a: p.a,
                b: p.b,
                scale: p.scale,
            },
            Some(DensityConfig::Tabulated(p)) => {
                return MeasureSpec::tabulated(p.points.iter().map(|q| (q[0], q[1])).collect())?
                    .try_add(&MeasureSpec::new(self.atom_zero, self.atom_pairs(), DensityFamily::None)?)
            }
        };
        MeasureSpec::new(self.atom_zero, self.atom_pairs(), density)
    }

    fn atom_pairs(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a[0], a[1])).collect()
    }

    pub fn from_measure(m: &Measure) -> Self {
        let density = match m.density() {
            DensityFamily::None => None,
            DensityFamily::Constant { value } => Some(DensityConfig::Constant(ConstantParams { value: *value })),
            DensityFamily::PowerLaw { scale, gamma } => Some(DensityConfig::PowerLaw(PowerLawParams {
                scale: *scale,
                gamma: *gamma,
            })),
            DensityFamily::Beta { a, b, scale } => Some(DensityConfig::Beta(BetaParams {
                a: *a,
                b: *b,
                scale: *scale,
            })),
            DensityFamily::Tabulated(t) => Some(DensityConfig::Tabulated(TabulatedParams {
                points: t.points().iter().map(|&(z, f)| [z, f]).collect(),
            })),
        };
        Self {
            atom_zero: m.atom_zero(),
            atoms: m.atoms().iter().map(|&(z, w)| [z, w]).collect(),
            density,
        }
    }
}

fn at(path: String) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::InvalidMeasure(msg) => Error::Validation(format!("{path}: {msg}")),
        Error::Validation(msg) => Error::Validation(format!("{path}: {msg}")),
        other => other,
    }
}

impl SystemConfig {
    pub fn to_system(&self) -> Result<SystemSpec> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "version".into(),
                message: format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version),
            });
        }
        let mut sys = SystemSpec::new(self.sites.iter().map(|s| s.name.clone())).map_err(at("sites".into()))?;
        for (i, s) in self.sites.iter().enumerate() {
            if let Some(m) = &s.coalescence {
                let path = format!("sites[{i}].coalescence");
                sys.set_coalescence(i, m.to_measure().map_err(at(path))?)?;
            }
            if let Some(m) = &s.death {
                let path = format!("sites[{i}].death");
                sys.set_death(i, m.to_measure().map_err(at(path))?)?;
            }
            let count = match s.initial.0 {
                Some(n) => InitialCount::Finite(n),
                None => InitialCount::Infinite,
            };
            sys.set_initial(i, count)?;
        }
        for (i, e) in self.edges.iter().enumerate() {
            let from = sys.site_index(&e.from).map_err(at(format!("edges[{i}].from")))?;
            let to = sys.site_index(&e.to).map_err(at(format!("edges[{i}].to")))?;
            if let Some(m) = &e.migration {
                let path = format!("edges[{i}].migration");
                let m = m.to_measure().map_err(at(path.clone()))?;
                if !sys.migration(from, to).is_zero() {
                    return Err(Error::Validation(format!("{path}: duplicate edge {} -> {}", e.from, e.to)));
                }
                sys.set_migration(from, to, m).map_err(at(path))?;
            }
            if let Some(m) = &e.reproduction {
                let path = format!("edges[{i}].reproduction");
                let m = m.to_measure().map_err(at(path.clone()))?;
                if !sys.reproduction(from, to).is_zero() {
                    return Err(Error::Validation(format!("{path}: duplicate edge {} -> {}", e.from, e.to)));
                }
                sys.set_reproduction(from, to, m).map_err(at(path))?;
            }
        }
        Ok(sys)
    }

    pub fn from_system(sys: &SystemSpec) -> Self {
        let names = sys.sites();
        let nonzero = |m: &Measure| (!m.is_zero()).then(|| MeasureConfig::from_measure(m));
        let sites = names
            .iter()
            .enumerate()
            .map(|(i, name)| SiteConfig {
                name: name.clone(),
                initial: InitialConfig(match sys.initial()[i] {
                    InitialCount::Finite(n) => Some(n),
                    InitialCount::Infinite => None,
                }),
                coalescence: nonzero(sys.coalescence(i)),
                death: nonzero(sys.death(i)),
            })
            .collect();
        let mut edges = Vec::new();
        for u in 0..names.len() {
            for v in 0..names.len() {
                let migration = if u == v { None } else { nonzero(sys.migration(u, v)) };
                let reproduction = nonzero(sys.reproduction(u, v));
                if migration.is_some() || reproduction.is_some() {
                    edges.push(EdgeConfig {
                        from: names[u].clone(),
                        to: names[v].clone(),
                        migration,
                        reproduction,
                    });
                }
            }
        }
        Self {
            version: SCHEMA_VERSION,
            sites,
            edges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

fn schema_error<E: fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::Schema {
        path,
        message: err.into_inner().to_string(),
    }
}

pub fn parse_config(text: &str, format: Format) -> Result<SystemConfig> {
    match format {
        Format::Toml => {
            let de = toml::Deserializer::parse(text).map_err(|e| Error::Schema {
                path: ".".into(),
                message: e.to_string(),
            })?;
            serde_path_to_error::deserialize(de).map_err(schema_error)
        }
        Format::Json => {
            let mut de = serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(&mut de).map_err(schema_error)
        }
    }
}

pub fn parse_system_str(text: &str, format: Format) -> Result<SystemSpec> {
    parse_config(text, format)?.to_system()
}

pub fn parse_system(path: &Path) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_system_str(&text, Format::from_path(path))
}

pub fn serialize_system(sys: &SystemSpec, format: Format) -> Result<String> {
    let cfg = SystemConfig::from_system(sys);
    match format {
        Format::Toml => toml::to_string_pretty(&cfg).map_err(|e| Error::Validation(e.to_string())),
        Format::Json => serde_json::to_string_pretty(&cfg).map_err(|e| Error::Validation(e.to_string())),
    }
}
