//! Experiment configuration: flat TOML with dotted keys.
//!
//! ```toml
//! experiment = "supervised"
//! horizon = 200000
//! seeds = "0..30"          # or [0, 1, 2]
//! learner.mode = "idbd"
//! learner.theta_meta = [0.001, 0.003]   # an array sweeps the key
//! ```
//!
//! Every key must be known to the chosen suite; missing keys take the
//! suite's defaults and the resolved set is written into each record.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::error::{HarnessError, Result};
use crate::suites::{self, Suite};

/// A scalar parameter value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", crate::record::fmt_num(*x)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "an integer",
            Value::Float(_) => "a number",
            Value::Bool(_) => "true or false",
            Value::Str(_) => "a string",
        }
    }

    fn from_toml(key: &str, v: &toml::Value) -> Result<Value> {
        Ok(match v {
            toml::Value::Integer(i) => Value::Int(*i),
            toml::Value::Float(x) => Value::Float(*x),
            toml::Value::Boolean(b) => Value::Bool(*b),
            toml::Value::String(s) => Value::Str(s.clone()),
            other => {
                return Err(HarnessError::BadValue {
                    key: key.into(),
                    expected: "a scalar or an array of scalars".into(),
                    got: other.type_str().into(),
                })
            }
        })
    }

    /// Coerces to the type of `default`, accepting integers for numbers.
    fn coerce(self, key: &str, default: &Value) -> Result<Value> {
        match (default, self) {
            (Value::Float(_), Value::Int(i)) => Ok(Value::Float(i as f64)),
            (Value::Int(_), v @ Value::Int(_))
            | (Value::Float(_), v @ Value::Float(_))
            | (Value::Bool(_), v @ Value::Bool(_))
            | (Value::Str(_), v @ Value::Str(_)) => Ok(v),
            (d, v) => Err(HarnessError::BadValue {
                key: key.into(),
                expected: d.kind().into(),
                got: format!("{v} ({})", v.kind()),
            }),
        }
    }
}

/// A declared suite parameter with its default.
#[derive(Debug, Clone)]
pub struct Param {
    pub key: &'static str,
    pub default: Value,
    pub help: &'static str,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub log_every: u64,
    pub output_dir: Option<PathBuf>,
    /// Resolved single values, defaults included; swept keys hold their
    /// first value here.
    pub params: BTreeMap<String, Value>,
    /// Swept keys in key order.
    pub sweep: Vec<(String, Vec<Value>)>,
}

const RESERVED: [&str; 5] = ["experiment", "horizon", "seeds", "log_every", "output_dir"];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn parse_seeds(v: &toml::Value) -> Result<Vec<u64>> {
    let bad = |got: String| HarnessError::BadValue {
        key: "seeds".into(),
        expected: "a list of non-negative integers or a range \"a..b\"".into(),
        got,
    };
    let seeds = match v {
        toml::Value::Integer(i) if *i >= 0 => vec![*i as u64],
        toml::Value::Array(items) => items
            .iter()
            .map(|x| match x {
                toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                other => Err(bad(other.to_string())),
            })
            .collect::<Result<Vec<_>>>()?,
        toml::Value::String(s) => {
            let (a, b) = s.split_once("..").ok_or_else(|| bad(s.clone()))?;
            let a: u64 = a.trim().parse().map_err(|_| bad(s.clone()))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(s.clone()))?;
            (a..b).collect()
        }
        other => return Err(bad(other.to_string())),
    };
    if seeds.is_empty() {
        return Err(bad("an empty list".into()));
    }
    Ok(seeds)
}

fn positive_int(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i > 0 => Ok(*i as u64),
        other => Err(HarnessError::BadValue {
            key: key.into(),
            expected: "a positive integer".into(),
            got: other.to_string(),
        }),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);

        let missing = |k: &str| HarnessError::Config(format!("missing required key \"{k}\""));
        let experiment = match flat.remove("experiment").ok_or_else(|| missing("experiment"))? {
            toml::Value::String(s) => s,
            other => {
                return Err(HarnessError::BadValue {
                    key: "experiment".into(),
                    expected: "a suite name (see `continua list`)".into(),
                    got: other.to_string(),
                })
            }
        };
        let suite = suites::find(&experiment).ok_or_else(|| HarnessError::BadValue {
            key: "experiment".into(),
            expected: format!("one of {:?}", suites::names()),
            got: experiment.clone(),
        })?;
        let horizon = positive_int("horizon", &flat.remove("horizon").ok_or_else(|| missing("horizon"))?)?;
        let seeds = parse_seeds(&flat.remove("seeds").ok_or_else(|| missing("seeds"))?)?;
        let log_every = match flat.remove("log_every") {
            Some(v) => positive_int("log_every", &v)?,
            None => (horizon / 1000).max(1),
        };
        let output_dir = match flat.remove("output_dir") {
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(other) => {
                return Err(HarnessError::BadValue {
                    key: "output_dir".into(),
                    expected: "a path string".into(),
                    got: other.to_string(),
                })
            }
            None => None,
        };
        Self::resolve(suite, experiment, horizon, seeds, log_every, output_dir, flat)
    }

    fn resolve(
        suite: &Suite,
        experiment: String,
        horizon: u64,
        seeds: Vec<u64>,
        log_every: u64,
        output_dir: Option<PathBuf>,
        flat: BTreeMap<String, toml::Value>,
    ) -> Result<Self> {
        let mut params: BTreeMap<String, Value> =
            suite.params.iter().map(|p| (p.key.to_string(), p.default.clone())).collect();
        let mut sweep = Vec::new();
        for (key, raw) in flat {
            let Some(default) = params.get(&key).cloned() else {
                let known: Vec<&str> = suite.params.iter().map(|p| p.key).chain(RESERVED).collect();
                return Err(HarnessError::Config(format!(
                    "unknown key \"{key}\" for experiment \"{experiment}\"; known keys: {}",
                    known.join(", ")
                )));
            };
            match raw {
                toml::Value::Array(items) => {
                    if items.is_empty() {
                        return Err(HarnessError::BadValue {
                            key,
                            expected: "a non-empty sweep list".into(),
                            got: "[]".into(),
                        });
                    }
                    let values = items
                        .iter()
                        .map(|v| Value::from_toml(&key, v)?.coerce(&key, &default))
                        .collect::<Result<Vec<_>>>()?;
                    params.insert(key.clone(), values[0].clone());
                    sweep.push((key, values));
                }
                v => {
                    let v = Value::from_toml(&key, &v)?.coerce(&key, &default)?;
                    params.insert(key, v);
                }
            }
        }
        Ok(Self {
            experiment,
            horizon,
            seeds,
            log_every,
            output_dir,
            params,
            sweep,
        })
    }

    /// Cartesian product of the sweep, in key order (last key fastest).
    pub fn points(&self) -> Vec<RunParams> {
        let mut points = vec![self.params.clone()];
        for (key, values) in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|values| RunParams {
                experiment: self.experiment.clone(),
                horizon: self.horizon,
                log_every: self.log_every,
                values,
            })
            .collect()
    }
}

/// Fully resolved parameters of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub experiment: String,
    pub horizon: u64,
    pub log_every: u64,
    pub values: BTreeMap<String, Value>,
}

impl RunParams {
    /// Parameters of `suite` with all defaults and the given overrides.
    pub fn defaults(suite: &str, horizon: u64, log_every: u64) -> Result<Self> {
        let s = suites::find(suite).ok_or_else(|| HarnessError::Config(format!("unknown suite \"{suite}\"")))?;
        Ok(Self {
            experiment: suite.to_string(),
            horizon,
            log_every,
            values: s.params.iter().map(|p| (p.key.to_string(), p.default.clone())).collect(),
        })
    }

    pub fn set(&mut self, key: &str, v: Value) -> Result<()> {
        let default = self
            .values
            .get(key)
            .ok_or_else(|| HarnessError::Config(format!("unknown key \"{key}\"")))?
            .clone();
        self.values.insert(key.into(), v.coerce(key, &default)?);
        Ok(())
    }

    fn get(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("suite reads undeclared parameter {key}"))
    }

    fn bad(&self, key: &str, expected: &str) -> HarnessError {
        HarnessError::BadValue {
            key: key.into(),
            expected: expected.into(),
            got: self.get(key).to_string(),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            Value::Float(x) if x.is_finite() => Ok(*x),
            Value::Int(i) => Ok(*i as f64),
            _ => Err(self.bad(key, "a finite number")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        match self.get(key) {
            Value::Int(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(self.bad(key, "a non-negative integer")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        Ok(self.usize(key)? as u64)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            Value::Bool(b) => Ok(*b),
            _ => Err(self.bad(key, "true or false")),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.get(key) {
            Value::Str(s) => Ok(s),
            _ => Err(self.bad(key, "a string")),
        }
    }

    /// String parameter restricted to `choices`.
    pub fn choice(&self, key: &str, choices: &[&str]) -> Result<&str> {
        let s = self.str(key)?;
        if choices.contains(&s) {
            Ok(s)
        } else {
            Err(self.bad(key, &format!("one of {choices:?}")))
        }
    }
}
