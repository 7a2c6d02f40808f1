//! Flat `key = value` configuration merged with command-line flags.

use drawstring::drawstring::{DrawstringSpec, Method};
use drawstring::sequence::Topology;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

/// An input problem tied to the field that caused it.
#[derive(Debug, Clone, Serialize)]
pub struct InputError {
    pub field: String,
    pub message: String,
}

impl InputError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        InputError { field: field.to_string(), message: message.into() }
    }
}

pub const KEYS: &[&str] = &[
    "k", "epsilon", "delta", "r0", "method", "topology", "i_max", "p", "z", "l", "grid", "fd_points", "torus_n", "pairs",
    "seed", "el_levels",
];

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, InputError> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(InputError::new("config", format!("line {}: expected key = value, got {line:?}", no + 1)));
        };
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(InputError::new(&key, format!("line {}: unknown key", no + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Every setting after merging, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub k: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub r0: f64,
    pub method: Method,
    pub topology: Topology,
    pub i_max: usize,
    pub p: Vec<f64>,
    pub z: Vec<[f64; 2]>,
    pub l: f64,
    pub grid: usize,
    pub fd_points: usize,
    pub torus_n: usize,
    pub pairs: usize,
    pub seed: u64,
    pub el_levels: Vec<usize>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, InputError> {
    v.trim().parse().map_err(|_| InputError::new(key, format!("cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, InputError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

/// `re,im;re,im;...`
fn lattice_list(v: &str) -> Result<Vec<[f64; 2]>, InputError> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let xs: Vec<f64> = list("z", pair)?;
            match xs[..] {
                [re, im] => Ok([re, im]),
                _ => Err(InputError::new("z", format!("expected re,im, got {pair:?}"))),
            }
        })
        .collect()
}

impl Resolved {
    /// Flags win over file entries, which win over defaults.
    pub fn merge(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> Result<Self, InputError> {
        let get = |key: &str, default: &str| -> String {
            flags.get(key).or_else(|| file.get(key)).cloned().unwrap_or_else(|| default.to_string())
        };
        let method: Method = get("method", "B").parse().map_err(|e| InputError::new("method", format!("{e}")))?;
        let topology: Topology = get("topology", "T3").parse().map_err(|e| InputError::new("topology", format!("{e}")))?;
        let r = Resolved {
            k: num("k", &get("k", "0"))?,
            epsilon: num("epsilon", &get("epsilon", "0.1"))?,
            delta: num("delta", &get("delta", "0.1"))?,
            r0: num("r0", &get("r0", "1e-3"))?,
            method,
            topology,
            i_max: num("i_max", &get("i_max", "8"))?,
            p: list("p", &get("p", "1,1.5,1.9"))?,
            z: lattice_list(&get("z", "0,1;0.5,1;0,2"))?,
            l: num("l", &get("l", "3"))?,
            grid: num("grid", &get("grid", "10000"))?,
            fd_points: num("fd_points", &get("fd_points", "1000"))?,
            torus_n: num("torus_n", &get("torus_n", "64"))?,
            pairs: num("pairs", &get("pairs", "1000"))?,
            seed: num("seed", &get("seed", "7"))?,
            el_levels: list("el_levels", &get("el_levels", "4,8,16,32"))?,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), InputError> {
        self.spec().validate().map_err(|e| match e {
            drawstring::error::Error::Domain { field, msg } => InputError::new(&field, msg),
            other => InputError::new("spec", other.to_string()),
        })?;
        if self.i_max < 2 {
            return Err(InputError::new("i_max", "needs i_max >= 2"));
        }
        if self.p.is_empty() || self.p.iter().any(|p| !(*p >= 1.0 && *p < 2.0)) {
            return Err(InputError::new("p", "each exponent must lie in [1, 2)"));
        }
        if self.z.is_empty() {
            return Err(InputError::new("z", "at least one lattice parameter is needed"));
        }
        if self.grid < 10 {
            return Err(InputError::new("grid", "needs at least 10 points"));
        }
        if self.torus_n < 8 || !self.torus_n.is_power_of_two() {
            return Err(InputError::new("torus_n", "must be a power of two >= 8"));
        }
        if self.el_levels.is_empty() || self.el_levels.contains(&0) {
            return Err(InputError::new("el_levels", "levels must be positive"));
        }
        Ok(())
    }

    pub fn spec(&self) -> DrawstringSpec {
        DrawstringSpec::new(self.k, self.epsilon, self.delta, self.r0, self.method)
    }

    pub fn lattices(&self) -> Vec<Complex64> {
        self.z.iter().map(|z| Complex64::new(z[0], z[1])).collect()
    }
}
