//! Tunable constants and the flat `key = value` text format they (and the
//! experiment configs) are stored in.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const FROZEN: &str = include_str!("../data/frozen_constants.conf");

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<Vec<KvEntry>> {
    let mut out: Vec<KvEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(Error::ConfigParse {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            });
        };
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() {
            return Err(Error::ConfigParse {
                line,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::ConfigParse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push(KvEntry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(e: &KvEntry) -> Result<T> {
    e.value.parse().map_err(|_| Error::ConfigParse {
        line: e.line,
        message: format!("invalid value `{}` for `{}`", e.value, e.key),
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Constants the theory leaves unspecified.
#[derive(Debug, Clone, PartialEq)]
pub struct TunableConstants {
    /// Target-error gate `epsilon < C1`.
    pub c1: f64,
    /// Comparison-noise gate `nu' <= C2 epsilon^(2 kappa) delta`.
    pub c2: f64,
    /// Leading constant of the per-group label batch `k`.
    pub c3: f64,
    /// Label-noise gate `nu <= C4 epsilon`.
    pub c4: f64,
    /// Leading constant of the VC deviation bound.
    pub c0: f64,
    /// Log-concave constants; `lc[0]` is `c1`, ..., `lc[5]` is `c6`.
    pub lc: [f64; 6],
    pub lc_c1_prime: f64,
    /// Multiplier on the per-round sample sizes of the disagreement learner.
    pub a2_n_mult: f64,
    /// Multiplier on the per-round sample sizes of the margin learner.
    pub margin_n_mult: f64,
    pub hinge_iters: usize,
    /// Oracle-direct labels used to pick the margin learner's start vector.
    pub margin_seed_labels: usize,
}

impl Default for TunableConstants {
    fn default() -> Self {
        TunableConstants {
            c1: 0.5,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            c0: 1.0,
            lc: [0.2, 0.28, 1.0, 2.0, 1.0, 1.0],
            lc_c1_prime: 1.0,
            a2_n_mult: 1.0,
            margin_n_mult: 1.0,
            hinge_iters: 2000,
            margin_seed_labels: 32,
        }
    }
}

const LC_KEYS: [&str; 6] = ["lc_c1", "lc_c2", "lc_c3", "lc_c4", "lc_c5", "lc_c6"];

impl TunableConstants {
    /// The calibrated constants shipped with the crate.
    pub fn frozen() -> Self {
        Self::parse(FROZEN).expect("embedded constants file is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    /// Parses a constants file; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TunableConstants::default();
        for e in parse_kv(text)? {
            c.set(&e)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub(crate) fn set(&mut self, e: &KvEntry) -> Result<()> {
        match e.key.as_str() {
            "C1" => self.c1 = parse_value(e)?,
            "C2" => self.c2 = parse_value(e)?,
            "C3" => self.c3 = parse_value(e)?,
            "C4" => self.c4 = parse_value(e)?,
            "c0" => self.c0 = parse_value(e)?,
            "lc_c1_prime" => self.lc_c1_prime = parse_value(e)?,
            "a2_n_mult" => self.a2_n_mult = parse_value(e)?,
            "margin_n_mult" => self.margin_n_mult = parse_value(e)?,
            "hinge_iters" => self.hinge_iters = parse_value(e)?,
            "margin_seed_labels" => self.margin_seed_labels = parse_value(e)?,
            k => match LC_KEYS.iter().position(|&n| n == k) {
                Some(i) => self.lc[i] = parse_value(e)?,
                None => {
                    return Err(Error::ConfigParse {
                        line: e.line,
                        message: format!("unknown constant `{k}`"),
                    })
                }
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("C4", self.c4),
            ("c0", self.c0),
            ("lc_c1_prime", self.lc_c1_prime),
            ("a2_n_mult", self.a2_n_mult),
            ("margin_n_mult", self.margin_n_mult),
        ];
        for (name, v) in reals.into_iter().chain(LC_KEYS.into_iter().zip(self.lc)) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("constant {name} must be positive, got {v}")));
            }
        }
        if self.hinge_iters == 0 || self.margin_seed_labels == 0 {
            return Err(Error::invalid("hinge_iters and margin_seed_labels must be positive"));
        }
        Ok(())
    }

    /// Serializes in the format accepted by [`TunableConstants::parse`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("C1", self.c1.to_string());
        put("C2", self.c2.to_string());
        put("C3", self.c3.to_string());
        put("C4", self.c4.to_string());
        put("c0", self.c0.to_string());
        for (k, v) in LC_KEYS.iter().zip(self.lc) {
            put(k, v.to_string());
        }
        put("lc_c1_prime", self.lc_c1_prime.to_string());
        put("a2_n_mult", self.a2_n_mult.to_string());
        put("margin_n_mult", self.margin_n_mult.to_string());
        put("hinge_iters", self.hinge_iters.to_string());
        put("margin_seed_labels", self.margin_seed_labels.to_string());
        s
    }
}
