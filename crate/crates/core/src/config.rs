//! Runtime configuration: optional `key = value` file, overridable by flags.

use std::path::PathBuf;

use crate::error::{Error, Result};

/// Overrides the key file path from any config file.
pub const KEY_ENV: &str = "SHVEBOX_KEY";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchParams {
    pub packets: usize,
    pub rules: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub malicious_fraction: f64,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams { packets: 2000, rules: 1000, min_len: 1, max_len: 1500, malicious_fraction: 0.01, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub key_path: PathBuf,
    pub rules_path: Option<PathBuf>,
    pub db_path: PathBuf,
    pub filter_path: PathBuf,
    pub listen: String,
    pub connect: Option<String>,
    pub workers: usize,
    pub bench: BenchParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            key_path: "shvebox.key".into(),
            rules_path: None,
            db_path: "rules.db".into(),
            filter_path: "rules.flt".into(),
            listen: "127.0.0.1:7878".into(),
            connect: None,
            workers: 1,
            bench: BenchParams::default(),
        }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse { line, msg: format!("bad value for {key}: {v:?}") })
}

impl Config {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, msg: "expected key = value".into() })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "key" => c.key_path = v.into(),
                "rules" => c.rules_path = Some(v.into()),
                "db" => c.db_path = v.into(),
                "filter" => c.filter_path = v.into(),
                "listen" => c.listen = v.into(),
                "connect" => c.connect = Some(v.into()),
                "workers" => c.workers = num(line, k, v)?,
                "bench.packets" => c.bench.packets = num(line, k, v)?,
                "bench.rules" => c.bench.rules = num(line, k, v)?,
                "bench.min_len" => c.bench.min_len = num(line, k, v)?,
                "bench.max_len" => c.bench.max_len = num(line, k, v)?,
                "bench.malicious" => c.bench.malicious_fraction = num(line, k, v)?,
                "bench.seed" => c.bench.seed = num(line, k, v)?,
                _ => return Err(Error::Parse { line, msg: format!("unknown key {k:?}") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies environment overrides (currently only [`KEY_ENV`]).
    pub fn with_env(mut self) -> Self {
        if let Some(p) = std::env::var_os(KEY_ENV) {
            self.key_path = p.into();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        let f = self.bench.malicious_fraction;
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("malicious fraction {f} outside [0, 1]"));
        }
        let b = &self.bench;
        if b.min_len == 0 || b.min_len > b.max_len || b.max_len > crate::crypto::MAX_PAYLOAD {
            return bad(format!("packet length range {}..={} outside 1..=1500", b.min_len, b.max_len));
        }
        Ok(())
    }
}
