//! INI-style run configuration.
//!
//! ```ini
//! [tight-binding]
//! n = 44
//! omega_r = 7.749
//! j1 = 0.2588
//! j2 = 0.3705
//! j_long = 0.0475, 0.0127, 0.00519, 0.0021
//!
//! [coupling]
//! start = 19
//! g = 0.0199, 0.0723, 0.1682, 0.2509, 0.2400, 0.1472, 0.0579
//! ```
//!
//! Lists are comma separated. Every value read is recorded, defaults
//! included, so the manifest shows exactly what a run used.

use std::sync::Mutex;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};

pub struct RunConfig {
    ini: Ini,
    resolved: Mutex<BTreeMap<String, String>>,
}

impl std::fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunConfig").field("resolved", &self.resolved.lock().unwrap()).finish()
    }
}

fn qualified(section: &str, key: &str) -> String {
    format!("{section}.{key}")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::validation(format!("config parse error: {e}")))?;
        Ok(RunConfig { ini, resolved: Mutex::new(BTreeMap::new()) })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Apply `section.key=value`.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (lhs, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("override '{spec}' is not of the form section.key=value")))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::validation(format!("override key '{lhs}' needs a section prefix")))?;
        if section.is_empty() || key.is_empty() {
            return Err(Error::validation(format!("override '{spec}' has an empty section or key")));
        }
        self.ini.with_section(Some(section.trim())).set(key.trim(), value.trim());
        Ok(())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.ini.section(Some(section)).is_some()
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }

    fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(|s| s.trim().to_string())
    }

    fn record(&self, section: &str, key: &str, value: String) {
        self.resolved.lock().unwrap().insert(qualified(section, key), value);
    }

    /// Fail with one message naming every absent key.
    pub fn require(&self, keys: &[(&str, &str)]) -> Result<()> {
        let missing: Vec<String> =
            keys.iter().filter(|(s, k)| !self.has(s, k)).map(|(s, k)| qualified(s, k)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!("missing config keys: {}", missing.join(", "))))
        }
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        let raw = self
            .raw(section, key)
            .ok_or_else(|| Error::validation(format!("missing config keys: {}", qualified(section, key))))?;
        let v = raw
            .parse::<T>()
            .map_err(|_| Error::validation(format!("cannot parse {} = '{raw}'", qualified(section, key))))?;
        self.record(section, key, raw);
        Ok(v)
    }

    pub fn get_or<T: FromStr + ToString>(&self, section: &str, key: &str, default: T) -> Result<T> {
        if self.has(section, key) {
            self.get(section, key)
        } else {
            self.record(section, key, default.to_string());
            Ok(default)
        }
    }

    pub fn get_opt<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        if self.has(section, key) {
            self.get(section, key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>> {
        let raw = self
            .raw(section, key)
            .ok_or_else(|| Error::validation(format!("missing config keys: {}", qualified(section, key))))?;
        let v = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::validation(format!("cannot parse '{s}' in {}", qualified(section, key))))
            })
            .collect::<Result<Vec<T>>>()?;
        self.record(section, key, raw);
        Ok(v)
    }

    pub fn list_or<T: FromStr + ToString>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        if self.has(section, key) {
            self.list(section, key)
        } else {
            let text = default.iter().map(T::to_string).collect::<Vec<_>>().join(", ");
            self.record(section, key, text);
            Ok(default)
        }
    }

    /// Inclusive linear grid from `{prefix}_min`, `{prefix}_max`, `{prefix}_points`.
    pub fn grid(&self, section: &str, prefix: &str, default: (f64, f64, usize)) -> Result<Vec<f64>> {
        let lo = self.get_or(section, &format!("{prefix}_min"), default.0)?;
        let hi = self.get_or(section, &format!("{prefix}_max"), default.1)?;
        let n = self.get_or(section, &format!("{prefix}_points"), default.2)?;
        linspace(lo, hi, n).map_err(|e| Error::validation(format!("[{section}] {prefix}: {e}")))
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.lock().unwrap().clone()
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> std::result::Result<Vec<f64>, String> {
    if n < 2 {
        return Err(format!("grid needs at least two points, got {n}"));
    }
    if !(hi > lo) {
        return Err(format!("grid bounds must increase ({lo} .. {hi})"));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}
