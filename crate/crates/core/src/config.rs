//! Flat `key=value` scenario files.
//!
//! Keys are dotted paths (`red.max_p`, `ledbat.target_s`, ...). The bare field
//! name is accepted as an alias when it is unambiguous, so `max_p=0.5` and
//! `red.max_p=0.5` are equivalent. Lines starting with `#` are comments.
//!
//! A scenario is resolved in two passes: all assignments (file first, then
//! overrides) are collected into a map, and only then turned into a
//! [`ScenarioConfig`]. This keeps the result independent of assignment order,
//! e.g. `discipline=droptail` always wins over stray `red.*` keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::params::{HistoryInterpolation, RedProfile, ScenarioConfig};

/// Every accepted key, in canonical serialisation order.
pub const KEYS: &[&str] = &[
    "link.capacity_bits_per_s",
    "link.packet_size_bytes",
    "link.buffer_packets",
    "link.prop_delay_s",
    "link.jitter_s",
    "discipline",
    "red.min_th_packets",
    "red.max_th_packets",
    "red.max_p",
    "red.ewma_weight",
    "red.sample_period_s",
    "ledbat.target_s",
    "ledbat.gain",
    "flows.n_tcp",
    "flows.n_ledbat",
    "horizon_s",
    "rng_seed",
    "replications",
    "fluid.step_s",
    "fluid.drift_clamp",
    "fluid.interpolation",
    "fluid.decrease_factor",
];

/// Map a user-supplied key (dotted or bare) to its canonical dotted form.
pub fn resolve_key(key: &str) -> Result<&'static str, ConfigError> {
    let key = key.trim();
    if let Some(k) = KEYS.iter().find(|k| **k == key) {
        return Ok(k);
    }
    let mut hits = KEYS
        .iter()
        .filter(|k| k.rsplit('.').next() == Some(key) && k.contains('.'));
    match (hits.next(), hits.next()) {
        (Some(k), None) => Ok(k),
        _ => Err(ConfigError::UnknownKey(key.to_owned())),
    }
}

/// Ordered set of raw assignments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<&'static str, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        let k = resolve_key(key)?;
        self.entries.insert(k, value.into().trim().to_owned());
        Ok(())
    }

    /// Parse an assignment of the form `key=value`.
    pub fn set_assignment(&mut self, text: &str) -> Result<(), ConfigError> {
        let (k, v) = text.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: 0,
            text: text.to_owned(),
        })?;
        self.set(k, v)
    }

    pub fn parse_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_owned(),
            })?;
            // allow trailing comments after the value
            let v = v.split('#').next().unwrap_or("");
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.parse_str(&text)
    }

    /// Build a validated scenario, starting from the defaults.
    pub fn build(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let get = |k: &str| self.entries.get(k).map(String::as_str);

        let discipline = get("discipline").unwrap_or("red");
        let mut red = RedProfile::default();
        match discipline {
            "red" => {}
            "droptail" => cfg.red = None,
            other => return Err(invalid("discipline", other, "expected `red` or `droptail`")),
        }

        for (&key, value) in &self.entries {
            let v = value.as_str();
            match key {
                "discipline" => {}
                "link.capacity_bits_per_s" => cfg.link.capacity_bits_per_s = real(key, v)?,
                "link.packet_size_bytes" => cfg.link.packet_size_bytes = int(key, v)?,
                "link.buffer_packets" => cfg.link.buffer_packets = int(key, v)?,
                "link.prop_delay_s" => cfg.link.prop_delay_s = real(key, v)?,
                "link.jitter_s" => cfg.link.jitter_s = real(key, v)?,
                "red.min_th_packets" => red.min_th_packets = real(key, v)?,
                "red.max_th_packets" => red.max_th_packets = real(key, v)?,
                "red.max_p" => red.max_p = real(key, v)?,
                "red.ewma_weight" => red.ewma_weight = real(key, v)?,
                "red.sample_period_s" => red.sample_period_s = real(key, v)?,
                "ledbat.target_s" => cfg.ledbat.target_s = real(key, v)?,
                "ledbat.gain" => cfg.ledbat.gain = real(key, v)?,
                "flows.n_tcp" => cfg.flows.n_tcp = int(key, v)?,
                "flows.n_ledbat" => cfg.flows.n_ledbat = int(key, v)?,
                "horizon_s" => cfg.horizon_s = real(key, v)?,
                "rng_seed" => cfg.rng_seed = int(key, v)?,
                "replications" => cfg.replications = int(key, v)?,
                "fluid.step_s" => cfg.fluid.step_s = real(key, v)?,
                "fluid.drift_clamp" => cfg.fluid.drift_clamp = boolean(key, v)?,
                "fluid.interpolation" => {
                    cfg.fluid.interpolation = match v {
                        "linear" => HistoryInterpolation::Linear,
                        "hermite" => HistoryInterpolation::Hermite,
                        _ => return Err(invalid(key, v, "expected `linear` or `hermite`")),
                    }
                }
                "fluid.decrease_factor" => cfg.fluid.decrease_factor = real(key, v)?,
                _ => return Err(ConfigError::UnknownKey(key.to_owned())),
            }
        }
        if cfg.red.is_some() {
            cfg.red = Some(red);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: reason.to_owned(),
    }
}

fn real(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(invalid(key, v, "expected a finite real number")),
    }
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>()
        .map_err(|_| invalid(key, v, "expected a non-negative integer"))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

impl ScenarioConfig {
    /// Defaults, then the optional file, then each `key=value` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut map = ConfigMap::new();
        if let Some(p) = path {
            map.parse_file(p)?;
        }
        for o in overrides {
            map.set_assignment(o)?;
        }
        map.build()
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut map = ConfigMap::new();
        map.parse_str(text)?;
        map.build()
    }

    /// Canonical `(key, value)` pairs; DropTail scenarios omit the `red.*` keys.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::with_capacity(KEYS.len());
        let l = &self.link;
        out.push((KEYS[0], l.capacity_bits_per_s.to_string()));
        out.push((KEYS[1], l.packet_size_bytes.to_string()));
        out.push((KEYS[2], l.buffer_packets.to_string()));
        out.push((KEYS[3], l.prop_delay_s.to_string()));
        out.push((KEYS[4], l.jitter_s.to_string()));
        match &self.red {
            Some(r) => {
                out.push((KEYS[5], "red".to_owned()));
                out.push((KEYS[6], r.min_th_packets.to_string()));
                out.push((KEYS[7], r.max_th_packets.to_string()));
                out.push((KEYS[8], r.max_p.to_string()));
                out.push((KEYS[9], r.ewma_weight.to_string()));
                out.push((KEYS[10], r.sample_period_s.to_string()));
            }
            None => out.push((KEYS[5], "droptail".to_owned())),
        }
        out.push((KEYS[11], self.ledbat.target_s.to_string()));
        out.push((KEYS[12], self.ledbat.gain.to_string()));
        out.push((KEYS[13], self.flows.n_tcp.to_string()));
        out.push((KEYS[14], self.flows.n_ledbat.to_string()));
        out.push((KEYS[15], self.horizon_s.to_string()));
        out.push((KEYS[16], self.rng_seed.to_string()));
        out.push((KEYS[17], self.replications.to_string()));
        out.push((KEYS[18], self.fluid.step_s.to_string()));
        out.push((KEYS[19], self.fluid.drift_clamp.to_string()));
        let interp = match self.fluid.interpolation {
            HistoryInterpolation::Linear => "linear",
            HistoryInterpolation::Hermite => "hermite",
        };
        out.push((KEYS[20], interp.to_owned()));
        out.push((KEYS[21], self.fluid.decrease_factor.to_string()));
        out
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Short stable digest of the resolved scenario.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        digest[..8].iter().fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Copy of this scenario with a single key replaced, re-validated.
    pub fn with_value(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let mut map = ConfigMap::new();
        for (k, v) in self.to_pairs() {
            map.set(k, v)?;
        }
        map.set(key, value)?;
        map.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ScenarioConfig;

    #[test]
    fn bare_and_dotted_keys_agree() {
        assert_eq!(resolve_key("max_p").unwrap(), "red.max_p");
        assert_eq!(resolve_key("red.max_p").unwrap(), "red.max_p");
        assert_eq!(resolve_key("n_ledbat").unwrap(), "flows.n_ledbat");
        assert!(resolve_key("nope").is_err());
    }

    #[test]
    fn parses_file_with_comments() {
        let cfg = ScenarioConfig::parse_str(
            "# scenario\n\nmax_p = 1\nred.min_th_packets=20 # trailing\nledbat.target_s=0.5\nflows.n_tcp=5\n",
        )
        .unwrap();
        let red = cfg.red.unwrap();
        assert_eq!(red.max_p, 1.0);
        assert_eq!(red.min_th_packets, 20.0);
        assert_eq!(cfg.ledbat.target_s, 0.5);
        assert_eq!(cfg.flows.n_tcp, 5);
    }

    #[test]
    fn droptail_wins_regardless_of_order() {
        let a = ScenarioConfig::parse_str("red.max_p=0.5\ndiscipline=droptail\n").unwrap();
        let b = ScenarioConfig::parse_str("discipline=droptail\nred.max_p=0.5\n").unwrap();
        assert!(a.red.is_none());
        assert_eq!(a, b);
    }

    #[test]
    fn errors_are_typed() {
        assert!(matches!(
            ScenarioConfig::parse_str("bogus=1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("flows.n_tcp=2.5"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("just text"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("red.max_th_packets=5"),
            Err(ConfigError::Invariant(_))
        ));
    }

    #[test]
    fn canonical_round_trip_and_hash() {
        let mut cfg = ScenarioConfig::default();
        cfg.ledbat.target_s = 0.37;
        cfg.flows.n_ledbat = 3;
        let back = ScenarioConfig::parse_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash_hex(), cfg.hash_hex());
        assert_eq!(cfg.hash_hex().len(), 16);
        assert_ne!(cfg.hash_hex(), ScenarioConfig::default().hash_hex());
        let dt = ScenarioConfig::droptail();
        assert_eq!(ScenarioConfig::parse_str(&dt.to_config_string()).unwrap(), dt);
    }

    #[test]
    fn with_value_revalidates() {
        let cfg = ScenarioConfig::default();
        let c2 = cfg.with_value("ledbat.target_s", "0.25").unwrap();
        assert_eq!(c2.ledbat.target_s, 0.25);
        assert!(cfg.with_value("red.min_th_packets", "150").is_err());
        assert!(cfg.with_value("not.a.key", "1").is_err());
    }
}
