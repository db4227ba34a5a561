//! Simulation parameters and the `key = value` TOML loader.

use crate::clock::{ticks_from_duration, Tick};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path} not found")]
    MissingFile { path: PathBuf },
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

/// Every recognized key. Anything else in a config file produces a warning.
pub const KNOWN_KEYS: &[&str] = &[
    "duration",
    "waiting_ticks_mean",
    "num_pools",
    "scheduling_algo",
    "seed",
    "total_cpu_millicores",
    "total_ram_mib",
    "pipeline_ops_mean",
    "op_base_ticks_mean",
    "op_ram_mib_mean",
    "priority_weights",
    "scaling_mix",
    "sigma_frac",
    "sample_interval_ticks",
    "trace_path",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Simulated seconds.
    pub duration: f64,
    pub waiting_ticks_mean: u64,
    pub num_pools: u32,
    pub scheduling_algo: String,
    pub seed: u64,
    pub total_cpu_millicores: u64,
    pub total_ram_mib: u64,
    pub pipeline_ops_mean: f64,
    pub op_base_ticks_mean: f64,
    pub op_ram_mib_mean: f64,
    /// Arrival mix for (batch, iterative, interactive).
    pub priority_weights: [f64; 3],
    /// Operator scaling mix for (constant, linear, amdahl).
    pub scaling_mix: [f64; 3],
    pub sigma_frac: f64,
    pub sample_interval_ticks: u64,
    pub trace_path: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            waiting_ticks_mean: 50_000,
            num_pools: 1,
            scheduling_algo: "priority".to_string(),
            seed: 42,
            total_cpu_millicores: 16_000,
            total_ram_mib: 32_768,
            pipeline_ops_mean: 4.0,
            op_base_ticks_mean: 50_000.0,
            op_ram_mib_mean: 2048.0,
            priority_weights: [0.6, 0.3, 0.1],
            scaling_mix: [0.2, 0.4, 0.4],
            sigma_frac: 0.25,
            sample_interval_ticks: 100,
            trace_path: None,
        }
    }
}

/// A loaded config together with the non-fatal diagnostics found while reading it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: SimConfig,
    pub warnings: Vec<String>,
}

impl SimConfig {
    pub fn total_ticks(&self) -> Result<u64, ConfigError> {
        ticks_from_duration(self.duration).map_err(|e| invalid("duration", e.to_string()))
    }

    pub fn end_tick(&self) -> Result<Tick, ConfigError> {
        self.total_ticks().map(Tick)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ticks = self.total_ticks()?;
        if ticks == 0 {
            return Err(invalid("duration", "rounds to zero ticks"));
        }
        if self.waiting_ticks_mean < 1 {
            return Err(invalid("waiting_ticks_mean", "must be at least 1"));
        }
        if self.num_pools < 1 {
            return Err(invalid("num_pools", "must be at least 1"));
        }
        if self.scheduling_algo.is_empty() {
            return Err(invalid("scheduling_algo", "must be non-empty"));
        }
        if self.total_cpu_millicores < self.num_pools as u64 {
            return Err(invalid(
                "total_cpu_millicores",
                format!("must be at least num_pools ({})", self.num_pools),
            ));
        }
        if self.total_ram_mib < self.num_pools as u64 {
            return Err(invalid(
                "total_ram_mib",
                format!("must be at least num_pools ({})", self.num_pools),
            ));
        }
        for (key, v) in [
            ("pipeline_ops_mean", self.pipeline_ops_mean),
            ("op_base_ticks_mean", self.op_base_ticks_mean),
            ("op_ram_mib_mean", self.op_ram_mib_mean),
        ] {
            if !v.is_finite() || v < 1.0 {
                return Err(invalid(key, "must be a finite number >= 1"));
            }
        }
        check_simplex("priority_weights", &self.priority_weights)?;
        check_simplex("scaling_mix", &self.scaling_mix)?;
        if !self.sigma_frac.is_finite() || self.sigma_frac < 0.0 {
            return Err(invalid("sigma_frac", "must be a finite number >= 0"));
        }
        if self.sample_interval_ticks < 1 {
            return Err(invalid("sample_interval_ticks", "must be at least 1"));
        }
        Ok(())
    }

    /// Effective config rendered back in the file format.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("duration = {:?}\n", self.duration));
        out.push_str(&format!("waiting_ticks_mean = {}\n", self.waiting_ticks_mean));
        out.push_str(&format!("num_pools = {}\n", self.num_pools));
        out.push_str(&format!("scheduling_algo = {:?}\n", self.scheduling_algo));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("total_cpu_millicores = {}\n", self.total_cpu_millicores));
        out.push_str(&format!("total_ram_mib = {}\n", self.total_ram_mib));
        out.push_str(&format!("pipeline_ops_mean = {:?}\n", self.pipeline_ops_mean));
        out.push_str(&format!("op_base_ticks_mean = {:?}\n", self.op_base_ticks_mean));
        out.push_str(&format!("op_ram_mib_mean = {:?}\n", self.op_ram_mib_mean));
        out.push_str(&format!("priority_weights = {:?}\n", self.priority_weights));
        out.push_str(&format!("scaling_mix = {:?}\n", self.scaling_mix));
        out.push_str(&format!("sigma_frac = {:?}\n", self.sigma_frac));
        out.push_str(&format!("sample_interval_ticks = {}\n", self.sample_interval_ticks));
        if let Some(p) = &self.trace_path {
            out.push_str(&format!("trace_path = {:?}\n", p.display().to_string()));
        }
        out
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn check_simplex(key: &str, w: &[f64; 3]) -> Result<(), ConfigError> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid(key, "entries must be finite and non-negative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(key, format!("entries must sum to 1 (got {sum})")));
    }
    Ok(())
}

/// Reads `path`, fills defaults, validates. Unknown keys are logged as warnings.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let loaded = load_config_with_warnings(path)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(loaded.config)
}

pub fn load_config_with_warnings(path: impl AsRef<Path>) -> Result<LoadedConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ConfigError::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            ConfigError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let mut loaded = parse_config(&text)?;
    // Relative trace paths are resolved against the config file's directory.
    if let Some(trace) = &loaded.config.trace_path {
        if trace.is_relative() {
            if let Some(dir) = path.parent() {
                loaded.config.trace_path = Some(dir.join(trace));
            }
        }
    }
    Ok(loaded)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        ConfigError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;

    let mut warnings = Vec::new();
    for key in table.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            warnings.push(format!("unknown config key `{key}` ignored"));
        }
    }

    let mut cfg = SimConfig::default();
    if let Some(v) = table.get("duration") {
        cfg.duration = as_f64("duration", v)?;
    }
    if let Some(v) = table.get("waiting_ticks_mean") {
        cfg.waiting_ticks_mean = as_u64("waiting_ticks_mean", v)?;
    }
    if let Some(v) = table.get("num_pools") {
        let n = as_u64("num_pools", v)?;
        cfg.num_pools = u32::try_from(n).map_err(|_| invalid("num_pools", "too large"))?;
    }
    if let Some(v) = table.get("scheduling_algo") {
        cfg.scheduling_algo = v
            .as_str()
            .ok_or_else(|| invalid("scheduling_algo", "expected a string"))?
            .to_string();
    }
    if let Some(v) = table.get("seed") {
        cfg.seed = as_u64("seed", v)?;
    }
    if let Some(v) = table.get("total_cpu_millicores") {
        cfg.total_cpu_millicores = as_u64("total_cpu_millicores", v)?;
    }
    if let Some(v) = table.get("total_ram_mib") {
        cfg.total_ram_mib = as_u64("total_ram_mib", v)?;
    }
    if let Some(v) = table.get("pipeline_ops_mean") {
        cfg.pipeline_ops_mean = as_f64("pipeline_ops_mean", v)?;
    }
    if let Some(v) = table.get("op_base_ticks_mean") {
        cfg.op_base_ticks_mean = as_f64("op_base_ticks_mean", v)?;
    }
    if let Some(v) = table.get("op_ram_mib_mean") {
        cfg.op_ram_mib_mean = as_f64("op_ram_mib_mean", v)?;
    }
    if let Some(v) = table.get("priority_weights") {
        cfg.priority_weights = as_triple("priority_weights", v)?;
    }
    if let Some(v) = table.get("scaling_mix") {
        cfg.scaling_mix = as_triple("scaling_mix", v)?;
    }
    if let Some(v) = table.get("sigma_frac") {
        cfg.sigma_frac = as_f64("sigma_frac", v)?;
    }
    if let Some(v) = table.get("sample_interval_ticks") {
        cfg.sample_interval_ticks = as_u64("sample_interval_ticks", v)?;
    }
    if let Some(v) = table.get("trace_path") {
        let s = v
            .as_str()
            .ok_or_else(|| invalid("trace_path", "expected a string"))?;
        cfg.trace_path = Some(PathBuf::from(s));
    }

    cfg.validate()?;
    Ok(LoadedConfig {
        config: cfg,
        warnings,
    })
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, "expected a number")),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::Integer(i) => Err(invalid(key, format!("must be non-negative (got {i})"))),
        _ => Err(invalid(key, "expected an integer")),
    }
}

fn as_triple(key: &str, v: &toml::Value) -> Result<[f64; 3], ConfigError> {
    let arr = v
        .as_array()
        .ok_or_else(|| invalid(key, "expected an array of three numbers"))?;
    if arr.len() != 3 {
        return Err(invalid(key, "expected exactly three entries"));
    }
    let mut out = [0.0; 3];
    for (slot, item) in out.iter_mut().zip(arr) {
        *slot = as_f64(key, item)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_only_fills_defaults() {
        let loaded = parse_config("duration = 1\n").unwrap();
        let expected = SimConfig {
            duration: 1.0,
            ..SimConfig::default()
        };
        assert_eq!(loaded.config, expected);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn custom_scheduler_key() {
        let loaded = parse_config("scheduling_algo = \"my-scheduler\"\n").unwrap();
        assert_eq!(loaded.config.scheduling_algo, "my-scheduler");
    }

    #[test]
    fn zero_pools_rejected() {
        match parse_config("num_pools = 0\n") {
            Err(ConfigError::InvalidValue { key, .. }) => assert_eq!(key, "num_pools"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_waiting_mean_rejected() {
        assert!(matches!(
            parse_config("waiting_ticks_mean = 0"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(parse_config("priority_weights = [0.5, 0.3, 0.1]").is_err());
        assert!(parse_config("scaling_mix = [1, 0, 0]").is_ok());
    }

    #[test]
    fn each_pool_needs_capacity() {
        assert!(parse_config("num_pools = 4\ntotal_ram_mib = 3").is_err());
    }

    #[test]
    fn unknown_key_is_a_warning() {
        let loaded = parse_config("duration = 2\nflux_capacitor = true\n").unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("flux_capacitor"));
    }

    #[test]
    fn parse_error_reports_line() {
        match parse_config("duration = 1\nnum_pools = = 3\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_config("/definitely/not/here.toml"),
            Err(ConfigError::MissingFile { .. })
        ));
    }

    #[test]
    fn rendered_config_parses_back() {
        let cfg = SimConfig {
            seed: 7,
            num_pools: 3,
            scheduling_algo: "priority-pool".into(),
            ..SimConfig::default()
        };
        let back = parse_config(&cfg.to_toml()).unwrap().config;
        assert_eq!(back, cfg);
    }
}
