//! Flag and config-file resolution, and the provenance sidecar written
//! next to every output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;
use voclab_core::fsutil::write_atomic;

use crate::CliError;

/// Values for one subcommand: flags first, then the subcommand's table in
/// the config file, then built-in defaults. Every resolved value is kept
/// for the sidecar.
pub struct Settings {
    command: &'static str,
    table: toml::Table,
    echo: BTreeMap<String, Value>,
}

fn toml_to_string(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items.iter().map(toml_to_string).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

impl Settings {
    pub fn new(command: &'static str, config: Option<&toml::Table>, seed: u64) -> Self {
        let table = config
            .and_then(|c| c.get(command))
            .and_then(|v| v.as_table())
            .cloned()
            .unwrap_or_default();
        let mut echo = BTreeMap::new();
        echo.insert("seed".to_string(), Value::from(seed));
        Self { command, table, echo }
    }

    fn raw(&self, key: &str, flag: Option<&str>) -> Option<(String, bool)> {
        if let Some(f) = flag {
            return Some((f.to_string(), true));
        }
        self.table.get(key).map(|v| (toml_to_string(v), false))
    }

    fn parse<T>(&self, key: &str, text: &str, from_flag: bool) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        text.parse().map_err(|e: T::Err| {
            let msg = format!("invalid value `{text}` for {}: {e}", self.name(key, from_flag));
            if from_flag {
                CliError::Usage(msg)
            } else {
                CliError::Invalid(msg)
            }
        })
    }

    fn name(&self, key: &str, from_flag: bool) -> String {
        if from_flag {
            format!("--{}", key.replace('_', "-"))
        } else {
            format!("`{key}` in [{}] of the config file", self.command)
        }
    }

    /// A value with a default.
    pub fn get<T>(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let (text, from_flag) = self.raw(key, flag).unwrap_or_else(|| (default.to_string(), false));
        let v = self.parse(key, &text, from_flag)?;
        self.echo.insert(key.to_string(), Value::from(text));
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<&str>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key, flag) {
            Some((text, from_flag)) => {
                let v = self.parse(key, &text, from_flag)?;
                self.echo.insert(key.to_string(), Value::from(text));
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<&str>) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{}", key.replace('_', "-"))))
    }

    pub fn path(&mut self, key: &str, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        self.required(key, flag.and_then(Path::to_str))
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<&Path>) -> Result<Option<PathBuf>, CliError> {
        self.optional(key, flag.and_then(Path::to_str))
    }

    /// Boolean switch: present flag wins, else the config value, else false.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = if flag { true } else { self.optional(key, None)?.unwrap_or(false) };
        self.echo.insert(key.to_string(), Value::from(v));
        Ok(v)
    }

    pub fn record(&mut self, key: &str, v: impl Into<Value>) {
        self.echo.insert(key.to_string(), v.into());
    }

    pub fn echo(&self) -> &BTreeMap<String, Value> {
        &self.echo
    }

    pub fn command(&self) -> &'static str {
        self.command
    }
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

/// Writes `bytes` to `out` and the provenance sidecar beside it.
pub fn write_output(out: &Path, bytes: &[u8], s: &Settings, extra: BTreeMap<String, Value>) -> Result<(), CliError> {
    write_atomic(out, bytes).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    let mut meta = BTreeMap::new();
    meta.insert("command".to_string(), Value::from(s.command()));
    meta.insert("tool_version".to_string(), Value::from(env!("CARGO_PKG_VERSION")));
    meta.insert(
        "settings".to_string(),
        serde_json::to_value(s.echo()).expect("settings serialize"),
    );
    meta.extend(extra);
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    let mp = meta_path(out);
    write_atomic(&mp, text.as_bytes()).map_err(|e| CliError::Io(mp, e))
}

/// The sidecar of an input, when it has one.
pub fn read_meta(input: &Path) -> Option<Value> {
    let text = std::fs::read_to_string(meta_path(input)).ok()?;
    serde_json::from_str(&text).ok()
}
