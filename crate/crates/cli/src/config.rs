//! Flag and config-file handling shared by the subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::user_error;

/// Crop target written as `WIDTHxHEIGHT`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crop(pub u32, pub u32);

impl FromStr for Crop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| format!("bad crop dimension `{v}`"));
        let (w, h) = (parse(w)?, parse(h)?);
        if w < 3 || h < 3 {
            return Err(format!("crop must be at least 3x3, got {w}x{h}"));
        }
        Ok(Crop(w, h))
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

impl Serialize for Crop {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Crop {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Overlays the keys of a TOML config file onto the flag values.
pub fn apply_config<T>(args: T, config: Option<&Path>) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(path) = config else {
        return Ok(args);
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| user_error(format!("cannot read config {}: {e}", path.display())))?;
    let overrides: toml::Table = toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
    let mut merged = toml::Table::try_from(&args)?;
    merged.extend(overrides);
    toml::Value::Table(merged)
        .try_into()
        .with_context(|| format!("config {}", path.display()))
}

#[derive(Serialize)]
struct RunConfig<'a, T> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

/// Records the effective configuration of a run next to its outputs.
pub fn write_run_config<T: Serialize>(path: &Path, command: &str, args: &T) -> anyhow::Result<()> {
    let text = toml::to_string(&RunConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    })?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| user_error(format!("missing required --{flag} (flag or config key `{flag}`)")))
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
