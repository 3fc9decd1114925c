//! Run manifest: `key=value` lines recording the command and the resolved
//! configuration. Values are TOML literals, so a manifest parses back into
//! the same [`Config`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::config::Config;

const CONFIG_PREFIX: &str = "config.";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: Config,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config: Config) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            config,
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("version={}\ncommand={}\n", self.version, self.command);
        let value = toml::Value::try_from(&self.config).expect("config serializes");
        flatten(CONFIG_PREFIX.trim_end_matches('.'), &value, &mut out);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut command = None;
        let mut root = toml::Table::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("manifest line {}: missing '='", n + 1)))?;
            match key {
                "version" => version = Some(value.to_string()),
                "command" => command = Some(value.to_string()),
                _ => {
                    let path = key.strip_prefix(CONFIG_PREFIX).ok_or_else(|| {
                        Error::Config(format!("manifest line {}: unknown key {key}", n + 1))
                    })?;
                    let parsed: toml::Table = format!("v = {value}")
                        .parse()
                        .map_err(|e| Error::Config(format!("manifest line {}: {e}", n + 1)))?;
                    insert(&mut root, path, parsed["v"].clone())?;
                }
            }
        }
        let config: Config = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(Self {
            version: version.ok_or_else(|| Error::Config("manifest lacks version".into()))?,
            command: command.ok_or_else(|| Error::Config("manifest lacks command".into()))?,
            config,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => {
            out.push_str(prefix);
            out.push('=');
            out.push_str(&other.to_string());
            out.push('\n');
        }
    }
}

fn insert(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts = path.split('.').peekable();
    let mut table = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("manifest key {path} collides with a value")))?;
    }
    Err(Error::Config("empty manifest key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::AmplitudeSpec;
    use crate::io::presets::{averaged_baseline, field_baseline};

    #[test]
    fn round_trip() {
        for mut cfg in [averaged_baseline(), field_baseline()] {
            cfg.alpha.amplitude = AmplitudeSpec::Text("random:9".into());
            cfg.scheme = Some("crank-nicolson".into());
            let m = Manifest::new("optimize-pulse", cfg);
            let text = m.render();
            assert!(text.lines().all(|l| l.contains('=')));
            assert_eq!(Manifest::parse(&text).unwrap(), m);
        }
    }

    #[test]
    fn stable_rendering() {
        let m = Manifest::new("simulate-averaged", averaged_baseline());
        assert_eq!(m.render(), Manifest::parse(&m.render()).unwrap().render());
        assert!(m.render().contains("config.costs.final=0.0\n"));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Manifest::parse("version=1\ncommand=x\nfoo=1\n").is_err());
    }
}
