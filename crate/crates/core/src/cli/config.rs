use std::fs;
use std::path::Path;

use crate::error::{contract, Result, VieError};

/// Leading line of every resolved-config file.
pub const CONFIG_HEADER: &str = "# vie-config v1";

/// Command-scoped `key = value` settings: values from an optional
/// `--config FILE` first, then command-line `--key value` overrides in the
/// order given. Later values win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pairs: Vec<(String, String)>,
}

/// Keys are accepted with dashes or underscores; stored with underscores.
fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    /// Parse a config file body: one `key = value` per line, `#` starts a
    /// comment, blank lines ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| VieError::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(VieError::Parse { line: i + 1, message: "empty key".into() });
            }
            pairs.push((key, v.trim().to_string()));
        }
        Ok(RunConfig { pairs })
    }

    /// Command-line settings. `--config FILE` is loaded first wherever it
    /// appears; every other `--key value` or `--key=value` overrides it.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let mut file = None;
        let mut overrides = Vec::new();
        let mut it = args.iter();
        while let Some(tok) = it.next() {
            let Some(body) = tok.strip_prefix("--") else {
                return contract(format!("expected '--key value', got '{tok}'"));
            };
            let (key, value) = match body.split_once('=') {
                Some((k, v)) => (normalize_key(k), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| VieError::Contract(format!("--{body} needs a value")))?;
                    (normalize_key(body), v.clone())
                }
            };
            if key == "config" {
                if file.replace(value).is_some() {
                    return contract("--config given more than once");
                }
            } else {
                overrides.push((key, value));
            }
        }
        let mut config = match file {
            Some(path) => Self::parse_text(&fs::read_to_string(&path).map_err(|e| {
                VieError::Io(std::io::Error::new(e.kind(), format!("config file {path}: {e}")))
            })?)?,
            None => RunConfig::default(),
        };
        config.pairs.extend(overrides);
        Ok(config)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Fails on the first key outside `allowed`.
    pub fn check_keys(&self, command: &str, allowed: &[&str]) -> Result<()> {
        match self.pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => contract(format!("unknown key '{k}' for '{command}'")),
            None => Ok(()),
        }
    }
}

/// Resolved settings as a config file accepted by [`RunConfig::parse_text`].
pub fn resolved_text(command: &str, pairs: &[(String, String)]) -> String {
    let mut out = format!("{CONFIG_HEADER}\n# command: {command}\n");
    for (k, v) in pairs {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn write_resolved(dir: &Path, command: &str, pairs: &[(String, String)]) -> Result<()> {
    fs::write(dir.join("resolved.conf"), resolved_text(command, pairs))?;
    Ok(())
}

pub(crate) fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| VieError::Contract(format!("{key}: {e}"))))
        .collect()
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| VieError::Contract(format!("{key}: {e}")))
}

pub(crate) fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
