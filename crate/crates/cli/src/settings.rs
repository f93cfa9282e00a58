//! Layered configuration: command-line flags over a `key = value` config
//! file over built-in defaults. The merged result is what the run manifest
//! records, so loading a manifest as a config file reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Count,
    Seed,
    Real,
    Flag,
    Text,
    Path,
    /// Repeatable; one value per occurrence.
    Paths,
    Counts,
    Reals,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` means required or resolved later by the command.
    pub default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>) -> Key {
    Key { name, kind, default }
}

pub fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Keys each command accepts, in manifest order.
pub fn command_keys(command: &str) -> Option<Vec<Key>> {
    use Kind::*;
    let io = [
        key("corpus", Path, None),
        key("sts", Paths, Some("")),
        key("checkpoint", Path, None),
        key("out", Path, Some("out")),
    ];
    let training = [
        key("batch_size", Count, Some("64")),
        key("steps", Count, Some("2000")),
        key("lr", Real, Some("0.05")),
        key("tau", Real, Some("0.05")),
        key("lambda", Real, Some("1")),
        key("m_multiplier", Real, Some("3")),
        key("noise_mean", Real, Some("0")),
        key("noise_std", Real, Some("1")),
        key("objective", Text, Some("gs-infonce")),
        key("dim", Count, Some("64")),
        key("dropout", Real, Some("0.1")),
        key("eval_every", Count, Some("100")),
        key("seed", Seed, Some("0")),
        key("record_time", Flag, Some("false")),
    ];
    let keys = match command {
        "train" => io.iter().chain(&training).copied().collect(),
        "ablate-m" => io
            .iter()
            .chain(&training)
            .copied()
            .chain([
                key("multipliers", Reals, Some("0,0.5,1,2,3,4,8,16")),
                key("parallel", Flag, Some("false")),
                key("svg", Flag, Some("false")),
            ])
            .collect(),
        "eval" => vec![
            key("corpus", Path, None),
            key("sts", Paths, Some("")),
            key("checkpoint", Path, None),
            key("out", Path, Some("out")),
        ],
        "probe" => vec![
            key("source", Text, Some("synthetic")),
            key("clusters", Count, Some("50")),
            key("spread", Real, Some("0.3")),
            key("dim", Count, Some("64")),
            key("corpus", Path, None),
            key("checkpoint", Path, None),
            key("batch_sizes", Counts, Some("8,16,32,64,128,256,512")),
            key("repeats", Count, Some("100")),
            key("top_k", Count, Some("4")),
            key("seed", Seed, Some("0")),
            key("svg", Flag, Some("false")),
            key("out", Path, Some("out")),
        ],
        "gradcheck" => vec![
            key("n", Count, Some("8")),
            key("d", Count, Some("16")),
            key("m", Count, Some("24")),
            key("tau", Real, Some("0.05")),
            key("lambda", Real, Some("1")),
            key("trials", Count, Some("100")),
            key("step", Real, Some("0.0001")),
            key("seed", Seed, Some("7")),
            key("out", Path, Some("out")),
        ],
        "make-toy-data" => vec![
            key("sentences", Count, Some("2000")),
            key("clusters", Count, Some("50")),
            key("pairs", Count, Some("500")),
            key("seed", Seed, Some("0")),
            key("out", Path, Some("toy")),
        ],
        _ => return None,
    };
    Some(keys)
}

/// Raw `key -> values` from a config file. `#` comments and blank lines are
/// skipped; `-` and `_` are interchangeable in keys.
pub fn parse_config(text: &str, path: &Path) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        map.entry(normalize(k)).or_default().push(v.trim().to_string());
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    command: String,
    keys: Vec<Key>,
    values: BTreeMap<&'static str, Vec<String>>,
    /// Derived values recorded in the manifest but ignored on load.
    resolved: Vec<(String, String)>,
    outputs: Vec<(String, PathBuf)>,
}

impl Settings {
    /// Merges `flags` (given on the command line) over the file named by the
    /// `config` flag, over defaults.
    pub fn resolve(command: &str, mut flags: BTreeMap<String, Vec<String>>) -> CliResult<Self> {
        let keys = command_keys(command).ok_or_else(|| CliError::config(format!("unknown command {command}")))?;
        let mut file = BTreeMap::new();
        if let Some(paths) = flags.remove("config") {
            let path = PathBuf::from(paths.last().cloned().unwrap_or_default());
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            file = parse_config(&text, &path)?;
        }
        if let Some(c) = file.remove("command") {
            if c.last().map(String::as_str) != Some(command) {
                return Err(CliError::config(format!(
                    "config file is for command `{}`, not `{command}`",
                    c.join(",")
                )));
            }
        }
        file.retain(|k, _| k != "version" && !k.starts_with("output.") && !k.starts_with("resolved."));

        for (source, map) in [("flag", &flags), ("config key", &file)] {
            for k in map.keys() {
                if !keys.iter().any(|key| key.name == k) {
                    let shown = if source == "flag" { flag_name(k) } else { k.clone() };
                    return Err(CliError::config(format!("{source} {shown} is not used by `{command}`")));
                }
            }
        }

        let mut values = BTreeMap::new();
        for key in &keys {
            let chosen = flags
                .get(key.name)
                .or_else(|| file.get(key.name))
                .cloned()
                .or_else(|| key.default.map(|d| if d.is_empty() { vec![] } else { vec![d.to_string()] }));
            let Some(mut chosen) = chosen else { continue };
            if key.kind != Kind::Paths {
                if chosen.len() > 1 {
                    return Err(CliError::config(format!("{} given more than once", flag_name(key.name))));
                }
            } else {
                chosen.retain(|v| !v.is_empty());
            }
            for v in &chosen {
                check_value(key, v)?;
            }
            values.insert(key.name, chosen);
        }
        Ok(Self {
            command: command.to_string(),
            keys,
            values,
            resolved: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn raw(&self, name: &str) -> Option<&str> {
        self.values.get(name).and_then(|v| v.first()).map(String::as_str)
    }

    fn expect(&self, name: &str) -> &str {
        self.raw(name)
            .unwrap_or_else(|| panic!("key {name} has no default for {}", self.command))
    }

    pub fn count(&self, name: &str) -> usize {
        self.expect(name).parse().expect("validated")
    }

    pub fn seed(&self, name: &str) -> u64 {
        self.expect(name).parse().expect("validated")
    }

    pub fn real(&self, name: &str) -> f64 {
        self.expect(name).parse().expect("validated")
    }

    pub fn flag(&self, name: &str) -> bool {
        self.expect(name) == "true"
    }

    pub fn text(&self, name: &str) -> &str {
        self.expect(name)
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.raw(name).map(PathBuf::from)
    }

    pub fn require_path(&self, name: &str) -> CliResult<PathBuf> {
        self.path(name).ok_or_else(|| {
            CliError::config(format!(
                "missing required {} (or `{name}` in the config file)",
                flag_name(name)
            ))
        })
    }

    pub fn paths(&self, name: &str) -> Vec<PathBuf> {
        self.values.get(name).map(|v| v.iter().map(PathBuf::from).collect()).unwrap_or_default()
    }

    pub fn counts(&self, name: &str) -> Vec<usize> {
        split_list(self.expect(name)).map(|s| s.parse().expect("validated")).collect()
    }

    pub fn reals(&self, name: &str) -> Vec<f64> {
        split_list(self.expect(name)).map(|s| s.parse().expect("validated")).collect()
    }

    /// Materialises a value the command derived (e.g. a default path).
    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        let key = self.keys.iter().find(|k| k.name == name).expect("known key");
        self.values.insert(key.name, vec![value.into()]);
    }

    pub fn record_resolved(&mut self, name: &str, value: impl Into<String>) {
        self.resolved.push((name.to_string(), value.into()));
    }

    pub fn record_output(&mut self, name: &str, path: impl Into<PathBuf>) {
        self.outputs.push((name.to_string(), path.into()));
    }

    /// Manifest text; parseable by [`parse_config`] and accepted back by
    /// [`Settings::resolve`].
    pub fn manifest(&self) -> String {
        let mut out = String::from("# gsinfonce run manifest\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
        for key in &self.keys {
            for v in self.values.get(key.name).into_iter().flatten() {
                let _ = writeln!(out, "{} = {v}", key.name);
            }
        }
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "resolved.{k} = {v}");
        }
        for (k, p) in &self.outputs {
            let _ = writeln!(out, "output.{k} = {}", p.display());
        }
        out
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn check_value(key: &Key, v: &str) -> CliResult<()> {
    let bad = |what: &str| {
        Err(CliError::config(format!(
            "{} expects {what}, got `{v}`",
            flag_name(key.name)
        )))
    };
    let real_ok = |s: &str| s.parse::<f64>().is_ok_and(f64::is_finite);
    match key.kind {
        Kind::Count | Kind::Seed if v.parse::<u64>().is_err() => bad("a non-negative integer"),
        Kind::Real if !real_ok(v) => bad("a finite number"),
        Kind::Flag if v != "true" && v != "false" => bad("true or false"),
        Kind::Counts if split_list(v).next().is_none() || split_list(v).any(|s| s.parse::<usize>().is_err()) => {
            bad("a comma-separated list of non-negative integers")
        }
        Kind::Reals if split_list(v).next().is_none() || !split_list(v).all(real_ok) => {
            bad("a comma-separated list of numbers")
        }
        Kind::Text | Kind::Path if v.is_empty() => bad("a value"),
        _ => Ok(()),
    }
}
