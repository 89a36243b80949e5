//! `key=value` run configuration: a file, then `--set` and flag overrides.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Conf {
    given: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
    known: RefCell<BTreeSet<String>>,
}

pub fn parse_pairs(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value, got {line:?}", no + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Conf {
    pub fn load(file: Option<&Path>, sets: &[String], flags: Vec<(&str, Option<String>)>) -> Result<Self, CliError> {
        let mut given = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_pairs(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for s in sets {
            given.extend(parse_pairs(s, "--set")?);
        }
        for (k, v) in flags {
            if let Some(v) = v {
                given.insert(k.to_string(), v);
            }
        }
        Ok(Conf { given, ..Default::default() })
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse().map_err(|e| CliError::Usage(format!("bad value for {key}: {raw:?} ({e})")))
    }

    pub fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.known.borrow_mut().insert(key.to_string());
        let v = match self.given.get(key) {
            Some(raw) => self.parse(key, raw)?,
            None => default,
        };
        self.resolved.borrow_mut().insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T: FromStr + Display>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.known.borrow_mut().insert(key.to_string());
        let raw = self.given.get(key).ok_or_else(|| CliError::Usage(format!("missing required setting {key}")))?;
        let v = self.parse(key, raw)?;
        self.resolved.borrow_mut().insert(key.to_string(), raw.clone());
        Ok(v)
    }

    /// Rejects keys no command asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        let known = self.known.borrow();
        let unknown: Vec<&String> = self.given.keys().filter(|k| !known.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!("unknown settings: {unknown:?}")));
        }
        Ok(())
    }

    /// The fully resolved settings, defaults included, one per line.
    pub fn frozen(&self) -> String {
        self.resolved.borrow().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|e| CliError::Usage(format!("bad entry {s:?} in {key}: {e}"))))
        .collect()
}
