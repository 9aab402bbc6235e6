//! Flat scenario files: one `section.key = value` per line, `#` starts a
//! comment, lists are comma separated. Every key must be consumed by the
//! schema; leftovers are reported as unknown.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct RawConfig {
    origin: String,
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line_no = no + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(parse_error(origin, line_no, format!("expected `key = value`, got `{body}`")));
            };
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) {
                return Err(parse_error(origin, line_no, format!("invalid key `{key}`")));
            }
            let entry = Entry { value: value.trim().to_string(), line: line_no };
            if let Some(first) = entries.insert(key.to_string(), entry) {
                return Err(parse_error(origin, line_no, format!("duplicate key `{key}` (first set on line {})", first.line)));
            }
        }
        Ok(RawConfig { origin: origin.to_string(), entries })
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub(crate) fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    /// Remove every key under `prefix.` and return the suffixes.
    pub(crate) fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, Entry)> {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(&dotted)).cloned().collect();
        keys.into_iter()
            .map(|k| {
                let e = self.entries.remove(&k).unwrap();
                (k[dotted.len()..].to_string(), e)
            })
            .collect()
    }

    /// Names `x` for which some key `prefix.x.*` exists, in sorted order.
    pub(crate) fn groups(&self, prefix: &str) -> Vec<String> {
        let dotted = format!("{prefix}.");
        let mut names: Vec<String> = self
            .entries
            .keys()
            .filter_map(|k| k.strip_prefix(&dotted))
            .filter_map(|rest| rest.split_once('.').map(|(name, _)| name.to_string()))
            .collect();
        names.dedup();
        names
    }

    pub(crate) fn error(&self, entry: &Entry, message: String) -> Error {
        parse_error(&self.origin, entry.line, message)
    }

    pub(crate) fn real(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => parse_real(&e.value).map(Some).map_err(|m| self.error(&e, format!("{key}: {m}"))),
        }
    }

    pub(crate) fn real_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    pub(crate) fn count(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| self.error(&e, format!("{key}: expected a non-negative integer, got `{}`", e.value))),
        }
    }

    pub(crate) fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                v => Err(self.error(&e, format!("{key}: expected true or false, got `{v}`"))),
            },
        }
    }

    pub(crate) fn text(&mut self, key: &str) -> Option<Entry> {
        self.take(key)
    }

    pub(crate) fn reals(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => parse_reals(&e.value).map(Some).map_err(|m| self.error(&e, format!("{key}: {m}"))),
        }
    }

    /// Fail on any key the schema did not consume.
    pub(crate) fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, e)) => Err(parse_error(&self.origin, e.line, format!("unknown key `{k}`"))),
        }
    }
}

fn parse_error(origin: &str, line: usize, message: String) -> Error {
    Error::Parse { path: origin.to_string(), line, message }
}

/// Real number, optionally written with `pi`: `0.5`, `pi`, `pi/2`,
/// `3*pi/4`, `-pi`.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (s, None),
    };
    let factor = |t: &str| -> std::result::Result<f64, String> {
        let t = t.trim();
        match t {
            "pi" => Ok(PI),
            "-pi" => Ok(-PI),
            _ => t.parse::<f64>().map_err(|_| format!("expected a number, got `{s}`")),
        }
    };
    let mut v = 1.0;
    for f in num.split('*') {
        v *= factor(f)?;
    }
    if let Some(d) = den {
        let d = factor(d)?;
        if d == 0.0 {
            return Err(format!("division by zero in `{s}`"));
        }
        v /= d;
    }
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

pub fn parse_reals(s: &str) -> std::result::Result<Vec<f64>, String> {
    let items = split_list(s);
    if items.is_empty() {
        return Err("empty list".into());
    }
    items.iter().map(|t| parse_real(t)).collect()
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Shortest text that parses back to exactly `v`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_reals(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_duplicates_and_unknowns() {
        let mut c = RawConfig::parse("# head\na.b = 1 # trailing\n\nc = x\n", "t").unwrap();
        assert_eq!(c.real("a.b").unwrap(), Some(1.0));
        assert!(matches!(c.clone().finish(), Err(Error::Parse { line: 4, .. })));
        assert_eq!(c.text("c").unwrap().value, "x");
        c.finish().unwrap();
        assert!(matches!(RawConfig::parse("a = 1\na = 2\n", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(RawConfig::parse("just words\n", "t").is_err());
    }

    #[test]
    fn pi_expressions() {
        assert_eq!(parse_real("pi/2").unwrap(), PI / 2.0);
        assert_eq!(parse_real("3*pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_real("-pi").unwrap(), -PI);
        assert_eq!(parse_real("2.5e-1").unwrap(), 0.25);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("two").is_err());
        assert_eq!(parse_reals("0, 1/8, 0.25").unwrap(), vec![0.0, 0.125, 0.25]);
    }

    #[test]
    fn real_formatting_round_trips() {
        for v in [0.1, PI / 2.0, 1e-300, 2.582, -0.0, 3.0] {
            assert_eq!(parse_real(&fmt_real(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn groups_lists_named_blocks() {
        let c = RawConfig::parse("state.cat.kind = cat\nstate.cat.theta = 1\nstate.fock.kind = dicke\n", "t").unwrap();
        assert_eq!(c.groups("state"), vec!["cat".to_string(), "fock".to_string()]);
    }
}
