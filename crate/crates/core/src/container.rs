//! Shared pieces of the on-disk layout: a line-oriented `manifest` of
//! `key value...` pairs plus raw little-endian binary blobs.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{format_err, Error, Result};

pub const MANIFEST_FILE: &str = "manifest";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| format_err(format!("manifest lacks `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| format_err(format!("manifest `{key}` has unparsable value `{raw}`")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            if !v.is_empty() {
                out.push(' ');
                out.push_str(v);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| match l.split_once(char::is_whitespace) {
                Some((k, v)) => (k.to_string(), v.trim().to_string()),
                None => (l.to_string(), String::new()),
            })
            .collect();
        Self { entries }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self::parse_text(&text))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), self.render().as_bytes())
    }

    /// Checks the `format` line against the expected kind and version.
    pub fn expect_format(&self, kind: &str, version: u32) -> Result<()> {
        let found = self.require("format")?;
        let expected = format!("{kind} {version}");
        if found != expected {
            return Err(format_err(format!("expected format `{expected}`, found `{found}`")));
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn f32_to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_bytes(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(format_err(format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn f64_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(format_err(format!("{} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Run-length lines `start end value`, one per maximal run whose value
/// differs from `default`.
pub fn render_runs(labels: &[i8], default: i8) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < labels.len() {
        let v = labels[i];
        let mut j = i + 1;
        while j < labels.len() && labels[j] == v {
            j += 1;
        }
        if v != default {
            out.push_str(&format!("{i} {j} {v}\n"));
        }
        i = j;
    }
    out
}

/// Parses `start end value` lines and expands them over `len` samples.
/// Intervals must be sorted, non-overlapping and inside `[0, len)`.
pub fn expand_runs(text: &str, len: usize, default: i8, allowed: &[i8], what: &str) -> Result<Vec<i8>> {
    let mut labels = vec![default; len];
    let mut last_end = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || format_err(format!("{what} line {}: expected `start end value`, got `{line}`", n + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let start: usize = fields[0].parse().map_err(|_| bad())?;
        let end: usize = fields[1].parse().map_err(|_| bad())?;
        let value: i8 = fields[2].parse().map_err(|_| bad())?;
        if start >= end || end > len {
            return Err(crate::error::invalid(format!(
                "{what} interval [{start}, {end}) outside [0, {len})"
            )));
        }
        if start < last_end {
            return Err(crate::error::invalid(format!(
                "{what} intervals overlap or are unsorted at [{start}, {end})"
            )));
        }
        if !allowed.contains(&value) {
            return Err(crate::error::invalid(format!("{what} value {value} not in {allowed:?}")));
        }
        labels[start..end].fill(value);
        last_end = end;
    }
    Ok(labels)
}
