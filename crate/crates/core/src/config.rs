//! Plain-text `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored.
//! Keys may repeat only where the consumer allows it (e.g. sweep axes).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                msg: "empty key".into(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn parse_f64(entry: &Entry) -> Result<f64> {
    parse_number(&entry.value).ok_or_else(|| Error::Config {
        line: entry.line,
        msg: format!("`{}` is not a number for key `{}`", entry.value, entry.key),
    })
}

pub fn parse_usize(entry: &Entry) -> Result<usize> {
    entry.value.parse().map_err(|_| Error::Config {
        line: entry.line,
        msg: format!("`{}` is not a non-negative integer for key `{}`", entry.value, entry.key),
    })
}

/// Accepts plain floats and simple fractions such as `-1/3`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        return Some(num / den);
    }
    s.parse().ok()
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
