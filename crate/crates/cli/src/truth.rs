//! Ground-truth label files: one `record_id<TAB>label` per line, UTF-8.
//! Blank lines are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use latdiff_core::ClassLabel;

use crate::error::FormatError;

pub fn parse(text: &str) -> Result<HashMap<String, ClassLabel>, FormatError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FormatError::Truth { line: line_no, message };
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `record_id<TAB>label`".into()))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| err(format!("label {label:?} is not a non-negative integer")))?;
        if id.is_empty() {
            return Err(err("empty record id".into()));
        }
        if out.insert(id.to_string(), ClassLabel(label)).is_some() {
            return Err(err(format!("duplicate record id {id:?}")));
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<HashMap<String, ClassLabel>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse(&text)
}

/// Lines in the given order.
pub fn render<'a>(rows: impl IntoIterator<Item = (&'a str, ClassLabel)>) -> String {
    let mut s = String::new();
    for (id, label) in rows {
        let _ = writeln!(s, "{id}\t{}", label.0);
    }
    s
}
