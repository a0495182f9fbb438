//! Sectioned whitespace tables used by the shipped dataset files.
//!
//! ```text
//! # comment
//! [section]
//! col0  col1  col2
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

#[derive(Debug, Default)]
pub(crate) struct Tables {
    pub source: String,
    sections: BTreeMap<String, Vec<Row>>,
}

impl Tables {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut tables = Tables {
            source: source.to_string(),
            sections: BTreeMap::new(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(source, line_no, "unterminated section header"))?
                    .trim()
                    .to_string();
                if tables.sections.contains_key(&name) {
                    return Err(Error::parse(source, line_no, format!("duplicate section [{name}]")));
                }
                tables.sections.insert(name.clone(), Vec::new());
                current = Some(name);
                continue;
            }
            let Some(section) = current.as_ref() else {
                return Err(Error::parse(source, line_no, "row outside of any section"));
            };
            tables.sections.get_mut(section).unwrap().push(Row {
                line: line_no,
                fields: line.split_whitespace().map(str::to_string).collect(),
            });
        }
        Ok(tables)
    }

    pub fn section(&self, name: &str) -> Result<&[Row]> {
        self.sections
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::parse(&self.source, 0, format!("missing section [{name}]")))
    }

    pub fn optional_section(&self, name: &str) -> &[Row] {
        self.sections.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn expect_width(&self, row: &Row, width: usize) -> Result<()> {
        if row.fields.len() != width {
            return Err(Error::parse(
                &self.source,
                row.line,
                format!("expected {width} columns, found {}", row.fields.len()),
            ));
        }
        Ok(())
    }

    pub fn field<T: FromStr>(&self, row: &Row, col: usize, what: &str) -> Result<T> {
        let raw = row
            .fields
            .get(col)
            .ok_or_else(|| Error::parse(&self.source, row.line, format!("missing column `{what}`")))?;
        raw.parse::<T>()
            .map_err(|_| Error::parse(&self.source, row.line, format!("bad value `{raw}` for `{what}`")))
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
