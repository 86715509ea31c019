//! CSV trace: one manifest comment line, one header line, one row per step.
//!
//! Values use the shortest round-trip decimal form, so a trace read back
//! reproduces the simulated values bit for bit.

use std::io::{self, BufRead, Write};

use crate::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLayout {
    columns: Vec<String>,
}

impl TraceLayout {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub values: Vec<f64>,
}

impl TraceFrame {
    pub fn get(&self, layout: &TraceLayout, column: &str) -> Option<f64> {
        layout.index(column).map(|i| self.values[i])
    }
}

pub struct TraceWriter<W: Write> {
    out: W,
    width: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, layout: &TraceLayout, scenario: &str, hash: &str) -> io::Result<Self> {
        writeln!(
            out,
            "# manikin-trace version={TRACE_VERSION} scenario={scenario} hash={hash}"
        )?;
        writeln!(out, "{}", layout.columns().join(","))?;
        Ok(Self {
            out,
            width: layout.len(),
        })
    }

    pub fn write(&mut self, frame: &TraceFrame) -> io::Result<()> {
        debug_assert_eq!(frame.values.len(), self.width);
        let mut first = true;
        for v in &frame.values {
            if !first {
                self.out.write_all(b",")?;
            }
            first = false;
            write!(self.out, "{v}")?;
        }
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A trace read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `key=value` pairs of the manifest line.
    pub manifest: Vec<(String, String)>,
    pub layout: TraceLayout,
    pub rows: Vec<TraceFrame>,
}

impl Trace {
    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let bad = |msg: String| Error::schema("trace", msg);
        let manifest_line = lines.next().ok_or_else(|| bad("empty trace".into()))??;
        let manifest = manifest_line
            .strip_prefix("# manikin-trace")
            .ok_or_else(|| bad("missing manifest line".into()))?
            .split_whitespace()
            .filter_map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
            })
            .collect();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let layout = TraceLayout::new(header.split(',').map(str::to_string).collect());
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {i}: {e}")))?;
            if values.len() != layout.len() {
                return Err(bad(format!(
                    "row {i} has {} values, header has {}",
                    values.len(),
                    layout.len()
                )));
            }
            rows.push(TraceFrame { values });
        }
        Ok(Self {
            manifest,
            layout,
            rows,
        })
    }

    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.layout.index(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}
