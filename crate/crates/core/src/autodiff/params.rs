use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat parameter storage partitioned into named, contiguous segments.
///
/// Segments are laid out in registration order and tile `[0, len)` exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector {
    segments: IndexMap<String, Segment>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-filled segment and returns it.
    pub fn register(&mut self, name: impl Into<String>, len: usize) -> Result<Segment> {
        let name = name.into();
        if self.segments.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter segment `{name}`")));
        }
        let seg = Segment { offset: self.values.len(), len };
        self.values.resize(self.values.len() + len, 0.0);
        self.segments.insert(name, seg);
        Ok(seg)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, Segment)> {
        self.segments.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn segment(&self, name: &str) -> Result<Segment> {
        self.segments.get(name).copied().ok_or_else(|| Error::Config(format!("unknown parameter segment `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.segments.contains_key(name)
    }

    pub fn slice(&self, name: &str) -> Result<&[f64]> {
        let s = self.segment(name)?;
        Ok(&self.values[s.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let s = self.segment(name)?;
        Ok(&mut self.values[s.range()])
    }

    /// Indices belonging to segments whose name starts with `prefix`.
    pub fn indices_with_prefix(&self, prefix: &str) -> Vec<usize> {
        self.segments.iter().filter(|(k, _)| k.starts_with(prefix)).flat_map(|(_, s)| s.range()).collect()
    }

    /// Records a segment on `tape` as a `rows × cols` leaf.
    pub fn leaf(&self, tape: &Tape, name: &str, rows: usize, cols: usize) -> Result<Var> {
        let s = self.segment(name)?;
        if s.len != rows * cols {
            return Err(Error::Shape(format!("segment `{name}` has {} values, expected {rows}x{cols}", s.len)));
        }
        Ok(tape.param(s.offset, rows, cols, &self.values[s.range()]))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!("parameter {i} is not finite"))),
        }
    }

    /// Verifies the segment map tiles the value array.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for (name, s) in &self.segments {
            if s.offset != next {
                return Err(Error::Schema(format!("segment `{name}` starts at {} not {next}", s.offset)));
            }
            next += s.len;
        }
        if next != self.values.len() {
            return Err(Error::Schema(format!("segments cover {next} values but vector holds {}", self.values.len())));
        }
        self.check_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}
