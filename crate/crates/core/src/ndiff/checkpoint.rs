//! Plain-text parameter container.
//!
//! Layout, one item per line:
//!
//! ```text
//! sacfd-checkpoint 1
//! entries <count>
//! entry <name> <length>
//! meta <free text, may be empty>
//! <length lines, one f64 each>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a written
//! checkpoint reloads bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "sacfd-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub meta: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, meta: impl Into<String>, values: Vec<f64>) {
        self.entries.push(Entry {
            name: name.into(),
            meta: meta.into(),
            values,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "entries {}", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(s, "entry {} {}", e.name, e.values.len());
            let _ = writeln!(s, "meta {}", e.meta);
            for v in &e.values {
                let _ = writeln!(s, "{v}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing or unsupported header".into()));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("entries "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing entry count".into()))?;
        let mut out = Checkpoint::default();
        for _ in 0..count {
            let head = lines.next().ok_or_else(|| bad("truncated file".into()))?;
            let mut parts = head.split(' ');
            let (Some("entry"), Some(name), Some(len), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad entry line `{head}`")));
            };
            let len: usize = len.parse().map_err(|_| bad(format!("bad length in `{head}`")))?;
            let meta = lines
                .next()
                .and_then(|l| l.strip_prefix("meta").map(|m| m.trim_start_matches(' ').to_string()))
                .ok_or_else(|| bad(format!("missing meta line for `{name}`")))?;
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                let l = lines.next().ok_or_else(|| bad(format!("entry `{name}` truncated")))?;
                values.push(l.parse::<f64>().map_err(|e| bad(format!("`{l}`: {e}")))?);
            }
            out.push(name, meta, values);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_text(&text)
    }
}
