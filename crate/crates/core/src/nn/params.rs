//! Named parameter collections and their on-disk form.
//!
//! File layout: optional `#key=value` metadata lines, a `name,offset,length`
//! CSV table, one blank line, then the PTEN blobs back to back. Offsets and
//! lengths are in bytes, relative to the first byte after the blank line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use privseg_tensor::io::{decode_pten, encode_pten};
use privseg_tensor::Tensor;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<ParamSet> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if name.is_empty() || name.contains([',', '\n', '\r']) {
                return Err(invalid(format!("bad parameter name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(invalid(format!("duplicate parameter name `{name}`")));
            }
        }
        Ok(ParamSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    pub(crate) fn check_layout(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_layout(other) {
            return Ok(());
        }
        let first = self
            .entries
            .iter()
            .zip(&other.entries)
            .find(|((a, x), (b, y))| a != b || x.shape() != y.shape())
            .map(|((a, x), (b, y))| format!("`{a}` {:?} vs `{b}` {:?}", x.shape(), y.shape()))
            .unwrap_or_else(|| format!("{} vs {} entries", self.len(), other.len()));
        Err(invalid(format!("{what}: parameter layout differs ({first})")))
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) using this set's names and shapes.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamSet> {
        if flat.len() != self.numel() {
            return Err(invalid(format!("flat vector has {} values, layout needs {}", flat.len(), self.numel())));
        }
        let mut at = 0;
        let mut entries = Vec::with_capacity(self.len());
        for (name, t) in &self.entries {
            let n = t.numel();
            entries.push((name.clone(), Tensor::new(flat[at..at + n].to_vec(), t.shape())?));
            at += n;
        }
        Ok(ParamSet { entries })
    }

    pub fn zeros_like(&self) -> ParamSet {
        self.unflatten(&vec![0.0; self.numel()]).expect("layout is self-consistent")
    }

    /// Fresh leaves that require grad, one per entry.
    pub fn leaves(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.requires_grad()).collect()
    }

    /// Renames every entry to `prefix + name`.
    pub fn prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (format!("{prefix}{n}"), t.clone())).collect(),
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    pub fn concat(&self, other: &ParamSet) -> Result<ParamSet> {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        ParamSet::new(entries)
    }

    pub fn to_bytes(&self, meta: &BTreeMap<String, String>) -> Result<Vec<u8>> {
        let mut head = String::new();
        for (k, v) in meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(invalid(format!("bad metadata entry {k:?}={v:?}")));
            }
            head.push_str(&format!("#{k}={v}\n"));
        }
        head.push_str("name,offset,length\n");
        let mut body = Vec::new();
        for (name, t) in &self.entries {
            let blob = encode_pten(t);
            head.push_str(&format!("{name},{},{}\n", body.len(), blob.len()));
            body.extend_from_slice(&blob);
        }
        head.push('\n');
        let mut out = head.into_bytes();
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(ParamSet, BTreeMap<String, String>)> {
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::Format("parameter file: missing end of table".into()))?;
        let text = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Format("parameter file: table is not UTF-8".into()))?;
        let body = &bytes[split + 2..];

        let mut meta = BTreeMap::new();
        let mut lines = text.lines();
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(kv) = line.strip_prefix('#') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("parameter file: bad metadata line {line:?}")))?;
                meta.insert(k.to_string(), v.to_string());
            } else {
                header = Some(line);
                break;
            }
        }
        if header != Some("name,offset,length") {
            return Err(Error::Format(format!("parameter file: expected header `name,offset,length`, got {header:?}")));
        }
        let mut entries = Vec::new();
        for line in lines {
            let bad = || Error::Format(format!("parameter file: bad table row {line:?}"));
            let mut cols = line.rsplitn(3, ',');
            let len: usize = cols.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let off: usize = cols.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let name = cols.next().ok_or_else(bad)?;
            let blob = off
                .checked_add(len)
                .and_then(|end| body.get(off..end))
                .ok_or_else(|| Error::Format(format!("parameter file: `{name}` points outside the data section")))?;
            entries.push((name.to_string(), decode_pten(blob)?));
        }
        Ok((ParamSet::new(entries)?, meta))
    }

    pub fn save(&self, path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
        fs::write(path, self.to_bytes(meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(ParamSet, BTreeMap<String, String>)> {
        ParamSet::from_bytes(&fs::read(path)?)
    }
}
