//! Self-describing text checkpoint: metadata key/values plus named arrays.
//!
//! ```text
//! mbrl-checkpoint 1
//! meta <key> <value>
//! array <name> <ndim> <dim>...
//! <values separated by spaces>
//! ```
//!
//! Values are written in shortest round-trip decimal form, so load(save(x))
//! is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::{Error, Result};

const MAGIC: &str = "mbrl-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn from_array1(name: impl Into<String>, a: &Array1<f64>) -> Self {
        Self {
            name: name.into(),
            shape: vec![a.len()],
            data: a.to_vec(),
        }
    }

    pub fn from_array2(name: impl Into<String>, a: &Array2<f64>) -> Self {
        Self {
            name: name.into(),
            shape: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array1(&self) -> Result<Array1<f64>> {
        match self.shape[..] {
            [_] => Ok(Array1::from(self.data.clone())),
            _ => Err(Error::parse(format!("`{}` has shape {:?}, expected 1-D", self.name, self.shape))),
        }
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        match self.shape[..] {
            [r, c] => Array2::from_shape_vec((r, c), self.data.clone()).map_err(|e| Error::parse(e.to_string())),
            _ => Err(Error::parse(format!("`{}` has shape {:?}, expected 2-D", self.name, self.shape))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(format!("checkpoint is missing meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|e| Error::parse(format!("meta `{key}` = `{raw}`: {e}")))
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::parse(format!("checkpoint is missing array `{name}`")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::invalid(format!("meta entry `{k}` cannot be serialized")));
            }
            writeln!(w, "meta {k} {v}")?;
        }
        for a in &self.arrays {
            let dims: Vec<String> = a.shape.iter().map(usize::to_string).collect();
            writeln!(w, "array {} {} {}", a.name, a.shape.len(), dims.join(" "))?;
            let vals: Vec<String> = a.data.iter().map(f64::to_string).collect();
            writeln!(w, "{}", vals.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty checkpoint"))??;
        let mut head = header.split_whitespace();
        if head.next() != Some(MAGIC) {
            return Err(Error::parse(format!("not a checkpoint (header `{header}`)")));
        }
        let version: u32 = head
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse("missing checkpoint version"))?;
        if version != VERSION {
            return Err(Error::parse(format!("unsupported checkpoint version {version}")));
        }
        let mut ckpt = Checkpoint::default();
        while let Some(line) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("array ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| Error::parse("array without name"))?.to_string();
                let ndim: usize = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(format!("array `{name}` without ndim")))?;
                let shape: Vec<usize> = parts
                    .map(|d| d.parse().map_err(|_| Error::parse(format!("array `{name}`: bad dim `{d}`"))))
                    .collect::<Result<_>>()?;
                if shape.len() != ndim {
                    return Err(Error::parse(format!("array `{name}` declares {ndim} dims, lists {}", shape.len())));
                }
                let values = lines.next().ok_or_else(|| Error::parse(format!("array `{name}` has no data")))??;
                let data: Vec<f64> = values
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| Error::parse(format!("array `{name}`: bad value `{v}`"))))
                    .collect::<Result<_>>()?;
                if data.len() != shape.iter().product::<usize>() {
                    return Err(Error::parse(format!(
                        "array `{name}` has {} values for shape {shape:?}",
                        data.len()
                    )));
                }
                ckpt.arrays.push(NamedArray { name, shape, data });
            } else {
                return Err(Error::parse(format!("unexpected checkpoint line `{line}`")));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
