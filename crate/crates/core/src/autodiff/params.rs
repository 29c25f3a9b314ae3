use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("parameter `{name}` defined twice")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.entries[i].1)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    shape: Vec<usize>,
}

/// Writes each array as a JSON header line followed by its values as
/// little-endian `f64`.
pub fn write_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (name, t) in params.iter() {
        serde_json::to_writer(
            &mut w,
            &Header {
                name: name.to_owned(),
                shape: t.shape().to_vec(),
            },
        )?;
        w.write_all(b"\n")?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingDependency {
            path: path.to_owned(),
            hint: "run `train` first".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut r = BufReader::new(file);
    let mut store = ParamStore::new();
    let mut header = Vec::new();
    loop {
        header.clear();
        if r.read_until(b'\n', &mut header)? == 0 {
            break;
        }
        let h: Header = serde_json::from_slice(&header).map_err(|e| Error::Parse {
            line: store.len() + 1,
            msg: format!("checkpoint header: {e}"),
        })?;
        let n: usize = h.shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(h.name, Tensor::new(h.shape, data)?)?;
    }
    Ok(store)
}
