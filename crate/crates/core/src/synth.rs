//! Seeded synthetic click logs with recurring attribute structure.
//!
//! Items are grouped into clusters of a few items each. A session picks a
//! cluster and walks it, mostly along a fixed successor order, so that
//! next items are partly predictable and attribute layers revisit values
//! (which creates the cycles the miner looks for).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sessions::{parse_sessions, ItemCatalog, Session, SessionRecord, DEFAULT_MAX_LEN};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sessions: usize,
    pub items: usize,
    pub days: i64,
    /// Attribute type names with their number of distinct values.
    pub attributes: Vec<(String, usize)>,
    pub cluster_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance of following the cluster's successor order instead of a
    /// uniform jump inside the cluster.
    pub follow: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sessions: 400,
            items: 60,
            days: 30,
            attributes: vec![("category".into(), 6), ("brand".into(), 10)],
            cluster_size: 5,
            min_len: 3,
            max_len: 8,
            follow: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items < 2 || self.cluster_size < 2 || self.cluster_size > self.items {
            return Err(Error::Config("synth needs 2 <= cluster_size <= items".into()));
        }
        if self.min_len < 2 || self.max_len < self.min_len || self.days < 1 {
            return Err(Error::Config("synth needs 2 <= min_len <= max_len and days >= 1".into()));
        }
        if self.attributes.iter().any(|(_, n)| *n == 0) {
            return Err(Error::Config("every attribute type needs a value".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Vec<String> {
        self.attributes.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// Session records in file order (ascending day, then id).
pub fn generate(config: &SynthConfig) -> Result<Vec<SessionRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let values: Vec<Vec<usize>> = (0..config.items)
        .map(|i| {
            let cluster = i / config.cluster_size;
            config
                .attributes
                .iter()
                .map(|(_, n)| {
                    // Items of one cluster share a small pool of values.
                    if rng.gen_bool(0.7) {
                        (cluster + (i % 2)) % n
                    } else {
                        rng.gen_range(0..*n)
                    }
                })
                .collect()
        })
        .collect();
    let clusters: Vec<Vec<usize>> = (0..config.items)
        .collect::<Vec<_>>()
        .chunks(config.cluster_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect();
    let mut out = Vec::with_capacity(config.sessions);
    for s in 0..config.sessions {
        let day = (s as i64 * config.days) / config.sessions.max(1) as i64;
        let cluster = &clusters[rng.gen_range(0..clusters.len())];
        let len = rng.gen_range(config.min_len..=config.max_len);
        let mut pos = rng.gen_range(0..cluster.len());
        let mut items = Vec::with_capacity(len);
        for _ in 0..len {
            items.push(cluster[pos]);
            pos = if rng.gen_bool(config.follow) {
                (pos + 1) % cluster.len()
            } else {
                rng.gen_range(0..cluster.len())
            };
        }
        let attrs: BTreeMap<String, Vec<String>> = config
            .attributes
            .iter()
            .enumerate()
            .map(|(m, (name, _))| {
                let col = items.iter().map(|&i| format!("{name}{}", values[i][m])).collect();
                (name.clone(), col)
            })
            .collect();
        out.push(SessionRecord {
            id: format!("s{s:05}"),
            day,
            items: items.iter().map(|i| format!("item{i:03}")).collect(),
            attrs,
        });
    }
    Ok(out)
}

/// Writes records as one JSON object per line.
pub fn write_records(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Generates and parses a corpus in one go.
pub fn corpus(config: &SynthConfig) -> Result<(ItemCatalog, Vec<Session>)> {
    let mut buf = Vec::new();
    for r in generate(config)? {
        serde_json::to_writer(&mut buf, &r)?;
        buf.push(b'\n');
    }
    parse_sessions(buf.as_slice(), &config.schema(), DEFAULT_MAX_LEN)
}
