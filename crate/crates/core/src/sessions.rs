//! Session ingestion, filtering, splitting and graph construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::miner::LabeledGraph;
use crate::{Error, Result};

/// Default cap on session length; longer sessions keep their most recent actions.
pub const DEFAULT_MAX_LEN: usize = 50;

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub day: i64,
    pub items: Vec<String>,
    #[serde(default)]
    pub attrs: BTreeMap<String, Vec<String>>,
}

/// One line of a catalog export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub item: String,
    pub attrs: BTreeMap<String, String>,
}

/// Interned values of one attribute type, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeVocab {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl AttributeVocab {
    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&id) = self.index.get(value) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(value.to_owned());
        self.index.insert(value.to_owned(), id);
        id
    }

    pub fn get(&self, value: &str) -> Option<u32> {
        self.index.get(value).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.values[id as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

/// Items with their attribute values. Items are addressed by dense index in
/// insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemCatalog {
    schema: Vec<String>,
    vocabs: Vec<AttributeVocab>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    attrs: Vec<Vec<u32>>,
}

impl ItemCatalog {
    pub fn new(schema: Vec<String>) -> Self {
        let vocabs = vec![AttributeVocab::default(); schema.len()];
        ItemCatalog {
            schema,
            vocabs,
            ..Default::default()
        }
    }

    /// Adds an item, or checks that a known item carries the same values.
    pub fn insert(&mut self, item: &str, values: &[&str]) -> Result<usize> {
        if values.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "item `{item}` has {} attribute values, schema has {}",
                values.len(),
                self.schema.len()
            )));
        }
        if let Some(&idx) = self.index.get(item) {
            for (m, v) in values.iter().enumerate() {
                let known = self.vocabs[m].name(self.attrs[idx][m]);
                if known != *v {
                    return Err(Error::Schema(format!(
                        "item `{item}` has conflicting `{}` values `{known}` and `{v}`",
                        self.schema[m]
                    )));
                }
            }
            return Ok(idx);
        }
        let row = values
            .iter()
            .enumerate()
            .map(|(m, v)| self.vocabs[m].intern(v))
            .collect();
        let idx = self.ids.len();
        self.ids.push(item.to_owned());
        self.index.insert(item.to_owned(), idx);
        self.attrs.push(row);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn num_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    pub fn vocab(&self, m: usize) -> &AttributeVocab {
        &self.vocabs[m]
    }

    pub fn item_id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    /// Attribute value ids of an item, one per attribute type.
    pub fn attributes(&self, idx: usize) -> &[u32] {
        &self.attrs[idx]
    }

    pub fn attribute_value(&self, idx: usize, m: usize) -> &str {
        self.vocabs[m].name(self.attrs[idx][m])
    }

    /// A catalog holding only `keep` (in ascending index order), plus the
    /// old→new index map.
    pub fn restrict(&self, keep: &BTreeSet<usize>) -> (ItemCatalog, HashMap<usize, usize>) {
        let mut out = ItemCatalog::new(self.schema.clone());
        let mut remap = HashMap::with_capacity(keep.len());
        for &old in keep {
            let values: Vec<&str> = (0..self.schema.len())
                .map(|m| self.attribute_value(old, m))
                .collect();
            let new = out
                .insert(self.item_id(old), &values)
                .expect("restricted catalog is consistent");
            remap.insert(old, new);
        }
        (out, remap)
    }

    pub fn records(&self) -> impl Iterator<Item = CatalogRecord> + '_ {
        (0..self.len()).map(move |idx| CatalogRecord {
            item: self.ids[idx].clone(),
            attrs: self
                .schema
                .iter()
                .enumerate()
                .map(|(m, name)| (name.clone(), self.attribute_value(idx, m).to_owned()))
                .collect(),
        })
    }
}

/// An ordered, repeatable item sequence. Items are catalog indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub id: String,
    pub day: i64,
    pub items: Vec<usize>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Keeps the most recent `max_len` actions.
    pub fn truncate_to_recent(&mut self, max_len: usize) {
        if self.items.len() > max_len {
            self.items.drain(..self.items.len() - max_len);
        }
    }

    pub fn to_record(&self, catalog: &ItemCatalog) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            day: self.day,
            items: self.items.iter().map(|&i| catalog.item_id(i).to_owned()).collect(),
            attrs: catalog
                .schema()
                .iter()
                .enumerate()
                .map(|(m, name)| {
                    let vals = self
                        .items
                        .iter()
                        .map(|&i| catalog.attribute_value(i, m).to_owned())
                        .collect();
                    (name.clone(), vals)
                })
                .collect(),
        }
    }
}

fn parse_record(line: &str, lineno: usize) -> Result<SessionRecord> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        msg: e.to_string(),
    })
}

fn lines<R: Read>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

/// Parses session lines, building the catalog from their attribute lists.
pub fn parse_sessions<R: Read>(
    reader: R,
    schema: &[String],
    max_len: usize,
) -> Result<(ItemCatalog, Vec<Session>)> {
    let mut catalog = ItemCatalog::new(schema.to_vec());
    let mut sessions = Vec::new();
    for (lineno, line) in lines(reader) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, lineno)?;
        if rec.items.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "session has no items".into(),
            });
        }
        for key in rec.attrs.keys() {
            if !schema.contains(key) {
                return Err(Error::Schema(format!(
                    "line {lineno}: unknown attribute type `{key}`"
                )));
            }
        }
        let mut columns = Vec::with_capacity(schema.len());
        for name in schema {
            let col = rec.attrs.get(name).ok_or_else(|| {
                Error::Schema(format!("line {lineno}: missing attribute type `{name}`"))
            })?;
            if col.len() != rec.items.len() {
                return Err(Error::Schema(format!(
                    "line {lineno}: `{name}` has {} values for {} items",
                    col.len(),
                    rec.items.len()
                )));
            }
            columns.push(col);
        }
        let mut items = Vec::with_capacity(rec.items.len());
        for (pos, item) in rec.items.iter().enumerate() {
            let values: Vec<&str> = columns.iter().map(|c| c[pos].as_str()).collect();
            let idx = catalog
                .insert(item, &values)
                .map_err(|e| Error::Schema(format!("line {lineno}: {e}")))?;
            items.push(idx);
        }
        let mut session = Session {
            id: rec.id,
            day: rec.day,
            items,
        };
        session.truncate_to_recent(max_len);
        sessions.push(session);
    }
    Ok((catalog, sessions))
}

/// Loads a session log, truncating sessions to [`DEFAULT_MAX_LEN`].
pub fn load_sessions(path: &Path, schema: &[String]) -> Result<(ItemCatalog, Vec<Session>)> {
    parse_sessions(File::open(path)?, schema, DEFAULT_MAX_LEN)
}

/// Reads session lines whose items must already be in `catalog`.
pub fn read_sessions(path: &Path, catalog: &ItemCatalog) -> Result<Vec<Session>> {
    let mut out = Vec::new();
    for (lineno, line) in lines(File::open(path)?) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(resolve_record(parse_record(&line, lineno)?, catalog)?);
    }
    Ok(out)
}

/// Resolves a parsed record against a fixed catalog.
pub fn resolve_record(rec: SessionRecord, catalog: &ItemCatalog) -> Result<Session> {
    let items = rec
        .items
        .iter()
        .map(|it| catalog.index_of(it).ok_or_else(|| Error::UnknownItem(it.clone())))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(Error::Input(format!("session `{}` has no items", rec.id)));
    }
    Ok(Session {
        id: rec.id,
        day: rec.day,
        items,
    })
}

pub fn write_sessions(path: &Path, sessions: &[Session], catalog: &ItemCatalog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sessions {
        serde_json::to_writer(&mut w, &s.to_record(catalog))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_catalog(path: &Path, catalog: &ItemCatalog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in catalog.records() {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_catalog(path: &Path, schema: &[String]) -> Result<ItemCatalog> {
    let mut catalog = ItemCatalog::new(schema.to_vec());
    for (lineno, line) in lines(File::open(path)?) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CatalogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if rec.attrs.len() != schema.len() {
            return Err(Error::Schema(format!(
                "line {lineno}: item `{}` has {} attribute values, schema has {}",
                rec.item,
                rec.attrs.len(),
                schema.len()
            )));
        }
        let values = schema
            .iter()
            .map(|name| {
                rec.attrs.get(name).map(String::as_str).ok_or_else(|| {
                    Error::Schema(format!("line {lineno}: missing attribute type `{name}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        catalog.insert(&rec.item, &values)?;
    }
    Ok(catalog)
}

/// Removes items seen on fewer than `min_days` distinct days, drops sessions
/// shorter than two, and repeats until nothing changes.
pub fn core_filter(sessions: &[Session], min_days: usize) -> Vec<Session> {
    let mut current: Vec<Session> = sessions.iter().filter(|s| s.len() >= 2).cloned().collect();
    loop {
        let mut days: HashMap<usize, HashSet<i64>> = HashMap::new();
        for s in &current {
            for &it in &s.items {
                days.entry(it).or_default().insert(s.day);
            }
        }
        let rare: HashSet<usize> = days
            .into_iter()
            .filter(|(_, d)| d.len() < min_days)
            .map(|(it, _)| it)
            .collect();
        if rare.is_empty() {
            return current;
        }
        current = current
            .into_iter()
            .filter_map(|mut s| {
                s.items.retain(|it| !rare.contains(it));
                (s.len() >= 2).then_some(s)
            })
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Session>,
    pub valid: Vec<Session>,
    pub test: Vec<Session>,
    /// Sessions with `day > valid_after` go to validation or test,
    /// those with `day > test_after` go to test.
    pub valid_after: i64,
    pub test_after: i64,
}

/// Splits by calendar day: the last `test_days` days form the test set, the
/// `valid_days` before them the validation set. Validation and test sessions
/// that mention an item absent from training are dropped.
pub fn split_by_day(sessions: &[Session], valid_days: i64, test_days: i64) -> Result<DatasetSplit> {
    if valid_days < 1 || test_days < 1 {
        return Err(Error::Config(
            "valid_days and test_days must both be at least 1".into(),
        ));
    }
    let last = sessions
        .iter()
        .map(|s| s.day)
        .max()
        .ok_or_else(|| Error::Config("cannot split an empty corpus".into()))?;
    let test_after = last - test_days;
    let valid_after = test_after - valid_days;
    let mut split = DatasetSplit {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        valid_after,
        test_after,
    };
    for s in sessions {
        if s.day > test_after {
            split.test.push(s.clone());
        } else if s.day > valid_after {
            split.valid.push(s.clone());
        } else {
            split.train.push(s.clone());
        }
    }
    if split.train.is_empty() {
        return Err(Error::Config(format!(
            "no training sessions on or before day {valid_after}"
        )));
    }
    let seen: HashSet<usize> = split.train.iter().flat_map(|s| s.items.iter().copied()).collect();
    let known = |s: &Session| s.items.iter().all(|it| seen.contains(it));
    split.valid.retain(known);
    split.test.retain(known);
    Ok(split)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    None,
    Indegree,
    Outdegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeStats {
    pub count: u32,
    /// Index of the latest source position of this transition.
    pub last_pos: usize,
}

/// Directed transition graph of one sequence. Node keys are whatever the
/// sequence holds (item indices or attribute value ids).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionGraph {
    /// Node keys in first-occurrence order.
    pub nodes: Vec<usize>,
    /// For each sequence position, the local node it maps to.
    pub position_nodes: Vec<usize>,
    /// Local (from, to) → stats. Self-loops included.
    pub edges: BTreeMap<(usize, usize), EdgeStats>,
    pub weight_mode: WeightMode,
}

impl SessionGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    /// Edge weights: raw counts, or counts normalized by the in/out degree
    /// (weighted, self-loops included) of the target/source node.
    pub fn weights(&self) -> Vec<((usize, usize), f64)> {
        let n = self.nodes.len();
        let mut out_deg = vec![0u32; n];
        let mut in_deg = vec![0u32; n];
        for (&(u, w), e) in &self.edges {
            out_deg[u] += e.count;
            in_deg[w] += e.count;
        }
        self.edges
            .iter()
            .map(|(&(u, w), e)| {
                let c = f64::from(e.count);
                let weight = match self.weight_mode {
                    WeightMode::None => c,
                    WeightMode::Indegree => c / f64::from(in_deg[w]),
                    WeightMode::Outdegree => c / f64::from(out_deg[u]),
                };
                ((u, w), weight)
            })
            .collect()
    }

    /// Undirected simple edge set (self-loops dropped), as ordered local pairs.
    pub fn undirected_edges(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .keys()
            .filter(|(u, w)| u != w)
            .map(|&(u, w)| (u.min(w), u.max(w)))
            .collect()
    }
}

pub fn to_session_graph(sequence: &[usize], weight_mode: WeightMode) -> SessionGraph {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut position_nodes = Vec::with_capacity(sequence.len());
    for &key in sequence {
        let id = *local.entry(key).or_insert_with(|| {
            nodes.push(key);
            nodes.len() - 1
        });
        position_nodes.push(id);
    }
    let mut edges: BTreeMap<(usize, usize), EdgeStats> = BTreeMap::new();
    for (pos, pair) in position_nodes.windows(2).enumerate() {
        let e = edges.entry((pair[0], pair[1])).or_insert(EdgeStats {
            count: 0,
            last_pos: pos,
        });
        e.count += 1;
        e.last_pos = pos;
    }
    SessionGraph {
        nodes,
        position_nodes,
        edges,
        weight_mode,
    }
}

/// Item graph plus one transition graph per attribute type.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexSessionGraph {
    pub base: SessionGraph,
    /// Node keys of layer `m` are attribute value ids of type `m`.
    pub layers: Vec<SessionGraph>,
    /// `anchors[m][v]` is the layer-`m` node of base node `v`.
    pub anchors: Vec<Vec<usize>>,
}

pub fn to_multiplex(items: &[usize], catalog: &ItemCatalog) -> Result<MultiplexSessionGraph> {
    if let Some(&bad) = items.iter().find(|&&it| it >= catalog.len()) {
        return Err(Error::UnknownItem(format!("#{bad}")));
    }
    let base = to_session_graph(items, WeightMode::None);
    let m_count = catalog.num_attributes();
    let mut layers = Vec::with_capacity(m_count);
    let mut anchors = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let projected: Vec<usize> = items
            .iter()
            .map(|&it| catalog.attributes(it)[m] as usize)
            .collect();
        let layer = to_session_graph(&projected, WeightMode::None);
        let mut anchor = vec![0; base.node_count()];
        for (pos, &v) in base.position_nodes.iter().enumerate() {
            anchor[v] = layer.position_nodes[pos];
        }
        layers.push(layer);
        anchors.push(anchor);
    }
    Ok(MultiplexSessionGraph {
        base,
        layers,
        anchors,
    })
}

impl MultiplexSessionGraph {
    /// Layer `m` as an undirected simple labeled graph, the miner's input.
    pub fn labeled_layer(&self, m: usize, catalog: &ItemCatalog) -> LabeledGraph {
        layer_to_labeled(&self.layers[m], m, catalog)
    }
}

pub fn layer_to_labeled(layer: &SessionGraph, m: usize, catalog: &ItemCatalog) -> LabeledGraph {
    let vocab = catalog.vocab(m);
    let labels = layer
        .nodes
        .iter()
        .map(|&v| vocab.name(v as u32).to_owned())
        .collect();
    LabeledGraph::new(
        catalog.schema()[m].clone(),
        labels,
        layer.undirected_edges().into_iter().collect(),
    )
    .expect("session layers are simple graphs")
}

/// The attribute-`m` layer of a session as a labeled graph.
pub fn session_layer(items: &[usize], m: usize, catalog: &ItemCatalog) -> LabeledGraph {
    let projected: Vec<usize> = items
        .iter()
        .map(|&it| catalog.attributes(it)[m] as usize)
        .collect();
    layer_to_labeled(&to_session_graph(&projected, WeightMode::None), m, catalog)
}
