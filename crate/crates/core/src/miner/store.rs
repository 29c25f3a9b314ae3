use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributePattern, LabeledGraph};
use crate::{Error, Result};

/// One line of a pattern file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub code: String,
    pub support: usize,
    pub nodes: Vec<String>,
    pub edges: Vec<[usize; 2]>,
}

impl From<&AttributePattern> for PatternRecord {
    fn from(p: &AttributePattern) -> Self {
        PatternRecord {
            code: p.canonical_code.clone(),
            support: p.support,
            nodes: p.graph.labels().to_vec(),
            edges: p.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        }
    }
}

pub fn pattern_file_name(attribute_type: &str) -> String {
    format!("patterns.{attribute_type}.jsonl")
}

pub fn write_patterns(path: &Path, patterns: &[AttributePattern]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in patterns {
        serde_json::to_writer(&mut w, &PatternRecord::from(p))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a pattern file, checking every stored code against its graph.
pub fn read_patterns(path: &Path, attribute_type: &str) -> Result<Vec<AttributePattern>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingDependency {
            path: path.to_owned(),
            hint: "run `mine` first".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatternRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let graph = LabeledGraph::new(
            attribute_type,
            rec.nodes,
            rec.edges.iter().map(|e| (e[0], e[1])).collect(),
        )?;
        let pattern = AttributePattern::from_graph(graph, rec.support)?;
        if pattern.canonical_code != rec.code {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("stored code does not match graph ({})", pattern.canonical_code),
            });
        }
        out.push(pattern);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = LabeledGraph::new(
            "brand",
            vec!["b".into(), "a".into(), "c".into()],
            vec![(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        let p = AttributePattern::from_graph(g, 7).unwrap();
        let path = dir.path().join(pattern_file_name("brand"));
        write_patterns(&path, std::slice::from_ref(&p)).unwrap();
        assert_eq!(read_patterns(&path, "brand").unwrap(), vec![p]);
    }

    #[test]
    fn missing_file_is_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_patterns(&dir.path().join("nope.jsonl"), "x").unwrap_err();
        assert!(matches!(err, Error::MissingDependency { .. }));
    }
}
