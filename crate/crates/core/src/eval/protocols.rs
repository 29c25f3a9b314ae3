use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{attribute_estimation, metrics_at_k, period_recommendation, rank_in_scores, top_k};
use crate::model::{Model, SessionInput};
use crate::retrieval::{PatternStore, RetrievalConfig};
use crate::sessions::{ItemCatalog, Session};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Future-click horizons for period recommendation.
    pub periods: Vec<usize>,
    /// Score every prefix of a session rather than only the last one.
    pub prefix_expansion: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![10, 20],
            periods: vec![3, 5, 10],
            prefix_expansion: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() {
            return Err(Error::Config("eval.ks must not be empty".into()));
        }
        if self.ks.contains(&0) || self.periods.contains(&0) {
            return Err(Error::Config("eval cutoffs must be positive".into()));
        }
        Ok(())
    }
}

/// One line of a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub protocol: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub hits: f64,
    pub ndcg: f64,
    pub mrr: f64,
    /// Future-click horizon (period protocol only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Attribute type (attribute protocol only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    /// Evaluated examples.
    #[serde(default)]
    pub count: usize,
}

/// Prefix length `len` of `session`, and what follows it.
fn cut_points(session: &Session, prefix_expansion: bool) -> Vec<usize> {
    let l = session.items.len();
    if l < 2 {
        return Vec::new();
    }
    if prefix_expansion {
        (1..l).collect()
    } else {
        vec![l - 1]
    }
}

struct Scored {
    session: usize,
    cut: usize,
    top: Vec<usize>,
    rank: usize,
}

/// Runs the next-item, attribute and period protocols over `sessions`.
pub fn evaluate(
    model: &Model,
    sessions: &[Session],
    catalog: &ItemCatalog,
    stores: &[PatternStore],
    retrieval: &RetrievalConfig,
    config: &EvalConfig,
) -> Result<Vec<ReportLine>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = sessions
        .iter()
        .enumerate()
        .flat_map(|(i, s)| cut_points(s, config.prefix_expansion).into_iter().map(move |c| (i, c)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::Undefined("no session has a next item to predict".into()));
    }
    let depth = config
        .ks
        .iter()
        .chain(std::iter::once(&10))
        .copied()
        .max()
        .unwrap_or(10);
    let scored: Vec<Scored> = jobs
        .par_iter()
        .map(|&(i, cut)| {
            let items = &sessions[i].items;
            let input = SessionInput::build(
                &items[..cut],
                catalog,
                stores,
                retrieval,
                model.config().max_neighbors,
            )?;
            let scores = model.score(&input)?;
            Ok(Scored {
                session: i,
                cut,
                top: top_k(&scores, depth),
                rank: rank_in_scores(&scores, items[cut]),
            })
        })
        .collect::<Result<_>>()?;

    let mut lines = Vec::new();
    let ranks: Vec<Option<usize>> = scored.iter().map(|s| Some(s.rank)).collect();
    for &k in &config.ks {
        let m = metrics_at_k(&ranks, k)?;
        lines.push(ReportLine {
            protocol: "next_item".into(),
            k,
            hits: m.hits,
            ndcg: m.ndcg,
            mrr: m.mrr,
            n: None,
            attribute: None,
            count: m.count,
        });
    }
    for (m, name) in catalog.schema().iter().enumerate() {
        for &k in &config.ks {
            let ranks: Vec<Option<usize>> = scored
                .iter()
                .map(|s| {
                    let target = sessions[s.session].items[s.cut];
                    attribute_estimation(&s.top[..k.min(s.top.len())], catalog, target, m)
                })
                .collect();
            let r = metrics_at_k(&ranks, k)?;
            lines.push(ReportLine {
                protocol: "attribute".into(),
                k,
                hits: r.hits,
                ndcg: r.ndcg,
                mrr: r.mrr,
                n: None,
                attribute: Some(name.clone()),
                count: r.count,
            });
        }
    }
    for &n in &config.periods {
        let (mut recall, mut ndcg, mut mrr, mut count) = (0.0, 0.0, 0.0, 0);
        for s in &scored {
            let items = &sessions[s.session].items;
            let future = &items[s.cut..(s.cut + n).min(items.len())];
            if let Some((r, g, f)) = period_recommendation(&s.top[..10.min(s.top.len())], future) {
                recall += r;
                ndcg += g;
                mrr += f;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        lines.push(ReportLine {
            protocol: "period".into(),
            k: 10,
            hits: recall / c,
            ndcg: ndcg / c,
            mrr: mrr / c,
            n: Some(n),
            attribute: None,
            count,
        });
    }
    Ok(lines)
}

pub fn write_reports(path: &Path, lines: &[ReportLine]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportLine>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingDependency {
            path: path.to_owned(),
            hint: "run `eval` first".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
