//! Ranking metrics, evaluation protocols and graph density statistics.

mod density;
mod protocols;

pub use density::{density_stats, DensityReport};
pub use protocols::{evaluate, read_reports, write_reports, EvalConfig, ReportLine};

use std::collections::BTreeSet;

use crate::sessions::ItemCatalog;
use crate::{Error, Result};

/// 1-based position of `target` in `ranked`.
pub fn rank_of<T: PartialEq>(target: &T, ranked: &[T]) -> Option<usize> {
    ranked.iter().position(|x| x == target).map(|p| p + 1)
}

/// Rank of `target` under descending scores, ties going to the lower item
/// index. Equivalent to its position in [`top_k`] over all items.
pub fn rank_in_scores(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(v, &x)| x > s || (x == s && v < target))
        .count()
}

/// The `k` best items by descending score, ties by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let by = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k, by);
        idx.truncate(k);
    }
    idx.sort_by(by);
    idx
}

/// Averages over evaluated examples at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub hits: f64,
    pub ndcg: f64,
    pub mrr: f64,
    pub count: usize,
}

/// Hits, NDCG (`1 / log2(1 + rank)`) and MRR at cutoff `k`; ranks past `k`
/// or missing count as zero.
pub fn metrics_at_k(ranks: &[Option<usize>], k: usize) -> Result<Metrics> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if ranks.is_empty() {
        return Err(Error::Undefined("no ranks to average".into()));
    }
    let (mut hits, mut ndcg, mut mrr) = (0.0, 0.0, 0.0);
    for r in ranks.iter().flatten().filter(|&&r| r >= 1 && r <= k) {
        hits += 1.0;
        ndcg += 1.0 / (1.0 + *r as f64).log2();
        mrr += 1.0 / *r as f64;
    }
    let n = ranks.len() as f64;
    Ok(Metrics {
        hits: hits / n,
        ndcg: ndcg / n,
        mrr: mrr / n,
        count: ranks.len(),
    })
}

/// Rank of the target item's attribute value among the values of `top`,
/// duplicates collapsed to their first occurrence.
pub fn attribute_estimation(top: &[usize], catalog: &ItemCatalog, target: usize, m: usize) -> Option<usize> {
    let want = catalog.attributes(target)[m];
    let mut seen = BTreeSet::new();
    top.iter()
        .map(|&v| catalog.attributes(v)[m])
        .filter(|&a| seen.insert(a))
        .position(|a| a == want)
        .map(|p| p + 1)
}

/// Recall against the unique future items, binary-relevance NDCG, and the
/// reciprocal rank of the first hit. `None` when `future` is empty.
pub fn period_recommendation(top: &[usize], future: &[usize]) -> Option<(f64, f64, f64)> {
    let unique: BTreeSet<usize> = future.iter().copied().collect();
    if unique.is_empty() {
        return None;
    }
    let mut dcg = 0.0;
    let mut found = 0;
    let mut first = None;
    for (j, v) in top.iter().enumerate() {
        if unique.contains(v) {
            found += 1;
            dcg += 1.0 / (2.0 + j as f64).log2();
            first.get_or_insert(j + 1);
        }
    }
    let ideal: f64 = (1..=unique.len().min(top.len()).max(1))
        .map(|j| 1.0 / (1.0 + j as f64).log2())
        .sum();
    Some((
        found as f64 / unique.len() as f64,
        dcg / ideal,
        first.map_or(0.0, |r| 1.0 / r as f64),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_cases() {
        assert_eq!(rank_of(&5, &[5, 1, 2]), Some(1));
        assert_eq!(rank_of(&9, &[5, 1, 2]), None);
        let ranked: Vec<u32> = (10..20).collect();
        assert_eq!(rank_of(&16, &ranked), Some(7));
    }

    #[test]
    fn worked_example() {
        let m = metrics_at_k(&[Some(1), None, Some(3)], 10).unwrap();
        assert!((m.hits - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.mrr - 4.0 / 9.0).abs() < 1e-12);
        assert!((m.ndcg - 0.5).abs() < 1e-12);
        assert_eq!(m.count, 3);
    }

    #[test]
    fn metric_edges() {
        let m = metrics_at_k(&[Some(1); 4], 5).unwrap();
        assert_eq!((m.hits, m.ndcg, m.mrr), (1.0, 1.0, 1.0));
        let m = metrics_at_k(&[Some(11)], 10).unwrap();
        assert_eq!((m.hits, m.ndcg, m.mrr), (0.0, 0.0, 0.0));
        assert!(matches!(metrics_at_k(&[], 10), Err(Error::Undefined(_))));
        assert!(metrics_at_k(&[Some(1)], 0).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let scores = [0.5, 0.9, 0.5, 0.1, 0.9];
        assert_eq!(top_k(&scores, 5), vec![1, 4, 0, 2, 3]);
        assert_eq!(top_k(&scores, 2), vec![1, 4]);
        assert_eq!(top_k(&scores, 9).len(), 5);
        for (pos, &v) in top_k(&scores, 5).iter().enumerate() {
            assert_eq!(rank_in_scores(&scores, v), pos + 1);
        }
    }

    fn catalog() -> ItemCatalog {
        let mut c = ItemCatalog::new(vec!["brand".into()]);
        for (i, b) in ["b1", "b1", "b2", "b3", "b2"].iter().enumerate() {
            c.insert(&format!("i{i}"), &[b]).unwrap();
        }
        c
    }

    #[test]
    fn attribute_ranks_after_dedup() {
        let c = catalog();
        assert_eq!(attribute_estimation(&[0, 1, 2, 3], &c, 4, 0), Some(2));
        assert_eq!(attribute_estimation(&[1, 3], &c, 0, 0), Some(1));
        assert_eq!(attribute_estimation(&[0, 1], &c, 3, 0), None);
    }

    #[test]
    fn period_cases() {
        let top: Vec<usize> = (0..10).collect();
        assert_eq!(period_recommendation(&top, &[0, 1, 2]), Some((1.0, 1.0, 1.0)));
        assert_eq!(period_recommendation(&top, &[20, 21]), Some((0.0, 0.0, 0.0)));
        assert_eq!(period_recommendation(&top, &[]), None);
        let (recall, ndcg, mrr) = period_recommendation(&top, &[1, 4, 33]).unwrap();
        assert!((recall - 2.0 / 3.0).abs() < 1e-12);
        let want = (1.0 / 3f64.log2() + 1.0 / 6f64.log2()) / (1.0 + 1.0 / 3f64.log2() + 0.5);
        assert!((ndcg - want).abs() < 1e-12);
        assert_eq!(mrr, 0.5);
    }
}
