use rayon::prelude::*;

use crate::error::{Error, Result};

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::Degenerate("embedding with zero or non-finite norm".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Zero-based rank of each query's true key (same index) by cosine
/// similarity. A key ranks ahead when its similarity is strictly greater,
/// or equal with a lower index.
pub fn true_key_ranks(queries: &[Vec<f64>], keys: &[Vec<f64>]) -> Result<Vec<usize>> {
    if queries.len() != keys.len() {
        return Err(Error::Shape(format!(
            "{} queries vs {} keys",
            queries.len(),
            keys.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::EmptyDataset("retrieval set".into()));
    }
    let dim = queries[0].len();
    if queries.iter().chain(keys).any(|v| v.len() != dim) {
        return Err(Error::Shape("embeddings differ in dimension".into()));
    }
    let q = queries.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
    let k = keys.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    Ok(q.par_iter()
        .enumerate()
        .map(|(i, qi)| {
            let own = dot(qi, &k[i]);
            k.iter()
                .enumerate()
                .filter(|&(j, kj)| {
                    let s = dot(qi, kj);
                    s > own || (s == own && j < i)
                })
                .count()
        })
        .collect())
}

/// Fraction of queries whose true key ranks within the top `k`.
pub fn retrieval_topk(queries: &[Vec<f64>], keys: &[Vec<f64>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("retrieval", "k must be at least 1"));
    }
    let ranks = true_key_ranks(queries, keys)?;
    Ok(ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64)
}
