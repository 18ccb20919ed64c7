use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

pub const DEFAULT_TOPK: [usize; 5] = [1, 5, 10, 20, 50];

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub k_list: Vec<usize>,
    /// Gallery indices per query, most similar first; ties go to the lower index.
    pub neighbors: Vec<Vec<usize>>,
    /// `hits[q][j]`: a same-class item is among the top `k_list[j]`.
    pub hits: Vec<Vec<bool>>,
    /// Fraction of queries with a hit, per `k_list` entry.
    pub accuracy: Vec<f64>,
}

impl RetrievalResult {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|j| self.accuracy[j])
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d > 0.0 {
        dot(a, b) / d
    } else {
        0.0
    }
}

/// Ranks the gallery by cosine similarity for every query.
pub fn retrieval_topk(
    queries: &[Vec<f64>],
    query_labels: &[usize],
    gallery: &[Vec<f64>],
    gallery_labels: &[usize],
    k_list: &[usize],
) -> Result<RetrievalResult> {
    if gallery.is_empty() {
        return Err(Error::config("retrieval gallery is empty"));
    }
    if queries.len() != query_labels.len() || gallery.len() != gallery_labels.len() {
        return Err(Error::shape("features and labels differ in count"));
    }
    if k_list.contains(&0) {
        return Err(Error::config("top-k needs k >= 1"));
    }
    let neighbors: Vec<Vec<usize>> = queries
        .par_iter()
        .map(|q| {
            let sims: Vec<f64> = gallery.iter().map(|g| cosine(q, g)).collect();
            let mut idx: Vec<usize> = (0..gallery.len()).collect();
            idx.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            idx
        })
        .collect();
    let hits: Vec<Vec<bool>> = neighbors
        .iter()
        .zip(query_labels)
        .map(|(ranked, &label)| {
            let first = ranked.iter().position(|&g| gallery_labels[g] == label);
            k_list.iter().map(|&k| first.is_some_and(|p| p < k)).collect()
        })
        .collect();
    let nq = queries.len().max(1) as f64;
    let accuracy = (0..k_list.len()).map(|j| hits.iter().filter(|h| h[j]).count() as f64 / nq).collect();
    Ok(RetrievalResult { k_list: k_list.to_vec(), neighbors, hits, accuracy })
}
