//! CART regression trees over pre-binned features.
//!
//! Each feature is binned once per fit: features with at most
//! [`MAX_BINS`] distinct values get one bin per value (exact splits), others
//! get quantile bins. Split search accumulates per-bin target sums, so each
//! tree level costs O(rows x candidate features).

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::FeatureMatrix;

pub const MAX_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Column-major bin codes plus the split threshold after each bin.
pub struct BinnedFeatures {
    bins: Vec<Vec<u8>>,
    thresholds: Vec<Vec<f64>>,
}

impl BinnedFeatures {
    pub fn new(x: &FeatureMatrix) -> Self {
        let mut bins = Vec::with_capacity(x.cols);
        let mut thresholds = Vec::with_capacity(x.cols);
        for j in 0..x.cols {
            let mut sorted: Vec<f64> = x.column(j).collect();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let cuts: Vec<f64> = if sorted.len() <= MAX_BINS {
                sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..MAX_BINS)
                    .map(|q| {
                        let k = q * sorted.len() / MAX_BINS;
                        0.5 * (sorted[k - 1] + sorted[k])
                    })
                    .collect();
                c.dedup();
                c
            };
            let codes = x.column(j).map(|v| cuts.partition_point(|&t| t < v) as u8).collect();
            bins.push(codes);
            thresholds.push(cuts);
        }
        BinnedFeatures { bins, thresholds }
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` considers all.
    pub max_features: Option<usize>,
}

struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// Grows one tree on the rows listed in `rows` (repeats allowed, as produced
/// by bootstrap sampling).
pub fn grow(
    binned: &BinnedFeatures,
    y: &[f64],
    rows: Vec<usize>,
    params: TreeParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = Vec::new();
    let min_leaf = params.min_leaf.max(1);
    let mut hist_sum = vec![0.0; MAX_BINS];
    let mut hist_cnt = vec![0usize; MAX_BINS];
    // explicit stack of (node slot, rows, depth)
    nodes.push(Node::Leaf { value: 0.0 });
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
        if depth >= params.max_depth || n < 2 * min_leaf || constant {
            nodes[slot] = Node::Leaf { value: mean };
            continue;
        }
        let p = binned.n_features();
        let candidates: Vec<usize> = match params.max_features {
            Some(k) if k < p => {
                let mut c = sample(rng, p, k.max(1)).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p).collect(),
        };
        let parent_score = sum * sum / n as f64;
        let mut best: Option<Best> = None;
        for &f in &candidates {
            let nb = binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            hist_sum[..nb].fill(0.0);
            hist_cnt[..nb].fill(0);
            let codes = &binned.bins[f];
            for &r in &rows {
                let b = codes[r] as usize;
                hist_sum[b] += y[r];
                hist_cnt[b] += 1;
            }
            let (mut ls, mut lc) = (0.0, 0usize);
            for b in 0..nb - 1 {
                ls += hist_sum[b];
                lc += hist_cnt[b];
                let rc = n - lc;
                if lc < min_leaf {
                    continue;
                }
                if rc < min_leaf {
                    break;
                }
                let rs = sum - ls;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - parent_score;
                if gain > best.as_ref().map_or(1e-12 * parent_score.abs().max(1.0), |b| b.gain) {
                    best = Some(Best { feature: f, bin: b, gain });
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = Node::Leaf { value: mean };
            continue;
        };
        let codes = &binned.bins[best.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| (codes[r] as usize) <= best.bin);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] =
            Node::Split { feature: best.feature, threshold: binned.thresholds[best.feature][best.bin], left, right };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(depth: usize) -> TreeParams {
        TreeParams { max_depth: depth, min_leaf: 1, max_features: None }
    }

    #[test]
    fn stump_on_binary_feature() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let b = BinnedFeatures::new(&x);
        let t = grow(&b, &y, (0..4).collect(), params(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[1.0]), 10.0);
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn respects_min_leaf_and_depth() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i * i) as f64).collect();
        let x = FeatureMatrix::from_rows(&rows);
        let b = BinnedFeatures::new(&x);
        let p = TreeParams { max_depth: 3, min_leaf: 5, max_features: None };
        let t = grow(&b, &y, (0..40).collect(), p, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(t.depth() <= 3);
        // every leaf receives at least 5 training rows
        let mut counts = std::collections::HashMap::new();
        for r in &rows {
            let mut at = 0;
            while let Node::Split { feature, threshold, left, right } = t.nodes[at] {
                at = if r[feature] <= threshold { left } else { right };
            }
            *counts.entry(at).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5));
    }

    #[test]
    fn many_distinct_values_use_quantile_bins() {
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64 / 7.0]).collect();
        let x = FeatureMatrix::from_rows(&rows);
        let b = BinnedFeatures::new(&x);
        assert!(b.thresholds[0].len() < MAX_BINS);
        assert!(b.bins[0].windows(2).all(|w| w[0] <= w[1]));
    }
}
