//! Pairwise phi coefficients over binary features and the positive-weight
//! correlation graph.
//!
//! For two binary columns the 2x2 contingency table is
//!
//! ```text
//!             j=1   j=0
//!      i=1     a     b
//!      i=0     c     d        n = a+b+c+d
//! ```
//!
//! and the phi coefficient is
//!
//! ```text
//!      phi = (a*d - b*c) / sqrt((a+b)(c+d)(a+c)(b+d))
//! ```
//!
//! The numerator and the radicand are evaluated in exact integer
//! arithmetic; phi is undefined when any marginal factor is zero
//! (constant column).
//!
//! Only strictly positive phi values are materialized as graph edges:
//! the downstream constraint semantics consume positive dependencies
//! only, and since `phi > 0` implies `a > 0`, enumerating co-occurring
//! pairs via posting lists visits every edge. Perfect positive pairs are
//! detected with the integer predicate `b == 0 && c == 0 && a > 0 && d > 0`
//! rather than a floating-point comparison.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{FeatureStats, SparseBinaryDataset};
use crate::error::{Error, Result};

/// Joint presence/absence counts for an ordered feature pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Rows where both features are present.
    pub a: u64,
    /// Rows where only the first feature is present.
    pub b: u64,
    /// Rows where only the second feature is present.
    pub c: u64,
    /// Rows where both are absent.
    pub d: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// True iff the two columns are identical and non-constant.
    pub fn is_perfect_positive(&self) -> bool {
        self.b == 0 && self.c == 0 && self.a > 0 && self.d > 0
    }
}

/// Counts shared rows of two sorted posting lists.
fn intersection_size(xs: &[u32], ys: &[u32]) -> u64 {
    let mut n = 0u64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        match xs[i].cmp(&ys[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Builds the contingency table for features `i` and `j` from posting
/// lists: one sorted intersection plus the two presence counts.
pub fn contingency(
    ds: &SparseBinaryDataset,
    stats: &FeatureStats,
    i: usize,
    j: usize,
) -> Result<ContingencyTable> {
    if i == j {
        return Err(Error::SameFeature(i));
    }
    let dim = ds.n_features();
    for f in [i, j] {
        if f >= dim {
            return Err(Error::IndexOutOfRange { index: f, dim });
        }
    }
    let n = ds.n_samples() as u64;
    let a = intersection_size(stats.posting_list(i), stats.posting_list(j));
    let b = stats.presence_count(i) as u64 - a;
    let c = stats.presence_count(j) as u64 - a;
    let d = n - a - b - c;
    Ok(ContingencyTable { a, b, c, d })
}

/// Evaluates the phi coefficient. Returns `None` (undefined) when a
/// marginal factor is zero, i.e. one of the columns is constant.
pub fn phi(t: &ContingencyTable) -> Option<f64> {
    let row1 = t.a + t.b;
    let row0 = t.c + t.d;
    let col1 = t.a + t.c;
    let col0 = t.b + t.d;
    if row1 == 0 || row0 == 0 || col1 == 0 || col0 == 0 {
        return None;
    }
    let num = t.a as i128 * t.d as i128 - t.b as i128 * t.c as i128;
    let radicand = row1 as u128 * row0 as u128 * col1 as u128 * col0 as u128;
    Some(num as f64 / (radicand as f64).sqrt())
}

/// The positive-phi graph over features: symmetric adjacency with weights
/// in (0, 1], the exact perfect-positive pair set, and the constant
/// features excluded from everything.
#[derive(Debug, Clone)]
pub struct PhiGraph {
    n_features: usize,
    adjacency: Vec<Vec<(u32, f64)>>,
    perfect_pairs: Vec<(u32, u32)>,
    constant_features: Vec<u32>,
    n_edges: usize,
}

impl PhiGraph {
    /// Computes phi for every co-occurring feature pair and keeps edges
    /// with `phi > min_phi`. Parallel over the lower feature index;
    /// results are independent of the worker count.
    pub fn build(ds: &SparseBinaryDataset, min_phi: f64) -> Result<PhiGraph> {
        if !(0.0..1.0).contains(&min_phi) {
            return Err(Error::InvalidParameter(format!(
                "min_phi must be in [0,1), got {min_phi}"
            )));
        }
        let stats = FeatureStats::compute(ds);
        Self::build_with_stats(ds, &stats, min_phi)
    }

    pub fn build_with_stats(
        ds: &SparseBinaryDataset,
        stats: &FeatureStats,
        min_phi: f64,
    ) -> Result<PhiGraph> {
        if !(0.0..1.0).contains(&min_phi) {
            return Err(Error::InvalidParameter(format!(
                "min_phi must be in [0,1), got {min_phi}"
            )));
        }
        let d = ds.n_features();
        let n = ds.n_samples() as u64;

        // Per lower index: count co-occurrences with every higher index by
        // scanning the rows of the posting list, then evaluate phi.
        let per_feature: Vec<Vec<(u32, f64, bool)>> = (0..d)
            .into_par_iter()
            .map(|i| {
                let cnt_i = stats.presence_count(i) as u64;
                if cnt_i == 0 || cnt_i == n {
                    return Vec::new();
                }
                let mut touched: Vec<u32> = Vec::new();
                let mut counts = vec![0u32; d];
                for &row_id in stats.posting_list(i) {
                    for &j in ds.row(row_id as usize) {
                        if (j as usize) > i {
                            if counts[j as usize] == 0 {
                                touched.push(j);
                            }
                            counts[j as usize] += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let mut edges = Vec::new();
                for &j in &touched {
                    let a = counts[j as usize] as u64;
                    let cnt_j = stats.presence_count(j as usize) as u64;
                    let t = ContingencyTable {
                        a,
                        b: cnt_i - a,
                        c: cnt_j - a,
                        d: n - a - (cnt_i - a) - (cnt_j - a),
                    };
                    if let Some(w) = phi(&t) {
                        if w > min_phi {
                            edges.push((j, w, t.is_perfect_positive()));
                        }
                    }
                }
                edges
            })
            .collect();

        let mut adjacency = vec![Vec::new(); d];
        let mut perfect_pairs = Vec::new();
        let mut n_edges = 0usize;
        for (i, edges) in per_feature.into_iter().enumerate() {
            for (j, w, perfect) in edges {
                adjacency[i].push((j, w));
                adjacency[j as usize].push((i as u32, w));
                if perfect {
                    perfect_pairs.push((i as u32, j));
                }
                n_edges += 1;
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable_by_key(|&(j, _)| j);
        }
        perfect_pairs.sort_unstable();

        let constant_features = stats.constant_features(ds.n_samples());
        if !constant_features.is_empty() {
            log::warn!(
                "{} constant feature(s) excluded from the correlation graph: {:?}",
                constant_features.len(),
                &constant_features[..constant_features.len().min(16)]
            );
        }

        Ok(PhiGraph {
            n_features: d,
            adjacency,
            perfect_pairs,
            constant_features,
            n_edges,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Positive-phi neighbors of `f`, sorted by neighbor index.
    pub fn neighbors(&self, f: usize) -> &[(u32, f64)] {
        &self.adjacency[f]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&(j as u32), |&(n, _)| n)
            .ok()
            .map(|pos| self.adjacency[i][pos].1)
    }

    /// The bidirectional relationship set: unordered pairs with exact
    /// perfect positive correlation.
    pub fn bidirectional_set(&self) -> &[(u32, u32)] {
        &self.perfect_pairs
    }

    /// Features excluded from the graph because their column is constant.
    pub fn constant_features(&self) -> &[u32] {
        &self.constant_features
    }

    /// Debug dump: `<i> <j> <phi>` lines sorted by `(i, j)`, nine
    /// significant digits.
    pub fn dump_edges(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_features {
            for &(j, w) in &self.adjacency[i] {
                if (j as usize) > i {
                    let _ = writeln!(out, "{} {} {:.8e}", i, j, w);
                }
            }
        }
        out
    }

    /// Parses lines produced by [`PhiGraph::dump_edges`].
    pub fn parse_edges(text: &str) -> Result<Vec<(u32, u32, f64)>> {
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let parse_err = |msg: &str| Error::Parse {
                line: idx + 1,
                msg: msg.into(),
            };
            let i: u32 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("bad edge source"))?;
            let j: u32 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("bad edge target"))?;
            let w: f64 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("bad edge weight"))?;
            edges.push((i, j, w));
        }
        Ok(edges)
    }

    /// Assembles a graph directly from an edge list; used by tests and by
    /// consumers that replay a dumped graph.
    pub fn from_edges(
        n_features: usize,
        edges: &[(u32, u32, f64)],
        perfect_pairs: Vec<(u32, u32)>,
    ) -> Result<PhiGraph> {
        let mut adjacency = vec![Vec::new(); n_features];
        for &(i, j, w) in edges {
            if i as usize >= n_features || j as usize >= n_features {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j) as usize,
                    dim: n_features,
                });
            }
            if i == j {
                return Err(Error::SameFeature(i as usize));
            }
            if w <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) has non-positive weight {w}"
                )));
            }
            adjacency[i as usize].push((j, w));
            adjacency[j as usize].push((i, w));
        }
        for adj in &mut adjacency {
            adj.sort_unstable_by_key(|&(j, _)| j);
        }
        let mut perfect_pairs = perfect_pairs;
        perfect_pairs.sort_unstable();
        Ok(PhiGraph {
            n_features,
            adjacency,
            perfect_pairs,
            constant_features: Vec::new(),
            n_edges: edges.len(),
        })
    }
}
