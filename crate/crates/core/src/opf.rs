//! Modified Optimum-Path Forest over the phi graph.
//!
//! Prototypes are drawn from dense regions: connected components of the
//! subgraph restricted to edges above a strong-correlation threshold
//! (default 0.9), one uniformly random member per component of size >= 2.
//!
//! The forest then assigns every reachable feature to the prototype that
//! offers the best bottleneck path: the path value is the minimum edge
//! weight along the path, and each feature keeps the maximum such value
//! over all prototypes and paths (widest-path semantics). Prototypes have
//! self-cost 1, the maximum possible phi, so downstream consumers can rely
//! on a prototype alone carrying full weight. Missing edges are
//! non-traversable: a chain through an uncorrelated pair carries no
//! dependency meaning, so it is not given a zero-weight shortcut.
//!
//! The expansion is a best-first competition keyed on descending cost with
//! deterministic tie-breaking (higher candidate cost, then lower feature
//! index, then insertion order), so forests reproduce exactly across runs
//! and platforms.

use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correlation::PhiGraph;
use crate::error::{Error, Result};

/// Prototype features, one per dense group, plus the group membership of
/// every feature that sits in some dense group.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    prototypes: Vec<u32>,
    group_of: Vec<Option<u32>>,
    n_groups: usize,
}

impl PrototypeSet {
    /// Computes connected components of the `phi > dense_threshold`
    /// subgraph and picks one prototype uniformly at random (under `seed`)
    /// from each component with at least two members. Singleton components
    /// contribute nothing.
    pub fn select(g: &PhiGraph, dense_threshold: f64, seed: u64) -> Result<PrototypeSet> {
        if !(0.0 < dense_threshold && dense_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dense threshold must be in (0,1), got {dense_threshold}"
            )));
        }
        let d = g.n_features();
        let mut group_of: Vec<Option<u32>> = vec![None; d];
        let mut groups: Vec<Vec<u32>> = Vec::new();

        // BFS over the thresholded subgraph; components discovered in
        // ascending order of their smallest member.
        let mut stack = Vec::new();
        for start in 0..d {
            if group_of[start].is_some() {
                continue;
            }
            let dense_degree = g.neighbors(start).iter().any(|&(_, w)| w > dense_threshold);
            if !dense_degree {
                continue;
            }
            let gid = groups.len() as u32;
            let mut members = Vec::new();
            group_of[start] = Some(gid);
            stack.push(start as u32);
            while let Some(f) = stack.pop() {
                members.push(f);
                for &(nb, w) in g.neighbors(f as usize) {
                    if w > dense_threshold && group_of[nb as usize].is_none() {
                        group_of[nb as usize] = Some(gid);
                        stack.push(nb);
                    }
                }
            }
            members.sort_unstable();
            groups.push(members);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prototypes = Vec::with_capacity(groups.len());
        for members in &groups {
            let pick = members[rng.gen_range(0..members.len())];
            prototypes.push(pick);
        }
        prototypes.sort_unstable();

        Ok(PrototypeSet {
            prototypes,
            group_of,
            n_groups: groups.len(),
        })
    }

    /// Builds a prototype set from explicit feature indices (no dense
    /// groups recorded); used by tests and by replay paths.
    pub fn from_features(n_features: usize, mut prototypes: Vec<u32>) -> Result<PrototypeSet> {
        prototypes.sort_unstable();
        prototypes.dedup();
        if let Some(&max) = prototypes.last() {
            if max as usize >= n_features {
                return Err(Error::IndexOutOfRange {
                    index: max as usize,
                    dim: n_features,
                });
            }
        }
        Ok(PrototypeSet {
            prototypes,
            group_of: vec![None; n_features],
            n_groups: 0,
        })
    }

    pub fn prototypes(&self) -> &[u32] {
        &self.prototypes
    }

    pub fn group_of(&self, f: usize) -> Option<u32> {
        self.group_of[f]
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }
}

/// The assignment produced by the forest competition.
#[derive(Debug, Clone)]
pub struct OpfForest {
    cost: Vec<f64>,
    pred: Vec<Option<u32>>,
    root: Vec<Option<u32>>,
    prototypes: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    feature: u32,
    seq: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // max-heap: higher cost first, then lower feature index, then
        // earlier insertion
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| other.feature.cmp(&self.feature))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl OpfForest {
    /// Runs the prototype competition. With an empty prototype set every
    /// feature stays unassigned (allowed, with a warning).
    pub fn build(g: &PhiGraph, protos: &PrototypeSet) -> OpfForest {
        let d = g.n_features();
        let mut cost = vec![0.0f64; d];
        let mut pred: Vec<Option<u32>> = vec![None; d];
        let mut root: Vec<Option<u32>> = vec![None; d];
        let mut done = vec![false; d];

        if protos.is_empty() {
            log::warn!("empty prototype set: every feature is unassigned");
            return OpfForest {
                cost,
                pred,
                root,
                prototypes: Vec::new(),
            };
        }

        let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
        let mut seq = 0u64;
        for &p in protos.prototypes() {
            cost[p as usize] = 1.0;
            root[p as usize] = Some(p);
            heap.push(Candidate {
                cost: 1.0,
                feature: p,
                seq,
            });
            seq += 1;
        }

        while let Some(cand) = heap.pop() {
            let f = cand.feature as usize;
            if done[f] {
                continue;
            }
            done[f] = true;
            for &(nb, w) in g.neighbors(f) {
                let nb_idx = nb as usize;
                if done[nb_idx] {
                    continue;
                }
                let offered = cost[f].min(w);
                // strict improvement only: the first offer at a given
                // value wins, which realizes the documented tie order
                if offered > cost[nb_idx] {
                    cost[nb_idx] = offered;
                    pred[nb_idx] = Some(f as u32);
                    root[nb_idx] = root[f];
                    heap.push(Candidate {
                        cost: offered,
                        feature: nb,
                        seq,
                    });
                    seq += 1;
                }
            }
        }

        OpfForest {
            cost,
            pred,
            root,
            prototypes: protos.prototypes().to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.cost.len()
    }

    /// Bottleneck value of the best prototype path; 0 for unassigned
    /// features, 1 for prototypes.
    pub fn cost(&self, f: usize) -> f64 {
        self.cost[f]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn pred(&self, f: usize) -> Option<u32> {
        self.pred[f]
    }

    /// Conquering prototype of `f`, if any.
    pub fn root(&self, f: usize) -> Option<u32> {
        self.root[f]
    }

    pub fn prototypes(&self) -> &[u32] {
        &self.prototypes
    }

    pub fn is_assigned(&self, f: usize) -> bool {
        self.root[f].is_some()
    }

    /// Groups assigned features by conquering prototype. Cluster order is
    /// ascending prototype index; members are sorted.
    pub fn clusters(&self) -> Vec<Vec<u32>> {
        let mut by_root: Vec<Vec<u32>> = vec![Vec::new(); self.prototypes.len()];
        let proto_slot = |p: u32| self.prototypes.binary_search(&p).unwrap();
        for f in 0..self.cost.len() {
            if let Some(r) = self.root[f] {
                by_root[proto_slot(r)].push(f as u32);
            }
        }
        by_root
    }

    /// Unassigns every feature whose bottleneck is at or below `min_cost`.
    /// Prototypes stay. This is the escape hatch for features reachable
    /// only through near-zero correlations.
    pub fn filter_min_cost(&mut self, min_cost: f64) {
        if min_cost <= 0.0 {
            return;
        }
        for f in 0..self.cost.len() {
            if self.root[f] == Some(f as u32) {
                continue;
            }
            if self.root[f].is_some() && self.cost[f] < min_cost {
                self.root[f] = None;
                self.pred[f] = None;
                self.cost[f] = 0.0;
            }
        }
        // drop features whose predecessor chain was cut
        loop {
            let mut changed = false;
            for f in 0..self.cost.len() {
                if let Some(p) = self.pred[f] {
                    if self.root[p as usize].is_none() {
                        self.root[f] = None;
                        self.pred[f] = None;
                        self.cost[f] = 0.0;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Debug dump: `<feature> <root|-> <pred|-> <cost>` per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in 0..self.cost.len() {
            let root = self.root[f]
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".into());
            let pred = self.pred[f]
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{} {} {} {:.8e}", f, root, pred, self.cost[f]);
        }
        out
    }
}
