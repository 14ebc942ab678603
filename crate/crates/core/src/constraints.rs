//! The learned constraint set and the perturbation-validity machinery.
//!
//! A constraint set couples two relationship kinds mined from data:
//!
//! * bidirectional pairs: features whose columns are perfectly positively
//!   correlated must co-appear;
//! * cluster membership: a feature belonging to a multi-member forest
//!   cluster must appear with at least one other member of its cluster.
//!
//! A perturbed vector is judged feature by feature against the *final*
//! vector (base plus all additions), matching how validity is scored:
//! an added feature is satisfied when all its perfect partners are
//! present and, if clustered, some cluster mate is present too.
//!
//! Violations inside the raw base vector are reported but never "fixed";
//! base vectors are real samples.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::correlation::PhiGraph;
use crate::error::{Error, Result};
use crate::opf::OpfForest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub prototype: u32,
    pub members: Vec<u32>,
}

/// Which cluster mate the repair step adds when an added feature has none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepairPolicy {
    /// The mate with the highest direct phi to the feature (tie: lowest
    /// index). The most plausible companion.
    #[default]
    HighestPhi,
    /// The cluster prototype.
    Prototype,
}

/// The serialized artifact of constraint learning.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    n_features: usize,
    bidirectional: Vec<(u32, u32)>,
    partners: Vec<Vec<u32>>,
    cluster_of: Vec<Option<u32>>,
    clusters: Vec<Cluster>,
    cost: Vec<f64>,
    phi_within: Vec<Vec<(u32, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintFile {
    version: u32,
    n_features: usize,
    bidirectional: Vec<(u32, u32)>,
    clusters: Vec<Cluster>,
    cost: Vec<f64>,
}

impl ConstraintSet {
    /// Assembles the constraint set from a phi graph and a forest built on
    /// the same feature indexing.
    pub fn assemble(g: &PhiGraph, forest: &OpfForest) -> Result<ConstraintSet> {
        if g.n_features() != forest.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} features, forest has {}",
                g.n_features(),
                forest.n_features()
            )));
        }
        let clusters: Vec<Cluster> = forest
            .clusters()
            .into_iter()
            .zip(forest.prototypes())
            .map(|(members, &prototype)| Cluster { prototype, members })
            .collect();
        let cost = forest.costs().to_vec();
        let bidirectional = g.bidirectional_set().to_vec();
        Self::from_parts_with_graph(g.n_features(), bidirectional, clusters, cost, Some(g))
    }

    /// Builds a constraint set from explicit parts. `phi_within` rankings
    /// are derived from `graph` when given, otherwise left empty (repair
    /// then falls back to path-cost order).
    pub fn from_parts(
        n_features: usize,
        bidirectional: Vec<(u32, u32)>,
        clusters: Vec<Cluster>,
        cost: Vec<f64>,
    ) -> Result<ConstraintSet> {
        Self::from_parts_with_graph(n_features, bidirectional, clusters, cost, None)
    }

    fn from_parts_with_graph(
        n_features: usize,
        mut bidirectional: Vec<(u32, u32)>,
        mut clusters: Vec<Cluster>,
        cost: Vec<f64>,
        graph: Option<&PhiGraph>,
    ) -> Result<ConstraintSet> {
        if cost.len() != n_features {
            return Err(Error::DimensionMismatch(format!(
                "cost vector has {} entries for {} features",
                cost.len(),
                n_features
            )));
        }
        for &(i, j) in &bidirectional {
            if i as usize >= n_features || j as usize >= n_features {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j) as usize,
                    dim: n_features,
                });
            }
        }
        bidirectional = bidirectional
            .into_iter()
            .map(|(i, j)| if i <= j { (i, j) } else { (j, i) })
            .collect();
        bidirectional.sort_unstable();
        bidirectional.dedup();

        clusters.sort_by_key(|c| c.prototype);
        let mut cluster_of: Vec<Option<u32>> = vec![None; n_features];
        for (id, cluster) in clusters.iter_mut().enumerate() {
            cluster.members.sort_unstable();
            cluster.members.dedup();
            for &m in &cluster.members {
                if m as usize >= n_features {
                    return Err(Error::IndexOutOfRange {
                        index: m as usize,
                        dim: n_features,
                    });
                }
                if cluster_of[m as usize].is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "feature {m} belongs to two clusters"
                    )));
                }
                cluster_of[m as usize] = Some(id as u32);
            }
        }

        let mut partners: Vec<Vec<u32>> = vec![Vec::new(); n_features];
        for &(i, j) in &bidirectional {
            partners[i as usize].push(j);
            partners[j as usize].push(i);
        }
        for p in &mut partners {
            p.sort_unstable();
        }

        let mut phi_within: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_features];
        if let Some(g) = graph {
            for cluster in &clusters {
                for &f in &cluster.members {
                    let mut mates: Vec<(u32, f64)> = cluster
                        .members
                        .iter()
                        .filter(|&&m| m != f)
                        .filter_map(|&m| g.weight(f as usize, m as usize).map(|w| (m, w)))
                        .collect();
                    mates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    phi_within[f as usize] = mates;
                }
            }
        }

        Ok(ConstraintSet {
            n_features,
            bidirectional,
            partners,
            cluster_of,
            clusters,
            cost,
            phi_within,
        })
    }

    pub fn empty(n_features: usize) -> ConstraintSet {
        Self::from_parts(n_features, vec![], vec![], vec![0.0; n_features]).unwrap()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn bidirectional(&self) -> &[(u32, u32)] {
        &self.bidirectional
    }

    /// Perfect partners of a single feature.
    pub fn partners(&self, f: usize) -> &[u32] {
        &self.partners[f]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_of(&self, f: usize) -> Option<u32> {
        self.cluster_of[f]
    }

    pub fn cost(&self, f: usize) -> f64 {
        self.cost[f]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn phi_within(&self, f: usize) -> &[(u32, f64)] {
        &self.phi_within[f]
    }

    pub fn is_empty(&self) -> bool {
        self.bidirectional.is_empty() && self.clusters.iter().all(|c| c.members.len() < 2)
    }

    /// Canonical JSON (versioned, arrays ascending).
    pub fn to_json(&self) -> String {
        let file = ConstraintFile {
            version: 1,
            n_features: self.n_features,
            bidirectional: self.bidirectional.clone(),
            clusters: self.clusters.clone(),
            cost: self.cost.clone(),
        };
        serde_json::to_string_pretty(&file).expect("constraint serialization")
    }

    pub fn from_json(text: &str) -> Result<ConstraintSet> {
        let file: ConstraintFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(Error::InvalidParameter(format!(
                "unsupported constraint file version {}",
                file.version
            )));
        }
        Self::from_parts(
            file.n_features,
            file.bidirectional,
            file.clusters,
            file.cost,
        )
    }

    /// Re-derives the phi-within-cluster rankings from an edge list (the
    /// correlation dump), for constraint sets loaded from JSON.
    pub fn attach_phi_edges(&mut self, edges: &[(u32, u32, f64)]) {
        let mut weight = std::collections::HashMap::new();
        for &(i, j, w) in edges {
            weight.insert((i.min(j), i.max(j)), w);
        }
        for cluster in &self.clusters {
            for &f in &cluster.members {
                let mut mates: Vec<(u32, f64)> = cluster
                    .members
                    .iter()
                    .filter(|&&m| m != f)
                    .filter_map(|&m| weight.get(&(f.min(m), f.max(m))).map(|&w| (m, w)))
                    .collect();
                mates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                self.phi_within[f as usize] = mates;
            }
        }
    }

    /// True iff present feature `f` satisfies its constraints against the
    /// final vector `x_prime` (sorted). Unconstrained features are
    /// trivially satisfied.
    pub fn feature_satisfied(&self, x_prime: &[u32], f: u32) -> Result<bool> {
        if x_prime.binary_search(&f).is_err() {
            return Err(Error::InvalidParameter(format!(
                "feature {f} is not present in the vector under test"
            )));
        }
        Ok(self.feature_satisfied_unchecked(x_prime, f))
    }

    fn feature_satisfied_unchecked(&self, x_prime: &[u32], f: u32) -> bool {
        for &g in &self.partners[f as usize] {
            if x_prime.binary_search(&g).is_err() {
                return false;
            }
        }
        if let Some(cid) = self.cluster_of[f as usize] {
            let members = &self.clusters[cid as usize].members;
            if members.len() >= 2 {
                let has_mate = members
                    .iter()
                    .any(|&m| m != f && x_prime.binary_search(&m).is_ok());
                if !has_mate {
                    return false;
                }
            }
        }
        true
    }

    /// Constraints satisfaction rate of a perturbation: the fraction of
    /// added features satisfied against `base + added`. `None` when
    /// nothing was added.
    pub fn csr(&self, p: &Perturbation) -> Option<f64> {
        let added: Vec<u32> = p.added().collect();
        if added.is_empty() {
            return None;
        }
        let x_prime = p.result_vector();
        let satisfied = added
            .iter()
            .filter(|&&f| self.feature_satisfied_unchecked(&x_prime, f))
            .count();
        Some(satisfied as f64 / added.len() as f64)
    }

    /// Base features that violate their own constraints before any
    /// perturbation. Reported, never repaired.
    pub fn base_violations(&self, base: &[u32]) -> Vec<u32> {
        base.iter()
            .copied()
            .filter(|&f| !self.feature_satisfied_unchecked(base, f))
            .collect()
    }

    pub fn repair(&self, p: &Perturbation) -> Perturbation {
        self.repair_with(p, RepairPolicy::HighestPhi)
    }

    /// Extends a perturbation with side-effect features until every added
    /// feature satisfies its constraints.
    ///
    /// Bidirectional partners are mandatory and closed first; only then is
    /// a cluster mate added for the earliest added feature still lacking
    /// one, and the closure re-runs. A final reverse pass drops any
    /// side-effect added by this call that turned out redundant. The
    /// result always has csr = 1.
    pub fn repair_with(&self, p: &Perturbation, policy: RepairPolicy) -> Perturbation {
        let mut x: BTreeSet<u32> = p.base.iter().copied().collect();
        x.extend(p.primary_added.iter().copied());
        x.extend(p.side_effect_added.iter().copied());

        let mut added: Vec<u32> = p.added().collect();
        let mut new_side: Vec<u32> = Vec::new();
        let mut queue: VecDeque<u32> = added.iter().copied().collect();

        loop {
            // mandatory closure: every added feature needs all partners
            while let Some(f) = queue.pop_front() {
                for &g in &self.partners[f as usize] {
                    if x.insert(g) {
                        new_side.push(g);
                        added.push(g);
                        queue.push_back(g);
                    }
                }
            }
            // earliest added feature still lacking a cluster mate
            let violator = added.iter().copied().find(|&f| self.needs_mate(f, &x));
            let Some(f) = violator else { break };
            let mate = self.pick_mate(f, &x, policy);
            x.insert(mate);
            new_side.push(mate);
            added.push(mate);
            queue.push_back(mate);
        }

        // reverse-delete: drop side effects that no added feature needs
        let mut kept: Vec<bool> = vec![true; new_side.len()];
        for idx in (0..new_side.len()).rev() {
            let s = new_side[idx];
            x.remove(&s);
            let x_vec: Vec<u32> = x.iter().copied().collect();
            let still_valid = added
                .iter()
                .filter(|&&f| f != s)
                .all(|&f| self.feature_satisfied_unchecked(&x_vec, f));
            if still_valid {
                kept[idx] = false;
                added.retain(|&f| f != s);
            } else {
                x.insert(s);
            }
        }
        let surviving: Vec<u32> = new_side
            .into_iter()
            .zip(kept)
            .filter(|&(_, k)| k)
            .map(|(s, _)| s)
            .collect();

        let mut side_effect_added = p.side_effect_added.clone();
        side_effect_added.extend(surviving);
        Perturbation {
            base: p.base.clone(),
            primary_added: p.primary_added.clone(),
            side_effect_added,
        }
    }

    fn needs_mate(&self, f: u32, x: &BTreeSet<u32>) -> bool {
        let Some(cid) = self.cluster_of[f as usize] else {
            return false;
        };
        let members = &self.clusters[cid as usize].members;
        members.len() >= 2 && !members.iter().any(|&m| m != f && x.contains(&m))
    }

    /// Chooses the mate to add for `f`. Falls back to path-cost order and
    /// finally to the lowest index when no phi ranking is attached.
    fn pick_mate(&self, f: u32, x: &BTreeSet<u32>, policy: RepairPolicy) -> u32 {
        let cid = self.cluster_of[f as usize].expect("needs_mate implies a cluster");
        let cluster = &self.clusters[cid as usize];
        if policy == RepairPolicy::Prototype && cluster.prototype != f {
            return cluster.prototype;
        }
        if let Some(&(mate, _)) = self
            .phi_within(f as usize)
            .iter()
            .find(|(m, _)| *m != f && !x.contains(m))
        {
            return mate;
        }
        let mut candidates: Vec<u32> = cluster
            .members
            .iter()
            .copied()
            .filter(|&m| m != f && !x.contains(&m))
            .collect();
        candidates.sort_by(|&a, &b| {
            self.cost[b as usize]
                .total_cmp(&self.cost[a as usize])
                .then(a.cmp(&b))
        });
        candidates[0]
    }
}

/// An addition-only perturbation of a base feature vector, partitioned
/// into primary additions (chosen to move the detector) and side-effect
/// additions (required by the constraints).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub base: Vec<u32>,
    pub primary_added: Vec<u32>,
    pub side_effect_added: Vec<u32>,
}

impl Perturbation {
    pub fn new(base: Vec<u32>, primary_added: Vec<u32>) -> Perturbation {
        Perturbation {
            base,
            primary_added,
            side_effect_added: Vec::new(),
        }
    }

    /// All added features in addition order (primaries first).
    pub fn added(&self) -> impl Iterator<Item = u32> + '_ {
        self.primary_added
            .iter()
            .chain(self.side_effect_added.iter())
            .copied()
    }

    pub fn n_added(&self) -> usize {
        self.primary_added.len() + self.side_effect_added.len()
    }

    /// The final vector: base plus all additions, sorted.
    pub fn result_vector(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.base.iter().copied().chain(self.added()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Checks the structural invariants: additions absent from the base,
    /// primaries and side effects disjoint, no repeats.
    pub fn validate(&self) -> Result<()> {
        let base: BTreeSet<u32> = self.base.iter().copied().collect();
        let mut seen = BTreeSet::new();
        for f in self.added() {
            if base.contains(&f) {
                return Err(Error::InvalidParameter(format!(
                    "added feature {f} already present in the base vector"
                )));
            }
            if !seen.insert(f) {
                return Err(Error::InvalidParameter(format!(
                    "feature {f} added more than once"
                )));
            }
        }
        Ok(())
    }
}
