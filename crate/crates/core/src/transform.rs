//! The robust feature representation: one sigmoid-gated output bit per
//! multi-member cluster, pass-through for everything else.
//!
//! For a cluster with members `A` and per-member path costs `c_j`, the
//! output bit is
//!
//! ```text
//!     l = 1  iff  sigmoid( sum_{j in A, x_j = 1} c_j ) > 0.7
//! ```
//!
//! Prototypes carry cost 1 and `sigmoid(1) = 0.731 > 0.7`, so the
//! prototype alone always activates its cluster bit, while any single
//! member with cost below `ln(7/3) ~ 0.8473` cannot. The comparison is on
//! the sigmoid value, strictly greater than the threshold.
//!
//! Singleton and unassigned features pass through unchanged so the
//! detector keeps their signal; constant features are dropped. With an
//! empty constraint set the transform is the identity on non-constant
//! features.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dataset::SparseBinaryDataset;
use crate::error::{Error, Result};

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.7;

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// One gated output: the cluster members and their path costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterGate {
    pub output: u32,
    pub prototype: u32,
    pub members: Vec<u32>,
    pub costs: Vec<f64>,
}

/// The compiled transform from the original feature space to the robust
/// space. Immutable; `apply` is a pure function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub threshold: f64,
    pub clusters: Vec<ClusterGate>,
    /// `(output index, input feature)` pairs copied verbatim.
    pub passthrough: Vec<(u32, u32)>,
    /// Input features with no output (constant columns, and singletons
    /// when singleton dropping is requested).
    pub dropped: Vec<u32>,
}

impl RobustMap {
    pub fn build(cs: &ConstraintSet, constant_features: &[u32]) -> RobustMap {
        Self::build_with(cs, constant_features, DEFAULT_GATE_THRESHOLD, false)
    }

    /// Compiles the map. Cluster outputs come first (ascending prototype
    /// index), then pass-through outputs (ascending feature index), so an
    /// empty constraint set yields the identity on non-constant features.
    pub fn build_with(
        cs: &ConstraintSet,
        constant_features: &[u32],
        threshold: f64,
        drop_singletons: bool,
    ) -> RobustMap {
        let d = cs.n_features();
        let mut consumed = vec![false; d];
        let mut dropped: Vec<u32> = Vec::new();
        for &f in constant_features {
            consumed[f as usize] = true;
            dropped.push(f);
        }

        let mut clusters = Vec::new();
        let mut output = 0u32;
        for cluster in cs.clusters() {
            let members: Vec<u32> = cluster
                .members
                .iter()
                .copied()
                .filter(|&m| !consumed[m as usize])
                .collect();
            if members.len() < 2 {
                continue; // singleton clusters fall through to passthrough
            }
            for &m in &members {
                consumed[m as usize] = true;
            }
            let costs = members.iter().map(|&m| cs.cost(m as usize)).collect();
            clusters.push(ClusterGate {
                output,
                prototype: cluster.prototype,
                members,
                costs,
            });
            output += 1;
        }

        let mut passthrough = Vec::new();
        for (f, _) in consumed.iter().enumerate().filter(|(_, &used)| !used) {
            if drop_singletons {
                dropped.push(f as u32);
            } else {
                passthrough.push((output, f as u32));
                output += 1;
            }
        }
        dropped.sort_unstable();

        if !dropped.is_empty() {
            log::info!(
                "transform drops {} feature(s) with no output",
                dropped.len()
            );
        }

        RobustMap {
            in_dim: d,
            out_dim: output as usize,
            threshold,
            clusters,
            passthrough,
            dropped,
        }
    }

    /// Maps a present-feature set into the robust space.
    pub fn apply(&self, x: &[u32]) -> Vec<u32> {
        debug_assert!(x.windows(2).all(|w| w[0] < w[1]), "input must be sorted");
        let mut out = Vec::new();
        for gate in &self.clusters {
            let s: f64 = gate
                .members
                .iter()
                .zip(&gate.costs)
                .filter(|(m, _)| x.binary_search(m).is_ok())
                .map(|(_, &c)| c)
                .sum();
            if sigmoid(s) > self.threshold {
                out.push(gate.output);
            }
        }
        for &(output, feature) in &self.passthrough {
            if x.binary_search(&feature).is_ok() {
                out.push(output);
            }
        }
        out.sort_unstable();
        out
    }

    /// Transforms every row of a dataset, keeping labels.
    pub fn transform_dataset(&self, ds: &SparseBinaryDataset) -> Result<SparseBinaryDataset> {
        if ds.n_features() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "map expects {} input features, dataset has {}",
                self.in_dim,
                ds.n_features()
            )));
        }
        let rows: Vec<Vec<u32>> = ds.rows().iter().map(|row| self.apply(row)).collect();
        SparseBinaryDataset::new(self.out_dim, rows, ds.labels().to_vec())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialization")
    }

    pub fn from_json(text: &str) -> Result<RobustMap> {
        let map: RobustMap = serde_json::from_str(text)?;
        if map.out_dim != map.clusters.len() + map.passthrough.len() {
            return Err(Error::DimensionMismatch(format!(
                "map out_dim {} does not match {} clusters + {} passthrough",
                map.out_dim,
                map.clusters.len(),
                map.passthrough.len()
            )));
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Cluster;

    fn cs_with_clusters(n: usize, clusters: Vec<Cluster>, costs: Vec<f64>) -> ConstraintSet {
        ConstraintSet::from_parts(n, vec![], clusters, costs).unwrap()
    }

    #[test]
    fn output_counting() {
        // 2 clusters + 3 singletons -> out_dim 5
        let mut costs = vec![0.0; 7];
        costs[0] = 1.0;
        costs[1] = 0.6;
        costs[2] = 1.0;
        costs[3] = 0.5;
        let cs = cs_with_clusters(
            7,
            vec![
                Cluster {
                    prototype: 0,
                    members: vec![0, 1],
                },
                Cluster {
                    prototype: 2,
                    members: vec![2, 3],
                },
            ],
            costs,
        );
        let map = RobustMap::build(&cs, &[]);
        assert_eq!(map.out_dim, 5);
        assert_eq!(map.clusters.len(), 2);
        assert_eq!(map.passthrough.len(), 3);
    }

    #[test]
    fn identity_on_empty_constraints() {
        let cs = ConstraintSet::empty(6);
        let map = RobustMap::build(&cs, &[]);
        assert_eq!(map.out_dim, 6);
        let x = vec![0u32, 3, 5];
        assert_eq!(map.apply(&x), x);
    }

    #[test]
    fn cluster_entry_copies_costs() {
        let mut costs = vec![0.0; 3];
        costs[0] = 1.0;
        costs[1] = 0.6;
        let cs = cs_with_clusters(
            3,
            vec![Cluster {
                prototype: 0,
                members: vec![0, 1],
            }],
            costs,
        );
        let map = RobustMap::build(&cs, &[]);
        assert_eq!(map.clusters[0].members, vec![0, 1]);
        assert_eq!(map.clusters[0].costs, vec![1.0, 0.6]);
    }

    #[test]
    fn prototype_alone_activates_gate() {
        let mut costs = vec![0.0; 4];
        costs[0] = 1.0;
        costs[1] = 0.6;
        let cs = cs_with_clusters(
            4,
            vec![Cluster {
                prototype: 0,
                members: vec![0, 1],
            }],
            costs,
        );
        let map = RobustMap::build(&cs, &[]);
        // sigmoid(1) = 0.73106 > 0.7
        assert_eq!(map.apply(&[0]), vec![0]);
        // no member present: sigmoid(0) = 0.5, gate closed
        assert_eq!(map.apply(&[]), Vec::<u32>::new());
    }

    #[test]
    fn sub_threshold_members_do_not_activate() {
        // members with costs 0.3 and 0.4: sigmoid(0.7) = 0.6682 <= 0.7
        let mut costs = vec![0.0; 3];
        costs[0] = 1.0;
        costs[1] = 0.3;
        costs[2] = 0.4;
        let cs = cs_with_clusters(
            3,
            vec![Cluster {
                prototype: 0,
                members: vec![0, 1, 2],
            }],
            costs,
        );
        let map = RobustMap::build(&cs, &[]);
        assert_eq!(map.apply(&[1, 2]), Vec::<u32>::new());
        assert_eq!(map.apply(&[0, 1, 2]), vec![0]);
    }

    #[test]
    fn constants_are_dropped_and_renumbered() {
        let cs = ConstraintSet::empty(5);
        let map = RobustMap::build(&cs, &[2]);
        assert_eq!(map.out_dim, 4);
        assert_eq!(map.dropped, vec![2]);
        // features 3,4 shift down by one
        assert_eq!(map.apply(&[2, 3, 4]), vec![2, 3]);
    }

    #[test]
    fn monotone_in_additions() {
        let mut costs = vec![0.0; 5];
        costs[0] = 1.0;
        costs[1] = 0.5;
        costs[2] = 0.45;
        let cs = cs_with_clusters(
            5,
            vec![Cluster {
                prototype: 0,
                members: vec![0, 1, 2],
            }],
            costs,
        );
        let map = RobustMap::build(&cs, &[]);
        let before = map.apply(&[1]);
        let after = map.apply(&[1, 2]);
        for o in &before {
            assert!(after.contains(o));
        }
    }

    #[test]
    fn map_json_round_trip() {
        let mut costs = vec![0.0; 4];
        costs[0] = 1.0;
        costs[1] = 0.6;
        let cs = cs_with_clusters(
            4,
            vec![Cluster {
                prototype: 0,
                members: vec![0, 1],
            }],
            costs,
        );
        let map = RobustMap::build(&cs, &[3]);
        let loaded = RobustMap::from_json(&map.to_json()).unwrap();
        assert_eq!(loaded.to_json(), map.to_json());
        assert_eq!(loaded.apply(&[0, 2]), map.apply(&[0, 2]));
    }

    #[test]
    fn transformed_dataset_keeps_labels() {
        let cs = ConstraintSet::empty(3);
        let map = RobustMap::build(&cs, &[]);
        let ds = crate::dataset::parse_dense_csv("1,1,0,1\n0,0,1,0\n").unwrap();
        let out = map.transform_dataset(&ds).unwrap();
        assert_eq!(out.labels(), ds.labels());
        assert_eq!(out.row(0), ds.row(0));
    }
}
