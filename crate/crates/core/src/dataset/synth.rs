//! Synthetic corpora with planted dependency structure.
//!
//! The generator plants two kinds of ground truth that the learning
//! pipeline is supposed to recover:
//!
//! * duplicate groups: features drawn as a single unit, so their columns
//!   are bitwise identical (perfect positive correlation);
//! * co-occurrence blocks: a latent activation is drawn per sample, and
//!   member features appear (only) when the block is active, giving strong
//!   within-block correlation and none across blocks.
//!
//! Blocks optionally carry a `core` subset with its own presence
//! probability and an extra class-neutral activation ("decoy"), which
//! lets a fixture hold the dense phi region and the class signal in
//! different features. Labels are drawn first; activation probabilities
//! are per class, so a block can be benign- or malware-indicating.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SparseBinaryDataset;
use crate::error::{Error, Result};

fn default_member_prob() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub members: Vec<usize>,
    pub activation_benign: f64,
    pub activation_malware: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub members: Vec<usize>,
    pub activation_benign: f64,
    pub activation_malware: f64,
    /// Presence probability of a plain member given the block is active.
    #[serde(default = "default_member_prob")]
    pub member_prob: f64,
    /// Optional per-member override of `member_prob`, parallel to
    /// `members`. Entries for core/duplicate positions are ignored.
    #[serde(default)]
    pub member_probs: Vec<f64>,
    /// Subsets of `members` drawn as single units (identical columns).
    #[serde(default)]
    pub duplicates: Vec<Vec<usize>>,
    /// Subset of `members` governed by `core_prob`/`core_decoy` instead.
    #[serde(default)]
    pub core: Vec<usize>,
    #[serde(default = "default_member_prob")]
    pub core_prob: f64,
    /// Probability of an extra, class-independent activation of the core.
    #[serde(default)]
    pub core_decoy: f64,
    /// Draw the whole core as a single unit (identical columns) instead
    /// of per-feature.
    #[serde(default)]
    pub core_shared: bool,
}

impl Default for Block {
    fn default() -> Self {
        Block {
            members: Vec::new(),
            activation_benign: 0.0,
            activation_malware: 0.0,
            member_prob: 1.0,
            member_probs: Vec::new(),
            duplicates: Vec::new(),
            core: Vec::new(),
            core_prob: 1.0,
            core_decoy: 0.0,
            core_shared: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_samples: usize,
    pub n_features: usize,
    /// Probability that a sample is labeled malicious.
    pub malware_fraction: f64,
    #[serde(default)]
    pub duplicate_groups: Vec<DuplicateGroup>,
    #[serde(default)]
    pub blocks: Vec<Block>,
    /// Presence probability for features not covered by any group/block.
    #[serde(default)]
    pub background: f64,
    /// Post-hoc flip probability applied to every cell.
    #[serde(default)]
    pub noise: f64,
}

impl PlantedSpec {
    /// Checks index ranges, probability ranges and that no feature is
    /// claimed by two planted structures.
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::InvalidSpec(format!("{name} = {v} not in [0,1]")))
            } else {
                Ok(())
            }
        };
        prob("malware_fraction", self.malware_fraction)?;
        prob("background", self.background)?;
        prob("noise", self.noise)?;

        let mut owner = vec![false; self.n_features];
        let mut claim = |f: usize| -> Result<()> {
            if f >= self.n_features {
                return Err(Error::InvalidSpec(format!(
                    "feature {f} out of range d={}",
                    self.n_features
                )));
            }
            if owner[f] {
                return Err(Error::InvalidSpec(format!(
                    "feature {f} appears in more than one planted structure"
                )));
            }
            owner[f] = true;
            Ok(())
        };

        for (gi, g) in self.duplicate_groups.iter().enumerate() {
            if g.members.len() < 2 {
                return Err(Error::InvalidSpec(format!(
                    "duplicate group {gi} needs at least 2 members"
                )));
            }
            prob("activation_benign", g.activation_benign)?;
            prob("activation_malware", g.activation_malware)?;
            for &f in &g.members {
                claim(f)?;
            }
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.members.is_empty() {
                return Err(Error::InvalidSpec(format!("block {bi} has no members")));
            }
            prob("activation_benign", b.activation_benign)?;
            prob("activation_malware", b.activation_malware)?;
            prob("member_prob", b.member_prob)?;
            prob("core_prob", b.core_prob)?;
            prob("core_decoy", b.core_decoy)?;
            if !b.member_probs.is_empty() {
                if b.member_probs.len() != b.members.len() {
                    return Err(Error::InvalidSpec(format!(
                        "block {bi}: member_probs has {} entries for {} members",
                        b.member_probs.len(),
                        b.members.len()
                    )));
                }
                for &p in &b.member_probs {
                    prob("member_probs", p)?;
                }
            }
            for &f in &b.members {
                claim(f)?;
            }
            // duplicates and core must stay inside the block and not overlap
            let mut special = vec![false; self.n_features];
            let mut inside = |f: usize, what: &str| -> Result<()> {
                if !b.members.contains(&f) {
                    return Err(Error::InvalidSpec(format!(
                        "block {bi}: {what} feature {f} is not a block member"
                    )));
                }
                if special[f] {
                    return Err(Error::InvalidSpec(format!(
                        "block {bi}: feature {f} claimed by two sub-structures"
                    )));
                }
                special[f] = true;
                Ok(())
            };
            for d in &b.duplicates {
                if d.len() < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "block {bi}: duplicate subgroup needs at least 2 members"
                    )));
                }
                for &f in d {
                    inside(f, "duplicate")?;
                }
            }
            for &f in &b.core {
                inside(f, "core")?;
            }
        }
        Ok(())
    }
}

/// Generates a dataset from a planted spec. Deterministic for a fixed
/// seed: the draw order is label, then duplicate groups, then blocks
/// (activation, decoy, duplicate subgroups, core, plain members), then
/// background features, then the noise pass, all in declaration order.
pub fn synth_planted(spec: &PlantedSpec, seed: u64) -> Result<SparseBinaryDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut covered = vec![false; spec.n_features];
    for g in &spec.duplicate_groups {
        for &f in &g.members {
            covered[f] = true;
        }
    }
    for b in &spec.blocks {
        for &f in &b.members {
            covered[f] = true;
        }
    }
    let background_features: Vec<usize> = (0..spec.n_features).filter(|&f| !covered[f]).collect();

    let mut rows = Vec::with_capacity(spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    let mut present = vec![false; spec.n_features];

    for _ in 0..spec.n_samples {
        present.iter_mut().for_each(|p| *p = false);
        let label = u8::from(rng.gen_bool(spec.malware_fraction));

        for g in &spec.duplicate_groups {
            let act = if label == 1 {
                g.activation_malware
            } else {
                g.activation_benign
            };
            if rng.gen_bool(act) {
                for &f in &g.members {
                    present[f] = true;
                }
            }
        }

        for b in &spec.blocks {
            let act = if label == 1 {
                b.activation_malware
            } else {
                b.activation_benign
            };
            let block_active = rng.gen_bool(act);
            let decoy_active = b.core_decoy > 0.0 && rng.gen_bool(b.core_decoy);

            if block_active {
                for d in &b.duplicates {
                    if rng.gen_bool(b.member_prob) {
                        for &f in d {
                            present[f] = true;
                        }
                    }
                }
            }
            if block_active || decoy_active {
                if b.core_shared {
                    if !b.core.is_empty() && rng.gen_bool(b.core_prob) {
                        for &f in &b.core {
                            present[f] = true;
                        }
                    }
                } else {
                    for &f in &b.core {
                        if rng.gen_bool(b.core_prob) {
                            present[f] = true;
                        }
                    }
                }
            }
            if block_active {
                let in_sub: Vec<usize> = b
                    .duplicates
                    .iter()
                    .flatten()
                    .chain(b.core.iter())
                    .copied()
                    .collect();
                for (idx, &f) in b.members.iter().enumerate() {
                    if in_sub.contains(&f) {
                        continue;
                    }
                    let p = b.member_probs.get(idx).copied().unwrap_or(b.member_prob);
                    if rng.gen_bool(p) {
                        present[f] = true;
                    }
                }
            }
        }

        if spec.background > 0.0 {
            for &f in &background_features {
                if rng.gen_bool(spec.background) {
                    present[f] = true;
                }
            }
        }

        if spec.noise > 0.0 {
            for p in present.iter_mut() {
                if rng.gen_bool(spec.noise) {
                    *p = !*p;
                }
            }
        }

        let row: Vec<u32> = present
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(f, _)| f as u32)
            .collect();
        rows.push(row);
        labels.push(label);
    }

    SparseBinaryDataset::new(spec.n_features, rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::dense_column;

    fn base_spec() -> PlantedSpec {
        PlantedSpec {
            n_samples: 500,
            n_features: 8,
            malware_fraction: 0.5,
            duplicate_groups: vec![DuplicateGroup {
                members: vec![0, 1],
                activation_benign: 0.4,
                activation_malware: 0.4,
            }],
            blocks: vec![Block {
                members: vec![2, 3, 4],
                activation_benign: 0.3,
                activation_malware: 0.3,
                member_prob: 0.9,
                ..Block::default()
            }],
            background: 0.1,
            noise: 0.0,
        }
    }

    #[test]
    fn duplicate_columns_are_identical_without_noise() {
        let ds = synth_planted(&base_spec(), 7).unwrap();
        assert_eq!(dense_column(&ds, 0), dense_column(&ds, 1));
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let a = synth_planted(&base_spec(), 42).unwrap();
        let b = synth_planted(&base_spec(), 42).unwrap();
        assert_eq!(a, b);
        let c = synth_planted(&base_spec(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overlapping_structures_rejected() {
        let mut spec = base_spec();
        spec.blocks[0].members = vec![1, 3, 4];
        let err = synth_planted(&spec, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn noise_breaks_duplicates() {
        let mut spec = base_spec();
        spec.noise = 0.2;
        let ds = synth_planted(&spec, 7).unwrap();
        assert_ne!(dense_column(&ds, 0), dense_column(&ds, 1));
    }

    #[test]
    fn block_members_only_appear_with_activation() {
        let mut spec = base_spec();
        spec.background = 0.0;
        spec.blocks[0].activation_benign = 0.0;
        spec.blocks[0].activation_malware = 0.0;
        let ds = synth_planted(&spec, 3).unwrap();
        for f in 2..=4 {
            assert!(dense_column(&ds, f).iter().all(|&v| v == 0));
        }
    }
}
