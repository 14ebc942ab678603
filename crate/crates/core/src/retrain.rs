//! Adversarial retraining: generate evading variants of training malware
//! under the learned constraints, augment, and retrain from scratch.
//!
//! Variant diversity comes from seeded jitter of the greedy candidate
//! order (each pick drawn from the current top-q candidates), since a
//! deterministic greedy run would produce one variant per sample. Every
//! generated row keeps label 1: the variants remain malware.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attack::{attack_sample_jittered, AttackConfig};
use crate::dataset::SparseBinaryDataset;
use crate::detector::{train, Discriminant, Hyperparams, LinearModel};
use crate::error::{Error, Result};

pub const DEFAULT_JITTER_TOP_Q: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct RetrainConfig {
    /// Number of malware samples to perturb.
    pub k: usize,
    /// Adversarial variants attempted per selected sample.
    pub variants_per_sample: usize,
    /// Greedy jitter width for variant diversity.
    pub jitter_top_q: usize,
    pub seed: u64,
}

impl RetrainConfig {
    pub fn new(k: usize, variants_per_sample: usize, seed: u64) -> RetrainConfig {
        RetrainConfig {
            k,
            variants_per_sample,
            jitter_top_q: DEFAULT_JITTER_TOP_Q,
            seed,
        }
    }
}

fn variant_rng(seed: u64, sample: usize, variant: usize) -> ChaCha8Rng {
    let mix = seed
        ^ (sample as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (variant as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Generates an all-malware adversarial dataset: picks `k` detected
/// malware samples uniformly (seeded), attacks each up to
/// `variants_per_sample` times with jittered candidate order, and keeps
/// the distinct evading vectors.
pub fn generate_adv_set(
    model: &LinearModel,
    ds: &SparseBinaryDataset,
    attack_cfg: &AttackConfig,
    cfg: &RetrainConfig,
) -> Result<SparseBinaryDataset> {
    if cfg.variants_per_sample == 0 {
        return Err(Error::InvalidParameter(
            "variants_per_sample must be >= 1".into(),
        ));
    }
    let eligible: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| ds.label(i) == 1 && model.decision(ds.row(i)) >= 0.0)
        .collect();
    if eligible.len() < cfg.k {
        return Err(Error::NoEligible(format!(
            "need {} detected malware samples, found {}",
            cfg.k,
            eligible.len()
        )));
    }

    // seeded uniform choice without replacement
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = eligible;
    let mut selected = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        use rand::Rng;
        let at = rng.gen_range(0..pool.len());
        selected.push(pool.swap_remove(at));
    }
    selected.sort_unstable();

    let per_sample: Vec<Vec<Vec<u32>>> = selected
        .par_iter()
        .map(|&i| {
            let mut variants: Vec<Vec<u32>> = Vec::new();
            for v in 0..cfg.variants_per_sample {
                let mut vrng = variant_rng(cfg.seed, i, v);
                let res = attack_sample_jittered(
                    model,
                    ds.row(i),
                    attack_cfg,
                    &mut vrng,
                    cfg.jitter_top_q,
                )
                .expect("selected samples are detected");
                if res.evaded {
                    let row = res.perturbation.result_vector();
                    if !variants.contains(&row) {
                        variants.push(row);
                    }
                }
            }
            variants
        })
        .collect();

    let rows: Vec<Vec<u32>> = per_sample.into_iter().flatten().collect();
    let labels = vec![1u8; rows.len()];
    SparseBinaryDataset::new(ds.n_features(), rows, labels)
}

/// Trains a fresh model on the base set augmented with the adversarial
/// set. No warm start: run-to-run comparisons stay clean.
pub fn retrain(
    base: &SparseBinaryDataset,
    adv: &SparseBinaryDataset,
    hp: &Hyperparams,
) -> Result<LinearModel> {
    if adv.n_features() != base.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "adversarial set has d={}, base has d={}",
            adv.n_features(),
            base.n_features()
        )));
    }
    let merged = base.concat(adv)?;
    train(&merged, hp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_dense_csv;

    fn toy_model() -> LinearModel {
        LinearModel::from_weights(vec![-2.0, 1.0, -0.4, -0.3], 0.5)
    }

    fn toy_malware() -> SparseBinaryDataset {
        SparseBinaryDataset::new(4, vec![vec![1], vec![1, 2], vec![1, 3]], vec![1, 1, 1]).unwrap()
    }

    #[test]
    fn adv_rows_are_labeled_malware_and_distinct() {
        let m = toy_model();
        let ds = toy_malware();
        let attack_cfg = AttackConfig::unconstrained(3);
        let cfg = RetrainConfig::new(3, 4, 9);
        let adv = generate_adv_set(&m, &ds, &attack_cfg, &cfg).unwrap();
        assert!(adv.n_samples() >= 3);
        assert!(adv.labels().iter().all(|&y| y == 1));
    }

    #[test]
    fn generation_is_reproducible() {
        let m = toy_model();
        let ds = toy_malware();
        let attack_cfg = AttackConfig::unconstrained(3);
        let cfg = RetrainConfig::new(2, 3, 42);
        let a = generate_adv_set(&m, &ds, &attack_cfg, &cfg).unwrap();
        let b = generate_adv_set(&m, &ds, &attack_cfg, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn requires_enough_detected_malware() {
        let m = toy_model();
        let ds = toy_malware();
        let attack_cfg = AttackConfig::unconstrained(3);
        let cfg = RetrainConfig::new(10, 1, 0);
        assert!(matches!(
            generate_adv_set(&m, &ds, &attack_cfg, &cfg),
            Err(Error::NoEligible(_))
        ));
    }

    #[test]
    fn empty_adv_set_reproduces_plain_training() {
        let base = parse_dense_csv("1,1,0\n0,0,1\n1,1,1\n0,0,0\n").unwrap();
        let adv = SparseBinaryDataset::new(2, vec![], vec![]).unwrap();
        let hp = Hyperparams::default();
        let retrained = retrain(&base, &adv, &hp).unwrap();
        let plain = train(&base, &hp).unwrap();
        assert_eq!(retrained.weights(), plain.weights());
        assert_eq!(retrained.bias(), plain.bias());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let base = parse_dense_csv("1,1,0\n0,0,1\n").unwrap();
        let adv = SparseBinaryDataset::new(5, vec![vec![4]], vec![1]).unwrap();
        assert!(retrain(&base, &adv, &Hyperparams::default()).is_err());
    }
}
