//! Learning feature-space domain constraints from binary corpora and
//! using them to harden a linear detector.
//!
//! The pipeline, end to end:
//!
//! 1. [`dataset`] loads row-sparse binary feature data (or synthesizes
//!    corpora with planted structure).
//! 2. [`correlation`] computes exact phi coefficients over co-occurring
//!    feature pairs and materializes the positive-weight graph; perfect
//!    positive pairs form the bidirectional relationship set.
//! 3. [`opf`] selects prototypes from dense (phi > 0.9) regions and runs
//!    a widest-path forest over the graph: each feature joins the
//!    prototype offering the best bottleneck phi, which becomes the
//!    feature's path cost.
//! 4. [`constraints`] packages both relationship kinds into a constraint
//!    set that can validate, score (csr) and repair addition-only
//!    perturbations.
//! 5. [`transform`] compiles the constraint set into a robust feature
//!    map: one sigmoid-gated bit per cluster, pass-through elsewhere.
//! 6. [`detector`], [`attack`] and [`retrain`] provide the linear SVM,
//!    the greedy feature-addition attacks (constraint-agnostic and
//!    constraint-repairing) and the adversarial retraining loop used to
//!    measure what the constraints buy.

pub mod attack;
pub mod constraints;
pub mod correlation;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod opf;
pub mod retrain;
pub mod transform;

pub use error::{Error, Result};
