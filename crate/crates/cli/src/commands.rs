//! Command implementations. Each command records its inputs and timings
//! in a run manifest written next to the primary output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cf_core::attack::{
    rescore_csr, run_campaign_on, AttackConfig, AttackMode, AttackSurface, CampaignReport,
};
use cf_core::constraints::{ConstraintSet, RepairPolicy};
use cf_core::correlation::PhiGraph;
use cf_core::dataset::{self, synth, FeatureStats, SparseBinaryDataset, TopKScope};
use cf_core::detector::{
    evaluate, train, Discriminant, EvalReport, Hyperparams, LinearModel, RobustDetector,
};
use cf_core::opf::{OpfForest, PrototypeSet};
use cf_core::retrain::{generate_adv_set, retrain, RetrainConfig};
use cf_core::transform::RobustMap;

use crate::manifest::{self, ManifestBuilder};
use crate::{
    AttackArgs, AttackModeArg, Cli, CliError, Command, CsrArgs, DataFormat, EvaluateArgs,
    LearnArgs, RepairArg, ReplayArgs, RetrainArgs, SynthArgs, TopKScopeArg, TrainArgs,
    TransformArgs,
};

pub fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(args) => cmd_synth(args, argv, seed),
        Command::Learn(args) => cmd_learn(args, argv, seed),
        Command::Transform(args) => cmd_transform(args, argv, seed),
        Command::Train(args) => cmd_train(args, argv, seed),
        Command::Attack(args) => cmd_attack(args, argv, seed),
        Command::Csr(args) => cmd_csr(args, argv, seed),
        Command::Retrain(args) => cmd_retrain(args, argv, seed),
        Command::Evaluate(args) => cmd_evaluate(args, argv, seed),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn core_format(f: DataFormat) -> dataset::Format {
    match f {
        DataFormat::SparseText => dataset::Format::SparseText,
        DataFormat::DenseCsv => dataset::Format::DenseCsv,
    }
}

fn load_dataset(
    mb: &mut ManifestBuilder,
    path: &Path,
    format: DataFormat,
) -> Result<SparseBinaryDataset, CliError> {
    mb.record_input(path)?;
    let ds = dataset::load(path, core_format(format))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(ds)
}

fn load_model(mb: &mut ManifestBuilder, path: &Path) -> Result<LinearModel, CliError> {
    mb.record_input(path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    LinearModel::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_constraints(mb: &mut ManifestBuilder, path: &Path) -> Result<ConstraintSet, CliError> {
    mb.record_input(path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    ConstraintSet::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_map(mb: &mut ManifestBuilder, path: &Path) -> Result<RobustMap, CliError> {
    mb.record_input(path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    RobustMap::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_artifact(mb: &mut ManifestBuilder, path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    mb.record_output(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))
}

fn check_dim(what: &str, expected: usize, got: usize) -> Result<(), CliError> {
    if expected != got {
        return Err(CliError::data(format!(
            "{what}: expected dimensionality {expected}, got {got}"
        )));
    }
    Ok(())
}

// -------------------------------------------------------------------

fn cmd_synth(args: SynthArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("synth", argv, seed);
    mb.record_input(&args.spec)?;
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec: synth::PlantedSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad spec {}: {e}", args.spec.display())))?;
    let stage_seed = mb.stage_seed("synth");
    let ds = synth::synth_planted(&spec, stage_seed)?;
    mb.mark("generate");
    write_artifact(&mut mb, &args.out, &ds.to_sparse_text())?;
    let malware = ds.labels().iter().filter(|&&y| y == 1).count();
    println!(
        "synth: {} samples ({} malware), d={} -> {}",
        ds.n_samples(),
        malware,
        ds.n_features(),
        args.out.display()
    );
    mb.write(&args.out)
}

#[derive(Serialize)]
struct LearnStats {
    n_samples: usize,
    n_features: usize,
    top_k: Option<usize>,
    n_constant_features: usize,
    positive_edges: usize,
    perfect_pairs: usize,
    n_prototypes: usize,
    n_clusters: usize,
    n_multi_member_clusters: usize,
    n_assigned_features: usize,
    /// `[cluster size, count]` pairs, ascending by size.
    cluster_size_histogram: Vec<(usize, usize)>,
}

fn cmd_learn(args: LearnArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("learn", argv, seed);
    let mut ds = load_dataset(&mut mb, &args.data, args.format)?;
    if ds.n_samples() == 0 {
        return Err(CliError::data(format!(
            "{}: dataset is empty",
            args.data.display()
        )));
    }
    mb.mark("load");

    let top_k = args.top_k;
    if let Some(k) = top_k {
        let scope = match args.top_k_scope {
            TopKScopeArg::All => TopKScope::All,
            TopKScopeArg::Malware => TopKScope::MalwareOnly,
        };
        let (reduced, _) = dataset::select_top_k_scoped(&ds, k, scope)?;
        ds = reduced;
        let reduced_path = append_suffix(&args.out, ".reduced.txt");
        write_artifact(&mut mb, &reduced_path, &ds.to_sparse_text())?;
        println!(
            "learn: top-{k} selection kept d={} -> {}",
            ds.n_features(),
            reduced_path.display()
        );
        mb.mark("top-k");
    }

    let graph = PhiGraph::build(&ds, args.min_phi)?;
    mb.mark("correlation");
    let proto_seed = mb.stage_seed("prototypes");
    let protos = PrototypeSet::select(&graph, args.dense_threshold, proto_seed)?;
    let mut forest = OpfForest::build(&graph, &protos);
    forest.filter_min_cost(args.min_cost);
    mb.mark("opf");
    let constraints = ConstraintSet::assemble(&graph, &forest)?;
    mb.mark("assemble");

    write_artifact(&mut mb, &args.out, &constraints.to_json())?;
    let edges_path = args
        .edges_out
        .clone()
        .unwrap_or_else(|| default_edges_path(&args.out));
    write_artifact(&mut mb, &edges_path, &graph.dump_edges())?;
    if let Some(forest_path) = &args.forest_out {
        write_artifact(&mut mb, forest_path, &forest.dump())?;
    }

    let clusters = forest.clusters();
    let mut histogram = std::collections::BTreeMap::new();
    for c in &clusters {
        *histogram.entry(c.len()).or_insert(0usize) += 1;
    }
    let stats = LearnStats {
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        top_k,
        n_constant_features: graph.constant_features().len(),
        positive_edges: graph.n_edges(),
        perfect_pairs: graph.bidirectional_set().len(),
        n_prototypes: protos.prototypes().len(),
        n_clusters: clusters.len(),
        n_multi_member_clusters: clusters.iter().filter(|c| c.len() >= 2).count(),
        n_assigned_features: (0..ds.n_features())
            .filter(|&f| forest.is_assigned(f))
            .count(),
        cluster_size_histogram: histogram.into_iter().collect(),
    };
    if let Some(stats_path) = &args.stats_out {
        write_artifact(&mut mb, stats_path, &to_json(&stats)?)?;
    }
    println!(
        "learn: {} positive edges, {} perfect pairs, {} prototypes, {} clusters ({} multi-member) -> {}",
        stats.positive_edges,
        stats.perfect_pairs,
        stats.n_prototypes,
        stats.n_clusters,
        stats.n_multi_member_clusters,
        args.out.display()
    );
    mb.write(&args.out)
}

fn append_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn default_edges_path(constraints: &Path) -> PathBuf {
    append_suffix(constraints, ".edges")
}

fn cmd_transform(args: TransformArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("transform", argv, seed);
    let ds = load_dataset(&mut mb, &args.data, args.format)?;
    mb.mark("load");

    let map = match (&args.map, &args.constraints) {
        (Some(map_path), _) => load_map(&mut mb, map_path)?,
        (None, Some(cs_path)) => {
            let constraints = load_constraints(&mut mb, cs_path)?;
            check_dim("transform", constraints.n_features(), ds.n_features())?;
            let stats = FeatureStats::compute(&ds);
            let constant = stats.constant_features(ds.n_samples());
            let map = RobustMap::build_with(
                &constraints,
                &constant,
                args.threshold,
                args.drop_singletons,
            );
            let map_path = args
                .map_out
                .clone()
                .unwrap_or_else(|| append_suffix(&args.out, ".map.json"));
            write_artifact(&mut mb, &map_path, &map.to_json())?;
            map
        }
        (None, None) => {
            return Err(CliError::data(
                "transform needs --constraints or a prebuilt --map",
            ))
        }
    };
    check_dim("transform input", map.in_dim, ds.n_features())?;
    let transformed = map.transform_dataset(&ds)?;
    mb.mark("apply");
    write_artifact(&mut mb, &args.out, &transformed.to_sparse_text())?;
    println!(
        "transform: {} -> {} features ({} gated clusters, {} passthrough, {} dropped) -> {}",
        map.in_dim,
        map.out_dim,
        map.clusters.len(),
        map.passthrough.len(),
        map.dropped.len(),
        args.out.display()
    );
    mb.write(&args.out)
}

fn cmd_train(args: TrainArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("train", argv, seed);
    let ds = load_dataset(&mut mb, &args.data, args.format)?;
    mb.mark("load");
    let hp = Hyperparams {
        epochs: args.epochs,
        lambda: args.lambda,
        seed: mb.stage_seed("train"),
    };
    let started = std::time::Instant::now();
    let model = train(&ds, &hp)?;
    let train_time = started.elapsed().as_secs_f64();
    mb.mark("train");
    write_artifact(&mut mb, &args.out, &model.to_json())?;
    let report = evaluate(&model, &ds);
    println!(
        "train: {} samples, d={}, {:.2}s; on training data tpr {} fpr {} -> {}",
        ds.n_samples(),
        ds.n_features(),
        train_time,
        fmt_rate(report.tpr),
        fmt_rate(report.fpr),
        args.out.display()
    );
    mb.write(&args.out)
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
}

fn malware_subset(ds: &SparseBinaryDataset) -> Result<SparseBinaryDataset, CliError> {
    let rows: Vec<Vec<u32>> = ds
        .rows()
        .iter()
        .zip(ds.labels())
        .filter(|(_, &y)| y == 1)
        .map(|(row, _)| row.clone())
        .collect();
    let labels = vec![1u8; rows.len()];
    Ok(SparseBinaryDataset::new(ds.n_features(), rows, labels)?)
}

/// Loads the constraint set and, when available, the matching edge dump
/// so repair ranks mates by direct phi rather than by path cost.
fn constraints_with_edges(
    mb: &mut ManifestBuilder,
    cs_path: &Path,
    edges: &Option<PathBuf>,
) -> Result<ConstraintSet, CliError> {
    let mut constraints = load_constraints(mb, cs_path)?;
    let edges_path = edges.clone().unwrap_or_else(|| default_edges_path(cs_path));
    if edges_path.exists() {
        mb.record_input(&edges_path)?;
        let text = fs::read_to_string(&edges_path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", edges_path.display())))?;
        let parsed = PhiGraph::parse_edges(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", edges_path.display())))?;
        constraints.attach_phi_edges(&parsed);
    } else {
        log::warn!(
            "no edge dump at {}; repair will rank cluster mates by path cost",
            edges_path.display()
        );
    }
    Ok(constraints)
}

fn cmd_attack(args: AttackArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("attack", argv, seed);
    let ds = load_dataset(&mut mb, &args.data, args.format)?;
    let malware = malware_subset(&ds)?;
    if malware.n_samples() == 0 {
        return Err(CliError::data("no malware rows in the attack dataset"));
    }
    let model = load_model(&mut mb, &args.model)?;

    let constraints = match (&args.constraints, args.mode) {
        (Some(path), _) => Some(constraints_with_edges(&mut mb, path, &args.edges)?),
        (None, AttackModeArg::Constrained) => {
            return Err(CliError::data("constrained mode requires --constraints"))
        }
        (None, AttackModeArg::Unconstrained) => None,
    };
    let mut cfg = match args.mode {
        AttackModeArg::Unconstrained => AttackConfig::unconstrained(args.max_added),
        AttackModeArg::Constrained => {
            AttackConfig::constrained(args.max_added, constraints.as_ref().unwrap())
        }
    };
    if cfg.mode == AttackMode::Unconstrained {
        cfg.constraints = constraints.as_ref();
    }
    cfg.repair_policy = match args.repair {
        RepairArg::HighestPhi => RepairPolicy::HighestPhi,
        RepairArg::Prototype => RepairPolicy::Prototype,
    };

    // attacked surface: plain linear or transform-composed pipeline
    let attacked_map = args
        .attacked_map
        .as_ref()
        .map(|p| load_map(&mut mb, p))
        .transpose()?;
    let ranker = args
        .ranker
        .as_ref()
        .map(|p| load_model(&mut mb, p))
        .transpose()?;
    let attacked_robust = match attacked_map {
        Some(map) => {
            check_dim("attacked map input", map.in_dim, ds.n_features())?;
            Some(RobustDetector::new(map, model.clone())?)
        }
        None => {
            check_dim("attacked model", model.dim(), ds.n_features())?;
            None
        }
    };
    let surface = match (&attacked_robust, &ranker) {
        (Some(robust), Some(r)) => {
            check_dim("ranker", r.dim(), ds.n_features())?;
            AttackSurface::Guided {
                ranker: r,
                oracle: robust,
            }
        }
        (Some(_), None) => {
            return Err(CliError::data(
                "--attacked-map needs --ranker (a linear model over the original space)",
            ))
        }
        (None, _) => AttackSurface::Linear(&model),
    };

    // transfer target: defaults to the attacked detector itself
    let target_model = args
        .target_model
        .as_ref()
        .map(|p| load_model(&mut mb, p))
        .transpose()?;
    let target_map = args
        .target_map
        .as_ref()
        .map(|p| load_map(&mut mb, p))
        .transpose()?;
    let target_robust = match (&target_model, target_map) {
        (Some(m), Some(map)) => {
            check_dim("target map input", map.in_dim, ds.n_features())?;
            Some(RobustDetector::new(map, m.clone())?)
        }
        (None, Some(_)) => return Err(CliError::data("--target-map needs --target-model")),
        _ => None,
    };
    let target: &(dyn Discriminant + Sync) = match (&target_robust, &target_model) {
        (Some(robust), _) => robust,
        (None, Some(m)) => {
            check_dim("target model", m.dim(), ds.n_features())?;
            m
        }
        (None, None) => match &surface {
            AttackSurface::Linear(m) => *m,
            AttackSurface::Guided { oracle, .. } => *oracle,
        },
    };

    mb.mark("setup");
    let report = run_campaign_on(surface, target, &malware, &cfg)?;
    mb.mark("campaign");
    write_artifact(&mut mb, &args.out, &to_json(&report)?)?;
    println!(
        "attack: {} eligible of {} malware; er {:.4}, transfer-er {:.4}, avg added {}, csr mean {} -> {}",
        report.n_eligible,
        report.n_malware,
        report.er,
        report.transfer_er,
        report
            .avg_added
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "n/a".into()),
        report
            .csr_mean
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        args.out.display()
    );
    mb.write(&args.out)
}

#[derive(Serialize)]
struct CsrReport {
    csr_mean: Option<f64>,
    n_scored: usize,
    per_sample: Vec<CsrRecord>,
}

#[derive(Serialize)]
struct CsrRecord {
    sample: usize,
    csr: Option<f64>,
}

fn cmd_csr(args: CsrArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("csr", argv, seed);
    mb.record_input(&args.report)?;
    let text = fs::read_to_string(&args.report)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", args.report.display())))?;
    let report: CampaignReport = serde_json::from_str(&text).map_err(|e| {
        CliError::data(format!(
            "bad campaign report {}: {e}",
            args.report.display()
        ))
    })?;
    let constraints = load_constraints(&mut mb, &args.constraints)?;
    let ds = load_dataset(&mut mb, &args.data, args.format)?;
    let malware = malware_subset(&ds)?;
    check_dim(
        "csr dataset",
        constraints.n_features(),
        malware.n_features(),
    )?;

    let (values, mean) = rescore_csr(&report, &constraints, &malware);
    let out = CsrReport {
        csr_mean: mean,
        n_scored: values.iter().filter(|v| v.is_some()).count(),
        per_sample: report
            .records
            .iter()
            .zip(values)
            .map(|(r, csr)| CsrRecord {
                sample: r.sample,
                csr,
            })
            .collect(),
    };
    mb.mark("rescore");
    write_artifact(&mut mb, &args.out, &to_json(&out)?)?;
    println!(
        "csr: mean {} over {} scored perturbations -> {}",
        out.csr_mean
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        out.n_scored,
        args.out.display()
    );
    mb.write(&args.out)
}

#[derive(Serialize)]
struct CampaignSummary {
    n_eligible: usize,
    n_evaded: usize,
    er: f64,
    avg_added: Option<f64>,
    csr_mean: Option<f64>,
}

impl From<&CampaignReport> for CampaignSummary {
    fn from(r: &CampaignReport) -> Self {
        CampaignSummary {
            n_eligible: r.n_eligible,
            n_evaded: r.n_evaded,
            er: r.er,
            avg_added: r.avg_added,
            csr_mean: r.csr_mean,
        }
    }
}

#[derive(Serialize)]
struct RetrainCompare {
    adv_rows: usize,
    train_rows: usize,
    eval_before: EvalReport,
    eval_after: EvalReport,
    campaign_before: CampaignSummary,
    campaign_after: CampaignSummary,
}

fn cmd_retrain(args: RetrainArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("retrain", argv, seed);
    let train_ds = load_dataset(&mut mb, &args.data, args.format)?;
    let test_ds = match &args.test_data {
        Some(path) => load_dataset(&mut mb, path, args.format)?,
        None => train_ds.clone(),
    };
    check_dim("test data", train_ds.n_features(), test_ds.n_features())?;

    let constraints = match (&args.constraints, args.mode) {
        (Some(path), _) => Some(constraints_with_edges(&mut mb, path, &args.edges)?),
        (None, AttackModeArg::Constrained) => {
            return Err(CliError::data("constrained mode requires --constraints"))
        }
        (None, AttackModeArg::Unconstrained) => None,
    };
    let attack_cfg = match args.mode {
        AttackModeArg::Unconstrained => AttackConfig::unconstrained(args.max_added),
        AttackModeArg::Constrained => {
            AttackConfig::constrained(args.max_added, constraints.as_ref().unwrap())
        }
    };

    let hp = Hyperparams {
        epochs: args.epochs,
        lambda: args.lambda,
        seed: mb.stage_seed("train"),
    };
    let base_model = match &args.model {
        Some(path) => {
            let m = load_model(&mut mb, path)?;
            check_dim("base model", m.dim(), train_ds.n_features())?;
            m
        }
        None => train(&train_ds, &hp)?,
    };
    mb.mark("base-model");

    let retrain_cfg = RetrainConfig {
        k: args.k,
        variants_per_sample: args.variants,
        jitter_top_q: args.jitter_q,
        seed: mb.stage_seed("adv-gen"),
    };
    let adv = generate_adv_set(&base_model, &train_ds, &attack_cfg, &retrain_cfg)?;
    mb.mark("adv-gen");
    let retrained = retrain(&train_ds, &adv, &hp)?;
    mb.mark("retrain");

    let test_malware = malware_subset(&test_ds)?;
    let eval_before = evaluate(&base_model, &test_ds);
    let eval_after = evaluate(&retrained, &test_ds);
    let campaign_before = run_campaign_on(
        AttackSurface::Linear(&base_model),
        &base_model,
        &test_malware,
        &attack_cfg,
    )?;
    let campaign_after = run_campaign_on(
        AttackSurface::Linear(&retrained),
        &retrained,
        &test_malware,
        &attack_cfg,
    )?;
    mb.mark("compare");

    write_artifact(&mut mb, &args.out, &retrained.to_json())?;
    let compare = RetrainCompare {
        adv_rows: adv.n_samples(),
        train_rows: train_ds.n_samples() + adv.n_samples(),
        eval_before,
        eval_after,
        campaign_before: (&campaign_before).into(),
        campaign_after: (&campaign_after).into(),
    };
    let report_path = args
        .report_out
        .clone()
        .unwrap_or_else(|| append_suffix(&args.out, ".compare.json"));
    write_artifact(&mut mb, &report_path, &to_json(&compare)?)?;
    println!(
        "retrain: {} adversarial rows; er {:.4} -> {:.4}, tpr {} -> {} -> {}",
        compare.adv_rows,
        compare.campaign_before.er,
        compare.campaign_after.er,
        fmt_rate(compare.eval_before.tpr),
        fmt_rate(compare.eval_after.tpr),
        args.out.display()
    );
    mb.write(&args.out)
}

fn cmd_evaluate(args: EvaluateArgs, argv: Vec<String>, seed: u64) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("evaluate", argv, seed);
    let ds = load_dataset(&mut mb, &args.data, args.format)?;
    let model = load_model(&mut mb, &args.model)?;
    let report = match &args.map {
        Some(map_path) => {
            let map = load_map(&mut mb, map_path)?;
            check_dim("map input", map.in_dim, ds.n_features())?;
            let detector = RobustDetector::new(map, model)?;
            evaluate(&detector, &ds)
        }
        None => {
            check_dim("model", model.dim(), ds.n_features())?;
            evaluate(&model, &ds)
        }
    };
    mb.mark("evaluate");
    write_artifact(&mut mb, &args.out, &to_json(&report)?)?;
    println!(
        "evaluate: tpr {} fpr {} (tp {} fp {} tn {} fn {}) -> {}",
        fmt_rate(report.tpr),
        fmt_rate(report.fpr),
        report.tp,
        report.fp,
        report.tn,
        report.fn_,
        args.out.display()
    );
    mb.write(&args.out)
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let recorded = manifest::load(&args.manifest)?;
    println!("replay: {} {}", recorded.command, recorded.argv.join(" "));
    let mut full = vec!["cf".to_string()];
    full.extend(recorded.argv.iter().cloned());
    let cli = <Cli as clap::Parser>::try_parse_from(&full)
        .map_err(|e| CliError::data(format!("manifest argv does not parse: {e}")))?;
    dispatch(cli, recorded.argv)
}
