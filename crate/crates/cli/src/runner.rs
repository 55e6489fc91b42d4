//! Subcommand implementations: per-seed training runs with report emission,
//! federated-vs-pooled comparison, adversary-weight feasibility analysis,
//! dataset snapshot generation and standalone simplex projection.

use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use fedminmax::algorithms::{
    afl_run, centralized_minmax_run, derive_seed, evaluate, fedavg_run, fedminmax_run,
    localfedminmax_run, Algorithm, GroupEval, TrainingTrace,
};
use fedminmax::analysis::{compare_runs, emit_reports, weight_feasibility, RunReport};
use fedminmax::data::{
    compute_pa_matrix, generate_synthetic, load_csv, partition, save_dataset, stratified_split,
    ClientShard, GroupedDataset, PartitionPlan, SyntheticSpec,
};
use fedminmax::model::MlpSpec;
use fedminmax::optim::{project_simplex, SimplexWeights};

use crate::config::{ResolvedConfig, ResolvedDataset};
use crate::CliError;

/// Salt separating the train/test split stream from data generation.
const SPLIT_SALT: u64 = 0x73706c6974;

/// Data and model for one run seed.
pub struct PreparedRun {
    pub train: GroupedDataset<f64>,
    pub test: GroupedDataset<f64>,
    pub shards: Vec<ClientShard<f64>>,
    pub model: MlpSpec,
}

/// Loads or generates the dataset, splits it and partitions the train side.
///
/// Every random stream is derived from the config seeds and the run seed,
/// so a given (config, run seed) pair always produces the same data.
pub fn prepare(cfg: &ResolvedConfig, run_seed: u64) -> Result<PreparedRun, CliError> {
    let full: GroupedDataset<f64> = match &cfg.dataset {
        ResolvedDataset::Synthetic {
            low_rates,
            high_rates,
            n_samples,
            seed,
        } => generate_synthetic(&SyntheticSpec {
            low_rates: low_rates.clone(),
            high_rates: high_rates.clone(),
            n_samples: *n_samples,
            seed: derive_seed(*seed, run_seed),
        })?,
        ResolvedDataset::Csv { path, schema, .. } => load_csv(path, schema)?,
    };
    let split_seed = derive_seed(derive_seed(cfg.dataset.seed(), run_seed), SPLIT_SALT);
    let (train, test) = stratified_split(&full, cfg.test_fraction, split_seed)?;
    let plan = PartitionPlan {
        setting: cfg.setting,
        num_clients: cfg.num_clients,
        psg_group_split: cfg.psg_group_split.clone(),
        seed: derive_seed(cfg.partition_seed, run_seed),
    };
    let shards = partition(&train, &plan)?;
    let model = cfg
        .model_spec(train.num_features(), train.num_classes())
        .map_err(CliError::Validation)?;
    Ok(PreparedRun {
        train,
        test,
        shards,
        model,
    })
}

/// Trains the configured algorithm on prepared data for one run seed.
///
/// Pooled training evaluates on the held-out set afterwards so every
/// algorithm's trace carries a test evaluation.
pub fn train_once(
    cfg: &ResolvedConfig,
    prepared: &PreparedRun,
    run_seed: u64,
) -> Result<TrainingTrace<f64>, CliError> {
    let core_cfg = cfg.core_config(prepared.model.clone(), run_seed);
    let trace = match cfg.algorithm {
        Algorithm::FedMinMax => fedminmax_run(&prepared.shards, &prepared.test, &core_cfg)?,
        Algorithm::CentralizedMinMax => {
            let mut trace = centralized_minmax_run(&prepared.train, &core_cfg)?;
            trace.final_test_eval = Some(evaluate(
                &core_cfg.model,
                &trace.final_params,
                &prepared.test,
                core_cfg.loss,
            )?);
            trace
        }
        Algorithm::LocalFedMinMax => {
            localfedminmax_run(&prepared.shards, &prepared.test, &core_cfg)?
        }
        Algorithm::Afl => afl_run(&prepared.shards, &prepared.test, &core_cfg)?,
        Algorithm::FedAvg => fedavg_run(&prepared.shards, &prepared.test, &core_cfg)?,
    };
    Ok(trace)
}

/// Effective configuration echoed into reports. The output directory is
/// deliberately excluded so reruns into different directories stay
/// byte-identical.
pub fn echo_config(cfg: &ResolvedConfig, run_seed: u64) -> Value {
    let dataset = match &cfg.dataset {
        ResolvedDataset::Synthetic {
            low_rates,
            high_rates,
            n_samples,
            seed,
        } => json!({
            "kind": "synthetic",
            "low_rates": low_rates,
            "high_rates": high_rates,
            "n_samples": n_samples,
            "seed": seed,
        }),
        ResolvedDataset::Csv { path, schema, seed } => json!({
            "kind": "csv",
            "path": path.display().to_string(),
            "target": schema.target,
            "group": schema.group,
            "features": schema.features,
            "categorical": schema.categorical,
            "standardize": schema.standardize,
            "categories": schema.categories,
            "seed": seed,
        }),
    };
    json!({
        "dataset": dataset,
        "partition": {
            "setting": cfg.setting.name(),
            "num_clients": cfg.num_clients,
            "seed": cfg.partition_seed,
            "psg_group_split": cfg.psg_group_split,
        },
        "algorithm": {
            "name": cfg.algorithm.name(),
            "rounds": cfg.rounds,
            "model_lr": cfg.model_lr,
            "adversary_lr": cfg.adversary_lr,
            "simplex_floor": cfg.simplex_floor,
            "loss": cfg.loss_name(),
            "output": cfg.output_mode_name(),
            "local_epochs": cfg.local_epochs,
            "batch_size": cfg.batch_size,
            "hidden_layers": cfg.hidden_layers,
            "activation": cfg.activation_name(),
        },
        "evaluation": {
            "test_fraction": cfg.test_fraction,
            "run_seed": run_seed,
        },
    })
}

/// `run`: trains once per seed, writes per-seed reports plus an aggregate.
pub fn cmd_run(cfg: &ResolvedConfig) -> Result<(), CliError> {
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    let mut stats: Vec<Vec<f64>> = vec![Vec::new(); HEADLINE_STATS.len()];
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let prepared = prepare(cfg, seed)?;
        let trace = train_once(cfg, &prepared, seed)?;
        let wall = started.elapsed().as_secs_f64();
        let dir = cfg.out_dir.join(format!("seed-{seed}"));
        let report = RunReport {
            config: echo_config(cfg, seed),
            rounds: cfg.rounds,
            wall_clock_secs: wall,
        };
        emit_reports(&trace, &report, &dir)?;
        let eval = trace
            .final_test_eval
            .as_ref()
            .expect("every trained trace carries a test evaluation");
        for (values, &(_, pick)) in stats.iter_mut().zip(HEADLINE_STATS) {
            values.push(pick(eval));
        }
        println!(
            "seed {seed}: worst risk {:.6}, best risk {:.6}, avg risk {:.6}, \
             worst accuracy {:.6} ({:.1}s, {})",
            eval.worst_risk,
            eval.best_risk,
            eval.avg_risk,
            eval.worst_accuracy,
            wall,
            dir.display()
        );
        rows.push(seed_row(seed, eval, trace.final_group_weights()));
    }
    let mut mean = serde_json::Map::new();
    let mut std = serde_json::Map::new();
    for (values, &(name, _)) in stats.iter().zip(HEADLINE_STATS) {
        let (m, s) = mean_std(values);
        mean.insert(name.to_string(), json!(m));
        std.insert(name.to_string(), json!(s));
    }
    let aggregate = json!({
        "algorithm": cfg.algorithm.name(),
        "rounds": cfg.rounds,
        "seeds": cfg.seeds,
        "per_seed": rows,
        "mean": mean,
        "std": std,
    });
    write_json(&cfg.out_dir.join("aggregate.json"), &aggregate)?;
    let (worst_m, worst_s) = mean_std(&stats[0]);
    let (best_m, best_s) = mean_std(&stats[1]);
    println!(
        "aggregate over {} seed(s): worst risk {:.6} +/- {:.6}, best risk {:.6} +/- {:.6}",
        cfg.seeds.len(),
        worst_m,
        worst_s,
        best_m,
        best_s
    );
    Ok(())
}

/// Headline statistics aggregated across seeds.
const HEADLINE_STATS: &[(&str, fn(&GroupEval<f64>) -> f64)] = &[
    ("worst_risk", |e| e.worst_risk),
    ("best_risk", |e| e.best_risk),
    ("avg_risk", |e| e.avg_risk),
    ("worst_accuracy", |e| e.worst_accuracy),
    ("best_accuracy", |e| e.best_accuracy),
    ("avg_accuracy", |e| e.avg_accuracy),
];

fn seed_row(seed: u64, eval: &GroupEval<f64>, group_weights: &[f64]) -> Value {
    json!({
        "seed": seed,
        "worst_risk": eval.worst_risk,
        "best_risk": eval.best_risk,
        "avg_risk": eval.avg_risk,
        "worst_accuracy": eval.worst_accuracy,
        "best_accuracy": eval.best_accuracy,
        "avg_accuracy": eval.avg_accuracy,
        "group_risks": eval.group_risks,
        "group_accuracies": eval.group_accuracies,
        "group_weights": group_weights,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// `compare`: runs federated and pooled minimax training from the same
/// initialization on the same data and reports per-round differences.
pub fn cmd_compare(cfg: &ResolvedConfig) -> Result<(), CliError> {
    if cfg.algorithm != Algorithm::FedMinMax {
        return Err(CliError::Validation(format!(
            "compare checks fedminmax against its pooled counterpart; \
             algorithm.name is \"{}\"",
            cfg.algorithm.name()
        )));
    }
    let seed = cfg.seeds[0];
    let prepared = prepare(cfg, seed)?;
    let mut fed_cfg = cfg.core_config(prepared.model.clone(), seed);
    fed_cfg.record_params = true;
    let mut central_cfg = fed_cfg.clone();
    central_cfg.algorithm = Algorithm::CentralizedMinMax;

    let started = Instant::now();
    let fed = fedminmax_run(&prepared.shards, &prepared.test, &fed_cfg)?;
    let central = centralized_minmax_run(&prepared.train, &central_cfg)?;
    let wall = started.elapsed().as_secs_f64();
    let cmp = compare_runs(&fed, &central)?;

    let report = json!({
        "federated": Algorithm::FedMinMax.name(),
        "pooled": Algorithm::CentralizedMinMax.name(),
        "seed": seed,
        "rounds": cfg.rounds,
        "max_param_diff": cmp.max_param_diff,
        "max_weight_diff": cmp.max_weight_diff,
        "final_param_diff": cmp.param_diffs.last().copied(),
        "final_weight_diff": cmp.weight_diffs.last().copied(),
        "param_diffs": cmp.param_diffs,
        "weight_diffs": cmp.weight_diffs,
        "config": echo_config(cfg, seed),
    });
    write_json(&cfg.out_dir.join("compare.json"), &report)?;
    println!(
        "compared {} rounds in {:.1}s: max param diff {:e}, max weight diff {:e}",
        cfg.rounds, wall, cmp.max_param_diff, cmp.max_weight_diff
    );
    Ok(())
}

/// `analyze-feasibility`: asks whether the group weights found by fedminmax
/// are reachable by any client-level adversary on the same partition, and
/// reports how close AFL's induced group weights actually get.
pub fn cmd_analyze_feasibility(cfg: &ResolvedConfig) -> Result<(), CliError> {
    let seed = cfg.seeds[0];
    let prepared = prepare(cfg, seed)?;

    let mut minimax_cfg = cfg.clone();
    minimax_cfg.algorithm = Algorithm::FedMinMax;
    let minimax = train_once(&minimax_cfg, &prepared, seed)?;
    let mu_star = SimplexWeights::from_values(minimax.final_group_weights().to_vec())?;

    let mut afl_cfg = cfg.clone();
    afl_cfg.algorithm = Algorithm::Afl;
    let afl = train_once(&afl_cfg, &prepared, seed)?;
    let afl_induced = SimplexWeights::from_values(afl.final_group_weights().to_vec())?;

    let pa = compute_pa_matrix(&prepared.shards)?;
    const FEASIBILITY_TOLERANCE: f64 = 1e-6;
    let feas = weight_feasibility(&pa, &mu_star, FEASIBILITY_TOLERANCE)?;
    let afl_gap = afl_induced.l1_distance(&mu_star)?;

    let report = json!({
        "setting": cfg.setting.name(),
        "num_clients": cfg.num_clients,
        "tolerance": feas.tolerance,
        "feasible": feas.feasible,
        "residual": feas.residual,
        "iterations": feas.iterations,
        "lambda": feas.lambda.values(),
        "fedminmax_group_weights": mu_star.values(),
        "afl_induced_group_weights": afl_induced.values(),
        "afl_l1_gap": afl_gap,
        "config": echo_config(cfg, seed),
    });
    write_json(&cfg.out_dir.join("feasibility.json"), &report)?;
    println!(
        "{} partition: target weights {} (residual {:e} after {} iterations)",
        cfg.setting.name(),
        if feas.feasible {
            "are reachable by a client-level adversary"
        } else {
            "are NOT reachable by any client-level adversary"
        },
        feas.residual,
        feas.iterations
    );
    println!(
        "afl induced group weights differ from fedminmax weights by {:.6} (L1)",
        afl_gap
    );
    Ok(())
}

/// `synth-gen`: materializes the synthetic dataset for the first seed as a
/// snapshot file that training runs and external tools can reload.
pub fn cmd_synth_gen(cfg: &ResolvedConfig) -> Result<(), CliError> {
    let seed = cfg.seeds[0];
    let spec = match &cfg.dataset {
        ResolvedDataset::Synthetic {
            low_rates,
            high_rates,
            n_samples,
            seed: data_seed,
        } => SyntheticSpec {
            low_rates: low_rates.clone(),
            high_rates: high_rates.clone(),
            n_samples: *n_samples,
            seed: derive_seed(*data_seed, seed),
        },
        ResolvedDataset::Csv { .. } => {
            return Err(CliError::Validation(
                "synth-gen needs dataset.kind = \"synthetic\"".into(),
            ))
        }
    };
    let dataset: GroupedDataset<f64> = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let path = cfg.out_dir.join("dataset.snapshot");
    save_dataset(&path, &dataset)?;
    println!(
        "wrote {} samples ({} groups) to {}",
        dataset.len(),
        dataset.num_groups(),
        path.display()
    );
    Ok(())
}

/// `project`: projects a vector onto the probability simplex and prints it.
pub fn cmd_project(values: &[f64], floor: f64) -> Result<(), CliError> {
    let projected = project_simplex(values, floor)?;
    let rendered: Vec<String> = projected.values().iter().map(|v| format!("{v:?}")).collect();
    println!("[{}]", rendered.join(", "));
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Runtime(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Runtime(format!("cannot encode {}: {e}", path.display())))?;
    use std::io::Write as _;
    writeln!(out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
