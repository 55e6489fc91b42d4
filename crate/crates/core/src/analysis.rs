//! Post-hoc analysis of training runs: can a client weighting induce a
//! given group weighting, how far apart are two traces, and report files.
//!
//! The feasibility question comes from the structure of the client-weight
//! adversary: reweighting *clients* by `lambda` reweights *groups* by
//! `P_A * lambda`, where column `k` of `P_A` holds client `k`'s group
//! prior. A group weighting `mu` is reachable through clients exactly when
//! `mu` lies in the image of the simplex under `P_A`; [`weight_feasibility`]
//! measures the distance to that set.

use std::fs::{self, File};
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde_json::{json, Value};

use crate::algorithms::{GroupEval, TrainingTrace};
use crate::data::GroupPriorMatrix;
use crate::error::{Error, Result};
use crate::optim::{project_simplex, SimplexWeights};
use crate::scalar::Scalar;

/// Gradient-mapping norm threshold that stops the feasibility solver.
const FEASIBILITY_STOP: f64 = 1e-10;
/// Iteration cap of the feasibility solver.
const FEASIBILITY_MAX_ITERS: usize = 100_000;

/// Outcome of [`weight_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<S: Scalar> {
    /// True when the target is within `tolerance` of the reachable set.
    pub feasible: bool,
    /// The client weighting whose induced group weighting comes closest.
    pub lambda: SimplexWeights<S>,
    /// Reached distance `min_lambda || P_A lambda - target ||_2`.
    pub residual: S,
    /// Threshold the residual was compared against.
    pub tolerance: S,
    /// Squared distance after every solver iteration (non-increasing).
    pub residual_history: Vec<S>,
    /// Iterations the solver spent.
    pub iterations: usize,
}

/// The group weighting induced by a client weighting: `P_A * lambda`.
///
/// Because `P_A` is column-stochastic the product lands on the group
/// simplex whenever `lambda` lies on the client simplex.
pub fn induced_group_weights<S: Scalar>(
    pa: &GroupPriorMatrix<S>,
    lambda: &SimplexWeights<S>,
) -> Result<SimplexWeights<S>> {
    if pa.num_clients() != lambda.dim() {
        return Err(Error::invalid(format!(
            "prior matrix has {} client columns but lambda has {} entries",
            pa.num_clients(),
            lambda.dim()
        )));
    }
    let lam = Array1::from_vec(lambda.to_vec());
    let product = pa.entries().dot(&lam);
    SimplexWeights::from_values(product.to_vec())
}

/// Distance from a target group weighting to the set of group weightings
/// reachable by weighting clients.
///
/// Solves `min_{lambda on the simplex} || P_A lambda - target ||^2` by
/// projected gradient steps with a fixed conservative step size, wrapped in
/// monotone Nesterov acceleration with adaptive restart (plain projected
/// gradient converges too slowly on nearly collinear client columns).
/// Stops at stationarity — gradient-mapping norm at most `1e-10` — or
/// after `1e5` iterations. The target is feasible when the reached
/// distance is at most `tol`.
pub fn weight_feasibility<S: Scalar>(
    pa: &GroupPriorMatrix<S>,
    target: &SimplexWeights<S>,
    tol: S,
) -> Result<FeasibilityReport<S>> {
    if pa.num_groups() != target.dim() {
        return Err(Error::invalid(format!(
            "prior matrix has {} group rows but the target has {} entries",
            pa.num_groups(),
            target.dim()
        )));
    }
    if !tol.is_finite() || tol < S::zero() {
        return Err(Error::invalid("tolerance must be finite and >= 0"));
    }
    let num_clients = pa.num_clients();
    let target_vec = Array1::from_vec(target.to_vec());

    // Gradient of ||P_A l - t||^2 is 2 P_A^T (P_A l - t); its Lipschitz
    // constant is at most 2 * ||P_A||_1 * ||P_A||_inf = 2 * (max row sum)
    // since every column sums to one.
    let mut max_row_sum = S::one();
    for row in pa.entries().rows() {
        let s: S = row.iter().copied().sum();
        if s > max_row_sum {
            max_row_sum = s;
        }
    }
    let step = S::one() / (S::c(2.0) * max_row_sum);

    let objective = |point: &[S]| -> S {
        let lam = Array1::from_vec(point.to_vec());
        let r = pa.entries().dot(&lam) - &target_vec;
        r.iter().map(|&v| v * v).sum()
    };
    let descend = |point: &[S]| -> Result<SimplexWeights<S>> {
        let lam = Array1::from_vec(point.to_vec());
        let r = pa.entries().dot(&lam) - &target_vec;
        let grad = pa.entries().t().dot(&r) * S::c(2.0);
        let moved: Vec<S> = point
            .iter()
            .zip(grad.iter())
            .map(|(&l, &g)| l - step * g)
            .collect();
        project_simplex(&moved, S::zero())
    };

    let mut x = SimplexWeights::<S>::uniform(num_clients)?;
    let mut fx = objective(x.values());
    let mut y: Vec<S> = x.to_vec();
    let mut momentum = S::one();
    let mut history = vec![fx];
    let mut iterations = 0;
    while iterations < FEASIBILITY_MAX_ITERS {
        iterations += 1;

        // Stationarity probe at the incumbent point.
        let probe = descend(x.values())?;
        let max_move = x
            .values()
            .iter()
            .zip(probe.values().iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |m, d| if d > m { d } else { m });
        if max_move <= step * S::c(FEASIBILITY_STOP) {
            break;
        }

        // Accelerated step from the extrapolated point, kept monotone.
        let z = descend(&y)?;
        let fz = objective(z.values());
        if fz < fx {
            let next_momentum =
                (S::one() + (S::one() + S::c(4.0) * momentum * momentum).sqrt()) / S::c(2.0);
            let shift = (momentum - S::one()) / next_momentum;
            y = z
                .values()
                .iter()
                .zip(x.values().iter())
                .map(|(&zn, &xo)| zn + shift * (zn - xo))
                .collect();
            momentum = next_momentum;
            x = z;
            fx = fz;
        } else {
            // Restart the momentum from the plain projected step.
            let fp = objective(probe.values());
            if fp < fx {
                x = probe;
                fx = fp;
            }
            y = x.to_vec();
            momentum = S::one();
        }
        history.push(fx);
    }
    let residual = history.last().copied().expect("history is nonempty").sqrt();
    Ok(FeasibilityReport {
        feasible: residual <= tol,
        lambda: x,
        residual,
        tolerance: tol,
        residual_history: history,
        iterations,
    })
}

/// Per-round gaps between two traces of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct RunComparison<S: Scalar> {
    /// Per-round max-abs parameter difference.
    pub param_diffs: Vec<S>,
    /// Per-round max-abs adversary weight difference.
    pub weight_diffs: Vec<S>,
    /// Largest entry of `param_diffs`.
    pub max_param_diff: S,
    /// Largest entry of `weight_diffs`.
    pub max_weight_diff: S,
}

/// Compares two traces round by round.
///
/// Both traces must have the same number of rounds, recorded parameters of
/// equal length and adversary vectors of equal dimension.
pub fn compare_runs<S: Scalar>(
    a: &TrainingTrace<S>,
    b: &TrainingTrace<S>,
) -> Result<RunComparison<S>> {
    if a.rounds.len() != b.rounds.len() {
        return Err(Error::invalid(format!(
            "traces have {} and {} rounds",
            a.rounds.len(),
            b.rounds.len()
        )));
    }
    let mut param_diffs = Vec::with_capacity(a.rounds.len());
    let mut weight_diffs = Vec::with_capacity(a.rounds.len());
    for (t, (ra, rb)) in a.rounds.iter().zip(b.rounds.iter()).enumerate() {
        let (pa, pb) = match (&ra.params, &rb.params) {
            (Some(pa), Some(pb)) => (pa, pb),
            _ => {
                return Err(Error::invalid(format!(
                    "round {t} lacks recorded parameters; rerun with parameter recording on"
                )))
            }
        };
        param_diffs.push(pa.max_abs_diff(pb)?);
        if ra.adversary_weights.len() != rb.adversary_weights.len() {
            return Err(Error::invalid(format!(
                "round {t}: adversary dimensions {} and {} differ",
                ra.adversary_weights.len(),
                rb.adversary_weights.len()
            )));
        }
        let wd = ra
            .adversary_weights
            .iter()
            .zip(rb.adversary_weights.iter())
            .map(|(&x, &y)| (x - y).abs())
            .fold(S::zero(), |m, d| if d > m { d } else { m });
        weight_diffs.push(wd);
    }
    let fold_max = |v: &[S]| v.iter().copied().fold(S::zero(), |m, d| if d > m { d } else { m });
    Ok(RunComparison {
        max_param_diff: fold_max(&param_diffs),
        max_weight_diff: fold_max(&weight_diffs),
        param_diffs,
        weight_diffs,
    })
}

/// Metadata that accompanies a trace into the report files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Echo of the configuration that produced the run.
    pub config: Value,
    /// Round count the configuration asked for.
    pub rounds: usize,
    /// Wall-clock duration of the run in seconds. Written to its own file
    /// so the metric files stay byte-identical across repeated runs.
    pub wall_clock_secs: f64,
}

/// Paths written by [`emit_reports`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    /// Per-round metric table.
    pub metrics: PathBuf,
    /// Run summary document.
    pub summary: PathBuf,
    /// Wall-clock record (excluded from determinism guarantees).
    pub timing: PathBuf,
}

fn as_f64<S: Scalar>(value: S) -> f64 {
    value.to_f64().expect("scalar value converts to f64")
}

fn f64_vec<S: Scalar>(values: &[S]) -> Vec<f64> {
    values.iter().map(|&v| as_f64(v)).collect()
}

fn eval_json<S: Scalar>(eval: &GroupEval<S>) -> Value {
    json!({
        "group_risks": f64_vec(&eval.group_risks),
        "group_accuracies": f64_vec(&eval.group_accuracies),
        "group_counts": eval.group_counts,
        "worst_risk": as_f64(eval.worst_risk),
        "best_risk": as_f64(eval.best_risk),
        "avg_risk": as_f64(eval.avg_risk),
        "worst_accuracy": as_f64(eval.worst_accuracy),
        "best_accuracy": as_f64(eval.best_accuracy),
        "avg_accuracy": as_f64(eval.avg_accuracy),
    })
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes `metrics.csv`, `summary.json` and `timing.txt` into `out_dir`.
///
/// The metric table has one row per round with columns `round`,
/// `risk_g*`, `weight_g*`, `worst_risk`, `best_risk` and `weighted_risk`
/// (the adversary-weighted risk). The summary is JSON with keys in sorted
/// order. Both are byte-identical across repeated runs of the same
/// configuration; only `timing.txt` carries wall-clock state.
pub fn emit_reports<S: Scalar>(
    trace: &TrainingTrace<S>,
    report: &RunReport,
    out_dir: &Path,
) -> Result<ReportFiles> {
    if trace.rounds.len() != report.rounds {
        return Err(Error::invalid(format!(
            "trace has {} rounds but the report expects {}",
            trace.rounds.len(),
            report.rounds
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let num_groups = trace
        .rounds
        .first()
        .map(|r| r.group_risks.len())
        .unwrap_or(0);

    let metrics_path = out_dir.join("metrics.csv");
    {
        let mut out = create_file(&metrics_path)?;
        let mut header = vec!["round".to_string()];
        header.extend((0..num_groups).map(|a| format!("risk_g{a}")));
        header.extend((0..num_groups).map(|a| format!("weight_g{a}")));
        header.extend(["worst_risk", "best_risk", "weighted_risk"].map(String::from));
        writeln!(out, "{}", header.join(","))
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        for (t, record) in trace.rounds.iter().enumerate() {
            let mut row = vec![format!("{}", t + 1)];
            row.extend(record.group_risks.iter().map(|&r| format!("{:?}", as_f64(r))));
            row.extend(record.group_weights.iter().map(|&w| format!("{:?}", as_f64(w))));
            let worst = record
                .group_risks
                .iter()
                .copied()
                .fold(S::neg_infinity(), |m, r| if r > m { r } else { m });
            let best = record
                .group_risks
                .iter()
                .copied()
                .fold(S::infinity(), |m, r| if r < m { r } else { m });
            let weighted: S = record
                .group_risks
                .iter()
                .zip(record.group_weights.iter())
                .map(|(&r, &w)| r * w)
                .sum();
            row.push(format!("{:?}", as_f64(worst)));
            row.push(format!("{:?}", as_f64(best)));
            row.push(format!("{:?}", as_f64(weighted)));
            writeln!(out, "{}", row.join(","))
                .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        }
        out.flush()
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    }

    let summary_path = out_dir.join("summary.json");
    {
        let last = trace.rounds.last().expect("trace has rounds");
        let summary = json!({
            "algorithm": trace.algorithm.name(),
            "output_mode": match trace.output_mode {
                crate::algorithms::OutputMode::IterateAverage => "iterate_average",
                crate::algorithms::OutputMode::FinalIterate => "final_iterate",
            },
            "rounds": trace.rounds.len(),
            "adversary_labels": trace.adversary_labels,
            "final_adversary_weights": f64_vec(&last.adversary_weights),
            "final_group_weights": f64_vec(&last.group_weights),
            "final_train_group_risks": f64_vec(&last.group_risks),
            "test_evaluation": trace
                .final_test_eval
                .as_ref()
                .map(eval_json)
                .unwrap_or(Value::Null),
            "config": report.config,
        });
        let mut out = create_file(&summary_path)?;
        serde_json::to_writer_pretty(&mut out, &summary)
            .map_err(|e| Error::Parse(format!("{}: {e}", summary_path.display())))?;
        writeln!(out).map_err(|e| Error::io(summary_path.display().to_string(), e))?;
        out.flush()
            .map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    }

    let timing_path = out_dir.join("timing.txt");
    {
        let mut out = create_file(&timing_path)?;
        writeln!(out, "wall_clock_secs: {:.6}", report.wall_clock_secs)
            .map_err(|e| Error::io(timing_path.display().to_string(), e))?;
        out.flush()
            .map_err(|e| Error::io(timing_path.display().to_string(), e))?;
    }

    Ok(ReportFiles {
        metrics: metrics_path,
        summary: summary_path,
        timing: timing_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{fedminmax_run, Algorithm, AlgorithmConfig};
    use crate::data::{
        compute_pa_matrix, generate_synthetic, partition, PartitionPlan, Setting, SyntheticSpec,
    };
    use crate::model::{Activation, LossKind, MlpSpec};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(entries: ndarray::Array2<f64>) -> GroupPriorMatrix<f64> {
        GroupPriorMatrix::from_entries(entries).unwrap()
    }

    #[test]
    fn induced_weights_identity_matrix_returns_lambda() {
        let pa = matrix(array![[1.0, 0.0], [0.0, 1.0]]);
        let lambda = SimplexWeights::from_values(vec![0.3, 0.7]).unwrap();
        let induced = induced_group_weights(&pa, &lambda).unwrap();
        assert_eq!(induced.values(), lambda.values());
    }

    #[test]
    fn induced_weights_uniform_lambda_gives_row_means() {
        let pa = matrix(array![[0.2, 0.6], [0.8, 0.4]]);
        let lambda = SimplexWeights::from_values(vec![0.5, 0.5]).unwrap();
        let induced = induced_group_weights(&pa, &lambda).unwrap();
        assert!((induced.get(0) - 0.4).abs() <= 1e-15);
        assert!((induced.get(1) - 0.6).abs() <= 1e-15);
    }

    #[test]
    fn induced_weights_sum_group_mass_over_single_group_clients() {
        // Clients 0,1 hold only group 0; clients 2,3 hold only group 1.
        let pa = matrix(array![[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]);
        let lambda = SimplexWeights::from_values(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let induced = induced_group_weights(&pa, &lambda).unwrap();
        assert!((induced.get(0) - 0.3).abs() <= 1e-15);
        assert!((induced.get(1) - 0.7).abs() <= 1e-15);
    }

    #[test]
    fn induced_weights_reject_dimension_mismatch() {
        let pa = matrix(array![[1.0, 0.0], [0.0, 1.0]]);
        let lambda = SimplexWeights::from_values(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(induced_group_weights(&pa, &lambda).is_err());
    }

    #[test]
    fn feasibility_with_identity_block_reaches_any_target() {
        // Single-group clients present for both groups: every target is a
        // convex combination of the one-hot columns.
        let pa = matrix(array![[1.0, 0.0, 0.6], [0.0, 1.0, 0.4]]);
        for target in [[0.9, 0.1], [0.25, 0.75], [1.0, 0.0]] {
            let t = SimplexWeights::from_values(target.to_vec()).unwrap();
            let report = weight_feasibility(&pa, &t, 1e-6).unwrap();
            assert!(report.feasible, "target {target:?}: residual {}", report.residual);
            assert!(report.residual <= 1e-8);
        }
    }

    #[test]
    fn feasibility_single_client_distance_is_to_its_prior() {
        let pa = matrix(array![[0.3], [0.7]]);
        let target = SimplexWeights::from_values(vec![1.0, 0.0]).unwrap();
        let report = weight_feasibility(&pa, &target, 1e-6).unwrap();
        assert!(!report.feasible);
        let expected = (0.7f64.powi(2) + 0.7f64.powi(2)).sqrt();
        assert!((report.residual - expected).abs() <= 1e-10);
        assert_eq!(report.lambda.values(), &[1.0]);
    }

    #[test]
    fn feasibility_round_trip_recovers_constructed_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for trial in 0..100 {
            let groups = 2 + trial % 3;
            let clients = 3 + trial % 5;
            // Random column-stochastic matrix with separated columns
            // (near-duplicate clients make the quadratic ill-conditioned,
            // which is a solver stress case, not a round-trip one).
            let mut columns: Vec<Vec<f64>> = Vec::new();
            while columns.len() < clients {
                let col: Vec<f64> = (0..groups).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = col.iter().sum();
                let col: Vec<f64> = col.iter().map(|v| v / s).collect();
                let separated = columns.iter().all(|prev| {
                    prev.iter()
                        .zip(col.iter())
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                        >= 0.1
                });
                if separated {
                    columns.push(col);
                }
            }
            let mut entries = ndarray::Array2::<f64>::zeros((groups, clients));
            for (k, col) in columns.iter().enumerate() {
                for a in 0..groups {
                    entries[(a, k)] = col[a];
                }
            }
            let pa = matrix(entries);
            let raw: Vec<f64> = (0..clients).map(|_| rng.gen_range(0.0..1.0)).collect();
            let lambda = project_simplex(&raw, 0.0).unwrap();
            let target = induced_group_weights(&pa, &lambda).unwrap();
            let report = weight_feasibility(&pa, &target, 1e-6).unwrap();
            assert!(
                report.residual <= 1e-8,
                "trial {trial}: residual {}",
                report.residual
            );
        }
    }

    #[test]
    fn feasibility_residuals_never_increase() {
        let pa = matrix(array![[0.9, 0.2, 0.5], [0.1, 0.8, 0.5]]);
        let target = SimplexWeights::from_values(vec![0.95, 0.05]).unwrap();
        let report = weight_feasibility(&pa, &target, 1e-6).unwrap();
        for pair in report.residual_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{} then {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn feasibility_rejects_dimension_mismatch() {
        let pa = matrix(array![[1.0, 0.0], [0.0, 1.0]]);
        let target = SimplexWeights::from_values(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(weight_feasibility(&pa, &target, 1e-6).is_err());
    }

    fn small_trace(seed: u64, rounds: usize) -> TrainingTrace<f64> {
        let ds = generate_synthetic(&SyntheticSpec {
            low_rates: vec![0.3, 0.1],
            high_rates: vec![0.6, 0.9],
            n_samples: 240,
            seed: 3,
        })
        .unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Esg, 3, 5)).unwrap();
        let cfg = AlgorithmConfig::new(
            Algorithm::FedMinMax,
            MlpSpec::new(vec![1, 4, 2], Activation::Relu).unwrap(),
            rounds,
            0.1,
            0.1,
            LossKind::Brier,
            seed,
        );
        fedminmax_run(&shards, &ds, &cfg).unwrap()
    }

    #[test]
    fn compare_runs_of_identical_traces_is_zero() {
        let a = small_trace(5, 12);
        let b = small_trace(5, 12);
        let cmp = compare_runs(&a, &b).unwrap();
        assert_eq!(cmp.max_param_diff, 0.0);
        assert_eq!(cmp.max_weight_diff, 0.0);
        assert!(cmp.param_diffs.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn compare_runs_reports_seed_differences_without_error() {
        let a = small_trace(5, 12);
        let b = small_trace(6, 12);
        let cmp = compare_runs(&a, &b).unwrap();
        assert!(cmp.max_param_diff > 0.0);
        assert_eq!(cmp.param_diffs.len(), 12);
    }

    #[test]
    fn compare_runs_rejects_round_count_mismatch() {
        let a = small_trace(5, 12);
        let b = small_trace(5, 13);
        assert!(compare_runs(&a, &b).is_err());
    }

    #[test]
    fn reports_have_one_row_per_round_and_rerun_byte_identical() {
        let trace = small_trace(9, 7);
        let report = RunReport {
            config: json!({"rounds": 7, "algorithm": "fedminmax"}),
            rounds: 7,
            wall_clock_secs: 1.25,
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let files_a = emit_reports(&trace, &report, dir_a.path()).unwrap();
        let files_b = emit_reports(&trace, &report, dir_b.path()).unwrap();

        let metrics = std::fs::read_to_string(&files_a.metrics).unwrap();
        assert_eq!(metrics.lines().count(), 8, "header plus one row per round");
        assert!(metrics.lines().next().unwrap().starts_with("round,risk_g0"));

        assert_eq!(
            std::fs::read(&files_a.metrics).unwrap(),
            std::fs::read(&files_b.metrics).unwrap()
        );
        assert_eq!(
            std::fs::read(&files_a.summary).unwrap(),
            std::fs::read(&files_b.summary).unwrap()
        );

        let parsed: Value =
            serde_json::from_str(&std::fs::read_to_string(&files_a.summary).unwrap()).unwrap();
        assert_eq!(parsed["rounds"], json!(7));
        assert_eq!(parsed["algorithm"], json!("fedminmax"));
        assert!(parsed["test_evaluation"]["group_risks"].is_array());
    }

    #[test]
    fn reports_surface_unwritable_directories_with_path() {
        let trace = small_trace(9, 3);
        let report = RunReport {
            config: json!({}),
            rounds: 3,
            wall_clock_secs: 0.0,
        };
        let file = tempfile::NamedTempFile::new().unwrap();
        let bogus = file.path().join("out");
        let err = emit_reports(&trace, &report, &bogus).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.contains("out")),
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn reports_reject_round_count_mismatch() {
        let trace = small_trace(9, 3);
        let report = RunReport {
            config: json!({}),
            rounds: 4,
            wall_clock_secs: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_reports(&trace, &report, dir.path()).is_err());
    }

    #[test]
    fn pa_matrix_from_runs_feeds_feasibility() {
        // End-to-end shape check: build P_A from shards, ask whether the
        // trace's final group weights are reachable by client weighting.
        let ds = generate_synthetic(&SyntheticSpec {
            low_rates: vec![0.3, 0.1],
            high_rates: vec![0.6, 0.9],
            n_samples: 400,
            seed: 21,
        })
        .unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Ssg, 4, 33)).unwrap();
        let pa = compute_pa_matrix(&shards).unwrap();
        let target = SimplexWeights::from_values(vec![0.85, 0.15]).unwrap();
        let report = weight_feasibility(&pa, &target, 1e-6).unwrap();
        // Single-group shards give one-hot columns, so anything is
        // reachable.
        assert!(report.feasible);
        let induced = induced_group_weights(&pa, &report.lambda).unwrap();
        assert!(induced.l1_distance(&target).unwrap() <= 1e-6);
    }
}
