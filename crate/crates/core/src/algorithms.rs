//! The training procedures: group-minimax methods, a client-minimax method
//! and the FedAvg baseline, plus risk/accuracy evaluation.
//!
//! All five runners share one round skeleton: the server broadcasts the
//! current parameters, every client computes statistics and (for the
//! federated methods) a local update against its own shard, and the server
//! reduces the reports in ascending client order so results never depend on
//! scheduling. The minimax methods additionally maintain an adversary
//! weight vector on a probability simplex and move it by projected gradient
//! ascent on the reported risks:
//!
//! * [`fedminmax_run`] — adversary over *groups*; clients reweight samples
//!   by `w = mu / rho` before their gradient step,
//! * [`centralized_minmax_run`] — the same saddle-point update computed on
//!   pooled data (one gradient step on `sum_a mu_a * risk_a`),
//! * [`localfedminmax_run`] — adversary over nonempty (group, client)
//!   cells, which needs no group statistics to cross client boundaries,
//! * [`afl_run`] — adversary over *clients*: plain local steps, aggregation
//!   weighted by the adversary,
//! * [`fedavg_run`] — E local epochs of minibatch SGD, averaged by data
//!   share.
//!
//! Everything is deterministic for a fixed configuration: identical seeds
//! produce bitwise-identical traces.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClientShard, GroupedDataset};
use crate::error::{Error, Result};
use crate::model::{
    argmax_rows, forward, init_params, per_sample_losses, weighted_loss_grad, LossKind, MlpSpec,
    ParamVector, WeightedBatch,
};
use crate::optim::{
    aggregate_params, importance_weights, pga_step, ImportanceWeights, SimplexWeights,
};
use crate::scalar::Scalar;

/// Which training procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Federated minimax over group weights.
    FedMinMax,
    /// Pooled-data minimax over group weights.
    CentralizedMinMax,
    /// Federated minimax over (group, client) cell weights.
    LocalFedMinMax,
    /// Federated minimax over client weights (agnostic federated learning).
    Afl,
    /// Federated averaging with local epochs.
    FedAvg,
}

impl Algorithm {
    /// Canonical lower-case name.
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedMinMax => "fedminmax",
            Algorithm::CentralizedMinMax => "centralized",
            Algorithm::LocalFedMinMax => "localfedminmax",
            Algorithm::Afl => "afl",
            Algorithm::FedAvg => "fedavg",
        }
    }

    /// True for the methods that maintain an adversary weight vector.
    pub fn is_minimax(&self) -> bool {
        !matches!(self, Algorithm::FedAvg)
    }
}

/// Which parameters a finished run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// Average of the per-round iterates `(1/T) sum_t theta^t`.
    IterateAverage,
    /// The last iterate `theta^T`.
    FinalIterate,
}

impl OutputMode {
    /// The conventional output for each method: iterate averaging for the
    /// minimax procedures, the final iterate for FedAvg.
    pub fn default_for(algorithm: Algorithm) -> Self {
        if algorithm.is_minimax() {
            OutputMode::IterateAverage
        } else {
            OutputMode::FinalIterate
        }
    }
}

/// Complete configuration of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig<S: Scalar> {
    /// Which procedure to run.
    pub algorithm: Algorithm,
    /// Network architecture.
    pub model: MlpSpec,
    /// Number of communication rounds `T`.
    pub rounds: usize,
    /// Learner step size.
    pub model_lr: S,
    /// Adversary (simplex ascent) step size; unused by FedAvg.
    pub adversary_lr: S,
    /// Floor on every adversary weight coordinate.
    pub simplex_floor: S,
    /// Per-sample loss.
    pub loss: LossKind,
    /// Which parameters the run outputs.
    pub output_mode: OutputMode,
    /// FedAvg only: local epochs per round.
    pub local_epochs: usize,
    /// FedAvg only: minibatch size (capped at the shard size).
    pub batch_size: usize,
    /// Seed for parameter initialization and minibatch shuffling.
    pub seed: u64,
    /// Record `theta^t` for every round in the trace (costs memory for
    /// large models; weights and risks are always recorded).
    pub record_params: bool,
}

impl<S: Scalar> AlgorithmConfig<S> {
    /// Configuration with the conventional output mode, no simplex floor,
    /// full-batch single-epoch local work and parameter recording on.
    pub fn new(
        algorithm: Algorithm,
        model: MlpSpec,
        rounds: usize,
        model_lr: S,
        adversary_lr: S,
        loss: LossKind,
        seed: u64,
    ) -> Self {
        AlgorithmConfig {
            algorithm,
            model,
            rounds,
            model_lr,
            adversary_lr,
            simplex_floor: S::zero(),
            loss,
            output_mode: OutputMode::default_for(algorithm),
            local_epochs: 1,
            batch_size: usize::MAX,
            seed,
            record_params: true,
        }
    }

    /// Validates the configuration for the runner that received it.
    fn validate_for(&self, algorithm: Algorithm) -> Result<()> {
        if self.algorithm != algorithm {
            return Err(Error::invalid(format!(
                "configuration names algorithm {:?} but was passed to the {:?} runner",
                self.algorithm.name(),
                algorithm.name()
            )));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("a run needs at least one round"));
        }
        if !self.model_lr.is_finite() || self.model_lr < S::zero() {
            return Err(Error::invalid("model step size must be finite and >= 0"));
        }
        if algorithm.is_minimax() && (!self.adversary_lr.is_finite() || self.adversary_lr < S::zero())
        {
            return Err(Error::invalid(
                "adversary step size must be finite and >= 0",
            ));
        }
        if algorithm == Algorithm::FedAvg && (self.local_epochs == 0 || self.batch_size == 0) {
            return Err(Error::invalid(
                "FedAvg needs local_epochs >= 1 and batch_size >= 1",
            ));
        }
        Ok(())
    }
}

/// What one client sends back to the server in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport<S: Scalar> {
    /// Reporting client.
    pub client_id: usize,
    /// Locally updated parameters `theta_k^t`.
    pub updated_params: ParamVector<S>,
    /// Per-group mean risk at the *pre-step* parameters; `None` where the
    /// client holds no samples of the group.
    pub group_risks: Vec<Option<S>>,
    /// Per-group sample counts `n_{a,k}`.
    pub group_counts: Vec<usize>,
    /// Mean risk over the whole shard at the pre-step parameters.
    pub total_risk: S,
}

/// One row of a [`TrainingTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<S: Scalar> {
    /// Aggregated parameters `theta^t` (present when recording is on).
    pub params: Option<ParamVector<S>>,
    /// The adversary vector after this round's ascent step, in its native
    /// coordinates (groups, clients or cells; FedAvg records its static
    /// client shares).
    pub adversary_weights: Vec<S>,
    /// The adversary's mass per *group* (equal to `adversary_weights` for
    /// the group-adversary methods, induced through the client priors
    /// otherwise).
    pub group_weights: Vec<S>,
    /// Aggregated per-group risks at the pre-step parameters.
    pub group_risks: Vec<S>,
}

/// Full record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<S: Scalar> {
    /// Which procedure produced the trace.
    pub algorithm: Algorithm,
    /// Which parameters `final_params` holds.
    pub output_mode: OutputMode,
    /// Human-readable labels of the adversary coordinates.
    pub adversary_labels: Vec<String>,
    /// One record per round, in order.
    pub rounds: Vec<RoundRecord<S>>,
    /// The run's output parameters (per `output_mode`).
    pub final_params: ParamVector<S>,
    /// Evaluation of `final_params` on the held-out set the runner was
    /// given; absent for runners that do not take one.
    pub final_test_eval: Option<GroupEval<S>>,
}

impl<S: Scalar> TrainingTrace<S> {
    /// Number of completed rounds.
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// The last round's per-group adversary mass.
    pub fn final_group_weights(&self) -> &[S] {
        &self.rounds.last().expect("trace has rounds").group_weights
    }

    /// The last round's adversary vector in native coordinates.
    pub fn final_adversary_weights(&self) -> &[S] {
        &self
            .rounds
            .last()
            .expect("trace has rounds")
            .adversary_weights
    }
}

/// Splitmix-style seed derivation: a deterministic, well-mixed sub-seed
/// for an independent random stream identified by `salt`.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn with_round_context(err: Error, round: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("round {round}: {msg}")),
        other => other,
    }
}

/// Mean loss per group from per-sample losses; `None` for absent groups.
fn group_means<S: Scalar>(
    per_sample: &[S],
    groups: &[usize],
    num_groups: usize,
) -> (Vec<Option<S>>, Vec<usize>) {
    let mut sums = vec![S::zero(); num_groups];
    let mut counts = vec![0usize; num_groups];
    for (&loss, &g) in per_sample.iter().zip(groups.iter()) {
        sums[g] += loss;
        counts[g] += 1;
    }
    let means = sums
        .iter()
        .zip(counts.iter())
        .map(|(&s, &c)| if c > 0 { Some(s / S::c(c as f64)) } else { None })
        .collect();
    (means, counts)
}

/// One client's work in one round of the minimax methods: a full-batch
/// gradient step on the importance-weighted shard risk
/// `r_k(theta, w) = (1/n_k) * sum_i w[group_i] * loss_i`, reporting
/// per-group risks at the pre-step parameters.
pub fn client_local_step<S: Scalar>(
    shard: &ClientShard<S>,
    params: &ParamVector<S>,
    model: &MlpSpec,
    weights: &ImportanceWeights<S>,
    model_lr: S,
    loss: LossKind,
) -> Result<ClientReport<S>> {
    let data = shard.data();
    if weights.dim() != data.num_groups() {
        return Err(Error::invalid(format!(
            "client {}: {} importance weights for {} groups",
            shard.client_id(),
            weights.dim(),
            data.num_groups()
        )));
    }
    if !model_lr.is_finite() || model_lr < S::zero() {
        return Err(Error::invalid("model step size must be finite and >= 0"));
    }
    let sample_weights: Vec<S> = data.groups().iter().map(|&g| weights.get(g)).collect();
    let batch = WeightedBatch::new(data.features(), data.targets(), &sample_weights)?;
    let n_k = S::c(data.len() as f64);
    let result = weighted_loss_grad(model, params, &batch, loss, n_k)?;

    let (group_risks, group_counts) =
        group_means(&result.per_sample, data.groups(), data.num_groups());
    for (a, risk) in group_risks.iter().enumerate() {
        if let Some(r) = risk {
            if !r.is_finite() {
                return Err(Error::Numeric(format!(
                    "client {}: risk of group {a} is not finite",
                    shard.client_id()
                )));
            }
        }
    }
    let mut total_risk = S::zero();
    for &l in &result.per_sample {
        total_risk += l;
    }
    total_risk /= n_k;

    let mut updated = params.clone();
    updated.scaled_add(-model_lr, &result.gradient)?;
    if !updated.is_finite() {
        return Err(Error::Numeric(format!(
            "client {}: updated parameters are not finite",
            shard.client_id()
        )));
    }
    Ok(ClientReport {
        client_id: shard.client_id(),
        updated_params: updated,
        group_risks,
        group_counts,
        total_risk,
    })
}

/// Per-group risks of one shard at fixed parameters (no gradient work).
fn shard_risks<S: Scalar>(
    shard: &ClientShard<S>,
    params: &ParamVector<S>,
    model: &MlpSpec,
    loss: LossKind,
) -> Result<(Vec<Option<S>>, Vec<usize>, S)> {
    let data = shard.data();
    let probs = forward(model, params, data.features())?;
    let per_sample = per_sample_losses(&probs, data.targets(), loss)?;
    let (risks, counts) = group_means(&per_sample, data.groups(), data.num_groups());
    let mut total = S::zero();
    for &l in &per_sample {
        total += l;
    }
    total /= S::c(data.len() as f64);
    Ok((risks, counts, total))
}

/// Shards sorted by ascending client id, with consistency checks.
fn ordered_shards<'a, S: Scalar>(
    shards: &'a [ClientShard<S>],
) -> Result<Vec<&'a ClientShard<S>>> {
    if shards.is_empty() {
        return Err(Error::invalid("a federation needs at least one shard"));
    }
    let mut order: Vec<&ClientShard<S>> = shards.iter().collect();
    order.sort_by_key(|s| s.client_id());
    for pair in order.windows(2) {
        if pair[0].client_id() == pair[1].client_id() {
            return Err(Error::invalid(format!(
                "duplicate client id {}",
                pair[0].client_id()
            )));
        }
    }
    let first = order[0].data();
    for shard in &order {
        let d = shard.data();
        if d.num_groups() != first.num_groups()
            || d.num_classes() != first.num_classes()
            || d.num_features() != first.num_features()
        {
            return Err(Error::invalid(
                "shards disagree on groups, classes or feature width",
            ));
        }
    }
    Ok(order)
}

/// Global per-group counts over a federation; every group must be present.
fn federation_group_counts<S: Scalar>(order: &[&ClientShard<S>]) -> Result<(Vec<usize>, usize)> {
    let num_groups = order[0].data().num_groups();
    let mut counts = vec![0usize; num_groups];
    let mut total = 0usize;
    for shard in order {
        for (a, &c) in shard.group_counts().iter().enumerate() {
            counts[a] += c;
        }
        total += shard.num_samples();
    }
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "group {a} has no samples anywhere in the federation"
        )));
    }
    Ok((counts, total))
}

fn check_finite_risks<S: Scalar>(risks: &[S], round: usize) -> Result<()> {
    for (a, &r) in risks.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::Numeric(format!(
                "round {round}: aggregated risk of group {a} is not finite"
            )));
        }
    }
    Ok(())
}

/// Shared finish: pick the output parameters, evaluate them if a test set
/// was supplied, assemble the trace.
#[allow(clippy::too_many_arguments)]
fn finish_trace<S: Scalar>(
    cfg: &AlgorithmConfig<S>,
    algorithm: Algorithm,
    adversary_labels: Vec<String>,
    rounds: Vec<RoundRecord<S>>,
    last_params: ParamVector<S>,
    mut param_sum: ParamVector<S>,
    test: Option<&GroupedDataset<S>>,
) -> Result<TrainingTrace<S>> {
    let final_params = match cfg.output_mode {
        OutputMode::FinalIterate => last_params,
        OutputMode::IterateAverage => {
            param_sum.scale(S::one() / S::c(cfg.rounds as f64));
            param_sum
        }
    };
    let final_test_eval = match test {
        Some(ds) => Some(evaluate(&cfg.model, &final_params, ds, cfg.loss)?),
        None => None,
    };
    Ok(TrainingTrace {
        algorithm,
        output_mode: cfg.output_mode,
        adversary_labels,
        rounds,
        final_params,
        final_test_eval,
    })
}

/// Federated minimax over group weights.
///
/// Round `t`: broadcast `theta^{t-1}` and `w = mu^{t-1} / rho`; every client
/// takes one importance-weighted full-batch step; the server averages the
/// updates by data share `n_k / n`, recombines the reported group risks as
/// `r_a = sum_k (n_{a,k} / n_a) r_{a,k}`, and moves `mu` by projected
/// gradient ascent along them. Outputs the iterate average by default.
pub fn fedminmax_run<S: Scalar>(
    shards: &[ClientShard<S>],
    test: &GroupedDataset<S>,
    cfg: &AlgorithmConfig<S>,
) -> Result<TrainingTrace<S>> {
    cfg.validate_for(Algorithm::FedMinMax)?;
    let order = ordered_shards(shards)?;
    let (group_counts, n) = federation_group_counts(&order)?;
    let num_groups = group_counts.len();
    let rho = SimplexWeights::<S>::from_counts(&group_counts)?;

    // Constants of the reduction, computed once: aggregation shares n_k/n
    // and risk-recombination ratios n_{a,k}/n_a.
    let total = S::c(n as f64);
    let agg_weights: Vec<S> = order
        .iter()
        .map(|s| S::c(s.num_samples() as f64) / total)
        .collect();
    let risk_ratios: Vec<Vec<S>> = order
        .iter()
        .map(|s| {
            s.group_counts()
                .iter()
                .enumerate()
                .map(|(a, &c)| S::c(c as f64) / S::c(group_counts[a] as f64))
                .collect()
        })
        .collect();

    let mut theta: ParamVector<S> = init_params(&cfg.model, cfg.seed);
    let mut mu = rho.clone();
    let mut param_sum = ParamVector::zeros(theta.len());
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let w = importance_weights(&mu, &rho)?;
        let mut updates = Vec::with_capacity(order.len());
        let mut group_risks = vec![S::zero(); num_groups];
        for (k, shard) in order.iter().enumerate() {
            let report = client_local_step(shard, &theta, &cfg.model, &w, cfg.model_lr, cfg.loss)
                .map_err(|e| with_round_context(e, t))?;
            for (a, risk) in report.group_risks.iter().enumerate() {
                if let Some(r) = risk {
                    group_risks[a] += risk_ratios[k][a] * *r;
                }
            }
            updates.push(report.updated_params);
        }
        theta = aggregate_params(&updates, &agg_weights)?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!(
                "round {t}: aggregated parameters are not finite"
            )));
        }
        check_finite_risks(&group_risks, t)?;
        mu = pga_step(&mu, &group_risks, cfg.adversary_lr, cfg.simplex_floor)
            .map_err(|e| with_round_context(e, t))?;
        param_sum.scaled_add(S::one(), &theta)?;
        rounds.push(RoundRecord {
            params: cfg.record_params.then(|| theta.clone()),
            adversary_weights: mu.to_vec(),
            group_weights: mu.to_vec(),
            group_risks,
        });
    }

    let labels = (0..num_groups).map(|a| format!("mu[g{a}]")).collect();
    finish_trace(cfg, Algorithm::FedMinMax, labels, rounds, theta, param_sum, Some(test))
}

/// Pooled-data minimax over group weights: one gradient-descent step on
/// `sum_a mu_a * risk_a(theta)` followed by the same ascent step on `mu`.
pub fn centralized_minmax_run<S: Scalar>(
    dataset: &GroupedDataset<S>,
    cfg: &AlgorithmConfig<S>,
) -> Result<TrainingTrace<S>> {
    cfg.validate_for(Algorithm::CentralizedMinMax)?;
    let num_groups = dataset.num_groups();
    if let Some(a) = dataset.group_counts().iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("group {a} has no samples")));
    }
    let rho = dataset.group_prior()?;
    let n = S::c(dataset.len() as f64);

    let mut theta: ParamVector<S> = init_params(&cfg.model, cfg.seed);
    let mut mu = rho.clone();
    let mut param_sum = ParamVector::zeros(theta.len());
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let w = importance_weights(&mu, &rho)?;
        // With sample weights w[group_i] and divisor n, the weighted loss
        // is exactly sum_a mu_a * risk_a(theta).
        let sample_weights: Vec<S> = dataset.groups().iter().map(|&g| w.get(g)).collect();
        let batch = WeightedBatch::new(dataset.features(), dataset.targets(), &sample_weights)?;
        let result = weighted_loss_grad(&cfg.model, &theta, &batch, cfg.loss, n)
            .map_err(|e| with_round_context(e, t))?;
        let (means, _counts) = group_means(&result.per_sample, dataset.groups(), num_groups);
        let group_risks: Vec<S> = means
            .into_iter()
            .map(|m| m.expect("every group is nonempty"))
            .collect();

        theta.scaled_add(-cfg.model_lr, &result.gradient)?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!(
                "round {t}: parameters are not finite"
            )));
        }
        check_finite_risks(&group_risks, t)?;
        mu = pga_step(&mu, &group_risks, cfg.adversary_lr, cfg.simplex_floor)
            .map_err(|e| with_round_context(e, t))?;
        param_sum.scaled_add(S::one(), &theta)?;
        rounds.push(RoundRecord {
            params: cfg.record_params.then(|| theta.clone()),
            adversary_weights: mu.to_vec(),
            group_weights: mu.to_vec(),
            group_risks,
        });
    }

    let labels = (0..num_groups).map(|a| format!("mu[g{a}]")).collect();
    finish_trace(cfg, Algorithm::CentralizedMinMax, labels, rounds, theta, param_sum, None)
}

/// Federated minimax over nonempty (group, client) cells.
///
/// The adversary vector has one coordinate per nonempty cell, initialized
/// at the cell share `n_{a,k} / n`; client `k` reweights its group-`a`
/// samples by `mu_{a,k} / rho_{a,k}`, and the ascent gradient entry for a
/// cell is that client's own group risk — no cross-client recombination.
pub fn localfedminmax_run<S: Scalar>(
    shards: &[ClientShard<S>],
    test: &GroupedDataset<S>,
    cfg: &AlgorithmConfig<S>,
) -> Result<TrainingTrace<S>> {
    cfg.validate_for(Algorithm::LocalFedMinMax)?;
    let order = ordered_shards(shards)?;
    let (group_counts, n) = federation_group_counts(&order)?;
    let num_groups = group_counts.len();
    let total = S::c(n as f64);

    // Enumerate nonempty cells in (client, group) order.
    let mut cells: Vec<(usize, usize)> = Vec::new(); // (position in order, group)
    let mut cell_counts: Vec<usize> = Vec::new();
    for (k, shard) in order.iter().enumerate() {
        for (a, &c) in shard.group_counts().iter().enumerate() {
            if c > 0 {
                cells.push((k, a));
                cell_counts.push(c);
            }
        }
    }
    let rho_cells: Vec<S> = cell_counts.iter().map(|&c| S::c(c as f64) / total).collect();
    let mut mu = SimplexWeights::<S>::from_counts(&cell_counts)?;

    let agg_weights: Vec<S> = order
        .iter()
        .map(|s| S::c(s.num_samples() as f64) / total)
        .collect();

    let mut theta: ParamVector<S> = init_params(&cfg.model, cfg.seed);
    let mut param_sum = ParamVector::zeros(theta.len());
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        // Scatter the per-cell ratios mu/rho into per-client group weights.
        let mut client_weights: Vec<Vec<S>> = vec![vec![S::zero(); num_groups]; order.len()];
        for (c, &(k, a)) in cells.iter().enumerate() {
            client_weights[k][a] = mu.get(c) / rho_cells[c];
        }

        let mut updates = Vec::with_capacity(order.len());
        let mut cell_risks = vec![S::zero(); cells.len()];
        let mut group_risks = vec![S::zero(); num_groups];
        for (k, shard) in order.iter().enumerate() {
            let w = ImportanceWeights::from_values(client_weights[k].clone())?;
            let report = client_local_step(shard, &theta, &cfg.model, &w, cfg.model_lr, cfg.loss)
                .map_err(|e| with_round_context(e, t))?;
            for (c, &(ck, a)) in cells.iter().enumerate() {
                if ck == k {
                    let r = report.group_risks[a].expect("cell is nonempty");
                    cell_risks[c] = r;
                    group_risks[a] +=
                        S::c(report.group_counts[a] as f64) / S::c(group_counts[a] as f64) * r;
                }
            }
            updates.push(report.updated_params);
        }
        theta = aggregate_params(&updates, &agg_weights)?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!(
                "round {t}: aggregated parameters are not finite"
            )));
        }
        check_finite_risks(&cell_risks, t)?;
        mu = pga_step(&mu, &cell_risks, cfg.adversary_lr, cfg.simplex_floor)
            .map_err(|e| with_round_context(e, t))?;

        // Group view of the cell adversary: mass per group.
        let mut cell_group_weights = vec![S::zero(); num_groups];
        for (c, &(_, a)) in cells.iter().enumerate() {
            cell_group_weights[a] += mu.get(c);
        }
        param_sum.scaled_add(S::one(), &theta)?;
        rounds.push(RoundRecord {
            params: cfg.record_params.then(|| theta.clone()),
            adversary_weights: mu.to_vec(),
            group_weights: cell_group_weights,
            group_risks,
        });
    }

    let labels = cells
        .iter()
        .map(|&(k, a)| format!("mu[g{a},k{}]", order[k].client_id()))
        .collect();
    finish_trace(cfg, Algorithm::LocalFedMinMax, labels, rounds, theta, param_sum, Some(test))
}

/// Federated minimax over client weights (agnostic federated learning).
///
/// Clients take plain unweighted full-batch steps and report their total
/// shard risk; the server aggregates the updates with the adversary vector
/// `lambda^{t-1}` (initialized at the data shares) and moves `lambda` by
/// projected ascent along the client risks. Equivalent to [`fedminmax_run`]
/// with every client treated as its own singleton group.
pub fn afl_run<S: Scalar>(
    shards: &[ClientShard<S>],
    test: &GroupedDataset<S>,
    cfg: &AlgorithmConfig<S>,
) -> Result<TrainingTrace<S>> {
    cfg.validate_for(Algorithm::Afl)?;
    let order = ordered_shards(shards)?;
    let (group_counts, _) = federation_group_counts(&order)?;
    let num_groups = group_counts.len();
    let client_counts: Vec<usize> = order.iter().map(|s| s.num_samples()).collect();
    let mut lambda = SimplexWeights::<S>::from_counts(&client_counts)?;
    // Column k of the client prior matrix: n_{a,k} / n_k.
    let client_priors: Vec<Vec<S>> = order
        .iter()
        .map(|s| {
            let n_k = S::c(s.num_samples() as f64);
            s.group_counts()
                .iter()
                .map(|&c| S::c(c as f64) / n_k)
                .collect()
        })
        .collect();
    let unit = ImportanceWeights::from_values(vec![S::one(); num_groups])?;

    let mut theta: ParamVector<S> = init_params(&cfg.model, cfg.seed);
    let mut param_sum = ParamVector::zeros(theta.len());
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let mut updates = Vec::with_capacity(order.len());
        let mut client_risks = Vec::with_capacity(order.len());
        let mut group_risks = vec![S::zero(); num_groups];
        for shard in &order {
            let report = client_local_step(shard, &theta, &cfg.model, &unit, cfg.model_lr, cfg.loss)
                .map_err(|e| with_round_context(e, t))?;
            for (a, risk) in report.group_risks.iter().enumerate() {
                if let Some(r) = risk {
                    group_risks[a] +=
                        S::c(report.group_counts[a] as f64) / S::c(group_counts[a] as f64) * *r;
                }
            }
            client_risks.push(report.total_risk);
            updates.push(report.updated_params);
        }
        theta = aggregate_params(&updates, lambda.values())?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!(
                "round {t}: aggregated parameters are not finite"
            )));
        }
        check_finite_risks(&client_risks, t)?;
        lambda = pga_step(&lambda, &client_risks, cfg.adversary_lr, cfg.simplex_floor)
            .map_err(|e| with_round_context(e, t))?;

        // Induced group mass: P_A * lambda.
        let mut induced = vec![S::zero(); num_groups];
        for a in 0..num_groups {
            for (k, &l) in lambda.values().iter().enumerate() {
                induced[a] += client_priors[k][a] * l;
            }
        }
        param_sum.scaled_add(S::one(), &theta)?;
        rounds.push(RoundRecord {
            params: cfg.record_params.then(|| theta.clone()),
            adversary_weights: lambda.to_vec(),
            group_weights: induced,
            group_risks,
        });
    }

    let labels = order
        .iter()
        .map(|s| format!("lambda[k{}]", s.client_id()))
        .collect();
    finish_trace(cfg, Algorithm::Afl, labels, rounds, theta, param_sum, Some(test))
}

/// Federated averaging: every round each client runs `local_epochs` epochs
/// of minibatch SGD from the broadcast parameters, and the server averages
/// the results by data share. Reports the final iterate by default.
pub fn fedavg_run<S: Scalar>(
    shards: &[ClientShard<S>],
    test: &GroupedDataset<S>,
    cfg: &AlgorithmConfig<S>,
) -> Result<TrainingTrace<S>> {
    cfg.validate_for(Algorithm::FedAvg)?;
    let order = ordered_shards(shards)?;
    let (group_counts, n) = federation_group_counts(&order)?;
    let num_groups = group_counts.len();
    let total = S::c(n as f64);
    let agg_weights: Vec<S> = order
        .iter()
        .map(|s| S::c(s.num_samples() as f64) / total)
        .collect();
    let risk_ratios: Vec<Vec<S>> = order
        .iter()
        .map(|s| {
            s.group_counts()
                .iter()
                .enumerate()
                .map(|(a, &c)| S::c(c as f64) / S::c(group_counts[a] as f64))
                .collect()
        })
        .collect();

    // One shuffle stream per client, independent of the others.
    let mut client_rngs: Vec<ChaCha8Rng> = order
        .iter()
        .map(|s| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1 + s.client_id() as u64)))
        .collect();

    let mut theta: ParamVector<S> = init_params(&cfg.model, cfg.seed);
    let mut param_sum = ParamVector::zeros(theta.len());
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let ones_cache: Vec<Vec<S>> = order
        .iter()
        .map(|s| vec![S::one(); s.num_samples()])
        .collect();

    for t in 1..=cfg.rounds {
        let mut updates = Vec::with_capacity(order.len());
        let mut group_risks = vec![S::zero(); num_groups];
        for (k, shard) in order.iter().enumerate() {
            let data = shard.data();
            let (risks, _counts, _total) = shard_risks(shard, &theta, &cfg.model, cfg.loss)
                .map_err(|e| with_round_context(e, t))?;
            for (a, risk) in risks.iter().enumerate() {
                if let Some(r) = risk {
                    if !r.is_finite() {
                        return Err(Error::Numeric(format!(
                            "round {t}: client {} has a non-finite risk for group {a}",
                            shard.client_id()
                        )));
                    }
                    group_risks[a] += risk_ratios[k][a] * *r;
                }
            }

            let mut local = theta.clone();
            let n_k = data.len();
            let batch = cfg.batch_size.min(n_k);
            let mut indices: Vec<usize> = (0..n_k).collect();
            for _epoch in 0..cfg.local_epochs {
                indices.shuffle(&mut client_rngs[k]);
                for chunk in indices.chunks(batch) {
                    let sub = data.subset(chunk)?;
                    let wb = WeightedBatch::new(
                        sub.features(),
                        sub.targets(),
                        &ones_cache[k][..chunk.len()],
                    )?;
                    let grad = weighted_loss_grad(
                        &cfg.model,
                        &local,
                        &wb,
                        cfg.loss,
                        S::c(chunk.len() as f64),
                    )
                    .map_err(|e| with_round_context(e, t))?
                    .gradient;
                    local.scaled_add(-cfg.model_lr, &grad)?;
                }
            }
            if !local.is_finite() {
                return Err(Error::Numeric(format!(
                    "round {t}: client {} produced non-finite parameters",
                    shard.client_id()
                )));
            }
            updates.push(local);
        }
        theta = aggregate_params(&updates, &agg_weights)?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!(
                "round {t}: aggregated parameters are not finite"
            )));
        }
        check_finite_risks(&group_risks, t)?;
        param_sum.scaled_add(S::one(), &theta)?;
        rounds.push(RoundRecord {
            params: cfg.record_params.then(|| theta.clone()),
            adversary_weights: agg_weights.clone(),
            group_weights: group_counts
                .iter()
                .map(|&c| S::c(c as f64) / total)
                .collect(),
            group_risks,
        });
    }

    let labels = order
        .iter()
        .map(|s| format!("share[k{}]", s.client_id()))
        .collect();
    finish_trace(cfg, Algorithm::FedAvg, labels, rounds, theta, param_sum, Some(test))
}

/// Per-group evaluation of a parameter vector on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEval<S: Scalar> {
    /// Mean loss per group.
    pub group_risks: Vec<S>,
    /// Argmax-match rate per group.
    pub group_accuracies: Vec<S>,
    /// Sample count per group.
    pub group_counts: Vec<usize>,
    /// Largest group risk.
    pub worst_risk: S,
    /// Smallest group risk.
    pub best_risk: S,
    /// Count-weighted mean risk (= overall mean loss).
    pub avg_risk: S,
    /// Smallest group accuracy.
    pub worst_accuracy: S,
    /// Largest group accuracy.
    pub best_accuracy: S,
    /// Count-weighted mean accuracy.
    pub avg_accuracy: S,
}

/// Per-client evaluation of a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientEval<S: Scalar> {
    pub client_id: usize,
    /// Mean loss over the client's shard.
    pub risk: S,
    /// Argmax-match rate over the client's shard.
    pub accuracy: S,
    /// Shard size.
    pub count: usize,
}

/// Evaluates parameters on a dataset, per group.
///
/// Every group must be present in the dataset; the summary rows report the
/// worst (largest-risk / smallest-accuracy) and best groups plus the
/// count-weighted averages.
pub fn evaluate<S: Scalar>(
    model: &MlpSpec,
    params: &ParamVector<S>,
    dataset: &GroupedDataset<S>,
    loss: LossKind,
) -> Result<GroupEval<S>> {
    if let Some(a) = dataset.group_counts().iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "evaluation set has no samples of group {a}"
        )));
    }
    let probs = forward(model, params, dataset.features())?;
    let losses = per_sample_losses(&probs, dataset.targets(), loss)?;
    let predictions = argmax_rows(&probs);

    let num_groups = dataset.num_groups();
    let mut risk_sums = vec![S::zero(); num_groups];
    let mut hit_sums = vec![S::zero(); num_groups];
    for i in 0..dataset.len() {
        let g = dataset.groups()[i];
        risk_sums[g] += losses[i];
        if predictions[i] == dataset.targets()[i] {
            hit_sums[g] += S::one();
        }
    }
    let counts = dataset.group_counts().to_vec();
    let n = S::c(dataset.len() as f64);
    let mut group_risks = Vec::with_capacity(num_groups);
    let mut group_accuracies = Vec::with_capacity(num_groups);
    let mut avg_risk = S::zero();
    let mut avg_accuracy = S::zero();
    for a in 0..num_groups {
        let c = S::c(counts[a] as f64);
        let risk = risk_sums[a] / c;
        let acc = hit_sums[a] / c;
        avg_risk += risk * c / n;
        avg_accuracy += acc * c / n;
        group_risks.push(risk);
        group_accuracies.push(acc);
    }
    let fold = |values: &[S], pick_max: bool| -> S {
        let mut out = values[0];
        for &v in &values[1..] {
            if (pick_max && v > out) || (!pick_max && v < out) {
                out = v;
            }
        }
        out
    };
    Ok(GroupEval {
        worst_risk: fold(&group_risks, true),
        best_risk: fold(&group_risks, false),
        avg_risk,
        worst_accuracy: fold(&group_accuracies, false),
        best_accuracy: fold(&group_accuracies, true),
        avg_accuracy,
        group_risks,
        group_accuracies,
        group_counts: counts,
    })
}

/// Evaluates parameters per client shard.
pub fn evaluate_clients<S: Scalar>(
    model: &MlpSpec,
    params: &ParamVector<S>,
    shards: &[ClientShard<S>],
    loss: LossKind,
) -> Result<Vec<ClientEval<S>>> {
    let order = ordered_shards(shards)?;
    let mut out = Vec::with_capacity(order.len());
    for shard in order {
        let data = shard.data();
        let probs = forward(model, params, data.features())?;
        let losses = per_sample_losses(&probs, data.targets(), loss)?;
        let predictions = argmax_rows(&probs);
        let mut risk = S::zero();
        let mut hits = S::zero();
        for i in 0..data.len() {
            risk += losses[i];
            if predictions[i] == data.targets()[i] {
                hits += S::one();
            }
        }
        let c = S::c(data.len() as f64);
        out.push(ClientEval {
            client_id: shard.client_id(),
            risk: risk / c,
            accuracy: hits / c,
            count: data.len(),
        });
    }
    Ok(out)
}
