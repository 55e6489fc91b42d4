//! Datasets with group labels, synthetic generation and client partitioning.
//!
//! A [`GroupedDataset`] is a set of feature rows where every sample carries
//! both a class target and a demographic group index. [`partition`] splits
//! such a dataset across simulated clients under three access patterns:
//!
//! * **ESG** — every client holds a near-equal share of every group,
//! * **PSG** — the clients are divided into two halves and each group's data
//!   goes entirely to one half, with unequal shard sizes,
//! * **SSG** — every client holds data from exactly one group.
//!
//! All randomized steps (sampling, shuffling, size draws) are driven by a
//! caller-supplied seed and are single-threaded, so the same inputs always
//! yield the same shards.

mod csv;
mod snapshot;

pub use csv::{load_csv, CsvSchema};
pub use snapshot::{load_dataset, load_partition, save_dataset, save_partition};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optim::SimplexWeights;
use crate::scalar::Scalar;

/// Concentration of the symmetric Dirichlet that draws per-client data
/// proportions within a group for the PSG and SSG settings.
pub const SIZE_DIRICHLET_ALPHA: f64 = 5.0;

/// Minimum number of samples per nonempty (group, client) cell in the PSG
/// and SSG settings, so no client is left with a vanishing shard.
pub const MIN_CELL_SAMPLES: usize = 10;

/// One sample: feature vector, class target and group membership.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample<S: Scalar> {
    pub features: Vec<S>,
    pub target: usize,
    pub group: usize,
}

/// An immutable dataset of grouped samples in columnar layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset<S: Scalar> {
    features: Array2<S>,
    targets: Vec<usize>,
    groups: Vec<usize>,
    num_groups: usize,
    num_classes: usize,
    group_counts: Vec<usize>,
}

impl<S: Scalar> GroupedDataset<S> {
    /// Builds a dataset from columnar storage.
    ///
    /// `num_groups` and `num_classes` fix the global cardinalities; they may
    /// exceed what is locally present (a client shard usually misses some
    /// groups) but every label must stay below them.
    pub fn from_columns(
        features: Array2<S>,
        targets: Vec<usize>,
        groups: Vec<usize>,
        num_groups: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if targets.len() != n || groups.len() != n {
            return Err(Error::invalid(format!(
                "column length mismatch: {n} feature rows, {} targets, {} groups",
                targets.len(),
                groups.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid("a dataset needs at least 2 classes"));
        }
        if num_groups == 0 {
            return Err(Error::invalid("a dataset needs at least 1 group"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset features must be finite"));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= num_classes) {
            return Err(Error::invalid(format!(
                "target {t} out of range for {num_classes} classes"
            )));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= num_groups) {
            return Err(Error::invalid(format!(
                "group {g} out of range for {num_groups} groups"
            )));
        }
        let mut group_counts = vec![0usize; num_groups];
        for &g in &groups {
            group_counts[g] += 1;
        }
        Ok(GroupedDataset {
            features,
            targets,
            groups,
            num_groups,
            num_classes,
            group_counts,
        })
    }

    /// Builds a dataset from a list of samples.
    pub fn from_samples(
        samples: &[GroupedSample<S>],
        num_groups: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        let dim = samples[0].features.len();
        if samples.iter().any(|s| s.features.len() != dim) {
            return Err(Error::invalid("samples must share the same feature width"));
        }
        let mut flat = Vec::with_capacity(samples.len() * dim);
        let mut targets = Vec::with_capacity(samples.len());
        let mut groups = Vec::with_capacity(samples.len());
        for s in samples {
            flat.extend_from_slice(&s.features);
            targets.push(s.target);
            groups.push(s.group);
        }
        let features = Array2::from_shape_vec((samples.len(), dim), flat)
            .expect("sample layout is rectangular");
        GroupedDataset::from_columns(features, targets, groups, num_groups, num_classes)
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    /// True when the dataset has no samples (never holds once constructed).
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Feature width.
    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Global number of groups.
    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    /// Global number of classes.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Feature matrix view (samples by features).
    pub fn features(&self) -> ArrayView2<'_, S> {
        self.features.view()
    }

    /// Class targets in sample order.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Group indices in sample order.
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// Per-group sample counts `n_a` (zero entries allowed).
    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    /// Empirical group prior `{ n_a / n }`.
    pub fn group_prior(&self) -> Result<SimplexWeights<S>> {
        SimplexWeights::from_counts(&self.group_counts)
    }

    /// Copies sample `index` out of columnar storage.
    pub fn sample(&self, index: usize) -> GroupedSample<S> {
        GroupedSample {
            features: self.features.row(index).to_vec(),
            target: self.targets[index],
            group: self.groups[index],
        }
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<GroupedDataset<S>> {
        if indices.is_empty() {
            return Err(Error::invalid("subset must select at least one sample"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let dim = self.num_features();
        let mut flat = Vec::with_capacity(indices.len() * dim);
        let mut targets = Vec::with_capacity(indices.len());
        let mut groups = Vec::with_capacity(indices.len());
        for &i in indices {
            flat.extend(self.features.row(i).iter().copied());
            targets.push(self.targets[i]);
            groups.push(self.groups[i]);
        }
        let features =
            Array2::from_shape_vec((indices.len(), dim), flat).expect("rectangular subset");
        GroupedDataset::from_columns(features, targets, groups, self.num_groups, self.num_classes)
    }
}

/// One client's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard<S: Scalar> {
    client_id: usize,
    data: GroupedDataset<S>,
}

impl<S: Scalar> ClientShard<S> {
    /// Wraps a dataset as the shard of the given client.
    pub fn new(client_id: usize, data: GroupedDataset<S>) -> Self {
        ClientShard { client_id, data }
    }

    /// The owning client's index.
    pub fn client_id(&self) -> usize {
        self.client_id
    }

    /// The local dataset.
    pub fn data(&self) -> &GroupedDataset<S> {
        &self.data
    }

    /// Local sample count `n_k`.
    pub fn num_samples(&self) -> usize {
        self.data.len()
    }

    /// Local per-group counts `n_{a,k}` (zeros for absent groups).
    pub fn group_counts(&self) -> &[usize] {
        self.data.group_counts()
    }
}

/// Parameters of the synthetic two-region classification task.
///
/// Group membership is uniform over the groups, the single feature is
/// standard normal, and the positive-class probability of group `a` is
/// `low_rates[a]` where the feature is non-positive and `high_rates[a]`
/// where it is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// P(Y = 1 | X <= 0, A = a) per group.
    pub low_rates: Vec<f64>,
    /// P(Y = 1 | X > 0, A = a) per group.
    pub high_rates: Vec<f64>,
    /// Number of samples to draw.
    pub n_samples: usize,
    /// RNG seed.
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("synthetic spec needs n_samples >= 1"));
        }
        if self.low_rates.is_empty() || self.low_rates.len() != self.high_rates.len() {
            return Err(Error::invalid(
                "low_rates and high_rates must be non-empty and equal-length",
            ));
        }
        let ok = |v: &f64| (0.0..=1.0).contains(v);
        if !self.low_rates.iter().all(ok) || !self.high_rates.iter().all(ok) {
            return Err(Error::invalid("conditional rates must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of groups described by the spec.
    pub fn num_groups(&self) -> usize {
        self.low_rates.len()
    }
}

/// Draws a synthetic dataset; deterministic per seed.
///
/// Per sample the draw order is group, feature, label, all in `f64` before
/// conversion to the target scalar type.
pub fn generate_synthetic<S: Scalar>(spec: &SyntheticSpec) -> Result<GroupedDataset<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups_total = spec.num_groups();
    let n = spec.n_samples;
    let mut flat = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.gen_range(0..groups_total);
        let x: f64 = StandardNormal.sample(&mut rng);
        let rate = if x <= 0.0 {
            spec.low_rates[a]
        } else {
            spec.high_rates[a]
        };
        let y = usize::from(rng.gen::<f64>() < rate);
        flat.push(S::c(x));
        targets.push(y);
        groups.push(a);
    }
    let features = Array2::from_shape_vec((n, 1), flat).expect("one feature per sample");
    GroupedDataset::from_columns(features, targets, groups, groups_total, 2)
}

/// Client access pattern used by [`partition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    /// Equal access: every client receives a near-equal share of every group.
    Esg,
    /// Partial access: clients form two halves and each group's data goes
    /// entirely to one half; shard sizes vary.
    Psg,
    /// Single access: every client holds data from exactly one group.
    Ssg,
}

impl Setting {
    /// Canonical lower-case name.
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Esg => "esg",
            Setting::Psg => "psg",
            Setting::Ssg => "ssg",
        }
    }
}

/// How to split a dataset across clients.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// Access pattern.
    pub setting: Setting,
    /// Number of clients `|K|`.
    pub num_clients: usize,
    /// PSG only: which client half (0 or 1) each group belongs to. `None`
    /// assigns group `a` to half `a % 2`.
    pub psg_group_split: Option<Vec<u8>>,
    /// Seed for shuffling and size draws.
    pub seed: u64,
}

impl PartitionPlan {
    /// Plan with the default PSG split.
    pub fn new(setting: Setting, num_clients: usize, seed: u64) -> Self {
        PartitionPlan {
            setting,
            num_clients,
            psg_group_split: None,
            seed,
        }
    }
}

/// Draws per-client sample counts within one group: Dirichlet proportions
/// with a floor, summing exactly to `total`.
fn dirichlet_sizes(
    rng: &mut ChaCha8Rng,
    total: usize,
    parts: usize,
    floor: usize,
) -> Result<Vec<usize>> {
    if parts == 0 {
        return Err(Error::invalid("cannot split a group over zero clients"));
    }
    if total < parts * floor {
        return Err(Error::invalid(format!(
            "{total} samples cannot satisfy a floor of {floor} across {parts} clients"
        )));
    }
    if parts == 1 {
        return Ok(vec![total]);
    }
    let dirichlet = rand_distr::Dirichlet::new_with_size(SIZE_DIRICHLET_ALPHA, parts)
        .expect("valid Dirichlet parameters");
    let proportions = dirichlet.sample(rng);

    // Largest-remainder rounding of proportions * total.
    let mut counts = vec![0usize; parts];
    let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(parts);
    let mut assigned = 0usize;
    for (i, &p) in proportions.iter().enumerate() {
        let exact = p * total as f64;
        let base = exact.floor() as usize;
        counts[i] = base;
        assigned += base;
        fractions.push((exact - base as f64, i));
    }
    fractions.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite fractions").then(a.1.cmp(&b.1)));
    for &(_, i) in fractions.iter().take(total - assigned) {
        counts[i] += 1;
    }

    // Raise deficient cells to the floor, taking from the largest cells.
    for i in 0..parts {
        while counts[i] < floor {
            let donor = (0..parts)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .expect("parts is positive");
            debug_assert!(counts[donor] > floor);
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), total);
    Ok(counts)
}

/// Indices of every sample of each group, in dataset order.
fn indices_by_group<S: Scalar>(dataset: &GroupedDataset<S>) -> Vec<Vec<usize>> {
    let mut by_group = vec![Vec::new(); dataset.num_groups()];
    for (i, &g) in dataset.groups().iter().enumerate() {
        by_group[g].push(i);
    }
    by_group
}

/// Splits chunk sizes out of a shuffled index list and appends each chunk to
/// the corresponding client's index set.
fn deal_chunks(
    shuffled: &[usize],
    sizes: &[usize],
    clients: &[usize],
    assignment: &mut [Vec<usize>],
) {
    let mut cursor = 0;
    for (&client, &size) in clients.iter().zip(sizes.iter()) {
        assignment[client].extend_from_slice(&shuffled[cursor..cursor + size]);
        cursor += size;
    }
    debug_assert_eq!(cursor, shuffled.len());
}

/// Splits a dataset into client shards according to `plan`.
///
/// The shards are pairwise disjoint, their union is exactly the input
/// dataset, and within every shard samples keep their dataset order. The
/// result is deterministic for a fixed dataset and plan.
pub fn partition<S: Scalar>(
    dataset: &GroupedDataset<S>,
    plan: &PartitionPlan,
) -> Result<Vec<ClientShard<S>>> {
    let k = plan.num_clients;
    if k == 0 {
        return Err(Error::invalid("partition needs at least one client"));
    }
    let num_groups = dataset.num_groups();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let by_group = indices_by_group(dataset);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];

    match plan.setting {
        Setting::Esg => {
            for indices in &by_group {
                let mut shuffled = indices.clone();
                shuffled.shuffle(&mut rng);
                let base = shuffled.len() / k;
                let remainder = shuffled.len() % k;
                let sizes: Vec<usize> = (0..k)
                    .map(|c| base + usize::from(c < remainder))
                    .collect();
                let clients: Vec<usize> = (0..k).collect();
                deal_chunks(&shuffled, &sizes, &clients, &mut assignment);
            }
        }
        Setting::Psg => {
            let split = match &plan.psg_group_split {
                Some(s) => s.clone(),
                None => (0..num_groups).map(|a| (a % 2) as u8).collect(),
            };
            if split.len() != num_groups {
                return Err(Error::invalid(format!(
                    "PSG split lists {} groups but the dataset has {num_groups}",
                    split.len()
                )));
            }
            if split.iter().any(|&h| h > 1) {
                return Err(Error::invalid("PSG split entries must be 0 or 1"));
            }
            let first_half: Vec<usize> = (0..k.div_ceil(2)).collect();
            let second_half: Vec<usize> = (k.div_ceil(2)..k).collect();
            for (a, indices) in by_group.iter().enumerate() {
                if indices.is_empty() {
                    continue;
                }
                let clients = if split[a] == 0 {
                    &first_half
                } else {
                    &second_half
                };
                if clients.is_empty() {
                    return Err(Error::invalid(format!(
                        "PSG assigns group {a} to an empty client half"
                    )));
                }
                let mut shuffled = indices.clone();
                shuffled.shuffle(&mut rng);
                let sizes =
                    dirichlet_sizes(&mut rng, shuffled.len(), clients.len(), MIN_CELL_SAMPLES)?;
                deal_chunks(&shuffled, &sizes, clients, &mut assignment);
            }
        }
        Setting::Ssg => {
            if k < num_groups {
                return Err(Error::invalid(format!(
                    "SSG needs at least one client per group: {k} clients for {num_groups} groups"
                )));
            }
            // Contiguous client blocks per group, sized as evenly as possible.
            let base = k / num_groups;
            let remainder = k % num_groups;
            let mut next_client = 0;
            for (a, indices) in by_group.iter().enumerate() {
                let block = base + usize::from(a < remainder);
                let clients: Vec<usize> = (next_client..next_client + block).collect();
                next_client += block;
                if indices.is_empty() {
                    if !clients.is_empty() {
                        return Err(Error::invalid(format!(
                            "SSG assigns clients to group {a}, which has no samples"
                        )));
                    }
                    continue;
                }
                let mut shuffled = indices.clone();
                shuffled.shuffle(&mut rng);
                let sizes =
                    dirichlet_sizes(&mut rng, shuffled.len(), clients.len(), MIN_CELL_SAMPLES)?;
                deal_chunks(&shuffled, &sizes, &clients, &mut assignment);
            }
        }
    }

    let mut shards = Vec::with_capacity(k);
    for (client_id, mut indices) in assignment.into_iter().enumerate() {
        if indices.is_empty() {
            return Err(Error::invalid(format!(
                "client {client_id} would receive no samples; use fewer clients"
            )));
        }
        indices.sort_unstable();
        shards.push(ClientShard::new(client_id, dataset.subset(&indices)?));
    }
    Ok(shards)
}

/// Column-stochastic matrix of group priors per client: entry `(a, k)` is
/// the fraction of client `k`'s samples that belong to group `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPriorMatrix<S: Scalar> {
    entries: Array2<S>,
}

impl<S: Scalar> GroupPriorMatrix<S> {
    /// Validates and wraps an explicit matrix (rows = groups, columns =
    /// clients; every column must sum to one).
    pub fn from_entries(entries: Array2<S>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::invalid("group prior matrix must be non-empty"));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::invalid(
                "group prior matrix entries must be finite and non-negative",
            ));
        }
        let tol = S::c(1e-12).max(S::epsilon() * S::c(64.0));
        for (k, column) in entries.columns().into_iter().enumerate() {
            let sum: S = column.iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                return Err(Error::invalid(format!(
                    "column {k} of the group prior matrix sums to {sum}, not 1"
                )));
            }
        }
        Ok(GroupPriorMatrix { entries })
    }

    /// Matrix entries (groups by clients).
    pub fn entries(&self) -> &Array2<S> {
        &self.entries
    }

    /// Number of groups (rows).
    pub fn num_groups(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of clients (columns).
    pub fn num_clients(&self) -> usize {
        self.entries.ncols()
    }
}

/// Computes the per-client group priors `n_{a,k} / n_k` for a federation.
pub fn compute_pa_matrix<S: Scalar>(shards: &[ClientShard<S>]) -> Result<GroupPriorMatrix<S>> {
    if shards.is_empty() {
        return Err(Error::invalid("cannot compute priors for zero shards"));
    }
    let num_groups = shards[0].data().num_groups();
    let mut entries = Array2::<S>::zeros((num_groups, shards.len()));
    for (k, shard) in shards.iter().enumerate() {
        if shard.data().num_groups() != num_groups {
            return Err(Error::invalid("shards disagree on the number of groups"));
        }
        let n_k = shard.num_samples();
        if n_k == 0 {
            return Err(Error::invalid(format!("shard {k} is empty")));
        }
        let denom = S::c(n_k as f64);
        for (a, &count) in shard.group_counts().iter().enumerate() {
            entries[(a, k)] = S::c(count as f64) / denom;
        }
    }
    GroupPriorMatrix::from_entries(entries)
}

/// Splits a dataset into train and test parts, stratified by group.
///
/// Within every group a seeded shuffle selects `round(test_fraction * n_a)`
/// samples (clamped so both sides keep at least one) for the test side.
/// Sample order within each side follows the original dataset order.
pub fn stratified_split<S: Scalar>(
    dataset: &GroupedDataset<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<(GroupedDataset<S>, GroupedDataset<S>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::invalid(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_indices = Vec::new();
    let mut train_indices = Vec::new();
    for (a, indices) in indices_by_group(dataset).iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < 2 {
            return Err(Error::invalid(format!(
                "group {a} has fewer than 2 samples and cannot be split"
            )));
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let want = (test_fraction * indices.len() as f64).round() as usize;
        let take = want.clamp(1, indices.len() - 1);
        test_indices.extend_from_slice(&shuffled[..take]);
        train_indices.extend_from_slice(&shuffled[take..]);
    }
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok((
        dataset.subset(&train_indices)?,
        dataset.subset(&test_indices)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_group_spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            low_rates: vec![0.3, 0.1],
            high_rates: vec![0.6, 0.9],
            n_samples: n,
            seed,
        }
    }

    #[test]
    fn synthetic_spec_validation() {
        let mut bad = two_group_spec(10, 0);
        bad.low_rates = vec![0.3];
        assert!(generate_synthetic::<f64>(&bad).is_err());

        let mut bad = two_group_spec(10, 0);
        bad.high_rates[0] = 1.5;
        assert!(generate_synthetic::<f64>(&bad).is_err());

        let bad = two_group_spec(0, 0);
        assert!(generate_synthetic::<f64>(&bad).is_err());
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let a = generate_synthetic::<f64>(&two_group_spec(500, 9)).unwrap();
        let b = generate_synthetic::<f64>(&two_group_spec(500, 9)).unwrap();
        let c = generate_synthetic::<f64>(&two_group_spec(500, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 500);
        assert_eq!(a.num_features(), 1);
        assert_eq!(a.num_classes(), 2);
        assert_eq!(a.num_groups(), 2);
    }

    #[test]
    fn synthetic_conditionals_match_the_rates() {
        let ds = generate_synthetic::<f64>(&two_group_spec(100_000, 123)).unwrap();
        let expected = [[0.3, 0.6], [0.1, 0.9]];
        let mut hits = [[0usize; 2]; 2];
        let mut totals = [[0usize; 2]; 2];
        for i in 0..ds.len() {
            let x = ds.features()[(i, 0)];
            let side = usize::from(x > 0.0);
            let g = ds.groups()[i];
            totals[g][side] += 1;
            hits[g][side] += ds.targets()[i];
        }
        for g in 0..2 {
            for side in 0..2 {
                let freq = hits[g][side] as f64 / totals[g][side] as f64;
                assert!(
                    (freq - expected[g][side]).abs() <= 0.01,
                    "group {g} side {side}: {freq} vs {}",
                    expected[g][side]
                );
            }
        }
        // Groups are drawn uniformly.
        let frac0 = ds.group_counts()[0] as f64 / ds.len() as f64;
        assert!((frac0 - 0.5).abs() <= 0.01);
    }

    fn assert_is_partition(dataset: &GroupedDataset<f64>, shards: &[ClientShard<f64>]) {
        let mut seen = vec![false; dataset.len()];
        let mut matched = 0usize;
        for shard in shards {
            let d = shard.data();
            // Match every shard sample to an unused dataset row; since
            // shards preserve dataset order and rows are unique by index we
            // can match on full content.
            for i in 0..d.len() {
                let s = d.sample(i);
                let hit = (0..dataset.len()).find(|&j| {
                    !seen[j]
                        && dataset.targets()[j] == s.target
                        && dataset.groups()[j] == s.group
                        && dataset
                            .features()
                            .row(j)
                            .iter()
                            .zip(&s.features)
                            .all(|(a, b)| a == b)
                });
                let j = hit.expect("shard sample must exist in the dataset");
                seen[j] = true;
                matched += 1;
            }
        }
        assert_eq!(matched, dataset.len(), "union of shards is the dataset");
    }

    #[test]
    fn esg_partition_balances_group_counts() {
        let ds = generate_synthetic::<f64>(&two_group_spec(2_000, 3)).unwrap();
        let plan = PartitionPlan::new(Setting::Esg, 7, 44);
        let shards = partition(&ds, &plan).unwrap();
        assert_eq!(shards.len(), 7);
        for a in 0..2 {
            let counts: Vec<usize> = shards.iter().map(|s| s.group_counts()[a]).collect();
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "group {a} counts {counts:?}");
        }
        assert_is_partition(&ds, &shards);

        // Determinism.
        let again = partition(&ds, &plan).unwrap();
        assert_eq!(shards, again);
    }

    #[test]
    fn ssg_partition_gives_single_group_shards() {
        let ds = generate_synthetic::<f64>(&two_group_spec(4_000, 5)).unwrap();
        let plan = PartitionPlan::new(Setting::Ssg, 40, 11);
        let shards = partition(&ds, &plan).unwrap();
        assert_eq!(shards.len(), 40);
        let mut per_group = [0usize; 2];
        for shard in &shards {
            let nonzero: Vec<usize> = (0..2).filter(|&a| shard.group_counts()[a] > 0).collect();
            assert_eq!(nonzero.len(), 1, "shard holds exactly one group");
            per_group[nonzero[0]] += 1;
            assert!(shard.num_samples() >= MIN_CELL_SAMPLES);
        }
        assert_eq!(per_group, [20, 20], "clients split evenly across groups");
        assert_is_partition(&ds, &shards);
    }

    #[test]
    fn ssg_shard_sizes_vary() {
        let ds = generate_synthetic::<f64>(&two_group_spec(4_000, 5)).unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Ssg, 40, 11)).unwrap();
        let sizes: Vec<usize> = shards.iter().map(|s| s.num_samples()).collect();
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        assert!(max > min, "Dirichlet sizing should produce unequal shards");
    }

    #[test]
    fn ssg_rejects_too_few_clients() {
        let ds = generate_synthetic::<f64>(&two_group_spec(100, 5)).unwrap();
        assert!(partition(&ds, &PartitionPlan::new(Setting::Ssg, 1, 0)).is_err());
    }

    #[test]
    fn psg_halves_hold_disjoint_group_sets() {
        let ds = generate_synthetic::<f64>(&two_group_spec(3_000, 6)).unwrap();
        let plan = PartitionPlan::new(Setting::Psg, 10, 7);
        let shards = partition(&ds, &plan).unwrap();
        for shard in &shards {
            let expected_group = usize::from(shard.client_id() >= 5);
            assert_eq!(shard.group_counts()[1 - expected_group], 0);
            assert!(shard.group_counts()[expected_group] >= MIN_CELL_SAMPLES);
        }
        assert_is_partition(&ds, &shards);
    }

    #[test]
    fn psg_rejects_malformed_splits() {
        let ds = generate_synthetic::<f64>(&two_group_spec(1_000, 6)).unwrap();
        let mut plan = PartitionPlan::new(Setting::Psg, 10, 7);
        plan.psg_group_split = Some(vec![0]);
        assert!(partition(&ds, &plan).is_err());
        plan.psg_group_split = Some(vec![0, 2]);
        assert!(partition(&ds, &plan).is_err());
    }

    #[test]
    fn pa_matrix_columns_are_stochastic() {
        let ds = generate_synthetic::<f64>(&two_group_spec(2_000, 3)).unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Esg, 8, 1)).unwrap();
        let pa = compute_pa_matrix(&shards).unwrap();
        assert_eq!(pa.num_groups(), 2);
        assert_eq!(pa.num_clients(), 8);
        for column in pa.entries().columns() {
            let sum: f64 = column.sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn pa_matrix_is_one_hot_under_ssg() {
        let ds = generate_synthetic::<f64>(&two_group_spec(2_000, 3)).unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Ssg, 10, 1)).unwrap();
        let pa = compute_pa_matrix(&shards).unwrap();
        for column in pa.entries().columns() {
            let ones = column.iter().filter(|&&v| v == 1.0).count();
            let zeros = column.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(ones, 1);
            assert_eq!(zeros, pa.num_groups() - 1);
        }
    }

    #[test]
    fn pa_matrix_single_client_equals_global_prior() {
        let ds = generate_synthetic::<f64>(&two_group_spec(1_000, 4)).unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Esg, 1, 0)).unwrap();
        let pa = compute_pa_matrix(&shards).unwrap();
        let prior = ds.group_prior().unwrap();
        for a in 0..2 {
            assert!((pa.entries()[(a, 0)] - prior.get(a)).abs() <= 1e-15);
        }
    }

    #[test]
    fn stratified_split_preserves_group_proportions() {
        let ds = generate_synthetic::<f64>(&two_group_spec(10_000, 8)).unwrap();
        let (train, test) = stratified_split(&ds, 0.2, 99).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        for a in 0..2 {
            let expected = 0.2 * ds.group_counts()[a] as f64;
            let got = test.group_counts()[a] as f64;
            assert!((got - expected).abs() <= 1.0, "group {a}: {got} vs {expected}");
        }
        // Determinism.
        let (train2, test2) = stratified_split(&ds, 0.2, 99).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn stratified_split_rejects_bad_fractions() {
        let ds = generate_synthetic::<f64>(&two_group_spec(100, 8)).unwrap();
        assert!(stratified_split(&ds, 0.0, 0).is_err());
        assert!(stratified_split(&ds, 1.0, 0).is_err());
        assert!(stratified_split(&ds, -0.5, 0).is_err());
    }

    #[test]
    fn subset_rejects_bad_indices() {
        let ds = generate_synthetic::<f64>(&two_group_spec(10, 8)).unwrap();
        assert!(ds.subset(&[]).is_err());
        assert!(ds.subset(&[10]).is_err());
        assert!(ds.subset(&[0, 3]).is_ok());
    }

    proptest! {
        /// ESG partitioning is always a true partition with balanced counts.
        #[test]
        fn esg_partition_property(
            n in 50usize..400,
            clients in 1usize..9,
            seed in 0u64..50,
        ) {
            let ds = generate_synthetic::<f64>(&two_group_spec(n, seed)).unwrap();
            let plan = PartitionPlan::new(Setting::Esg, clients, seed ^ 7);
            let shards = partition(&ds, &plan).unwrap();
            let total: usize = shards.iter().map(|s| s.num_samples()).sum();
            prop_assert_eq!(total, ds.len());
            for a in 0..2 {
                let sum_a: usize = shards.iter().map(|s| s.group_counts()[a]).sum();
                prop_assert_eq!(sum_a, ds.group_counts()[a]);
                let counts: Vec<usize> = shards.iter().map(|s| s.group_counts()[a]).collect();
                let min = *counts.iter().min().unwrap();
                let max = *counts.iter().max().unwrap();
                prop_assert!(max - min <= 1);
            }
        }
    }
}
