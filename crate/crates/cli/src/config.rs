//! Experiment configuration: one TOML file with `[dataset]`, `[partition]`,
//! `[algorithm]`, `[evaluation]` and `[output]` sections (plus an optional
//! `[compare]` section). Unknown keys are rejected, command-line flags
//! override file keys, and file keys override built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use fedminmax::algorithms::{Algorithm, AlgorithmConfig, OutputMode};
use fedminmax::data::{CsvSchema, Setting};
use fedminmax::model::{Activation, LossKind, MlpSpec};

/// Raw deserialized experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub partition: PartitionSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
    pub compare: Option<CompareSection>,
}

/// `[dataset]`: either a synthetic specification or a CSV source.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// "synthetic" or "csv".
    pub kind: String,
    /// Base seed for data generation and the train/test split.
    #[serde(default)]
    pub seed: u64,
    // Synthetic fields.
    pub low_rates: Option<Vec<f64>>,
    pub high_rates: Option<Vec<f64>>,
    pub n_samples: Option<usize>,
    // CSV fields.
    pub path: Option<PathBuf>,
    pub target: Option<String>,
    pub group: Option<String>,
    pub features: Option<Vec<String>>,
    pub categorical: Option<Vec<String>>,
    pub standardize: Option<bool>,
    pub categories: Option<BTreeMap<String, Vec<String>>>,
}

/// `[partition]`: how training data is spread over clients.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    /// "esg", "psg" or "ssg".
    pub setting: String,
    pub num_clients: usize,
    #[serde(default)]
    pub seed: u64,
    /// PSG only: which client half (0 or 1) each group belongs to.
    pub psg_group_split: Option<Vec<u8>>,
}

/// `[algorithm]`: training procedure and model architecture.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    /// "fedminmax", "centralized", "localfedminmax", "afl" or "fedavg".
    pub name: String,
    pub rounds: usize,
    pub model_lr: f64,
    pub adversary_lr: f64,
    pub simplex_floor: f64,
    /// "brier" or "cross_entropy".
    pub loss: String,
    /// "iterate_average" or "final_iterate"; defaults per algorithm.
    pub output: Option<String>,
    /// FedAvg only.
    pub local_epochs: usize,
    /// FedAvg only.
    pub batch_size: usize,
    /// Hidden-layer widths; input and output widths come from the data.
    pub hidden_layers: Vec<usize>,
    /// "relu" or "tanh".
    pub activation: String,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            name: "fedminmax".to_string(),
            rounds: 2000,
            model_lr: 0.1,
            adversary_lr: 0.1,
            simplex_floor: 0.0,
            loss: "brier".to_string(),
            output: None,
            local_epochs: 15,
            batch_size: 100,
            hidden_layers: vec![32, 32],
            activation: "relu".to_string(),
        }
    }
}

/// `[evaluation]`: held-out fraction and the seeds to repeat over.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            test_fraction: 0.2,
            seeds: vec![1, 2, 3],
        }
    }
}

/// `[output]`: where reports are written.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// `[compare]`: optional overrides for the pooled-data side of `compare`.
/// Round-for-round equivalence requires identical rates, so any rate given
/// here must equal the `[algorithm]` rate; the keys exist to make that
/// precondition explicit and checkable.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub model_lr: Option<f64>,
    pub adversary_lr: Option<f64>,
}

/// Command-line overrides; every field beats the corresponding file key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<String>,
    pub setting: Option<String>,
    pub clients: Option<usize>,
    pub rounds: Option<usize>,
    pub out: Option<PathBuf>,
    pub loss: Option<String>,
}

impl ExperimentConfig {
    /// Parses a TOML document; unknown keys are rejected with their path.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Applies command-line overrides (flag > config > default).
    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.evaluation.seeds = vec![seed];
        }
        if let Some(name) = &o.algorithm {
            self.algorithm.name = name.clone();
        }
        if let Some(setting) = &o.setting {
            self.partition.setting = setting.clone();
        }
        if let Some(clients) = o.clients {
            self.partition.num_clients = clients;
        }
        if let Some(rounds) = o.rounds {
            self.algorithm.rounds = rounds;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(loss) = &o.loss {
            self.algorithm.loss = loss.clone();
        }
    }

    /// Validates every field and converts to typed values.
    pub fn resolve(&self) -> Result<ResolvedConfig, String> {
        let dataset = self.resolve_dataset()?;
        let setting = parse_setting(&self.partition.setting)?;
        if self.partition.num_clients == 0 {
            return Err("partition.num_clients: must be at least 1".into());
        }
        if self.partition.psg_group_split.is_some() && setting != Setting::Psg {
            return Err(
                "partition.psg_group_split: only meaningful for the psg setting".into(),
            );
        }
        let algorithm = parse_algorithm(&self.algorithm.name)?;
        if self.algorithm.rounds == 0 {
            return Err("algorithm.rounds: must be at least 1".into());
        }
        check_rate("algorithm.model_lr", self.algorithm.model_lr)?;
        check_rate("algorithm.adversary_lr", self.algorithm.adversary_lr)?;
        if !self.algorithm.simplex_floor.is_finite() || self.algorithm.simplex_floor < 0.0 {
            return Err("algorithm.simplex_floor: must be finite and >= 0".into());
        }
        let loss = parse_loss(&self.algorithm.loss)?;
        let activation = parse_activation(&self.algorithm.activation)?;
        let output_mode = match &self.algorithm.output {
            None => OutputMode::default_for(algorithm),
            Some(s) => parse_output_mode(s)?,
        };
        if self.algorithm.local_epochs == 0 {
            return Err("algorithm.local_epochs: must be at least 1".into());
        }
        if self.algorithm.batch_size == 0 {
            return Err("algorithm.batch_size: must be at least 1".into());
        }
        if self.algorithm.hidden_layers.iter().any(|&w| w == 0) {
            return Err("algorithm.hidden_layers: widths must be positive".into());
        }
        if !(self.evaluation.test_fraction > 0.0 && self.evaluation.test_fraction < 1.0) {
            return Err("evaluation.test_fraction: must lie strictly between 0 and 1".into());
        }
        if self.evaluation.seeds.is_empty() {
            return Err("evaluation.seeds: need at least one seed".into());
        }
        if let Some(cmp) = &self.compare {
            if let Some(lr) = cmp.model_lr {
                if lr != self.algorithm.model_lr {
                    return Err(format!(
                        "compare.model_lr: {} differs from algorithm.model_lr {}; \
                         round-for-round equivalence requires identical rates",
                        lr, self.algorithm.model_lr
                    ));
                }
            }
            if let Some(lr) = cmp.adversary_lr {
                if lr != self.algorithm.adversary_lr {
                    return Err(format!(
                        "compare.adversary_lr: {} differs from algorithm.adversary_lr {}; \
                         round-for-round equivalence requires identical rates",
                        lr, self.algorithm.adversary_lr
                    ));
                }
            }
        }
        Ok(ResolvedConfig {
            dataset,
            setting,
            num_clients: self.partition.num_clients,
            partition_seed: self.partition.seed,
            psg_group_split: self.partition.psg_group_split.clone(),
            algorithm,
            rounds: self.algorithm.rounds,
            model_lr: self.algorithm.model_lr,
            adversary_lr: self.algorithm.adversary_lr,
            simplex_floor: self.algorithm.simplex_floor,
            loss,
            output_mode,
            local_epochs: self.algorithm.local_epochs,
            batch_size: self.algorithm.batch_size,
            hidden_layers: self.algorithm.hidden_layers.clone(),
            activation,
            test_fraction: self.evaluation.test_fraction,
            seeds: self.evaluation.seeds.clone(),
            out_dir: self.output.dir.clone(),
        })
    }

    fn resolve_dataset(&self) -> Result<ResolvedDataset, String> {
        let d = &self.dataset;
        match d.kind.as_str() {
            "synthetic" => {
                for (name, present) in [
                    ("path", d.path.is_some()),
                    ("target", d.target.is_some()),
                    ("group", d.group.is_some()),
                    ("features", d.features.is_some()),
                    ("categorical", d.categorical.is_some()),
                    ("standardize", d.standardize.is_some()),
                    ("categories", d.categories.is_some()),
                ] {
                    if present {
                        return Err(format!(
                            "dataset.{name}: not applicable when kind = \"synthetic\""
                        ));
                    }
                }
                let low = d
                    .low_rates
                    .clone()
                    .ok_or("dataset.low_rates: required for synthetic data")?;
                let high = d
                    .high_rates
                    .clone()
                    .ok_or("dataset.high_rates: required for synthetic data")?;
                let n = d
                    .n_samples
                    .ok_or("dataset.n_samples: required for synthetic data")?;
                if low.is_empty() || low.len() != high.len() {
                    return Err(
                        "dataset.low_rates/high_rates: need equal, nonempty rate lists".into(),
                    );
                }
                for &r in low.iter().chain(high.iter()) {
                    if !(0.0..=1.0).contains(&r) {
                        return Err("dataset rates must lie in [0, 1]".into());
                    }
                }
                if n == 0 {
                    return Err("dataset.n_samples: must be positive".into());
                }
                Ok(ResolvedDataset::Synthetic {
                    low_rates: low,
                    high_rates: high,
                    n_samples: n,
                    seed: d.seed,
                })
            }
            "csv" => {
                for (name, present) in [
                    ("low_rates", d.low_rates.is_some()),
                    ("high_rates", d.high_rates.is_some()),
                    ("n_samples", d.n_samples.is_some()),
                ] {
                    if present {
                        return Err(format!(
                            "dataset.{name}: not applicable when kind = \"csv\""
                        ));
                    }
                }
                let path = d.path.clone().ok_or("dataset.path: required for csv data")?;
                let target = d
                    .target
                    .clone()
                    .ok_or("dataset.target: required for csv data")?;
                let group = d
                    .group
                    .clone()
                    .ok_or("dataset.group: required for csv data")?;
                let mut schema = CsvSchema::new(target, group);
                schema.features = d.features.clone();
                if let Some(cat) = &d.categorical {
                    schema.categorical = cat.clone();
                }
                if let Some(std) = d.standardize {
                    schema.standardize = std;
                }
                schema.categories = d.categories.clone();
                Ok(ResolvedDataset::Csv {
                    path,
                    schema,
                    seed: d.seed,
                })
            }
            other => Err(format!(
                "dataset.kind: \"{other}\" is not supported (use \"synthetic\" or \"csv\")"
            )),
        }
    }
}

/// Fully validated configuration with typed fields.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub dataset: ResolvedDataset,
    pub setting: Setting,
    pub num_clients: usize,
    pub partition_seed: u64,
    pub psg_group_split: Option<Vec<u8>>,
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub model_lr: f64,
    pub adversary_lr: f64,
    pub simplex_floor: f64,
    pub loss: LossKind,
    pub output_mode: OutputMode,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

/// Validated data source.
#[derive(Debug, Clone)]
pub enum ResolvedDataset {
    Synthetic {
        low_rates: Vec<f64>,
        high_rates: Vec<f64>,
        n_samples: usize,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        seed: u64,
    },
}

impl ResolvedDataset {
    /// The data seed the per-run sub-seeds derive from.
    pub fn seed(&self) -> u64 {
        match self {
            ResolvedDataset::Synthetic { seed, .. } => *seed,
            ResolvedDataset::Csv { seed, .. } => *seed,
        }
    }
}

impl ResolvedConfig {
    /// Network architecture for data with the given shape.
    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> Result<MlpSpec, String> {
        let mut layers = Vec::with_capacity(self.hidden_layers.len() + 2);
        layers.push(input_dim);
        layers.extend_from_slice(&self.hidden_layers);
        layers.push(num_classes);
        MlpSpec::new(layers, self.activation).map_err(|e| e.to_string())
    }

    /// Core training configuration for one run seed.
    pub fn core_config(&self, model: MlpSpec, run_seed: u64) -> AlgorithmConfig<f64> {
        AlgorithmConfig {
            algorithm: self.algorithm,
            model,
            rounds: self.rounds,
            model_lr: self.model_lr,
            adversary_lr: self.adversary_lr,
            simplex_floor: self.simplex_floor,
            loss: self.loss,
            output_mode: self.output_mode,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            seed: run_seed,
            record_params: false,
        }
    }

    /// Canonical short names used in reports.
    pub fn loss_name(&self) -> &'static str {
        match self.loss {
            LossKind::Brier => "brier",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }

    pub fn activation_name(&self) -> &'static str {
        match self.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn output_mode_name(&self) -> &'static str {
        match self.output_mode {
            OutputMode::IterateAverage => "iterate_average",
            OutputMode::FinalIterate => "final_iterate",
        }
    }
}

fn check_rate(key: &str, value: f64) -> Result<(), String> {
    if !value.is_finite() || value < 0.0 {
        return Err(format!("{key}: must be finite and >= 0"));
    }
    Ok(())
}

fn parse_setting(name: &str) -> Result<Setting, String> {
    match name {
        "esg" => Ok(Setting::Esg),
        "psg" => Ok(Setting::Psg),
        "ssg" => Ok(Setting::Ssg),
        other => Err(format!(
            "partition.setting: \"{other}\" is not one of esg, psg, ssg"
        )),
    }
}

fn parse_algorithm(name: &str) -> Result<Algorithm, String> {
    match name {
        "fedminmax" => Ok(Algorithm::FedMinMax),
        "centralized" => Ok(Algorithm::CentralizedMinMax),
        "localfedminmax" => Ok(Algorithm::LocalFedMinMax),
        "afl" => Ok(Algorithm::Afl),
        "fedavg" => Ok(Algorithm::FedAvg),
        other => Err(format!(
            "algorithm.name: \"{other}\" is not one of fedminmax, centralized, \
             localfedminmax, afl, fedavg"
        )),
    }
}

fn parse_loss(name: &str) -> Result<LossKind, String> {
    match name {
        "brier" => Ok(LossKind::Brier),
        "cross_entropy" => Ok(LossKind::CrossEntropy),
        other => Err(format!(
            "algorithm.loss: \"{other}\" is not one of brier, cross_entropy"
        )),
    }
}

fn parse_activation(name: &str) -> Result<Activation, String> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(format!(
            "algorithm.activation: \"{other}\" is not one of relu, tanh"
        )),
    }
}

fn parse_output_mode(name: &str) -> Result<OutputMode, String> {
    match name {
        "iterate_average" => Ok(OutputMode::IterateAverage),
        "final_iterate" => Ok(OutputMode::FinalIterate),
        other => Err(format!(
            "algorithm.output: \"{other}\" is not one of iterate_average, final_iterate"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset]
        kind = "synthetic"
        low_rates = [0.3, 0.1]
        high_rates = [0.6, 0.9]
        n_samples = 1000

        [partition]
        setting = "esg"
        num_clients = 4

        [output]
        dir = "runs/test"
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.algorithm, Algorithm::FedMinMax);
        assert_eq!(resolved.rounds, 2000);
        assert_eq!(resolved.model_lr, 0.1);
        assert_eq!(resolved.hidden_layers, vec![32, 32]);
        assert_eq!(resolved.seeds, vec![1, 2, 3]);
        assert_eq!(resolved.test_fraction, 0.2);
        assert_eq!(resolved.output_mode, OutputMode::IterateAverage);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let bad = MINIMAL.replace("num_clients = 4", "num_clients = 4\nbanana = 1");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.contains("banana"), "{err}");
    }

    #[test]
    fn kind_specific_fields_are_checked() {
        let bad = MINIMAL.replace("n_samples = 1000", "n_samples = 1000\npath = \"x.csv\"");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.contains("dataset.path"), "{err}");

        let csv = r#"
            [dataset]
            kind = "csv"
            path = "data.csv"
            target = "label"
            group = "sex"

            [partition]
            setting = "ssg"
            num_clients = 2

            [output]
            dir = "runs/csv"
        "#;
        let cfg = ExperimentConfig::from_toml(csv).unwrap();
        let resolved = cfg.resolve().unwrap();
        match resolved.dataset {
            ResolvedDataset::Csv { ref schema, .. } => {
                assert_eq!(schema.target, "label");
                assert!(schema.standardize);
            }
            _ => panic!("expected csv dataset"),
        }
    }

    #[test]
    fn overrides_beat_file_keys() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.apply_overrides(&Overrides {
            seed: Some(42),
            algorithm: Some("afl".into()),
            setting: Some("ssg".into()),
            clients: Some(8),
            rounds: Some(77),
            out: Some(PathBuf::from("elsewhere")),
            loss: Some("cross_entropy".into()),
        });
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.seeds, vec![42]);
        assert_eq!(resolved.algorithm, Algorithm::Afl);
        assert_eq!(resolved.setting, Setting::Ssg);
        assert_eq!(resolved.num_clients, 8);
        assert_eq!(resolved.rounds, 77);
        assert_eq!(resolved.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(resolved.loss, LossKind::CrossEntropy);
    }

    #[test]
    fn bad_enumerations_name_the_key() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.algorithm.name = "sgd".into();
        assert!(cfg.resolve().unwrap_err().contains("algorithm.name"));

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.partition.setting = "all".into();
        assert!(cfg.resolve().unwrap_err().contains("partition.setting"));

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.evaluation.test_fraction = 1.0;
        assert!(cfg.resolve().unwrap_err().contains("test_fraction"));
    }

    #[test]
    fn compare_section_requires_matching_rates() {
        let with_compare = format!("{MINIMAL}\n[compare]\nmodel_lr = 0.2\n");
        let cfg = ExperimentConfig::from_toml(&with_compare).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.contains("identical rates"), "{err}");

        let matching = format!("{MINIMAL}\n[compare]\nmodel_lr = 0.1\nadversary_lr = 0.1\n");
        let cfg = ExperimentConfig::from_toml(&matching).unwrap();
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn psg_split_requires_psg_setting() {
        let bad = MINIMAL.replace("num_clients = 4", "num_clients = 4\npsg_group_split = [0, 1]");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(cfg.resolve().unwrap_err().contains("psg_group_split"));
    }
}
