//! FedAvg round simulation.
//!
//! Each round broadcasts the global model, trains every user locally with
//! mini-batch SGD, applies the configured defense to the update, records the
//! full parameter snapshots the server observes and aggregates them weighted
//! by dataset size. The recorded history is all an attacker ever reads; the
//! simulation itself never consumes attack output.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::defense::{defend_update, DefenseConfig};
use crate::nn::{self, Dropout, Model};
use crate::{rng, Error, Result, Scalar};

/// Simulation knobs for one federation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlConfig<F> {
    /// Number of FedAvg rounds `T`.
    pub rounds: usize,
    /// Local epochs `E` per round.
    pub local_epochs: usize,
    /// Mini-batch size `B`.
    pub batch_size: usize,
    /// SGD learning rate.
    pub learning_rate: F,
    /// Top-level seed; all per-user streams derive from it.
    pub seed: u64,
    /// Perturbation applied to local updates before the server sees them.
    #[serde(default = "DefenseConfig::default")]
    pub defense: DefenseConfig<F>,
}

impl<F: Scalar> FlConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("rounds, local_epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > F::zero()) {
            return Err(Error::config("learning rate must be > 0"));
        }
        self.defense.validate()
    }
}

/// Everything the server observes in one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord<F> {
    /// 1-based round index `t`.
    pub round: usize,
    /// Global model broadcast at the start of the round.
    pub global_before: Model<F>,
    /// Per-user local models after training and defense.
    pub locals: Vec<Model<F>>,
    /// Per-user dataset sizes used as aggregation weights.
    pub sizes: Vec<usize>,
}

/// Options for one user's local training pass.
#[derive(Debug, Clone, Copy)]
pub struct LocalTrainOpts<F> {
    pub learning_rate: F,
    pub epochs: usize,
    pub batch_size: usize,
    /// Training-time dropout rate on hidden activations, if enabled.
    pub dropout: Option<F>,
}

/// Trains a copy of `global` for `epochs` passes of shuffled mini-batch SGD.
/// A zero learning rate returns the global model unchanged.
pub fn local_train<F: Scalar, R: Rng>(
    global: &Model<F>,
    data: &Dataset<F>,
    opts: &LocalTrainOpts<F>,
    rng: &mut R,
) -> Result<Model<F>> {
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::config("epochs and batch_size must be >= 1"));
    }
    if opts.learning_rate < F::zero() {
        return Err(Error::config("learning rate must be >= 0"));
    }
    if opts.learning_rate == F::zero() {
        return Ok(global.clone());
    }

    let mut model = global.clone();
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for _ in 0..opts.epochs {
        // With a single full batch the shuffle would only permute the
        // floating-point summation order; keep it the exact one-step update.
        if opts.batch_size < data.len() {
            indices.shuffle(rng);
        }
        for chunk in indices.chunks(opts.batch_size) {
            let batch = data.gather_batch(chunk);
            let (_, grads) = match opts.dropout {
                Some(rate) if rate > F::zero() => {
                    nn::loss_and_gradients_dropout(&model, &batch, Dropout { rate, rng })?
                }
                _ => nn::loss_and_gradients(&model, &batch)?,
            };
            model = nn::sgd_step(&model, &grads, opts.learning_rate)?;
        }
    }
    Ok(model)
}

/// Size-weighted parameter average: every parameter of the result is
/// `sum_i (D_i / D) * theta_i`.
pub fn fedavg<F: Scalar>(locals: &[Model<F>], sizes: &[usize]) -> Result<Model<F>> {
    if locals.is_empty() {
        return Err(Error::config("fedavg needs at least one local model"));
    }
    if locals.len() != sizes.len() {
        return Err(Error::config("one size per local model required"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::config("aggregation weights must be positive"));
    }
    for m in &locals[1..] {
        if !locals[0].shape_congruent(m) {
            return Err(Error::config("local models are not shape-congruent"));
        }
    }
    let total = F::from_usize_lossy(sizes.iter().sum());
    let mut acc = vec![F::zero(); locals[0].params_flat().len()];
    for (model, &size) in locals.iter().zip(sizes) {
        let w = F::from_usize_lossy(size) / total;
        for (a, p) in acc.iter_mut().zip(model.params_flat()) {
            *a = *a + w * p;
        }
    }
    locals[0].with_params_flat(&acc)
}

/// Runs `cfg.rounds` FedAvg rounds starting from `init` and returns the full
/// per-round history. Per-user RNG streams are derived from
/// `(seed, "local", user, round)`, so the parallel schedule cannot change the
/// result.
pub fn run<F: Scalar>(
    init: &Model<F>,
    users: &[Dataset<F>],
    cfg: &FlConfig<F>,
) -> Result<Vec<RoundRecord<F>>> {
    cfg.validate()?;
    if users.is_empty() {
        return Err(Error::config("simulation needs at least one user"));
    }
    if users.iter().any(|u| u.is_empty()) {
        return Err(Error::config("every user needs at least one sample"));
    }
    let sizes: Vec<usize> = users.iter().map(|u| u.len()).collect();
    let opts = LocalTrainOpts {
        learning_rate: cfg.learning_rate,
        epochs: cfg.local_epochs,
        batch_size: cfg.batch_size,
        dropout: cfg.defense.dropout_rate(),
    };

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut global = init.clone();
    for t in 1..=cfg.rounds {
        let locals: Vec<Model<F>> = users
            .par_iter()
            .enumerate()
            .map(|(u, data)| {
                let mut user_rng = rng::stream(cfg.seed, "local", &[u as u64, t as u64]);
                let local = local_train(&global, data, &opts, &mut user_rng)?;
                defend_update(&local, &global, &cfg.defense, cfg.seed, u, t)
            })
            .collect::<Result<_>>()?;
        let aggregated = fedavg(&locals, &sizes)?;
        records.push(RoundRecord {
            round: t,
            global_before: global,
            locals,
            sizes: sizes.clone(),
        });
        global = aggregated;
    }
    Ok(records)
}

/// Serializable round history, the attacker's only input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundHistory<F> {
    /// Format version of this snapshot layout.
    pub version: u32,
    /// Hash of the experiment spec that produced the run.
    pub config_hash: String,
    pub records: Vec<RoundRecord<F>>,
}

pub const HISTORY_FORMAT_VERSION: u32 = 1;

impl<F: Scalar> RoundHistory<F> {
    pub fn new(config_hash: String, records: Vec<RoundRecord<F>>) -> Self {
        RoundHistory {
            version: HISTORY_FORMAT_VERSION,
            config_hash,
            records,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let history: RoundHistory<F> = serde_json::from_str(json)?;
        if history.version != HISTORY_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported history version {} (expected {HISTORY_FORMAT_VERSION})",
                history.version
            )));
        }
        Ok(history)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}
