//! Hybrid contrastive-divergence training of sparse deep Boltzmann machines.
//!
//! Each gradient step takes data moments from a positive phase (visible
//! nodes clamped to a batch item, estimated by Gibbs sampling or a
//! mean-field solver) and model moments from persistent unclamped Gibbs
//! chains, then applies a momentum SGD update
//! `dW_ij = <m_i m_j>_data - <m_i m_j>_model` (and likewise for biases).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{batch_schedule, DatasetError, EncodedExample};
use crate::meanfield::{hmft_solve, nmft_correlations, nmft_solve, MftConfig};
use crate::metrics::{accuracy, InferenceConfig, Method};
use crate::sampler::rng::derive_seed;
use crate::sampler::{
    run_chain, ChainParams, ModelError, MomentEstimates, SparseIsingModel, SpinState,
};
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum LearningRate {
    Constant(f64),
    /// Geometric interpolation from `start` at epoch 0 to `end` at the last
    /// epoch.
    LogLinear { start: f64, end: f64 },
}

impl LearningRate {
    pub fn at(&self, epoch: usize, total_epochs: usize) -> f64 {
        match *self {
            LearningRate::Constant(lr) => lr,
            LearningRate::LogLinear { start, end } => {
                if total_epochs <= 1 {
                    return start;
                }
                let t = epoch as f64 / (total_epochs - 1) as f64;
                start * (end / start).powf(t)
            }
        }
    }

    fn start_value(&self) -> f64 {
        match *self {
            LearningRate::Constant(lr) => lr,
            LearningRate::LogLinear { start, .. } => start,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub positive_method: Method,
    /// Sweeps per negative-phase call on each persistent chain.
    pub negative_sweeps: u64,
    /// Sweeps per positive-phase item (Gibbs mode only).
    pub positive_sweeps: u64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub learning_rate: LearningRate,
    pub momentum: f64,
    pub mft: MftConfig,
    /// Persistent negative chains; one matches the single physical network.
    pub negative_chains: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            positive_method: Method::Gibbs,
            negative_sweeps: 100_000,
            positive_sweeps: 10_000,
            batch_size: 50,
            batches_per_epoch: 1,
            epochs: 1,
            learning_rate: LearningRate::Constant(0.003),
            momentum: 0.6,
            mft: MftConfig::default(),
            negative_chains: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.start_value() <= 0.0 {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        if self.negative_sweeps == 0 {
            return Err(TrainError::Config("negative sweeps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.negative_chains == 0 {
            return Err(TrainError::Config("need at least one negative chain".into()));
        }
        self.mft.validate().map_err(TrainError::Config)
    }
}

/// Weights drawn from N(0, 0.01), hidden biases zero, visible biases set to
/// the data log-odds `log(p / (1 - p))`, beta fixed at 1.
pub fn init_model(
    topology: Arc<Topology>,
    visible_on_probability: &[f64],
    seed: u64,
) -> Result<SparseIsingModel, ModelError> {
    assert_eq!(
        visible_on_probability.len(),
        topology.visible_count(),
        "need one on-probability per visible node"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x494e4954)); // "INIT"
    let normal = Normal::new(0.0, 0.01).expect("valid parameters");
    let weights: Vec<f64> = (0..topology.edge_count())
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut biases = vec![0.0; topology.node_count()];
    let pixel_count = topology.pixel_count();
    for (k, &node) in topology.pixel_nodes().iter().enumerate() {
        let p = visible_on_probability[k];
        biases[node as usize] = (p / (1.0 - p)).ln();
    }
    for (slot, &node) in topology.label_nodes().iter().enumerate() {
        let p = visible_on_probability[pixel_count + slot];
        biases[node as usize] = (p / (1.0 - p)).ln();
    }
    SparseIsingModel::new(topology, weights, biases, 1.0)
}

/// Clamp assignment pinning every visible node to the example's data.
pub fn clamps_for_example(topology: &Topology, example: &EncodedExample) -> Vec<Option<i8>> {
    assert_eq!(
        example.pixel_spins.len(),
        topology.pixel_count(),
        "example pixel count does not match topology"
    );
    assert_eq!(
        example.label_spins.len(),
        topology.label_nodes().len(),
        "example label count does not match topology"
    );
    let mut clamps = vec![None; topology.node_count()];
    for (k, &node) in topology.pixel_nodes().iter().enumerate() {
        clamps[node as usize] = Some(example.pixel_spins[k]);
    }
    for (slot, &node) in topology.label_nodes().iter().enumerate() {
        clamps[node as usize] = Some(example.label_spins[slot]);
    }
    clamps
}

/// Velocity buffers, persistent negative chains, and step counters around
/// the model being trained.
#[derive(Debug, Clone)]
pub struct TrainerState {
    model: SparseIsingModel,
    velocity_weights: Vec<f64>,
    velocity_biases: Vec<f64>,
    negative_chains: Vec<SpinState>,
    config: TrainConfig,
    epoch: usize,
    batch: usize,
}

impl TrainerState {
    pub fn new(model: SparseIsingModel, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let n = model.topology().node_count();
        let chains = (0..config.negative_chains)
            .map(|c| SpinState::random(n, derive_seed(config.seed, 0x4e454700 + c as u64)))
            .collect();
        Ok(TrainerState {
            velocity_weights: vec![0.0; model.weights().len()],
            velocity_biases: vec![0.0; model.biases().len()],
            negative_chains: chains,
            model,
            config,
            epoch: 0,
            batch: 0,
        })
    }

    pub fn model(&self) -> &SparseIsingModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn negative_chains(&self) -> &[SpinState] {
        &self.negative_chains
    }

    fn item_seed(&self, item: usize) -> u64 {
        let s = derive_seed(self.config.seed, 0x504f5300 + self.epoch as u64);
        derive_seed(s, ((self.batch as u64) << 32) | item as u64)
    }

    /// Data moments for one batch: every visible node clamped to the item,
    /// hidden moments estimated by the configured method, averaged over the
    /// batch. Clamped coordinates come out exact by construction.
    pub fn positive_phase(&self, batch: &[&EncodedExample]) -> MomentEstimates {
        assert!(!batch.is_empty(), "empty batch");
        let per_item: Vec<MomentEstimates> = batch
            .par_iter()
            .enumerate()
            .map(|(item, example)| {
                let seed = self.item_seed(item);
                let clamps = clamps_for_example(self.model.topology(), example);
                match self.config.positive_method {
                    Method::Gibbs => {
                        let n = self.model.topology().node_count();
                        let mut state = SpinState::random(n, seed);
                        for (v, c) in clamps.iter().enumerate() {
                            if let Some(s) = c {
                                state.clamp(v, *s);
                            }
                        }
                        run_chain(
                            &self.model,
                            &mut state,
                            ChainParams::fresh(self.config.positive_sweeps),
                        )
                    }
                    Method::Nmft => {
                        let solution = nmft_solve(&self.model, &clamps, &self.config.mft, seed);
                        nmft_correlations(&solution, self.model.topology())
                    }
                    Method::Hmft => {
                        hmft_solve(&self.model, &clamps, &self.config.mft, seed).moments
                    }
                }
            })
            .collect();
        MomentEstimates::mean_of(&per_item)
    }

    /// Model moments from the persistent chains, each advanced by the
    /// configured sweep count under the current parameters (PCD: no burn-in,
    /// no reset).
    pub fn negative_phase(&mut self) -> MomentEstimates {
        let model = &self.model;
        let sweeps = self.config.negative_sweeps;
        let per_chain: Vec<MomentEstimates> = self
            .negative_chains
            .par_iter_mut()
            .map(|chain| run_chain(model, chain, ChainParams::new(sweeps)))
            .collect();
        MomentEstimates::mean_of(&per_chain)
    }

    /// Momentum SGD on the moment difference:
    /// `v = momentum * v + (data - model)`, then `theta += lr * v`.
    pub fn cd_update(
        &mut self,
        data: &MomentEstimates,
        model_moments: &MomentEstimates,
        learning_rate: f64,
    ) {
        let e = self.model.weights().len();
        let n = self.model.biases().len();
        assert_eq!(data.correlations().len(), e, "moment shape mismatch");
        assert_eq!(model_moments.correlations().len(), e, "moment shape mismatch");
        assert_eq!(data.averages().len(), n, "moment shape mismatch");
        assert_eq!(model_moments.averages().len(), n, "moment shape mismatch");
        let momentum = self.config.momentum;
        {
            let weights = self.model.weights_mut();
            for i in 0..e {
                let gradient = data.correlations()[i] - model_moments.correlations()[i];
                self.velocity_weights[i] = momentum * self.velocity_weights[i] + gradient;
                weights[i] += learning_rate * self.velocity_weights[i];
            }
        }
        {
            let biases = self.model.biases_mut();
            for i in 0..n {
                let gradient = data.averages()[i] - model_moments.averages()[i];
                self.velocity_biases[i] = momentum * self.velocity_biases[i] + gradient;
                biases[i] += learning_rate * self.velocity_biases[i];
            }
        }
    }

    /// One full positive/negative/update step on a batch.
    pub fn train_batch(&mut self, batch: &[&EncodedExample], learning_rate: f64) {
        let data = self.positive_phase(batch);
        let model_moments = self.negative_phase();
        self.cd_update(&data, &model_moments, learning_rate);
        self.batch += 1;
    }
}

/// Per-epoch log line.
#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Optional instrumentation for [`train`].
#[derive(Debug, Clone, Default)]
pub struct TrainHooks {
    /// Evaluate accuracy every this many epochs (0 = never).
    pub eval_every: usize,
    pub eval_inference: Option<InferenceConfig>,
    pub test_examples: Vec<EncodedExample>,
    /// Stop once train accuracy reaches this level (checked on eval epochs).
    pub stop_at_train_accuracy: Option<f64>,
    /// Write a checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<std::path::PathBuf>,
    /// Print one progress line per eval epoch to stderr.
    pub verbose: bool,
}

#[derive(Debug)]
pub struct TrainResult {
    pub state: TrainerState,
    pub log: Vec<EpochLog>,
}

/// Runs the full training loop: per epoch, a reshuffled batch schedule and
/// one positive/negative/update step per batch.
pub fn train(
    model: SparseIsingModel,
    examples: &[EncodedExample],
    config: TrainConfig,
    hooks: &TrainHooks,
) -> Result<TrainResult, TrainError> {
    let mut state = TrainerState::new(model, config)?;
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let learning_rate = config.learning_rate.at(epoch, config.epochs);
        let schedule = batch_schedule(
            examples.len(),
            config.batch_size,
            config.batches_per_epoch,
            config.seed,
            epoch,
        )?;
        for batch_indices in &schedule {
            let batch: Vec<&EncodedExample> = batch_indices.iter().map(|&i| &examples[i]).collect();
            state.train_batch(&batch, learning_rate);
        }
        state.epoch = epoch + 1;

        let mut entry = EpochLog {
            epoch: state.epoch,
            learning_rate,
            train_accuracy: None,
            test_accuracy: None,
        };
        let eval_now = hooks.eval_every > 0 && state.epoch % hooks.eval_every == 0;
        if eval_now {
            let inference = hooks.eval_inference.unwrap_or_default();
            let mut cfg = inference;
            cfg.seed = derive_seed(config.seed, 0x4556414c); // "EVAL"
            entry.train_accuracy = Some(accuracy(&state.model, examples, &cfg));
            if !hooks.test_examples.is_empty() {
                entry.test_accuracy = Some(accuracy(&state.model, &hooks.test_examples, &cfg));
            }
            if hooks.verbose {
                eprintln!(
                    "epoch {:4}  lr {:.5}  train_acc {:.3}  test_acc {}",
                    state.epoch,
                    learning_rate,
                    entry.train_accuracy.unwrap(),
                    entry
                        .test_accuracy
                        .map_or("-".into(), |a| format!("{a:.3}")),
                );
            }
        }
        if hooks.checkpoint_every > 0 && state.epoch % hooks.checkpoint_every == 0 {
            if let Some(dir) = &hooks.checkpoint_dir {
                let path = dir.join(format!("checkpoint-epoch-{:05}.json", state.epoch));
                save_checkpoint(&path, &state)?;
            }
        }
        let reached_target = entry
            .train_accuracy
            .zip(hooks.stop_at_train_accuracy)
            .is_some_and(|(acc, target)| acc >= target);
        log.push(entry);
        if reached_target {
            break;
        }
    }
    Ok(TrainResult { state, log })
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk model snapshot. Weights are stored per edge as `[i, j, w]` and
/// biases as `[i, h]`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub topology_hash: String,
    pub beta: f64,
    pub weights: Vec<(u32, u32, f64)>,
    pub biases: Vec<(u32, f64)>,
    pub epoch: usize,
    pub rng_seed: u64,
}

impl Checkpoint {
    pub fn from_state(state: &TrainerState) -> Self {
        Checkpoint::from_model(state.model(), state.epoch, state.config.seed)
    }

    pub fn from_model(model: &SparseIsingModel, epoch: usize, rng_seed: u64) -> Self {
        let topology = model.topology();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            topology_hash: topology.hash(),
            beta: model.beta(),
            weights: topology
                .edges()
                .iter()
                .zip(model.weights())
                .map(|(&(i, j), &w)| (i, j, w))
                .collect(),
            biases: model
                .biases()
                .iter()
                .enumerate()
                .map(|(v, &h)| (v as u32, h))
                .collect(),
            epoch,
            rng_seed,
        }
    }

    /// Rebuilds the model against a topology, verifying the stored hash.
    pub fn into_model(
        &self,
        topology: Arc<Topology>,
    ) -> Result<SparseIsingModel, TrainError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let hash = topology.hash();
        if self.topology_hash != hash {
            return Err(TrainError::Checkpoint(format!(
                "topology hash mismatch: checkpoint {} vs topology {}",
                self.topology_hash, hash
            )));
        }
        let mut weights = vec![0.0; topology.edge_count()];
        if self.weights.len() != topology.edge_count() {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint has {} weights, topology {} edges",
                self.weights.len(),
                topology.edge_count()
            )));
        }
        for &(i, j, w) in &self.weights {
            let edge = topology.edge_index(i, j).ok_or_else(|| {
                TrainError::Checkpoint(format!("checkpoint edge ({i}, {j}) not in topology"))
            })?;
            weights[edge] = w;
        }
        let mut biases = vec![0.0; topology.node_count()];
        for &(v, h) in &self.biases {
            if v as usize >= biases.len() {
                return Err(TrainError::Checkpoint(format!("bias index {v} out of range")));
            }
            biases[v as usize] = h;
        }
        SparseIsingModel::new(topology, weights, biases, self.beta).map_err(TrainError::from)
    }
}

/// Serializes the checkpoint as JSON, written atomically (temp + rename).
pub fn save_checkpoint(path: &Path, state: &TrainerState) -> Result<(), TrainError> {
    write_checkpoint(path, &Checkpoint::from_state(state))
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binarize, on_probabilities};
    use crate::dataset::RawExample;
    use crate::topology::{generate_sparse_dbm_with_labels, NodeRole};
    use approx::assert_abs_diff_eq;

    fn tiny_visible_topology() -> Arc<Topology> {
        // three pixels, two hidden, a path through all of them
        let roles = vec![
            NodeRole::VisiblePixel(0),
            NodeRole::VisiblePixel(1),
            NodeRole::VisiblePixel(2),
            NodeRole::Hidden { layer: 0 },
            NodeRole::Hidden { layer: 0 },
        ];
        let edges = vec![(0, 3), (1, 3), (2, 4), (3, 4), (0, 4)];
        Arc::new(Topology::from_parts(roles, edges).unwrap())
    }

    fn example(pixels: [i8; 3]) -> EncodedExample {
        EncodedExample {
            pixel_spins: pixels.to_vec(),
            label_spins: vec![],
            digit: 0,
        }
    }

    fn quick_config(method: Method) -> TrainConfig {
        TrainConfig {
            positive_method: method,
            negative_sweeps: 200,
            positive_sweeps: 500,
            batch_size: 2,
            batches_per_epoch: 1,
            epochs: 1,
            learning_rate: LearningRate::Constant(0.05),
            momentum: 0.0,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_model_biases_follow_log_odds() {
        let topology = tiny_visible_topology();
        let p = vec![0.5, 0.88, 0.2];
        let model = init_model(topology.clone(), &p, 1).unwrap();
        let nodes = topology.pixel_nodes();
        assert_abs_diff_eq!(model.biases()[nodes[0] as usize], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            model.biases()[nodes[1] as usize],
            (0.88f64 / 0.12).ln(),
            epsilon = 1e-10
        );
        for v in 0..topology.node_count() {
            if matches!(topology.role(v), NodeRole::Hidden { .. }) {
                assert_eq!(model.biases()[v], 0.0);
            }
        }
        assert_eq!(model.beta(), 1.0);
    }

    #[test]
    fn init_model_weight_spread_matches_std() {
        let topology =
            Arc::new(generate_sparse_dbm_with_labels(30, 1, &[30, 30], 8, 4).unwrap());
        let p = vec![0.5; topology.visible_count()];
        let model = init_model(topology.clone(), &p, 9).unwrap();
        let e = model.weights().len() as f64;
        let mean: f64 = model.weights().iter().sum::<f64>() / e;
        let var: f64 = model.weights().iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / e;
        assert!(mean.abs() < 0.005, "mean {mean}");
        let std = var.sqrt();
        assert!((std - 0.01).abs() < 0.005, "std {std}");
    }

    #[test]
    fn positive_phase_keeps_clamped_moments_exact() {
        let topology = tiny_visible_topology();
        let model = init_model(topology.clone(), &[0.4, 0.6, 0.5], 7).unwrap();
        let items = [example([1, -1, 1]), example([-1, -1, 1])];
        for method in [Method::Gibbs, Method::Nmft, Method::Hmft] {
            let state = TrainerState::new(model.clone(), quick_config(method)).unwrap();
            let batch: Vec<&EncodedExample> = items.iter().collect();
            let moments = state.positive_phase(&batch);
            // visible averages are exact data means
            let nodes = topology.pixel_nodes();
            let expect = [0.0, -1.0, 1.0];
            for (k, &node) in nodes.iter().enumerate() {
                assert_abs_diff_eq!(
                    moments.averages()[node as usize],
                    expect[k],
                    epsilon = 1e-12
                );
            }
            // no visible-visible edges in this topology, so nothing else is exact
        }
    }

    #[test]
    fn all_visible_batch_moments_are_data_products() {
        let roles = vec![
            NodeRole::VisiblePixel(0),
            NodeRole::VisiblePixel(1),
            NodeRole::VisiblePixel(2),
        ];
        let topology =
            Arc::new(Topology::from_parts(roles, vec![(0, 1), (1, 2), (0, 2)]).unwrap());
        let model = init_model(topology.clone(), &[0.5; 3], 2).unwrap();
        let items = [example([1, -1, 1]), example([1, 1, -1])];
        for method in [Method::Gibbs, Method::Nmft, Method::Hmft] {
            let state = TrainerState::new(model.clone(), quick_config(method)).unwrap();
            let batch: Vec<&EncodedExample> = items.iter().collect();
            let moments = state.positive_phase(&batch);
            for (e, &(i, j)) in topology.edges().iter().enumerate() {
                let expect: f64 = items
                    .iter()
                    .map(|ex| (ex.pixel_spins[i as usize] * ex.pixel_spins[j as usize]) as f64)
                    .sum::<f64>()
                    / 2.0;
                assert_abs_diff_eq!(moments.correlations()[e], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn one_free_spin_positive_phase_matches_conditional() {
        // visible node 0 clamped +1, hidden neighbor with W = 0.8:
        // every method must find <m_1> = <m_0 m_1> = tanh(0.8)
        let roles = vec![NodeRole::VisiblePixel(0), NodeRole::Hidden { layer: 0 }];
        let topology = Arc::new(Topology::from_parts(roles, vec![(0, 1)]).unwrap());
        let model =
            SparseIsingModel::new(topology.clone(), vec![0.8], vec![0.0, 0.0], 1.0).unwrap();
        let expect = 0.8f64.tanh();
        let item = EncodedExample {
            pixel_spins: vec![1],
            label_spins: vec![],
            digit: 0,
        };
        for (method, tol) in [
            (Method::Gibbs, 0.02),
            (Method::Nmft, 1e-9),
            (Method::Hmft, 1e-9),
        ] {
            let mut config = quick_config(method);
            config.positive_sweeps = 20_000;
            let state = TrainerState::new(model.clone(), config).unwrap();
            let moments = state.positive_phase(&[&item]);
            assert!(
                (moments.averages()[1] - expect).abs() < tol,
                "{method}: avg {} vs {expect}",
                moments.averages()[1]
            );
            assert!(
                (moments.correlations()[0] - expect).abs() < tol,
                "{method}: corr {} vs {expect}",
                moments.correlations()[0]
            );
        }
    }

    #[test]
    fn negative_phase_of_fresh_model_is_nearly_unmagnetized() {
        let topology = tiny_visible_topology();
        let model = init_model(topology, &[0.5; 3], 5).unwrap();
        let mut config = quick_config(Method::Gibbs);
        config.negative_sweeps = 10_000;
        let mut state = TrainerState::new(model, config).unwrap();
        let moments = state.negative_phase();
        for &a in moments.averages() {
            assert!(a.abs() < 0.05, "average {a}");
        }
    }

    #[test]
    fn negative_phase_is_persistent() {
        let topology = tiny_visible_topology();
        let model = init_model(topology, &[0.5; 3], 5).unwrap();
        let mut state =
            TrainerState::new(model, quick_config(Method::Gibbs)).unwrap();
        let tick_before = state.negative_chains()[0].tick();
        let _ = state.negative_phase();
        let tick_mid = state.negative_chains()[0].tick();
        let _ = state.negative_phase();
        let tick_after = state.negative_chains()[0].tick();
        assert_eq!(tick_mid - tick_before, 200);
        assert_eq!(tick_after - tick_mid, 200);
    }

    #[test]
    fn cd_update_arithmetic() {
        let topology = tiny_visible_topology();
        let model = SparseIsingModel::zeros(topology.clone(), 1.0);
        let e = topology.edge_count();
        let n = topology.node_count();
        let mut config = quick_config(Method::Gibbs);
        config.momentum = 0.0;
        let mut state = TrainerState::new(model, config).unwrap();

        // identical moments: no change
        let same = MomentEstimates::from_parts(vec![0.25; n], vec![0.5; e], 1);
        state.cd_update(&same.clone(), &same, 0.1);
        assert!(state.model().weights().iter().all(|&w| w == 0.0));

        // one edge differs by 0.5 with lr 0.1: weight moves by 0.05
        let mut corr = vec![0.0; e];
        corr[2] = 0.5;
        let data = MomentEstimates::from_parts(vec![0.0; n], corr, 1);
        let zero = MomentEstimates::from_parts(vec![0.0; n], vec![0.0; e], 1);
        state.cd_update(&data, &zero, 0.1);
        assert_abs_diff_eq!(state.model().weights()[2], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn momentum_compounds_identical_gradients() {
        let topology = tiny_visible_topology();
        let model = SparseIsingModel::zeros(topology.clone(), 1.0);
        let e = topology.edge_count();
        let n = topology.node_count();
        let mut config = quick_config(Method::Gibbs);
        config.momentum = 0.6;
        let mut state = TrainerState::new(model, config).unwrap();
        let gradient = 0.2;
        let data =
            MomentEstimates::from_parts(vec![0.0; n], vec![gradient; e], 1);
        let zero = MomentEstimates::from_parts(vec![0.0; n], vec![0.0; e], 1);
        let lr = 0.1;
        state.cd_update(&data, &zero, lr);
        let first = state.model().weights()[0];
        assert_abs_diff_eq!(first, lr * gradient, epsilon = 1e-15);
        state.cd_update(&data, &zero, lr);
        let second = state.model().weights()[0] - first;
        assert_abs_diff_eq!(second, lr * (0.6 * gradient + gradient), epsilon = 1e-15);
    }

    #[test]
    fn log_linear_schedule_interpolates_geometrically() {
        let schedule = LearningRate::LogLinear {
            start: 0.06,
            end: 0.006,
        };
        assert_abs_diff_eq!(schedule.at(0, 1000), 0.06, epsilon = 1e-12);
        assert_abs_diff_eq!(schedule.at(999, 1000), 0.006, epsilon = 1e-12);
        let mid = schedule.at(500, 1000);
        assert!((mid - 0.019).abs() < 0.001, "mid {mid}");
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let topology = tiny_visible_topology();
        let model = init_model(topology, &[0.5; 3], 5).unwrap();
        let weights = model.weights().to_vec();
        let mut config = quick_config(Method::Gibbs);
        config.epochs = 0;
        let items = [example([1, 1, 1]), example([-1, -1, -1])];
        let result = train(model, &items, config, &TrainHooks::default()).unwrap();
        assert_eq!(result.state.model().weights(), &weights[..]);
        assert!(result.log.is_empty());
    }

    #[test]
    fn weight_symmetry_is_structural_and_training_is_deterministic() {
        let topology = Arc::new(generate_sparse_dbm_with_labels(14, 1, &[8], 5, 6).unwrap());
        let raws: Vec<RawExample> = (0..8)
            .map(|i| RawExample {
                pixels: (0..4).map(|p| ((i + p) % 2 * 255) as u8).collect(),
                digit: (i % 10) as u8,
            })
            .collect();
        let examples: Vec<EncodedExample> =
            raws.iter().map(|r| binarize(r, 127, 1)).collect();
        let p = on_probabilities(&examples);
        let model = init_model(topology.clone(), &p, 11).unwrap();
        let mut config = quick_config(Method::Nmft);
        config.epochs = 3;
        config.batch_size = 4;
        config.batches_per_epoch = 2;
        let a = train(model.clone(), &examples, config, &TrainHooks::default()).unwrap();
        let b = train(model, &examples, config, &TrainHooks::default()).unwrap();
        assert_eq!(a.state.model().weights(), b.state.model().weights());
        assert_eq!(a.state.model().biases(), b.state.model().biases());
    }

    #[test]
    fn checkpoint_round_trip_and_integrity() {
        let topology = tiny_visible_topology();
        let model = init_model(topology.clone(), &[0.3, 0.5, 0.7], 13).unwrap();
        let state = TrainerState::new(model, quick_config(Method::Gibbs)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &state).unwrap();
        let checkpoint = load_checkpoint(&path).unwrap();
        let restored = checkpoint.into_model(topology).unwrap();
        assert_eq!(restored.weights(), state.model().weights());
        assert_eq!(restored.biases(), state.model().biases());
        assert_eq!(restored.beta(), state.model().beta());

        // wrong topology: integrity error
        let other = tiny_visible_topology();
        let mut bad = load_checkpoint(&path).unwrap();
        bad.topology_hash = "0000".into();
        assert!(matches!(
            bad.into_model(other),
            Err(TrainError::Checkpoint(_))
        ));
    }

    #[test]
    fn cd_with_exact_model_moments_climbs_likelihood() {
        // All-visible model trained against exact enumeration moments:
        // the training-set log-likelihood must increase monotonically for a
        // small learning rate.
        let roles = vec![
            NodeRole::VisiblePixel(0),
            NodeRole::VisiblePixel(1),
            NodeRole::VisiblePixel(2),
            NodeRole::VisiblePixel(3),
        ];
        let topology = Arc::new(
            Topology::from_parts(roles, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap(),
        );
        let data: Vec<Vec<i8>> = vec![
            vec![1, 1, -1, -1],
            vec![1, 1, -1, -1],
            vec![-1, -1, 1, 1],
            vec![1, -1, 1, -1],
        ];
        let model = SparseIsingModel::zeros(topology.clone(), 1.0);
        let mut config = quick_config(Method::Gibbs);
        config.momentum = 0.0;
        let mut state = TrainerState::new(model, config).unwrap();

        let data_moments = {
            let k = data.len() as f64;
            let averages = (0..4)
                .map(|v| data.iter().map(|d| d[v] as f64).sum::<f64>() / k)
                .collect();
            let correlations = topology
                .edges()
                .iter()
                .map(|&(i, j)| {
                    data.iter()
                        .map(|d| (d[i as usize] * d[j as usize]) as f64)
                        .sum::<f64>()
                        / k
                })
                .collect();
            MomentEstimates::from_parts(averages, correlations, data.len() as u64)
        };

        let log_likelihood = |model: &SparseIsingModel| -> f64 {
            // exact log p(data) via enumeration
            let beta = model.beta();
            let mut z = 0.0;
            for mask in 0..16u32 {
                let spins: Vec<i8> = (0..4)
                    .map(|b| if mask >> b & 1 == 1 { 1 } else { -1 })
                    .collect();
                z += (-beta * model.compute_energy(&spins)).exp();
            }
            data.iter()
                .map(|d| -beta * model.compute_energy(d) - z.ln())
                .sum()
        };

        let mut previous = log_likelihood(state.model());
        for _ in 0..20 {
            let model_moments = crate::metrics::exact_moments(state.model()).unwrap();
            state.cd_update(&data_moments, &model_moments, 0.05);
            let current = log_likelihood(state.model());
            assert!(
                current > previous - 1e-12,
                "log-likelihood fell: {previous} -> {current}"
            );
            previous = current;
        }
    }
}
