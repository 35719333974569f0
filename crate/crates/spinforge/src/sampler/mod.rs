//! Gibbs-sampling engine emulating a network of probabilistic bits.
//!
//! Each p-bit sees an input field `I_i = sum_j W_ij m_j + h_i` and resolves to
//! `+1` with probability `(1 + tanh(beta * I_i)) / 2`. Iterating node updates
//! in color-class order samples the Boltzmann distribution of the quadratic
//! energy `E = -sum_{i<j} W_ij m_i m_j - sum_i h_i m_i`.

mod parallel;
pub mod rng;

pub use parallel::{
    benchmark_fps, run_sweeps_parallel, BenchEntry, BenchMode, BenchParallelism, BenchReport,
};

use std::sync::Arc;

use thiserror::Error;

use crate::topology::Topology;
use rng::CounterRng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} weights (one per edge), got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("expected {expected} biases (one per node), got {got}")]
    BiasCount { expected: usize, got: usize },
    #[error("non-finite parameter at {0}")]
    NonFinite(String),
    #[error("beta must be a finite nonnegative number, got {0}")]
    BadBeta(f64),
}

/// How `tanh(beta * I)` is evaluated during updates.
#[derive(Debug, Clone, Default)]
pub enum Activation {
    /// Full-precision `f64::tanh`.
    #[default]
    Exact,
    /// Fixed-point lookup mimicking hardware quantization: the input is
    /// rounded onto a signed 16-bit s3.12 grid covering [-8, 8).
    TanhLut(Arc<TanhLut>),
}

impl Activation {
    pub fn lut() -> Self {
        Activation::TanhLut(Arc::new(TanhLut::new()))
    }

    #[inline(always)]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Activation::Exact => x.tanh(),
            Activation::TanhLut(lut) => lut.eval(x),
        }
    }
}

/// 65536-entry tanh table over a signed 16-bit fixed-point input grid.
#[derive(Debug)]
pub struct TanhLut {
    table: Vec<f64>,
}

impl TanhLut {
    const SCALE: f64 = 4096.0; // s3.12: 12 fractional bits, range [-8, 8)

    pub fn new() -> Self {
        let table = (0..=u16::MAX)
            .map(|i| ((i as i32 - 32768) as f64 / Self::SCALE).tanh())
            .collect();
        TanhLut { table }
    }

    #[inline(always)]
    pub fn eval(&self, x: f64) -> f64 {
        let q = (x * Self::SCALE).round() as i64 + 32768;
        self.table[q.clamp(0, u16::MAX as i64) as usize]
    }
}

impl Default for TanhLut {
    fn default() -> Self {
        Self::new()
    }
}

/// Symmetric weights on topology edges, per-node biases, and an inverse
/// temperature. One weight per unordered edge; no diagonal terms.
#[derive(Debug, Clone)]
pub struct SparseIsingModel {
    topology: Arc<Topology>,
    weights: Vec<f64>,
    biases: Vec<f64>,
    beta: f64,
    activation: Activation,
}

impl SparseIsingModel {
    pub fn new(
        topology: Arc<Topology>,
        weights: Vec<f64>,
        biases: Vec<f64>,
        beta: f64,
    ) -> Result<Self, ModelError> {
        if weights.len() != topology.edge_count() {
            return Err(ModelError::WeightCount {
                expected: topology.edge_count(),
                got: weights.len(),
            });
        }
        if biases.len() != topology.node_count() {
            return Err(ModelError::BiasCount {
                expected: topology.node_count(),
                got: biases.len(),
            });
        }
        if let Some(e) = weights.iter().position(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite(format!("weight of edge {e}")));
        }
        if let Some(v) = biases.iter().position(|h| !h.is_finite()) {
            return Err(ModelError::NonFinite(format!("bias of node {v}")));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(ModelError::BadBeta(beta));
        }
        Ok(SparseIsingModel {
            topology,
            weights,
            biases,
            beta,
            activation: Activation::Exact,
        })
    }

    /// All-zero parameters at the given temperature.
    pub fn zeros(topology: Arc<Topology>, beta: f64) -> Self {
        let weights = vec![0.0; topology.edge_count()];
        let biases = vec![0.0; topology.node_count()];
        SparseIsingModel::new(topology, weights, biases, beta).unwrap()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        assert!(beta.is_finite() && beta >= 0.0, "bad beta {beta}");
        self.beta = beta;
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    /// Input field `I_i = sum_{j in N(i)} W_ij m_j + h_i`.
    #[inline]
    pub fn compute_field(&self, spins: &[i8], node: usize) -> f64 {
        let mut field = self.biases[node];
        for (nbr, edge) in self.topology.neighbors(node) {
            field += self.weights[edge] * spins[nbr] as f64;
        }
        field
    }

    /// Ising energy of a complete configuration; each edge counted once.
    pub fn compute_energy(&self, spins: &[i8]) -> f64 {
        assert_eq!(spins.len(), self.topology.node_count(), "incomplete spins");
        let mut energy = 0.0;
        for (e, &(i, j)) in self.topology.edges().iter().enumerate() {
            energy -= self.weights[e] * (spins[i as usize] * spins[j as usize]) as f64;
        }
        for (v, &h) in self.biases.iter().enumerate() {
            energy -= h * spins[v] as f64;
        }
        energy
    }
}

/// Spin configuration plus clamp mask and the sampling RNG state.
/// Clamped coordinates are never modified by any update or sweep.
#[derive(Debug, Clone)]
pub struct SpinState {
    spins: Vec<i8>,
    clamp_mask: Vec<bool>,
    rng: CounterRng,
    tick: u64,
}

impl SpinState {
    /// Random +-1 spins, nothing clamped. Deterministic in the seed.
    pub fn random(node_count: usize, seed: u64) -> Self {
        let rng = CounterRng::new(seed);
        let spins = (0..node_count)
            .map(|v| if rng.uniform_signed(0, v as u64) < 0.0 { -1 } else { 1 })
            .collect();
        SpinState {
            spins,
            clamp_mask: vec![false; node_count],
            rng,
            tick: 1,
        }
    }

    pub fn from_spins(spins: Vec<i8>, seed: u64) -> Self {
        assert!(spins.iter().all(|&s| s == 1 || s == -1), "spins must be +-1");
        let n = spins.len();
        SpinState {
            spins,
            clamp_mask: vec![false; n],
            rng: CounterRng::new(seed),
            tick: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, node: usize) -> i8 {
        self.spins[node]
    }

    pub fn clamp_mask(&self) -> &[bool] {
        &self.clamp_mask
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.clamp_mask[node]
    }

    /// Pins `node` at `value`; sweeps will skip it.
    pub fn clamp(&mut self, node: usize, value: i8) {
        assert!(value == 1 || value == -1, "clamp value must be +-1");
        self.spins[node] = value;
        self.clamp_mask[node] = true;
    }

    pub fn release(&mut self, node: usize) {
        self.clamp_mask[node] = false;
    }

    pub fn release_all(&mut self) {
        self.clamp_mask.fill(false);
    }

    pub fn unclamped_count(&self) -> usize {
        self.clamp_mask.iter().filter(|&&c| !c).count()
    }

    pub fn rng(&self) -> &CounterRng {
        &self.rng
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub(crate) fn advance_tick(&mut self, by: u64) {
        self.tick += by;
    }
}

/// One stochastic update of an unclamped node: draws `r` uniform in [-1, 1)
/// and resolves `sgn(tanh(beta * I_i) - r)`.
pub fn pbit_update(model: &SparseIsingModel, state: &mut SpinState, node: usize) -> i8 {
    assert!(!state.clamp_mask[node], "cannot update clamped node {node}");
    let field = model.compute_field(&state.spins, node);
    let r = state.rng.uniform_signed(state.tick, node as u64);
    let spin = if model.activation.eval(model.beta * field) > r {
        1
    } else {
        -1
    };
    state.spins[node] = spin;
    state.tick += 1;
    spin
}

#[inline(always)]
fn update_node(model: &SparseIsingModel, spins: &mut [i8], rng: &CounterRng, tick: u64, node: usize) {
    let field = model.compute_field(spins, node);
    let r = rng.uniform_signed(tick, node as u64);
    spins[node] = if model.activation.eval(model.beta * field) > r {
        1
    } else {
        -1
    };
}

/// Node-visit order within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// Color class by color class (ascending color, ascending index within a
    /// class). Members of a class share no edge, so they may update in any
    /// order or in parallel without changing the result.
    #[default]
    Chromatic,
    /// Plain index-ascending order, each update seeing the latest spins.
    Sequential,
}

/// Updates every unclamped node exactly once, in color-class order.
pub fn gibbs_sweep(model: &SparseIsingModel, state: &mut SpinState) {
    let tick = state.tick;
    for class in model.topology.color_classes() {
        for &v in class {
            let v = v as usize;
            if !state.clamp_mask[v] {
                update_node(model, &mut state.spins, &state.rng, tick, v);
            }
        }
    }
    state.tick += 1;
}

/// Updates every unclamped node exactly once, in index order.
pub fn gibbs_sweep_sequential(model: &SparseIsingModel, state: &mut SpinState) {
    let tick = state.tick;
    for v in 0..state.spins.len() {
        if !state.clamp_mask[v] {
            update_node(model, &mut state.spins, &state.rng, tick, v);
        }
    }
    state.tick += 1;
}

/// Per-node averages and per-edge correlations estimated from samples.
/// Correlations are stored only on topology edges, indexed by edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    averages: Vec<f64>,
    correlations: Vec<f64>,
    sample_count: u64,
}

impl MomentEstimates {
    pub fn from_parts(averages: Vec<f64>, correlations: Vec<f64>, sample_count: u64) -> Self {
        debug_assert!(averages.iter().all(|a| a.abs() <= 1.0 + 1e-12));
        debug_assert!(correlations.iter().all(|c| c.abs() <= 1.0 + 1e-12));
        MomentEstimates {
            averages,
            correlations,
            sample_count,
        }
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Element-wise mean of several estimates, taken in slice order so the
    /// result does not depend on how the inputs were produced.
    pub fn mean_of(parts: &[MomentEstimates]) -> MomentEstimates {
        assert!(!parts.is_empty(), "mean of zero moment sets");
        let n = parts[0].averages.len();
        let e = parts[0].correlations.len();
        let mut averages = vec![0.0; n];
        let mut correlations = vec![0.0; e];
        let mut count = 0u64;
        for p in parts {
            assert_eq!(p.averages.len(), n, "moment shape mismatch");
            assert_eq!(p.correlations.len(), e, "moment shape mismatch");
            for (acc, a) in averages.iter_mut().zip(&p.averages) {
                *acc += a;
            }
            for (acc, c) in correlations.iter_mut().zip(&p.correlations) {
                *acc += c;
            }
            count += p.sample_count;
        }
        let k = parts.len() as f64;
        for a in &mut averages {
            *a /= k;
        }
        for c in &mut correlations {
            *c /= k;
        }
        MomentEstimates {
            averages,
            correlations,
            sample_count: count,
        }
    }

    /// Largest absolute difference across averages and correlations.
    pub fn linf_distance(&self, other: &MomentEstimates) -> f64 {
        let a = self
            .averages
            .iter()
            .zip(&other.averages)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let c = self
            .correlations
            .iter()
            .zip(&other.correlations)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        a.max(c)
    }
}

/// Integer running sums over post-sweep configurations. Clamped nodes and
/// edges between two clamps never change, so only the live part is summed
/// each sweep; frozen coordinates are filled in exactly at finalize time.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    free_nodes: Vec<u32>,
    live_edges: Vec<u32>,
    node_sums: Vec<i64>,
    edge_sums: Vec<i64>,
    count: u64,
}

impl MomentAccumulator {
    pub fn new(topology: &Topology) -> Self {
        Self::with_clamps(topology, &[])
    }

    /// `clamp_mask` may be empty (nothing clamped) or one flag per node.
    pub fn with_clamps(topology: &Topology, clamp_mask: &[bool]) -> Self {
        let n = topology.node_count();
        let clamped = |v: usize| !clamp_mask.is_empty() && clamp_mask[v];
        let free_nodes = (0..n).filter(|&v| !clamped(v)).map(|v| v as u32).collect();
        let live_edges = topology
            .edges()
            .iter()
            .enumerate()
            .filter(|&(_, &(i, j))| !(clamped(i as usize) && clamped(j as usize)))
            .map(|(e, _)| e as u32)
            .collect();
        MomentAccumulator {
            free_nodes,
            live_edges,
            node_sums: vec![0; n],
            edge_sums: vec![0; topology.edge_count()],
            count: 0,
        }
    }

    #[inline]
    pub fn record(&mut self, topology: &Topology, spins: &[i8]) {
        let edges = topology.edges();
        for &v in &self.free_nodes {
            self.node_sums[v as usize] += spins[v as usize] as i64;
        }
        for &e in &self.live_edges {
            let (i, j) = edges[e as usize];
            self.edge_sums[e as usize] += (spins[i as usize] * spins[j as usize]) as i64;
        }
        self.count += 1;
    }

    /// `spins` supplies the frozen coordinates skipped during recording.
    pub fn finalize(self, topology: &Topology, spins: &[i8]) -> MomentEstimates {
        assert!(self.count > 0, "no samples recorded");
        let k = self.count as f64;
        let mut averages: Vec<f64> = spins.iter().map(|&s| s as f64).collect();
        for &v in &self.free_nodes {
            averages[v as usize] = self.node_sums[v as usize] as f64 / k;
        }
        let mut correlations: Vec<f64> = topology
            .edges()
            .iter()
            .map(|&(i, j)| (spins[i as usize] * spins[j as usize]) as f64)
            .collect();
        for &e in &self.live_edges {
            correlations[e as usize] = self.edge_sums[e as usize] as f64 / k;
        }
        MomentEstimates {
            averages,
            correlations,
            sample_count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChainParams {
    pub sweeps: u64,
    pub burn_in: u64,
    pub order: SweepOrder,
}

impl ChainParams {
    pub fn new(sweeps: u64) -> Self {
        ChainParams {
            sweeps,
            burn_in: 0,
            order: SweepOrder::Chromatic,
        }
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_order(mut self, order: SweepOrder) -> Self {
        self.order = order;
        self
    }

    /// Fresh-chain policy: burn 10% of the accumulation sweeps.
    pub fn fresh(sweeps: u64) -> Self {
        ChainParams::new(sweeps).with_burn_in(sweeps / 10)
    }
}

/// Runs `burn_in + sweeps` sweeps, accumulating moments over the last
/// `sweeps` post-sweep configurations. The state persists so the chain can
/// be continued across parameter updates.
pub fn run_chain(
    model: &SparseIsingModel,
    state: &mut SpinState,
    params: ChainParams,
) -> MomentEstimates {
    assert!(params.sweeps >= 1, "need at least one accumulation sweep");
    assert_eq!(state.len(), model.topology().node_count(), "state size mismatch");
    let sweep = match params.order {
        SweepOrder::Chromatic => gibbs_sweep,
        SweepOrder::Sequential => gibbs_sweep_sequential,
    };
    for _ in 0..params.burn_in {
        sweep(model, state);
    }
    let mut acc = MomentAccumulator::with_clamps(model.topology(), &state.clamp_mask);
    for _ in 0..params.sweeps {
        sweep(model, state);
        acc.record(model.topology(), &state.spins);
    }
    acc.finalize(model.topology(), &state.spins)
}
