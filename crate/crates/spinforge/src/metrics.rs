//! Evaluation: exact Boltzmann enumeration for small models, softmax
//! classification over label nodes, accuracy, log-likelihood, relative
//! moment errors, and histogram export for correlation comparisons.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::EncodedExample;
use crate::meanfield::{nmft_solve, Clamps, MftConfig};
use crate::sampler::{run_chain, ChainParams, MomentEstimates, SparseIsingModel, SpinState};
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("exact enumeration refused: {0} free spins > {MAX_EXACT_NODES}")]
    TooLarge(usize),
    #[error("relative error undefined: reference moments are all zero")]
    ZeroReference,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Largest spin count the enumeration oracle will accept.
pub const MAX_EXACT_NODES: usize = 20;

/// Exact Boltzmann moments by enumerating all `2^N` configurations.
pub fn exact_moments(model: &SparseIsingModel) -> Result<MomentEstimates, MetricsError> {
    let n = model.topology().node_count();
    exact_moments_clamped(model, &vec![None; n])
}

/// Exact conditional moments with clamped spins held fixed; enumerates the
/// free spins only.
pub fn exact_moments_clamped(
    model: &SparseIsingModel,
    clamps: &Clamps,
) -> Result<MomentEstimates, MetricsError> {
    let topology = model.topology();
    let n = topology.node_count();
    assert_eq!(clamps.len(), n, "clamp vector size mismatch");
    let free: Vec<usize> = (0..n).filter(|&v| clamps[v].is_none()).collect();
    if free.len() > MAX_EXACT_NODES {
        return Err(MetricsError::TooLarge(free.len()));
    }
    let beta = model.beta();
    let states = 1u64 << free.len();

    let mut spins: Vec<i8> = (0..n).map(|v| clamps[v].unwrap_or(1)).collect();
    let mut energies = Vec::with_capacity(states as usize);
    let mut min_energy = f64::INFINITY;
    for mask in 0..states {
        for (bit, &v) in free.iter().enumerate() {
            spins[v] = if mask >> bit & 1 == 1 { 1 } else { -1 };
        }
        let e = model.compute_energy(&spins);
        min_energy = min_energy.min(e);
        energies.push(e);
    }

    let mut partition = 0.0;
    let mut node_sums = vec![0.0; n];
    let mut edge_sums = vec![0.0; topology.edge_count()];
    for mask in 0..states {
        for (bit, &v) in free.iter().enumerate() {
            spins[v] = if mask >> bit & 1 == 1 { 1 } else { -1 };
        }
        // Shift by the ground state so weights stay finite at large beta.
        let weight = (-beta * (energies[mask as usize] - min_energy)).exp();
        partition += weight;
        for (sum, &s) in node_sums.iter_mut().zip(&spins) {
            *sum += weight * s as f64;
        }
        for (sum, &(i, j)) in edge_sums.iter_mut().zip(topology.edges()) {
            *sum += weight * (spins[i as usize] * spins[j as usize]) as f64;
        }
    }

    let averages = node_sums.iter().map(|s| s / partition).collect();
    let correlations = edge_sums.iter().map(|s| s / partition).collect();
    Ok(MomentEstimates::from_parts(averages, correlations, states))
}

/// Frobenius-style relative errors between two moment sets, computed over
/// edge entries for correlations and node entries for averages:
/// `sqrt(sum (A - B)^2) / sqrt(sum B^2)`.
#[derive(Debug, Clone, Copy)]
pub struct RelativeError {
    pub averages: f64,
    pub correlations: f64,
}

pub fn relative_error(
    estimate: &MomentEstimates,
    reference: &MomentEstimates,
) -> Result<RelativeError, MetricsError> {
    fn rel(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
        assert_eq!(a.len(), b.len(), "moment shape mismatch");
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let norm: f64 = b.iter().map(|y| y * y).sum();
        if norm == 0.0 {
            return Err(MetricsError::ZeroReference);
        }
        Ok((diff / norm).sqrt())
    }
    Ok(RelativeError {
        averages: rel(estimate.averages(), reference.averages())?,
        correlations: rel(estimate.correlations(), reference.correlations())?,
    })
}

/// Inference backend for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gibbs,
    Nmft,
    /// Same marginals as NMFT (the hierarchical pass does not modify
    /// averages), kept as a distinct selector for interface parity.
    Hmft,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gibbs" => Ok(Method::Gibbs),
            "nmft" | "mft" => Ok(Method::Nmft),
            "hmft" => Ok(Method::Hmft),
            other => Err(format!(
                "unknown method `{other}` (expected gibbs, nmft, or hmft)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::Gibbs => "gibbs",
            Method::Nmft => "nmft",
            Method::Hmft => "hmft",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceConfig {
    pub method: Method,
    /// Accumulation sweeps per example in Gibbs mode (10% extra burn-in).
    pub gibbs_sweeps: u64,
    pub mft: MftConfig,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            method: Method::Gibbs,
            gibbs_sweeps: 2000,
            mft: MftConfig::default(),
            seed: 0,
        }
    }
}

/// Softmax-normalized digit probabilities and the argmax digit.
#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub per_digit_probability: [f64; 10],
    pub predicted_digit: u8,
}

fn softmax10(scores: [f64; 10]) -> [f64; 10] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 10];
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Classifies one image: pixels clamped, labels and hidden free. The
/// per-digit score is the mean over the digit's replicas of `P(label = +1)`;
/// scores go through a softmax and ties break toward the lowest digit.
pub fn classify(
    model: &SparseIsingModel,
    pixel_spins: &[i8],
    config: &InferenceConfig,
) -> ClassificationResult {
    let topology = model.topology();
    assert!(
        !topology.label_nodes().is_empty(),
        "model topology has no label nodes"
    );
    assert_eq!(
        pixel_spins.len(),
        topology.pixel_count(),
        "pixel vector size mismatch"
    );

    let label_p_plus: Vec<f64> = match config.method {
        Method::Gibbs => {
            let mut state = SpinState::random(topology.node_count(), config.seed);
            for (k, &node) in topology.pixel_nodes().iter().enumerate() {
                state.clamp(node as usize, pixel_spins[k]);
            }
            let moments = run_chain(model, &mut state, ChainParams::fresh(config.gibbs_sweeps));
            topology
                .label_nodes()
                .iter()
                .map(|&v| (moments.averages()[v as usize] + 1.0) / 2.0)
                .collect()
        }
        Method::Nmft | Method::Hmft => {
            let mut clamps = vec![None; topology.node_count()];
            for (k, &node) in topology.pixel_nodes().iter().enumerate() {
                clamps[node as usize] = Some(pixel_spins[k]);
            }
            let solution = nmft_solve(model, &clamps, &config.mft, config.seed);
            topology
                .label_nodes()
                .iter()
                .map(|&v| (solution.marginal_means[v as usize] + 1.0) / 2.0)
                .collect()
        }
    };

    let replicas = topology.label_replicas();
    let mut scores = [0.0; 10];
    for (slot, p) in label_p_plus.iter().enumerate() {
        scores[slot % 10] += p / replicas as f64;
    }
    let per_digit_probability = softmax10(scores);
    let mut predicted_digit = 0u8;
    for d in 1..10 {
        if per_digit_probability[d] > per_digit_probability[predicted_digit as usize] {
            predicted_digit = d as u8;
        }
    }
    ClassificationResult {
        per_digit_probability,
        predicted_digit,
    }
}

/// Classifies every example; per-example RNG substreams derive from the
/// config seed, so the result is reproducible and order-independent.
pub fn classify_all(
    model: &SparseIsingModel,
    examples: &[EncodedExample],
    config: &InferenceConfig,
) -> Vec<ClassificationResult> {
    examples
        .par_iter()
        .enumerate()
        .map(|(idx, ex)| {
            let mut sub = *config;
            sub.seed = crate::sampler::rng::derive_seed(config.seed, idx as u64);
            classify(model, &ex.pixel_spins, &sub)
        })
        .collect()
}

/// Fraction of examples whose argmax digit matches the true digit.
pub fn accuracy(
    model: &SparseIsingModel,
    examples: &[EncodedExample],
    config: &InferenceConfig,
) -> f64 {
    assert!(!examples.is_empty(), "accuracy of an empty example set");
    let results = classify_all(model, examples, config);
    let correct = results
        .iter()
        .zip(examples)
        .filter(|(r, ex)| r.predicted_digit == ex.digit)
        .count();
    correct as f64 / examples.len() as f64
}

/// Sum over examples of the log probability assigned to the true class,
/// with probabilities floored at 1e-12.
pub fn log_likelihood(predictions: &[ClassificationResult], digits: &[u8]) -> f64 {
    assert_eq!(predictions.len(), digits.len(), "prediction count mismatch");
    predictions
        .iter()
        .zip(digits)
        .map(|(r, &d)| r.per_digit_probability[d as usize].max(1e-12).ln())
        .sum()
}

/// Plot-ready per-edge estimate pairs and a histogram of signed errors.
#[derive(Debug, Clone)]
pub struct HistogramReport {
    /// (i, j, estimate_a, estimate_b) per edge.
    pub pairs: Vec<(u32, u32, f64, f64)>,
    pub bin_low: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

pub fn correlation_histogram(
    a: &MomentEstimates,
    b: &MomentEstimates,
    topology: &Topology,
    bins: usize,
) -> HistogramReport {
    assert!(bins >= 1, "need at least one bin");
    assert_eq!(a.correlations().len(), topology.edge_count());
    assert_eq!(b.correlations().len(), topology.edge_count());
    let pairs: Vec<(u32, u32, f64, f64)> = topology
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| (i, j, a.correlations()[e], b.correlations()[e]))
        .collect();
    let errors: Vec<f64> = pairs.iter().map(|&(_, _, x, y)| x - y).collect();
    let mut low = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let mut high = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(high > low) {
        low -= 0.5;
        high += 0.5;
    }
    let width = (high - low) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &err in &errors {
        let idx = (((err - low) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    HistogramReport {
        pairs,
        bin_low: low,
        bin_width: width,
        counts,
    }
}

impl HistogramReport {
    pub fn write_pairs_csv<W: Write>(&self, mut w: W) -> Result<(), MetricsError> {
        writeln!(w, "i,j,estimate_a,estimate_b")?;
        for &(i, j, a, b) in &self.pairs {
            writeln!(w, "{i},{j},{a},{b}")?;
        }
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> Result<(), MetricsError> {
        writeln!(w, "bin_low,bin_high,count")?;
        for (k, &count) in self.counts.iter().enumerate() {
            let lo = self.bin_low + k as f64 * self.bin_width;
            let hi = lo + self.bin_width;
            writeln!(w, "{lo},{hi},{count}")?;
        }
        Ok(())
    }
}
