//! Mean-field solvers: the naive self-consistency iteration and the
//! hierarchical correlation estimator built on top of it.
//!
//! Naive MFT (NMFT) solves `<m_i> = tanh(beta * (W <m> + h)_i)` by damped
//! fixed-point iteration and approximates correlations as products of means.
//! Hierarchical MFT (HMFT) drops that independence assumption: it reruns the
//! solver with each node clamped to +-1 and assembles edge correlations from
//! `<m_i m_k> = sum_v p(m_k = v) * v * E[m_i | m_k = v]`, averaging the two
//! conditioning directions. Averages are kept from the base NMFT pass.

use rayon::prelude::*;

use crate::sampler::rng::CounterRng;
use crate::sampler::{MomentEstimates, SparseIsingModel};
use crate::topology::Topology;

/// Damped fixed-point iteration settings.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MftConfig {
    /// Update factor lambda in (0, 1]: fraction of the new iterate kept.
    pub damping: f64,
    /// Convergence tolerance delta for the relative-change residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Scale of the random initial means.
    pub init_scale: f64,
}

impl Default for MftConfig {
    fn default() -> Self {
        MftConfig {
            damping: 0.5,
            tolerance: 1e-2,
            max_iterations: 1000,
            init_scale: 0.01,
        }
    }
}

impl MftConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(format!("damping {} outside (0, 1]", self.damping));
        }
        if !(self.tolerance > 0.0) {
            return Err(format!("tolerance {} must be positive", self.tolerance));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be >= 1".into());
        }
        if !(self.init_scale > 0.0) {
            return Err(format!("init_scale {} must be positive", self.init_scale));
        }
        Ok(())
    }
}

/// Converged (or best-effort) marginal means and their input fields.
#[derive(Debug, Clone)]
pub struct MftSolution {
    pub marginal_means: Vec<f64>,
    pub fields: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Per-node clamp assignment; `None` leaves the node free.
pub type Clamps = [Option<i8>];

/// Denominator floor: keeps the relative residual defined at the
/// paramagnetic fixed point where all means vanish.
const RESIDUAL_FLOOR: f64 = 1e-12;

#[inline]
fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Self-consistent marginals with clamped coordinates held fixed.
///
/// Unclamped means start at `init_scale * uniform(-1, 1)` drawn from `seed`;
/// iteration stops when the relative residual
/// `sum|m_new - m_old| / max(sum|m_new + m_old|, floor)` or the absolute
/// residual `sum|m_new - m_old|` drops to the tolerance. Non-convergence is
/// reported, not an error.
pub fn nmft_solve(
    model: &SparseIsingModel,
    clamps: &Clamps,
    config: &MftConfig,
    seed: u64,
) -> MftSolution {
    let n = model.topology().node_count();
    assert_eq!(clamps.len(), n, "clamp vector size mismatch");
    let rng = CounterRng::new(seed);
    let init: Vec<f64> = (0..n)
        .map(|v| match clamps[v] {
            Some(s) => s as f64,
            None => config.init_scale * rng.uniform_signed(0, v as u64),
        })
        .collect();
    solve_from(model, clamps, config, init)
}

/// Iteration core with explicit initial means (used for warm starts).
fn solve_from(
    model: &SparseIsingModel,
    clamps: &Clamps,
    config: &MftConfig,
    mut means: Vec<f64>,
) -> MftSolution {
    let topology = model.topology();
    let n = topology.node_count();
    let beta = model.beta();
    let mut fields = vec![0.0; n];
    let mut new_means = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        for v in 0..n {
            let mut field = model.biases()[v];
            for (nbr, edge) in topology.neighbors(v) {
                field += model.weights()[edge] * means[nbr];
            }
            fields[v] = field;
        }
        let mut abs_change = 0.0;
        let mut abs_sum = 0.0;
        for v in 0..n {
            new_means[v] = match clamps[v] {
                Some(s) => s as f64,
                None => (beta * fields[v]).tanh(),
            };
            abs_change += (new_means[v] - means[v]).abs();
            abs_sum += (new_means[v] + means[v]).abs();
        }
        residual = abs_change / abs_sum.max(RESIDUAL_FLOOR);
        converged = residual <= config.tolerance || abs_change <= config.tolerance;
        for v in 0..n {
            if clamps[v].is_none() {
                means[v] = config.damping * new_means[v] + (1.0 - config.damping) * means[v];
            } else {
                means[v] = new_means[v];
            }
        }
        if converged {
            break;
        }
    }

    MftSolution {
        marginal_means: new_means,
        fields,
        converged,
        iterations,
        residual,
    }
}

/// Worst-case factor relating the stopping tolerance to the fixed-point
/// defect `max_i |m_i - tanh(beta (W m + h)_i)|`: one damped step moves the
/// means by at most `tolerance * 2n` in l1, and the tanh composition is
/// `beta * max_i sum_j |W_ij|` Lipschitz.
pub fn residual_bound_factor(model: &SparseIsingModel) -> f64 {
    let topology = model.topology();
    let n = topology.node_count();
    let max_row: f64 = (0..n)
        .map(|v| {
            topology
                .neighbors(v)
                .map(|(_, e)| model.weights()[e].abs())
                .sum()
        })
        .fold(0.0, f64::max);
    2.0 * n as f64 * model.beta() * max_row
}

/// Fixed-point defect of a means vector over unclamped coordinates.
pub fn fixed_point_defect(model: &SparseIsingModel, means: &[f64], clamps: &Clamps) -> f64 {
    let topology = model.topology();
    let beta = model.beta();
    (0..topology.node_count())
        .filter(|&v| clamps[v].is_none())
        .map(|v| {
            let mut field = model.biases()[v];
            for (nbr, edge) in topology.neighbors(v) {
                field += model.weights()[edge] * means[nbr];
            }
            (means[v] - (beta * field).tanh()).abs()
        })
        .fold(0.0, f64::max)
}

/// Correlations under the independence assumption:
/// `<m_i m_j> = <m_i> <m_j>` on every edge.
pub fn nmft_correlations(solution: &MftSolution, topology: &Topology) -> MomentEstimates {
    let means = &solution.marginal_means;
    let correlations = topology
        .edges()
        .iter()
        .map(|&(i, j)| means[i as usize] * means[j as usize])
        .collect();
    MomentEstimates::from_parts(means.clone(), correlations, 1)
}

/// Hierarchical MFT output: moments plus solver bookkeeping.
#[derive(Debug, Clone)]
pub struct HmftResult {
    pub moments: MomentEstimates,
    pub base: MftSolution,
    /// Total NMFT invocations: 1 + 2 * unclamped count.
    pub solver_runs: usize,
    pub nonconverged_runs: usize,
}

/// Edge correlations from conditional solver runs.
///
/// For every unclamped node `k` the solver reruns with `k` clamped to each
/// sign (warm-started from the base pass), giving conditional means of its
/// neighbors; `p(m_k)` comes from the base-pass field of `k`. Each free-free
/// edge gets the mean of its two direction estimates; edges with a clamped
/// endpoint contribute the clamp value times the free mean, and fully
/// clamped edges the exact product. Averages are the base NMFT means,
/// unchanged.
pub fn hmft_solve(
    model: &SparseIsingModel,
    clamps: &Clamps,
    config: &MftConfig,
    seed: u64,
) -> HmftResult {
    let topology = model.topology().clone();
    let n = topology.node_count();
    let beta = model.beta();
    let base = nmft_solve(model, clamps, config, seed);
    let mut nonconverged = !base.converged as usize;

    let free: Vec<usize> = (0..n).filter(|&v| clamps[v].is_none()).collect();

    // p(m_k = +1) from the base pass: sigma(2 beta I_k); clamped nodes are
    // deterministic.
    let p_plus: Vec<f64> = (0..n)
        .map(|v| match clamps[v] {
            Some(s) => ((1 + s) / 2) as f64,
            None => stable_sigmoid(2.0 * beta * base.fields[v]),
        })
        .collect();

    // Conditioning runs, one pair per free node; results merged in node
    // order so the output is independent of scheduling.
    let per_node: Vec<(Vec<(usize, f64)>, usize)> = free
        .par_iter()
        .map(|&k| {
            let mut failed = 0;
            let mut estimates: Vec<(usize, f64)> = Vec::new();
            let mut cond_means: Vec<Vec<f64>> = Vec::with_capacity(2);
            let mut run_clamps: Vec<Option<i8>> = clamps.to_vec();
            for &v in &[-1i8, 1i8] {
                run_clamps[k] = Some(v);
                let mut init = base.marginal_means.clone();
                init[k] = v as f64;
                let solution = solve_from(model, &run_clamps, config, init);
                failed += !solution.converged as usize;
                cond_means.push(solution.marginal_means);
            }
            let p = p_plus[k];
            for (nbr, edge) in topology.neighbors(k) {
                if clamps[nbr].is_some() {
                    continue;
                }
                // sum over v_k of p(v_k) * v_k * E[m_nbr | m_k = v_k]
                let est = (1.0 - p) * (-1.0) * cond_means[0][nbr] + p * cond_means[1][nbr];
                estimates.push((edge, est));
            }
            (estimates, failed)
        })
        .collect();

    let mut corr_sums = vec![0.0; topology.edge_count()];
    let mut corr_counts = vec![0u32; topology.edge_count()];
    for (estimates, failed) in per_node {
        nonconverged += failed;
        for (edge, est) in estimates {
            corr_sums[edge] += est;
            corr_counts[edge] += 1;
        }
    }

    let correlations: Vec<f64> = topology
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let (i, j) = (i as usize, j as usize);
            match (clamps[i], clamps[j]) {
                (Some(a), Some(b)) => (a * b) as f64,
                (Some(a), None) => a as f64 * base.marginal_means[j],
                (None, Some(b)) => b as f64 * base.marginal_means[i],
                (None, None) => {
                    debug_assert_eq!(corr_counts[e], 2);
                    corr_sums[e] / corr_counts[e] as f64
                }
            }
        })
        .map(|c| c.clamp(-1.0, 1.0))
        .collect();

    let moments = MomentEstimates::from_parts(base.marginal_means.clone(), correlations, 1);
    HmftResult {
        moments,
        base,
        solver_runs: 1 + 2 * free.len(),
        nonconverged_runs: nonconverged,
    }
}
