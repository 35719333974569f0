//! Multi-threaded chromatic sweeps and the flips-per-second benchmark.
//!
//! Within a color class no two nodes share an edge, so the class can be
//! partitioned across worker threads that update their slices concurrently.
//! A spin barrier separates consecutive classes; the counter-based RNG keys
//! draws by (tick, node), so the sample stream is identical for every thread
//! count.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use super::{SparseIsingModel, SpinState};

/// Sense-reversing busy-wait barrier. Class phases are microseconds long, so
/// parking-based synchronization would dominate the sweep time.
struct SpinBarrier {
    waiting: AtomicUsize,
    generation: AtomicUsize,
    parties: usize,
}

impl SpinBarrier {
    fn new(parties: usize) -> Self {
        SpinBarrier {
            waiting: AtomicUsize::new(0),
            generation: AtomicUsize::new(0),
            parties,
        }
    }

    #[inline]
    fn wait(&self) {
        let generation = self.generation.load(Ordering::Acquire);
        if self.waiting.fetch_add(1, Ordering::AcqRel) + 1 == self.parties {
            self.waiting.store(0, Ordering::Relaxed);
            self.generation.store(generation + 1, Ordering::Release);
        } else {
            let mut spins = 0u32;
            while self.generation.load(Ordering::Acquire) == generation {
                spins += 1;
                if spins < 4096 {
                    std::hint::spin_loop();
                } else {
                    // Oversubscribed: give the lagging worker a core.
                    std::thread::yield_now();
                }
            }
        }
    }
}

/// Shared spin vector for intra-class parallel writes.
struct SharedSpins {
    ptr: *mut i8,
}

// SAFETY: workers only write nodes of the class currently being processed,
// every node belongs to exactly one worker slice, and reads during a class
// phase only touch other classes (coloring validity). Phases are separated
// by the barrier, which orders writes before subsequent reads.
unsafe impl Sync for SharedSpins {}

impl SharedSpins {
    #[inline(always)]
    unsafe fn get(&self, i: usize) -> i8 {
        unsafe { *self.ptr.add(i) }
    }

    #[inline(always)]
    unsafe fn set(&self, i: usize, v: i8) {
        unsafe { *self.ptr.add(i) = v }
    }
}

/// Runs `sweeps` chromatic sweeps over `state` using `threads` workers.
/// Produces exactly the same configuration and RNG stream as calling
/// [`super::gibbs_sweep`] `sweeps` times.
pub fn run_sweeps_parallel(
    model: &SparseIsingModel,
    state: &mut SpinState,
    sweeps: u64,
    threads: usize,
) {
    run_sweeps_driver(model, state, threads, SweepPlan::Fixed(sweeps));
}

#[derive(Clone, Copy)]
enum SweepPlan {
    Fixed(u64),
    /// Sweep in batches until the deadline passes, all workers agreeing on
    /// the total.
    Deadline { duration: Duration, batch: u64 },
}

fn run_sweeps_driver(
    model: &SparseIsingModel,
    state: &mut SpinState,
    threads: usize,
    plan: SweepPlan,
) -> u64 {
    let threads = threads.max(1);
    if threads == 1 {
        return match plan {
            SweepPlan::Fixed(sweeps) => {
                for _ in 0..sweeps {
                    super::gibbs_sweep(model, state);
                }
                sweeps
            }
            SweepPlan::Deadline { duration, batch } => {
                let start = Instant::now();
                let mut done = 0;
                while start.elapsed() < duration {
                    for _ in 0..batch {
                        super::gibbs_sweep(model, state);
                    }
                    done += batch;
                }
                done
            }
        };
    }

    let topology = model.topology().clone();
    let clamp = state.clamp_mask().to_vec();
    let rng = *state.rng();
    let base_tick = state.tick();

    // Per-class contiguous slices of unclamped nodes, one per worker.
    let mut slices: Vec<Vec<&[u32]>> = Vec::with_capacity(topology.color_classes().len());
    let class_storage: Vec<Vec<u32>> = topology
        .color_classes()
        .iter()
        .map(|class| {
            class
                .iter()
                .copied()
                .filter(|&v| !clamp[v as usize])
                .collect()
        })
        .collect();
    for class in &class_storage {
        let chunk = class.len().div_ceil(threads).max(1);
        let mut parts: Vec<&[u32]> = class.chunks(chunk).collect();
        parts.resize(threads, &[]);
        slices.push(parts);
    }

    let barrier = SpinBarrier::new(threads);
    let stop = AtomicBool::new(false);
    let total = AtomicUsize::new(0);
    let shared = SharedSpins {
        ptr: state.spins_mut_ptr(),
    };
    let start = Instant::now();

    std::thread::scope(|scope| {
        for worker in 0..threads {
            let slices = &slices;
            let barrier = &barrier;
            let stop = &stop;
            let total = &total;
            let shared = &shared;
            let topology = &topology;
            scope.spawn(move || {
                let beta = model.beta();
                let mut sweep_idx: u64 = 0;
                let (mut batch, deadline) = match plan {
                    SweepPlan::Fixed(sweeps) => (sweeps, None),
                    SweepPlan::Deadline { duration, batch } => (batch, Some(duration)),
                };
                'outer: loop {
                    for _ in 0..batch {
                        let tick = base_tick + sweep_idx;
                        for class_parts in slices.iter() {
                            for &v in class_parts[worker] {
                                let v = v as usize;
                                // SAFETY: `v` is in this worker's slice of the
                                // current class; neighbors are in other classes,
                                // so no concurrent write touches what we read
                                // and no other worker writes `v`.
                                unsafe {
                                    let mut field = model.biases()[v];
                                    for (nbr, edge) in topology.neighbors(v) {
                                        field +=
                                            model.weights()[edge] * shared.get(nbr) as f64;
                                    }
                                    let r = rng.uniform_signed(tick, v as u64);
                                    let s = if model.activation().eval(beta * field) > r {
                                        1
                                    } else {
                                        -1
                                    };
                                    shared.set(v, s);
                                }
                            }
                            barrier.wait();
                        }
                        sweep_idx += 1;
                    }
                    match deadline {
                        None => break 'outer,
                        Some(duration) => {
                            // Worker 0 decides; everyone reads the flag at the
                            // same batch boundary.
                            if worker == 0 && start.elapsed() >= duration {
                                stop.store(true, Ordering::Release);
                            }
                            barrier.wait();
                            if stop.load(Ordering::Acquire) {
                                break 'outer;
                            }
                        }
                    }
                    let _ = &mut batch;
                }
                if worker == 0 {
                    total.store(sweep_idx as usize, Ordering::Release);
                }
            });
        }
    });

    let done = total.load(Ordering::Acquire) as u64;
    state.advance_tick(done);
    done
}

impl SpinState {
    pub(crate) fn spins_mut_ptr(&mut self) -> *mut i8 {
        self.spins.as_mut_ptr()
    }
}

/// How long [`benchmark_fps`] samples for each thread count.
#[derive(Debug, Clone, Copy)]
pub enum BenchMode {
    /// Run until the wall-clock budget is spent.
    WallClock(Duration),
    /// Run a fixed number of sweeps; flip counts are then exactly
    /// `sweeps * unclamped_nodes` (per chain in chains mode).
    FixedSweeps(u64),
}

/// What the thread budget is spent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchParallelism {
    /// One chain; threads split each color class (barrier per class).
    WithinSweep,
    /// One independent chain per thread, each sweeping serially.
    IndependentChains,
}

impl fmt::Display for BenchParallelism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchParallelism::WithinSweep => write!(f, "sweep"),
            BenchParallelism::IndependentChains => write!(f, "chains"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub threads: usize,
    pub sweeps: u64,
    pub flips: u64,
    pub seconds: f64,
    pub flips_per_second: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub node_count: usize,
    pub unclamped_nodes: usize,
    pub parallelism: BenchParallelism,
    pub entries: Vec<BenchEntry>,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "nodes={} unclamped={} mode={}",
            self.node_count, self.unclamped_nodes, self.parallelism
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "threads={} sweeps={} flips={} seconds={:.4} fps={:.3e}",
                e.threads, e.sweeps, e.flips, e.seconds, e.flips_per_second
            )?;
        }
        Ok(())
    }
}

/// Measures attempted p-bit updates per second for each thread count.
/// Every sweep attempts one update per unclamped node, so
/// `flips = sweeps * unclamped_nodes` holds exactly.
pub fn benchmark_fps(
    model: &SparseIsingModel,
    seed: u64,
    thread_counts: &[usize],
    mode: BenchMode,
    parallelism: BenchParallelism,
) -> BenchReport {
    let n = model.topology().node_count();
    let mut entries = Vec::new();
    let mut unclamped = n;
    for &threads in thread_counts {
        let threads = threads.max(1);
        let start = Instant::now();
        let sweeps = match parallelism {
            BenchParallelism::WithinSweep => {
                let mut state = SpinState::random(n, seed);
                unclamped = state.unclamped_count();
                match mode {
                    BenchMode::FixedSweeps(sweeps) => {
                        run_sweeps_driver(model, &mut state, threads, SweepPlan::Fixed(sweeps))
                    }
                    BenchMode::WallClock(duration) => run_sweeps_driver(
                        model,
                        &mut state,
                        threads,
                        SweepPlan::Deadline {
                            duration,
                            batch: 16,
                        },
                    ),
                }
            }
            BenchParallelism::IndependentChains => {
                unclamped = n;
                run_chains(model, seed, threads, mode)
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        let flips = sweeps * unclamped as u64;
        entries.push(BenchEntry {
            threads,
            sweeps,
            flips,
            seconds,
            flips_per_second: flips as f64 / seconds.max(1e-12),
        });
    }
    BenchReport {
        node_count: n,
        unclamped_nodes: unclamped,
        parallelism,
        entries,
    }
}

/// Runs one serial chain per thread; returns total sweeps across chains.
fn run_chains(model: &SparseIsingModel, seed: u64, threads: usize, mode: BenchMode) -> u64 {
    let n = model.topology().node_count();
    let totals: Vec<u64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|chain| {
                scope.spawn(move || {
                    let mut state =
                        SpinState::random(n, super::rng::derive_seed(seed, chain as u64));
                    match mode {
                        BenchMode::FixedSweeps(sweeps) => {
                            for _ in 0..sweeps {
                                super::gibbs_sweep(model, &mut state);
                            }
                            sweeps
                        }
                        BenchMode::WallClock(duration) => {
                            let start = Instant::now();
                            let mut done = 0u64;
                            while start.elapsed() < duration {
                                for _ in 0..16 {
                                    super::gibbs_sweep(model, &mut state);
                                }
                                done += 16;
                            }
                            done
                        }
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    totals.iter().sum()
}
