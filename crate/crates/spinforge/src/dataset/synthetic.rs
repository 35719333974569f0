//! Deterministic MNIST-shaped synthetic corpus for offline runs and tests.
//!
//! Ten fixed prototype glyphs are sampled with independent pixel-flip noise
//! and emitted as ordinary 28x28 grayscale, so the IDX and binarization
//! paths see realistic input. The statistics mimic binarized MNIST: a clean
//! always-off margin (like the digit borders) and sparse strokes inside,
//! giving the extreme per-pixel on-probabilities the real dataset has.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::idx::{write_idx, IdxError};
use super::RawExample;
use crate::sampler::rng::CounterRng;

pub const ROWS: usize = 28;
pub const COLS: usize = 28;
const PIXELS: usize = ROWS * COLS;

/// Width of the always-off frame around the active region.
const MARGIN: usize = 5;

/// Fraction of interior prototype pixels that are on.
const ON_RATE: f64 = 0.33;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Per-pixel flip probability inside the active region.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            noise: 0.02,
        }
    }
}

fn interior(pixel: usize) -> bool {
    let row = pixel / COLS;
    let col = pixel % COLS;
    (MARGIN..ROWS - MARGIN).contains(&row) && (MARGIN..COLS - MARGIN).contains(&col)
}

fn prototype_pixel(rng: &CounterRng, digit: u8, pixel: usize) -> bool {
    // tick space 0..10 reserved for prototypes
    interior(pixel) && (rng.uniform_signed(digit as u64, pixel as u64) + 1.0) / 2.0 < ON_RATE
}

/// Generates `count` examples cycling through the ten digits. Example `i`
/// is fully determined by (seed, i).
pub fn synthetic_raw(count: usize, config: &SyntheticConfig) -> Vec<RawExample> {
    let rng = CounterRng::new(config.seed);
    (0..count)
        .map(|i| {
            let digit = (i % 10) as u8;
            let pixels = (0..PIXELS)
                .map(|p| {
                    let mut on = prototype_pixel(&rng, digit, p);
                    let flip = interior(p)
                        && (rng.uniform_signed(1000 + i as u64, p as u64) + 1.0) / 2.0
                            < config.noise;
                    if flip {
                        on = !on;
                    }
                    if on {
                        255
                    } else {
                        0
                    }
                })
                .collect();
            RawExample { pixels, digit }
        })
        .collect()
}

/// Writes a synthetic corpus as an IDX image/label file pair.
pub fn write_synthetic_idx(
    images_path: &Path,
    labels_path: &Path,
    count: usize,
    config: &SyntheticConfig,
) -> Result<(), IdxError> {
    let examples = synthetic_raw(count, &config.clone());
    let images = BufWriter::new(File::create(images_path)?);
    let labels = BufWriter::new(File::create(labels_path)?);
    write_idx(images, labels, &examples, ROWS, COLS)
}
