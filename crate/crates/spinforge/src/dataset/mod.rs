//! MNIST-style data handling: IDX ingestion, binarization to +-1 spins,
//! replicated label encoding, deterministic batching and subsampling.

pub mod idx;
pub mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sampler::rng::derive_seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need {need} examples, have {have}")]
    Insufficient { need: usize, have: usize },
    #[error("balanced subsample of {count} needs a multiple of 10")]
    UnbalancedCount { count: usize },
    #[error("digit {digit} has only {have} examples, balanced draw needs {need}")]
    ClassTooSmall { digit: u8, have: usize, need: usize },
    #[error(transparent)]
    Idx(#[from] idx::IdxError),
}

/// Grayscale image with its digit, straight from the IDX files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub pixels: Vec<u8>,
    pub digit: u8,
}

/// Binarized example: pixel spins plus the replicated label spins that
/// together form the visible vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub pixel_spins: Vec<i8>,
    /// `10 * replicas` spins; slot `digit + 10 * r` is +1 for each replica r.
    pub label_spins: Vec<i8>,
    pub digit: u8,
}

/// Label encoding: +1 exactly at slots `digit + 10 * r`.
pub fn encode_label(digit: u8, replicas: usize) -> Vec<i8> {
    assert!(digit <= 9, "digit {digit} out of range");
    let mut spins = vec![-1i8; 10 * replicas];
    for r in 0..replicas {
        spins[digit as usize + 10 * r] = 1;
    }
    spins
}

/// Inverse of [`encode_label`]: the digit whose replicas are all +1.
pub fn decode_label(label_spins: &[i8]) -> Option<u8> {
    let replicas = label_spins.len() / 10;
    (0..10u8).find(|&d| (0..replicas).all(|r| label_spins[d as usize + 10 * r] == 1))
}

/// Thresholds intensities into spins: `+1` iff intensity > threshold.
pub fn binarize(raw: &RawExample, threshold: u8, replicas: usize) -> EncodedExample {
    EncodedExample {
        pixel_spins: raw
            .pixels
            .iter()
            .map(|&p| if p > threshold { 1 } else { -1 })
            .collect(),
        label_spins: encode_label(raw.digit, replicas),
        digit: raw.digit,
    }
}

pub fn binarize_all(raws: &[RawExample], threshold: u8, replicas: usize) -> Vec<EncodedExample> {
    raws.iter().map(|r| binarize(r, threshold, replicas)).collect()
}

impl EncodedExample {
    /// The full visible vector: pixels followed by label spins.
    pub fn visible_spins(&self) -> impl Iterator<Item = i8> + '_ {
        self.pixel_spins
            .iter()
            .copied()
            .chain(self.label_spins.iter().copied())
    }

    pub fn visible_len(&self) -> usize {
        self.pixel_spins.len() + self.label_spins.len()
    }
}

/// Per-visible-unit on-probability `P(spin = +1)` over the examples, clipped
/// into the open interval by half a count at either end.
pub fn on_probabilities(examples: &[EncodedExample]) -> Vec<f64> {
    assert!(!examples.is_empty(), "no examples");
    let m = examples.len() as f64;
    let visible = examples[0].visible_len();
    let mut counts = vec![0usize; visible];
    for ex in examples {
        assert_eq!(ex.visible_len(), visible, "inconsistent example shapes");
        for (c, s) in counts.iter_mut().zip(ex.visible_spins()) {
            *c += (s == 1) as usize;
        }
    }
    let clip = 1.0 / (2.0 * m);
    counts
        .iter()
        .map(|&c| (c as f64 / m).clamp(clip, 1.0 - clip))
        .collect()
}

/// Deterministic shuffled partition of `example_count` indices into
/// `batch_count` batches of `batch_size`, reshuffled per epoch.
pub fn batch_schedule(
    example_count: usize,
    batch_size: usize,
    batch_count: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>, DatasetError> {
    let need = batch_size * batch_count;
    if need > example_count {
        return Err(DatasetError::Insufficient {
            need,
            have: example_count,
        });
    }
    let mut indices: Vec<usize> = (0..example_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64));
    indices.shuffle(&mut rng);
    Ok(indices[..need]
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect())
}

/// Uniform subsample without replacement; with `balanced` set, draws exactly
/// `count / 10` examples of each digit.
pub fn subsample(
    examples: &[EncodedExample],
    count: usize,
    seed: u64,
    balanced: bool,
) -> Result<Vec<EncodedExample>, DatasetError> {
    if count > examples.len() {
        return Err(DatasetError::Insufficient {
            need: count,
            have: examples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !balanced {
        let mut indices: Vec<usize> = (0..examples.len()).collect();
        indices.shuffle(&mut rng);
        let mut picked = indices[..count].to_vec();
        picked.sort_unstable();
        return Ok(picked.into_iter().map(|i| examples[i].clone()).collect());
    }
    if count % 10 != 0 {
        return Err(DatasetError::UnbalancedCount { count });
    }
    let per_digit = count / 10;
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    for digit in 0..10u8 {
        let mut pool: Vec<usize> = (0..examples.len())
            .filter(|&i| examples[i].digit == digit)
            .collect();
        if pool.len() < per_digit {
            return Err(DatasetError::ClassTooSmall {
                digit,
                have: pool.len(),
                need: per_digit,
            });
        }
        pool.shuffle(&mut rng);
        picked.extend_from_slice(&pool[..per_digit]);
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| examples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pixels: Vec<u8>, digit: u8) -> RawExample {
        RawExample { pixels, digit }
    }

    #[test]
    fn thresholding_is_total_and_idempotent_in_spin_space() {
        let ex = binarize(&raw(vec![0, 127, 128, 255], 3), 127, 1);
        assert_eq!(ex.pixel_spins, vec![-1, -1, 1, 1]);
    }

    #[test]
    fn label_encoding_round_trips() {
        for digit in 0..10u8 {
            for replicas in [1, 5] {
                let spins = encode_label(digit, replicas);
                assert_eq!(spins.iter().filter(|&&s| s == 1).count(), replicas);
                assert_eq!(decode_label(&spins), Some(digit));
            }
        }
    }

    #[test]
    fn five_replica_positions_for_digit_three() {
        let spins = encode_label(3, 5);
        for (slot, &s) in spins.iter().enumerate() {
            let expect = if slot % 10 == 3 { 1 } else { -1 };
            assert_eq!(s, expect, "slot {slot}");
        }
        let on: Vec<usize> = spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(on, vec![3, 13, 23, 33, 43]);
    }

    #[test]
    fn on_probabilities_are_clipped_open() {
        let a = binarize(&raw(vec![255, 0], 0), 127, 1);
        let b = binarize(&raw(vec![255, 0], 0), 127, 1);
        let p = on_probabilities(&[a, b]);
        assert_eq!(p[0], 1.0 - 0.25);
        assert_eq!(p[1], 0.25);
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn batch_schedule_shapes_and_determinism() {
        let batches = batch_schedule(100, 10, 10, 7, 0).unwrap();
        assert_eq!(batches.len(), 10);
        assert!(batches.iter().all(|b| b.len() == 10));
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let again = batch_schedule(100, 10, 10, 7, 0).unwrap();
        assert_eq!(batches, again);
        let other_epoch = batch_schedule(100, 10, 10, 7, 1).unwrap();
        assert_ne!(batches, other_epoch);
    }

    #[test]
    fn batch_schedule_rejects_short_datasets() {
        assert!(matches!(
            batch_schedule(99, 10, 10, 0, 0),
            Err(DatasetError::Insufficient { .. })
        ));
    }

    #[test]
    fn subsample_distinct_and_deterministic() {
        let examples: Vec<EncodedExample> = (0..600)
            .map(|i| binarize(&raw(vec![(i % 256) as u8; 4], (i % 10) as u8), 127, 1))
            .collect();
        let s = subsample(&examples, 100, 3, false).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s, subsample(&examples, 100, 3, false).unwrap());
        let full = subsample(&examples, 600, 3, false).unwrap();
        assert_eq!(full, examples);
    }

    #[test]
    fn balanced_subsample_has_ten_per_digit() {
        let examples: Vec<EncodedExample> = (0..600)
            .map(|i| binarize(&raw(vec![0; 4], (i % 10) as u8), 127, 1))
            .collect();
        let s = subsample(&examples, 100, 9, true).unwrap();
        for digit in 0..10u8 {
            assert_eq!(s.iter().filter(|e| e.digit == digit).count(), 10);
        }
    }
}
