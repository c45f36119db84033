//! Counter-based noise streams: every `(seed, trajectory, step)` addresses a fixed
//! block of the ChaCha20 keystream, so draws do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// 32-bit keystream words reserved per step.
const WORDS_PER_STEP: u128 = 256;

/// Noise for one step of a weak scheme with `m` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    /// Standard normals, one per channel (scaled by `√dt` by the caller).
    pub normals: Vec<f64>,
    /// Two-point signs `±1` for the strictly lower triangle `(j1 > j2)`, row-major.
    pub signs: Vec<f64>,
}

impl StepNoise {
    pub fn zeros(channels: usize) -> Self {
        Self {
            normals: vec![0.0; channels],
            signs: vec![0.0; channels * channels.saturating_sub(1) / 2],
        }
    }

    /// Sign for the pair `j1 > j2`.
    pub fn sign(&self, j1: usize, j2: usize) -> f64 {
        debug_assert!(j1 > j2);
        self.signs[j1 * (j1 - 1) / 2 + j2]
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha20Rng,
    channels: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64, channels: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Self { rng, channels }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Deterministic noise for `step`, independent of earlier calls.
    pub fn at_step(&mut self, step: u64, out: &mut StepNoise) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        for x in out.normals.iter_mut() {
            *x = self.rng.sample(StandardNormal);
        }
        for s in out.signs.iter_mut() {
            *s = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }

    pub fn step_noise(&mut self, step: u64) -> StepNoise {
        let mut out = StepNoise::zeros(self.channels);
        self.at_step(step, &mut out);
        out
    }
}
