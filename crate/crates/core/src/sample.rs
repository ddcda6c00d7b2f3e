//! Deterministic seeded sampling.
//!
//! Every operation that samples derives its stream from the job seed and a
//! stable task label, so results do not depend on call order and identical
//! seeds reproduce identical runs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// No usable sample point was found within the attempt budget.
#[derive(Clone, Debug, thiserror::Error, PartialEq)]
#[error("sampling budget exhausted: {context} ({attempts} attempts)")]
pub struct SamplingError {
    pub context: String,
    pub attempts: usize,
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seeded random stream for one task.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for a named task: stable under reordering of unrelated tasks.
    pub fn for_task(seed: u64, label: &str) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed ^ fnv1a(label)),
        }
    }

    /// Uniform in the open interval (0, 1).
    pub fn unit(&mut self) -> f64 {
        loop {
            let v: f64 = self.rng.gen();
            if v > 0.0 && v < 1.0 {
                return v;
            }
        }
    }

    /// Uniform in (lo, hi).
    pub fn in_interval(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }

    /// Point in the open interval described by optional finite endpoints.
    /// Unbounded sides use a rational transform of the unit interval.
    pub fn in_bounds(&mut self, lo: Option<f64>, hi: Option<f64>) -> f64 {
        let u = self.unit();
        match (lo, hi) {
            (Some(a), Some(b)) => a + u * (b - a),
            (Some(a), None) => a + u / (1.0 - u),
            (None, Some(b)) => b - u / (1.0 - u),
            (None, None) => (u - 0.5) / (u * (1.0 - u)),
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Unit direction vector in dimension `n`.
    pub fn direction(&mut self, n: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| self.in_interval(-1.0, 1.0)).collect();
            let norm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-3 {
                return v.iter().map(|c| c / norm).collect();
            }
        }
    }
}
