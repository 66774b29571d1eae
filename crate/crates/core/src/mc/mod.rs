//! Event-driven simulation of symmetric chains and excursion estimators.
//!
//! Randomness is organised in counter-addressed streams: every path or
//! batch draws from its own ChaCha8 stream, so results do not depend on how
//! work is spread over threads.

mod estimators;
mod excursion;
mod sim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::chain::ChainError;
use crate::tolerances;

pub use estimators::{
    estimate_feller_mc, estimate_supplementary_mc, killing_limit_curve, levy_jump_check,
    CurvePoint, FellerMode, FellerRun, JumpTarget, SupplementaryReport,
};
pub use excursion::{
    empirical_generator, excursion_decompose, trace_path, EmpiricalGenerator, ExcursionRecord,
    PostState, TracedPath,
};
pub use sim::{simulate_path, PathRecord, Simulator, Start};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("only {found} events observed, at least {required} needed")]
    InsufficientEvents { found: u64, required: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Address of one random stream: a seed and a stream counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Sub-stream `k`: the low 32 bits of the counter address the child,
    /// the high bits keep the parent.
    pub fn child(&self, k: u64) -> RngStream {
        debug_assert!(k < 1 << 32);
        RngStream {
            seed: self.seed,
            stream_id: (self.stream_id << 32) | k,
        }
    }
}

/// Streams `0..n_workers` under `seed`. Stream `k` depends only on
/// `(seed, k)`, so a prefix of a longer list equals a shorter list.
pub fn derive_streams(seed: u64, n_workers: usize) -> Vec<RngStream> {
    assert!(n_workers >= 1, "need at least one worker");
    (0..n_workers as u64).map(|k| RngStream::new(seed, k)).collect()
}

/// Sums for one batch; merging adds fields, so it is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tally {
    pub samples: u64,
    pub events: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Tally {
    pub fn add(&mut self, value: f64, events: u64) {
        self.samples += 1;
        self.events += events;
        self.sum += value;
        self.sum_sq += value * value;
    }

    pub fn merge(&self, other: &Tally) -> Tally {
        Tally {
            samples: self.samples + other.samples,
            events: self.events + other.events,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn mean(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.sum / self.samples as f64
        }
    }
}

/// Per-batch tallies for batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMeans {
    pub batches: Vec<Tally>,
}

impl BatchMeans {
    pub fn new(n: usize) -> Self {
        Self {
            batches: vec![Tally::default(); n],
        }
    }

    pub fn merge(&self, other: &BatchMeans) -> BatchMeans {
        assert_eq!(self.batches.len(), other.batches.len());
        BatchMeans {
            batches: self
                .batches
                .iter()
                .zip(&other.batches)
                .map(|(a, b)| a.merge(b))
                .collect(),
        }
    }

    pub fn total(&self) -> Tally {
        self.batches
            .iter()
            .fold(Tally::default(), |acc, b| acc.merge(b))
    }

    /// Grand mean and the standard error from the spread of batch means.
    pub fn mean_and_error(&self) -> (f64, f64) {
        let total = self.total();
        let mean = total.mean();
        let used: Vec<f64> = self
            .batches
            .iter()
            .filter(|b| b.samples > 0)
            .map(Tally::mean)
            .collect();
        let k = used.len();
        if k < 2 {
            return (mean, f64::NAN);
        }
        let bm = used.iter().sum::<f64>() / k as f64;
        let var = used.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (k - 1) as f64;
        (mean, (var / k as f64).sqrt())
    }
}

/// Result of one estimator, with the z-score against an exact value when
/// one is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_events: u64,
    pub exact: Option<f64>,
    pub z_score: Option<f64>,
}

impl EstimatorReport {
    pub fn new(estimate: f64, std_error: f64, n_events: u64) -> Self {
        Self {
            estimate,
            std_error,
            n_events,
            exact: None,
            z_score: None,
        }
    }

    pub fn with_exact(mut self, exact: f64) -> Self {
        self.exact = Some(exact);
        self.z_score = Some(if self.std_error > 0.0 {
            (self.estimate - exact) / self.std_error
        } else if self.estimate == exact {
            0.0
        } else {
            f64::INFINITY
        });
        self
    }

    /// `|z| < bound`; reports without a reference pass vacuously.
    pub fn within(&self, bound: f64) -> bool {
        self.z_score.is_none_or(|z| z.abs() < bound)
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.exact.map(|e| (self.estimate - e).abs() / e.abs())
    }
}

pub(crate) fn require_events(events: u64) -> Result<(), McError> {
    if events < tolerances::MIN_EVENTS {
        return Err(McError::InsufficientEvents {
            found: events,
            required: tolerances::MIN_EVENTS,
        });
    }
    Ok(())
}

/// Splits `n` work items into `batches` contiguous groups of near-equal
/// size; returns `(batch, first, end)` triples.
pub(crate) fn batch_ranges(n: u64, batches: usize) -> Vec<(usize, u64, u64)> {
    let b = batches.max(1) as u64;
    (0..b)
        .map(|k| (k as usize, k * n / b, (k + 1) * n / b))
        .filter(|(_, lo, hi)| hi > lo)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_prefix_stable() {
        let a = derive_streams(42, 4);
        let b = derive_streams(42, 1);
        assert_eq!(a[0], b[0]);
        assert_eq!(a, derive_streams(42, 4));
        let ids: std::collections::HashSet<_> = a.iter().map(|s| s.stream_id).collect();
        assert_eq!(ids.len(), 4);
        let x: Vec<u64> = (0..4).map(|_| a[1].rng().random()).collect::<Vec<_>>();
        let mut r = a[1].rng();
        let y: Vec<u64> = (0..4).map(|_| r.random()).collect();
        assert_eq!(x[0], y[0]);
        assert_ne!(a[0].rng().random::<u64>(), a[1].rng().random::<u64>());
    }

    #[test]
    fn batch_means_merge_is_associative() {
        let mut a = BatchMeans::new(3);
        let mut b = BatchMeans::new(3);
        let mut c = BatchMeans::new(3);
        for i in 0..30 {
            let t = match i % 3 {
                0 => &mut a,
                1 => &mut b,
                _ => &mut c,
            };
            t.batches[i % 3].add(i as f64, 1);
        }
        assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
        assert_eq!(a.merge(&b).total().samples, 20);
    }

    #[test]
    fn report_z_scores() {
        let r = EstimatorReport::new(1.1, 0.05, 500).with_exact(1.0);
        assert!((r.z_score.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.within(4.0));
        let zero = EstimatorReport::new(0.0, 0.0, 0).with_exact(0.0);
        assert_eq!(zero.z_score, Some(0.0));
    }

    #[test]
    fn ranges_cover_everything() {
        let r = batch_ranges(100, 32);
        assert_eq!(r.len(), 32);
        assert_eq!(r[0].1, 0);
        assert_eq!(r.last().unwrap().2, 100);
        assert_eq!(batch_ranges(5, 32).len(), 5);
    }
}
