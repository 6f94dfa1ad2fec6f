//! Exact simulation of the coordinated particle system.
//!
//! Each action class is split into its atom-at-zero part (pairwise or
//! per-particle clocks) and its coordinated part. Coordinated events are
//! sampled from the measure tilted by the probability that at least `w` of
//! the `n` present particles participate, which keeps the event rate finite
//! even when `∫ z^-w μ(dz)` is not.

mod coupled;
mod engine;
mod entries;
mod sampler;

pub use coupled::{check_order, simulate_coupled};
pub use engine::{simulate, step, RunOutcome, SimOptions, Simulator, StepState};
pub use entries::{simulate_with_entries, EntrySchedule};
pub use sampler::{sample_binomial_at_least, TabulatedSampler};

use serde::Serialize;

/// Which action an event performs, with its sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Action {
    Coal { site: usize },
    Death { site: usize },
    Migr { from: usize, to: usize },
    Repr { from: usize, to: usize },
}

impl Action {
    /// Site whose particle count drives the rate.
    pub fn source(self) -> usize {
        match self {
            Action::Coal { site } | Action::Death { site } => site,
            Action::Migr { from, .. } | Action::Repr { from, .. } => from,
        }
    }

    pub fn target(self) -> Option<usize> {
        match self {
            Action::Migr { to, .. } | Action::Repr { to, .. } => Some(to),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Coal { .. } => "coal",
            Action::Death { .. } => "death",
            Action::Migr { .. } => "migr",
            Action::Repr { .. } => "repr",
        }
    }

    /// Applies an event with `k` participants. Returns false if the source
    /// site does not hold enough particles.
    pub fn apply(self, counts: &mut [u64], k: u64) -> bool {
        match self {
            Action::Coal { site } => {
                if k < 2 || counts[site] < k {
                    return false;
                }
                counts[site] -= k - 1;
            }
            Action::Death { site } => {
                if counts[site] < k {
                    return false;
                }
                counts[site] -= k;
            }
            Action::Migr { from, to } => {
                if counts[from] < k {
                    return false;
                }
                counts[from] -= k;
                counts[to] += k;
            }
            Action::Repr { from, to } => {
                if counts[from] < k {
                    return false;
                }
                counts[to] += k;
            }
        }
        true
    }
}

/// Particle counts per site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Configuration {
    pub counts: Vec<u64>,
}

impl Configuration {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.counts.len() == other.counts.len() && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }
}

/// One jump of the process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub action: Action,
    /// True for events driven by an atom at zero.
    pub independent: bool,
    /// Proportion for coordinated events.
    pub z: Option<f64>,
    pub k: u64,
    /// Counts of the affected sites after the event.
    pub after: Vec<(usize, u64)>,
}

/// A simulated path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<EventRecord>,
    pub terminal: Configuration,
    pub terminal_time: f64,
    pub absorbed: bool,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    /// Counts at time `t` (right-continuous).
    pub fn counts_at(&self, t: f64) -> Vec<u64> {
        let mut counts = self.initial.counts.clone();
        for e in &self.events {
            if e.time > t {
                break;
            }
            for &(site, c) in &e.after {
                counts[site] = c;
            }
        }
        counts
    }
}
