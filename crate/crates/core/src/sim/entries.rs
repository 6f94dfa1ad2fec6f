//! Block counting process with particles entering at prescribed times.

use rand::Rng;
use rand_distr::Exp1;

use super::engine::Simulator;
use crate::error::{Error, Result};
use crate::system::{Measure, SystemSpec};

/// Entry times, each adding one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct EntrySchedule {
    times: Vec<f64>,
}

impl EntrySchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::PreconditionViolated("entry times must be finite and >= 0".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::PreconditionViolated("entry times must be nondecreasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Runs a single-site coalescent with death from zero particles, adding one
/// particle at each scheduled time, and returns the count at `t0`.
pub fn simulate_with_entries<G: Rng + ?Sized>(lambda: &Measure, death: &Measure, schedule: &EntrySchedule, t0: f64, rng: &mut G) -> Result<u64> {
    if schedule.times().iter().any(|&s| s > t0) {
        return Err(Error::PreconditionViolated("entry times must not exceed t0".into()));
    }
    let mut sys = SystemSpec::new(["v"])?;
    sys.set_coalescence(0, lambda.clone())?;
    sys.set_death(0, death.clone())?;
    let sim = Simulator::new(&sys)?;
    run_entries(&sim, schedule, t0, rng)
}

pub(crate) fn run_entries<G: Rng + ?Sized>(sim: &Simulator, schedule: &EntrySchedule, t0: f64, rng: &mut G) -> Result<u64> {
    let mut state = sim.state(vec![0], 0.0)?;
    let mut next = 0usize;
    let entries = schedule.times();
    loop {
        let total = sim.total_rate(&state.counts)?;
        let horizon = entries.get(next).copied().unwrap_or(t0);
        let wait = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        if state.time + wait >= horizon {
            // memorylessness lets the clock restart at the entry
            state.time = horizon;
            if next < entries.len() {
                state.counts[0] += 1;
                next += 1;
                state = sim.state(state.counts, state.time)?;
                continue;
            }
            return Ok(state.counts[0]);
        }
        let before = state.time;
        sim.step(&mut state, rng)?;
        // step draws its own waiting time; replace it by the one drawn above
        state.time = before + wait;
    }
}
