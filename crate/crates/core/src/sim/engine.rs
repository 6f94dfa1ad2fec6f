use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::Exp1;

use super::sampler::Part;
use super::{Action, Configuration, EventRecord, Trajectory};
use crate::error::{Error, Result};
use crate::measures::{ActionKind, Weight};
use crate::rng::{replicate_rng, SimRng};
use crate::system::SystemSpec;

pub(crate) struct Channel {
    pub action: Action,
    pub weight: Weight,
    pub parts: Vec<Part>,
}

/// Precomputed channels, rate caches and samplers for one system. Shared
/// read-only between replicates.
pub struct Simulator {
    sites: usize,
    pub(crate) channels: Vec<Channel>,
    /// `(channel, part)` for every flattened part.
    pub(crate) parts: Vec<(usize, usize)>,
    /// Flattened part indices whose rate depends on each site.
    by_site: Vec<Vec<usize>>,
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("sites", &self.sites)
            .field("parts", &self.parts.len())
            .finish()
    }
}

/// Run controls.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub t_max: f64,
    pub n_trunc: u64,
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            n_trunc: 2000,
            max_events: 10_000_000,
        }
    }
}

/// Mutable state of one run: counts, per-part rates and time.
#[derive(Debug, Clone)]
pub struct StepState {
    pub counts: Vec<u64>,
    pub time: f64,
    rates: Vec<f64>,
}

/// Summary of a run driven by [`Simulator::run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub events: u64,
    pub end_time: f64,
    pub absorbed: bool,
    /// Stopped early by the observer.
    pub stopped: bool,
    pub budget_exhausted: bool,
}

impl Simulator {
    pub fn new(sys: &SystemSpec) -> Result<Self> {
        let n = sys.len();
        let mut channels = Vec::new();
        let mut push = |action: Action, kind: ActionKind, m: &crate::system::Measure| -> Result<()> {
            if m.is_zero() {
                return Ok(());
            }
            let parts = Part::split(m, kind)?;
            if !parts.is_empty() {
                channels.push(Channel {
                    action,
                    weight: kind.weight(),
                    parts,
                });
            }
            Ok(())
        };
        for v in 0..n {
            push(Action::Coal { site: v }, ActionKind::Coalescence, sys.coalescence(v))?;
            push(Action::Death { site: v }, ActionKind::Death, sys.death(v))?;
        }
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    push(Action::Migr { from: u, to: v }, ActionKind::Migration, sys.migration(u, v))?;
                }
                push(Action::Repr { from: u, to: v }, ActionKind::Reproduction, sys.reproduction(u, v))?;
            }
        }
        let mut parts = Vec::new();
        let mut by_site = vec![Vec::new(); n];
        for (c, ch) in channels.iter().enumerate() {
            for p in 0..ch.parts.len() {
                by_site[ch.action.source()].push(parts.len());
                parts.push((c, p));
            }
        }
        Ok(Self {
            sites: n,
            channels,
            parts,
            by_site,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub(crate) fn part(&self, idx: usize) -> (&Channel, &Part) {
        let (c, p) = self.parts[idx];
        let ch = &self.channels[c];
        (ch, &ch.parts[p])
    }

    pub(crate) fn part_rate(&self, idx: usize, counts: &[u64]) -> Result<f64> {
        let (ch, part) = self.part(idx);
        part.rate(counts[ch.action.source()], ch.weight)
    }

    pub fn state(&self, counts: Vec<u64>, time: f64) -> Result<StepState> {
        if counts.len() != self.sites {
            return Err(Error::PreconditionViolated(format!(
                "configuration has {} sites, system has {}",
                counts.len(),
                self.sites
            )));
        }
        let rates = (0..self.parts.len())
            .map(|i| self.part_rate(i, &counts))
            .collect::<Result<Vec<_>>>()?;
        Ok(StepState { counts, time, rates })
    }

    /// Total event rate of a configuration.
    pub fn total_rate(&self, counts: &[u64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.parts.len() {
            total += self.part_rate(i, counts)?;
        }
        Ok(total)
    }

    pub(crate) fn refresh(&self, rates: &mut [f64], counts: &[u64], sites: &[usize]) -> Result<()> {
        for &s in sites {
            for &i in &self.by_site[s] {
                rates[i] = self.part_rate(i, counts)?;
            }
        }
        Ok(())
    }

    /// Picks a part proportionally to `rates`.
    pub(crate) fn choose<G: Rng + ?Sized>(rates: &[f64], total: f64, rng: &mut G) -> usize {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &r) in rates.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                last = i;
                if acc > target {
                    return i;
                }
            }
        }
        last
    }

    /// Advances `state` by one event.
    pub fn step<G: Rng + ?Sized>(&self, state: &mut StepState, rng: &mut G) -> Result<EventRecord> {
        let total: f64 = state.rates.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Absorbed);
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        let idx = Self::choose(&state.rates, total, rng);
        let (ch, part) = self.part(idx);
        let source = ch.action.source();
        let n = state.counts[source];
        let (z, k) = if part.is_independent() {
            (None, ch.weight.get())
        } else {
            let (z, k) = part.sample_coordinated(n, ch.weight, state.rates[idx], rng)?;
            (Some(z), k)
        };
        if !ch.action.apply(&mut state.counts, k) {
            return Err(Error::SamplerFailure(format!("sampled K = {k} exceeds count {n}")));
        }
        state.time += wait;
        let mut after = vec![(source, state.counts[source])];
        if let Some(t) = ch.action.target() {
            if t != source {
                after.push((t, state.counts[t]));
            }
        }
        let sites: Vec<usize> = after.iter().map(|a| a.0).collect();
        self.refresh(&mut state.rates, &state.counts, &sites)?;
        Ok(EventRecord {
            time: state.time,
            action: ch.action,
            independent: part.is_independent(),
            z,
            k,
            after,
        })
    }

    /// Runs from `initial` until `t_max`, absorption, the event budget or the
    /// observer breaking. The observer sees each event and the counts after it.
    pub fn run<G, F>(&self, initial: Vec<u64>, t_max: f64, max_events: u64, rng: &mut G, mut observer: F) -> Result<RunOutcome>
    where
        G: Rng + ?Sized,
        F: FnMut(&EventRecord, &[u64]) -> ControlFlow<()>,
    {
        let mut state = self.state(initial, 0.0)?;
        let mut events = 0u64;
        loop {
            if events >= max_events {
                return Ok(RunOutcome {
                    events,
                    end_time: state.time,
                    absorbed: false,
                    stopped: false,
                    budget_exhausted: true,
                });
            }
            let record = match self.step(&mut state, rng) {
                Ok(r) => r,
                Err(Error::Absorbed) => {
                    return Ok(RunOutcome {
                        events,
                        end_time: t_max,
                        absorbed: true,
                        stopped: false,
                        budget_exhausted: false,
                    })
                }
                Err(e) => return Err(e),
            };
            if record.time > t_max {
                return Ok(RunOutcome {
                    events,
                    end_time: t_max,
                    absorbed: false,
                    stopped: false,
                    budget_exhausted: false,
                });
            }
            events += 1;
            if observer(&record, &state.counts).is_break() {
                return Ok(RunOutcome {
                    events,
                    end_time: record.time,
                    absorbed: false,
                    stopped: true,
                    budget_exhausted: false,
                });
            }
        }
    }

    /// Full trajectory of one replicate.
    pub fn simulate(&self, initial: Vec<u64>, opts: &SimOptions, seed: u64, stream: u64) -> Result<Trajectory> {
        let mut rng = replicate_rng(seed, stream);
        self.simulate_with_rng(initial, opts, seed, stream, &mut rng)
    }

    pub fn simulate_with_rng(&self, initial: Vec<u64>, opts: &SimOptions, seed: u64, stream: u64, rng: &mut SimRng) -> Result<Trajectory> {
        if !(opts.t_max > 0.0) {
            return Err(Error::PreconditionViolated(format!("t_max must be positive, got {}", opts.t_max)));
        }
        let mut events = Vec::new();
        let mut last = initial.clone();
        let outcome = self.run(initial.clone(), opts.t_max, opts.max_events, rng, |e, counts| {
            events.push(e.clone());
            last.clear();
            last.extend_from_slice(counts);
            ControlFlow::Continue(())
        })?;
        let traj = Trajectory {
            initial: Configuration::new(initial),
            events,
            terminal: Configuration::new(last),
            terminal_time: outcome.end_time,
            absorbed: outcome.absorbed,
            seed,
            stream,
        };
        if outcome.budget_exhausted {
            return Err(Error::EventBudgetExceeded {
                budget: opts.max_events,
                time: outcome.end_time,
                partial: Box::new(traj),
            });
        }
        Ok(traj)
    }
}

/// Single event from `counts` for `sys`.
pub fn step<G: Rng + ?Sized>(sys: &SystemSpec, counts: &[u64], rng: &mut G) -> Result<(Vec<u64>, EventRecord, f64)> {
    let sim = Simulator::new(sys)?;
    let mut state = sim.state(counts.to_vec(), 0.0)?;
    let record = sim.step(&mut state, rng)?;
    let wait = record.time;
    Ok((state.counts, record, wait))
}

/// One trajectory of `sys` with `∞` initial entries replaced by `opts.n_trunc`.
pub fn simulate(sys: &SystemSpec, opts: &SimOptions, seed: u64, stream: u64) -> Result<Trajectory> {
    if opts.n_trunc < 1 {
        return Err(Error::PreconditionViolated("n_trunc must be at least 1".into()));
    }
    Simulator::new(sys)?.simulate(sys.initial_counts(opts.n_trunc), opts, seed, stream)
}
