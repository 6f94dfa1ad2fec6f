//! Monotone coupling of several initial configurations.
//!
//! All copies share one event stream generated for the componentwise maximum
//! configuration. Particles at each site carry labels `0..n`, and a copy with
//! `m <= n` particles owns labels `0..m`. A coordinated event selects its
//! `K` participants among the maximum's labels as the `K` smallest
//! counter-based keys, so every copy sees a uniformly random subset and
//! smaller copies see a subset of the larger copies' participants.

use rand::Rng;
use rand_distr::Exp1;

use super::engine::Simulator;
use super::{Configuration, EventRecord, Trajectory};
use crate::error::{Error, Result};
use crate::measures::Weight;
use crate::rng::{replicate_rng, CoinStream};

fn componentwise_max(configs: &[Vec<u64>]) -> Vec<u64> {
    let mut out = configs[0].clone();
    for c in &configs[1..] {
        for (o, &x) in out.iter_mut().zip(c) {
            *o = (*o).max(x);
        }
    }
    out
}

/// Fails with `OrderingViolation` unless `configs[i] <= configs[i+1]` componentwise.
pub fn check_order(configs: &[Vec<u64>], event: u64, time: f64) -> Result<()> {
    for w in configs.windows(2) {
        if w[0].iter().zip(&w[1]).any(|(a, b)| a > b) {
            return Err(Error::OrderingViolation { event, time });
        }
    }
    Ok(())
}

/// Simulates one copy per initial configuration with a shared noise source.
/// The configurations must be ordered; the order is re-checked after every event.
pub fn simulate_coupled(sim: &Simulator, configs: &[Vec<u64>], t_max: f64, max_events: u64, seed: u64, stream: u64) -> Result<Vec<Trajectory>> {
    if configs.is_empty() {
        return Err(Error::PreconditionViolated("no configurations to couple".into()));
    }
    if configs.iter().any(|c| c.len() != sim.sites()) {
        return Err(Error::PreconditionViolated("configuration size does not match the system".into()));
    }
    if check_order(configs, 0, 0.0).is_err() {
        return Err(Error::PreconditionViolated("coupled configurations must be ordered".into()));
    }
    let mut rng = replicate_rng(seed, stream);
    let coins = CoinStream::new(seed, stream);
    let mut counts: Vec<Vec<u64>> = configs.to_vec();
    let mut events: Vec<Vec<EventRecord>> = vec![Vec::new(); configs.len()];
    let mut driver = sim.state(componentwise_max(&counts), 0.0)?;
    let mut rates: Vec<f64> = (0..sim.parts.len())
        .map(|i| sim.part_rate(i, &driver.counts))
        .collect::<Result<_>>()?;
    let mut time = 0.0;
    let mut event_id = 0u64;
    let mut absorbed = false;
    loop {
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            absorbed = true;
            break;
        }
        if event_id >= max_events {
            return Err(Error::EventBudgetExceeded {
                budget: max_events,
                time,
                partial: Box::new(Trajectory {
                    initial: Configuration::new(configs[0].clone()),
                    events: std::mem::take(&mut events[0]),
                    terminal: Configuration::new(counts[0].clone()),
                    terminal_time: time,
                    absorbed: false,
                    seed,
                    stream,
                }),
            });
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if time + wait > t_max {
            break;
        }
        time += wait;
        let idx = Simulator::choose(&rates, total, &mut rng);
        let (ch, part) = sim.part(idx);
        let s = ch.action.source();
        let n = driver.counts[s];
        let w = ch.weight;
        // participants per copy
        let mut ks: Vec<u64> = vec![0; counts.len()];
        let mut z = None;
        if part.is_independent() {
            let owner = match w {
                Weight::Pair => {
                    let l1 = rng.random_range(0..n);
                    let mut l2 = rng.random_range(0..n - 1);
                    if l2 >= l1 {
                        l2 += 1;
                    }
                    l1.max(l2)
                }
                Weight::Single => rng.random_range(0..n),
            };
            for (k, c) in ks.iter_mut().zip(&counts) {
                if owner < c[s] {
                    *k = w.get();
                }
            }
        } else {
            let (zz, kmax) = part.sample_coordinated(n, w, rates[idx], &mut rng)?;
            z = Some(zz);
            let mut heads: Option<Vec<u64>> = None;
            for (k, c) in ks.iter_mut().zip(&counts) {
                let m = c[s];
                *k = if m == n {
                    kmax
                } else if kmax == n {
                    m
                } else {
                    let labels = heads.get_or_insert_with(|| {
                        let keys = coins.keys(event_id, n as usize);
                        let mut order: Vec<(u64, u64)> = keys.into_iter().zip(0..n).collect();
                        let kk = kmax as usize;
                        order.select_nth_unstable(kk - 1);
                        order[..kk].iter().map(|p| p.1).collect()
                    });
                    labels.iter().filter(|&&l| l < m).count() as u64
                };
            }
        }
        for ((k, c), ev) in ks.iter().zip(counts.iter_mut()).zip(events.iter_mut()) {
            if *k < w.get() {
                continue;
            }
            if !ch.action.apply(c, *k) {
                return Err(Error::OrderingViolation { event: event_id, time });
            }
            let mut after = vec![(s, c[s])];
            if let Some(t) = ch.action.target() {
                if t != s {
                    after.push((t, c[t]));
                }
            }
            ev.push(EventRecord {
                time,
                action: ch.action,
                independent: part.is_independent(),
                z,
                k: *k,
                after,
            });
        }
        check_order(&counts, event_id, time)?;
        driver.counts = componentwise_max(&counts);
        let mut sites = vec![s];
        if let Some(t) = ch.action.target() {
            sites.push(t);
        }
        sim.refresh(&mut rates, &driver.counts, &sites)?;
        event_id += 1;
    }
    Ok(configs
        .iter()
        .zip(counts)
        .zip(events)
        .map(|((init, last), ev)| Trajectory {
            initial: Configuration::new(init.clone()),
            events: ev,
            terminal: Configuration::new(last),
            terminal_time: t_max,
            absorbed,
            seed,
            stream,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{InitialCount, Measure, SystemSpec};

    fn corpus_system() -> SystemSpec {
        let mut sys = SystemSpec::new(["a", "b", "c"]).unwrap();
        sys.set_coalescence(0, Measure::beta_coalescent(1.4).unwrap().with_atom_zero(0.2).unwrap())
            .unwrap();
        sys.set_coalescence(1, Measure::uniform()).unwrap();
        sys.set_death(2, Measure::power_law(0.5, 0.5).unwrap()).unwrap();
        sys.set_migration(0, 1, Measure::dirac(0.4, 1.0).unwrap()).unwrap();
        sys.set_migration(1, 2, Measure::kingman(0.3).unwrap()).unwrap();
        sys.set_reproduction(2, 0, Measure::beta(1.0, 3.0, 0.5).unwrap()).unwrap();
        sys.set_initial(0, InitialCount::Finite(30)).unwrap();
        sys
    }

    #[test]
    fn identical_starts_give_identical_paths() {
        let sim = Simulator::new(&corpus_system()).unwrap();
        let c = vec![30, 5, 2];
        let out = simulate_coupled(&sim, &[c.clone(), c], 1.0, 100_000, 4, 0).unwrap();
        assert_eq!(out[0], out[1]);
        assert!(!out[0].events.is_empty());
    }

    #[test]
    fn ordering_holds_on_small_corpus() {
        let sim = Simulator::new(&corpus_system()).unwrap();
        for rep in 0..50 {
            let out = simulate_coupled(&sim, &[vec![10, 0, 1], vec![30, 4, 1]], 1.0, 100_000, 8, rep).unwrap();
            assert_eq!(out.len(), 2);
        }
    }

    #[test]
    fn smallest_kingman_case() {
        let mut sys = SystemSpec::new(["v", "w"]).unwrap();
        sys.set_coalescence(0, Measure::kingman(1.0).unwrap()).unwrap();
        let sim = Simulator::new(&sys).unwrap();
        for rep in 0..100 {
            let out = simulate_coupled(&sim, &[vec![1, 0], vec![2, 0]], 5.0, 1000, 1, rep).unwrap();
            assert!(out[0].events.is_empty());
        }
    }

    #[test]
    fn unordered_input_is_rejected() {
        let sim = Simulator::new(&corpus_system()).unwrap();
        assert!(simulate_coupled(&sim, &[vec![2, 0, 0], vec![1, 0, 0]], 1.0, 10, 1, 0).is_err());
    }
}
