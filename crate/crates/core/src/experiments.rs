//! Monte Carlo estimators for hitting probabilities, migration counts, block
//! speed, mean totals and one-step loss laws, with their exact companions.

use std::ops::ControlFlow;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::criteria::{loglog_fit, Fit};
use crate::error::{Error, Result};
use crate::rates::{loss_distribution, LossDistribution};
use crate::rng::run_replicates;
use crate::sim::{Action, Simulator};
use crate::system::{Measure, SystemSpec};

const Z95: f64 = 1.959_963_984_540_054;
const NO_BUDGET: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// Wilson 95% interval.
    Proportion,
    /// Mean ± 2 standard errors.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub reps: u64,
    pub seed: u64,
    pub kind: EstimateKind,
}

impl Estimate {
    pub fn proportion(successes: u64, reps: u64, seed: u64) -> Result<Self> {
        if reps == 0 || successes > reps {
            return Err(Error::PreconditionViolated(format!("{successes} successes out of {reps} replicates")));
        }
        let n = reps as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Ok(Self {
            value: p,
            lower: (center - half).max(0.0),
            upper: (center + half).min(1.0),
            reps,
            seed,
            kind: EstimateKind::Proportion,
        })
    }

    pub fn mean(samples: &[f64], seed: u64) -> Result<Self> {
        let (m, se) = mean_se(samples)?;
        Ok(Self {
            value: m,
            lower: m - 2.0 * se,
            upper: m + 2.0 * se,
            reps: samples.len() as u64,
            seed,
            kind: EstimateKind::Mean,
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Standard error implied by the interval.
    pub fn std_error(&self) -> f64 {
        match self.kind {
            EstimateKind::Mean => (self.upper - self.lower) / 4.0,
            EstimateKind::Proportion => (self.value * (1.0 - self.value) / self.reps as f64).sqrt(),
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::PreconditionViolated("no samples".into()));
    }
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((m, 0.0));
    }
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((m, (var / n).sqrt()))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn single_site(lambda: &Measure, death: &Measure) -> Result<SystemSpec> {
    let mut sys = SystemSpec::new(["v"])?;
    sys.set_coalescence(0, lambda.clone())?;
    sys.set_death(0, death.clone())?;
    Ok(sys)
}

/// What a hitting replicate must visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HitTarget {
    Level { k: u64 },
    /// Any level in `k..=k+len`.
    Interval { k: u64, len: u64 },
}

impl HitTarget {
    fn range(self) -> (u64, u64) {
        match self {
            HitTarget::Level { k } => (k, k),
            HitTarget::Interval { k, len } => (k, k + len),
        }
    }
}

/// Levels in `lo..=hi` visited by the embedded jump chain started at `n_start`.
pub fn visited_levels<G: rand::Rng + ?Sized>(sim: &Simulator, n_start: u64, lo: u64, hi: u64, rng: &mut G) -> Result<(Vec<bool>, u64)> {
    let mut seen = vec![false; (hi - lo + 1) as usize];
    if (lo..=hi).contains(&n_start) {
        seen[(n_start - lo) as usize] = true;
    }
    let out = sim.run(vec![n_start], f64::INFINITY, NO_BUDGET, rng, |_, counts| {
        let c = counts[0];
        if (lo..=hi).contains(&c) {
            seen[(c - lo) as usize] = true;
        }
        if c < lo {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok((seen, out.events))
}

/// Fraction of replicates whose block count visits the target.
pub fn estimate_hit_prob(lambda: &Measure, death: &Measure, n_start: u64, target: HitTarget, reps: u64, seed: u64) -> Result<Estimate> {
    let (lo, hi) = target.range();
    if n_start <= hi {
        return Err(Error::PreconditionViolated(format!("hitting needs n_start > {hi}, got {n_start}")));
    }
    let sim = Simulator::new(&single_site(lambda, death)?)?;
    let hits = run_replicates(seed, reps, |_, rng| {
        let (seen, _) = visited_levels(&sim, n_start, lo, hi, rng)?;
        Ok(seen.iter().any(|&s| s))
    })?;
    Estimate::proportion(hits.iter().filter(|&&h| h).count() as u64, reps, seed)
}

/// Per-level hitting estimates over `k_lo..=k_hi` and their average.
#[derive(Debug, Clone, Serialize)]
pub struct LevelHits {
    pub levels: Vec<(u64, Estimate)>,
    /// Per-replicate fraction of levels visited, averaged; mean ± 2 SE.
    pub average: Estimate,
    pub events: u64,
}

pub fn estimate_level_hits(lambda: &Measure, death: &Measure, n_start: u64, k_lo: u64, k_hi: u64, reps: u64, seed: u64) -> Result<LevelHits> {
    if k_lo > k_hi || n_start <= k_hi || k_lo == 0 {
        return Err(Error::PreconditionViolated(format!("need 0 < {k_lo} <= {k_hi} < n_start = {n_start}")));
    }
    let sim = Simulator::new(&single_site(lambda, death)?)?;
    let runs = run_replicates(seed, reps, |_, rng| visited_levels(&sim, n_start, k_lo, k_hi, rng))?;
    let width = (k_hi - k_lo + 1) as usize;
    let mut counts = vec![0u64; width];
    let mut fractions = Vec::with_capacity(runs.len());
    let mut events = 0;
    for (seen, ev) in &runs {
        events += ev;
        let mut hit = 0;
        for (c, &s) in counts.iter_mut().zip(seen) {
            if s {
                *c += 1;
                hit += 1;
            }
        }
        fractions.push(hit as f64 / width as f64);
    }
    let levels = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Estimate::proportion(c, reps, seed).map(|e| (k_lo + i as u64, e)))
        .collect::<Result<_>>()?;
    Ok(LevelHits {
        levels,
        average: Estimate::mean(&fractions, seed)?,
        events,
    })
}

/// Exact probability that the jump chain from `n_start` visits each level
/// `k_min..=n_start`, by propagating visit probabilities downwards through
/// the one-step loss laws. Entry `i` is level `k_min + i`.
pub fn exact_visit_probs(lambda: &Measure, death: &Measure, n_start: u64, k_min: u64) -> Result<Vec<f64>> {
    if k_min > n_start {
        return Err(Error::PreconditionViolated("k_min exceeds n_start".into()));
    }
    let len = (n_start - k_min + 1) as usize;
    let mut visit = vec![0.0; len];
    visit[len - 1] = 1.0;
    for m in ((k_min + 1).max(2)..=n_start).rev() {
        let u = visit[(m - k_min) as usize];
        if u == 0.0 {
            continue;
        }
        let dist = loss_distribution(lambda, death, m)?;
        for j in 1..=(m - k_min) {
            visit[(m - j - k_min) as usize] += u * dist.get(j);
        }
    }
    Ok(visit)
}

/// Two-site system `u -> v` with coalescence and death at `u` and migration only.
pub fn migration_system(lambda: &Measure, death: &Measure, migration: &Measure) -> Result<SystemSpec> {
    let mut sys = SystemSpec::new(["u", "v"])?;
    sys.set_coalescence(0, lambda.clone())?;
    sys.set_death(0, death.clone())?;
    sys.set_migration(0, 1, migration.clone())?;
    Ok(sys)
}

/// Migration event counts for one starting size. Events rather than moved
/// particles: the particle total is dominated by rare large-`z` events whose
/// mean does not see the strong/weak dichotomy.
#[derive(Debug, Clone, Serialize)]
pub struct MigrationSample {
    pub n_start: u64,
    /// Migration events `u -> v` by time `t`, per replicate.
    pub counts: Vec<u64>,
    pub median: f64,
    pub mean: Estimate,
    /// `(2^j, mean events while X_u was in [2^j, 2^{j+1}))`.
    pub bands: Vec<(u64, f64)>,
    pub events: u64,
}

pub fn estimate_migration_count(sys: &SystemSpec, n_start: u64, t: f64, reps: u64, seed: u64) -> Result<MigrationSample> {
    check_migration_setup(sys)?;
    let sim = Simulator::new(sys)?;
    let n_bands = 64 - n_start.leading_zeros() as usize;
    let runs = run_replicates(seed, reps, |_, rng| {
        let mut total = 0u64;
        let mut bands = vec![0u64; n_bands];
        let out = sim.run(vec![n_start, 0], t, NO_BUDGET, rng, |e, counts| {
            if let Action::Migr { from: 0, .. } = e.action {
                let before = counts[0] + e.k;
                total += 1;
                bands[(63 - before.leading_zeros()) as usize] += 1;
            }
            ControlFlow::Continue(())
        })?;
        Ok((total, bands, out.events))
    })?;
    let counts: Vec<u64> = runs.iter().map(|r| r.0).collect();
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut sorted = as_f.clone();
    let bands = (0..n_bands)
        .map(|j| (1u64 << j, runs.iter().map(|r| r.1[j] as f64).sum::<f64>() / reps as f64))
        .collect();
    Ok(MigrationSample {
        n_start,
        median: median(&mut sorted),
        mean: Estimate::mean(&as_f, seed)?,
        counts,
        bands,
        events: runs.iter().map(|r| r.2).sum(),
    })
}

fn check_migration_setup(sys: &SystemSpec) -> Result<()> {
    if sys.len() != 2 {
        return Err(Error::PreconditionViolated("migration count needs a two-site system".into()));
    }
    let others_zero = sys.coalescence(1).is_zero()
        && sys.death(1).is_zero()
        && sys.migration(1, 0).is_zero()
        && (0..2).all(|a| (0..2).all(|b| sys.reproduction(a, b).is_zero()));
    if !others_zero {
        return Err(Error::PreconditionViolated(
            "only coalescence and death at u and migration u -> v may be active".into(),
        ));
    }
    Ok(())
}

/// Sweep over starting sizes with the growth statistic.
#[derive(Debug, Clone, Serialize)]
pub struct MigrationSweep {
    pub samples: Vec<MigrationSample>,
    /// Exponent of the mean event count per dyadic band of `X_u`, fitted
    /// over bands `[16, n_max/2)` of the largest start. Positive when bands
    /// keep contributing more as the count grows.
    pub band_exponent: Option<Fit>,
    /// Slope of the median count against `ln n_start`.
    pub median_slope: Option<f64>,
    pub threshold: f64,
    pub growing: bool,
}

pub const GROWTH_THRESHOLD: f64 = 0.05;

pub fn migration_sweep(sys: &SystemSpec, ns: &[u64], t: f64, reps: u64, seed: u64) -> Result<MigrationSweep> {
    if ns.is_empty() {
        return Err(Error::PreconditionViolated("empty sweep".into()));
    }
    let samples = ns
        .iter()
        .map(|&n| estimate_migration_count(sys, n, t, reps, seed))
        .collect::<Result<Vec<_>>>()?;
    let largest = samples.iter().max_by_key(|s| s.n_start).unwrap();
    let pts: Vec<(f64, f64)> = largest
        .bands
        .iter()
        .filter(|&&(lo, m)| lo >= 16 && 2 * lo <= largest.n_start && m > 0.0)
        .map(|&(lo, m)| (lo as f64, m))
        .collect();
    let band_exponent = loglog_fit(&pts);
    let median_slope = if samples.len() >= 2 {
        let xs: Vec<f64> = samples.iter().map(|s| (s.n_start as f64).ln()).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.median).collect();
        Some(ols_slope(&xs, &ys))
    } else {
        None
    };
    let growing = band_exponent.is_some_and(|f| f.exponent > GROWTH_THRESHOLD);
    Ok(MigrationSweep {
        samples,
        band_exponent,
        median_slope,
        threshold: GROWTH_THRESHOLD,
        growing,
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean count at each grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    /// `mean · c t / 2` for Kingman coalescence at rate `c`.
    pub normalized: Option<f64>,
}

/// Totals at each time of `times` (sorted) for every replicate.
fn totals_on_grid(sim: &Simulator, initial: &[u64], times: &[f64], reps: u64, seed: u64) -> Result<(Vec<Vec<f64>>, u64)> {
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::PreconditionViolated("time grid must be nonempty, nonnegative and sorted".into()));
    }
    let t_max = *times.last().unwrap();
    let runs = run_replicates(seed, reps, |_, rng| {
        let mut out = Vec::with_capacity(times.len());
        let mut total: u64 = initial.iter().sum();
        let mut idx = 0;
        let res = sim.run(initial.to_vec(), t_max, NO_BUDGET, rng, |e, counts| {
            while idx < times.len() && times[idx] < e.time {
                out.push(total as f64);
                idx += 1;
            }
            total = counts.iter().sum();
            ControlFlow::Continue(())
        })?;
        while out.len() < times.len() {
            out.push(total as f64);
        }
        Ok((out, res.events))
    })?;
    let events = runs.iter().map(|r| r.1).sum();
    let by_time = (0..times.len()).map(|i| runs.iter().map(|r| r.0[i]).collect()).collect();
    Ok((by_time, events))
}

/// Block count speed for a single coalescent started at `n_start`.
pub fn estimate_block_speed(lambda: &Measure, n_start: u64, times: &[f64], reps: u64, seed: u64) -> Result<(Vec<CurvePoint>, u64)> {
    let sim = Simulator::new(&single_site(lambda, &Measure::zero())?)?;
    let (by_time, events) = totals_on_grid(&sim, &[n_start], times, reps, seed)?;
    let kingman = lambda.positive_mass() == 0.0 && lambda.atom_zero() > 0.0;
    let rows = times
        .iter()
        .zip(by_time)
        .map(|(&t, xs)| {
            let (mean, se) = mean_se(&xs)?;
            Ok(CurvePoint {
                t,
                mean,
                se,
                normalized: kingman.then(|| mean * lambda.atom_zero() * t / 2.0),
            })
        })
        .collect::<Result<_>>()?;
    Ok((rows, events))
}

/// Mean total count with `n` particles at every site initially.
pub fn estimate_mean_total(sys: &SystemSpec, n: u64, times: &[f64], reps: u64, seed: u64) -> Result<(Vec<CurvePoint>, u64)> {
    if sys.has_death() || sys.has_reproduction() {
        return Err(Error::PreconditionViolated("mean total comparison needs no death and no reproduction".into()));
    }
    let sim = Simulator::new(sys)?;
    let (by_time, events) = totals_on_grid(&sim, &vec![n; sys.len()], times, reps, seed)?;
    let rows = times
        .iter()
        .zip(by_time)
        .map(|(&t, xs)| {
            let (mean, se) = mean_se(&xs)?;
            Ok(CurvePoint {
                t,
                mean,
                se,
                normalized: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok((rows, events))
}

/// Observed one-step losses from `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalLoss {
    pub n: u64,
    /// `counts[k - 1]` steps lost exactly `k` particles.
    pub counts: Vec<u64>,
    pub samples: u64,
}

impl EmpiricalLoss {
    pub fn frequency(&self, k: u64) -> f64 {
        if k == 0 || k > self.n {
            0.0
        } else {
            self.counts[(k - 1) as usize] as f64 / self.samples as f64
        }
    }
}

const ZETA_CHUNK: u64 = 1000;

/// Repeats single steps from `n` and tallies the loss of the block count.
pub fn zeta_empirical(lambda: &Measure, death: &Measure, n: u64, samples: u64, seed: u64) -> Result<EmpiricalLoss> {
    if n < 2 {
        return Err(Error::PreconditionViolated(format!("zeta needs n >= 2, got {n}")));
    }
    let sim = Simulator::new(&single_site(lambda, death)?)?;
    let chunks = samples.div_ceil(ZETA_CHUNK);
    let parts = run_replicates(seed, chunks, |c, rng| {
        let todo = ZETA_CHUNK.min(samples - c * ZETA_CHUNK);
        let mut counts = vec![0u64; n as usize];
        let fresh = sim.state(vec![n], 0.0)?;
        for _ in 0..todo {
            let mut st = fresh.clone();
            sim.step(&mut st, rng)?;
            let lost = n - st.counts[0];
            counts[(lost - 1) as usize] += 1;
        }
        Ok(counts)
    })?;
    let mut counts = vec![0u64; n as usize];
    for p in parts {
        for (a, b) in counts.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok(EmpiricalLoss { n, counts, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of observed losses against `expected`. Bins are merged from
/// the tail until each holds an expected count of at least 5.
pub fn chi_square(observed: &EmpiricalLoss, expected: &LossDistribution<f64>) -> Result<ChiSquare> {
    if observed.n != expected.n {
        return Err(Error::PreconditionViolated("loss laws at different n".into()));
    }
    let total = observed.samples as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for k in 1..=observed.n {
        acc.0 += observed.counts[(k - 1) as usize] as f64;
        acc.1 += expected.get(k) * total;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquare {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::PreconditionViolated(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Mean count per site at `t` for one truncation level.
#[derive(Debug, Clone, Serialize)]
pub struct TruncRow {
    pub n_trunc: u64,
    pub means: Vec<f64>,
    pub ses: Vec<f64>,
    pub events: u64,
}

pub const DEFAULT_TRUNCS: [u64; 5] = [250, 500, 1000, 2000, 4000];

/// Sensitivity of the counts at `t` to the truncation of infinite sites.
pub fn trunc_sweep(sys: &SystemSpec, truncs: &[u64], t: f64, reps: u64, seed: u64) -> Result<Vec<TruncRow>> {
    let sim = Simulator::new(sys)?;
    truncs
        .iter()
        .map(|&n_trunc| {
            let initial = sys.initial_counts(n_trunc);
            let runs = run_replicates(seed, reps, |_, rng| {
                let mut last = initial.clone();
                let out = sim.run(initial.clone(), t, NO_BUDGET, rng, |_, counts| {
                    last.copy_from_slice(counts);
                    ControlFlow::Continue(())
                })?;
                Ok((last, out.events))
            })?;
            let mut means = Vec::new();
            let mut ses = Vec::new();
            for s in 0..sys.len() {
                let xs: Vec<f64> = runs.iter().map(|r| r.0[s] as f64).collect();
                let (m, se) = mean_se(&xs)?;
                means.push(m);
                ses.push(se);
            }
            Ok(TruncRow {
                n_trunc,
                means,
                ses,
                events: runs.iter().map(|r| r.1).sum(),
            })
        })
        .collect()
}
