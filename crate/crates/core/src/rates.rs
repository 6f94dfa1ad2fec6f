//! Blockwise and total event rates, the one-step loss law and the processing speed.

use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::measures::{ActionKind, MeasureSpec, SurvivalAccumulator, Weight};
use crate::quadrature::Quadrature;
use crate::scalar::Real;
use crate::special::{ln_binomial, ln_gamma};

fn min_k(kind: ActionKind) -> u64 {
    kind.weight().get()
}

/// Rate at which a given set of `k` out of `b` particles is hit by one event of `kind`.
pub fn block_rate<R: Real>(kind: ActionKind, mu: &MeasureSpec<R>, b: u64, k: u64) -> Result<R> {
    if k < min_k(kind) || k > b {
        return Err(Error::PreconditionViolated(format!(
            "{} block rate needs {} <= k <= b, got k = {k}, b = {b}",
            kind.name(),
            min_k(kind)
        )));
    }
    mu.weighted_moment(k, b, kind.weight())
}

fn atom_part<R: Real>(kind: ActionKind, mu: &MeasureSpec<R>, b: u64) -> R {
    let br = R::count(b);
    match kind.weight() {
        Weight::Pair => mu.atom_zero() * br * (br - R::one()) * R::lit(0.5),
        Weight::Single => mu.atom_zero() * br,
    }
}

/// Total rate of events of `kind` when `b` particles are present.
pub fn total_rate<R: Real>(kind: ActionKind, mu: &MeasureSpec<R>, b: u64) -> Result<R> {
    if b < min_k(kind) {
        return Ok(R::zero());
    }
    Ok(atom_part(kind, mu, b) + mu.survival_integral(b, kind.weight())?)
}

/// Rate of decrease of the block count, `Σ_k (k-1) binom(b,k) λ_{b,k}`, summed term by term.
pub fn gamma_b<R: Real>(lambda: &MeasureSpec<R>, b: u64) -> Result<R> {
    if b < 2 {
        return Err(Error::PreconditionViolated(format!("gamma_b needs b >= 2, got {b}")));
    }
    let mut total = R::zero();
    for k in 2..=b {
        total = total + R::count(k - 1) * lambda.binomial_moment(k, b, Weight::Pair)?;
    }
    Ok(total)
}

/// Processing speed `ψ(q) = Λ({0}) q(q-1)/2 + ∫ (qz - 1 + (1-z)^q) z^-2 Λ⁺(dz)` for real `q >= 0`.
pub fn psi<R: Real>(lambda: &MeasureSpec<R>, q: R) -> Result<R> {
    psi_with(lambda, q, &Quadrature::default())
}

pub fn psi_with<R: Real>(lambda: &MeasureSpec<R>, q: R, quad: &Quadrature<R>) -> Result<R> {
    if !(q >= R::zero()) {
        return Err(Error::PreconditionViolated(format!("psi needs q >= 0, got {q}")));
    }
    let kingman = lambda.atom_zero() * q * (q - R::one()) * R::lit(0.5);
    Ok(kingman + lambda.speed_integral(q, quad)?)
}

/// `γ_b` for `b = 0..=max_b` via `ψ(b+1) = ψ(b) + Λ({0}) b + S1(b)`, with `S1` the single-weight
/// survival integral. Entries below 2 are zero.
pub fn gamma_table<R: Real>(lambda: &MeasureSpec<R>, max_b: u64) -> Result<Vec<R>> {
    let mut out = Vec::with_capacity(max_b as usize + 1);
    out.push(R::zero());
    if max_b == 0 {
        return Ok(out);
    }
    out.push(R::zero());
    let mut acc = lambda.kernel().map(SurvivalAccumulator::new);
    let tab = lambda.density().tabulated().cloned();
    let quad = Quadrature::default();
    let mut current = R::zero();
    for b in 1..max_b {
        let mut s1 = R::zero();
        for &(z, m) in lambda.atoms() {
            s1 = s1 + m * crate::measures::survival_kernel(b, Weight::Single, z, R::one() - z);
        }
        if let Some(acc) = acc.as_mut() {
            acc.advance_to(b);
            s1 = s1 + acc.value(Weight::Single);
        }
        if let Some(t) = &tab {
            s1 = s1 + t.integrate(&quad, |z, omz| crate::measures::survival_kernel(b, Weight::Single, z, omz))?;
        }
        current = current + lambda.atom_zero() * R::count(b) + s1;
        out.push(current);
    }
    Ok(out)
}

/// One-step loss distribution of the block count under coalescence and death.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDistribution<R> {
    pub n: u64,
    /// `probs[k - 1] = ζ_{n,k}`.
    pub probs: Vec<R>,
    /// `1 - Σ ζ_{n,k}`.
    pub deficit: R,
}

impl<R: Real> LossDistribution<R> {
    pub fn get(&self, k: u64) -> R {
        if k == 0 || k > self.n {
            R::zero()
        } else {
            self.probs[(k - 1) as usize]
        }
    }

    pub fn mean(&self) -> R {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| R::count(i as u64 + 1) * p)
            .sum()
    }
}

fn loss_denominator<R: Real>(lambda: &MeasureSpec<R>, death: &MeasureSpec<R>, n: u64) -> Result<R> {
    let den = total_rate(ActionKind::Coalescence, lambda, n)? + total_rate(ActionKind::Death, death, n)?;
    if !(den > R::zero()) {
        return Err(Error::DegenerateChain);
    }
    Ok(den)
}

fn loss_numerator<R: Real>(lambda: &MeasureSpec<R>, death: &MeasureSpec<R>, n: u64, k: u64) -> Result<R> {
    let coal = if k < n {
        lambda.binomial_moment(k + 1, n, Weight::Pair)?
    } else {
        R::zero()
    };
    Ok(coal + death.binomial_moment(k, n, Weight::Single)?)
}

/// `ζ_{n,k}`: probability the next coalescence or death event removes exactly `k` particles.
pub fn zeta<R: Real>(lambda: &MeasureSpec<R>, death: &MeasureSpec<R>, n: u64, k: u64) -> Result<R> {
    if n < 2 || k < 1 || k > n {
        return Err(Error::PreconditionViolated(format!("zeta needs n >= 2 and 1 <= k <= n, got n = {n}, k = {k}")));
    }
    let den = loss_denominator(lambda, death, n)?;
    Ok(loss_numerator(lambda, death, n, k)? / den)
}

pub fn loss_distribution<R: Real>(lambda: &MeasureSpec<R>, death: &MeasureSpec<R>, n: u64) -> Result<LossDistribution<R>> {
    if n < 2 {
        return Err(Error::PreconditionViolated(format!("loss distribution needs n >= 2, got {n}")));
    }
    let den = loss_denominator(lambda, death, n)?;
    let mut probs = Vec::with_capacity(n as usize);
    for k in 1..=n {
        probs.push(loss_numerator(lambda, death, n, k)? / den);
    }
    let deficit = R::one() - probs.iter().copied().sum::<R>();
    Ok(LossDistribution { n, probs, deficit })
}

/// Limit `ζ_k = α Γ(k+1-α) / ((k+1)! Γ(2-α))` of the loss law for regular coalescents.
pub fn zeta_limit<R: Real>(alpha: R, k: u64) -> Result<R> {
    if !(alpha > R::one() && alpha < R::lit(2.0)) || k == 0 {
        return Err(Error::PreconditionViolated(format!("zeta_limit needs alpha in (1,2) and k >= 1, got {alpha}, {k}")));
    }
    let kr = R::count(k);
    let two = R::lit(2.0);
    Ok((alpha.ln() + ln_gamma(kr + R::one() - alpha) - ln_gamma(kr + two) - ln_gamma(two - alpha)).exp())
}

/// Rate of migration events from a site holding `n` particles.
pub fn migration_event_rate<R: Real>(m: &MeasureSpec<R>, n: u64) -> Result<R> {
    total_rate(ActionKind::Migration, m, n)
}

/// Probability that the next coalescence/death event at count `n` is a death of more than `j` particles.
pub fn large_death_probability<R: Real>(lambda: &MeasureSpec<R>, death: &MeasureSpec<R>, n: u64, j: u64) -> Result<R> {
    let den = loss_denominator(lambda, death, n)?;
    let mut total = R::zero();
    for l in (j + 1)..=n {
        total = total + death.binomial_moment(l, n, Weight::Single)?;
    }
    Ok(total / den)
}

/// Binomial log-coefficient helper re-exported for tests and samplers.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_binomial(n, k)
}

const CHUNK: usize = 1024;

/// Lazily filled table of `total_rate(kind, μ, n)` for `n < max_n`.
///
/// Chunks are filled in order under a mutex and published through `OnceLock`,
/// so reads of populated entries take no lock. Entries are computed by the same
/// arithmetic sequence as [`total_rate`], hence agree with it bit for bit.
pub struct RateCache<R> {
    measure: MeasureSpec<R>,
    kind: ActionKind,
    max_n: u64,
    chunks: Vec<OnceLock<Box<[R]>>>,
    grower: Mutex<Grower<R>>,
}

struct Grower<R> {
    next_chunk: usize,
    acc: Option<SurvivalAccumulator<R>>,
}

impl<R: Real> std::fmt::Debug for RateCache<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateCache")
            .field("kind", &self.kind)
            .field("max_n", &self.max_n)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_CACHE_MAX_N: u64 = 100_000;

impl<R: Real> RateCache<R> {
    pub fn new(measure: MeasureSpec<R>, kind: ActionKind) -> Self {
        Self::with_max_n(measure, kind, DEFAULT_CACHE_MAX_N)
    }

    pub fn with_max_n(measure: MeasureSpec<R>, kind: ActionKind, max_n: u64) -> Self {
        let n_chunks = (max_n as usize).div_ceil(CHUNK);
        let acc = measure.kernel().map(SurvivalAccumulator::new);
        Self {
            measure,
            kind,
            max_n,
            chunks: (0..n_chunks).map(|_| OnceLock::new()).collect(),
            grower: Mutex::new(Grower { next_chunk: 0, acc }),
        }
    }

    pub fn measure(&self) -> &MeasureSpec<R> {
        &self.measure
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    /// Rate of events driven by the atom at zero.
    pub fn atom_rate(&self, n: u64) -> R {
        if n < min_k(self.kind) {
            return R::zero();
        }
        atom_part(self.kind, &self.measure, n)
    }

    /// Rate of coordinated events (the `μ⁺` part).
    pub fn coordinated_rate(&self, n: u64) -> Result<R> {
        if n < min_k(self.kind) {
            return Ok(R::zero());
        }
        if n >= self.max_n {
            return self.measure.survival_integral(n, self.kind.weight());
        }
        let c = n as usize / CHUNK;
        if let Some(chunk) = self.chunks[c].get() {
            return Ok(chunk[n as usize % CHUNK]);
        }
        self.fill_through(c)?;
        Ok(self.chunks[c].get().expect("filled")[n as usize % CHUNK])
    }

    /// `total_rate(kind, μ, n)`.
    pub fn total(&self, n: u64) -> Result<R> {
        if n < min_k(self.kind) {
            return Ok(R::zero());
        }
        Ok(self.atom_rate(n) + self.coordinated_rate(n)?)
    }

    fn fill_through(&self, target: usize) -> Result<()> {
        let mut g = self.grower.lock().unwrap_or_else(|e| e.into_inner());
        let w = self.kind.weight();
        let quad = Quadrature::default();
        let tab = self.measure.density().tabulated();
        while g.next_chunk <= target {
            let start = g.next_chunk * CHUNK;
            let mut values = Vec::with_capacity(CHUNK);
            for n in start..start + CHUNK {
                let n = n as u64;
                if n < w.get() {
                    values.push(R::zero());
                    continue;
                }
                let mut total = R::zero();
                for &(z, m) in self.measure.atoms() {
                    total = total + m * crate::measures::survival_kernel(n, w, z, R::one() - z);
                }
                if let Some(acc) = g.acc.as_mut() {
                    acc.advance_to(n);
                    total = total + acc.value(w);
                }
                if let Some(t) = tab {
                    total = total + t.integrate(&quad, |z, omz| crate::measures::survival_kernel(n, w, z, omz))?;
                }
                values.push(total);
            }
            let idx = g.next_chunk;
            let _ = self.chunks[idx].set(values.into_boxed_slice());
            g.next_chunk += 1;
        }
        Ok(())
    }
}
