//! Samplers for the proportion `z` and participant count `K` of coordinated events.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Binomial, Distribution};

use crate::error::{Error, Result};
use crate::measures::{survival_kernel, tilt, BetaKernel, DensityFamily, MeasureSpec, TabulatedDensity, Weight};
use crate::rates::RateCache;
use crate::measures::ActionKind;
use crate::special::{ln_beta, ln_binomial};

/// `K ~ Binomial(n, z)` conditioned on `K >= w`.
///
/// Plain rejection needs `1 / P(K >= w)` trials on average, which is
/// unbounded when `nz` is small, so below acceptance 1/2 the conditioned law
/// is inverted directly starting from `k = w`.
pub fn sample_binomial_at_least<G: Rng + ?Sized>(n: u64, z: f64, w: Weight, rng: &mut G) -> Result<u64> {
    let wv = w.get();
    if n < wv || z <= 0.0 {
        return Err(Error::SamplerFailure(format!("no mass for K >= {wv} with n = {n}, z = {z}")));
    }
    if z >= 1.0 {
        return Ok(n);
    }
    let omz = 1.0 - z;
    let t = tilt(n, w, z, omz);
    if t >= 0.5 {
        let bin = Binomial::new(n, z).map_err(|e| Error::SamplerFailure(e.to_string()))?;
        for _ in 0..1_000 {
            let k = bin.sample(rng);
            if k >= wv {
                return Ok(k);
            }
        }
        return Err(Error::SamplerFailure("binomial rejection did not terminate".into()));
    }
    let target = rng.random::<f64>() * t;
    let ratio = z / omz;
    let mut k = wv;
    let mut pmf = (ln_binomial::<f64>(n, wv) + wv as f64 * z.ln() + (n - wv) as f64 * (-z).ln_1p()).exp();
    let mut cum = 0.0;
    loop {
        cum += pmf;
        if cum >= target || k == n {
            return Ok(k);
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        if pmf == 0.0 && cum < target {
            // remaining mass below double precision
            return Ok(k);
        }
        k += 1;
    }
}

/// `(K, z)` for a Beta-kernel measure: `K` first, by inverse transform of
/// `P(K = k) ∝ binom(n,k) B(k-w+a, n-k+b)`, then `z | K ~ Beta(K-w+a, n-K+b)`.
fn sample_kernel<G: Rng + ?Sized>(kernel: &BetaKernel<f64>, n: u64, w: Weight, total: f64, rng: &mut G) -> Result<(f64, u64)> {
    let wv = w.get();
    let (a, b) = (kernel.a, kernel.b);
    let target = rng.random::<f64>() * total;
    let mut k = wv;
    let mut term = (ln_binomial::<f64>(n, wv) + kernel.ln_weight + ln_beta(a, (n - wv) as f64 + b)).exp();
    let mut cum = 0.0;
    let mut last_positive = k;
    loop {
        cum += term;
        if term > 0.0 {
            last_positive = k;
        }
        if cum >= target {
            break;
        }
        if k == n {
            k = last_positive;
            break;
        }
        let kf = k as f64;
        let nf = n as f64;
        term *= (nf - kf) / (kf + 1.0) * (kf - wv as f64 + a) / (nf - kf - 1.0 + b);
        k += 1;
    }
    let shape_a = (k - wv) as f64 + a;
    let shape_b = (n - k) as f64 + b;
    let beta = BetaDist::new(shape_a, shape_b).map_err(|e| Error::SamplerFailure(e.to_string()))?;
    let mut z: f64 = beta.sample(rng);
    if z <= 0.0 {
        z = f64::MIN_POSITIVE;
    }
    Ok((z, k))
}

struct Envelope {
    lo: Vec<f64>,
    hi: Vec<f64>,
    height: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Rejection sampler for `z` from `P(Bin(n,z) >= w) z^-w f(z) dz` with a
/// tabulated `f`. One piecewise-constant envelope is built per dyadic bucket
/// of `n` and reused for every `n` in it, since the tilted kernel is
/// increasing in `n` and decreasing in `z`.
pub struct TabulatedSampler {
    density: TabulatedDensity<f64>,
    weight: Weight,
    buckets: Vec<OnceLock<Envelope>>,
}

impl std::fmt::Debug for TabulatedSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TabulatedSampler").field("weight", &self.weight).finish_non_exhaustive()
    }
}

const GEOMETRIC_RATIO: f64 = 1.1;

impl TabulatedSampler {
    pub fn new(density: TabulatedDensity<f64>, weight: Weight) -> Self {
        Self {
            density,
            weight,
            buckets: (0..64).map(|_| OnceLock::new()).collect(),
        }
    }

    fn bucket(n: u64) -> usize {
        63 - n.leading_zeros() as usize
    }

    fn envelope(&self, n: u64) -> &Envelope {
        let j = Self::bucket(n);
        self.buckets[j].get_or_init(|| {
            let n_hi = if j >= 62 { u64::MAX / 4 } else { 1u64 << (j + 1) };
            let mut points = vec![0.0];
            let mut z = 1.0 / (64.0 * n_hi as f64);
            while z < 1.0 {
                points.push(z);
                z *= GEOMETRIC_RATIO;
            }
            points.extend(self.density.knots());
            points.push(1.0);
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            points.dedup();
            let mut env = Envelope {
                lo: Vec::new(),
                hi: Vec::new(),
                height: Vec::new(),
                cumulative: Vec::new(),
            };
            let mut acc = 0.0;
            for win in points.windows(2) {
                let (l, r) = (win[0], win[1]);
                let h = survival_kernel(n_hi, self.weight, l, 1.0 - l) * self.density.sup_on(l, r);
                acc += h * (r - l);
                env.lo.push(l);
                env.hi.push(r);
                env.height.push(h);
                env.cumulative.push(acc);
            }
            env
        })
    }

    pub fn sample<G: Rng + ?Sized>(&self, n: u64, rng: &mut G) -> Result<f64> {
        let env = self.envelope(n);
        let total = *env.cumulative.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(Error::SamplerFailure("tabulated density has no mass".into()));
        }
        for _ in 0..1_000_000 {
            let u = rng.random::<f64>() * total;
            let cell = env.cumulative.partition_point(|&c| c <= u).min(env.lo.len() - 1);
            let (l, r) = (env.lo[cell], env.hi[cell]);
            let z = l + (r - l) * rng.random::<f64>();
            if z <= 0.0 {
                continue;
            }
            let target = survival_kernel(n, self.weight, z, 1.0 - z) * self.density.eval(z);
            if rng.random::<f64>() * env.height[cell] < target {
                return Ok(z);
            }
        }
        Err(Error::SamplerFailure(format!("tabulated rejection exhausted at n = {n}")))
    }
}

/// One additive piece of a measure, with its own rate and sampler.
#[derive(Debug)]
pub(crate) enum Part {
    /// The atom at zero: pairwise clocks (coalescence) or per-particle clocks.
    ZeroAtom { mass: f64 },
    Atom { z: f64, mass: f64 },
    Kernel { kernel: BetaKernel<f64>, cache: RateCache<f64> },
    Tabulated { sampler: TabulatedSampler, cache: RateCache<f64> },
}

impl Part {
    pub(crate) fn split(measure: &MeasureSpec<f64>, kind: ActionKind) -> Result<Vec<Part>> {
        let w = kind.weight();
        let mut parts = Vec::new();
        if measure.atom_zero() > 0.0 {
            parts.push(Part::ZeroAtom {
                mass: measure.atom_zero(),
            });
        }
        for &(z, mass) in measure.atoms() {
            parts.push(Part::Atom { z, mass });
        }
        if let Some(kernel) = measure.kernel() {
            let only = MeasureSpec::new(0.0, Vec::new(), measure.density().clone())?;
            parts.push(Part::Kernel {
                kernel,
                cache: RateCache::new(only, kind),
            });
        }
        if let DensityFamily::Tabulated(t) = measure.density() {
            if t.total_mass() > 0.0 {
                let only = MeasureSpec::new(0.0, Vec::new(), measure.density().clone())?;
                parts.push(Part::Tabulated {
                    sampler: TabulatedSampler::new(t.clone(), w),
                    cache: RateCache::new(only, kind),
                });
            }
        }
        Ok(parts)
    }

    pub(crate) fn rate(&self, n: u64, w: Weight) -> Result<f64> {
        if n < w.get() {
            return Ok(0.0);
        }
        let nf = n as f64;
        Ok(match self {
            Part::ZeroAtom { mass } => match w {
                Weight::Pair => mass * nf * (nf - 1.0) * 0.5,
                Weight::Single => mass * nf,
            },
            Part::Atom { z, mass } => mass * survival_kernel(n, w, *z, 1.0 - *z),
            Part::Kernel { cache, .. } | Part::Tabulated { cache, .. } => cache.coordinated_rate(n)?,
        })
    }

    pub(crate) fn is_independent(&self) -> bool {
        matches!(self, Part::ZeroAtom { .. })
    }

    /// Draws `(z, K)` for a coordinated part at count `n`.
    pub(crate) fn sample_coordinated<G: Rng + ?Sized>(&self, n: u64, w: Weight, rate: f64, rng: &mut G) -> Result<(f64, u64)> {
        match self {
            Part::ZeroAtom { .. } => Err(Error::SamplerFailure("atom at zero has no proportion".into())),
            Part::Atom { z, .. } => Ok((*z, sample_binomial_at_least(n, *z, w, rng)?)),
            Part::Kernel { kernel, .. } => sample_kernel(kernel, n, w, rate, rng),
            Part::Tabulated { sampler, .. } => {
                let z = sampler.sample(n, rng)?;
                Ok((z, sample_binomial_at_least(n, z, w, rng)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    #[test]
    fn conditioned_binomial_matches_pmf() {
        let mut rng = replicate_rng(3, 0);
        for &(n, z, w) in &[(20u64, 0.01, Weight::Pair), (20, 0.4, Weight::Single), (5, 0.2, Weight::Single)] {
            let t = tilt(n, w, z, 1.0 - z);
            let draws = 200_000;
            let mut counts = vec![0u64; n as usize + 1];
            for _ in 0..draws {
                counts[sample_binomial_at_least(n, z, w, &mut rng).unwrap() as usize] += 1;
            }
            for k in w.get()..=n.min(4) {
                let p = (ln_binomial::<f64>(n, k) + k as f64 * z.ln() + (n - k) as f64 * (1.0 - z).ln()).exp() / t;
                let freq = counts[k as usize] as f64 / draws as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((freq - p).abs() < 5.0 * se + 1e-4, "n={n} z={z} k={k}: {freq} vs {p}");
            }
            assert_eq!(counts[..w.get() as usize].iter().sum::<u64>(), 0);
        }
    }

    #[test]
    fn kernel_participant_law_matches_block_rates() {
        let m = MeasureSpec::<f64>::beta(0.5, 1.5, 1.0).unwrap();
        let kernel = m.kernel().unwrap();
        let n = 12u64;
        let total = m.survival_integral(n, Weight::Pair).unwrap();
        let mut rng = replicate_rng(9, 1);
        let draws = 200_000;
        let mut counts = vec![0u64; n as usize + 1];
        for _ in 0..draws {
            let (z, k) = sample_kernel(&kernel, n, Weight::Pair, total, &mut rng).unwrap();
            assert!(z > 0.0 && z < 1.0);
            counts[k as usize] += 1;
        }
        for k in 2..=5u64 {
            let p = m.binomial_moment(k, n, Weight::Pair).unwrap() / total;
            let freq = counts[k as usize] as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() < 5.0 * se, "k={k}: {freq} vs {p}");
        }
    }

    #[test]
    fn tabulated_sampler_matches_tilted_density() {
        let t = TabulatedDensity::new(vec![(0.0, 2.0), (0.5, 0.5), (1.0, 1.0)]).unwrap();
        let m = MeasureSpec::new(0.0, Vec::new(), DensityFamily::Tabulated(t.clone())).unwrap();
        let sampler = TabulatedSampler::new(t, Weight::Single);
        let n = 40u64;
        let mut rng = replicate_rng(1, 1);
        let draws = 100_000;
        let below = (0..draws).filter(|_| sampler.sample(n, &mut rng).unwrap() < 0.05).count();
        let quad = crate::quadrature::Quadrature::default();
        let total = m.survival_integral(n, Weight::Single).unwrap();
        let part = m
            .density()
            .tabulated()
            .unwrap()
            .integrate(&quad, |z, omz| if z < 0.05 { survival_kernel(n, Weight::Single, z, omz) } else { 0.0 })
            .unwrap();
        let p = part / total;
        let freq = below as f64 / draws as f64;
        assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / draws as f64).sqrt(), "{freq} vs {p}");
    }
}
