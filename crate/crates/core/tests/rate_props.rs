mod common;

use common::{arb_measure, arb_measure_without_density, rel_err};
use coordsim::measures::{ActionKind, Weight};
use coordsim::rates::{
    gamma_b, large_death_probability, loss_distribution, psi, total_rate, zeta, zeta_limit, RateCache,
};
use coordsim::Measure;
use proptest::prelude::*;

fn choose(b: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (b - i) as f64 / (i + 1) as f64)
}

fn arb_weight() -> impl Strategy<Value = Weight> {
    prop_oneof![Just(Weight::Single), Just(Weight::Pair)]
}

fn arb_kind() -> impl Strategy<Value = ActionKind> {
    prop_oneof![
        Just(ActionKind::Coalescence),
        Just(ActionKind::Death),
        Just(ActionKind::Migration),
        Just(ActionKind::Reproduction),
    ]
}

/// Polynomial Beta densities are reproduced exactly by a linear interpolant
/// only up to `O(h^2)`; a fine grid keeps that below the tolerance.
fn tabulate_beta(a: f64, b: f64, points: usize) -> Measure {
    let ln_norm = coordsim::special::ln_beta(a, b);
    let grid = (0..points)
        .map(|i| {
            let z = i as f64 / (points - 1) as f64;
            (z, (-ln_norm).exp() * z.powf(a - 1.0) * (1.0 - z).powf(b - 1.0))
        })
        .collect();
    Measure::tabulated(grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn survival_integral_is_the_binomial_sum(m in arb_measure(), b in 1u64..=60, w in arb_weight()) {
        let pos = m.positive_part();
        let direct = m.survival_integral(b, w).unwrap();
        let mut sum = 0.0;
        for k in w.get()..=b {
            sum += choose(b, k) * pos.weighted_moment(k, b, w).unwrap();
        }
        prop_assert!(rel_err(direct, sum) <= 1e-8, "b = {b}: {direct} vs {sum}");
    }

    #[test]
    fn weighted_moment_is_linear(m1 in arb_measure(), m2 in arb_measure_without_density(), b in 2u64..=60, kf in 0.0..1.0f64, w in arb_weight()) {
        let k = w.get() + ((b - w.get()) as f64 * kf) as u64;
        let sum = m1.try_add(&m2).unwrap();
        let lhs = sum.weighted_moment(k, b, w).unwrap();
        let rhs = m1.weighted_moment(k, b, w).unwrap() + m2.weighted_moment(k, b, w).unwrap();
        prop_assert!(rel_err(lhs, rhs) <= 1e-12);
    }

    #[test]
    fn death_rate_is_at_most_n_times_mass(m in arb_measure(), n in 1u64..5000) {
        let rate = m.survival_integral(n, Weight::Single).unwrap();
        prop_assert!(rate <= n as f64 * m.positive_mass() * (1.0 + 1e-12));
    }

    #[test]
    fn psi_is_convex(m in arb_measure(), q1 in 0.0..500.0f64, q2 in 0.0..500.0f64) {
        let mid = psi(&m, 0.5 * (q1 + q2)).unwrap();
        let chord = 0.5 * (psi(&m, q1).unwrap() + psi(&m, q2).unwrap());
        prop_assert!(mid <= chord + 1e-10 * chord.abs().max(1.0), "{mid} > {chord}");
    }

    #[test]
    fn loss_law_has_mass_at_most_one(lambda in arb_measure(), death in arb_measure(), n in 2u64..200) {
        let law = loss_distribution(&lambda, &death, n).unwrap();
        let total: f64 = law.probs.iter().sum();
        prop_assert!(total <= 1.0 + 1e-9);
        prop_assert!(law.probs.iter().all(|&p| p >= 0.0));
        // pure coalescence and death: nothing is left over
        prop_assert!((total - 1.0).abs() <= 1e-9, "{total}");
    }

    #[test]
    fn rate_cache_matches_fresh_computation_bitwise(m in arb_measure(), kind in arb_kind(), ns in prop::collection::vec(0u64..3000, 1..8)) {
        let cache = RateCache::with_max_n(m.clone(), kind, 4096);
        for &n in &ns {
            let cached = cache.total(n).unwrap();
            let fresh = total_rate(kind, &m, n).unwrap();
            prop_assert_eq!(cached.to_bits(), fresh.to_bits(), "n = {}", n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gamma_b_equals_psi(m in arb_measure()) {
        for b in 2u64..=200 {
            let g = gamma_b(&m, b).unwrap();
            let p = psi(&m, b as f64).unwrap();
            prop_assert!((g - p).abs() <= 1e-8 * p, "b = {b}: {g} vs {p}");
        }
    }

    /// Densities of degree at most one are reproduced exactly by the interpolant,
    /// so any disagreement is quadrature error.
    #[test]
    fn linear_beta_matches_tabulated_quadrature(ab in prop_oneof![Just((1u32, 1u32)), Just((2, 1)), Just((1, 2))], points in 2usize..40, n in 2u64..=60, kf in 0.0..1.0f64, w in arb_weight()) {
        let (a, b) = (ab.0 as f64, ab.1 as f64);
        let closed = Measure::beta(a, b, 1.0).unwrap();
        let tab = tabulate_beta(a, b, points);
        let k = w.get() + ((n - w.get()) as f64 * kf) as u64;
        let x = closed.weighted_moment(k, n, w).unwrap();
        let y = tab.weighted_moment(k, n, w).unwrap();
        prop_assert!(rel_err(x, y) <= 1e-6, "moment {x} vs {y}");
        let x = closed.survival_integral(n, w).unwrap();
        let y = tab.survival_integral(n, w).unwrap();
        prop_assert!(rel_err(x, y) <= 1e-6, "survival {x} vs {y}");
    }

    /// Curved densities carry an `O((n h)^2)` interpolation error, so the block
    /// count stays small for a grid of spacing `h = 1.25e-4`.
    #[test]
    fn beta_closed_form_matches_tabulated_quadrature(a in 1u32..=4, b in 1u32..=4, n in 2u64..=20, kf in 0.0..1.0f64, w in arb_weight()) {
        let closed = Measure::beta(a as f64, b as f64, 1.0).unwrap();
        let tab = tabulate_beta(a as f64, b as f64, 8001);
        let k = w.get() + ((n - w.get()) as f64 * kf) as u64;
        let x = closed.weighted_moment(k, n, w).unwrap();
        let y = tab.weighted_moment(k, n, w).unwrap();
        prop_assert!(rel_err(x, y) <= 1e-6, "moment {x} vs {y}");
        let x = closed.survival_integral(n, w).unwrap();
        let y = tab.survival_integral(n, w).unwrap();
        prop_assert!(rel_err(x, y) <= 1e-6, "survival {x} vs {y}");
    }
}

#[test]
fn loss_law_converges_to_its_limit() {
    // A death atom at zero removes particles at rate n and decays only like n^(1-α),
    // which at n = 10^4 is still 0.1 for α = 1.25, so it is checked from α = 1.5 on.
    for alpha in [1.25, 1.5, 1.75] {
        let lambda = Measure::beta_coalescent(alpha).unwrap();
        let mut deaths = vec![Measure::zero(), Measure::uniform(), Measure::dirac(0.3, 2.0).unwrap(), Measure::power_law(3.0, 0.5).unwrap()];
        if alpha >= 1.5 {
            deaths.push(Measure::kingman(1.0).unwrap());
        }
        for d in &deaths {
            for k in 1..=10 {
                let z = zeta(&lambda, d, 10_000, k).unwrap();
                let lim = zeta_limit(alpha, k).unwrap();
                assert!((z - lim).abs() <= 0.01, "alpha = {alpha}, k = {k}: {z} vs {lim}");
            }
        }
    }
}

/// `max_{n/2 <= k <= n} ζ_{n,k} k^(1+α)` for a regular coalescent with death near zero.
fn envelope(alpha: f64, n: u64) -> f64 {
    let lambda = Measure::power_law(1.0, alpha - 1.0).unwrap();
    let death = Measure::dirac(0.1, 1.0).unwrap();
    let law = loss_distribution(&lambda, &death, n).unwrap();
    (n / 2..=n).map(|k| law.get(k) * (k as f64).powf(1.0 + alpha)).fold(0.0, f64::max)
}

#[test]
fn regular_loss_law_has_a_bounded_envelope() {
    for alpha in [1.2, 1.5, 1.8] {
        let values: Vec<f64> = [125, 250, 500, 1000, 2000].iter().map(|&n| envelope(alpha, n)).collect();
        let first = values[0];
        for (i, &v) in values.iter().enumerate() {
            assert!(v.is_finite() && v > 0.0);
            // no growth trend across doublings
            assert!(v <= 1.05 * first, "alpha = {alpha}, doubling {i}: {values:?}");
        }
    }
}

fn large_death_ratio(alpha: f64, k: u64, j: u64) -> f64 {
    let lambda = Measure::power_law(1.0, alpha - 1.0).unwrap();
    let death = Measure::dirac(0.1, 1.0).unwrap();
    let p = large_death_probability(&lambda, &death, k + j, j).unwrap();
    p / ((k as f64).powf(-alpha) * (1.0 + k as f64 / j as f64))
}

/// The ratio rises towards its supremum along rays `j = εk`, so the maximum over a
/// finite grid sits a little below the constant. The larger grid is allowed twice
/// the fitted value, which still rules out any growth in `k` or `k/j`.
#[test]
fn large_death_bound_holds_with_a_fitted_constant() {
    for alpha in [1.2, 1.5, 1.8] {
        let small = [2u64, 4, 8, 16, 32];
        let large = [8u64, 16, 32, 64, 128, 256, 512];
        let c = small
            .iter()
            .flat_map(|&k| small.iter().map(move |&j| (k, j)))
            .map(|(k, j)| large_death_ratio(alpha, k, j))
            .fold(0.0, f64::max);
        assert!(c.is_finite() && c > 0.0);
        for &k in &large {
            for &j in &large {
                let r = large_death_ratio(alpha, k, j);
                assert!(r <= 2.0 * c, "alpha = {alpha}, k = {k}, j = {j}: {r} > 2 x {c}");
            }
        }
    }
}
