//! Log-gamma, log-beta and digamma for any [`Real`].
//!
//! Beta-function ratios of the form `binom(n,k) B(k - a, n - k + a)` overflow
//! quickly in direct form, so everything here works in log space.

use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln |Γ(x)|`. Valid for all `x` that are not non-positive integers.
pub fn ln_gamma<R: Real>(x: R) -> R {
    let half = R::lit(0.5);
    if x < half {
        // reflection
        let pi = R::PI();
        let s = (pi * x).sin().abs();
        return (pi / s).ln() - ln_gamma(R::one() - x);
    }
    if x >= R::lit(10.0) {
        return stirling(x);
    }
    let xm1 = x - R::one();
    let mut sum = R::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum = sum + R::lit(c) / (xm1 + R::lit(i as f64));
    }
    let t = xm1 + R::lit(LANCZOS_G) + half;
    half * (R::TAU()).ln() + (xm1 + half) * t.ln() - t + sum.ln()
}

fn stirling<R: Real>(x: R) -> R {
    let half = R::lit(0.5);
    let inv = x.recip();
    let inv2 = inv * inv;
    // 1/12x - 1/360x^3 + 1/1260x^5 - 1/1680x^7 + 1/1188x^9
    let series = inv
        * (R::lit(1.0 / 12.0)
            + inv2
                * (R::lit(-1.0 / 360.0)
                    + inv2 * (R::lit(1.0 / 1260.0) + inv2 * (R::lit(-1.0 / 1680.0) + inv2 * R::lit(1.0 / 1188.0)))));
    (x - half) * x.ln() - x + half * R::TAU().ln() + series
}

/// `ln B(a, b)` for `a, b > 0`.
pub fn ln_beta<R: Real>(a: R, b: R) -> R {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln binom(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial<R: Real>(n: u64, k: u64) -> R {
    if k > n {
        return R::neg_infinity();
    }
    if k == 0 || k == n {
        return R::zero();
    }
    let k = k.min(n - k);
    if n <= 60 {
        // exact product, no lgamma rounding for the small cases
        let mut acc = 1.0f64;
        for i in 0..k {
            acc = acc * (n - i) as f64 / (i + 1) as f64;
        }
        return R::lit(acc.ln());
    }
    ln_gamma(R::count(n + 1)) - ln_gamma(R::count(k + 1)) - ln_gamma(R::count(n - k + 1))
}

/// Digamma `ψ(x) = Γ'(x)/Γ(x)` for `x > 0`.
pub fn digamma<R: Real>(x: R) -> R {
    let mut x = x;
    let mut acc = R::zero();
    let shift = R::lit(12.0);
    while x < shift {
        acc = acc - x.recip();
        x = x + R::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let tail = inv2
        * (R::lit(-1.0 / 12.0)
            + inv2
                * (R::lit(1.0 / 120.0)
                    + inv2 * (R::lit(-1.0 / 252.0) + inv2 * (R::lit(1.0 / 240.0) + inv2 * R::lit(-1.0 / 132.0)))));
    acc + x.ln() - R::lit(0.5) * inv + tail
}

/// Harmonic number `H_n`.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}
