//! Coming down from infinity and Λ-strength of migration measures.
//!
//! Verdicts are three-valued. Closed-form families are decided analytically;
//! the numeric evidence (partial sums, fitted exponents) is attached either
//! way so a reader can see how far the finite tables agree with the verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{survival_kernel, RegularityProfile, SurvivalAccumulator, Weight};
use crate::quadrature::Quadrature;
use crate::rates::gamma_table;
use crate::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Positive,
    Negative,
    Inconclusive,
}

/// Least-squares slope of `ln y` against `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub exponent: f64,
    pub std_error: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    /// `analytic`, `regression`, `convention`, or the strength test name.
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortcut: Option<String>,
    /// `(n, partial sum up to n)` at dyadic `n`.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub partial_sums: Vec<(u64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<Fit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub evidence: Evidence,
}

impl Verdict {
    fn new(outcome: Outcome, evidence: Evidence) -> Self {
        Self { outcome, evidence }
    }

    pub fn is_positive(&self) -> bool {
        self.outcome == Outcome::Positive
    }
}

/// Decision knobs shared by the regression-based tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaOptions {
    /// Half-width of the undecided band around the critical exponent.
    pub margin: f64,
    /// Ignore closed forms and decide from the fitted exponent only.
    pub numeric_only: bool,
    /// Largest dyadic exponent in the tables.
    pub max_log2: u32,
    /// Smallest dyadic exponent used by the fits.
    pub fit_from_log2: u32,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        Self {
            margin: 0.05,
            numeric_only: false,
            max_log2: 14,
            fit_from_log2: 6,
        }
    }
}

pub fn loglog_fit(points: &[(f64, f64)]) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Some(Fit {
        exponent: slope,
        std_error: (sse / (n as f64 - 2.0) / sxx).sqrt(),
        points: n,
    })
}

fn dyadic_points(values: &[f64], from: u32, to: u32) -> Vec<(f64, f64)> {
    (from..=to)
        .map(|j| 1usize << j)
        .filter(|&b| b < values.len())
        .map(|b| (b as f64, values[b]))
        .collect()
}

fn classify(exponent: f64, critical: f64, margin: f64, above_is_positive: bool) -> Outcome {
    if exponent > critical + margin {
        if above_is_positive {
            Outcome::Positive
        } else {
            Outcome::Negative
        }
    } else if exponent < critical - margin {
        if above_is_positive {
            Outcome::Negative
        } else {
            Outcome::Positive
        }
    } else {
        Outcome::Inconclusive
    }
}

/// Whether the Λ-coalescent comes down from infinity (`Σ_b 1/γ_b < ∞`).
pub fn comes_down(lambda: &Measure) -> Result<Verdict> {
    comes_down_with(lambda, &CriteriaOptions::default())
}

pub fn comes_down_with(lambda: &Measure, opts: &CriteriaOptions) -> Result<Verdict> {
    if lambda.has_atom_at_one() {
        return Err(Error::AtomAtOne("coalescence".into()));
    }
    if lambda.is_zero() {
        return Ok(Verdict::new(
            Outcome::Negative,
            Evidence {
                method: "convention".into(),
                shortcut: Some("zero coalescence measure never merges".into()),
                ..Evidence::default()
            },
        ));
    }
    let max_log2 = if lambda.density().tabulated().is_some() {
        opts.max_log2.min(11)
    } else {
        opts.max_log2
    };
    let gammas = gamma_table(lambda, 1u64 << max_log2)?;
    let mut partial_sums = Vec::new();
    let mut sum = 0.0;
    for (b, g) in gammas.iter().enumerate().skip(2) {
        sum += 1.0 / g;
        if b.is_power_of_two() {
            partial_sums.push((b as u64, sum));
        }
    }
    let fit = loglog_fit(&dyadic_points(&gammas, opts.fit_from_log2, max_log2));
    let exact = match lambda.regularity() {
        RegularityProfile::Kingman => Some(2.0 / lambda.atom_zero()),
        _ => None,
    };
    let mut evidence = Evidence {
        method: "analytic".into(),
        partial_sums,
        fit,
        value: exact,
        ..Evidence::default()
    };
    if !opts.numeric_only {
        let (outcome, why) = if lambda.atom_zero() > 0.0 {
            (Outcome::Positive, "atom at zero dominates a Kingman coalescent")
        } else if lambda.kernel().is_some_and(|k| k.a < 1.0) {
            (Outcome::Positive, "density ~ z^(a-1) near zero with a < 1")
        } else {
            (Outcome::Negative, "density bounded near zero, so gamma_b = O(b log b)")
        };
        evidence.shortcut = Some(why.into());
        return Ok(Verdict::new(outcome, evidence));
    }
    evidence.method = "regression".into();
    let outcome = match fit {
        Some(f) => classify(f.exponent, 1.0, opts.margin, true),
        None => Outcome::Inconclusive,
    };
    Ok(Verdict::new(outcome, evidence))
}

fn require_mass(m: &Measure) -> Result<f64> {
    let mass = m.total_mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    Ok(mass)
}

/// `E[(1 - W)^n]` with `W = U Y`, `U` uniform and `Y` drawn from the normalized measure,
/// through `E[(1 - (1-Y)^(n+1)) / ((n+1) Y)]`.
pub fn moment_1mw(m: &Measure, n: u64) -> Result<f64> {
    let mass = require_mass(m)?;
    if n == 0 {
        return Ok(1.0);
    }
    let np1 = n + 1;
    let scale = 1.0 / np1 as f64;
    let quad = Quadrature::default();
    let pos = m.integrate_positive(&quad, |z, omz| survival_kernel(np1, Weight::Single, z, omz) * scale)?;
    Ok((m.atom_zero() + pos) / mass)
}

/// `E[(1 - W)^n]` for `n = 0..=n_max` by the survival-integral recurrence.
pub fn moment_1mw_table(m: &Measure, n_max: u64) -> Result<Vec<f64>> {
    let mass = require_mass(m)?;
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut acc = m.kernel().map(SurvivalAccumulator::new);
    let quad = Quadrature::default();
    out.push(1.0);
    for n in 1..=n_max {
        let np1 = n + 1;
        let mut s = 0.0;
        for &(z, w) in m.atoms() {
            s += w * survival_kernel(np1, Weight::Single, z, 1.0 - z);
        }
        if let Some(acc) = acc.as_mut() {
            acc.advance_to(np1);
            s += acc.value(Weight::Single);
        }
        if let Some(t) = m.density().tabulated() {
            s += t.integrate(&quad, |z, omz| survival_kernel(np1, Weight::Single, z, omz))?;
        }
        out.push((m.atom_zero() + s / np1 as f64) / mass);
    }
    Ok(out)
}

/// `E[-log Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NegLog {
    Finite(f64),
    Infinite,
    Undetermined,
}

pub fn expected_neg_log(m: &Measure) -> Result<NegLog> {
    let mass = require_mass(m)?;
    if m.atom_zero() > 0.0 {
        return Ok(NegLog::Infinite);
    }
    if let Some(v) = m.neg_log_integral_closed() {
        return Ok(NegLog::Finite(v / mass));
    }
    let tab = m.density().tabulated().expect("only tabulated densities lack a closed form");
    let quad = Quadrature::default();
    let mut closed = 0.0;
    for &(z, w) in m.atoms() {
        closed -= w * z.ln();
    }
    let body = |lo: f64| -> Result<f64> {
        let mut knots: Vec<f64> = tab.knots().into_iter().filter(|&z| z > lo).collect();
        knots.insert(0, lo);
        quad.integrate_pieces(&|z: f64| -z.ln() * tab.eval(z), &knots)
    };
    // partial integrals over [ε, 1]; growth like log(1/ε) signals divergence
    let eps: Vec<f64> = (1..=6).map(|j| 10f64.powi(-2 * j)).collect();
    let partial: Vec<f64> = eps.iter().map(|&e| body(e)).collect::<Result<_>>()?;
    let last = partial[5] - partial[4];
    let prev = partial[4] - partial[3];
    if last > 0.0 && last >= 0.5 * prev && last > 1e-9 * partial[5].abs() {
        return Ok(NegLog::Undetermined);
    }
    let full = quad.integrate_pieces(&|z: f64| if z > 0.0 { -z.ln() * tab.eval(z) } else { 0.0 }, &tab.knots())?;
    Ok(NegLog::Finite((closed + full) / mass))
}

/// Kingman strength test: strong iff `E[-log Y] = ∞`.
pub fn kingman_strong_test(m: &Measure) -> Result<Verdict> {
    let v = expected_neg_log(m)?;
    let (outcome, value) = match v {
        NegLog::Infinite => (Outcome::Positive, None),
        NegLog::Finite(x) => (Outcome::Negative, Some(x)),
        NegLog::Undetermined => (Outcome::Inconclusive, None),
    };
    Ok(Verdict::new(
        outcome,
        Evidence {
            method: "neg-log".into(),
            shortcut: Some(
                match v {
                    NegLog::Infinite => "E[-log Y] infinite",
                    NegLog::Finite(_) => "E[-log Y] finite",
                    NegLog::Undetermined => "E[-log Y] not resolved numerically",
                }
                .into(),
            ),
            value,
            ..Evidence::default()
        },
    ))
}

/// Decay exponent of `E[(1-W)^n]` implied by the measure's behavior at zero.
fn analytic_decay(m: &Measure) -> f64 {
    if m.atom_zero() > 0.0 {
        return 0.0;
    }
    match m.kernel() {
        Some(k) if k.a < 1.0 => k.a,
        _ => 1.0,
    }
}

/// Series test: strong iff `Σ_n E[(1-W)^n] / n^(α-1) = ∞`.
pub fn series_strong_test(m: &Measure, alpha: f64) -> Result<Verdict> {
    series_strong_test_with(m, alpha, &CriteriaOptions::default())
}

pub fn series_strong_test_with(m: &Measure, alpha: f64, opts: &CriteriaOptions) -> Result<Verdict> {
    require_mass(m)?;
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::PreconditionViolated(format!("series test needs alpha in (1,2), got {alpha}")));
    }
    let max_log2 = if m.density().tabulated().is_some() {
        opts.max_log2.min(10)
    } else {
        opts.max_log2
    };
    let table = moment_1mw_table(m, 1u64 << max_log2)?;
    let mut partial_sums = Vec::new();
    let mut sum = 0.0;
    for (n, a) in table.iter().enumerate().skip(1) {
        sum += a / (n as f64).powf(alpha - 1.0);
        if n.is_power_of_two() {
            partial_sums.push((n as u64, sum));
        }
    }
    let fit = loglog_fit(&dyadic_points(&table, opts.fit_from_log2, max_log2)).map(|f| Fit {
        exponent: -f.exponent,
        ..f
    });
    let mut evidence = Evidence {
        method: "series".into(),
        partial_sums,
        fit,
        ..Evidence::default()
    };
    if !opts.numeric_only {
        let sigma = analytic_decay(m);
        evidence.value = Some(sigma + alpha - 1.0);
        evidence.shortcut = Some(format!("E[(1-W)^n] ~ n^-{sigma}; series diverges iff {sigma} + alpha - 1 <= 1"));
        let outcome = if sigma + alpha - 1.0 <= 1.0 + 1e-12 {
            Outcome::Positive
        } else {
            Outcome::Negative
        };
        return Ok(Verdict::new(outcome, evidence));
    }
    let outcome = match fit {
        Some(f) => classify(f.exponent + alpha - 1.0, 1.0, opts.margin, false),
        None => Outcome::Inconclusive,
    };
    Ok(Verdict::new(outcome, evidence))
}

/// Whether infinitely many particles leave a site with coalescence measure
/// `lambda` through the moving measure `mu` before any positive time.
/// Death at the site does not affect the answer.
pub fn is_lambda_strong(mu: &Measure, lambda: &Measure) -> Result<Verdict> {
    is_lambda_strong_with(mu, lambda, &CriteriaOptions::default())
}

pub fn is_lambda_strong_with(mu: &Measure, lambda: &Measure, opts: &CriteriaOptions) -> Result<Verdict> {
    if mu.has_atom_at_one() {
        return Err(Error::AtomAtOne("moving measure".into()));
    }
    let cdi = comes_down_with(lambda, opts)?;
    match cdi.outcome {
        Outcome::Negative => return Err(Error::StrengthUndefined("source site".into())),
        Outcome::Inconclusive => {
            return Ok(Verdict::new(
                Outcome::Inconclusive,
                Evidence {
                    method: "unknown".into(),
                    note: Some("coming down of the source site is undecided".into()),
                    ..Evidence::default()
                },
            ))
        }
        Outcome::Positive => {}
    }
    if mu.is_zero() {
        return Ok(Verdict::new(
            Outcome::Negative,
            Evidence {
                method: "convention".into(),
                shortcut: Some("zero measure moves nothing".into()),
                ..Evidence::default()
            },
        ));
    }
    if mu.atom_zero() > 0.0 {
        return Ok(Verdict::new(
            Outcome::Positive,
            Evidence {
                method: "atom-at-zero".into(),
                shortcut: Some("atom at zero is strong for every coalescence measure".into()),
                ..Evidence::default()
            },
        ));
    }
    let neg_log = expected_neg_log(mu)?;
    if neg_log == NegLog::Infinite {
        return Ok(Verdict::new(
            Outcome::Positive,
            Evidence {
                method: "neg-log".into(),
                shortcut: Some("E[-log Y] infinite, strong for every coalescence measure".into()),
                ..Evidence::default()
            },
        ));
    }
    match lambda.regularity() {
        RegularityProfile::Kingman => kingman_strong_test(mu),
        RegularityProfile::Regular { alpha, .. } => series_strong_test_with(mu, alpha, opts),
        RegularityProfile::Unknown => Ok(Verdict::new(
            Outcome::Inconclusive,
            Evidence {
                method: "unknown".into(),
                note: Some("no strength criterion for this coalescence profile".into()),
                value: match neg_log {
                    NegLog::Finite(x) => Some(x),
                    _ => None,
                },
                ..Evidence::default()
            },
        )),
    }
}
