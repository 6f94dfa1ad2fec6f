//! End-to-end checks of the quantitative claims. Each test prints one
//! `PASS`/`FAIL criterion N` line before asserting, so `--nocapture` gives
//! a compact report.

mod common;

use std::path::Path;

use common::{arb_coal, arb_measure, arb_move, rel_err, Coal, Move};
use coordsim::bounds::{kingman_wn, solve_wn, OmegaSolver};
use coordsim::config::parse_system;
use coordsim::criteria::{comes_down, moment_1mw, series_strong_test, kingman_strong_test, Outcome};
use coordsim::experiments::{
    chi_square, estimate_block_speed, estimate_level_hits, estimate_mean_total, exact_visit_probs, migration_sweep,
    migration_system, zeta_empirical,
};
use coordsim::graph::stays_infinite;
use coordsim::measures::ActionKind;
use coordsim::quadrature::Quadrature;
use coordsim::rates::{block_rate, gamma_b, ln_choose, loss_distribution, psi, total_rate, zeta, zeta_limit};
use coordsim::sim::{simulate_coupled, Simulator};
use coordsim::{Error, InitialCount, Measure, SystemSpec};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

fn report(n: u32, ok: bool, detail: String) {
    println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n}: {detail}");
}

/// Deterministic draws from a test-corpus strategy.
fn draw<S: Strategy>(strategy: &S, runner: &mut TestRunner) -> S::Value {
    strategy.new_tree(runner).unwrap().current()
}

fn config(name: &str) -> SystemSpec {
    parse_system(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn criterion_01_rate_identities() {
    let mut runner = TestRunner::deterministic();
    let corpus: Vec<Measure> = (0..50).map(|_| draw(&arb_measure(), &mut runner)).collect();
    let kinds = [ActionKind::Coalescence, ActionKind::Death, ActionKind::Migration, ActionKind::Reproduction];
    let mut worst_sum = 0.0f64;
    let mut worst_psi = 0.0f64;
    for m in &corpus {
        for kind in kinds {
            for b in kind.weight().get()..=60 {
                let total = total_rate(kind, m, b).unwrap();
                let sum: f64 = (kind.weight().get()..=b)
                    .map(|k| ln_choose(b, k).exp() * block_rate(kind, m, b, k).unwrap())
                    .sum();
                worst_sum = worst_sum.max(rel_err(total, sum));
            }
        }
        for b in 2..=200 {
            worst_psi = worst_psi.max(rel_err(gamma_b(m, b).unwrap(), psi(m, b as f64).unwrap()));
        }
    }
    report(
        1,
        worst_sum <= 1e-8 && worst_psi <= 1e-8,
        format!("50 measures, worst binomial-sum rel. error {worst_sum:.2e}, worst gamma_b/psi rel. error {worst_psi:.2e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_02_coming_down() {
    let kingman = comes_down(&Measure::kingman(1.0).unwrap()).unwrap();
    let sum = kingman.evidence.value.unwrap_or(f64::NAN);
    let last_partial = kingman.evidence.partial_sums.last().map(|p| p.1).unwrap_or(f64::NAN);
    let uniform = comes_down(&Measure::uniform()).unwrap();
    let betas: Vec<(f64, Outcome)> = [1.25, 1.5, 1.75]
        .iter()
        .map(|&a| (a, comes_down(&Measure::beta(2.0 - a, a, 1.0).unwrap()).unwrap().outcome))
        .collect();
    let ok = kingman.outcome == Outcome::Positive
        && sum == 2.0
        && (last_partial - 2.0).abs() < 1e-3
        && uniform.outcome == Outcome::Negative
        && betas.iter().all(|b| b.1 == Outcome::Positive);
    report(
        2,
        ok,
        format!(
            "Kingman {:?} (sum {sum}, partial {last_partial:.6}), Uniform {:?}, Beta {betas:?}",
            kingman.outcome, uniform.outcome
        ),
    );
}

#[test]
fn criterion_03_hitting_limit() {
    let lambda = Measure::beta(0.5, 1.5, 1.0).unwrap();
    let death = Measure::constant(0.5).unwrap();
    let hits = estimate_level_hits(&lambda, &death, 2000, 50, 100, 10_000, 2024).unwrap();
    let exact = exact_visit_probs(&lambda, &death, 2000, 50).unwrap();
    let exact_avg = exact[..=50].iter().sum::<f64>() / 51.0;
    let avg = hits.average.value;
    report(
        3,
        (avg - 0.5).abs() <= 0.03,
        format!(
            "average level-hit probability over k in [50,100] = {avg:.4} ± {:.4} (exact chain {exact_avg:.4}), target 0.5 ± 0.03",
            2.0 * hits.average.std_error()
        ),
    );
}

#[test]
fn criterion_04_loss_law() {
    let mut worst = 0.0f64;
    for alpha in [1.25, 1.5, 1.75] {
        let lambda = Measure::beta_coalescent(alpha).unwrap();
        for k in 1..=10 {
            let z = zeta(&lambda, &Measure::zero(), 10_000, k).unwrap();
            worst = worst.max(rel_err(z, zeta_limit(alpha, k).unwrap()));
        }
    }
    let lambda = Measure::beta_coalescent(1.5).unwrap();
    let death = Measure::constant(0.5).unwrap();
    let emp = zeta_empirical(&lambda, &death, 30, 100_000, 7).unwrap();
    let chi = chi_square(&emp, &loss_distribution(&lambda, &death, 30).unwrap()).unwrap();
    report(
        4,
        worst <= 0.01 && chi.p_value > 0.001,
        format!(
            "worst rel. gap of zeta_(10^4,k) to its limit {worst:.2e} (tol 1e-2); chi-square {:.2} on {} dof, p = {:.4}",
            chi.statistic, chi.dof, chi.p_value
        ),
    );
}

#[test]
fn criterion_05_strength_dichotomy() {
    let beta = Measure::beta_coalescent(1.5).unwrap();
    let steep = Measure::power_law(1.0, 0.75).unwrap();
    let flat = Measure::power_law(1.0, 0.25).unwrap();
    let v_strong = series_strong_test(&steep, 1.5).unwrap().outcome;
    let v_weak = series_strong_test(&flat, 1.5).unwrap().outcome;
    let v_kingman = kingman_strong_test(&steep).unwrap().outcome;
    let ns = [250, 500, 1000, 2000, 4000];
    let sweep = |lambda: &Measure, m: &Measure, seed| {
        let sys = migration_system(lambda, &Measure::zero(), m).unwrap();
        let s = migration_sweep(&sys, &ns, 0.5, 1000, seed).unwrap();
        s.band_exponent.map(|f| f.exponent).unwrap_or(f64::NAN)
    };
    let e_strong = sweep(&beta, &steep, 51);
    let e_weak = sweep(&beta, &flat, 52);
    let e_kingman = sweep(&Measure::kingman(1.0).unwrap(), &steep, 53);
    let ok = v_strong == Outcome::Positive
        && v_weak == Outcome::Negative
        && v_kingman == Outcome::Negative
        && e_strong > 0.05
        && e_weak < 0.05
        && e_kingman < 0.05;
    report(
        5,
        ok,
        format!(
            "verdicts {v_strong:?}/{v_weak:?}/{v_kingman:?}; migration band exponents {e_strong:.3}/{e_weak:.3}/{e_kingman:.3} (threshold 0.05)"
        ),
    );
}

fn random_system(runner: &mut TestRunner) -> SystemSpec {
    use proptest::prelude::*;
    let n = draw(&(1usize..=3), runner);
    let slot = prop_oneof![2 => Just(None), 1 => arb_measure().prop_map(Some)];
    let mut sys = SystemSpec::new((0..n).map(|i| format!("s{i}"))).unwrap();
    for v in 0..n {
        if let Some(m) = draw(&slot, runner) {
            sys.set_coalescence(v, m).unwrap();
        }
        if let Some(m) = draw(&slot, runner) {
            sys.set_death(v, m).unwrap();
        }
        for u in 0..n {
            if let (Some(m), true) = (draw(&slot, runner), u != v) {
                sys.set_migration(v, u, m).unwrap();
            }
            if let Some(m) = draw(&slot, runner) {
                let mild = Measure::new(0.2 * m.atom_zero(), m.atoms().iter().map(|a| (a.0, 0.2 * a.1)).collect(), Default::default()).unwrap();
                sys.set_reproduction(v, u, mild).unwrap();
            }
        }
    }
    sys
}

#[test]
fn criterion_06_monotone_coupling() {
    let mut runner = TestRunner::deterministic();
    let mut pairs = 0;
    let mut violations = 0;
    let mut over_budget = 0;
    for s in 0..100u64 {
        let sys = random_system(&mut runner);
        let sim = Simulator::new(&sys).unwrap();
        let n = sys.len();
        for r in 0..10u64 {
            let lo = draw(&proptest::collection::vec(0u64..40, n), &mut runner);
            let gap = draw(&proptest::collection::vec(0u64..20, n), &mut runner);
            let hi: Vec<u64> = lo.iter().zip(&gap).map(|(a, b)| a + b).collect();
            pairs += 1;
            match simulate_coupled(&sim, &[lo, hi], 1.0, 1_000_000, s, r) {
                Ok(paths) => {
                    let times = paths.iter().flat_map(|p| p.events.iter().map(|e| e.time));
                    for t in times.chain([0.0, 1.0]) {
                        let (a, b) = (paths[0].counts_at(t), paths[1].counts_at(t));
                        if a.iter().zip(&b).any(|(x, y)| x > y) {
                            violations += 1;
                            break;
                        }
                    }
                }
                Err(Error::OrderingViolation { .. }) => violations += 1,
                Err(Error::EventBudgetExceeded { .. }) => over_budget += 1,
                Err(e) => panic!("{e}"),
            }
        }
    }
    report(
        6,
        violations == 0 && over_budget == 0,
        format!("{pairs} coupled pairs on 100 random systems, {violations} ordering violations, {over_budget} over the event budget"),
    );
}

#[test]
fn criterion_07_speed_law() {
    let (rows, _) = estimate_block_speed(&Measure::kingman(1.0).unwrap(), 5000, &[0.01], 1000, 77).unwrap();
    let v = rows[0].normalized.unwrap();
    report(7, (0.9..=1.1).contains(&v), format!("Kingman n = 5000, mean N(0.01) * 0.01 / 2 = {v:.4} (window [0.9, 1.1])"));
}

#[test]
fn criterion_08_ode_comparison() {
    let s = OmegaSolver::new(&[Measure::kingman(1.0).unwrap()], 1000.0).unwrap();
    let sol = solve_wn(&s, 1000, 0.5, 1e-4, 1000).unwrap();
    let rk4 = *sol.values.last().unwrap();
    let closed = kingman_wn(1.0, 1000.0, 0.5);
    let ode_err = (rk4 - closed).abs();

    let sys = config("two_kingman.toml");
    let n = 1000;
    let times = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
    let (rows, _) = estimate_mean_total(&sys, n, &times, 1000, 88).unwrap();
    let lambdas: Vec<Measure> = (0..sys.len()).map(|v| sys.coalescence(v).clone()).collect();
    let two = OmegaSolver::new(&lambdas, 2.0 * n as f64).unwrap();
    let sol = solve_wn(&two, n, 1.0, 1e-4, 100).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for r in &rows {
        let i = (r.t / 0.01).round() as usize;
        worst = worst.max((r.mean - sol.values[i]) / r.se);
    }
    report(
        8,
        ode_err <= 1e-6 && worst <= 3.0,
        format!("RK4 vs closed form at t = 0.5: {ode_err:.2e} (tol 1e-6); largest (mean - w_n)/SE on two_kingman = {worst:.2} (must be <= 3)"),
    );
}

#[derive(Debug)]
struct Layout {
    coal: Vec<Coal>,
    infinite: Vec<bool>,
    moves: Vec<Vec<Move>>,
}

impl Layout {
    fn strong(&self, u: usize, v: usize) -> bool {
        self.coal[u].comes_down() && self.moves[u][v].strong_against(self.coal[u])
    }

    fn witness_exists(&self) -> bool {
        fn dfs(l: &Layout, u: usize, seen: &mut Vec<bool>) -> bool {
            if !l.coal[u].comes_down() {
                return true;
            }
            seen[u] = true;
            let found = (0..l.coal.len()).any(|v| v != u && !seen[v] && l.strong(u, v) && dfs(l, v, seen));
            seen[u] = false;
            found
        }
        let n = self.coal.len();
        (0..n).any(|s| self.infinite[s] && dfs(self, s, &mut vec![false; n]))
    }
}

#[test]
fn criterion_09_stays_infinite() {
    let mut a = SystemSpec::new(["u", "v"]).unwrap();
    a.set_coalescence(0, Measure::beta(0.5, 1.5, 1.0).unwrap()).unwrap();
    a.set_migration(0, 1, Measure::power_law(1.0, 0.75).unwrap()).unwrap();
    a.set_initial(0, InitialCount::Infinite).unwrap();
    let mut b = SystemSpec::new(["v"]).unwrap();
    b.set_coalescence(0, Measure::kingman(1.0).unwrap()).unwrap();
    b.set_initial(0, InitialCount::Infinite).unwrap();
    let mut c = SystemSpec::new(["u", "v"]).unwrap();
    c.set_coalescence(0, Measure::kingman(1.0).unwrap()).unwrap();
    c.set_migration(0, 1, Measure::kingman(0.5).unwrap()).unwrap();
    c.set_initial(0, InitialCount::Infinite).unwrap();
    let ra = stays_infinite(&a).unwrap();
    let rb = stays_infinite(&b).unwrap();
    let rc = stays_infinite(&c).unwrap();
    let worked = ra.outcome == Outcome::Positive
        && ra.witness == Some(vec![0, 1])
        && rb.outcome == Outcome::Negative
        && rb.witness.is_none()
        && rc.outcome == Outcome::Positive
        && rc.witness == Some(vec![0, 1]);

    let mut runner = TestRunner::deterministic();
    let mut agree = 0;
    let mut positives = 0;
    for _ in 0..100 {
        let n = draw(&(1usize..=5), &mut runner);
        let layout = Layout {
            coal: (0..n).map(|_| draw(&arb_coal(), &mut runner)).collect(),
            infinite: (0..n).map(|_| draw(&proptest::bool::ANY, &mut runner)).collect(),
            moves: (0..n).map(|_| (0..n).map(|_| draw(&arb_move(), &mut runner)).collect()).collect(),
        };
        let mut sys = SystemSpec::new((0..n).map(|i| format!("s{i}"))).unwrap();
        for u in 0..n {
            sys.set_coalescence(u, layout.coal[u].measure()).unwrap();
            if layout.infinite[u] {
                sys.set_initial(u, InitialCount::Infinite).unwrap();
            }
            for v in 0..n {
                if u != v && layout.moves[u][v] != Move::Zero {
                    sys.set_migration(u, v, layout.moves[u][v].measure()).unwrap();
                }
            }
        }
        let expected = layout.witness_exists();
        positives += expected as u32;
        let got = stays_infinite(&sys).unwrap().outcome;
        if got == if expected { Outcome::Positive } else { Outcome::Negative } {
            agree += 1;
        }
    }
    report(
        9,
        worked && agree == 100,
        format!(
            "worked examples {:?}/{:?}/{:?}; exhaustive-path oracle agrees on {agree}/100 random systems ({positives} stay infinite)",
            ra.outcome, rb.outcome, rc.outcome
        ),
    );
}

#[test]
fn criterion_10_power_law_bracketing() {
    let gamma = 0.75;
    let m = Measure::power_law(1.0, gamma).unwrap();
    let scaled: Vec<f64> = (0..=20)
        .map(|j| {
            let n = 1u64 << j;
            (n as f64).powf(1.0 - gamma) * moment_1mw(&m, n).unwrap()
        })
        .collect();
    let cauchy = rel_err(scaled[20], scaled[19]);
    // (1/|M|) ∫_0^∞ (1 - e^-u) u^(-1-γ) du with |M| = 1/(1-γ), split at 1
    let quad = Quadrature::with_rel_tol(1e-12);
    let f = |u: f64| -(-u).exp_m1() * u.powf(-1.0 - gamma);
    let limit = (1.0 - gamma) * (quad.integrate(f, 0.0, 1.0).unwrap() + quad.integrate_to_infinity(f, 1.0).unwrap());
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(0.0, f64::max);
    let gap = rel_err(scaled[20], limit);
    report(
        10,
        cauchy <= 1e-3 && gap <= 0.01,
        format!(
            "n^(1-γ) E[(1-W)^n] at n = 2^20: {:.6}, step from 2^19 {cauchy:.2e} (tol 1e-3), quadrature limit {limit:.6} (gap {gap:.2e}, tol 1e-2), bracket [{lo:.4}, {hi:.4}]",
            scaled[20]
        ),
    );
}
