use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use coordsim::bounds::{solve_wn, w_infinity, OmegaSolver};
use coordsim::config::{parse_system, serialize_system, Format};
use coordsim::criteria::{CriteriaOptions, Outcome, Verdict};
use coordsim::experiments::{
    chi_square, estimate_block_speed, estimate_level_hits, estimate_mean_total, exact_visit_probs, migration_sweep, trunc_sweep, zeta_empirical,
};
use coordsim::graph::stays_infinite_with;
use coordsim::measures::ActionKind;
use coordsim::rates::{block_rate, gamma_b, loss_distribution, psi, total_rate};
use coordsim::sim::{simulate_coupled, SimOptions, Simulator, Trajectory};
use coordsim::{Error as CoreError, Measure, SystemSpec};

use crate::args::{Cli, Command};
use crate::manifest::{sha256_hex, sibling, unix_now, RunManifest};
use crate::CliError;

/// What a subcommand produced.
struct Report {
    outputs: Vec<PathBuf>,
    events: u64,
    exit_code: i32,
}

struct Ctx<'a> {
    cli: &'a Cli,
    sys: SystemSpec,
    out: PathBuf,
    reps: u64,
}

impl Ctx<'_> {
    fn csv(&self) -> Result<csv::Writer<File>, CliError> {
        Ok(csv::Writer::from_path(&self.out)?)
    }

    fn summary<T: Serialize>(&self, value: &T) -> Result<PathBuf, CliError> {
        let path = sibling(&self.out, "summary.json");
        write_json(&path, value)?;
        Ok(path)
    }

    fn site_header(&self, prefix: &str) -> Vec<String> {
        self.sys.sites().iter().map(|s| format!("{prefix}{s}")).collect()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Runs the parsed command, writes results and the manifest, and returns the exit code.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<i32, CliError> {
    let started = unix_now();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cmd = &cli.command;
    let system_file = &cmd.system().system;
    let sys = parse_system(system_file)?;
    let config_hash = sha256_hex(serialize_system(&sys, Format::Json)?.as_bytes());
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.{}", cmd.name(), cmd.extension())));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let ctx = Ctx {
        cli,
        sys,
        out: out.clone(),
        reps: cli.reps.unwrap_or_else(|| cmd.default_reps()),
    };
    if ctx.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let result = dispatch(&ctx);
    let (report, error) = match result {
        Ok(r) => (r, None),
        Err(e) => (
            Report {
                outputs: vec![],
                events: 0,
                exit_code: 1,
            },
            Some(e),
        ),
    };
    let mut outputs: Vec<String> = report.outputs.iter().map(|p| p.display().to_string()).collect();
    let manifest_path = sibling(&out, "manifest.json");
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cmd.name().into(),
        flags: serde_json::to_value(cli)?,
        argv,
        seed: cli.seed,
        system_file: system_file.display().to_string(),
        config_hash,
        started_unix: started,
        wall_clock_seconds: unix_now() - started,
        events: report.events,
        outputs,
        exit_code: report.exit_code,
    };
    write_json(&manifest_path, &manifest)?;
    match error {
        Some(e) => Err(e),
        None => Ok(report.exit_code),
    }
}

fn dispatch(ctx: &Ctx) -> Result<Report, CliError> {
    match &ctx.cli.command {
        Command::Rates { max_n, .. } => rates(ctx, *max_n),
        Command::Criteria { margin, numeric_only, .. } => criteria(
            ctx,
            &CriteriaOptions {
                margin: *margin,
                numeric_only: *numeric_only,
                ..CriteriaOptions::default()
            },
        ),
        Command::Simulate { t, max_events, .. } => simulate(ctx, *t, *max_events),
        Command::Couple { initial, t, max_events, .. } => couple(ctx, initial, *t, *max_events),
        Command::Hitprob { n, k, k_max, exact, .. } => hitprob(ctx, *n, *k, k_max.unwrap_or(*k), *exact),
        Command::Migration { t, ns, .. } => migration(ctx, *t, ns),
        Command::Speed { n, times, .. } => speed(ctx, *n, times),
        Command::Meantotal { n, times, dt, .. } => meantotal(ctx, *n, times, *dt),
        Command::Zeta { n, samples, .. } => zeta(ctx, *n, *samples),
        Command::Bound { n, t, dt, every, .. } => bound(ctx, *n, *t, *dt, *every),
        Command::TruncSweep { t, truncs, .. } => truncs_cmd(ctx, *t, truncs),
    }
}

fn kind_of(slot: &str) -> ActionKind {
    match slot.split('.').next() {
        Some("death") => ActionKind::Death,
        Some("migration") => ActionKind::Migration,
        Some("reproduction") => ActionKind::Reproduction,
        _ => ActionKind::Coalescence,
    }
}

fn rates(ctx: &Ctx, max_n: u64) -> Result<Report, CliError> {
    let mut w = ctx.csv()?;
    w.write_record(["slot", "kind", "b", "k", "block_rate", "total_rate"])?;
    let mut speeds = Vec::new();
    for (slot, m) in ctx.sys.measures() {
        if m.is_zero() {
            continue;
        }
        let kind = kind_of(&slot);
        for b in kind.weight().get()..=max_n {
            let total = total_rate(kind, m, b)?;
            for k in kind.weight().get()..=b {
                let r = block_rate(kind, m, b, k)?;
                w.write_record([slot.clone(), kind.name().into(), b.to_string(), k.to_string(), r.to_string(), total.to_string()])?;
            }
        }
        if kind == ActionKind::Coalescence {
            let rows = (2..=max_n.max(2))
                .map(|b| Ok(json!({"b": b, "gamma_b": gamma_b(m, b)?, "psi": psi(m, b as f64)?})))
                .collect::<Result<Vec<_>, CoreError>>()?;
            speeds.push(json!({"slot": slot, "speeds": rows}));
        }
    }
    w.flush()?;
    let summary = ctx.summary(&json!({"max_n": max_n, "coalescence_speeds": speeds}))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events: 0,
        exit_code: 0,
    })
}

fn criteria(ctx: &Ctx, opts: &CriteriaOptions) -> Result<Report, CliError> {
    let sys = &ctx.sys;
    let names = sys.sites();
    let report = stays_infinite_with(sys, opts)?;
    let mut verdicts: Vec<&Verdict> = report.site_verdicts.iter().collect();
    for e in &report.graph.directed {
        verdicts.extend(e.migration.iter());
        verdicts.extend(e.reproduction.iter());
    }
    let undecided = verdicts.iter().filter(|v| v.outcome == Outcome::Inconclusive).count();
    let fraction = undecided as f64 / verdicts.len().max(1) as f64;
    let lambdas: Vec<Measure> = (0..sys.len()).map(|v| sys.coalescence(v).clone()).collect();
    let omega = coordsim::bounds::omega_integral_test(&lambdas, 2.0 * sys.len() as f64).map_err(|e| e.to_string());
    let dominated = report.outcome == Outcome::Inconclusive || fraction > 0.5;
    let exit_code = if dominated { 2 } else { 0 };
    let doc = json!({
        "stays_infinite": {
            "outcome": report.outcome,
            "witness": report.witness.as_ref().map(|p| p.iter().map(|&i| names[i].clone()).collect::<Vec<_>>()),
            "explanation": report.explanation,
        },
        "sites": names.iter().zip(&report.site_verdicts).map(|(n, v)| json!({"site": n, "comes_down": v})).collect::<Vec<_>>(),
        "edges": report.graph.directed.iter().map(|e| json!({
            "from": names[e.from], "to": names[e.to], "outcome": e.outcome,
            "migration": e.migration, "reproduction": e.reproduction,
        })).collect::<Vec<_>>(),
        "interaction_graph": report.graph.edges.iter().map(|&(u, v)| [names[u].clone(), names[v].clone()]).collect::<Vec<_>>(),
        "omega_integral": match &omega { Ok(v) => json!(v), Err(e) => json!({"error": e}) },
        "inconclusive_fraction": fraction,
        "inconclusive_dominated": dominated,
    });
    write_json(&ctx.out, &doc)?;
    Ok(Report {
        outputs: vec![ctx.out.clone()],
        events: 0,
        exit_code,
    })
}

fn trajectory_rows(w: &mut csv::Writer<File>, rep: u64, traj: &Trajectory) -> Result<(), CliError> {
    let mut counts = traj.initial.counts.clone();
    let mut row = |time: f64, class: &str, from: String, to: String, z: String, k: String, counts: &[u64]| -> Result<(), CliError> {
        let mut r = vec![rep.to_string(), time.to_string(), class.to_string(), from, to, z, k];
        r.extend(counts.iter().map(|c| c.to_string()));
        w.write_record(r)?;
        Ok(())
    };
    row(0.0, "init", String::new(), String::new(), String::new(), String::new(), &counts)?;
    for e in &traj.events {
        for &(s, c) in &e.after {
            counts[s] = c;
        }
        let to = e.action.target().map(|t| t.to_string()).unwrap_or_default();
        let z = e.z.map(|z| z.to_string()).unwrap_or_default();
        row(e.time, e.action.name(), e.action.source().to_string(), to, z, e.k.to_string(), &counts)?;
    }
    Ok(())
}

fn simulate(ctx: &Ctx, t: f64, max_events: u64) -> Result<Report, CliError> {
    let sim = Simulator::new(&ctx.sys)?;
    let opts = SimOptions {
        t_max: t,
        n_trunc: ctx.cli.trunc,
        max_events,
    };
    let initial = ctx.sys.initial_counts(ctx.cli.trunc);
    let runs: Vec<_> = (0..ctx.reps)
        .into_par_iter()
        .map(|rep| sim.simulate(initial.clone(), &opts, ctx.cli.seed, rep))
        .collect();
    let mut w = ctx.csv()?;
    let mut header: Vec<String> = ["rep", "time", "class", "site_from", "site_to", "z", "K"].map(String::from).to_vec();
    header.extend(ctx.site_header("count_"));
    w.write_record(&header)?;
    let mut events = 0;
    let mut failure = None;
    for (rep, r) in runs.into_iter().enumerate() {
        match r {
            Ok(traj) => {
                events += traj.events.len() as u64;
                trajectory_rows(&mut w, rep as u64, &traj)?;
            }
            Err(CoreError::EventBudgetExceeded { budget, time, partial }) => {
                // keep the partial path, then fail
                events += partial.events.len() as u64;
                trajectory_rows(&mut w, rep as u64, &partial)?;
                failure.get_or_insert(CoreError::EventBudgetExceeded { budget, time, partial });
            }
            Err(e) => return Err(e.into()),
        }
    }
    w.flush()?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(Report {
        outputs: vec![ctx.out.clone()],
        events,
        exit_code: 0,
    })
}

fn parse_counts(s: &str, sites: usize) -> Result<Vec<u64>, CliError> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|e| CliError::Usage(format!("bad count `{x}` in `{s}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != sites {
        return Err(CliError::Usage(format!("`{s}` has {} counts for {sites} sites", v.len())));
    }
    Ok(v)
}

fn couple(ctx: &Ctx, initial: &[String], t: f64, max_events: u64) -> Result<Report, CliError> {
    let n = ctx.sys.len();
    let configs: Vec<Vec<u64>> = if initial.is_empty() {
        let full = ctx.sys.initial_counts(ctx.cli.trunc);
        vec![full.iter().map(|c| c / 2).collect(), full]
    } else {
        initial.iter().map(|s| parse_counts(s, n)).collect::<Result<_, _>>()?
    };
    let sim = Simulator::new(&ctx.sys)?;
    let runs: Vec<_> = (0..ctx.reps)
        .into_par_iter()
        .map(|rep| simulate_coupled(&sim, &configs, t, max_events, ctx.cli.seed, rep))
        .collect();
    let mut w = ctx.csv()?;
    let mut header: Vec<String> = ["rep", "copy", "events"].map(String::from).to_vec();
    header.extend(ctx.site_header("count_"));
    w.write_record(&header)?;
    let mut violations = Vec::new();
    let mut events = 0;
    for (rep, r) in runs.into_iter().enumerate() {
        match r {
            Ok(trajs) => {
                for (copy, tr) in trajs.iter().enumerate() {
                    events += tr.events.len() as u64;
                    let mut row = vec![rep.to_string(), copy.to_string(), tr.events.len().to_string()];
                    row.extend(tr.terminal.counts.iter().map(|c| c.to_string()));
                    w.write_record(row)?;
                }
            }
            Err(CoreError::OrderingViolation { event, time }) => violations.push(json!({"rep": rep, "event": event, "time": time})),
            Err(e) => return Err(e.into()),
        }
    }
    w.flush()?;
    let summary = ctx.summary(&json!({"configs": configs, "reps": ctx.reps, "violations": violations}))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events,
        exit_code: if violations.is_empty() { 0 } else { 1 },
    })
}

fn single_site(sys: &SystemSpec, what: &str) -> Result<(Measure, Measure), CliError> {
    if sys.len() != 1 {
        return Err(CliError::Usage(format!("{what} needs a one-site system, got {} sites", sys.len())));
    }
    Ok((sys.coalescence(0).clone(), sys.death(0).clone()))
}

fn hitprob(ctx: &Ctx, n: u64, k: u64, k_max: u64, exact: bool) -> Result<Report, CliError> {
    let (lambda, death) = single_site(&ctx.sys, "hitprob")?;
    let hits = estimate_level_hits(&lambda, &death, n, k, k_max, ctx.reps, ctx.cli.seed)?;
    let exact_probs = if exact { Some(exact_visit_probs(&lambda, &death, n, k)?) } else { None };
    let mut w = ctx.csv()?;
    w.write_record(["k", "p", "wilson_lower", "wilson_upper", "exact"])?;
    for (i, (level, e)) in hits.levels.iter().enumerate() {
        let ex = exact_probs.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        w.write_record([level.to_string(), e.value.to_string(), e.lower.to_string(), e.upper.to_string(), ex])?;
    }
    w.flush()?;
    let width = (k_max - k + 1) as usize;
    let exact_average = exact_probs.map(|v| v[..width].iter().sum::<f64>() / width as f64);
    let summary = ctx.summary(&json!({"n": n, "k": k, "k_max": k_max, "average": hits.average, "exact_average": exact_average}))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events: hits.events,
        exit_code: 0,
    })
}

fn migration(ctx: &Ctx, t: f64, ns: &[u64]) -> Result<Report, CliError> {
    let sweep = migration_sweep(&ctx.sys, ns, t, ctx.reps, ctx.cli.seed)?;
    let mut w = ctx.csv()?;
    w.write_record(["n_start", "median", "mean", "lower", "upper"])?;
    for s in &sweep.samples {
        w.write_record([s.n_start.to_string(), s.median.to_string(), s.mean.value.to_string(), s.mean.lower.to_string(), s.mean.upper.to_string()])?;
    }
    w.flush()?;
    let largest = sweep.samples.iter().max_by_key(|s| s.n_start);
    let summary = ctx.summary(&json!({
        "t": t,
        "band_exponent": sweep.band_exponent,
        "median_slope": sweep.median_slope,
        "threshold": sweep.threshold,
        "growing": sweep.growing,
        "bands": largest.map(|s| &s.bands),
    }))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events: sweep.samples.iter().map(|s| s.events).sum(),
        exit_code: 0,
    })
}

fn speed(ctx: &Ctx, n: u64, times: &[f64]) -> Result<Report, CliError> {
    let (lambda, _) = single_site(&ctx.sys, "speed")?;
    let (rows, events) = estimate_block_speed(&lambda, n, times, ctx.reps, ctx.cli.seed)?;
    let mut w = ctx.csv()?;
    w.write_record(["t", "mean", "se", "normalized"])?;
    for r in &rows {
        let norm = r.normalized.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([r.t.to_string(), r.mean.to_string(), r.se.to_string(), norm])?;
    }
    w.flush()?;
    Ok(Report {
        outputs: vec![ctx.out.clone()],
        events,
        exit_code: 0,
    })
}

fn omega_solver(sys: &SystemSpec, x_max: f64) -> Result<OmegaSolver<f64>, CliError> {
    let lambdas: Vec<Measure> = (0..sys.len()).map(|v| sys.coalescence(v).clone()).collect();
    Ok(OmegaSolver::new(&lambdas, x_max)?)
}

fn meantotal(ctx: &Ctx, n: u64, times: &[f64], dt: f64) -> Result<Report, CliError> {
    let (rows, events) = estimate_mean_total(&ctx.sys, n, times, ctx.reps, ctx.cli.seed)?;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let solver = omega_solver(&ctx.sys, (n * ctx.sys.len() as u64) as f64)?;
    let w_at = if t_max > 0.0 {
        let sol = solve_wn(&solver, n, t_max, dt, 1)?;
        let step = sol.times.get(1).copied().unwrap_or(t_max);
        times
            .iter()
            .map(|&t| sol.values[((t / step).round() as usize).min(sol.values.len() - 1)])
            .collect()
    } else {
        vec![(n * ctx.sys.len() as u64) as f64; times.len()]
    };
    let mut w = ctx.csv()?;
    w.write_record(["t", "mean", "se", "w_n", "within_3se"])?;
    let mut all_ok = true;
    for (r, wn) in rows.iter().zip(&w_at) {
        let ok = r.mean <= wn + 3.0 * r.se;
        all_ok &= ok;
        w.write_record([r.t.to_string(), r.mean.to_string(), r.se.to_string(), wn.to_string(), ok.to_string()])?;
    }
    w.flush()?;
    let summary = ctx.summary(&json!({"n": n, "dt": dt, "mean_below_bound": all_ok}))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events,
        exit_code: 0,
    })
}

fn zeta(ctx: &Ctx, n: u64, samples: u64) -> Result<Report, CliError> {
    let (lambda, death) = single_site(&ctx.sys, "zeta")?;
    let emp = zeta_empirical(&lambda, &death, n, samples, ctx.cli.seed)?;
    let exact = loss_distribution(&lambda, &death, n)?;
    let chi = chi_square(&emp, &exact)?;
    let mut w = ctx.csv()?;
    w.write_record(["k", "observed", "frequency", "zeta"])?;
    for k in 1..=n {
        w.write_record([k.to_string(), emp.counts[(k - 1) as usize].to_string(), emp.frequency(k).to_string(), exact.get(k).to_string()])?;
    }
    w.flush()?;
    let summary = ctx.summary(&json!({"n": n, "samples": samples, "chi_square": chi}))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events: samples,
        exit_code: 0,
    })
}

fn bound(ctx: &Ctx, n: u64, t: f64, dt: f64, every: usize) -> Result<Report, CliError> {
    let solver = omega_solver(&ctx.sys, (n * ctx.sys.len() as u64) as f64)?;
    let sol = solve_wn(&solver, n, t, dt, every)?;
    let mut w = ctx.csv()?;
    w.write_record(["t", "w_n", "omega"])?;
    for ((ti, wi), oi) in sol.times.iter().zip(&sol.values).zip(&sol.omegas) {
        w.write_record([ti.to_string(), wi.to_string(), oi.to_string()])?;
    }
    w.flush()?;
    let w_inf = w_infinity(&solver, t).ok();
    let summary = ctx.summary(&json!({
        "n": n, "t": t, "dt": dt,
        "richardson_error": sol.richardson_error,
        "below_floor": sol.below_floor,
        "w_infinity": w_inf,
    }))?;
    Ok(Report {
        outputs: vec![ctx.out.clone(), summary],
        events: 0,
        exit_code: 0,
    })
}

fn truncs_cmd(ctx: &Ctx, t: f64, truncs: &[u64]) -> Result<Report, CliError> {
    let rows = trunc_sweep(&ctx.sys, truncs, t, ctx.reps, ctx.cli.seed)?;
    let mut w = ctx.csv()?;
    let mut header = vec!["n_trunc".to_string()];
    header.extend(ctx.site_header("mean_"));
    header.extend(ctx.site_header("se_"));
    w.write_record(&header)?;
    for r in &rows {
        let mut row = vec![r.n_trunc.to_string()];
        row.extend(r.means.iter().map(|x| x.to_string()));
        row.extend(r.ses.iter().map(|x| x.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(Report {
        outputs: vec![ctx.out.clone()],
        events: rows.iter().map(|r| r.events).sum(),
        exit_code: 0,
    })
}
