//! Interaction graph and the stays-infinite decision.
//!
//! A site started at infinity keeps infinitely many particles forever if a
//! chain of strong migration or reproduction edges leads from it to a site
//! that does not come down. Without reproduction that condition is also
//! necessary, which gives the Negative answers.

use std::collections::VecDeque;

use serde::Serialize;

use crate::criteria::{comes_down_with, is_lambda_strong_with, CriteriaOptions, Evidence, Outcome, Verdict};
use crate::error::Result;
use crate::system::SystemSpec;

/// Directed edge `from -> to` with its strength verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongEdge {
    pub from: usize,
    pub to: usize,
    pub migration: Option<Verdict>,
    pub reproduction: Option<Verdict>,
    /// Strong if either measure is strong.
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionGraph {
    /// Undirected edges `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub directed: Vec<StrongEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaysInfiniteReport {
    pub outcome: Outcome,
    /// Site indices `v1 .. vk` of a strong path ending at a site that does not come down.
    pub witness: Option<Vec<usize>>,
    pub explanation: String,
    pub site_verdicts: Vec<Verdict>,
    pub graph: InteractionGraph,
}

fn moves(sys: &SystemSpec, u: usize, v: usize) -> bool {
    !sys.migration(u, v).is_zero() || !sys.reproduction(u, v).is_zero()
}

/// Undirected edges between distinct sites with any migration or reproduction mass.
pub fn build_interaction_graph(sys: &SystemSpec) -> InteractionGraph {
    let n = sys.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if moves(sys, u, v) || moves(sys, v, u) {
                edges.push((u, v));
            }
        }
    }
    InteractionGraph {
        edges,
        directed: Vec::new(),
    }
}

/// Coming-down verdict per site; zero coalescence counts as not coming down.
pub fn site_verdicts(sys: &SystemSpec) -> Result<Vec<Verdict>> {
    site_verdicts_with(sys, &CriteriaOptions::default())
}

pub fn site_verdicts_with(sys: &SystemSpec, opts: &CriteriaOptions) -> Result<Vec<Verdict>> {
    (0..sys.len()).map(|v| comes_down_with(sys.coalescence(v), opts)).collect()
}

fn edge_verdict(sys: &SystemSpec, site: &Verdict, u: usize, v: usize, opts: &CriteriaOptions) -> Result<StrongEdge> {
    let lambda = sys.coalescence(u);
    let judge = |m: &crate::Measure| -> Result<Option<Verdict>> {
        if m.is_zero() {
            return Ok(None);
        }
        match site.outcome {
            Outcome::Positive => is_lambda_strong_with(m, lambda, opts).map(Some),
            // strength is only defined at sites that come down
            _ => Ok(Some(Verdict {
                outcome: Outcome::Inconclusive,
                evidence: Evidence {
                    method: "unknown".into(),
                    note: Some("source site does not come down".into()),
                    ..Evidence::default()
                },
            })),
        }
    };
    let migration = judge(sys.migration(u, v))?;
    let reproduction = judge(sys.reproduction(u, v))?;
    let outcomes: Vec<Outcome> = [&migration, &reproduction].iter().filter_map(|x| x.as_ref().map(|v| v.outcome)).collect();
    let outcome = if outcomes.contains(&Outcome::Positive) {
        Outcome::Positive
    } else if outcomes.contains(&Outcome::Inconclusive) {
        Outcome::Inconclusive
    } else {
        Outcome::Negative
    };
    Ok(StrongEdge {
        from: u,
        to: v,
        migration,
        reproduction,
        outcome,
    })
}

/// Shortest path over edges whose outcome is in `allowed`, from any source to any target.
fn bfs(n: usize, sources: &[usize], targets: &[bool], edges: &[StrongEdge], allowed: &[Outcome]) -> Option<Vec<usize>> {
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        if targets[u] {
            let mut path = vec![u];
            let mut cur = u;
            while let Some(p) = prev[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for e in edges.iter().filter(|e| e.from == u && allowed.contains(&e.outcome)) {
            if !seen[e.to] {
                seen[e.to] = true;
                prev[e.to] = Some(u);
                queue.push_back(e.to);
            }
        }
    }
    None
}

/// Decides whether some site started at infinity stays infinite.
pub fn stays_infinite(sys: &SystemSpec) -> Result<StaysInfiniteReport> {
    stays_infinite_with(sys, &CriteriaOptions::default())
}

pub fn stays_infinite_with(sys: &SystemSpec, opts: &CriteriaOptions) -> Result<StaysInfiniteReport> {
    sys.ensure_no_atom_at_one()?;
    let n = sys.len();
    let sites = site_verdicts_with(sys, opts)?;
    let mut graph = build_interaction_graph(sys);
    for u in 0..n {
        for v in 0..n {
            if u != v && moves(sys, u, v) {
                graph.directed.push(edge_verdict(sys, &sites[u], u, v, opts)?);
            }
        }
    }
    let sources: Vec<usize> = (0..n).filter(|&v| sys.initial()[v].is_infinite()).collect();
    let report = |outcome, witness, explanation: String, graph| StaysInfiniteReport {
        outcome,
        witness,
        explanation,
        site_verdicts: sites.clone(),
        graph,
    };
    if sources.is_empty() {
        return Ok(report(
            Outcome::Negative,
            None,
            "no site starts with infinitely many particles".into(),
            graph,
        ));
    }
    let non_cdi: Vec<bool> = sites.iter().map(|v| v.outcome == Outcome::Negative).collect();
    if let Some(path) = bfs(n, &sources, &non_cdi, &graph.directed, &[Outcome::Positive]) {
        let names: Vec<&str> = path.iter().map(|&i| sys.sites()[i].as_str()).collect();
        return Ok(report(
            Outcome::Positive,
            Some(path),
            format!("strong path {} ends at a site that does not come down", names.join(" -> ")),
            graph,
        ));
    }
    let maybe: Vec<bool> = sites.iter().map(|v| v.outcome != Outcome::Positive).collect();
    let undecided = bfs(
        n,
        &sources,
        &maybe,
        &graph.directed,
        &[Outcome::Positive, Outcome::Inconclusive],
    );
    if undecided.is_some() {
        return Ok(report(
            Outcome::Inconclusive,
            None,
            "a candidate path depends on an undecided verdict".into(),
            graph,
        ));
    }
    if sys.has_reproduction() {
        return Ok(report(
            Outcome::Inconclusive,
            None,
            "no strong path found, but reproduction is present so absence of a path is not decisive".into(),
            graph,
        ));
    }
    Ok(report(
        Outcome::Negative,
        None,
        "every strong path from an infinite site stays within sites that come down".into(),
        graph,
    ))
}
