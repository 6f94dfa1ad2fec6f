//! Site graph description: per-site coalescence and death measures, per-pair
//! migration and reproduction measures, and the initial configuration.

use crate::error::{Error, Result};
use crate::measures::{ActionKind, MeasureSpec};

pub type Measure = MeasureSpec<f64>;

/// Initial particle count at a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCount {
    Finite(u64),
    Infinite,
}

impl InitialCount {
    pub fn is_infinite(self) -> bool {
        matches!(self, InitialCount::Infinite)
    }

    /// The count after replacing `∞` by `n_trunc`.
    pub fn truncate(self, n_trunc: u64) -> u64 {
        match self {
            InitialCount::Finite(n) => n,
            InitialCount::Infinite => n_trunc,
        }
    }
}

/// A coordinated particle system on a finite set of sites.
///
/// `migration[u][v]` moves particles from `u` to `v`; `reproduction[u][v]`
/// lets particles at `u` place offspring at `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    sites: Vec<String>,
    coalescence: Vec<Measure>,
    death: Vec<Measure>,
    migration: Vec<Vec<Measure>>,
    reproduction: Vec<Vec<Measure>>,
    initial: Vec<InitialCount>,
}

impl SystemSpec {
    /// All measures zero, all sites empty.
    pub fn new<S: Into<String>>(sites: impl IntoIterator<Item = S>) -> Result<Self> {
        let sites: Vec<String> = sites.into_iter().map(Into::into).collect();
        if sites.is_empty() {
            return Err(Error::Validation("a system needs at least one site".into()));
        }
        for (i, s) in sites.iter().enumerate() {
            if sites[..i].contains(s) {
                return Err(Error::Validation(format!("duplicate site name `{s}`")));
            }
        }
        let n = sites.len();
        let zero = |kind| Measure::zero().with_label(kind);
        Ok(Self {
            coalescence: vec![zero(ActionKind::Coalescence); n],
            death: vec![zero(ActionKind::Death); n],
            migration: vec![vec![zero(ActionKind::Migration); n]; n],
            reproduction: vec![vec![zero(ActionKind::Reproduction); n]; n],
            initial: vec![InitialCount::Finite(0); n],
            sites,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[String] {
        &self.sites
    }

    pub fn site_index(&self, name: &str) -> Result<usize> {
        self.sites
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Validation(format!("unknown site `{name}`")))
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.len() {
            Err(Error::Validation(format!("site index {v} out of range")))
        } else {
            Ok(())
        }
    }

    pub fn set_coalescence(&mut self, v: usize, m: Measure) -> Result<&mut Self> {
        self.check(v)?;
        self.coalescence[v] = m.with_label(ActionKind::Coalescence);
        Ok(self)
    }

    pub fn set_death(&mut self, v: usize, m: Measure) -> Result<&mut Self> {
        self.check(v)?;
        self.death[v] = m.with_label(ActionKind::Death);
        Ok(self)
    }

    pub fn set_migration(&mut self, from: usize, to: usize, m: Measure) -> Result<&mut Self> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Err(Error::Validation(format!(
                "migration from `{}` to itself is not allowed",
                self.sites[from]
            )));
        }
        self.migration[from][to] = m.with_label(ActionKind::Migration);
        Ok(self)
    }

    pub fn set_reproduction(&mut self, from: usize, to: usize, m: Measure) -> Result<&mut Self> {
        self.check(from)?;
        self.check(to)?;
        self.reproduction[from][to] = m.with_label(ActionKind::Reproduction);
        Ok(self)
    }

    pub fn set_initial(&mut self, v: usize, c: InitialCount) -> Result<&mut Self> {
        self.check(v)?;
        self.initial[v] = c;
        Ok(self)
    }

    pub fn coalescence(&self, v: usize) -> &Measure {
        &self.coalescence[v]
    }

    pub fn death(&self, v: usize) -> &Measure {
        &self.death[v]
    }

    pub fn migration(&self, from: usize, to: usize) -> &Measure {
        &self.migration[from][to]
    }

    pub fn reproduction(&self, from: usize, to: usize) -> &Measure {
        &self.reproduction[from][to]
    }

    pub fn initial(&self) -> &[InitialCount] {
        &self.initial
    }

    pub fn initial_counts(&self, n_trunc: u64) -> Vec<u64> {
        self.initial.iter().map(|c| c.truncate(n_trunc)).collect()
    }

    pub fn has_reproduction(&self) -> bool {
        self.reproduction.iter().flatten().any(|m| !m.is_zero())
    }

    pub fn has_death(&self) -> bool {
        self.death.iter().any(|m| !m.is_zero())
    }

    /// Every measure with a human-readable slot name.
    pub fn measures(&self) -> Vec<(String, &Measure)> {
        let mut out = Vec::new();
        for (v, name) in self.sites.iter().enumerate() {
            out.push((format!("coalescence.{name}"), &self.coalescence[v]));
            out.push((format!("death.{name}"), &self.death[v]));
        }
        for (u, from) in self.sites.iter().enumerate() {
            for (v, to) in self.sites.iter().enumerate() {
                if !self.migration[u][v].is_zero() {
                    out.push((format!("migration.{from}->{to}"), &self.migration[u][v]));
                }
                if !self.reproduction[u][v].is_zero() {
                    out.push((format!("reproduction.{from}->{to}"), &self.reproduction[u][v]));
                }
            }
        }
        out
    }

    /// Fails with `AtomAtOne` if any measure has an atom at 1.
    pub fn ensure_no_atom_at_one(&self) -> Result<()> {
        for (name, m) in self.measures() {
            if m.has_atom_at_one() {
                return Err(Error::AtomAtOne(name));
            }
        }
        Ok(())
    }
}
