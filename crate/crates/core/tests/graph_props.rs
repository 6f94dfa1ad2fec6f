mod common;

use common::{arb_coal, arb_move, Coal, Move};
use coordsim::criteria::Outcome;
use coordsim::graph::{build_interaction_graph, stays_infinite};
use coordsim::{InitialCount, SystemSpec};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Layout {
    coal: Vec<Coal>,
    infinite: Vec<bool>,
    /// `moves[u][v]` for `u != v`.
    moves: Vec<Vec<Move>>,
    reproduction: Vec<Vec<Move>>,
}

impl Layout {
    fn system(&self) -> SystemSpec {
        let n = self.coal.len();
        let mut sys = SystemSpec::new((0..n).map(|i| format!("s{i}"))).unwrap();
        for v in 0..n {
            sys.set_coalescence(v, self.coal[v].measure()).unwrap();
            if self.infinite[v] {
                sys.set_initial(v, InitialCount::Infinite).unwrap();
            }
            for u in 0..n {
                if u != v && self.moves[u][v] != Move::Zero {
                    sys.set_migration(u, v, self.moves[u][v].measure()).unwrap();
                }
                if self.reproduction[u][v] != Move::Zero {
                    sys.set_reproduction(u, v, self.reproduction[u][v].measure()).unwrap();
                }
            }
        }
        sys
    }

    fn strong(&self, u: usize, v: usize) -> bool {
        self.coal[u].comes_down()
            && (self.moves[u][v].strong_against(self.coal[u]) || self.reproduction[u][v].strong_against(self.coal[u]))
    }

    /// Depth-first enumeration of every simple path from an infinite site.
    fn witness_exists(&self) -> bool {
        fn dfs(l: &Layout, u: usize, seen: &mut Vec<bool>) -> bool {
            if !l.coal[u].comes_down() {
                return true;
            }
            seen[u] = true;
            let n = l.coal.len();
            let found = (0..n).any(|v| v != u && !seen[v] && l.strong(u, v) && dfs(l, v, seen));
            seen[u] = false;
            found
        }
        let n = self.coal.len();
        (0..n).any(|s| self.infinite[s] && dfs(self, s, &mut vec![false; n]))
    }
}

fn arb_layout(max_sites: usize, with_reproduction: bool) -> impl Strategy<Value = Layout> {
    (1..=max_sites).prop_flat_map(move |n| {
        let repr = if with_reproduction { arb_move().boxed() } else { Just(Move::Zero).boxed() };
        (
            prop::collection::vec(arb_coal(), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(prop::collection::vec(arb_move(), n), n),
            prop::collection::vec(prop::collection::vec(repr, n), n),
        )
            .prop_map(|(coal, infinite, moves, reproduction)| Layout { coal, infinite, moves, reproduction })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decision_matches_exhaustive_paths(layout in arb_layout(6, false)) {
        let sys = layout.system();
        let report = stays_infinite(&sys).unwrap();
        let expected = if layout.witness_exists() { Outcome::Positive } else { Outcome::Negative };
        prop_assert_eq!(report.outcome, expected, "{}", report.explanation);
        if let Some(path) = &report.witness {
            prop_assert!(layout.infinite[path[0]]);
            prop_assert!(!layout.coal[*path.last().unwrap()].comes_down());
            for w in path.windows(2) {
                prop_assert!(layout.strong(w[0], w[1]));
            }
            prop_assert_eq!(report.site_verdicts[*path.last().unwrap()].outcome, Outcome::Negative);
        }
    }

    #[test]
    fn interaction_graph_has_exactly_the_moving_pairs(layout in arb_layout(5, true)) {
        let sys = layout.system();
        let g = build_interaction_graph(&sys);
        let n = layout.coal.len();
        let mut expected = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let any = [layout.moves[u][v], layout.moves[v][u], layout.reproduction[u][v], layout.reproduction[v][u]]
                    .iter()
                    .any(|m| *m != Move::Zero);
                if any {
                    expected.push((u, v));
                }
            }
        }
        prop_assert_eq!(g.edges, expected);
    }

    /// A step is strong iff its migration or its reproduction measure is.
    #[test]
    fn step_strength_is_a_disjunction(layout in arb_layout(4, true)) {
        let report = stays_infinite(&layout.system()).unwrap();
        for e in &report.graph.directed {
            if !layout.coal[e.from].comes_down() {
                continue;
            }
            let m = e.migration.as_ref().is_some_and(|v| v.is_positive());
            let r = e.reproduction.as_ref().is_some_and(|v| v.is_positive());
            prop_assert_eq!(e.outcome == Outcome::Positive, m || r);
            prop_assert_eq!(e.outcome == Outcome::Positive, layout.strong(e.from, e.to));
        }
    }

    /// Enlarging a migration or reproduction measure never turns Positive into Negative.
    #[test]
    fn adding_measures_is_monotone(layout in arb_layout(4, true), u in 0usize..4, v in 0usize..4, extra in arb_move(), repro in any::<bool>()) {
        let n = layout.coal.len();
        let (u, v) = (u % n, v % n);
        prop_assume!(extra != Move::Zero && (repro || u != v));
        let before = stays_infinite(&layout.system()).unwrap().outcome;
        let mut sys = layout.system();
        let base = if repro { sys.reproduction(u, v).clone() } else { sys.migration(u, v).clone() };
        let added = base.try_add(&extra.measure()).unwrap_or_else(|_| base.try_add(&extra.measure().positive_part()).unwrap_or(base.clone()));
        if repro {
            sys.set_reproduction(u, v, added).unwrap();
        } else {
            sys.set_migration(u, v, added).unwrap();
        }
        let after = stays_infinite(&sys).unwrap().outcome;
        prop_assert!(!(before == Outcome::Positive && after == Outcome::Negative));
    }
}
