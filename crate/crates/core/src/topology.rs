//! Island detection with union-find and per-island availability assessment.

use serde::{Deserialize, Serialize};

use crate::acpf::PfSolution;
use crate::case::{Network, ServiceMask};

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected components of the in-service grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IslandPartition {
    /// Island index per bus position.
    pub island_of: Vec<usize>,
    /// Bus positions of each island, ascending. Islands are ordered by
    /// their lowest bus position.
    pub islands: Vec<Vec<usize>>,
}

impl IslandPartition {
    pub fn len(&self) -> usize {
        self.islands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.islands.is_empty()
    }

    pub fn bus_ids(&self, net: &Network, island: usize) -> Vec<u32> {
        self.islands[island]
            .iter()
            .map(|&p| net.buses()[p].id)
            .collect()
    }
}

/// Groups buses into islands over the in-service branches.
pub fn detect_islands(net: &Network, mask: &ServiceMask) -> IslandPartition {
    let edges = (0..net.n_branches())
        .filter(|&k| mask.branches[k])
        .map(|k| net.branch_ends(k));
    partition_edges(net.n_buses(), edges)
}

/// Union-find partition of `n` nodes joined by `edges`.
pub fn partition_edges(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> IslandPartition {
    let mut uf = UnionFind::new(n);
    for (u, v) in edges {
        uf.union(u, v);
    }
    let mut island_of_root = vec![usize::MAX; n];
    let mut island_of = vec![0; n];
    let mut islands: Vec<Vec<usize>> = Vec::new();
    for b in 0..n {
        let r = uf.find(b);
        if island_of_root[r] == usize::MAX {
            island_of_root[r] = islands.len();
            islands.push(Vec::new());
        }
        let id = island_of_root[r];
        island_of[b] = id;
        islands[id].push(b);
    }
    IslandPartition { island_of, islands }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnavailableReason {
    NoGenerator,
    CapacityShortfall,
    PfDiverged,
    SlackInfeasible,
    /// Scheduled generation below demand; only checked when
    /// [`AvailabilityCriteria::dispatch_adequacy`] is on.
    DispatchShortfall,
    Ok,
}

/// Which availability tests are applied. Each can be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityCriteria {
    pub require_generator: bool,
    /// Total capacity must cover the island's load.
    pub capacity: bool,
    pub convergence: bool,
    /// Slack output must stay within `[0, p_max]`.
    pub slack_bounds: bool,
    /// Sum of scheduled set-points (slack included) must cover the load.
    pub dispatch_adequacy: bool,
}

impl Default for AvailabilityCriteria {
    fn default() -> Self {
        AvailabilityCriteria {
            require_generator: true,
            capacity: true,
            convergence: true,
            slack_bounds: true,
            dispatch_adequacy: false,
        }
    }
}

impl AvailabilityCriteria {
    /// Criteria of the shipped presets: set-points must cover the island's
    /// load, the slack output is not bounded.
    pub fn dispatch_based() -> Self {
        AvailabilityCriteria {
            slack_bounds: false,
            dispatch_adequacy: true,
            ..AvailabilityCriteria::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandAssessment {
    pub island: usize,
    pub available: bool,
    pub reason: UnavailableReason,
    /// Σ p_max of in-service generators, MW.
    pub max_gen_total: f64,
    /// Σ generator output, solved if the flow converged else scheduled, MW.
    pub gen_total: f64,
    /// Σ scheduled set-points including the slack machine's, MW.
    pub dispatch_total: f64,
    pub load_total: f64,
    pub converged: bool,
}

/// Slack output tolerance when checking `[0, p_max]`, MW.
const SLACK_BOUND_TOL: f64 = 1e-6;

/// Judges every island of `partition`.
///
/// `dispatch` is the MW set-point per generator and `pf_results[i]` the
/// solve of island `i` (`None` when nothing was solved, e.g. no generator).
pub fn assess_islands(
    partition: &IslandPartition,
    net: &Network,
    mask: &ServiceMask,
    dispatch: &[f64],
    pf_results: &[Option<PfSolution>],
    criteria: &AvailabilityCriteria,
) -> Vec<IslandAssessment> {
    assert_eq!(
        pf_results.len(),
        partition.len(),
        "one power-flow entry per island"
    );
    partition
        .islands
        .iter()
        .enumerate()
        .map(|(i, buses)| {
            let gens: Vec<usize> = (0..net.n_generators())
                .filter(|&g| {
                    mask.generators[g] && partition.island_of[net.generator_position(g)] == i
                })
                .collect();
            let load_total: f64 = buses.iter().map(|&b| net.buses()[b].p_load).sum();
            let max_gen_total: f64 = gens.iter().map(|&g| net.generators()[g].p_max).sum();
            let dispatch_total: f64 = gens.iter().map(|&g| dispatch[g]).sum();
            let sol = pf_results[i].as_ref();
            let converged = sol.is_some_and(|s| s.converged);
            let gen_total = match sol {
                Some(s) if s.converged => s.gen_p.iter().map(|&(_, p)| p).sum(),
                _ => dispatch_total,
            };

            let slack_ok = sol.is_some_and(|s| {
                let cap = net.generators()[s.slack_gen].p_max;
                s.slack_p >= -SLACK_BOUND_TOL && s.slack_p <= cap + SLACK_BOUND_TOL
            });
            let reason = if criteria.require_generator && gens.is_empty() {
                UnavailableReason::NoGenerator
            } else if criteria.capacity && max_gen_total < load_total {
                UnavailableReason::CapacityShortfall
            } else if criteria.convergence && !converged {
                UnavailableReason::PfDiverged
            } else if criteria.slack_bounds && converged && !slack_ok {
                UnavailableReason::SlackInfeasible
            } else if criteria.dispatch_adequacy && dispatch_total < load_total {
                UnavailableReason::DispatchShortfall
            } else {
                UnavailableReason::Ok
            };
            IslandAssessment {
                island: i,
                available: reason == UnavailableReason::Ok,
                reason,
                max_gen_total,
                gen_total,
                dispatch_total,
                load_total,
                converged,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acpf::{solve_island, PfOptions, PfProblem};
    use crate::case::fixtures;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn bfs_partition(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        q.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    #[test]
    fn connected_base_case() {
        let net = fixtures::ieee14();
        let p = detect_islands(&net, &ServiceMask::from_network(&net));
        assert_eq!(p.len(), 1);
        assert_eq!(p.islands[0].len(), 14);
    }

    #[test]
    fn all_lines_out_gives_singletons() {
        let net = fixtures::ieee14();
        let mut mask = ServiceMask::from_network(&net);
        mask.branches.fill(false);
        let p = detect_islands(&net, &mask);
        assert_eq!(p.len(), 14);
        assert!(p.islands.iter().all(|i| i.len() == 1));
    }

    proptest! {
        #[test]
        fn union_find_matches_bfs(
            n in 1usize..50,
            raw in proptest::collection::vec((0usize..50, 0usize..50, any::<bool>()), 0..120),
        ) {
            let edges: Vec<(usize, usize)> = raw
                .iter()
                .filter(|e| e.2)
                .map(|&(u, v, _)| (u % n, v % n))
                .collect();
            let p = partition_edges(n, edges.iter().copied());
            prop_assert_eq!(p.islands, bfs_partition(n, &edges));
        }

        #[test]
        fn removing_a_branch_never_merges(k in 0usize..20, mask_bits in any::<u32>()) {
            let net = fixtures::ieee14();
            let mut mask = ServiceMask::from_network(&net);
            for (i, b) in mask.branches.iter_mut().enumerate() {
                *b = mask_bits & (1 << i) != 0;
            }
            let before = detect_islands(&net, &mask).len();
            mask.branches[k] = false;
            prop_assert!(detect_islands(&net, &mask).len() >= before);
        }
    }

    fn assess_single(net: &Network, mask: &ServiceMask, dispatch: &[f64]) -> Vec<IslandAssessment> {
        let part = detect_islands(net, mask);
        let sols: Vec<Option<PfSolution>> = part
            .islands
            .iter()
            .map(|isl| {
                PfProblem::for_island(net, mask, isl, dispatch)
                    .unwrap()
                    .map(|p| solve_island(&p, &PfOptions::default()))
            })
            .collect();
        assess_islands(
            &part,
            net,
            mask,
            dispatch,
            &sols,
            &AvailabilityCriteria::default(),
        )
    }

    #[test]
    fn healthy_base_case_is_available() {
        let net = fixtures::ieee14();
        let mask = ServiceMask::from_network(&net);
        let dispatch: Vec<f64> = net.generators().iter().map(|g| g.p_gen).collect();
        let a = assess_single(&net, &mask, &dispatch);
        assert_eq!(a.len(), 1);
        assert!(a[0].available);
        assert_eq!(a[0].reason, UnavailableReason::Ok);
        assert!((a[0].load_total - 259.0).abs() < 1e-9);
        assert!((a[0].max_gen_total - 772.4).abs() < 1e-9);
        // Solved output covers load plus losses.
        assert!(a[0].gen_total > a[0].load_total);
    }

    #[test]
    fn load_island_without_generator() {
        let net = fixtures::ieee14();
        let mut mask = ServiceMask::from_network(&net);
        // Bus 14 hangs off 9-14 and 13-14.
        for (a, b) in [(9, 14), (13, 14)] {
            mask.branches[net.find_branch(a, b).unwrap()] = false;
        }
        let dispatch: Vec<f64> = net.generators().iter().map(|g| g.p_gen).collect();
        let a = assess_single(&net, &mask, &dispatch);
        let lone = a.iter().find(|x| x.load_total == 14.9).unwrap();
        assert!(!lone.available);
        assert_eq!(lone.reason, UnavailableReason::NoGenerator);
    }

    #[test]
    fn capacity_shortfall() {
        let net = fixtures::ieee14();
        let mut mask = ServiceMask::from_network(&net);
        // Keep only the 100 MW machine at bus 3; the rest of the grid needs 259 MW.
        for g in [0, 1, 3, 4] {
            mask.generators[g] = false;
        }
        let dispatch = vec![0.0; 5];
        let a = assess_single(&net, &mask, &dispatch);
        assert_eq!(a[0].max_gen_total, 100.0);
        assert_eq!(a[0].reason, UnavailableReason::CapacityShortfall);
    }

    #[test]
    fn slack_outside_bounds() {
        let net = fixtures::ieee14();
        let mask = ServiceMask::from_network(&net);
        // Every unit at full output pushes the slack negative.
        let dispatch: Vec<f64> = net.generators().iter().map(|g| g.p_max).collect();
        let a = assess_single(&net, &mask, &dispatch);
        assert_eq!(a[0].reason, UnavailableReason::SlackInfeasible);
        let mut relaxed = AvailabilityCriteria::default();
        relaxed.slack_bounds = false;
        let part = detect_islands(&net, &mask);
        let prob = PfProblem::for_island(&net, &mask, &part.islands[0], &dispatch)
            .unwrap()
            .unwrap();
        let sols = vec![Some(solve_island(&prob, &PfOptions::default()))];
        let b = assess_islands(&part, &net, &mask, &dispatch, &sols, &relaxed);
        assert!(b[0].available);
    }

    #[test]
    fn dispatch_adequacy_flag() {
        let net = fixtures::ieee14();
        let mask = ServiceMask::from_network(&net);
        let dispatch = vec![0.0, 20.0, 20.0, 20.0, 20.0];
        let part = detect_islands(&net, &mask);
        let prob = PfProblem::for_island(&net, &mask, &part.islands[0], &dispatch)
            .unwrap()
            .unwrap();
        let sols = vec![Some(solve_island(&prob, &PfOptions::default()))];
        let crit = AvailabilityCriteria {
            dispatch_adequacy: true,
            ..AvailabilityCriteria::default()
        };
        let a = assess_islands(&part, &net, &mask, &dispatch, &sols, &crit);
        assert_eq!(a[0].reason, UnavailableReason::DispatchShortfall);
        assert_eq!(a[0].dispatch_total, 80.0);
    }
}
