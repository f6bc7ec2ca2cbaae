//! Per-bin Bluetooth proximity graphs and the ego-network "class crowd".
//!
//! Scans from both devices are merged into one undirected edge, so a pair is
//! linked as long as either phone saw the other. The primary cluster is the
//! closed neighborhood of the highest-degree node rather than a connected
//! component, which would chain unrelated groups together.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ParticipantId, ProximityScan, TimeBin, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProximityGraph<N: Ord = ParticipantId> {
    adjacency: BTreeMap<N, BTreeSet<N>>,
}

impl<N: Ord + Clone> ProximityGraph<N> {
    pub fn with_nodes(nodes: impl IntoIterator<Item = N>) -> Self {
        Self {
            adjacency: nodes.into_iter().map(|n| (n, BTreeSet::new())).collect(),
        }
    }

    /// Adds `{a, b}` if both are nodes and distinct. Returns whether the
    /// edge was accepted.
    pub fn link(&mut self, a: &N, b: &N) -> bool {
        if a == b || !self.adjacency.contains_key(a) || !self.adjacency.contains_key(b) {
            return false;
        }
        self.adjacency.get_mut(a).unwrap().insert(b.clone());
        self.adjacency.get_mut(b).unwrap().insert(a.clone());
        true
    }

    pub fn nodes(&self) -> impl Iterator<Item = &N> {
        self.adjacency.keys()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, n: &N) -> Option<&BTreeSet<N>> {
        self.adjacency.get(n)
    }

    pub fn degree(&self, n: &N) -> usize {
        self.adjacency.get(n).map_or(0, BTreeSet::len)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Unordered edges as `(smaller, larger)` pairs in sorted order.
    pub fn edges(&self) -> Vec<(N, N)> {
        self.adjacency
            .iter()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |b| a < *b).map(move |b| (a.clone(), b.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimaryCluster<N: Ord = ParticipantId> {
    pub anchor: N,
    pub members: BTreeSet<N>,
}

impl<N: Ord> PrimaryCluster<N> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Builds the graph for one bin from `(scanner, seen, t)` triples.
pub fn build_graph_from<N, I>(sightings: I, roster: &BTreeSet<N>, bin: &TimeBin) -> ProximityGraph<N>
where
    N: Ord + Clone,
    I: IntoIterator<Item = (N, N, Timestamp)>,
{
    let mut graph = ProximityGraph::with_nodes(roster.iter().cloned());
    for (scanner, seen, t) in sightings {
        if bin.contains(t) {
            graph.link(&scanner, &seen);
        }
    }
    graph
}

pub fn build_graph(scans: &[ProximityScan], roster: &BTreeSet<ParticipantId>, bin: &TimeBin) -> ProximityGraph {
    build_graph_from(
        scans.iter().map(|s| (s.scanner.clone(), s.seen.clone(), s.t)),
        roster,
        bin,
    )
}

/// Ego-network of the maximum-degree node; ties go to the smallest id.
/// `None` when the graph has no edges.
pub fn primary_cluster<N: Ord + Clone>(graph: &ProximityGraph<N>) -> Option<PrimaryCluster<N>> {
    let mut best: Option<(&N, &BTreeSet<N>)> = None;
    // keys iterate in ascending order, so strict > keeps the smallest id on ties
    for (node, nbrs) in &graph.adjacency {
        if best.is_none_or(|(_, b)| nbrs.len() > b.len()) {
            best = Some((node, nbrs));
        }
    }
    let (anchor, nbrs) = best?;
    if nbrs.is_empty() {
        return None;
    }
    let mut members = nbrs.clone();
    members.insert(anchor.clone());
    Some(PrimaryCluster {
        anchor: anchor.clone(),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BIN: TimeBin = TimeBin {
        index: 0,
        start: 100,
        end: 200,
    };

    fn ids(names: &[&str]) -> BTreeSet<ParticipantId> {
        names.iter().map(|&n| n.into()).collect()
    }

    fn scan(a: &str, b: &str, t: Timestamp) -> ProximityScan {
        ProximityScan::new(a.into(), b.into(), t).unwrap()
    }

    #[test]
    fn single_scan_links_pair_and_keeps_isolated_nodes() {
        let g = build_graph(&[scan("A", "B", 150)], &ids(&["A", "B", "C"]), &BIN);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), vec![("A".into(), "B".into())]);
        assert_eq!(g.degree(&"C".into()), 0);
    }

    #[test]
    fn reciprocal_scans_collapse_to_one_edge() {
        let g = build_graph(&[scan("A", "B", 150), scan("B", "A", 160)], &ids(&["A", "B"]), &BIN);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn outsiders_and_out_of_bin_scans_are_ignored() {
        let roster = ids(&["A", "B"]);
        let g = build_graph(&[scan("A", "X", 150), scan("A", "B", 200), scan("B", "A", 99)], &roster, &BIN);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn star_center_anchors_the_cluster() {
        let scans: Vec<_> = ["A", "B", "C", "D"].iter().map(|l| scan("X", l, 150)).collect();
        let g = build_graph(&scans, &ids(&["A", "B", "C", "D", "X"]), &BIN);
        let c = primary_cluster(&g).unwrap();
        assert_eq!(c.anchor.as_str(), "X");
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn path_tie_goes_to_smallest_id() {
        let scans = [scan("A", "B", 150), scan("B", "C", 150), scan("C", "D", 150), scan("D", "E", 150)];
        let g = build_graph(&scans, &ids(&["A", "B", "C", "D", "E"]), &BIN);
        let c = primary_cluster(&g).unwrap();
        assert_eq!(c.anchor.as_str(), "B");
        assert_eq!(c.members, ids(&["A", "B", "C"]));
        assert_eq!(primary_cluster(&g), Some(c));
    }

    #[test]
    fn edgeless_graph_has_no_cluster() {
        let g = build_graph(&[], &ids(&["A", "B"]), &BIN);
        assert!(primary_cluster(&g).is_none());
        let empty: ProximityGraph<u32> = ProximityGraph::with_nodes([]);
        assert!(primary_cluster(&empty).is_none());
    }

    /// Fraction of a fully co-present clique captured by the cluster.
    fn clique_recall(rng: &mut ChaCha8Rng, n: u32, p: f64, both_directions: bool) -> f64 {
        let roster: BTreeSet<u32> = (0..n).collect();
        let mut sightings = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.gen_bool(p) && (both_directions || a < b) {
                    sightings.push((a, b, 150));
                }
            }
        }
        let g = build_graph_from(sightings, &roster, &BIN);
        primary_cluster(&g).map_or(0.0, |c| c.len() as f64 / n as f64)
    }

    #[test]
    fn symmetrized_scans_recover_more_of_the_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 1_000;
        let (mut both, mut single) = (0.0, 0.0);
        for _ in 0..trials {
            both += clique_recall(&mut rng, 10, 0.7, true);
            single += clique_recall(&mut rng, 10, 0.7, false);
        }
        assert!(both / trials as f64 > single / trials as f64);
    }

    proptest! {
        #[test]
        fn duplicate_scans_do_not_change_the_graph(
            pairs in prop::collection::vec((0u32..8, 0u32..8, 90i64..210), 0..40)
        ) {
            let roster: BTreeSet<u32> = (0..6).collect();
            let once = build_graph_from(pairs.iter().copied(), &roster, &BIN);
            let twice = build_graph_from(pairs.iter().chain(pairs.iter()).copied(), &roster, &BIN);
            prop_assert_eq!(&once, &twice);
            for (a, b) in once.edges() {
                prop_assert!(a != b && roster.contains(&a) && roster.contains(&b));
            }
            if let Some(c) = primary_cluster(&once) {
                prop_assert!(c.len() >= 2);
                prop_assert!(c.members.contains(&c.anchor));
                let mut closed = once.neighbors(&c.anchor).unwrap().clone();
                closed.insert(c.anchor);
                prop_assert_eq!(&c.members, &closed);
            }
        }
    }
}
