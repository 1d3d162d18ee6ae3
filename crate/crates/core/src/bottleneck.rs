//! The gradient graph: which links bottleneck which flows, and the max-min rates.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::eps;
use crate::ids::{ElementId, FlowId, LinkId};
use crate::network::Network;

/// A vertex of the gradient graph by dense index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Link(usize),
    Flow(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    /// l -> f, f is bottlenecked at l.
    Bottleneck,
    /// f -> l, mirror of a bottleneck edge.
    Backward,
    /// f -> l, f traverses l but is not bottlenecked there.
    Traversal,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
}

#[derive(Clone, Debug, Default)]
pub struct GradientGraph {
    bottleneck_flows: Vec<Vec<usize>>,
    bottlenecks: Vec<Vec<usize>>,
    traversals: Vec<Vec<usize>>,
    traversed_by: Vec<Vec<usize>>,
}

impl GradientGraph {
    fn new(links: usize, flows: usize) -> Self {
        GradientGraph {
            bottleneck_flows: vec![Vec::new(); links],
            bottlenecks: vec![Vec::new(); flows],
            traversals: vec![Vec::new(); flows],
            traversed_by: vec![Vec::new(); links],
        }
    }

    fn sort(&mut self) {
        for v in self
            .bottleneck_flows
            .iter_mut()
            .chain(&mut self.bottlenecks)
            .chain(&mut self.traversals)
            .chain(&mut self.traversed_by)
        {
            v.sort_unstable();
            v.dedup();
        }
    }

    /// Flows bottlenecked at link `l`.
    pub fn bottleneck_flows(&self, l: usize) -> &[usize] {
        &self.bottleneck_flows[l]
    }

    /// Bottleneck links of flow `f`.
    pub fn bottlenecks(&self, f: usize) -> &[usize] {
        &self.bottlenecks[f]
    }

    /// Non-bottleneck links traversed by flow `f`.
    pub fn traversals(&self, f: usize) -> &[usize] {
        &self.traversals[f]
    }

    /// Flows with a traversal edge into link `l`.
    pub fn traversed_by(&self, l: usize) -> &[usize] {
        &self.traversed_by[l]
    }

    pub fn num_links(&self) -> usize {
        self.bottleneck_flows.len()
    }

    pub fn num_flows(&self) -> usize {
        self.bottlenecks.len()
    }

    /// Out-neighbours including backward edges.
    pub fn successors(&self, v: Vertex) -> Vec<Vertex> {
        match v {
            Vertex::Link(l) => self.bottleneck_flows[l].iter().map(|&f| Vertex::Flow(f)).collect(),
            Vertex::Flow(f) => self.bottlenecks[f]
                .iter()
                .chain(&self.traversals[f])
                .map(|&l| Vertex::Link(l))
                .collect(),
        }
    }

    pub fn out_degree(&self, v: Vertex) -> usize {
        match v {
            Vertex::Link(l) => self.bottleneck_flows[l].len(),
            Vertex::Flow(f) => self.bottlenecks[f].len() + self.traversals[f].len(),
        }
    }

    pub fn in_degree(&self, v: Vertex) -> usize {
        match v {
            // backward edges plus traversal edges
            Vertex::Link(l) => self.bottleneck_flows[l].len() + self.traversed_by[l].len(),
            Vertex::Flow(f) => self.bottlenecks[f].len(),
        }
    }

    /// Every edge, links first then flows, each in index order.
    pub fn edges(&self) -> Vec<(Vertex, Vertex, EdgeKind)> {
        let mut out = Vec::new();
        for (l, fs) in self.bottleneck_flows.iter().enumerate() {
            for &f in fs {
                out.push((Vertex::Link(l), Vertex::Flow(f), EdgeKind::Bottleneck));
            }
        }
        for f in 0..self.bottlenecks.len() {
            let mut e: Vec<_> = self.bottlenecks[f]
                .iter()
                .map(|&l| (l, EdgeKind::Backward))
                .chain(self.traversals[f].iter().map(|&l| (l, EdgeKind::Traversal)))
                .collect();
            e.sort();
            out.extend(e.into_iter().map(|(l, k)| (Vertex::Flow(f), Vertex::Link(l), k)));
        }
        out
    }

    /// Vertices reachable from `x` over all edges, `x` itself excluded.
    pub fn reachable(&self, x: Vertex) -> BTreeSet<Vertex> {
        let mut seen = BTreeSet::new();
        let mut q = VecDeque::from([x]);
        while let Some(v) = q.pop_front() {
            for w in self.successors(v) {
                if w != x && seen.insert(w) {
                    q.push_back(w);
                }
            }
        }
        seen
    }
}

/// Counters from the heap loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub pops: usize,
    pub key_updates: usize,
}

/// Output of [`gradient_graph`].
#[derive(Clone, Debug)]
pub struct BottleneckSolution {
    network: Network,
    graph: GradientGraph,
    fair_share: Vec<f64>,
    rate: Vec<f64>,
    stats: SolveStats,
    link_rank: Vec<usize>,
    flow_rank: Vec<usize>,
}

/// Heap key ordered by total order on f64.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Key(pub f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Build the gradient graph and the max-min solution of `network`.
///
/// Links are popped from a min-heap keyed by `(fair share, link id)`. Links
/// that end up carrying only flows bottlenecked elsewhere report an infinite
/// fair share. Links no flow traverses report their capacity.
pub fn gradient_graph(network: &Network) -> BottleneckSolution {
    let nl = network.num_links();
    let nf = network.num_flows();
    let tol = eps();
    let mut g = GradientGraph::new(nl, nf);
    let mut stats = SolveStats::default();

    let mut avail: Vec<f64> = (0..nl).map(|l| network.capacity(l)).collect();
    let mut count: Vec<usize> = (0..nl).map(|l| network.flows_on(l).len()).collect();
    let mut share: Vec<f64> = (0..nl)
        .map(|l| if count[l] > 0 { avail[l] / count[l] as f64 } else { avail[l] })
        .collect();
    let mut rate = vec![f64::INFINITY; nf];
    let mut resolved = vec![false; nf];
    let mut popped = vec![false; nl];

    let mut heap: BinaryHeap<Reverse<(Key, usize)>> =
        (0..nl).filter(|&l| count[l] > 0).map(|l| Reverse((Key(share[l]), l))).collect();

    while let Some(Reverse((Key(k), l))) = heap.pop() {
        if popped[l] || count[l] == 0 || k.to_bits() != share[l].to_bits() {
            continue;
        }
        popped[l] = true;
        stats.pops += 1;
        let s = share[l];
        for &f in network.flows_on(l) {
            if rate[f] < s - tol {
                continue;
            }
            g.bottleneck_flows[l].push(f);
            g.bottlenecks[f].push(l);
            if resolved[f] {
                continue;
            }
            resolved[f] = true;
            rate[f] = s;
            for &m in network.path(f) {
                if m == l || popped[m] || s >= share[m] - tol {
                    continue;
                }
                g.traversals[f].push(m);
                g.traversed_by[m].push(f);
                avail[m] -= s;
                count[m] -= 1;
                if count[m] == 0 {
                    share[m] = f64::INFINITY;
                } else {
                    share[m] = avail[m] / count[m] as f64;
                    heap.push(Reverse((Key(share[m]), m)));
                    stats.key_updates += 1;
                }
            }
        }
    }
    debug_assert!(resolved.iter().all(|&r| r));
    g.sort();
    let (link_rank, flow_rank) = rank_values(&share, &rate, tol);
    BottleneckSolution {
        network: network.clone(),
        graph: g,
        fair_share: share,
        rate,
        stats,
        link_rank,
        flow_rank,
    }
}

/// Group values that agree within `tol` and number the groups in ascending order.
fn rank_values(share: &[f64], rate: &[f64], tol: f64) -> (Vec<usize>, Vec<usize>) {
    let mut all: Vec<(f64, Vertex)> = share
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, Vertex::Link(i)))
        .chain(rate.iter().enumerate().map(|(i, &v)| (v, Vertex::Flow(i))))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut lr = vec![0; share.len()];
    let mut fr = vec![0; rate.len()];
    let mut rank = 0;
    let mut anchor = f64::NEG_INFINITY;
    for (k, &(v, x)) in all.iter().enumerate() {
        if k > 0 && !(v - anchor <= tol || v == anchor) {
            rank += 1;
            anchor = v;
        } else if k == 0 {
            anchor = v;
        }
        match x {
            Vertex::Link(i) => lr[i] = rank,
            Vertex::Flow(i) => fr[i] = rank,
        }
    }
    (lr, fr)
}

impl BottleneckSolution {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn graph(&self) -> &GradientGraph {
        &self.graph
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    /// Rate by flow index.
    pub fn rate_at(&self, f: usize) -> f64 {
        self.rate[f]
    }

    /// Fair share by link index.
    pub fn fair_share_at(&self, l: usize) -> f64 {
        self.fair_share[l]
    }

    pub fn rate(&self, flow: &str) -> Option<f64> {
        self.network.flow_index(flow).map(|f| self.rate[f])
    }

    pub fn fair_share(&self, link: &str) -> Option<f64> {
        self.network.link_index(link).map(|l| self.fair_share[l])
    }

    pub fn rates(&self) -> BTreeMap<FlowId, f64> {
        self.network.flows().iter().zip(&self.rate).map(|(f, &r)| (f.id.clone(), r)).collect()
    }

    pub fn fair_shares(&self) -> BTreeMap<LinkId, f64> {
        self.network
            .links()
            .iter()
            .zip(&self.fair_share)
            .map(|(l, &s)| (l.id.clone(), s))
            .collect()
    }

    pub fn bottlenecks_of(&self, flow: &str) -> Option<Vec<LinkId>> {
        let f = self.network.flow_index(flow)?;
        Some(self.graph.bottlenecks(f).iter().map(|&l| self.network.link(l).id.clone()).collect())
    }

    pub fn is_bottleneck(&self, l: usize) -> bool {
        !self.graph.bottleneck_flows(l).is_empty()
    }

    /// Position of the vertex value among all values, with near-equal values merged.
    pub fn rank(&self, v: Vertex) -> usize {
        match v {
            Vertex::Link(l) => self.link_rank[l],
            Vertex::Flow(f) => self.flow_rank[f],
        }
    }

    /// Value used to order vertices: fair share for links, rate for flows.
    pub fn value(&self, v: Vertex) -> f64 {
        match v {
            Vertex::Link(l) => self.fair_share[l],
            Vertex::Flow(f) => self.rate[f],
        }
    }

    pub fn vertex(&self, x: &ElementId) -> Result<Vertex, GraphError> {
        match x {
            ElementId::Link(l) => self.network.link_index(l.as_str()).map(Vertex::Link),
            ElementId::Flow(f) => self.network.flow_index(f.as_str()).map(Vertex::Flow),
        }
        .ok_or_else(|| GraphError::UnknownVertex(x.to_string()))
    }

    /// Resolve a bare id, trying flows before links.
    pub fn lookup(&self, id: &str) -> Result<Vertex, GraphError> {
        self.network
            .flow_index(id)
            .map(Vertex::Flow)
            .or_else(|| self.network.link_index(id).map(Vertex::Link))
            .ok_or_else(|| GraphError::UnknownVertex(id.to_owned()))
    }

    pub fn element(&self, v: Vertex) -> ElementId {
        match v {
            Vertex::Link(l) => ElementId::Link(self.network.link(l).id.clone()),
            Vertex::Flow(f) => ElementId::Flow(self.network.flow(f).id.clone()),
        }
    }

    pub fn name(&self, v: Vertex) -> &str {
        match v {
            Vertex::Link(l) => self.network.link(l).id.as_str(),
            Vertex::Flow(f) => self.network.flow(f).id.as_str(),
        }
    }

    /// Everything reachable from `x`, `x` excluded.
    pub fn region_of_influence(&self, x: &ElementId) -> Result<BTreeSet<ElementId>, GraphError> {
        let v = self.vertex(x)?;
        Ok(self.graph.reachable(v).into_iter().map(|w| self.element(w)).collect())
    }

    /// Longest-path depth over bottleneck and traversal edges.
    pub fn levels(&self) -> Levels {
        let nl = self.network.num_links();
        let nf = self.network.num_flows();
        let mut link = vec![usize::MAX; nl];
        let mut flow = vec![usize::MAX; nf];
        for l in 0..nl {
            self.link_level(l, &mut link, &mut flow);
        }
        for f in 0..nf {
            self.flow_level(f, &mut link, &mut flow);
        }
        Levels { link, flow }
    }

    fn link_level(&self, l: usize, link: &mut [usize], flow: &mut [usize]) -> usize {
        if link[l] == usize::MAX {
            let mut v = 0;
            for &f in self.graph.traversed_by(l) {
                v = v.max(self.flow_level(f, link, flow) + 1);
            }
            link[l] = v;
        }
        link[l]
    }

    fn flow_level(&self, f: usize, link: &mut [usize], flow: &mut [usize]) -> usize {
        if flow[f] == usize::MAX {
            let mut v = 0;
            for &l in self.graph.bottlenecks(f) {
                v = v.max(self.link_level(l, link, flow) + 1);
            }
            flow[f] = v;
        }
        flow[f]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Levels {
    pub link: Vec<usize>,
    pub flow: Vec<usize>,
}

impl Levels {
    pub fn of(&self, v: Vertex) -> usize {
        match v {
            Vertex::Link(l) => self.link[l],
            Vertex::Flow(f) => self.flow[f],
        }
    }

    /// Distinct flow levels, ascending.
    pub fn flow_levels(&self) -> Vec<usize> {
        self.flow.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Flow, Link};

    fn net(links: &[(&str, f64)], flows: &[(&str, &[&str])]) -> Network {
        Network::new(
            links.iter().map(|&(id, c)| Link::new(id, c)).collect(),
            flows.iter().map(|&(id, p)| Flow::new(id, p.iter().copied())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_link_three_flows() {
        let n = net(&[("l1", 12.0)], &[("f1", &["l1"]), ("f2", &["l1"]), ("f3", &["l1"])]);
        let s = gradient_graph(&n);
        assert_eq!(s.fair_share("l1"), Some(4.0));
        for f in ["f1", "f2", "f3"] {
            assert_eq!(s.rate(f), Some(4.0));
            assert_eq!(s.bottlenecks_of(f).unwrap(), vec![LinkId::from("l1")]);
        }
        let lv = s.levels();
        assert_eq!(lv.link, vec![0]);
        assert_eq!(lv.flow, vec![1, 1, 1]);
    }

    #[test]
    fn untraversed_link_reports_capacity() {
        let n = net(&[("l1", 3.0), ("l2", 7.0)], &[("f1", &["l1"])]);
        let s = gradient_graph(&n);
        assert_eq!(s.fair_share("l2"), Some(7.0));
        assert!(!s.is_bottleneck(1));
    }

    #[test]
    fn equal_links_both_bottleneck() {
        let n = net(&[("l1", 2.0), ("l2", 2.0)], &[("f1", &["l1", "l2"])]);
        let s = gradient_graph(&n);
        assert_eq!(s.bottlenecks_of("f1").unwrap().len(), 2);
        assert!(s.graph().traversals(0).is_empty());
    }

    #[test]
    fn unsaturated_link_has_infinite_share() {
        let n = net(&[("l1", 1.0), ("l2", 5.0)], &[("f1", &["l1", "l2"])]);
        let s = gradient_graph(&n);
        assert_eq!(s.rate("f1"), Some(1.0));
        assert_eq!(s.fair_share("l2"), Some(f64::INFINITY));
        assert_eq!(s.graph().traversals(0), &[1]);
        assert_eq!(s.levels().link, vec![0, 2]);
    }

    #[test]
    fn region_follows_edges() {
        // f1 is squeezed by l1, so it adds traversal weight on l2 where f2 lives.
        let n = net(&[("l1", 1.0), ("l2", 5.0)], &[("f1", &["l1", "l2"]), ("f2", &["l2"])]);
        let s = gradient_graph(&n);
        assert_eq!(s.rate("f2"), Some(4.0));
        let r = s.region_of_influence(&ElementId::Link("l1".into())).unwrap();
        let names: Vec<_> = r.iter().map(|e| e.to_string()).collect();
        assert_eq!(names, ["l2", "f1", "f2"]);
        let leaf = s.region_of_influence(&ElementId::Flow("f2".into())).unwrap();
        assert_eq!(leaf.len(), 1); // only its own bottleneck via the backward edge
        assert!(s.region_of_influence(&ElementId::Flow("nope".into())).is_err());
    }

    #[test]
    fn edge_listing_is_consistent() {
        let n = net(&[("l1", 1.0), ("l2", 5.0)], &[("f1", &["l1", "l2"]), ("f2", &["l2"])]);
        let s = gradient_graph(&n);
        let e = s.graph().edges();
        let b = e.iter().filter(|x| x.2 == EdgeKind::Bottleneck).count();
        let k = e.iter().filter(|x| x.2 == EdgeKind::Backward).count();
        assert_eq!(b, k);
        assert_eq!(e.iter().filter(|x| x.2 == EdgeKind::Traversal).count(), 1);
    }
}
