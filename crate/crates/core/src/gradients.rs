//! Link and flow gradients by forward propagation over the gradient graph.
//!
//! A perturbation seeds a drift at one vertex. Drifts move through the graph
//! in order of (value, drift): a flow takes the smallest drift among its
//! bottleneck links, and a link splits the capacity change it has received
//! evenly among the successors that have not settled yet.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bottleneck::{BottleneckSolution, GraphError, Key, Vertex};
use crate::ids::{ElementId, FlowId, LinkId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "up" | "+" | "+1" => Ok(Direction::Up),
            "down" | "-" | "-1" => Ok(Direction::Down),
            _ => Err(format!("direction must be up or down, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Perturbation {
    pub target: ElementId,
    pub direction: Direction,
}

impl Perturbation {
    pub fn link(id: &str, direction: Direction) -> Self {
        Perturbation { target: ElementId::Link(id.into()), direction }
    }

    pub fn flow(id: &str, direction: Direction) -> Self {
        Perturbation { target: ElementId::Flow(id.into()), direction }
    }
}

#[derive(Debug, Error)]
pub enum GradientError {
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Raw drifts from a propagation, indexed like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Drifts {
    pub link: Vec<f64>,
    pub flow: Vec<f64>,
    /// Vertices in the order they settled.
    pub order: Vec<Vertex>,
    seeded_links: Vec<bool>,
    open_at_visit: Vec<usize>,
}

impl Drifts {
    /// Largest violation of the link equation over settled, unseeded links:
    /// the drifts of flows that settled earlier on the link plus the drift
    /// handed to each remaining successor must sum to zero.
    pub fn conservation_residual(&self, solution: &BottleneckSolution) -> f64 {
        let net = solution.network();
        let mut pos = BTreeMap::new();
        for (i, v) in self.order.iter().enumerate() {
            pos.insert(*v, i);
        }
        let mut worst: f64 = 0.0;
        for (i, v) in self.order.iter().enumerate() {
            let Vertex::Link(l) = *v else { continue };
            if self.seeded_links[l] || self.open_at_visit[l] == 0 {
                continue;
            }
            let incoming: f64 = net
                .flows_on(l)
                .iter()
                .filter(|&&f| pos.get(&Vertex::Flow(f)).is_some_and(|&p| p < i))
                .map(|&f| self.flow[f])
                .sum();
            worst = worst.max((incoming + self.open_at_visit[l] as f64 * self.link[l]).abs());
        }
        worst
    }
}

/// Propagate several simultaneous seeds. Each seed is a drift placed on a
/// flow rate or added to a link capacity.
pub fn propagate(solution: &BottleneckSolution, seeds: &[(Vertex, f64)]) -> Drifts {
    Propagation::new(solution).run(seeds)
}

struct Propagation<'a> {
    sol: &'a BottleneckSolution,
    dc: Vec<f64>,
    link: Vec<f64>,
    flow: Vec<f64>,
    seed_flow: Vec<Option<f64>>,
    seeded_links: Vec<bool>,
    seen_link: Vec<bool>,
    seen_flow: Vec<bool>,
    open: Vec<usize>,
    open_at_visit: Vec<usize>,
    order: Vec<Vertex>,
    heap: BinaryHeap<Reverse<(usize, Key, Vertex)>>,
}

impl<'a> Propagation<'a> {
    fn new(sol: &'a BottleneckSolution) -> Self {
        let nl = sol.network().num_links();
        let nf = sol.network().num_flows();
        let g = sol.graph();
        Propagation {
            sol,
            dc: vec![0.0; nl],
            link: vec![0.0; nl],
            flow: vec![0.0; nf],
            seed_flow: vec![None; nf],
            seeded_links: vec![false; nl],
            seen_link: vec![false; nl],
            seen_flow: vec![false; nf],
            open: (0..nl).map(|l| g.bottleneck_flows(l).len()).collect(),
            open_at_visit: vec![0; nl],
            order: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn link_candidate(&self, l: usize) -> f64 {
        if self.open[l] > 0 {
            return self.dc[l] / self.open[l] as f64;
        }
        // Every bottleneck flow already settled through a tied link: solve the
        // link equation with them counted back in.
        let held = self.sol.graph().bottleneck_flows(l);
        if held.is_empty() {
            return 0.0;
        }
        let back: f64 = held.iter().map(|&f| self.flow[f]).sum();
        (self.dc[l] + back) / held.len() as f64
    }

    fn flow_candidate(&self, f: usize) -> f64 {
        if let Some(d) = self.seed_flow[f] {
            return d;
        }
        self.sol
            .graph()
            .bottlenecks(f)
            .iter()
            .map(|&l| if self.seen_link[l] { self.link[l] } else { self.link_candidate(l) })
            .fold(f64::INFINITY, f64::min)
    }

    fn push(&mut self, v: Vertex, drift: f64) {
        self.heap.push(Reverse((self.sol.rank(v), Key(drift), v)));
    }

    fn key(&self, v: Vertex, drift: f64) -> (usize, Key, Vertex) {
        (self.sol.rank(v), Key(drift), v)
    }

    fn run(mut self, seeds: &[(Vertex, f64)]) -> Drifts {
        let net = self.sol.network();
        for &(v, d) in seeds {
            match v {
                Vertex::Link(l) => {
                    self.dc[l] += d;
                    self.seeded_links[l] = true;
                }
                Vertex::Flow(f) => self.seed_flow[f] = Some(self.seed_flow[f].unwrap_or(0.0) + d),
            }
        }
        for &(v, _) in seeds {
            match v {
                Vertex::Link(l) if net.flows_on(l).is_empty() => {
                    // nothing rides on it; its share is its capacity
                    self.seen_link[l] = true;
                    self.link[l] = self.dc[l];
                    self.order.push(v);
                }
                Vertex::Link(l) => {
                    let c = self.link_candidate(l);
                    self.push(v, c);
                }
                Vertex::Flow(f) => {
                    let c = self.flow_candidate(f);
                    self.push(v, c);
                }
            }
        }

        while let Some(Reverse((_, Key(k), v))) = self.heap.pop() {
            match v {
                Vertex::Link(y) => {
                    if self.seen_link[y] {
                        continue;
                    }
                    let d = self.link_candidate(y);
                    if d.to_bits() != k.to_bits() {
                        self.push(v, d);
                        continue;
                    }
                    if self.defer_for_ties(y, d) {
                        continue;
                    }
                    self.settle_link(y, d);
                }
                Vertex::Flow(f) => {
                    if self.seen_flow[f] {
                        continue;
                    }
                    let d = self.flow_candidate(f);
                    if d.to_bits() != k.to_bits() {
                        self.push(v, d);
                        continue;
                    }
                    self.settle_flow(f, d);
                }
            }
        }
        Drifts {
            link: self.link,
            flow: self.flow,
            order: self.order,
            seeded_links: self.seeded_links,
            open_at_visit: self.open_at_visit,
        }
    }

    /// If an open successor of `y` also hangs off another open link whose key
    /// is smaller, that link must settle first. Push it and requeue `y`.
    fn defer_for_ties(&mut self, y: usize, d: f64) -> bool {
        let g = self.sol.graph();
        let mine = self.key(Vertex::Link(y), d);
        let mut first = Vec::new();
        for &f in g.bottleneck_flows(y) {
            if self.seen_flow[f] || self.seed_flow[f].is_some() {
                continue;
            }
            for &m in g.bottlenecks(f) {
                if m == y || self.seen_link[m] {
                    continue;
                }
                let c = self.link_candidate(m);
                if self.key(Vertex::Link(m), c) < mine {
                    first.push((m, c));
                }
            }
        }
        if first.is_empty() {
            return false;
        }
        for (m, c) in first {
            self.push(Vertex::Link(m), c);
        }
        self.push(Vertex::Link(y), d);
        true
    }

    fn settle_link(&mut self, y: usize, d: f64) {
        self.seen_link[y] = true;
        self.link[y] = d;
        self.open_at_visit[y] = self.open[y];
        self.order.push(Vertex::Link(y));
        let flows: Vec<usize> = self.sol.graph().bottleneck_flows(y).to_vec();
        for f in flows {
            if !self.seen_flow[f] {
                let c = self.flow_candidate(f);
                self.push(Vertex::Flow(f), c);
            }
        }
    }

    fn settle_flow(&mut self, f: usize, d: f64) {
        self.seen_flow[f] = true;
        self.flow[f] = d;
        self.order.push(Vertex::Flow(f));
        let g = self.sol.graph();
        for &l in g.bottlenecks(f) {
            if !self.seen_link[l] {
                self.open[l] -= 1;
            }
        }
        if d == 0.0 {
            return;
        }
        let succ: Vec<usize> = g.bottlenecks(f).iter().chain(g.traversals(f)).copied().collect();
        for l in succ {
            if self.seen_link[l] {
                continue;
            }
            self.dc[l] -= d;
            let c = self.link_candidate(l);
            self.push(Vertex::Link(l), c);
        }
    }
}

/// Gradients of every link fair share and flow rate with respect to one target.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientResult {
    pub perturbation: Perturbation,
    pub link_gradient: BTreeMap<LinkId, f64>,
    pub flow_gradient: BTreeMap<FlowId, f64>,
    /// Change per unit step in the chosen direction.
    pub drifts: Drifts,
}

impl GradientResult {
    pub fn link(&self, id: &str) -> Option<f64> {
        self.link_gradient.get(id).copied()
    }

    pub fn flow(&self, id: &str) -> Option<f64> {
        self.flow_gradient.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.flow(id).or_else(|| self.link(id))
    }

    /// Gradient at a vertex by index.
    pub fn at(&self, v: Vertex) -> f64 {
        let s = self.perturbation.direction.sign();
        match v {
            Vertex::Link(l) => self.drifts.link[l] / s,
            Vertex::Flow(f) => self.drifts.flow[f] / s,
        }
    }

    /// Largest gradient magnitude over every vertex except the target.
    pub fn max_abs_excluding(&self, target: &ElementId) -> f64 {
        let links = self
            .link_gradient
            .iter()
            .filter(|(k, _)| !matches!(target, ElementId::Link(t) if t == *k))
            .map(|(_, v)| v.abs());
        let flows = self
            .flow_gradient
            .iter()
            .filter(|(k, _)| !matches!(target, ElementId::Flow(t) if t == *k))
            .map(|(_, v)| v.abs());
        links.chain(flows).fold(0.0, f64::max)
    }
}

/// Derivative of every fair share and rate with respect to the target
/// capacity (link target) or rate (flow target), taken from one side.
///
/// A link target nobody traverses has self-gradient 1 and nothing else moves.
/// A link target that bottlenecks no flow yields all zeros.
pub fn forward_grad(
    solution: &BottleneckSolution,
    p: &Perturbation,
) -> Result<GradientResult, GradientError> {
    let v = solution.vertex(&p.target)?;
    let sign = p.direction.sign();
    let drifts = propagate(solution, &[(v, sign)]);
    let net = solution.network();
    let link_gradient = net
        .links()
        .iter()
        .zip(&drifts.link)
        .map(|(l, &d)| (l.id.clone(), d / sign))
        .collect();
    let flow_gradient = net
        .flows()
        .iter()
        .zip(&drifts.flow)
        .map(|(f, &d)| (f.id.clone(), d / sign))
        .collect();
    Ok(GradientResult { perturbation: p.clone(), link_gradient, flow_gradient, drifts })
}

/// Both one-sided gradients and whether they agree within `tol` everywhere.
pub fn two_sided(
    solution: &BottleneckSolution,
    target: &ElementId,
    tol: f64,
) -> Result<(GradientResult, GradientResult, bool), GradientError> {
    let up = forward_grad(solution, &Perturbation { target: target.clone(), direction: Direction::Up })?;
    let down =
        forward_grad(solution, &Perturbation { target: target.clone(), direction: Direction::Down })?;
    let agree = up
        .link_gradient
        .values()
        .zip(down.link_gradient.values())
        .chain(up.flow_gradient.values().zip(down.flow_gradient.values()))
        .all(|(a, b)| (a - b).abs() <= tol);
    Ok((up, down, agree))
}

/// `d^(D/4)` where `D` is the longest shortest path between connected ordered
/// pairs (backward edges included) and `d` the largest in- or out-degree.
pub fn gradient_bound(solution: &BottleneckSolution) -> f64 {
    let (d, diameter) = degree_and_diameter(solution);
    (d as f64).powf(diameter as f64 / 4.0)
}

/// `(d, D)` as used by [`gradient_bound`].
pub fn degree_and_diameter(solution: &BottleneckSolution) -> (usize, usize) {
    let g = solution.graph();
    let nl = g.num_links();
    let nf = g.num_flows();
    let idx = |v: Vertex| match v {
        Vertex::Link(l) => l,
        Vertex::Flow(f) => nl + f,
    };
    let verts: Vec<Vertex> =
        (0..nl).map(Vertex::Link).chain((0..nf).map(Vertex::Flow)).collect();
    let d = verts.iter().map(|&v| g.in_degree(v).max(g.out_degree(v))).max().unwrap_or(0);
    let succ: Vec<Vec<usize>> =
        verts.iter().map(|&v| g.successors(v).into_iter().map(idx).collect()).collect();
    let mut diameter = 0;
    let mut dist = vec![usize::MAX; verts.len()];
    for s in 0..verts.len() {
        if succ[s].is_empty() {
            continue;
        }
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in &succ[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    diameter = diameter.max(dist[w]);
                    q.push_back(w);
                }
            }
        }
    }
    (d, diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bottleneck::gradient_graph;
    use crate::network::{Flow, Link, Network};

    fn net(links: &[(&str, f64)], flows: &[(&str, &[&str])]) -> Network {
        Network::new(
            links.iter().map(|&(id, c)| Link::new(id, c)).collect(),
            flows.iter().map(|&(id, p)| Flow::new(id, p.iter().copied())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_link_split() {
        let n = net(&[("l1", 12.0)], &[("f1", &["l1"]), ("f2", &["l1"]), ("f3", &["l1"])]);
        let s = gradient_graph(&n);
        let g = forward_grad(&s, &Perturbation::link("l1", Direction::Up)).unwrap();
        assert!((g.flow("f2").unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.link("l1").unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flow_seed_frees_capacity() {
        let n = net(&[("l1", 12.0)], &[("f1", &["l1"]), ("f2", &["l1"]), ("f3", &["l1"])]);
        let s = gradient_graph(&n);
        let g = forward_grad(&s, &Perturbation::flow("f1", Direction::Down)).unwrap();
        assert_eq!(g.flow("f1"), Some(1.0));
        assert!((g.flow("f2").unwrap() + 0.5).abs() < 1e-12);
        assert!(g.drifts.conservation_residual(&s) < 1e-12);
    }

    #[test]
    fn untraversed_and_unsaturated_targets() {
        let n = net(&[("l1", 1.0), ("l2", 5.0), ("l3", 9.0)], &[("f1", &["l1", "l2"])]);
        let s = gradient_graph(&n);
        let g = forward_grad(&s, &Perturbation::link("l3", Direction::Down)).unwrap();
        assert_eq!(g.link("l3"), Some(1.0));
        assert_eq!(g.flow("f1"), Some(0.0));
        let g = forward_grad(&s, &Perturbation::link("l2", Direction::Up)).unwrap();
        assert!(g.link_gradient.values().chain(g.flow_gradient.values()).all(|&x| x == 0.0));
    }

    #[test]
    fn tie_goes_to_the_untouched_link_when_raising() {
        // f1 is bottlenecked at both l1 and l2. Raising l1 alone changes nothing.
        let n = net(&[("l1", 2.0), ("l2", 2.0)], &[("f1", &["l1", "l2"])]);
        let s = gradient_graph(&n);
        let up = forward_grad(&s, &Perturbation::link("l1", Direction::Up)).unwrap();
        assert_eq!(up.flow("f1"), Some(0.0));
        let down = forward_grad(&s, &Perturbation::link("l1", Direction::Down)).unwrap();
        assert_eq!(down.flow("f1"), Some(1.0));
        let (_, _, agree) = two_sided(&s, &ElementId::Link("l1".into()), 1e-12).unwrap();
        assert!(!agree);
    }

    #[test]
    fn tie_check_splits_correctly() {
        // l1 carries f1 and f2 at 1 each; f2 is also pinned by l2 at 1.
        let n = net(&[("l1", 2.0), ("l2", 1.0)], &[("f1", &["l1"]), ("f2", &["l1", "l2"])]);
        let s = gradient_graph(&n);
        let up = forward_grad(&s, &Perturbation::link("l1", Direction::Up)).unwrap();
        assert_eq!(up.flow("f2"), Some(0.0));
        assert_eq!(up.flow("f1"), Some(1.0));
    }

    #[test]
    fn bound_single_link() {
        let n = net(&[("l1", 1.0)], &[("f1", &["l1"])]);
        assert_eq!(gradient_bound(&gradient_graph(&n)), 1.0);
    }

    #[test]
    fn unknown_target() {
        let n = net(&[("l1", 1.0)], &[("f1", &["l1"])]);
        assert!(forward_grad(&gradient_graph(&n), &Perturbation::flow("zz", Direction::Up)).is_err());
    }

    #[test]
    fn direction_parses() {
        assert_eq!("down".parse::<Direction>().unwrap(), Direction::Down);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
