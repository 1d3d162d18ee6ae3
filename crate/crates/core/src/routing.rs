//! Routing a new flow along the path that gives it the highest rate.
//!
//! This is Dijkstra over routers where the distance to a router is the time
//! to send one bit, 1/rate, of a probe flow that follows the best known path
//! to the previous router plus one more link. Every probe re-solves the whole
//! network with the probe added.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::bottleneck::gradient_graph;
use crate::eps;
use crate::ids::{FlowId, LinkId, RouterId};
use crate::network::{Flow, Network, NetworkError};

/// Id given to the probe flow during a search.
pub const PROBE_ID: &str = "__probe__";

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("link {0} has no router endpoints")]
    MissingRouterAnnotations(LinkId),
    #[error("unknown router {0}")]
    UnknownRouter(String),
    #[error("source and destination are both {0}")]
    SameEndpoints(String),
    #[error("no path from {from} to {to}")]
    Unreachable { from: String, to: String },
    #[error("invalid probe path: {0}")]
    InvalidPath(#[from] NetworkError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutePath {
    pub links: Vec<LinkId>,
    pub predicted_rate: f64,
    /// 1/rate for each router reached, the source at 0.
    pub distance: BTreeMap<RouterId, f64>,
}

/// Rate a new flow would get on `path`, everything else unchanged.
pub fn rate_if_routed(network: &Network, path: &[LinkId]) -> Result<f64, RoutingError> {
    let probe = Flow { id: FlowId::new(PROBE_ID), path: path.to_vec() };
    let net = network.with_flow(probe)?;
    let sol = gradient_graph(&net);
    Ok(sol.rate(PROBE_ID).expect("probe present"))
}

fn adjacency(network: &Network) -> Result<BTreeMap<&RouterId, Vec<usize>>, RoutingError> {
    let mut out: BTreeMap<&RouterId, Vec<usize>> = BTreeMap::new();
    for (i, l) in network.links().iter().enumerate() {
        let (a, _) = l.endpoints().ok_or_else(|| RoutingError::MissingRouterAnnotations(l.id.clone()))?;
        out.entry(a).or_default().push(i);
    }
    Ok(out)
}

fn check_ends(network: &Network, src: &str, dst: &str) -> Result<(), RoutingError> {
    for r in [src, dst] {
        if !network.has_router(r) {
            return Err(RoutingError::UnknownRouter(r.to_owned()));
        }
    }
    if src == dst {
        return Err(RoutingError::SameEndpoints(src.to_owned()));
    }
    Ok(())
}

/// Path from `src` to `dst` maximising the new flow's max-min rate.
///
/// Routers leave the frontier in order of distance, ties by router id.
/// Parallel links are tried in link id order and a later one only wins if it
/// is strictly better.
pub fn max_rate_path(network: &Network, src: &str, dst: &str) -> Result<RoutePath, RoutingError> {
    let adj = adjacency(network)?;
    check_ends(network, src, dst)?;
    let tol = eps();
    let routers = network.routers();
    let pos = |r: &RouterId| routers.binary_search(r).expect("known router");
    let n = routers.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let s = pos(&RouterId::from(src));
    let t = pos(&RouterId::from(dst));
    dist[s] = 0.0;

    let path_to = |u: usize, via: &[Option<usize>]| -> Vec<LinkId> {
        let mut links = Vec::new();
        let mut at = u;
        while let Some(l) = via[at] {
            let link = network.link(l);
            links.push(link.id.clone());
            at = pos(link.src.as_ref().unwrap());
        }
        links.reverse();
        links
    };

    loop {
        let u = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(u) = u else {
            return Err(RoutingError::Unreachable { from: src.to_owned(), to: dst.to_owned() });
        };
        done[u] = true;
        if u == t {
            break;
        }
        let base = path_to(u, &via);
        for &l in adj.get(&routers[u]).map(Vec::as_slice).unwrap_or(&[]) {
            let v = pos(network.link(l).dst.as_ref().unwrap());
            if done[v] {
                continue;
            }
            let mut p = base.clone();
            p.push(network.link(l).id.clone());
            let d = 1.0 / rate_if_routed(network, &p)?;
            if d < dist[v] - tol {
                dist[v] = d;
                via[v] = Some(l);
            }
        }
    }
    let links = path_to(t, &via);
    let predicted_rate = rate_if_routed(network, &links)?;
    let distance = (0..n)
        .filter(|&i| dist[i].is_finite())
        .map(|i| (routers[i].clone(), dist[i]))
        .collect();
    Ok(RoutePath { links, predicted_rate, distance })
}

/// Fewest-hop path, ties broken by router id then link id. Used as the
/// baseline a rate-maximal path is compared against.
pub fn min_hop_path(network: &Network, src: &str, dst: &str) -> Result<Vec<LinkId>, RoutingError> {
    let adj = adjacency(network)?;
    check_ends(network, src, dst)?;
    let mut via: BTreeMap<&RouterId, Option<usize>> = BTreeMap::new();
    let start = network.routers().iter().find(|r| r.as_str() == src).unwrap();
    via.insert(start, None);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        if u.as_str() == dst {
            let mut links = Vec::new();
            let mut at = u;
            while let Some(Some(l)) = via.get(at) {
                let link = network.link(*l);
                links.push(link.id.clone());
                at = link.src.as_ref().unwrap();
            }
            links.reverse();
            return Ok(links);
        }
        for &l in adj.get(u).map(Vec::as_slice).unwrap_or(&[]) {
            let v = network.link(l).dst.as_ref().unwrap();
            if !via.contains_key(v) {
                via.insert(v, Some(l));
                q.push_back(v);
            }
        }
    }
    Err(RoutingError::Unreachable { from: src.to_owned(), to: dst.to_owned() })
}

/// Every simple router path from `src` to `dst`. Exponential; for small graphs.
pub fn all_simple_paths(network: &Network, src: &str, dst: &str) -> Result<Vec<Vec<LinkId>>, RoutingError> {
    let adj = adjacency(network)?;
    check_ends(network, src, dst)?;
    let mut out = Vec::new();
    let mut stack: Vec<LinkId> = Vec::new();
    let mut seen: Vec<&RouterId> = vec![network.routers().iter().find(|r| r.as_str() == src).unwrap()];
    fn walk<'a>(
        net: &'a Network,
        adj: &BTreeMap<&'a RouterId, Vec<usize>>,
        dst: &str,
        stack: &mut Vec<LinkId>,
        seen: &mut Vec<&'a RouterId>,
        out: &mut Vec<Vec<LinkId>>,
    ) {
        let u = *seen.last().unwrap();
        if u.as_str() == dst {
            out.push(stack.clone());
            return;
        }
        for &l in adj.get(u).map(Vec::as_slice).unwrap_or(&[]) {
            let v = net.link(l).dst.as_ref().unwrap();
            if seen.contains(&v) {
                continue;
            }
            stack.push(net.link(l).id.clone());
            seen.push(v);
            walk(net, adj, dst, stack, seen, out);
            seen.pop();
            stack.pop();
        }
    }
    walk(network, &adj, dst, &mut stack, &mut seen, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Link;

    fn diamond() -> Network {
        // a->b->d is short but crowded, a->c->d is free.
        Network::new(
            vec![
                Link::between("l1", 10.0, "a", "b"),
                Link::between("l2", 10.0, "b", "d"),
                Link::between("l3", 10.0, "a", "c"),
                Link::between("l4", 10.0, "c", "d"),
            ],
            vec![Flow::new("f1", ["l1"]), Flow::new("f2", ["l1"]), Flow::new("f3", ["l2"])],
        )
        .unwrap()
    }

    #[test]
    fn avoids_the_busy_branch() {
        let n = diamond();
        let p = max_rate_path(&n, "a", "d").unwrap();
        assert_eq!(p.links, vec![LinkId::from("l3"), LinkId::from("l4")]);
        assert_eq!(p.predicted_rate, 10.0);
        assert_eq!(p.distance[&RouterId::from("a")], 0.0);
    }

    #[test]
    fn probe_rate() {
        let n = diamond();
        let r = rate_if_routed(&n, &["l1".into(), "l2".into()]).unwrap();
        assert!((r - 10.0 / 3.0).abs() < 1e-12);
        assert!(rate_if_routed(&n, &["nope".into()]).is_err());
    }

    #[test]
    fn errors() {
        let n = diamond();
        assert!(matches!(max_rate_path(&n, "a", "a"), Err(RoutingError::SameEndpoints(_))));
        assert!(matches!(max_rate_path(&n, "a", "zz"), Err(RoutingError::UnknownRouter(_))));
        assert!(matches!(max_rate_path(&n, "d", "a"), Err(RoutingError::Unreachable { .. })));
        let bare = Network::new(vec![Link::new("l1", 1.0)], vec![]).unwrap();
        assert!(matches!(max_rate_path(&bare, "a", "b"), Err(RoutingError::MissingRouterAnnotations(_))));
    }

    #[test]
    fn enumeration_and_min_hop() {
        let n = diamond();
        assert_eq!(all_simple_paths(&n, "a", "d").unwrap().len(), 2);
        assert_eq!(min_hop_path(&n, "a", "d").unwrap(), vec![LinkId::from("l1"), LinkId::from("l2")]);
    }
}
