//! Networks: links with capacities, flows with fixed paths, optional routers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{FlowId, LinkId, RouterId};

/// Ids with this prefix are used for probe flows and shaper links.
pub const RESERVED_PREFIX: &str = "__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<RouterId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<RouterId>,
}

impl Link {
    pub fn new(id: impl Into<LinkId>, capacity: f64) -> Self {
        Link { id: id.into(), capacity, src: None, dst: None }
    }

    pub fn between(id: impl Into<LinkId>, capacity: f64, src: &str, dst: &str) -> Self {
        Link {
            id: id.into(),
            capacity,
            src: Some(src.into()),
            dst: Some(dst.into()),
        }
    }

    /// `(src, dst)` when the link is annotated with routers.
    pub fn endpoints(&self) -> Option<(&RouterId, &RouterId)> {
        match (&self.src, &self.dst) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flow {
    pub id: FlowId,
    #[serde(rename = "links")]
    pub path: Vec<LinkId>,
}

impl Flow {
    pub fn new<I, S>(id: impl Into<FlowId>, path: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<LinkId>,
    {
        Flow { id: id.into(), path: path.into_iter().map(Into::into).collect() }
    }
}

/// The on-disk shape of a network. Nothing here is checked yet.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routers: Option<Vec<RouterId>>,
    pub links: Vec<Link>,
    pub flows: Vec<Flow>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("duplicate link id {0}")]
    DuplicateLink(LinkId),
    #[error("duplicate flow id {0}")]
    DuplicateFlow(FlowId),
    #[error("duplicate router id {0}")]
    DuplicateRouter(RouterId),
    #[error("link {link} has non-positive capacity {capacity}")]
    NonPositiveCapacity { link: LinkId, capacity: f64 },
    #[error("link {link} has non-finite capacity")]
    NonFiniteCapacity { link: LinkId },
    #[error("flow {flow} references unknown link {link}")]
    UnknownLink { flow: FlowId, link: LinkId },
    #[error("flow {0} has an empty path")]
    EmptyPath(FlowId),
    #[error("flow {flow} traverses link {link} more than once")]
    RepeatedLink { flow: FlowId, link: LinkId },
    #[error("link {0} has only one endpoint")]
    HalfEndpoints(LinkId),
    #[error("link {0} starts and ends at the same router")]
    SelfLoop(LinkId),
    #[error("link {link} references unknown router {router}")]
    UnknownRouter { link: LinkId, router: RouterId },
    #[error("id {0} uses the reserved prefix \"__\"")]
    ReservedId(String),
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    Malformed(String),
    #[error("invalid network: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown link {0}")]
    UnknownLinkId(LinkId),
    #[error("unknown flow {0}")]
    UnknownFlowId(FlowId),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl NetworkError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            NetworkError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// List every problem with a document. An empty list means it will load.
pub fn validate(doc: &NetworkDoc) -> Vec<Violation> {
    check(doc, false)
}

fn check(doc: &NetworkDoc, allow_reserved: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let reserved = |s: &str, out: &mut Vec<Violation>| {
        if !allow_reserved && s.starts_with(RESERVED_PREFIX) {
            out.push(Violation::ReservedId(s.to_owned()));
        }
    };

    let mut routers = HashSet::new();
    if let Some(rs) = &doc.routers {
        for r in rs {
            if !routers.insert(r.clone()) {
                out.push(Violation::DuplicateRouter(r.clone()));
            }
        }
    }

    let mut links = HashSet::new();
    for l in &doc.links {
        reserved(l.id.as_str(), &mut out);
        if !links.insert(l.id.clone()) {
            out.push(Violation::DuplicateLink(l.id.clone()));
        }
        if !l.capacity.is_finite() {
            out.push(Violation::NonFiniteCapacity { link: l.id.clone() });
        } else if l.capacity <= 0.0 {
            out.push(Violation::NonPositiveCapacity { link: l.id.clone(), capacity: l.capacity });
        }
        match (&l.src, &l.dst) {
            (Some(a), Some(b)) => {
                if a == b {
                    out.push(Violation::SelfLoop(l.id.clone()));
                }
                if doc.routers.is_some() {
                    for r in [a, b] {
                        if !routers.contains(r) {
                            out.push(Violation::UnknownRouter { link: l.id.clone(), router: r.clone() });
                        }
                    }
                }
            }
            (None, None) => {}
            _ => out.push(Violation::HalfEndpoints(l.id.clone())),
        }
    }

    let mut flows = HashSet::new();
    for f in &doc.flows {
        reserved(f.id.as_str(), &mut out);
        if !flows.insert(f.id.clone()) {
            out.push(Violation::DuplicateFlow(f.id.clone()));
        }
        if f.path.is_empty() {
            out.push(Violation::EmptyPath(f.id.clone()));
        }
        let mut seen = HashSet::new();
        for l in &f.path {
            if !links.contains(l) {
                out.push(Violation::UnknownLink { flow: f.id.clone(), link: l.clone() });
            }
            if !seen.insert(l) {
                out.push(Violation::RepeatedLink { flow: f.id.clone(), link: l.clone() });
            }
        }
    }
    out
}

/// A validated network.
///
/// Links and flows are stored sorted by id, and the position in that order is
/// the dense index used by every solver in the crate.
#[derive(Clone)]
pub struct Network {
    routers: Vec<RouterId>,
    links: Vec<Link>,
    flows: Vec<Flow>,
    link_pos: HashMap<LinkId, usize>,
    flow_pos: HashMap<FlowId, usize>,
    paths: Vec<Vec<usize>>,
    on_link: Vec<Vec<usize>>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("links", &self.links.len())
            .field("flows", &self.flows.len())
            .finish()
    }
}

/// Parse and validate a JSON network document.
pub fn parse_network(text: &str) -> Result<Network, NetworkError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| NetworkError::Malformed(e.to_string()))?;
    Network::from_doc(doc)
}

impl Network {
    pub fn new(links: Vec<Link>, flows: Vec<Flow>) -> Result<Self, NetworkError> {
        Self::from_doc(NetworkDoc { routers: None, links, flows })
    }

    pub fn from_doc(doc: NetworkDoc) -> Result<Self, NetworkError> {
        Self::build(doc, false)
    }

    /// Like `from_doc` but lets the crate add probe flows and shaper links.
    pub(crate) fn build(doc: NetworkDoc, allow_reserved: bool) -> Result<Self, NetworkError> {
        let v = check(&doc, allow_reserved);
        if !v.is_empty() {
            return Err(NetworkError::Invalid(v));
        }
        let NetworkDoc { routers, mut links, mut flows } = doc;
        links.sort_by(|a, b| a.id.cmp(&b.id));
        flows.sort_by(|a, b| a.id.cmp(&b.id));
        let routers: Vec<RouterId> = match routers {
            Some(r) => r.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
            None => links
                .iter()
                .filter_map(|l| l.endpoints())
                .flat_map(|(a, b)| [a.clone(), b.clone()])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        };
        let link_pos: HashMap<_, _> =
            links.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        let flow_pos: HashMap<_, _> =
            flows.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        let paths: Vec<Vec<usize>> =
            flows.iter().map(|f| f.path.iter().map(|l| link_pos[l]).collect()).collect();
        let mut on_link = vec![Vec::new(); links.len()];
        for (fi, p) in paths.iter().enumerate() {
            for &li in p {
                on_link[li].push(fi);
            }
        }
        Ok(Network { routers, links, flows, link_pos, flow_pos, paths, on_link })
    }

    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            routers: if self.routers.is_empty() { None } else { Some(self.routers.clone()) },
            links: self.links.clone(),
            flows: self.flows.clone(),
        }
    }

    /// Pretty JSON with links and flows in id order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("network serializes")
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn routers(&self) -> &[RouterId] {
        &self.routers
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_pos.get(id).copied()
    }

    pub fn flow_index(&self, id: &str) -> Option<usize> {
        self.flow_pos.get(id).copied()
    }

    pub fn link(&self, i: usize) -> &Link {
        &self.links[i]
    }

    pub fn flow(&self, i: usize) -> &Flow {
        &self.flows[i]
    }

    pub fn capacity(&self, i: usize) -> f64 {
        self.links[i].capacity
    }

    /// Link indices of flow `i` in path order (the set L_f).
    pub fn path(&self, i: usize) -> &[usize] {
        &self.paths[i]
    }

    /// Flow indices traversing link `i` in id order (the set F_l).
    pub fn flows_on(&self, i: usize) -> &[usize] {
        &self.on_link[i]
    }

    pub fn has_router(&self, r: &str) -> bool {
        self.routers.binary_search_by(|x| crate::ids::natural_cmp(x.as_str(), r)).is_ok()
    }

    /// A copy of this network with one more flow.
    pub fn with_flow(&self, flow: Flow) -> Result<Network, NetworkError> {
        let mut doc = self.to_doc();
        doc.flows.push(flow);
        Network::build(doc, true)
    }

    /// A copy of this network with one more link.
    pub fn with_link(&self, link: Link) -> Result<Network, NetworkError> {
        let mut doc = self.to_doc();
        doc.links.push(link);
        Network::build(doc, true)
    }

    /// A copy with the capacity of `link` replaced.
    pub fn with_capacity(&self, link: &str, capacity: f64) -> Result<Network, NetworkError> {
        let i = self.link_index(link).ok_or_else(|| NetworkError::UnknownLinkId(link.into()))?;
        let mut doc = self.to_doc();
        doc.links[i].capacity = capacity;
        Network::build(doc, true)
    }

    /// A copy where flow `flow` also traverses a new private link of the given capacity.
    pub fn with_private_link(
        &self,
        flow: &str,
        link: impl Into<LinkId>,
        capacity: f64,
    ) -> Result<Network, NetworkError> {
        let i = self.flow_index(flow).ok_or_else(|| NetworkError::UnknownFlowId(flow.into()))?;
        let link = link.into();
        let mut doc = self.to_doc();
        doc.links.push(Link::new(link.clone(), capacity));
        doc.flows[i].path.push(link);
        Network::build(doc, true)
    }
}
