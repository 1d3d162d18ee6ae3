//! Speed up one flow by rate-limiting flows from a low-priority set.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::bottleneck::{gradient_graph, BottleneckSolution, Vertex};
use crate::eps;
use crate::gradients::propagate;
use crate::ids::FlowId;
use crate::network::{Network, NetworkError};

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("target {0} is also in the low-priority set")]
    TargetIsLowPriority(FlowId),
    #[error("floor rate must be positive and finite, got {0}")]
    InvalidFloor(f64),
    #[error("flow {0} already has a shaper")]
    DuplicateShaper(FlowId),
    #[error("shaper rate for {flow} must be positive, got {rate}")]
    BadShaperRate { flow: FlowId, rate: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapingAction {
    pub flow: FlowId,
    /// Cap placed on the flow through a private link.
    pub shaper_rate: f64,
    /// Target rate once this and every earlier action are in place.
    pub predicted_target_rate: f64,
}

/// One round of the search: the flows shaped together and by how much.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapingStage {
    pub flows: Vec<FlowId>,
    pub rho: f64,
    /// Target rate gained per unit of `rho`.
    pub target_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapingPlan {
    pub target: FlowId,
    pub low_priority: BTreeSet<FlowId>,
    pub actions: Vec<ShapingAction>,
    pub floor_rate: f64,
    pub initial_target_rate: f64,
    pub stages: Vec<ShapingStage>,
}

impl ShapingPlan {
    pub fn final_target_rate(&self) -> f64 {
        self.actions.last().map_or(self.initial_target_rate, |a| a.predicted_target_rate)
    }
}

/// Id of the private link carrying the shaper for `flow`.
pub fn shaper_link_id(flow: &str) -> String {
    format!("__shaper_{flow}")
}

/// Add every action of `plan` to `network` as a private link.
pub fn apply_plan(network: &Network, plan: &ShapingPlan) -> Result<Network, ShapingError> {
    let mut seen = BTreeSet::new();
    let mut net = network.clone();
    for a in &plan.actions {
        apply_action(&mut net, &mut seen, &a.flow, a.shaper_rate)?;
    }
    Ok(net)
}

fn apply_action(
    net: &mut Network,
    seen: &mut BTreeSet<FlowId>,
    flow: &FlowId,
    rate: f64,
) -> Result<(), ShapingError> {
    if net.flow_index(flow.as_str()).is_none() {
        return Err(ShapingError::UnknownFlow(flow.clone()));
    }
    let id = shaper_link_id(flow.as_str());
    if !seen.insert(flow.clone()) || net.link_index(&id).is_some() {
        return Err(ShapingError::DuplicateShaper(flow.clone()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ShapingError::BadShaperRate { flow: flow.clone(), rate });
    }
    *net = net.with_private_link(flow.as_str(), id, rate)?;
    Ok(())
}

/// Greedy shaping plan that raises `target` using only flows in `low_priority`.
///
/// Each stage looks at how many links bottleneck the target. With one, it
/// shapes the candidate whose tightening helps the target most. With several,
/// it picks a distinct candidate per bottleneck link so they all rise
/// together. The reduction grows until two related links meet, a shaped flow
/// hits `floor_rate`, or a link with spare capacity fills up. A flow is shaped
/// at most once. The search ends when no stage helps.
pub fn accelerate_flow(
    network: &Network,
    target: &str,
    low_priority: &[FlowId],
    floor_rate: f64,
) -> Result<ShapingPlan, ShapingError> {
    let tol = eps();
    if !(floor_rate > 0.0 && floor_rate.is_finite()) {
        return Err(ShapingError::InvalidFloor(floor_rate));
    }
    let target_id = FlowId::from(target);
    if network.flow_index(target).is_none() {
        return Err(ShapingError::UnknownFlow(target_id));
    }
    for f in low_priority {
        if network.flow_index(f.as_str()).is_none() {
            return Err(ShapingError::UnknownFlow(f.clone()));
        }
        if *f == target_id {
            return Err(ShapingError::TargetIsLowPriority(f.clone()));
        }
    }
    let low: BTreeSet<FlowId> = low_priority.iter().cloned().collect();

    let mut net = network.clone();
    let mut sol = gradient_graph(&net);
    let initial = sol.rate(target).unwrap();
    let mut shaped = BTreeSet::new();
    let mut actions = Vec::new();
    let mut stages = Vec::new();

    for _ in 0..=low.len() {
        let t = net.flow_index(target).unwrap();
        let candidates: Vec<usize> = low
            .iter()
            .filter(|f| !shaped.contains(*f))
            .map(|f| net.flow_index(f.as_str()).unwrap())
            .filter(|&f| sol.rate_at(f) > floor_rate + tol)
            .collect();
        let Some(chosen) = pick(&sol, t, &candidates) else { break };

        let seeds: Vec<(Vertex, f64)> = chosen.iter().map(|&f| (Vertex::Flow(f), -1.0)).collect();
        let drifts = propagate(&sol, &seeds);
        let slope = drifts.flow[t];
        if slope <= tol {
            break;
        }
        let mut rho = chosen.iter().map(|&f| sol.rate_at(f) - floor_rate).fold(f64::INFINITY, f64::min);
        rho = rho.min(first_event(&sol, &drifts.link, &drifts.flow));
        if rho.is_nan() || rho <= tol || !rho.is_finite() {
            break;
        }

        let before = sol.rate_at(t);
        let mut stage_flows = Vec::new();
        for &f in &chosen {
            let id = net.flow(f).id.clone();
            let cap = sol.rate_at(f) - rho;
            apply_action(&mut net, &mut shaped, &id, cap)?;
            let now = gradient_graph(&net);
            actions.push(ShapingAction {
                flow: id.clone(),
                shaper_rate: cap,
                predicted_target_rate: now.rate(target).unwrap(),
            });
            stage_flows.push(id);
        }
        sol = gradient_graph(&net);
        stages.push(ShapingStage { flows: stage_flows, rho, target_slope: slope });
        if sol.rate(target).unwrap() - before < tol {
            break;
        }
    }
    Ok(ShapingPlan {
        target: target_id,
        low_priority: low,
        actions,
        floor_rate,
        initial_target_rate: initial,
        stages,
    })
}

/// Candidates for the next stage, or `None` when nothing helps.
fn pick(sol: &BottleneckSolution, t: usize, candidates: &[usize]) -> Option<Vec<usize>> {
    let tol = eps();
    let bottlenecks = sol.graph().bottlenecks(t).to_vec();
    if bottlenecks.is_empty() || bottlenecks.len() > candidates.len() {
        return None;
    }
    // Tightening a flow is a negative seed, so a helpful candidate has a
    // positive drift at the watched vertex. Gradient = -drift.
    let gradient = |f: usize, at: Vertex| -> f64 {
        let d = propagate(sol, &[(Vertex::Flow(f), -1.0)]);
        match at {
            Vertex::Flow(x) => -d.flow[x],
            Vertex::Link(x) => -held_link_drift(sol, &d.flow, x, f, -1.0),
        }
    };
    let best = |watch: Vertex, skip: &[usize]| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &f in candidates {
            if skip.contains(&f) {
                continue;
            }
            let g = gradient(f, watch);
            if g < -tol && best.is_none_or(|(b, _)| g < b - tol) {
                best = Some((g, f));
            }
        }
        best.map(|(_, f)| f)
    };
    if bottlenecks.len() == 1 {
        return best(Vertex::Flow(t), &[]).map(|f| vec![f]);
    }
    let mut chosen = Vec::new();
    for l in bottlenecks {
        chosen.push(best(Vertex::Link(l), &chosen)?);
    }
    Some(chosen)
}

/// Drift of link `l` if every flow bottlenecked there stayed with it, as
/// when all bottlenecks of the target are raised together. Ties with links
/// outside the seed set would otherwise report zero here.
fn held_link_drift(sol: &BottleneckSolution, flow_drift: &[f64], l: usize, seed: usize, d: f64) -> f64 {
    let held = sol.graph().bottleneck_flows(l);
    let mut freed = 0.0;
    let mut n = 0;
    for &f in sol.network().flows_on(l) {
        if f == seed {
            freed -= d;
        } else if held.binary_search(&f).is_ok() {
            n += 1;
        } else {
            freed -= flow_drift[f];
        }
    }
    if n == 0 {
        0.0
    } else {
        freed / n as f64
    }
}

/// Smallest positive step at which the linear prediction stops holding:
/// two links sharing a flow reach the same fair share, or a link with spare
/// capacity runs out of it.
fn first_event(sol: &BottleneckSolution, link_drift: &[f64], flow_drift: &[f64]) -> f64 {
    let tol = eps();
    let net = sol.network();
    let mut rho = f64::INFINITY;
    let moving: Vec<usize> = (0..net.num_links())
        .filter(|&l| sol.fair_share_at(l).is_finite() && sol.is_bottleneck(l))
        .collect();
    for (i, &a) in moving.iter().enumerate() {
        for &b in &moving[i + 1..] {
            let dd = link_drift[a] - link_drift[b];
            if dd.abs() <= tol || !share_a_flow(net, a, b) {
                continue;
            }
            let r = (sol.fair_share_at(b) - sol.fair_share_at(a)) / dd;
            if r > tol {
                rho = rho.min(r);
            }
        }
    }
    for l in 0..net.num_links() {
        if sol.is_bottleneck(l) || net.flows_on(l).is_empty() {
            continue;
        }
        let load: f64 = net.flows_on(l).iter().map(|&f| sol.rate_at(f)).sum();
        let slope: f64 = net.flows_on(l).iter().map(|&f| flow_drift[f]).sum();
        if slope > tol {
            let r = (net.capacity(l) - load) / slope;
            if r > tol {
                rho = rho.min(r);
            }
        }
    }
    rho
}

fn share_a_flow(net: &Network, a: usize, b: usize) -> bool {
    let (fa, fb) = (net.flows_on(a), net.flows_on(b));
    fa.iter().any(|f| fb.binary_search(f).is_ok())
}
