//! Fat-tree tapering: find the spine/leaf capacity ratio at which the two
//! rate levels of a tree meet.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::bottleneck::{gradient_graph, Vertex};
use crate::eps;
use crate::gradients::propagate;
use crate::ids::{FlowId, LinkId};
use crate::network::{Network, NetworkError};

#[derive(Debug, Error)]
pub enum TaperError {
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("no links to scale")]
    NoScaleLinks,
    #[error("{name} must be positive and finite, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("rates already equal at tau = {0}")]
    AlreadyFolded(f64),
    #[error("no tau closes the rate gap")]
    NoFold,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A network whose `scale_links` get capacity `lambda * tau`. Every other
/// link keeps its own capacity.
#[derive(Clone, Debug)]
pub struct TaperTemplate {
    pub network: Network,
    pub scale_links: Vec<LinkId>,
    pub lambda: f64,
    pub tau0: f64,
}

impl TaperTemplate {
    pub fn at(&self, tau: f64) -> Result<Network, TaperError> {
        let mut doc = self.network.to_doc();
        for l in &self.scale_links {
            let link = doc
                .links
                .iter_mut()
                .find(|x| x.id == *l)
                .ok_or_else(|| TaperError::UnknownLink(l.clone()))?;
            link.capacity = self.lambda * tau;
        }
        Ok(Network::from_doc(doc)?)
    }

    fn check(&self) -> Result<(), TaperError> {
        if self.scale_links.is_empty() {
            return Err(TaperError::NoScaleLinks);
        }
        for l in &self.scale_links {
            if self.network.link_index(l.as_str()).is_none() {
                return Err(TaperError::UnknownLink(l.clone()));
            }
        }
        for (name, value) in [("lambda", self.lambda), ("tau0", self.tau0)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(TaperError::BadParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMethod {
    /// Solved from the rate gradients at `tau0`.
    Linear,
    /// Found by bisection because the linear step did not verify.
    Bisection,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaperReport {
    pub tau0: f64,
    pub tau_star: f64,
    pub spine_capacity_at_fold: f64,
    pub method: FoldMethod,
    /// Rate change of the slowest and fastest flows per unit of tau, at tau0.
    pub slow_gradient: f64,
    pub fast_gradient: f64,
    pub probe_below: f64,
    pub probe_above: f64,
    pub rates_below: BTreeMap<FlowId, f64>,
    pub rates_at: BTreeMap<FlowId, f64>,
    pub rates_above: BTreeMap<FlowId, f64>,
    /// `(tau, slowest rate)` pairs from tau0 to a little past the fold.
    pub slowest_flow_rate: Vec<(f64, f64)>,
}

fn spread(rates: &BTreeMap<FlowId, f64>) -> (f64, f64) {
    let lo = rates.values().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.values().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Smallest tau above `tau0` at which every flow gets the same rate.
pub fn taper_fold(template: &TaperTemplate) -> Result<TaperReport, TaperError> {
    template.check()?;
    let tol = eps();
    let net0 = template.at(template.tau0)?;
    let sol0 = gradient_graph(&net0);
    let rates0 = sol0.rates();
    let (lo, hi) = spread(&rates0);
    let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
    if close(lo, hi) {
        return Err(TaperError::AlreadyFolded(template.tau0));
    }

    let seeds: Vec<(Vertex, f64)> = template
        .scale_links
        .iter()
        .map(|l| (Vertex::Link(net0.link_index(l.as_str()).unwrap()), template.lambda))
        .collect();
    let drifts = propagate(&sol0, &seeds);
    let group = |target: f64| -> Vec<usize> {
        (0..net0.num_flows()).filter(|&f| close(sol0.rate_at(f), target)).collect()
    };
    let (slow, fast) = (group(lo), group(hi));
    let uniform = |g: &[usize]| g.iter().all(|&f| close(drifts.flow[f], drifts.flow[g[0]]));
    let (g_slow, g_fast) = (drifts.flow[slow[0]], drifts.flow[fast[0]]);
    let two_levels = slow.len() + fast.len() == net0.num_flows();

    let folded = |tau: f64| -> Result<bool, TaperError> {
        let r = gradient_graph(&template.at(tau)?).rates();
        let (a, b) = spread(&r);
        Ok(b - a <= 1e-9 * b.abs().max(1.0))
    };

    let mut method = FoldMethod::Bisection;
    let mut tau_star = f64::NAN;
    if two_levels && uniform(&slow) && uniform(&fast) && g_slow - g_fast > tol {
        let t = template.tau0 + (hi - lo) / (g_slow - g_fast);
        if t > 0.0 && folded(t)? {
            tau_star = t;
            method = FoldMethod::Linear;
        }
    }
    if method == FoldMethod::Bisection {
        tau_star = bisect(template, &slow, &fast)?;
        if !folded(tau_star)? {
            return Err(TaperError::NoFold);
        }
    }

    let step = 0.1 * (tau_star - template.tau0).abs().max(tol);
    let probe_below = tau_star - step;
    let probe_above = tau_star + step;
    let rates = |tau: f64| -> Result<BTreeMap<FlowId, f64>, TaperError> {
        Ok(gradient_graph(&template.at(tau)?).rates())
    };
    let mut samples = Vec::new();
    for k in 0..=12 {
        let tau = template.tau0 + (tau_star - template.tau0) * k as f64 / 10.0;
        if tau > 0.0 {
            samples.push((tau, spread(&rates(tau)?).0));
        }
    }
    Ok(TaperReport {
        tau0: template.tau0,
        tau_star,
        spine_capacity_at_fold: template.lambda * tau_star,
        method,
        slow_gradient: g_slow,
        fast_gradient: g_fast,
        probe_below,
        probe_above,
        rates_below: rates(probe_below)?,
        rates_at: rates(tau_star)?,
        rates_above: rates(probe_above)?,
        slowest_flow_rate: samples,
    })
}

/// Bisection on (slowest group rate - fastest group rate), the groups fixed
/// at tau0. Searches upward from tau0, doubling the bracket.
fn bisect(template: &TaperTemplate, slow: &[usize], fast: &[usize]) -> Result<f64, TaperError> {
    let h = |tau: f64| -> Result<f64, TaperError> {
        let s = gradient_graph(&template.at(tau)?);
        let a = slow.iter().map(|&f| s.rate_at(f)).fold(f64::INFINITY, f64::min);
        let b = fast.iter().map(|&f| s.rate_at(f)).fold(f64::NEG_INFINITY, f64::max);
        Ok(a - b)
    };
    let mut lo = template.tau0;
    let mut hi = template.tau0;
    let mut found = false;
    for _ in 0..64 {
        hi *= 2.0;
        if h(hi)? >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
    }
    if !found {
        return Err(TaperError::NoFold);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
