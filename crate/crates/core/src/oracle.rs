//! Reference solvers used to check the fast path.
//!
//! [`waterfill`] raises every unfrozen flow together in exact rational
//! arithmetic until some link fills, freezes the flows on it, and repeats.
//! It shares no code with the heap-based solver. [`fd_gradient`] perturbs a
//! network by a small step and differences two exact solutions.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gradients::Direction;
use crate::ids::{ElementId, FlowId, LinkId, RouterId};
use crate::network::{Flow, Link, Network, NetworkDoc};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("step must be positive and finite, got {0}")]
    BadDelta(f64),
}

/// Exact rational for the shortest decimal that prints as `x`.
pub fn exact(x: f64) -> BigRational {
    assert!(x.is_finite(), "exact() needs a finite value");
    let s = format!("{x:e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let mant = mant.trim_start_matches('-');
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("digits");
    let shift = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if shift >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-shift) as usize))
    };
    if neg {
        r = -r;
    }
    r
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A max-min problem in exact arithmetic.
#[derive(Clone, Debug)]
pub struct ExactProblem {
    capacity: Vec<BigRational>,
    paths: Vec<Vec<usize>>,
    pinned: Vec<Option<BigRational>>,
}

/// Exact water-filling result. A fair share of `None` means infinite: every
/// flow on the link is held down elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub rate: Vec<BigRational>,
    pub fair_share: Vec<Option<BigRational>>,
    pub saturation_order: Vec<usize>,
}

impl ExactProblem {
    pub fn from_network(net: &Network) -> Self {
        ExactProblem {
            capacity: net.links().iter().map(|l| exact(l.capacity)).collect(),
            paths: (0..net.num_flows()).map(|f| net.path(f).to_vec()).collect(),
            pinned: vec![None; net.num_flows()],
        }
    }

    pub fn add_capacity(&mut self, l: usize, d: &BigRational) {
        self.capacity[l] += d;
    }

    /// Add a link only flow `f` traverses. Returns its index.
    pub fn add_private_link(&mut self, f: usize, capacity: BigRational) -> usize {
        self.capacity.push(capacity);
        let l = self.capacity.len() - 1;
        self.paths[f].push(l);
        l
    }

    /// Fix the rate of flow `f` regardless of link capacities.
    pub fn pin(&mut self, f: usize, rate: BigRational) {
        self.pinned[f] = Some(rate);
    }

    pub fn solve(&self) -> ExactSolution {
        let nl = self.capacity.len();
        let nf = self.paths.len();
        let mut on_link = vec![Vec::new(); nl];
        for (f, p) in self.paths.iter().enumerate() {
            for &l in p {
                on_link[l].push(f);
            }
        }
        let mut rem = self.capacity.clone();
        let mut open: Vec<usize> = on_link.iter().map(Vec::len).collect();
        let mut rate: Vec<Option<BigRational>> = vec![None; nf];
        let mut fair_share: Vec<Option<BigRational>> = (0..nl)
            .map(|l| if on_link[l].is_empty() { Some(self.capacity[l].clone()) } else { None })
            .collect();
        let mut order = Vec::new();

        let freeze = |f: usize, r: BigRational, rate: &mut Vec<Option<BigRational>>, rem: &mut Vec<BigRational>, open: &mut Vec<usize>| {
            for &l in &self.paths[f] {
                rem[l] -= &r;
                open[l] -= 1;
            }
            rate[f] = Some(r);
        };
        for f in 0..nf {
            if let Some(r) = &self.pinned[f] {
                freeze(f, r.clone(), &mut rate, &mut rem, &mut open);
            }
        }
        loop {
            let mut level: Option<BigRational> = None;
            for l in 0..nl {
                if open[l] == 0 {
                    continue;
                }
                let s = &rem[l] / BigInt::from(open[l]);
                if level.as_ref().is_none_or(|m| s < *m) {
                    level = Some(s);
                }
            }
            let Some(level) = level else { break };
            let tied: Vec<usize> = (0..nl)
                .filter(|&l| open[l] > 0 && &rem[l] / BigInt::from(open[l]) == level)
                .collect();
            for &l in &tied {
                fair_share[l] = Some(level.clone());
                order.push(l);
            }
            for &l in &tied {
                for &f in &on_link[l] {
                    if rate[f].is_none() {
                        freeze(f, level.clone(), &mut rate, &mut rem, &mut open);
                    }
                }
            }
        }
        ExactSolution {
            rate: rate.into_iter().map(|r| r.expect("every flow frozen")).collect(),
            fair_share,
            saturation_order: order,
        }
    }
}

/// Water-filling result keyed by id. Infinite fair shares are `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub rate: BTreeMap<FlowId, f64>,
    pub fair_share: BTreeMap<LinkId, f64>,
    pub saturation_order: Vec<LinkId>,
}

pub fn waterfill_exact(net: &Network) -> ExactSolution {
    ExactProblem::from_network(net).solve()
}

pub fn waterfill(net: &Network) -> OracleSolution {
    let s = waterfill_exact(net);
    OracleSolution {
        rate: net.flows().iter().zip(&s.rate).map(|(f, r)| (f.id.clone(), to_f64(r))).collect(),
        fair_share: net
            .links()
            .iter()
            .zip(&s.fair_share)
            .map(|(l, x)| (l.id.clone(), x.as_ref().map_or(f64::INFINITY, to_f64)))
            .collect(),
        saturation_order: s.saturation_order.iter().map(|&l| net.link(l).id.clone()).collect(),
    }
}

/// Finite-difference gradients. Link entries are `None` when the fair share
/// is infinite on either side of the step.
#[derive(Clone, Debug, PartialEq)]
pub struct FdGradient {
    pub link: BTreeMap<LinkId, Option<f64>>,
    pub flow: BTreeMap<FlowId, f64>,
}

/// One-sided difference quotient of the exact solution.
///
/// A link target has its capacity moved by `±delta`. A flow target moving
/// down gets a private shaper link at `r - delta`. Moving up, it is pinned at
/// `r + delta`.
pub fn fd_gradient(
    net: &Network,
    target: &ElementId,
    direction: Direction,
    delta: f64,
) -> Result<FdGradient, OracleError> {
    FdOracle::new(net).gradient(target, direction, delta)
}

/// Finite differences against one cached exact base solution.
pub struct FdOracle<'a> {
    net: &'a Network,
    problem: ExactProblem,
    base: ExactSolution,
}

impl<'a> FdOracle<'a> {
    pub fn new(net: &'a Network) -> Self {
        let problem = ExactProblem::from_network(net);
        let base = problem.solve();
        FdOracle { net, problem, base }
    }

    pub fn base(&self) -> &ExactSolution {
        &self.base
    }

    /// Same as [`suggest_delta`] without solving again.
    pub fn suggest_delta(&self) -> f64 {
        step_below_breakpoints(&self.base)
    }

    /// See [`fd_gradient`].
    pub fn gradient(
        &self,
        target: &ElementId,
        direction: Direction,
        delta: f64,
    ) -> Result<FdGradient, OracleError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(OracleError::BadDelta(delta));
        }
        let net = self.net;
        let base = &self.base;
        let step = exact(delta);
        let signed = match direction {
            Direction::Up => step.clone(),
            Direction::Down => -step.clone(),
        };
        let mut moved = self.problem.clone();
        match target {
            ElementId::Link(l) => {
                let i = net
                    .link_index(l.as_str())
                    .ok_or_else(|| OracleError::UnknownTarget(l.to_string()))?;
                moved.add_capacity(i, &signed);
            }
            ElementId::Flow(f) => {
                let i = net
                    .flow_index(f.as_str())
                    .ok_or_else(|| OracleError::UnknownTarget(f.to_string()))?;
                let r = &base.rate[i];
                match direction {
                    Direction::Down => {
                        moved.add_private_link(i, r - &step);
                    }
                    Direction::Up => moved.pin(i, r + &step),
                }
            }
        }
        let after = moved.solve();
        let q = |a: &BigRational, b: &BigRational| to_f64(&((b - a) / &signed));
        let flow = net
            .flows()
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), q(&base.rate[i], &after.rate[i])))
            .collect();
        let link = net
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let v = match (&base.fair_share[i], &after.fair_share[i]) {
                    (Some(a), Some(b)) => Some(q(a, b)),
                    _ => None,
                };
                (l.id.clone(), v)
            })
            .collect();
        Ok(FdGradient { link, flow })
    }
}

/// A step well below the first breakpoint: a millionth of the smallest
/// positive gap between any two rates or finite fair shares, at least 1e-12.
pub fn suggest_delta(net: &Network) -> f64 {
    step_below_breakpoints(&waterfill_exact(net))
}

fn step_below_breakpoints(s: &ExactSolution) -> f64 {
    let mut vals: Vec<BigRational> =
        s.rate.iter().cloned().chain(s.fair_share.iter().flatten().cloned()).collect();
    vals.sort();
    vals.dedup();
    let gap = vals
        .windows(2)
        .map(|w| &w[1] - &w[0])
        .filter(|g| g.is_positive())
        .min()
        .map(|g| to_f64(&g))
        .unwrap_or(1.0);
    (gap * 1e-6).max(1e-12)
}

/// Size limits for [`random_network`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_links: usize,
    pub max_flows: usize,
    pub max_path_len: usize,
}

impl Limits {
    pub fn new(max_links: usize, max_flows: usize, max_path_len: usize) -> Self {
        Limits { max_links, max_flows, max_path_len }
    }
}

/// Random network with capacities in [1, 100] at two decimals. Links no flow
/// uses are dropped, so the link count can come out below the draw.
pub fn random_network(seed: u64, limits: Limits) -> Network {
    generate(seed, limits, |rng| rng.gen_range(100..=10_000) as f64 / 100.0)
}

/// Like [`random_network`] but capacities come from {5, 10, 15, 20}, so
/// equal fair shares and multi-bottleneck flows show up often.
pub fn random_network_with_ties(seed: u64, limits: Limits) -> Network {
    generate(seed, limits, |rng| (rng.gen_range(1..=4) * 5) as f64)
}

fn generate(seed: u64, limits: Limits, mut cap: impl FnMut(&mut ChaCha8Rng) -> f64) -> Network {
    assert!(limits.max_links > 0 && limits.max_flows > 0 && limits.max_path_len > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nl = rng.gen_range(1..=limits.max_links);
    let nf = rng.gen_range(1..=limits.max_flows);
    let caps: Vec<f64> = (0..nl).map(|_| cap(&mut rng)).collect();
    let mut used = vec![false; nl];
    let mut flows = Vec::with_capacity(nf);
    for f in 0..nf {
        let len = rng.gen_range(1..=limits.max_path_len.min(nl));
        let links = sample(&mut rng, nl, len).into_vec();
        for &l in &links {
            used[l] = true;
        }
        flows.push(Flow::new(format!("f{}", f + 1), links.iter().map(|l| format!("l{}", l + 1))));
    }
    let links =
        (0..nl).filter(|&l| used[l]).map(|l| Link::new(format!("l{}", l + 1), caps[l])).collect();
    Network::new(links, flows).expect("generated network is valid")
}

/// Random directed router graph with up to `max_routers` routers, possibly
/// parallel links, and flows along simple router paths.
pub fn random_routed_network(seed: u64, max_routers: usize) -> Network {
    assert!(max_routers >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_routers);
    let routers: Vec<RouterId> = (0..n).map(|i| RouterId::new(format!("u{}", i + 1))).collect();
    let mut links = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b || !rng.gen_bool(0.45) {
                continue;
            }
            let copies = if rng.gen_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                let id = format!("l{}", links.len() + 1);
                let c = rng.gen_range(100..=2_000) as f64 / 100.0;
                links.push(Link::between(id, c, routers[a].as_str(), routers[b].as_str()));
            }
        }
    }
    let mut flows = Vec::new();
    let want = rng.gen_range(1..=12);
    for _ in 0..want * 4 {
        if flows.len() == want || links.is_empty() {
            break;
        }
        let start = rng.gen_range(0..n);
        let mut at = routers[start].clone();
        let mut visited = vec![at.clone()];
        let mut path = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let out: Vec<&Link> = links
                .iter()
                .filter(|l| l.src.as_ref() == Some(&at) && !visited.contains(l.dst.as_ref().unwrap()))
                .collect();
            if out.is_empty() {
                break;
            }
            let l = out[rng.gen_range(0..out.len())];
            path.push(l.id.clone());
            at = l.dst.clone().unwrap();
            visited.push(at.clone());
        }
        if !path.is_empty() {
            flows.push(Flow { id: FlowId::new(format!("f{}", flows.len() + 1)), path });
        }
    }
    Network::from_doc(NetworkDoc { routers: Some(routers), links, flows }).expect("generated network is valid")
}

/// Max-min check straight from the definition: every flow has a saturated
/// link on its path where no other flow gets more.
pub fn is_max_min(net: &Network, rate: &[f64], tol: f64) -> bool {
    let load: Vec<f64> = (0..net.num_links())
        .map(|l| net.flows_on(l).iter().map(|&f| rate[f]).sum())
        .collect();
    if (0..net.num_links()).any(|l| load[l] > net.capacity(l) + tol) {
        return false;
    }
    (0..net.num_flows()).all(|f| {
        net.path(f).iter().any(|&l| {
            (load[l] - net.capacity(l)).abs() <= tol
                && net.flows_on(l).iter().all(|&g| rate[g] <= rate[f] + tol)
        })
    })
}
