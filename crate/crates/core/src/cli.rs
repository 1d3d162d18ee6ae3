//! Command-line front end. The `qtbs` binary parses [`Cli`] and prints what
//! [`run`] returns.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bottleneck::{gradient_graph, BottleneckSolution, Vertex};
use crate::dot::to_dot;
use crate::fairness::jain_index;
use crate::gradients::{forward_grad, gradient_bound, Direction, GradientError, Perturbation};
use crate::ids::{ElementId, FlowId, LinkId};
use crate::network::{parse_network, Network, NetworkError};
use crate::planner::{accelerate_flow, ShapingError, TaperError, TaperTemplate};
use crate::routing::{max_rate_path, min_hop_path, rate_if_routed, RoutingError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qtbs", version, about = "Bottleneck structure analysis for max-min fair networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Up,
    Down,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Up => Direction::Up,
            DirectionArg::Down => Direction::Down,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rates, fair shares, bottlenecks and levels.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Draw flow-to-bottleneck edges in DOT output.
        #[arg(long)]
        backward_edges: bool,
    },
    /// Gradients of every link and flow with respect to one target.
    Grad {
        file: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum, default_value = "up")]
        direction: DirectionArg,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Best path for a new flow between two routers.
    Route {
        file: PathBuf,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Shaping plan that speeds up one flow.
    Shape {
        file: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',', required = true)]
        low_priority: Vec<String>,
        #[arg(long)]
        floor: f64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Spine/leaf capacity ratio at which a fat tree's rate levels meet.
    Taper {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        scale_links: Vec<String>,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        tau0: f64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Gradient graph as DOT. Same as `solve --format dot`.
    Export {
        file: PathBuf,
        #[arg(long)]
        backward_edges: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Gradient(#[from] GradientError),
    #[error("{0}")]
    Routing(#[from] RoutingError),
    #[error("{0}")]
    Shaping(#[from] ShapingError),
    #[error("{0}")]
    Taper(#[from] TaperError),
}

#[derive(Serialize)]
struct Digest {
    links: usize,
    flows: usize,
}

#[derive(Serialize)]
struct Report {
    schema: u32,
    command: Value,
    network: Digest,
    result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    jain_index: Option<f64>,
}

fn report(net: &Network, command: Value, result: Value, jain: Option<f64>) -> String {
    let r = Report {
        schema: SCHEMA_VERSION,
        command,
        network: Digest { links: net.num_links(), flows: net.num_flows() },
        result,
        jain_index: jain,
    };
    let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
    s.push('\n');
    s
}

fn load(path: &PathBuf) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(parse_network(&text)?)
}

fn n3(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "inf".to_owned()
    }
}

/// Run one command and return what should go to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Solve { file, format, backward_edges } => {
            let net = load(file)?;
            let sol = gradient_graph(&net);
            Ok(match format {
                Format::Dot => to_dot(&sol, *backward_edges),
                Format::Table => solve_table(&sol),
                Format::Json => {
                    let cmd = json!({"name": "solve", "file": file, "backward_edges": backward_edges});
                    let rates: Vec<f64> = sol.rates().values().copied().collect();
                    report(&net, cmd, solve_json(&sol), jain_index(&rates).ok())
                }
            })
        }
        Command::Export { file, backward_edges } => {
            let net = load(file)?;
            Ok(to_dot(&gradient_graph(&net), *backward_edges))
        }
        Command::Grad { file, target, direction, format } => {
            let net = load(file)?;
            let sol = gradient_graph(&net);
            let v = sol.lookup(target).map_err(GradientError::from)?;
            let p = Perturbation { target: sol.element(v), direction: (*direction).into() };
            let g = forward_grad(&sol, &p)?;
            let bound = gradient_bound(&sol);
            let mut nonzero: Vec<(ElementId, f64)> = g
                .flow_gradient
                .iter()
                .map(|(k, &x)| (ElementId::Flow(k.clone()), x))
                .chain(g.link_gradient.iter().map(|(k, &x)| (ElementId::Link(k.clone()), x)))
                .filter(|(_, x)| *x != 0.0)
                .collect();
            nonzero.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
            match format {
                Format::Json => {
                    let cmd = json!({"name": "grad", "file": file, "target": target, "direction": p.direction.to_string()});
                    let result = json!({
                        "target": target,
                        "direction": p.direction.to_string(),
                        "link_gradient": g.link_gradient,
                        "flow_gradient": g.flow_gradient,
                        "bound": bound,
                    });
                    Ok(report(&net, cmd, result, None))
                }
                _ => {
                    let mut s = String::new();
                    let _ = writeln!(s, "target {} ({})", target, p.direction);
                    if nonzero.is_empty() {
                        let _ = writeln!(s, "all gradients zero");
                    } else {
                        let _ = writeln!(s, "{:<12} {:>10}", "vertex", "gradient");
                        for (k, x) in &nonzero {
                            let kind = if matches!(k, ElementId::Flow(_)) { "flow" } else { "link" };
                            let _ = writeln!(s, "{:<12} {:>10}  {kind}", k.to_string(), n3(*x));
                        }
                    }
                    let _ = writeln!(s, "bound d^(D/4) = {}", n3(bound));
                    Ok(s)
                }
            }
        }
        Command::Route { file, src, dst, format } => {
            let net = load(file)?;
            let best = max_rate_path(&net, src, dst)?;
            let hop = min_hop_path(&net, src, dst)?;
            let hop_rate = rate_if_routed(&net, &hop)?;
            match format {
                Format::Json => {
                    let cmd = json!({"name": "route", "file": file, "src": src, "dst": dst});
                    let result = json!({
                        "path": best.links,
                        "predicted_rate": best.predicted_rate,
                        "distance": best.distance,
                        "min_hop_path": hop,
                        "min_hop_rate": hop_rate,
                    });
                    Ok(report(&net, cmd, result, None))
                }
                _ => {
                    let mut s = String::new();
                    let _ = writeln!(s, "max-rate path  {}  rate {}", join(&best.links), n3(best.predicted_rate));
                    let _ = writeln!(s, "min-hop path   {}  rate {}", join(&hop), n3(hop_rate));
                    if hop_rate > 0.0 {
                        let _ = writeln!(s, "gain {:.2}%", 100.0 * (best.predicted_rate / hop_rate - 1.0));
                    }
                    Ok(s)
                }
            }
        }
        Command::Shape { file, target, low_priority, floor, format } => {
            let net = load(file)?;
            let low: Vec<FlowId> = low_priority.iter().map(|s| FlowId::from(s.as_str())).collect();
            let plan = accelerate_flow(&net, target, &low, *floor)?;
            let shaped = crate::planner::apply_plan(&net, &plan)?;
            let sol = gradient_graph(&shaped);
            let rates: Vec<f64> = sol.rates().values().copied().collect();
            let jain = jain_index(&rates).ok();
            match format {
                Format::Json => {
                    let cmd = json!({"name": "shape", "file": file, "target": target, "low_priority": low_priority, "floor": floor});
                    let result = json!({
                        "plan": plan,
                        "final_target_rate": plan.final_target_rate(),
                        "rates": sol.rates(),
                    });
                    Ok(report(&net, cmd, result, jain))
                }
                _ => {
                    let mut s = String::new();
                    let _ = writeln!(s, "target {} starts at {}", target, n3(plan.initial_target_rate));
                    if plan.actions.is_empty() {
                        let _ = writeln!(s, "no helpful shaping found");
                    }
                    for (i, a) in plan.actions.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{:>2}. shape {:<8} to {:>10}  -> target {}",
                            i + 1,
                            a.flow.to_string(),
                            n3(a.shaper_rate),
                            n3(a.predicted_target_rate)
                        );
                    }
                    let _ = writeln!(s, "final target rate {}", n3(plan.final_target_rate()));
                    if let Some(j) = jain {
                        let _ = writeln!(s, "jain index {}", n3(j));
                    }
                    Ok(s)
                }
            }
        }
        Command::Taper { file, scale_links, lambda, tau0, format } => {
            let net = load(file)?;
            let t = TaperTemplate {
                network: net.clone(),
                scale_links: scale_links.iter().map(|s| LinkId::from(s.as_str())).collect(),
                lambda: *lambda,
                tau0: *tau0,
            };
            let r = crate::planner::taper_fold(&t)?;
            match format {
                Format::Json => {
                    let cmd = json!({"name": "taper", "file": file, "scale_links": scale_links, "lambda": lambda, "tau0": tau0});
                    let result = serde_json::to_value(&r).expect("taper report serializes");
                    Ok(report(&net, cmd, result, None))
                }
                _ => {
                    let mut s = String::new();
                    let _ = writeln!(s, "tau* {}  ({:?})", n3(r.tau_star), r.method);
                    let _ = writeln!(s, "scaled capacity at fold {}", n3(r.spine_capacity_at_fold));
                    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10}", "flow", "below", "at", "above");
                    for (f, x) in &r.rates_at {
                        let _ = writeln!(
                            s,
                            "{:<8} {:>10} {:>10} {:>10}",
                            f.to_string(),
                            n3(r.rates_below[f]),
                            n3(*x),
                            n3(r.rates_above[f])
                        );
                    }
                    Ok(s)
                }
            }
        }
    }
}

fn join(links: &[LinkId]) -> String {
    links.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",")
}

fn solve_json(sol: &BottleneckSolution) -> Value {
    let net = sol.network();
    let lv = sol.levels();
    let links: BTreeMap<&LinkId, Value> = net
        .links()
        .iter()
        .enumerate()
        .map(|(l, link)| {
            let flows: Vec<&FlowId> =
                sol.graph().bottleneck_flows(l).iter().map(|&f| &net.flow(f).id).collect();
            (&link.id, json!({"fair_share": sol.fair_share_at(l), "level": lv.of(Vertex::Link(l)), "bottleneck_of": flows}))
        })
        .collect();
    let flows: BTreeMap<&FlowId, Value> = net
        .flows()
        .iter()
        .enumerate()
        .map(|(f, flow)| {
            let b: Vec<&LinkId> = sol.graph().bottlenecks(f).iter().map(|&l| &net.link(l).id).collect();
            (&flow.id, json!({"rate": sol.rate_at(f), "level": lv.of(Vertex::Flow(f)), "bottlenecks": b}))
        })
        .collect();
    json!({"links": links, "flows": flows})
}

fn solve_table(sol: &BottleneckSolution) -> String {
    let net = sol.network();
    let lv = sol.levels();
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>10} {:>6}  bottleneck of", "link", "fair share", "level");
    for (l, link) in net.links().iter().enumerate() {
        let flows: Vec<&str> = sol.graph().bottleneck_flows(l).iter().map(|&f| net.flow(f).id.as_str()).collect();
        let _ = writeln!(
            s,
            "{:<10} {:>10} {:>6}  {}",
            link.id.to_string(),
            n3(sol.fair_share_at(l)),
            lv.of(Vertex::Link(l)),
            flows.join(" ")
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>10} {:>6}  bottlenecks", "flow", "rate", "level");
    for (f, flow) in net.flows().iter().enumerate() {
        let links: Vec<&str> = sol.graph().bottlenecks(f).iter().map(|&l| net.link(l).id.as_str()).collect();
        let _ = writeln!(
            s,
            "{:<10} {:>10} {:>6}  {}",
            flow.id.to_string(),
            n3(sol.rate_at(f)),
            lv.of(Vertex::Flow(f)),
            links.join(" ")
        );
    }
    s
}
