//! Bottleneck structures of max-min fair networks.
//!
//! Build a [`Network`], run [`gradient_graph`] to get rates, fair shares and
//! the gradient graph, then ask [`forward_grad`] how a small change to one
//! link or flow moves everything else. On top of that sit rate-maximal
//! routing ([`max_rate_path`]), traffic-shaping plans ([`accelerate_flow`])
//! and fat-tree taper search ([`taper_fold`]). The [`oracle`] module holds an
//! exact water-filling solver used to check all of the above.

use std::sync::OnceLock;

pub mod bottleneck;
pub mod cli;
pub mod dot;
pub mod fairness;
pub mod fixtures;
pub mod gradients;
pub mod ids;
pub mod network;
pub mod oracle;
pub mod planner;
pub mod routing;

pub use bottleneck::{gradient_graph, BottleneckSolution, EdgeKind, GradientGraph, Levels, Vertex};
pub use fairness::jain_index;
pub use gradients::{forward_grad, gradient_bound, Direction, GradientResult, Perturbation};
pub use ids::{ElementId, FlowId, LinkId, RouterId};
pub use network::{parse_network, validate, Flow, Link, Network, NetworkDoc, NetworkError, Violation};
pub use planner::{accelerate_flow, apply_plan, taper_fold, ShapingAction, ShapingPlan, TaperReport, TaperTemplate};
pub use routing::{max_rate_path, rate_if_routed, RoutePath};

/// Default tolerance for comparing rates and fair shares.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Comparison tolerance. Read once from `QTBS_EPS`, else [`DEFAULT_EPS`].
pub fn eps() -> f64 {
    static EPS: OnceLock<f64> = OnceLock::new();
    *EPS.get_or_init(|| {
        std::env::var("QTBS_EPS")
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|e| e.is_finite() && *e > 0.0)
            .unwrap_or(DEFAULT_EPS)
    })
}
