use qtbs::bottleneck::gradient_graph;
use qtbs::fixtures;
use qtbs::gradients::{forward_grad, Direction, Perturbation};
use qtbs::ids::LinkId;
use qtbs::oracle::{fd_gradient, is_max_min, suggest_delta};
use qtbs::planner::{accelerate_flow, apply_plan, taper_fold, FoldMethod, TaperTemplate};
use qtbs::routing::{max_rate_path, rate_if_routed};
use qtbs::{ElementId, FlowId, Vertex};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn tree() -> TaperTemplate {
    TaperTemplate {
        network: fixtures::fat_tree(),
        scale_links: vec!["l5".into(), "l6".into()],
        lambda: 20.0,
        tau0: 1.0,
    }
}

#[test]
fn twin_bottleneck_both_directions() {
    let s = gradient_graph(&fixtures::twin_bottleneck());
    let down = forward_grad(&s, &Perturbation::link("l1", Direction::Down)).unwrap();
    let up = forward_grad(&s, &Perturbation::link("l1", Direction::Up)).unwrap();
    assert!(close(down.flow("f2").unwrap(), -0.5));
    // l2 ties with l1 on f1, so raising l1 alone changes nothing.
    assert!(up.flow_gradient.values().all(|v| *v == 0.0));
}

#[test]
fn double_path_matches_fd() {
    let n = fixtures::double_path();
    let s = gradient_graph(&n);
    let g = forward_grad(&s, &Perturbation::flow("f1", Direction::Down)).unwrap();
    assert!(close(g.flow("f4").unwrap(), -2.0));
    let fd = fd_gradient(&n, &ElementId::Flow("f1".into()), Direction::Down, suggest_delta(&n)).unwrap();
    for (k, v) in &fd.flow {
        assert!((g.flow_gradient[k] - v).abs() < 1e-6, "{k}");
    }
}

#[test]
fn b4_levels_and_probe() {
    let n = fixtures::b4();
    let s = gradient_graph(&n);
    for k in [1, 2, 3, 4, 5, 7, 8, 10, 13, 14, 15, 16] {
        assert!(close(s.rate(&format!("f{k}")).unwrap(), 5.0 / 3.0), "f{k}");
    }
    assert!(close(s.rate("f6").unwrap(), 3.0));
    assert!(close(s.rate("f9").unwrap(), 15.0 / 7.0));
    assert_eq!(s.levels().flow_levels().len(), 2);
    let rates: Vec<f64> = s.rates().values().copied().collect();
    assert!(is_max_min(&n, &rates, 1e-9));
    let a = rate_if_routed(&n, &["l15".into(), "l10".into()]).unwrap();
    let b = rate_if_routed(&n, &["l16".into(), "l8".into(), "l19".into()]).unwrap();
    assert!(close(a, 10.0 / 7.0));
    assert!(close(b, 2.5));
    let p = max_rate_path(&n, "DC4", "DC11").unwrap();
    let want: Vec<LinkId> = ["l16", "l8", "l19"].into_iter().map(LinkId::from).collect();
    assert_eq!(p.links, want);
    assert!(close(p.predicted_rate, 2.5));
}

#[test]
fn fat_tree_spine() {
    let t = tree();
    let s = gradient_graph(&t.at(1.0).unwrap());
    let up = forward_grad(&s, &Perturbation::link("l5", Direction::Up)).unwrap();
    assert!(up.flow_gradient.values().all(|v| *v == 0.0));
    let down = forward_grad(&s, &Perturbation::link("l5", Direction::Down)).unwrap();
    for (f, v) in &down.flow_gradient {
        let r = s.rate(f.as_str()).unwrap();
        let want = if close(r, 2.5) { 0.125 } else { -0.25 };
        assert!(close(*v, want), "{f} {v}");
    }
}

#[test]
fn fat_tree_fold() {
    let t = tree();
    let r = taper_fold(&t).unwrap();
    assert_eq!(r.method, FoldMethod::Linear);
    assert!(close(r.tau_star, 4.0 / 3.0));
    assert!(r.rates_below.values().any(|v| !close(*v, 10.0 / 3.0)));
    assert!(r.rates_at.values().all(|v| (v - 10.0 / 3.0).abs() < 1e-9));
    let slow: Vec<f64> = r.slowest_flow_rate.iter().map(|p| p.1).collect();
    assert!(slow.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    let s2 = gradient_graph(&t.at(2.0).unwrap());
    for l in ["l5", "l6"] {
        let i = s2.network().link_index(l).unwrap();
        assert_eq!(s2.graph().out_degree(Vertex::Link(i)), 0);
        let g = forward_grad(&s2, &Perturbation::link(l, Direction::Up)).unwrap();
        assert!(g.flow_gradient.values().all(|v| *v == 0.0));
    }
}

#[test]
fn shaping_plan_reproduces() {
    let n = fixtures::shaping();
    let low: Vec<FlowId> = fixtures::SHAPING_LOW_PRIORITY.iter().map(|f| FlowId::from(*f)).collect();
    let plan = accelerate_flow(&n, "f7", &low, 1.25).unwrap();
    let order: Vec<&str> = plan.actions.iter().map(|a| a.flow.as_str()).collect();
    assert_eq!(order, ["f4", "f3", "f8"]);
    assert!(close(plan.final_target_rate(), 16.875));
    let after = gradient_graph(&apply_plan(&n, &plan).unwrap());
    assert!(close(after.rate("f7").unwrap(), plan.final_target_rate()));
    for a in &plan.actions {
        assert!(close(after.rate(a.flow.as_str()).unwrap(), a.shaper_rate), "{}", a.flow);
    }
}

#[test]
fn ladder_gain() {
    let s = gradient_graph(&fixtures::ladder());
    let g = forward_grad(&s, &Perturbation::flow("f0", Direction::Down)).unwrap();
    assert!(close(g.flow("fc").unwrap().abs(), 2.0));
}

#[test]
fn fat_tree_fold_against_sweep() {
    let t = tree();
    let r = taper_fold(&t).unwrap();
    let gap = |tau: f64| {
        let rates = gradient_graph(&t.at(tau).unwrap()).rates();
        let lo = rates.values().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.values().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let first = (1000..3000)
        .map(|k| k as f64 * 0.001)
        .find(|&tau| gap(tau) < 1e-9)
        .unwrap();
    assert!((first - r.tau_star).abs() <= 0.002, "{first} vs {}", r.tau_star);
    assert_eq!(gradient_graph(&t.at(r.tau_star).unwrap()).levels().flow_levels().len(), 1);
    assert!(gradient_graph(&t.at(r.probe_below).unwrap()).levels().flow_levels().len() >= 2);
}

#[test]
fn first_stage_rho_is_a_fold() {
    let n = fixtures::shaping();
    let s = gradient_graph(&n);
    let low: Vec<FlowId> = fixtures::SHAPING_LOW_PRIORITY.iter().map(|f| FlowId::from(*f)).collect();
    let plan = accelerate_flow(&n, "f7", &low, 1.25).unwrap();
    let rho = plan.stages[0].rho;
    let f = plan.stages[0].flows[0].as_str();
    let r = s.rate(f).unwrap();
    let edges = |cap: f64| -> Vec<(String, String)> {
        let shaped = gradient_graph(&n.with_private_link(f, "__shaper", cap).unwrap());
        let mut e: Vec<(String, String)> = shaped
            .graph()
            .edges()
            .into_iter()
            .map(|(a, b, _)| (shaped.name(a).to_owned(), shaped.name(b).to_owned()))
            .filter(|(a, b)| !a.starts_with("__") && !b.starts_with("__"))
            .collect();
        e.sort();
        e
    };
    let near = edges(r - (rho - 1e-3));
    let at = edges(r - rho);
    assert_ne!(near, at);
    assert_eq!(near, edges(r - 1e-3));
}
