//! Speed up one flow by capping low-priority ones.

use qtbs::{accelerate_flow, apply_plan, fixtures, gradient_graph, FlowId};

fn main() -> anyhow::Result<()> {
    let net = fixtures::shaping();
    let low: Vec<FlowId> = fixtures::SHAPING_LOW_PRIORITY.iter().map(|f| FlowId::from(*f)).collect();
    let before = gradient_graph(&net);
    let floor = before.rates().values().copied().fold(f64::INFINITY, f64::min);

    let plan = accelerate_flow(&net, "f7", &low, floor)?;
    println!("f7 starts at {:.3}, floor {:.3}", plan.initial_target_rate, floor);
    for (i, st) in plan.stages.iter().enumerate() {
        let flows: Vec<&str> = st.flows.iter().map(|f| f.as_str()).collect();
        println!("stage {}: shape {:?} by {:.3} (slope {:.3})", i + 1, flows, st.rho, st.target_slope);
    }
    for a in &plan.actions {
        println!("  cap {} at {:.3} -> f7 {:.3}", a.flow, a.shaper_rate, a.predicted_target_rate);
    }

    let after = gradient_graph(&apply_plan(&net, &plan)?);
    println!("\n{:<6} {:>8} {:>8}", "flow", "before", "after");
    for (f, r) in before.rates() {
        println!("{:<6} {:>8.3} {:>8.3}", f, r, after.rate(f.as_str()).unwrap_or(f64::NAN));
    }
    Ok(())
}
