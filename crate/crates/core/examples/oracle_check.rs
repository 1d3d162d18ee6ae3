//! Check the solver and gradients against the exact water-filling oracle on
//! a few random networks.

use qtbs::oracle::{random_network, waterfill, FdOracle, Limits};
use qtbs::{forward_grad, gradient_graph, Direction, ElementId, Perturbation};

fn main() -> anyhow::Result<()> {
    for seed in 0..5 {
        let net = random_network(seed, Limits::new(12, 30, 4));
        let sol = gradient_graph(&net);
        let exact = waterfill(&net);
        let worst = sol
            .rates()
            .iter()
            .map(|(f, r)| (r - exact.rate[f]).abs() / exact.rate[f])
            .fold(0.0, f64::max);

        let fd = FdOracle::new(&net);
        let delta = fd.suggest_delta();
        let mut gap: f64 = 0.0;
        for l in net.links() {
            let x = ElementId::Link(l.id.clone());
            let g = forward_grad(&sol, &Perturbation { target: x.clone(), direction: Direction::Down })?;
            let o = fd.gradient(&x, Direction::Down, delta)?;
            for (f, v) in &o.flow {
                gap = gap.max((g.flow_gradient[f] - v).abs());
            }
        }
        println!(
            "seed {seed}: {} links, {} flows, rate error {worst:.1e}, gradient gap {gap:.1e} (delta {delta:.1e})",
            net.num_links(),
            net.num_flows()
        );
    }
    Ok(())
}
