//! Solve a network and print rates, fair shares and levels.
//!
//!     cargo run --example solve [network.json]

use anyhow::Context;
use qtbs::{fixtures, gradient_graph, parse_network, Vertex};

fn main() -> anyhow::Result<()> {
    let net = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {path}"))?;
            parse_network(&text)?
        }
        None => fixtures::b4(),
    };
    let sol = gradient_graph(&net);
    let levels = sol.levels();

    println!("{:<8} {:>10} {:>6}  bottlenecks", "flow", "rate", "level");
    for (f, flow) in net.flows().iter().enumerate() {
        let at: Vec<String> = sol.graph().bottlenecks(f).iter().map(|&l| net.link(l).id.to_string()).collect();
        println!("{:<8} {:>10.3} {:>6}  {}", flow.id, sol.rate_at(f), levels.of(Vertex::Flow(f)), at.join(","));
    }
    println!();
    println!("{:<8} {:>10} {:>10}", "link", "capacity", "share");
    for (l, link) in net.links().iter().enumerate() {
        println!("{:<8} {:>10.3} {:>10.3}", link.id, link.capacity, sol.fair_share_at(l));
    }
    let st = sol.stats();
    println!("\n{} heap pops, {} key updates", st.pops, st.key_updates);
    Ok(())
}
