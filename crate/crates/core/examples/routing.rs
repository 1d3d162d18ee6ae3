//! Best path for a new flow across the B4 fixture, against the fewest-hop path.

use qtbs::routing::{min_hop_path, RoutingError};
use qtbs::{fixtures, max_rate_path, rate_if_routed};

fn main() -> anyhow::Result<()> {
    let net = fixtures::b4();
    let (src, dst) = ("DC4", "DC11");

    let short = min_hop_path(&net, src, dst)?;
    let short_rate = rate_if_routed(&net, &short)?;
    let best = max_rate_path(&net, src, dst)?;

    let ids = |p: &[qtbs::LinkId]| p.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" -> ");
    println!("fewest hops  {:<24} rate {:.3}", ids(&short), short_rate);
    println!("max rate     {:<24} rate {:.3}", ids(&best.links), best.predicted_rate);
    println!("gain {:.2}%", 100.0 * (best.predicted_rate / short_rate - 1.0));

    println!("\ndistances from {src}:");
    for (r, d) in &best.distance {
        println!("  {r:<5} {d:.4}");
    }

    match max_rate_path(&net, src, "DC99") {
        Err(RoutingError::UnknownRouter(r)) => println!("\nno router {r}"),
        other => println!("\nunexpected: {other:?}"),
    }
    Ok(())
}
