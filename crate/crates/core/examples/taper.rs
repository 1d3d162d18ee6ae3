//! How thin can the spine of a two-level fat tree get before it matters.

use qtbs::planner::FoldMethod;
use qtbs::{fixtures, taper_fold, TaperTemplate};

fn main() -> anyhow::Result<()> {
    let template = TaperTemplate {
        network: fixtures::fat_tree(),
        scale_links: fixtures::FAT_TREE_SPINE.iter().map(|l| (*l).into()).collect(),
        lambda: 20.0,
        tau0: 1.0,
    };
    let r = taper_fold(&template)?;
    let how = match r.method {
        FoldMethod::Linear => "from gradients",
        FoldMethod::Bisection => "by bisection",
    };
    println!("fold at tau = {:.6} ({how}), spine capacity {:.3}", r.tau_star, r.spine_capacity_at_fold);
    println!("slowest rate moves {:+.3}, fastest {:+.3} per unit tau", r.slow_gradient, r.fast_gradient);
    println!("\n{:>8} {:>10}", "tau", "slowest");
    for (tau, rate) in &r.slowest_flow_rate {
        println!("{tau:>8.4} {rate:>10.4}");
    }
    // Past the fold the spine no longer bottlenecks anyone.
    let wide = qtbs::gradient_graph(&template.at(2.0)?);
    let spine: Vec<bool> = fixtures::FAT_TREE_SPINE
        .iter()
        .map(|l| wide.is_bottleneck(wide.network().link_index(l).unwrap()))
        .collect();
    println!("\nat tau = 2 spine bottlenecks: {spine:?}");
    Ok(())
}
