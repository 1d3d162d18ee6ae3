//! Which flows move, and by how much, when one link or flow changes.

use qtbs::gradients::two_sided;
use qtbs::{fixtures, forward_grad, gradient_bound, gradient_graph, Direction, ElementId, Perturbation};

fn show(title: &str, g: &qtbs::GradientResult) {
    println!("{title}");
    let moved: Vec<_> = g.flow_gradient.iter().filter(|(_, v)| **v != 0.0).collect();
    if moved.is_empty() {
        println!("  nothing moves");
    }
    for (f, v) in moved {
        println!("  {f:<6} {v:+.4}");
    }
}

fn main() -> anyhow::Result<()> {
    let sol = gradient_graph(&fixtures::twin_bottleneck());
    let g = forward_grad(&sol, &Perturbation::link("l1", Direction::Down))?;
    show("twin bottleneck, c_l1 down", &g);

    let sol = gradient_graph(&fixtures::double_path());
    let g = forward_grad(&sol, &Perturbation::flow("f1", Direction::Down))?;
    show("double path, f1 shaped down", &g);
    println!("  bound {:.3}", gradient_bound(&sol));

    // A link tied with another only moves things in one direction.
    let sol = gradient_graph(&fixtures::fat_tree());
    let (up, down, agree) = two_sided(&sol, &ElementId::Link("l5".into()), 1e-9)?;
    show("fat tree, l5 up", &up);
    show("fat tree, l5 down", &down);
    println!("  directions agree: {agree}");

    // Region of influence: everything a change at f4 can reach.
    let sol = gradient_graph(&fixtures::shaping());
    let reach = sol.region_of_influence(&ElementId::Flow("f4".into()))?;
    let names: Vec<String> = reach.iter().map(|e| e.to_string()).collect();
    println!("shaping fixture, reach of f4: {}", names.join(" "));
    Ok(())
}
