//! Write the gradient graph of a fixture as DOT.
//!
//!     cargo run --example dot_export -- shaping | dot -Tsvg > shaping.svg

use anyhow::bail;
use qtbs::dot::{dot_size, to_dot};
use qtbs::{fixtures, gradient_graph};

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "shaping".into());
    let net = match name.as_str() {
        "b4" => fixtures::b4(),
        "fat_tree" => fixtures::fat_tree(),
        "shaping" => fixtures::shaping(),
        "twin_bottleneck" => fixtures::twin_bottleneck(),
        "double_path" => fixtures::double_path(),
        "ladder" => fixtures::ladder(),
        other => bail!("no fixture named {other}"),
    };
    let sol = gradient_graph(&net);
    let (v, e) = dot_size(&sol, true);
    eprintln!("{name}: {v} vertices, {e} edges");
    print!("{}", to_dot(&sol, true));
    Ok(())
}
