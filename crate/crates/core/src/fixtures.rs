//! Reference networks bundled with the crate.
//!
//! * `b4`: a 12-site WAN with every cable modelled as two simplex links
//!   (`lN` one way, `lNr` back) and 48 flows, half of them reverse paths.
//! * `fat_tree`: two-level binary fat tree, leaves `l1`..`l4`, spine `l5`,
//!   `l6`, every link at 20.
//! * `shaping`: six links, eight flows; `f7` is the flow to speed up.
//! * `twin_bottleneck`, `double_path`: small gradient examples.
//! * `ladder`: one flow fanning out to two and back in, so a unit change at
//!   `f0` moves `fc` by two.

use crate::network::{parse_network, Network};

pub const B4_JSON: &str = include_str!("../fixtures/b4.json");
pub const FAT_TREE_JSON: &str = include_str!("../fixtures/fat_tree.json");
pub const SHAPING_JSON: &str = include_str!("../fixtures/shaping.json");
pub const TWIN_BOTTLENECK_JSON: &str = include_str!("../fixtures/twin_bottleneck.json");
pub const DOUBLE_PATH_JSON: &str = include_str!("../fixtures/double_path.json");
pub const LADDER_JSON: &str = include_str!("../fixtures/ladder.json");

/// Spine links of the fat tree.
pub const FAT_TREE_SPINE: [&str; 2] = ["l5", "l6"];

/// Flows allowed to be shaped in the shaping fixture.
pub const SHAPING_LOW_PRIORITY: [&str; 4] = ["f1", "f3", "f4", "f8"];

fn load(text: &str) -> Network {
    parse_network(text).expect("bundled fixture parses")
}

pub fn b4() -> Network {
    load(B4_JSON)
}

pub fn fat_tree() -> Network {
    load(FAT_TREE_JSON)
}

pub fn shaping() -> Network {
    load(SHAPING_JSON)
}

pub fn twin_bottleneck() -> Network {
    load(TWIN_BOTTLENECK_JSON)
}

pub fn double_path() -> Network {
    load(DOUBLE_PATH_JSON)
}

pub fn ladder() -> Network {
    load(LADDER_JSON)
}
