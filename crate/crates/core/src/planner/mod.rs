//! Traffic-shaping plans and fat-tree taper search.

pub mod shaping;
pub mod taper;

pub use shaping::{accelerate_flow, apply_plan, shaper_link_id, ShapingAction, ShapingError, ShapingPlan, ShapingStage};
pub use taper::{taper_fold, FoldMethod, TaperError, TaperReport, TaperTemplate};
