// `!(x >= 0.0)` is how NaN inputs get rejected, and the index loops walk
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocation;
pub mod formulation;
pub mod metrics;
pub mod lp;
pub mod markup;
pub mod milp;
pub mod model;
pub mod report;
pub mod scenario;
pub mod strategy;
pub mod synth;
