//! Random-matrix bath experiment: non-Markovianity of `Υ` and `Ω` against
//! the effective dimension.

mod model;
mod protocol;
mod sweep;

pub use model::{build_random_bath, random_pure_state, RandomBathModel, RealEigen};
pub use protocol::{
    generic_n, generic_protocol, run_fig2_model, APlusDraw, Fig2Evaluator, ModelOutcome, ProtocolCounts,
    ProtocolDraws, TimeMode,
};
pub use sweep::{
    average_ranks, cell_seeds, moving_average, run_cell, run_fig2_protocol, spearman, sweep, ExperimentConfig, SweepResult, SweepRow,
};
