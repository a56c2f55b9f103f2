//! Metrics, exact oracles and statistical tests.

pub mod figure1;
pub mod metrics;
pub mod oracle;
pub mod stats;

pub use figure1::{default_grid, figure1_curves, Figure1Row, Method};
pub use metrics::{
    acceptance_rate, block_efficiency, block_efficiency_pooled, mbsu, walltime_improvement, MetricsRecord,
};
pub use oracle::{
    exact_sequence_distribution, kseq_exact_acceptance, multi_round_exact_acceptance, plackett_luce_prob,
    rrs_exact_law, rrs_exact_outcome,
};
pub use stats::{
    chi_square_test, empirical_law, empirical_law_map, sharded_counts, sharded_trials, tv_distance,
    tv_distance_maps,
};
