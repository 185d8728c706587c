//! Simulation and inference for the contextual stochastic block model.

pub mod combinatorics;
pub mod cycles;
pub mod error;
pub mod graph;
pub mod harness;
pub mod instance_io;
pub mod linalg;
pub mod lr_expansion;
pub mod model;
pub mod network;
pub mod oracle;
pub mod recovery;
pub mod rng;
pub mod saw;
pub mod stats;

pub use error::{Error, Result};
pub use graph::Graph;
pub use model::{derive_edge_probs, sample_instance, Instance, ModelParams, Truth};

pub use cycles::{
    count_cycles, cycle_statistic, detection_test, poisson_cycle_test, theoretical_moments, CycleEngine, CycleIndex,
    CycleMoments, CycleStatReport, DetectionResult, Family, PoissonTestResult,
};
pub use harness::{run_experiment, summarize, sweep_phase_diagram, ExperimentConfig, ResultTable, RunOptions, Task};
pub use instance_io::{load_instance, save_instance};
pub use lr_expansion::{
    empirical_loglr_from_instance, limiting_loglr_sample_h0, second_moment_bound, ExpansionTerm, GaussianShift,
    TermKind, TruncationConfig,
};
pub use oracle::{bayes_pairwise_posterior, exact_likelihood_ratio, exact_log_likelihood_ratio, naive_cycle_statistic};
pub use recovery::{
    fit_correlation_matrix, gaussian_sign_rounding, overlap, weak_recovery_pipeline, CorrelationMatrix, Overlap,
    RecoveryReport,
};
pub use saw::{pair_estimator, saw_pair_estimator_exact, PairEstimateMatrix, WalkConfig, WalkMethod};
