//! Architecture weights, ε-greedy single-path sampling, and the alternating
//! ω/λ search loop.

mod arch;
mod run;
mod sample;

pub use arch::{argmax, compute_alpha, derive, ArchParams};
pub use run::{
    epsilon_at, mixture_assignment, run_search, EpochRecord, RestartReport, SearchConfig,
    SearchError, SearchMode, SearchOutcome, SearchReport, SearchRun,
};
pub use sample::{lambda_grad, mixture_lambda_grad, sample_path, SampledLink, SampledPath};
