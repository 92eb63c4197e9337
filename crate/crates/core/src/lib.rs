//! Poisson multinomial distributions: exact pmf by characteristic-function
//! inversion, a normal approximation, Monte Carlo simulation, and the
//! applications built on them (election summaries, aggregated-count
//! regression, confusion-matrix intervals).

pub mod bench;
pub mod confusion;
pub mod datasets;
pub mod error;
pub mod exact;
mod fft;
pub mod mle;
pub mod mvn;
pub mod normal;
pub mod oracle;
pub mod sim;
pub mod spm;
pub mod voting;

pub use error::{advice, PmdError, Result};
pub use exact::{cdf_at, pmf_at, pmf_blockwise, pmf_full, ExactOptions, ExactPmd, PmfArray};
pub use normal::{na_cdf_at, na_pmf_at, NormalApprox};
pub use sim::{sample, sim_pmf_at};
pub use spm::{detect_blocks, moments, BlockPartition, OutcomeVector, Spm};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spm.md")]
    mod spm {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/normal.md")]
    mod normal {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/voting.md")]
    mod voting {}
    #[doc = include_str!("../../../book/src/regression.md")]
    mod regression {}
    #[doc = include_str!("../../../book/src/confusion.md")]
    mod confusion {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
}
