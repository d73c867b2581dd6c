//! Fusing small classifier ensembles through a learned confidence tensor.
//!
//! Each of `k` base classifiers votes for one of `c` classes. Instead of
//! counting votes, the votes are combined through a `c × c × k` tensor whose
//! slice `t` says how much classifier `t`'s vote for class `s` should count
//! toward each class `r`. The tensor is trained by gradient descent on a
//! cross-entropy loss augmented with a smoothed margin term, while every
//! column of each slice keeps summing to that classifier's accuracy.
//!
//! ```
//! use confens::data::{generate_double_ring, split};
//! use confens::learners::{fit_bagged, BagParams};
//! use confens::loss::LossParams;
//! use confens::optim::{train, OptimizerConfig};
//!
//! let data = generate_double_ring(400, 0.15, 0)?;
//! let parts = split(&data, 0.8, 0)?;
//! let bag = fit_bagged(&parts.train, &BagParams { num_trees: 5, ..Default::default() }, 0)?;
//! let votes = bag.stack_predictions(&parts.train)?;
//!
//! let report = train(
//!     &votes,
//!     parts.train.labels(),
//!     bag.weights(),
//!     &LossParams::new(10.0, 5.0)?,
//!     &OptimizerConfig::default(),
//! )?;
//! assert!(report.loss_history.last() <= report.loss_history.first());
//! assert!(report.final_theta.constraint_residual() < 1e-6);
//! # Ok::<(), confens::Error>(())
//! ```
//!
//! The `book/` directory next to this crate walks through the pieces; its
//! code listings are compiled as doctests of this crate.

pub mod config;
pub mod data;
mod error;
pub mod experiment;
pub mod io;
pub mod learners;
pub mod loss;
pub mod optim;
pub mod seed;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tensor.md")]
    struct Tensor;
    #[doc = include_str!("../../../book/src/loss.md")]
    struct Loss;
    #[doc = include_str!("../../../book/src/gradient.md")]
    struct Gradient;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/voting.md")]
    struct Voting;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../README.md")]
    struct Readme;
}
