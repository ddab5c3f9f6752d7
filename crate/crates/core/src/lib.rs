//! Bayesian comparison of hypotheses about sequential trails.
//!
//! Trails are modelled as a first-order Markov chain. Each hypothesis is a
//! matrix of transition beliefs that gets turned into Dirichlet pseudo counts
//! with a chip-distribution scheme; hypotheses are then compared by the
//! marginal likelihood of the observed transitions and their Bayes factors.
//!
//! The pieces, bottom-up:
//!
//! - [`corpus`]: trails, state spaces, sparse transition counts.
//! - [`hypothesis`]: builders for hypothesis matrices.
//! - [`elicitation`]: chip distribution into Dirichlet priors, toy priors.
//! - [`evidence`]: log marginal likelihood, Bayes factors, rankings.
//! - [`synth`]: synthetic networks and walkers with known mechanisms.
//! - [`experiment`], [`suite`], [`report`]: orchestration and report files.

pub mod corpus;
pub mod elicitation;
pub mod error;
pub mod evidence;
pub mod experiment;
pub mod hypothesis;
pub mod report;
pub mod suite;
pub mod synth;

pub use error::{Error, Result};
