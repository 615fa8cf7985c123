//! Simulation and divergence-time estimation for neighbour-dependent
//! nucleotide substitution processes.
//!
//! The crate implements the RN+YpR model class: a Rzhetsky-Nei single-site
//! rate matrix combined with extra substitution rates between YpR
//! dinucleotides (CG, CA, TG, TA). The simplest non-trivial member is the
//! Jukes-Cantor model with CpG influence (all base rates 1, plus rate `r`
//! for CG -> CA and CG -> TG).
//!
//! Functionality is split by role:
//!
//! * [`model`] — substitution parameters, the per-site rate rule, and the
//!   encoded finite-state chains (4, 6, 9, 36 and 144 states) on which all
//!   analytic quantities are computed;
//! * [`kernels`] — matrix exponentials, stationary frequencies, pair
//!   frequencies along one branch and across two branches, closed-form decay
//!   curves and asymptotic variances;
//! * [`simulator`] — exact event-driven simulation of the full chain on
//!   circular sequences, plus the two experimental settings
//!   (ancestor/descendant and two diverged descendants);
//! * [`estimators`] — observed alignment statistics, time estimation by
//!   monotone curve inversion and asymptotic confidence intervals;
//! * [`cli`] — the `yprsim` command-line tool;
//! * [`validate`] — the self-check suite behind `yprsim validate`.

pub mod cli;
pub mod estimators;
pub mod fasta;
pub mod kernels;
pub mod model;
pub mod simulator;
pub mod validate;

pub use estimators::{ObservedStats, TimeEstimate};
pub use model::chain::EncodedChain;
pub use model::sequence::{Nucleotide, Sequence};
pub use model::{SubstitutionParams, YprTransition};
pub use simulator::{AlignedPair, ExperimentSpec, PairMode};
