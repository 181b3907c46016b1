//! Monte Carlo laboratory for lower bounds on testing convexity under the
//! standard Gaussian distribution.
//!
//! The crate samples the hard instances used in those lower bounds
//! (Nazarov bodies, adaptive "flap" instances, tolerant instances and
//! polynomial threshold functions), runs one-sided testers against them and
//! checks the quantitative probability claims by simulation. Every experiment
//! produces an [`report::ExperimentReport`]; the `lab` binary drives them.

pub mod adaptive;
pub mod error;
pub mod gauss;
pub mod lab;
pub mod nazarov;
pub mod ptf;
pub mod report;
pub mod stats;
pub mod testers;
pub mod tolerant;

pub use error::{LabError, Result};
pub use gauss::rng::{RngStream, StreamRng};
pub use report::ExperimentReport;
