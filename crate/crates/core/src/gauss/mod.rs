//! Gaussian special functions, seeded random streams, Haar frames and
//! Monte Carlo checks of the standard Gaussian concentration inequalities.

pub mod frame;
pub mod rng;
pub mod special;
pub mod tails;

pub use frame::{householder_complement, sample_haar_frame, Frame};
pub use rng::{fill_normals, par_blocks, with_workers, RngStream, StreamRng};
pub use special::{cdf, isf, pdf, quantile, sf};
pub use tails::verify_tail_bounds;
