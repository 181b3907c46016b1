//! Experiment plumbing: configuration, the experiment registry, the
//! criteria suite and instance persistence.

pub mod config;
pub mod persist;
pub mod registry;
pub mod suite;

pub use config::{ExperimentConfig, Format};
pub use persist::{load_instance, save_instance, HardInstance, InstanceRecord};
pub use registry::{run, EXPERIMENTS};
