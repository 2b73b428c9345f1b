//! Experiment runner for spectral-basis policy iteration on gridworlds.
//!
//! Each experiment resolves an [`ExperimentConfig`], produces an
//! [`ExperimentReport`] and writes it under `<out>/<experiment>/`.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{parse_config_text, ExperimentConfig, ExperimentId, RewardIndex};
pub use experiments::run;
pub use report::{ExperimentReport, RunRow};
