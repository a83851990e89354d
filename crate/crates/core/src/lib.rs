//! MuViS: a deterministic simulator for MU-MIMO user grouping and adaptive
//! video streaming over 802.11ac-style downlinks.
//!
//! Phase I ([`grouping`]) decides each epoch which users share a MU-MIMO
//! transmission, using a tabular Q-learning agent over legal partitions.
//! Phase II ([`abr`]) picks per-segment bitrates with a drift-plus-penalty
//! rule. [`engine`] ties both to the channel ([`phy`]) and airtime ([`mac`])
//! models.

pub mod abr;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod grouping;
pub mod mac;
pub mod phy;
pub mod report;

pub use config::{parse_config, Policy, SimConfig};
pub use engine::{run_sim, run_sim_with, sweep, MetricsReport, SimError, SweepAxis};
