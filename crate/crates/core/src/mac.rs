//! Sounding overhead and per-epoch airtime scheduling.
//!
//! Each group is sounded once per epoch (NDPA, NDP, one compressed report per
//! member and a report poll for every member after the first). The remaining
//! data time is split equally between groups in round-robin; members of an MU
//! group transmit concurrently during their group's share.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::InvalidField;
use crate::grouping::Partition;
use crate::phy::{LinkState, UserId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("group size must be at least 1, got {0}")]
    EmptyGroup(usize),
    #[error("partition has no groups")]
    EmptyPartition,
    #[error("sounding overhead {overhead_ms} ms leaves no data time in a {epoch_ms} ms epoch")]
    DegenerateEpoch { overhead_ms: f64, epoch_ms: f64 },
    #[error("no link state for user {0}")]
    MissingLink(UserId),
}

/// Frame durations of the sounding exchange, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    pub t_ndpa_ms: f64,
    pub t_ndp_ms: f64,
    pub t_report_ms: f64,
    pub t_poll_ms: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            t_ndpa_ms: 0.1,
            t_ndp_ms: 0.1,
            t_report_ms: 0.5,
            t_poll_ms: 0.05,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), InvalidField> {
        let fields = [
            ("t_ndpa_ms", self.t_ndpa_ms),
            ("t_ndp_ms", self.t_ndp_ms),
            ("t_report_ms", self.t_report_ms),
            ("t_poll_ms", self.t_poll_ms),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(InvalidField::new(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Airtime spent sounding a group of `group_size` users.
pub fn sounding_overhead(group_size: usize, t: &TimingParams) -> Result<f64, MacError> {
    if group_size < 1 {
        return Err(MacError::EmptyGroup(group_size));
    }
    let k = group_size as f64;
    Ok(t.t_ndpa_ms + t.t_ndp_ms + k * t.t_report_ms + (k - 1.0) * t.t_poll_ms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodputReport {
    pub goodput_mbps: BTreeMap<UserId, f64>,
    /// Indexed like `Partition::groups`.
    pub airtime_fraction: Vec<f64>,
    pub overhead_ms: f64,
    pub epoch_ms: f64,
}

impl GoodputReport {
    pub fn overhead_fraction(&self) -> f64 {
        self.overhead_ms / self.epoch_ms
    }

    pub fn aggregate_mbps(&self) -> f64 {
        self.goodput_mbps.values().sum()
    }

    pub fn min_user_mbps(&self) -> f64 {
        self.goodput_mbps
            .values()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Expected goodput of every user over one epoch.
pub fn schedule_epoch(
    partition: &Partition,
    links: &[LinkState],
    epoch_ms: f64,
    t: &TimingParams,
) -> Result<GoodputReport, MacError> {
    let groups = partition.groups();
    if groups.is_empty() {
        return Err(MacError::EmptyPartition);
    }
    let overhead_ms = groups
        .iter()
        .map(|g| sounding_overhead(g.len(), t))
        .sum::<Result<f64, _>>()?;
    if overhead_ms >= epoch_ms {
        return Err(MacError::DegenerateEpoch {
            overhead_ms,
            epoch_ms,
        });
    }
    let share_ms = (epoch_ms - overhead_ms) / groups.len() as f64;
    let share_fraction = share_ms / epoch_ms;

    let mut goodput_mbps = BTreeMap::new();
    for user in partition.users() {
        let link = links
            .iter()
            .find(|l| l.user_id == user)
            .ok_or(MacError::MissingLink(user))?;
        goodput_mbps.insert(user, link.phy_rate_mbps * (1.0 - link.per) * share_fraction);
    }
    Ok(GoodputReport {
        goodput_mbps,
        airtime_fraction: vec![share_fraction; groups.len()],
        overhead_ms,
        epoch_ms,
    })
}
