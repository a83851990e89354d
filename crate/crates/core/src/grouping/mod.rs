//! Phase I: MU-MIMO user grouping and SU/MU mode selection.
//!
//! Users whose CSI decorrelates between soundings are excluded from MU groups;
//! the remaining choice among legal partitions is learned with tabular
//! Q-learning whose reward is the epoch's downlink goodput.

mod actions;
mod baseline;
mod mobility;
mod partition;
mod qlearn;

use thiserror::Error;

use crate::phy::UserId;

pub use actions::{enumerate_actions, mobility_filter, MAX_ENUMERATED_USERS};
pub use baseline::{baseline_grouping, oracle_best, BaselineKind, MAX_ORACLE_USERS};
pub use mobility::{detect_mobility, MobilityEntry, MobilityReport, DEFAULT_MOBILITY_THRESHOLD};
pub use partition::Partition;
pub use qlearn::{
    encode_state, q_update, select_action, train, GroupingEnv, QTable, RewardKind, RlHyperParams,
    SnrBucket, StateKey, TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupingError {
    #[error("malformed partition: {0}")]
    MalformedPartition(String),
    #[error("user {user} needs {streams} streams but the AP has {n_tx} antennas")]
    UnschedulableUser {
        user: UserId,
        streams: u32,
        n_tx: u32,
    },
    #[error("{n} users exceeds the limit of {max}")]
    TooManyUsers { n: usize, max: usize },
    #[error("no users to group")]
    NoUsers,
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("Q-table has {found} actions, scenario has {expected}")]
    ActionCountMismatch { expected: usize, found: usize },
    #[error("malformed Q-table document: {0}")]
    MalformedQTable(String),
}
