use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{enumerate_actions, mobility_filter, GroupingError, MobilityReport, Partition};
use crate::phy::{ApConfig, UserId, UserProfile};

pub const MAX_ORACLE_USERS: usize = 8;

/// Exhaustive search: evaluates every legal, mobility-filtered partition with
/// `expected_throughput` and returns the best one with its value. Ties go to
/// the partition that comes first in canonical order.
pub fn oracle_best<F, E>(
    users: &[UserProfile],
    ap: &ApConfig,
    report: &MobilityReport,
    mut expected_throughput: F,
) -> Result<(Partition, f64), E>
where
    F: FnMut(&Partition) -> Result<f64, E>,
    E: From<GroupingError>,
{
    if users.len() > MAX_ORACLE_USERS {
        return Err(GroupingError::TooManyUsers {
            n: users.len(),
            max: MAX_ORACLE_USERS,
        }
        .into());
    }
    let actions = enumerate_actions(users, ap)?;
    let mut best: Option<(usize, f64)> = None;
    for i in mobility_filter(&actions, report) {
        let value = expected_throughput(&actions[i])?;
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((i, value));
        }
    }
    let (i, value) = best.expect("the all-singleton partition always survives filtering");
    Ok((actions[i].clone(), value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    AllSu,
    /// One MU group filled with the highest-SNR static users.
    GreedySnr,
    /// Uniform over legal, mobility-filtered partitions.
    Random,
    /// Packs users into MU groups in id order, ignoring mobility.
    FullMu,
}

pub fn baseline_grouping<R: Rng + ?Sized>(
    kind: BaselineKind,
    users: &[UserProfile],
    ap: &ApConfig,
    report: &MobilityReport,
    rng: &mut R,
) -> Result<Partition, GroupingError> {
    let ids = || users.iter().map(|u| u.id);
    match kind {
        BaselineKind::AllSu => Ok(Partition::singletons(ids())),
        BaselineKind::GreedySnr => {
            let mut ranked: Vec<&UserProfile> =
                users.iter().filter(|u| !report.is_mobile(u.id)).collect();
            ranked.sort_by(|a, b| {
                b.base_snr_db
                    .total_cmp(&a.base_snr_db)
                    .then(a.id.cmp(&b.id))
            });
            let mut group: Vec<UserId> = Vec::new();
            let mut streams = 0;
            for u in ranked {
                if group.len() < ap.group_cap() && streams + u.n_streams <= ap.n_tx_antennas {
                    group.push(u.id);
                    streams += u.n_streams;
                }
            }
            let mut groups: Vec<Vec<UserId>> = ids()
                .filter(|id| !group.contains(id))
                .map(|id| vec![id])
                .collect();
            if !group.is_empty() {
                groups.push(group);
            }
            Partition::new(groups)
        }
        BaselineKind::Random => {
            let actions = enumerate_actions(users, ap)?;
            let legal = mobility_filter(&actions, report);
            Ok(actions[legal[rng.random_range(0..legal.len())]].clone())
        }
        BaselineKind::FullMu => {
            let mut sorted: Vec<&UserProfile> = users.iter().collect();
            sorted.sort_by_key(|u| u.id);
            let mut groups: Vec<(Vec<UserId>, u32)> = Vec::new();
            for u in sorted {
                if u.n_streams > ap.n_tx_antennas {
                    return Err(GroupingError::UnschedulableUser {
                        user: u.id,
                        streams: u.n_streams,
                        n_tx: ap.n_tx_antennas,
                    });
                }
                match groups.last_mut() {
                    Some((g, used))
                        if g.len() < ap.group_cap() && *used + u.n_streams <= ap.n_tx_antennas =>
                    {
                        g.push(u.id);
                        *used += u.n_streams;
                    }
                    _ => groups.push((vec![u.id], u.n_streams)),
                }
            }
            Partition::new(groups.into_iter().map(|(g, _)| g).collect())
        }
    }
}
