use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GroupingError;
use crate::phy::{ApConfig, Mode, UserId, UserProfile};

/// A grouping action: every user sits in exactly one group. Singletons are
/// served in SU mode, larger groups in MU mode.
///
/// Stored canonically: members ascending within a group, groups ordered by
/// their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Partition {
    groups: Vec<Vec<UserId>>,
}

impl Partition {
    pub fn new(groups: Vec<Vec<UserId>>) -> Result<Self, GroupingError> {
        let mut seen = BTreeSet::new();
        let mut groups: Vec<Vec<UserId>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        for g in &groups {
            if g.is_empty() {
                return Err(GroupingError::MalformedPartition("empty group".into()));
            }
            for &u in g {
                if !seen.insert(u) {
                    return Err(GroupingError::MalformedPartition(format!(
                        "user {u} appears twice"
                    )));
                }
            }
        }
        groups.sort_unstable();
        Ok(Self { groups })
    }

    pub fn singletons(ids: impl IntoIterator<Item = UserId>) -> Self {
        let mut groups: Vec<Vec<UserId>> = ids.into_iter().map(|u| vec![u]).collect();
        groups.sort_unstable();
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<UserId>] {
        &self.groups
    }

    pub fn n_users(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_all_singletons(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }

    pub fn group_of(&self, user: UserId) -> Option<&[UserId]> {
        self.groups
            .iter()
            .find(|g| g.contains(&user))
            .map(Vec::as_slice)
    }

    pub fn mode_of(&self, user: UserId) -> Option<Mode> {
        self.group_of(user).map(|g| Mode::for_group_size(g.len()))
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.groups.iter().flatten().copied()
    }

    /// Checks the partition covers exactly `users` and every group is
    /// schedulable on `ap`.
    pub fn check(&self, users: &[UserProfile], ap: &ApConfig) -> Result<(), GroupingError> {
        let expected: BTreeSet<UserId> = users.iter().map(|u| u.id).collect();
        let actual: BTreeSet<UserId> = self.users().collect();
        if expected != actual || actual.len() != self.n_users() {
            return Err(GroupingError::MalformedPartition(format!(
                "{self} does not cover the user set exactly"
            )));
        }
        for g in &self.groups {
            if g.len() > ap.group_cap() {
                return Err(GroupingError::MalformedPartition(format!(
                    "group of {} exceeds cap {}",
                    g.len(),
                    ap.group_cap()
                )));
            }
            let streams: u32 = g
                .iter()
                .map(|id| {
                    users
                        .iter()
                        .find(|u| u.id == *id)
                        .map_or(0, |u| u.n_streams)
                })
                .sum();
            if streams > ap.n_tx_antennas {
                return Err(GroupingError::MalformedPartition(format!(
                    "group {:?} needs {streams} streams, AP has {}",
                    g, ap.n_tx_antennas
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            f.write_str("[")?;
            for (i, u) in g.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{u}")?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = GroupingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GroupingError::MalformedPartition(format!("cannot parse partition {s:?}"));
        let s = s.trim();
        let inner = s
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?;
        let groups = inner
            .split("][")
            .map(|g| {
                g.split(',')
                    .map(|u| u.trim().parse::<u32>().map(UserId).map_err(|_| bad()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(groups)
    }
}

impl TryFrom<String> for Partition {
    type Error = GroupingError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Partition> for String {
    fn from(p: Partition) -> String {
        p.to_string()
    }
}
