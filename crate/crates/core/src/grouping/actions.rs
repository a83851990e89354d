use super::{GroupingError, MobilityReport, Partition};
use crate::phy::{ApConfig, UserProfile};

/// Enumeration is exhaustive, so the action space is bounded.
pub const MAX_ENUMERATED_USERS: usize = 10;

/// All schedulable partitions of `users`, in canonical order.
///
/// Blocks respect the group-size cap and the antenna budget. The order is
/// lexicographic over canonical partitions, so the all-singleton partition
/// is always at index 0.
pub fn enumerate_actions(
    users: &[UserProfile],
    ap: &ApConfig,
) -> Result<Vec<Partition>, GroupingError> {
    if users.is_empty() {
        return Err(GroupingError::NoUsers);
    }
    if users.len() > MAX_ENUMERATED_USERS {
        return Err(GroupingError::TooManyUsers {
            n: users.len(),
            max: MAX_ENUMERATED_USERS,
        });
    }
    if let Some(u) = users.iter().find(|u| u.n_streams > ap.n_tx_antennas) {
        return Err(GroupingError::UnschedulableUser {
            user: u.id,
            streams: u.n_streams,
            n_tx: ap.n_tx_antennas,
        });
    }

    let mut out = Vec::new();
    let mut blocks: Vec<(Vec<usize>, u32)> = Vec::new();
    grow(users, ap, 0, &mut blocks, &mut out);
    let mut partitions = out
        .into_iter()
        .map(|groups| {
            Partition::new(
                groups
                    .into_iter()
                    .map(|g| g.into_iter().map(|i| users[i].id).collect())
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    partitions.sort_unstable();
    Ok(partitions)
}

// Restricted-growth enumeration: user `next` joins an existing block or opens a new one.
fn grow(
    users: &[UserProfile],
    ap: &ApConfig,
    next: usize,
    blocks: &mut Vec<(Vec<usize>, u32)>,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    if next == users.len() {
        out.push(blocks.iter().map(|(members, _)| members.clone()).collect());
        return;
    }
    let streams = users[next].n_streams;
    for b in 0..blocks.len() {
        let (members, used) = &blocks[b];
        if members.len() < ap.group_cap() && used + streams <= ap.n_tx_antennas {
            blocks[b].0.push(next);
            blocks[b].1 += streams;
            grow(users, ap, next + 1, blocks, out);
            blocks[b].0.pop();
            blocks[b].1 -= streams;
        }
    }
    blocks.push((vec![next], streams));
    grow(users, ap, next + 1, blocks, out);
    blocks.pop();
}

/// Indices of the actions in which no mobile user shares a group.
///
/// Mobile users may still be served as SU singletons, so the all-singleton
/// partition always survives.
pub fn mobility_filter(actions: &[Partition], report: &MobilityReport) -> Vec<usize> {
    actions
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.groups()
                .iter()
                .filter(|g| g.len() >= 2)
                .all(|g| g.iter().all(|&u| !report.is_mobile(u)))
        })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bell-number oracle via the Bell triangle.
    fn bell(n: usize) -> usize {
        let mut row = vec![1usize];
        for _ in 1..n {
            let mut next = vec![*row.last().unwrap()];
            for &v in &row {
                next.push(next.last().unwrap() + v);
            }
            row = next;
        }
        *row.last().unwrap()
    }

    fn one_stream(n: u32) -> Vec<UserProfile> {
        (0..n).map(|i| UserProfile::new(i, 30.0)).collect()
    }

    #[test]
    fn small_counts() {
        let ap = ApConfig::new(4);
        let one = enumerate_actions(&one_stream(1), &ap).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].to_string(), "[0]");
        let three = enumerate_actions(&one_stream(3), &ap).unwrap();
        assert_eq!(three.len(), 5);
        let names: Vec<_> = three.iter().map(|p| p.to_string()).collect();
        assert_eq!(
            names,
            ["[0][1][2]", "[0][1,2]", "[0,1][2]", "[0,1,2]", "[0,2][1]"]
        );
    }

    #[test]
    fn unconstrained_counts_match_bell_numbers() {
        let mut ap = ApConfig::new(8);
        ap.max_group_size = 8;
        for n in 1..=4 {
            assert_eq!(
                enumerate_actions(&one_stream(n), &ap).unwrap().len(),
                bell(n as usize)
            );
        }
    }

    #[test]
    fn stream_budget_filters() {
        let users: Vec<_> = (0..3)
            .map(|i| UserProfile::new(i, 30.0).with_streams(2))
            .collect();
        let actions = enumerate_actions(&users, &ApConfig::new(4)).unwrap();
        assert_eq!(actions.len(), 4);
        assert!(actions
            .iter()
            .all(|p| p.groups().iter().all(|g| g.len() <= 2)));
    }

    #[test]
    fn unschedulable_user() {
        let users = vec![UserProfile::new(0, 30.0).with_streams(3)];
        assert!(matches!(
            enumerate_actions(&users, &ApConfig::new(2)),
            Err(GroupingError::UnschedulableUser { .. })
        ));
        assert_eq!(
            enumerate_actions(&[], &ApConfig::new(2)),
            Err(GroupingError::NoUsers)
        );
    }

    #[test]
    fn group_cap_is_at_most_four() {
        let mut ap = ApConfig::new(8);
        ap.max_group_size = 8;
        let actions = enumerate_actions(&one_stream(5), &ap).unwrap();
        // B(5) = 52 minus the single 5-user block
        assert_eq!(actions.len(), 51);
    }

    #[test]
    fn filter_examples() {
        let users = one_stream(3);
        let actions = enumerate_actions(&users, &ApConfig::new(4)).unwrap();
        let ids = users.iter().map(|u| u.id);
        let nobody = MobilityReport::all_static(ids.clone());
        assert_eq!(mobility_filter(&actions, &nobody), vec![0, 1, 2, 3, 4]);

        let mut everyone = nobody.clone();
        everyone.entries.iter_mut().for_each(|e| e.is_mobile = true);
        assert_eq!(mobility_filter(&actions, &everyone), vec![0]);

        let mut third = nobody;
        third.entries[2].is_mobile = true;
        let kept: Vec<_> = mobility_filter(&actions, &third)
            .into_iter()
            .map(|i| actions[i].to_string())
            .collect();
        assert_eq!(kept, ["[0][1][2]", "[0,1][2]"]);
        assert!(actions[0].is_all_singletons());
    }
}
