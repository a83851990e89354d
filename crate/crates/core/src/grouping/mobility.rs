use serde::{Deserialize, Serialize};

use crate::phy::{csi_correlation, CsiSnapshot, UserId};

pub const DEFAULT_MOBILITY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityEntry {
    pub user_id: UserId,
    /// `None` when fewer than two usable snapshots were available.
    pub correlation: Option<f64>,
    pub is_mobile: bool,
}

impl MobilityEntry {
    pub fn is_missing(&self) -> bool {
        self.correlation.is_none()
    }
}

/// Per-user movement verdicts, in the order the histories were supplied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MobilityReport {
    pub entries: Vec<MobilityEntry>,
}

impl MobilityReport {
    /// Everyone static; useful for scenarios without CSI tracking.
    pub fn all_static(users: impl IntoIterator<Item = UserId>) -> Self {
        Self {
            entries: users
                .into_iter()
                .map(|user_id| MobilityEntry {
                    user_id,
                    correlation: Some(1.0),
                    is_mobile: false,
                })
                .collect(),
        }
    }

    pub fn is_mobile(&self, user: UserId) -> bool {
        self.entries
            .iter()
            .find(|e| e.user_id == user)
            .is_none_or(|e| e.is_mobile)
    }

    pub fn mobile_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.entries
            .iter()
            .filter(|e| e.is_mobile)
            .map(|e| e.user_id)
    }

    pub fn correlation(&self, user: UserId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.user_id == user)
            .and_then(|e| e.correlation)
    }
}

/// Flags a user as mobile when its last two CSI snapshots correlate below
/// `threshold`. Users without two comparable snapshots are flagged mobile.
pub fn detect_mobility<'a, I>(histories: I, threshold: f64) -> MobilityReport
where
    I: IntoIterator<Item = (UserId, &'a [CsiSnapshot])>,
{
    let entries = histories
        .into_iter()
        .map(|(user_id, history)| {
            let correlation = match history {
                [.., prev, last] => csi_correlation(prev, last).ok(),
                _ => None,
            };
            MobilityEntry {
                user_id,
                correlation,
                is_mobile: correlation.is_none_or(|c| c < threshold),
            }
        })
        .collect();
    MobilityReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::synthesize_csi;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(speed: f64, seed: u64) -> Vec<CsiSnapshot> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CsiSnapshot::random(16, &mut rng);
        let b = synthesize_csi(&a, speed, 100.0, 5.18, &mut rng);
        vec![a, b]
    }

    #[test]
    fn static_and_walking_users() {
        let still = pair(0.0, 3);
        let walking = pair(1.0, 4);
        let r = detect_mobility(
            [
                (UserId(0), still.as_slice()),
                (UserId(1), walking.as_slice()),
            ],
            DEFAULT_MOBILITY_THRESHOLD,
        );
        assert_eq!(r.entries[0].correlation, Some(1.0));
        assert!(!r.is_mobile(UserId(0)));
        assert!(r.is_mobile(UserId(1)));
        assert!(r.entries[1].correlation.unwrap() < 0.9);
    }

    #[test]
    fn threshold_extremes() {
        let still = pair(0.0, 5);
        let creeping = pair(0.001, 6);
        let hist = [
            (UserId(0), still.as_slice()),
            (UserId(1), creeping.as_slice()),
        ];
        let none = detect_mobility(hist, 0.0);
        assert_eq!(none.mobile_users().count(), 0);
        let strict = detect_mobility(hist, 1.0);
        assert_eq!(strict.mobile_users().collect::<Vec<_>>(), vec![UserId(1)]);
    }

    #[test]
    fn missing_history_is_mobile() {
        let one = pair(0.0, 7)[..1].to_vec();
        let r = detect_mobility([(UserId(3), one.as_slice()), (UserId(4), &[][..])], 0.9);
        assert!(r.entries.iter().all(|e| e.is_mobile && e.is_missing()));
        // unknown users are treated conservatively too
        assert!(r.is_mobile(UserId(99)));
    }
}
