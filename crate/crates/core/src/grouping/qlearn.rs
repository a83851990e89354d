use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{enumerate_actions, mobility_filter, GroupingError, MobilityReport, Partition};
use crate::error::InvalidField;
use crate::mac::GoodputReport;
use crate::phy::{ApConfig, UserProfile};

/// What the agent is rewarded with after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Sum of per-user goodput.
    #[default]
    Aggregate,
    /// Goodput of the worst-served user.
    MinUser,
}

impl RewardKind {
    pub fn reward(self, report: &GoodputReport) -> f64 {
        match self {
            Self::Aggregate => report.aggregate_mbps(),
            Self::MinUser => report.min_user_mbps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlHyperParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    /// Multiplicative epsilon decay applied after every episode.
    pub eps_decay: f64,
    pub eps_min: f64,
    pub episodes: usize,
    pub epochs_per_episode: usize,
    pub reward: RewardKind,
    /// Adds coarse per-user SNR buckets to the state.
    pub snr_state: bool,
}

impl Default for RlHyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            epsilon0: 1.0,
            eps_decay: 0.995,
            eps_min: 0.05,
            episodes: 5000,
            epochs_per_episode: 10,
            reward: RewardKind::Aggregate,
            snr_state: false,
        }
    }
}

impl RlHyperParams {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(InvalidField::new("alpha", "out of (0,1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(InvalidField::new("gamma", "out of [0,1]"));
        }
        for (name, v) in [("epsilon0", self.epsilon0), ("eps_min", self.eps_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InvalidField::new(name, "out of [0,1]"));
            }
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return Err(InvalidField::new("eps_decay", "out of (0,1]"));
        }
        if self.episodes == 0 {
            return Err(InvalidField::new("episodes", "must be >= 1"));
        }
        if self.epochs_per_episode == 0 {
            return Err(InvalidField::new("epochs_per_episode", "must be >= 1"));
        }
        Ok(())
    }

    pub fn epsilon_after(&self, episodes_done: usize) -> f64 {
        let mut eps = self.epsilon0;
        for _ in 0..episodes_done {
            eps = (eps * self.eps_decay).max(self.eps_min);
        }
        eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SnrBucket {
    Low,
    Mid,
    High,
}

impl SnrBucket {
    pub fn of(snr_db: f64) -> Self {
        if snr_db < 15.0 {
            Self::Low
        } else if snr_db < 25.0 {
            Self::Mid
        } else {
            Self::High
        }
    }

    fn digit(self) -> char {
        match self {
            Self::Low => '0',
            Self::Mid => '1',
            Self::High => '2',
        }
    }

    fn from_digit(c: char) -> Option<Self> {
        match c {
            '0' => Some(Self::Low),
            '1' => Some(Self::Mid),
            '2' => Some(Self::High),
            _ => None,
        }
    }
}

/// Agent state: the grouping in force, the user population's stream counts
/// and each user's mobility bit, all positional in user order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey {
    pub grouping_index: usize,
    pub n_users: usize,
    pub streams: Vec<u32>,
    pub mobility: Vec<bool>,
    pub snr_buckets: Option<Vec<SnrBucket>>,
}

impl StateKey {
    /// Stable textual form used as the Q-table document key.
    pub fn encode(&self) -> String {
        let mut s = format!("g={}|n={}|s=", self.grouping_index, self.n_users);
        for (i, n) in self.streams.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{n}");
        }
        s.push_str("|m=");
        s.extend(self.mobility.iter().map(|&m| if m { '1' } else { '0' }));
        if let Some(buckets) = &self.snr_buckets {
            s.push_str("|q=");
            s.extend(buckets.iter().map(|b| b.digit()));
        }
        s
    }

    pub fn decode(text: &str) -> Result<Self, GroupingError> {
        let bad = || GroupingError::MalformedQTable(format!("bad state key {text:?}"));
        let mut fields = BTreeMap::new();
        for part in text.split('|') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let grouping_index = fields
            .get("g")
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let n_users: usize = fields
            .get("n")
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let streams = fields
            .get("s")
            .ok_or_else(bad)?
            .split(',')
            .map(|v| v.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        let mobility = fields
            .get("m")
            .ok_or_else(bad)?
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(bad()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let snr_buckets = match fields.get("q") {
            None => None,
            Some(v) => Some(
                v.chars()
                    .map(|c| SnrBucket::from_digit(c).ok_or_else(bad))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        if streams.len() != n_users || mobility.len() != n_users {
            return Err(bad());
        }
        let key = Self {
            grouping_index,
            n_users,
            streams,
            mobility,
            snr_buckets,
        };
        if key.encode() != text {
            return Err(bad());
        }
        Ok(key)
    }
}

pub fn encode_state(
    grouping_index: usize,
    users: &[UserProfile],
    report: &MobilityReport,
    snr_state: bool,
) -> StateKey {
    StateKey {
        grouping_index,
        n_users: users.len(),
        streams: users.iter().map(|u| u.n_streams).collect(),
        mobility: users.iter().map(|u| report.is_mobile(u.id)).collect(),
        snr_buckets: snr_state
            .then(|| users.iter().map(|u| SnrBucket::of(u.base_snr_db)).collect()),
    }
}

/// Action values per state; unseen states read as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: BTreeMap<StateKey, Vec<f64>>,
}

const QTABLE_FORMAT: &str = "muvis-qtable";
const QTABLE_VERSION: u64 = 1;

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            values: BTreeMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, s: &StateKey, a: usize) -> f64 {
        self.values.get(s).map_or(0.0, |row| row[a])
    }

    pub fn row(&self, s: &StateKey) -> Option<&[f64]> {
        self.values.get(s).map(Vec::as_slice)
    }

    pub fn set(&mut self, s: &StateKey, a: usize, value: f64) {
        let n = self.n_actions;
        self.values.entry(s.clone()).or_insert_with(|| vec![0.0; n])[a] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &[f64])> {
        self.values.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .values()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Best value among `legal` actions in state `s`; zero when `legal` is empty.
    pub fn max_over(&self, s: &StateKey, legal: &[usize]) -> f64 {
        match self.values.get(s) {
            None => 0.0,
            Some(row) => legal
                .iter()
                .map(|&a| row[a])
                .reduce(f64::max)
                .unwrap_or(0.0),
        }
    }

    /// Serialises to the versioned JSON document: sorted keys, values as
    /// plain decimals with 9 significant digits.
    pub fn to_json(&self, actions: &[Partition]) -> String {
        let mut out = String::from("{\n  \"actions\": [");
        for (i, p) in actions.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "\"{p}\"");
        }
        out.push_str("],\n  \"entries\": {");
        let mut rows: Vec<(String, &Vec<f64>)> =
            self.values.iter().map(|(k, v)| (k.encode(), v)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (i, (key, row)) in rows.iter().enumerate() {
            out.push_str(if i > 0 { ",\n    " } else { "\n    " });
            let _ = write!(out, "\"{key}\": [");
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                out.push_str(&decimal_sig9(*v));
            }
            out.push(']');
        }
        if !rows.is_empty() {
            out.push_str("\n  ");
        }
        let _ = write!(
            out,
            "}},\n  \"format\": \"{QTABLE_FORMAT}\",\n  \"n_actions\": {},\n  \"version\": {QTABLE_VERSION}\n}}\n",
            self.n_actions
        );
        out
    }

    /// Parses a Q-table document and checks it was trained on `actions`.
    pub fn from_json(text: &str, actions: &[Partition]) -> Result<Self, GroupingError> {
        let bad = |m: &str| GroupingError::MalformedQTable(m.to_string());
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        if doc.get("format").and_then(|v| v.as_str()) != Some(QTABLE_FORMAT) {
            return Err(bad("missing or wrong \"format\""));
        }
        if doc.get("version").and_then(|v| v.as_u64()) != Some(QTABLE_VERSION) {
            return Err(bad("unsupported \"version\""));
        }
        let n_actions = doc
            .get("n_actions")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad("missing \"n_actions\""))? as usize;
        if n_actions != actions.len() {
            return Err(GroupingError::ActionCountMismatch {
                expected: actions.len(),
                found: n_actions,
            });
        }
        if let Some(listed) = doc.get("actions").and_then(|v| v.as_array()) {
            let same = listed.len() == actions.len()
                && listed
                    .iter()
                    .zip(actions)
                    .all(|(l, p)| l.as_str() == Some(p.to_string().as_str()));
            if !same {
                return Err(bad("action list differs from this scenario"));
            }
        }
        let entries = doc
            .get("entries")
            .and_then(|v| v.as_object())
            .ok_or_else(|| bad("missing \"entries\""))?;
        let mut values = BTreeMap::new();
        for (key, row) in entries {
            let state = StateKey::decode(key)?;
            let row = row
                .as_array()
                .ok_or_else(|| bad("entry is not an array"))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad("non-numeric Q value"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != n_actions {
                return Err(bad("row length differs from n_actions"));
            }
            values.insert(state, row);
        }
        Ok(Self { n_actions, values })
    }
}

/// Formats `v` as a plain decimal rounded to 9 significant digits.
fn decimal_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let point = exp + 1;
    let mut body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    if body.contains('.') {
        body = body.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Epsilon-greedy choice among `legal` action indices.
///
/// Greedy ties go to the lowest index. One uniform draw is always consumed
/// for the exploration coin.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: &StateKey,
    epsilon: f64,
    legal: &[usize],
    rng: &mut R,
) -> usize {
    assert!(
        !legal.is_empty(),
        "select_action needs at least one legal action"
    );
    let coin: f64 = rng.random();
    if coin < epsilon {
        return legal[rng.random_range(0..legal.len())];
    }
    let Some(row) = q.row(s) else {
        return legal[0];
    };
    let mut best = legal[0];
    for &a in &legal[1..] {
        if row[a] > row[best] {
            best = a;
        }
    }
    best
}

/// One temporal-difference update of `Q(s, a)` towards
/// `r + gamma * max_{a' in legal_next} Q(s_next, a')`.
pub fn q_update(
    q: &mut QTable,
    s: &StateKey,
    a: usize,
    r: f64,
    s_next: &StateKey,
    legal_next: &[usize],
    hp: &RlHyperParams,
) -> Result<(), GroupingError> {
    if !r.is_finite() {
        return Err(GroupingError::NonFiniteReward(r));
    }
    let current = q.get(s, a);
    let target = r + hp.gamma * q.max_over(s_next, legal_next);
    q.set(s, a, current + hp.alpha * (target - current));
    Ok(())
}

/// Environment the agent interacts with, one sounding epoch per step.
pub trait GroupingEnv {
    type Error: From<GroupingError>;

    /// Advances the channel by one sounding period and reports who moved.
    fn sound(&mut self) -> Result<MobilityReport, Self::Error>;

    /// Serves the current epoch with `partition`.
    fn step(&mut self, partition: &Partition) -> Result<GoodputReport, Self::Error>;
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub q: QTable,
    pub actions: Vec<Partition>,
    /// Action yielding the highest observed reward; ties go to the lower index.
    pub best: Partition,
    pub best_reward: f64,
    /// Action index taken at every step, in order.
    pub taken: Vec<usize>,
    /// Reward observed at every step, in order.
    pub rewards: Vec<f64>,
}

impl TrainOutcome {
    pub fn best_index(&self) -> usize {
        self.actions
            .iter()
            .position(|p| *p == self.best)
            .expect("best is an enumerated action")
    }
}

/// Tabular Q-learning over grouping actions.
///
/// Each episode starts from the all-singleton grouping; the environment keeps
/// running across episodes. Epsilon decays once per episode.
pub fn train<E, R>(
    env: &mut E,
    users: &[UserProfile],
    ap: &ApConfig,
    hp: &RlHyperParams,
    rng: &mut R,
) -> Result<TrainOutcome, E::Error>
where
    E: GroupingEnv,
    R: Rng + ?Sized,
{
    let actions = enumerate_actions(users, ap)?;
    let mut q = QTable::new(actions.len());
    let mut epsilon = hp.epsilon0;
    let mut best: Option<(f64, usize)> = None;
    let steps = hp.episodes * hp.epochs_per_episode;
    let mut taken = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);

    let mut report = env.sound()?;
    for _ in 0..hp.episodes {
        let mut grouping = 0;
        for _ in 0..hp.epochs_per_episode {
            let s = encode_state(grouping, users, &report, hp.snr_state);
            let legal = mobility_filter(&actions, &report);
            let a = select_action(&q, &s, epsilon, &legal, rng);
            let r = hp.reward.reward(&env.step(&actions[a])?);

            let next_report = env.sound()?;
            let s_next = encode_state(a, users, &next_report, hp.snr_state);
            let legal_next = mobility_filter(&actions, &next_report);
            q_update(&mut q, &s, a, r, &s_next, &legal_next, hp)?;

            let improves = match best {
                None => true,
                Some((best_r, best_a)) => r > best_r || (r == best_r && a < best_a),
            };
            if improves {
                best = Some((r, a));
            }
            taken.push(a);
            rewards.push(r);
            grouping = a;
            report = next_report;
        }
        epsilon = (epsilon * hp.eps_decay).max(hp.eps_min);
    }

    let (best_reward, best_index) = best.expect("at least one step");
    Ok(TrainOutcome {
        best: actions[best_index].clone(),
        q,
        actions,
        best_reward,
        taken,
        rewards,
    })
}
