//! Deterministic scenario loop.
//!
//! One epoch is one sounding period: CSI advances and mobility is
//! re-detected, the grouping policy picks a partition, the MAC turns link
//! states into goodput and every user's player is advanced in fixed ticks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{
    qoe_summary, AbrError, QoeSummary, SegmentOutcome, StreamingClient, VirtualQueues,
};
use crate::config::{ConfigError, Policy, SimConfig};
use crate::grouping::{
    baseline_grouping, detect_mobility, encode_state, enumerate_actions, mobility_filter,
    oracle_best, select_action, train, BaselineKind, GroupingEnv, GroupingError, MobilityReport,
    Partition, QTable, TrainOutcome,
};
use crate::mac::{schedule_epoch, GoodputReport, MacError};
use crate::phy::{
    effective_snr, packet_error_rate, phy_rate, select_mcs, synthesize_csi, CsiSnapshot, LinkState,
    Mode, PhyError, UserId, UserProfile,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Abr(#[from] AbrError),
}

// Independent ChaCha streams per consumer, so e.g. exploration never shifts CSI draws.
const CSI_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const EXPLORATION_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-user CSI tracking across soundings.
#[derive(Debug, Clone)]
pub struct Channel {
    users: Vec<UserProfile>,
    history: Vec<[CsiSnapshot; 2]>,
    period_ms: f64,
    carrier_ghz: f64,
    threshold: f64,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(config: &SimConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, CSI_STREAM);
        let history = config
            .users
            .iter()
            .map(|_| {
                let h = CsiSnapshot::random(config.csi.dimension, &mut rng);
                [h.clone(), h]
            })
            .collect();
        Self {
            users: config.users.clone(),
            history,
            period_ms: config.ap.sounding_period_ms,
            carrier_ghz: config.ap.carrier_ghz,
            threshold: config.csi.mobility_threshold,
            rng,
        }
    }

    /// Advances every user's CSI by one sounding period and compares it with
    /// the previous sounding.
    pub fn sound(&mut self) -> MobilityReport {
        for (user, pair) in self.users.iter().zip(self.history.iter_mut()) {
            let next = synthesize_csi(
                &pair[1],
                user.speed_mps,
                self.period_ms,
                self.carrier_ghz,
                &mut self.rng,
            );
            pair.swap(0, 1);
            pair[1] = next;
        }
        detect_mobility(
            self.users
                .iter()
                .zip(&self.history)
                .map(|(u, pair)| (u.id, pair.as_slice())),
            self.threshold,
        )
    }
}

/// Maps a partition to link states and expected goodput.
///
/// The MCS is picked from the SNR right after sounding; errors are then
/// evaluated at the SNR in the middle of the sounding period, so stale CSI
/// shows up as packet loss at an over-optimistic rate.
#[derive(Debug, Clone, Copy)]
pub struct LinkModel<'a> {
    config: &'a SimConfig,
}

impl<'a> LinkModel<'a> {
    pub fn new(config: &'a SimConfig) -> Self {
        Self { config }
    }

    fn user(&self, id: UserId) -> Result<&'a UserProfile, SimError> {
        self.config
            .users
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| GroupingError::MalformedPartition(format!("unknown user {id}")).into())
    }

    pub fn link_states(&self, partition: &Partition) -> Result<Vec<LinkState>, SimError> {
        let cfg = self.config;
        let t_mid = cfg.ap.sounding_period_ms / 2.0;
        let mut links = Vec::with_capacity(partition.n_users());
        for group in partition.groups() {
            let members = group
                .iter()
                .map(|&id| self.user(id))
                .collect::<Result<Vec<_>, _>>()?;
            let total_streams: u32 = members.iter().map(|u| u.n_streams).sum();
            for user in members {
                let sounded =
                    effective_snr(user, group.len(), total_streams, 0.0, &cfg.loss_model)?;
                let eff = effective_snr(user, group.len(), total_streams, t_mid, &cfg.loss_model)?;
                let mcs = select_mcs(sounded, &cfg.mcs_table, cfg.loss_model.margin_db);
                links.push(LinkState {
                    user_id: user.id,
                    mode: Mode::for_group_size(group.len()),
                    eff_snr_db: eff,
                    mcs,
                    phy_rate_mbps: phy_rate(
                        &cfg.mcs_table,
                        mcs,
                        cfg.ap.bandwidth_mhz,
                        user.n_streams,
                        cfg.ap.guard_interval,
                    )?,
                    per: packet_error_rate(eff, mcs, &cfg.mcs_table, &cfg.loss_model)?,
                });
            }
        }
        links.sort_by_key(|l| l.user_id);
        Ok(links)
    }

    pub fn evaluate(
        &self,
        partition: &Partition,
    ) -> Result<(Vec<LinkState>, GoodputReport), SimError> {
        let links = self.link_states(partition)?;
        let report = schedule_epoch(
            partition,
            &links,
            self.config.ap.sounding_period_ms,
            &self.config.timing,
        )?;
        Ok((links, report))
    }

    pub fn expected_aggregate(&self, partition: &Partition) -> Result<f64, SimError> {
        Ok(self.evaluate(partition)?.1.aggregate_mbps())
    }
}

/// The simulator seen as a Phase I environment: ABR is not run.
pub struct PhaseOneEnv<'a> {
    channel: Channel,
    model: LinkModel<'a>,
}

impl<'a> PhaseOneEnv<'a> {
    pub fn new(config: &'a SimConfig, seed: u64) -> Self {
        Self {
            channel: Channel::new(config, seed),
            model: LinkModel::new(config),
        }
    }
}

impl GroupingEnv for PhaseOneEnv<'_> {
    type Error = SimError;

    fn sound(&mut self) -> Result<MobilityReport, SimError> {
        Ok(self.channel.sound())
    }

    fn step(&mut self, partition: &Partition) -> Result<GoodputReport, SimError> {
        Ok(self.model.evaluate(partition)?.1)
    }
}

/// Runs Phase I training for `config` with the given seed.
pub fn train_policy(config: &SimConfig, seed: u64) -> Result<TrainOutcome, SimError> {
    config.validate()?;
    let mut env = PhaseOneEnv::new(config, seed);
    let mut rng = stream_rng(seed, EXPLORATION_STREAM);
    train(&mut env, &config.users, &config.ap, &config.rl, &mut rng)
}

/// Brute-force best partition under the expected-goodput model for `report`.
pub fn oracle_partition(
    config: &SimConfig,
    report: &MobilityReport,
) -> Result<(Partition, f64), SimError> {
    let model = LinkModel::new(config);
    oracle_best(&config.users, &config.ap, report, |p| {
        model.expected_aggregate(p)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEpoch {
    pub user_id: UserId,
    pub mode: Mode,
    pub eff_snr_db: f64,
    pub mcs: Option<u8>,
    pub phy_rate_mbps: f64,
    pub per: f64,
    pub goodput_mbps: f64,
    pub csi_correlation: Option<f64>,
    pub is_mobile: bool,
    /// Bits handed to the user's player during the epoch.
    pub delivered_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub partition: Partition,
    /// Sorted by user id.
    pub users: Vec<UserEpoch>,
    pub aggregate_mbps: f64,
    pub overhead_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub user_id: UserId,
    pub outcome: SegmentOutcome,
    pub bitrate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFinal {
    pub qoe: QoeSummary,
    pub queues: VirtualQueues,
    pub underflows: u64,
    pub switches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub config_digest: String,
    pub policy: Policy,
    pub epochs: Vec<EpochRecord>,
    /// Sorted by user id.
    pub users: Vec<UserFinal>,
    /// Sorted by (user id, segment sequence).
    pub segments: Vec<SegmentRecord>,
}

impl MetricsReport {
    /// Mean over epochs and users of per-user goodput.
    pub fn mean_user_goodput_mbps(&self) -> f64 {
        let n: usize = self.epochs.iter().map(|e| e.users.len()).sum();
        let total: f64 = self
            .epochs
            .iter()
            .flat_map(|e| &e.users)
            .map(|u| u.goodput_mbps)
            .sum();
        total / n as f64
    }
}

enum Chooser {
    Greedy {
        q: QTable,
        actions: Vec<Partition>,
        current: usize,
        rng: ChaCha8Rng,
    },
    Oracle,
    Baseline(BaselineKind, ChaCha8Rng),
}

impl Chooser {
    fn next(&mut self, config: &SimConfig, report: &MobilityReport) -> Result<Partition, SimError> {
        match self {
            Self::Greedy {
                q,
                actions,
                current,
                rng,
            } => {
                let s = encode_state(*current, &config.users, report, config.rl.snr_state);
                let legal = mobility_filter(actions, report);
                *current = select_action(q, &s, 0.0, &legal, rng);
                Ok(actions[*current].clone())
            }
            Self::Oracle => Ok(oracle_partition(config, report)?.0),
            Self::Baseline(kind, rng) => Ok(baseline_grouping(
                *kind,
                &config.users,
                &config.ap,
                report,
                rng,
            )?),
        }
    }
}

/// Runs a scenario. With the `rl_trained` policy and no `qtable`, the agent
/// is first trained on the same seed.
pub fn run_sim_with(
    config: &SimConfig,
    seed: u64,
    qtable: Option<&QTable>,
) -> Result<MetricsReport, SimError> {
    config.validate()?;
    let mut chooser = match config.policy {
        Policy::RlTrained => {
            let actions = enumerate_actions(&config.users, &config.ap)?;
            let q = match qtable {
                Some(q) if q.n_actions() != actions.len() => {
                    return Err(GroupingError::ActionCountMismatch {
                        expected: actions.len(),
                        found: q.n_actions(),
                    }
                    .into())
                }
                Some(q) => q.clone(),
                None => train_policy(config, seed)?.q,
            };
            Chooser::Greedy {
                q,
                actions,
                current: 0,
                rng: stream_rng(seed, POLICY_STREAM),
            }
        }
        Policy::Oracle => Chooser::Oracle,
        Policy::AllSu => Chooser::Baseline(BaselineKind::AllSu, stream_rng(seed, POLICY_STREAM)),
        Policy::GreedySnr => {
            Chooser::Baseline(BaselineKind::GreedySnr, stream_rng(seed, POLICY_STREAM))
        }
        Policy::Random => Chooser::Baseline(BaselineKind::Random, stream_rng(seed, POLICY_STREAM)),
        Policy::FullMu => Chooser::Baseline(BaselineKind::FullMu, stream_rng(seed, POLICY_STREAM)),
    };

    let model = LinkModel::new(config);
    let mut channel = Channel::new(config, seed);
    let mut clients: Vec<StreamingClient> = {
        let mut ids: Vec<UserId> = config.users.iter().map(|u| u.id).collect();
        ids.sort();
        ids.into_iter()
            .map(|id| StreamingClient::new(id, &config.abr))
            .collect()
    };
    let ticks = config.ticks_per_epoch();
    let tick_s = config.abr_tick_ms / 1000.0;
    let epoch_s = config.ap.sounding_period_ms / 1000.0;

    let mut epochs = Vec::with_capacity(config.duration_epochs);
    for epoch in 0..config.duration_epochs {
        let report = channel.sound();
        let partition = chooser.next(config, &report)?;
        partition.check(&config.users, &config.ap)?;
        let (links, goodput) = model.evaluate(&partition)?;

        let mut users = Vec::with_capacity(links.len());
        for (link, client) in links.iter().zip(clients.iter_mut()) {
            debug_assert_eq!(link.user_id, client.session.user_id);
            let g = goodput.goodput_mbps[&link.user_id];
            client.session.estimate_goodput(g, link.mode)?;
            // slightly under the exact share so the tick sum never exceeds goodput * epoch
            let bits_per_tick = g * 1e6 * epoch_s / ticks as f64 * (1.0 - 1e-12);
            let mut delivered = 0.0;
            for _ in 0..ticks {
                client.tick(tick_s, bits_per_tick, &config.ladder, &config.targets);
                delivered += bits_per_tick;
            }
            users.push(UserEpoch {
                user_id: link.user_id,
                mode: link.mode,
                eff_snr_db: link.eff_snr_db,
                mcs: link.mcs,
                phy_rate_mbps: link.phy_rate_mbps,
                per: link.per,
                goodput_mbps: g,
                csi_correlation: report.correlation(link.user_id),
                is_mobile: report.is_mobile(link.user_id),
                delivered_bits: delivered,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            partition,
            aggregate_mbps: goodput.aggregate_mbps(),
            overhead_ms: goodput.overhead_ms,
            users,
        });
    }

    let mut segments = Vec::new();
    let mut finals = Vec::with_capacity(clients.len());
    for c in &clients {
        segments.extend(c.log.iter().map(|s| SegmentRecord {
            user_id: c.session.user_id,
            outcome: *s,
            bitrate_mbps: config.ladder.rates_mbps[s.bitrate_idx],
        }));
        finals.push(UserFinal {
            qoe: qoe_summary(&c.session),
            queues: c.queues,
            underflows: c.session.underflows,
            switches: c.session.switches,
        });
    }
    Ok(MetricsReport {
        seed,
        config_digest: config.digest(),
        policy: config.policy,
        epochs,
        users: finals,
        segments,
    })
}

pub fn run_sim(config: &SimConfig, seed: u64) -> Result<MetricsReport, SimError> {
    run_sim_with(config, seed, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NMobile,
    NLowSnr,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NMobile => "n_mobile",
            Self::NLowSnr => "n_low_snr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepArm {
    #[serde(rename = "MU")]
    Mu,
    #[serde(rename = "SU")]
    Su,
}

impl SweepArm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mu => "MU",
            Self::Su => "SU",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub level: usize,
    pub seed: u64,
    pub arm: SweepArm,
    pub mean_user_goodput_mbps: f64,
}

pub const SWEEP_MOBILE_SPEED_MPS: f64 = 1.0;
pub const SWEEP_LOW_SNR_DB: f64 = 12.0;
pub const SWEEP_HIGH_SNR_DB: f64 = 35.0;

/// The scenario at one sweep level: the first `level` users (by id) are
/// made mobile or low-SNR, the rest static at high SNR.
pub fn sweep_scenario(
    base: &SimConfig,
    axis: SweepAxis,
    level: usize,
) -> Result<SimConfig, SimError> {
    if level > base.users.len() {
        return Err(ConfigError::Invalid(crate::error::InvalidField::new(
            "levels",
            format!(
                "level {level} exceeds the {} configured users",
                base.users.len()
            ),
        ))
        .into());
    }
    let mut cfg = base.clone();
    cfg.users.sort_by_key(|u| u.id);
    for (i, u) in cfg.users.iter_mut().enumerate() {
        let affected = i < level;
        match axis {
            SweepAxis::NMobile => {
                u.base_snr_db = SWEEP_HIGH_SNR_DB;
                u.speed_mps = if affected {
                    SWEEP_MOBILE_SPEED_MPS
                } else {
                    0.0
                };
            }
            SweepAxis::NLowSnr => {
                u.base_snr_db = if affected {
                    SWEEP_LOW_SNR_DB
                } else {
                    SWEEP_HIGH_SNR_DB
                };
                u.speed_mps = 0.0;
            }
        }
    }
    Ok(cfg)
}

/// Paired forced-MU versus all-SU runs for every level and seed.
///
/// Runs fan out over the rayon pool; rows come back ordered by
/// (level, seed, arm) regardless of scheduling.
pub fn sweep(
    base: &SimConfig,
    axis: SweepAxis,
    levels: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, SimError> {
    let mut jobs = Vec::new();
    for &level in levels {
        let scenario = sweep_scenario(base, axis, level)?;
        for &seed in seeds {
            for (arm, policy) in [
                (SweepArm::Mu, Policy::FullMu),
                (SweepArm::Su, Policy::AllSu),
            ] {
                let mut cfg = scenario.clone();
                cfg.policy = policy;
                jobs.push((level, seed, arm, cfg));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(level, seed, arm, cfg)| {
            let report = run_sim(&cfg, seed)?;
            Ok(SweepRow {
                axis,
                level,
                seed,
                arm,
                mean_user_goodput_mbps: report.mean_user_goodput_mbps(),
            })
        })
        .collect()
}
