//! Phase II: per-user adaptive bitrate control.
//!
//! Each user streams fixed-duration segments from a bitrate ladder. Lost
//! segments, buffer underflows and rate switches each feed a virtual queue
//! `z <- max(z + event - target, 0)`; the bitrate for the next segment
//! maximises `V * ln(rate)` minus the queue-weighted indicators of the events
//! that rate is expected to cause.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::InvalidField;
use crate::phy::{Mode, UserId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbrError {
    #[error("observed goodput must be finite and >= 0, got {0}")]
    InvalidObservation(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BitrateLadder {
    pub rates_mbps: Vec<f64>,
    /// Segment duration in seconds.
    pub segment_s: f64,
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self {
            rates_mbps: vec![1.0, 2.5, 5.0, 8.0, 16.0],
            segment_s: 2.0,
        }
    }
}

impl BitrateLadder {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.rates_mbps.is_empty() {
            return Err(InvalidField::new("rates_mbps", "must not be empty"));
        }
        if self.rates_mbps.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(InvalidField::new("rates_mbps", "rates must be > 0"));
        }
        if self.rates_mbps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(InvalidField::new(
                "rates_mbps",
                "must be strictly increasing",
            ));
        }
        if !(self.segment_s > 0.0 && self.segment_s.is_finite()) {
            return Err(InvalidField::new("segment_s", "must be > 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates_mbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates_mbps.is_empty()
    }

    pub fn segment_bits(&self, index: usize) -> f64 {
        self.segment_s * self.rates_mbps[index] * 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QoeTargets {
    /// Allowed long-run lost segments per segment.
    pub rho_loss: f64,
    pub rho_und: f64,
    pub rho_sw: f64,
    /// Utility weight.
    #[serde(rename = "V")]
    pub v: f64,
}

impl Default for QoeTargets {
    fn default() -> Self {
        Self {
            rho_loss: 0.01,
            rho_und: 0.02,
            rho_sw: 0.15,
            v: 10.0,
        }
    }
}

impl QoeTargets {
    pub fn validate(&self) -> Result<(), InvalidField> {
        for (name, v) in [
            ("rho_loss", self.rho_loss),
            ("rho_und", self.rho_und),
            ("rho_sw", self.rho_sw),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InvalidField::new(name, "out of [0,1]"));
            }
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(InvalidField::new("V", "must be > 0"));
        }
        Ok(())
    }
}

/// Player-side knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbrParams {
    pub buffer_cap_s: f64,
    pub ewma_weight: f64,
    /// A segment is lost once its download takes longer than `segment_s * (1 + slack)`.
    pub loss_slack: f64,
}

impl Default for AbrParams {
    fn default() -> Self {
        Self {
            buffer_cap_s: 30.0,
            ewma_weight: 0.3,
            loss_slack: 0.5,
        }
    }
}

impl AbrParams {
    pub fn validate(&self, ladder: &BitrateLadder) -> Result<(), InvalidField> {
        if !(self.buffer_cap_s >= ladder.segment_s && self.buffer_cap_s.is_finite()) {
            return Err(InvalidField::new(
                "buffer_cap_s",
                "must hold at least one segment",
            ));
        }
        if !(self.ewma_weight > 0.0 && self.ewma_weight <= 1.0) {
            return Err(InvalidField::new("ewma_weight", "out of (0,1]"));
        }
        if !(self.loss_slack >= 0.0 && self.loss_slack.is_finite()) {
            return Err(InvalidField::new("loss_slack", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VirtualQueues {
    pub z_loss: f64,
    pub z_und: f64,
    pub z_sw: f64,
}

/// How a segment download ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOutcome {
    /// Position of the segment in the user's stream, from 0.
    pub seq: u64,
    pub bitrate_idx: usize,
    pub lost: bool,
    /// Completed at a different bitrate than the previous completed segment.
    pub switched: bool,
    /// Playback stalled while this segment was downloading.
    pub underflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionEvents {
    pub underflow: bool,
    pub segment: Option<SegmentOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InFlight {
    pub bitrate_idx: usize,
    pub elapsed_s: f64,
    pub progress_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSession {
    pub user_id: UserId,
    pub buffer_s: f64,
    pub buffer_cap_s: f64,
    /// Bitrate of the last completed segment.
    pub last_bitrate_idx: Option<usize>,
    pub in_flight: Option<InFlight>,
    pub losses: u64,
    pub underflows: u64,
    pub switches: u64,
    pub segments_played: u64,
    pub goodput_ewma_mbps: Option<f64>,
    pub current_mode: Option<Mode>,
    ewma_weight: f64,
    loss_slack: f64,
    playing: bool,
    stalled_during_segment: bool,
    next_seq: u64,
    played_rate_sum_mbps: f64,
    credited_bits: f64,
}

const DEADLINE_EPS: f64 = 1e-9;

impl VideoSession {
    pub fn new(user_id: UserId, params: &AbrParams) -> Self {
        Self {
            user_id,
            buffer_s: 0.0,
            buffer_cap_s: params.buffer_cap_s,
            last_bitrate_idx: None,
            in_flight: None,
            losses: 0,
            underflows: 0,
            switches: 0,
            segments_played: 0,
            goodput_ewma_mbps: None,
            current_mode: None,
            ewma_weight: params.ewma_weight,
            loss_slack: params.loss_slack,
            playing: false,
            stalled_during_segment: false,
            next_seq: 0,
            played_rate_sum_mbps: 0.0,
            credited_bits: 0.0,
        }
    }

    pub fn loss_slack(&self) -> f64 {
        self.loss_slack
    }

    /// Bits turned into buffered playback so far.
    pub fn credited_bits(&self) -> f64 {
        self.credited_bits
    }

    pub fn segments_ended(&self) -> u64 {
        self.segments_played + self.losses
    }

    /// Folds a goodput observation into the estimate. A change of SU/MU mode
    /// discards the history.
    pub fn estimate_goodput(&mut self, observed_mbps: f64, mode: Mode) -> Result<(), AbrError> {
        if !(observed_mbps >= 0.0 && observed_mbps.is_finite()) {
            return Err(AbrError::InvalidObservation(observed_mbps));
        }
        self.goodput_ewma_mbps = match (self.goodput_ewma_mbps, self.current_mode) {
            (Some(ewma), Some(prev)) if prev == mode => {
                Some((1.0 - self.ewma_weight) * ewma + self.ewma_weight * observed_mbps)
            }
            _ => Some(observed_mbps),
        };
        self.current_mode = Some(mode);
        Ok(())
    }

    /// Whether the player would start another download now.
    pub fn wants_segment(&self, ladder: &BitrateLadder) -> bool {
        self.in_flight.is_none()
            && self.buffer_s + ladder.segment_s <= self.buffer_cap_s + DEADLINE_EPS
    }

    pub fn start_segment(&mut self, bitrate_idx: usize) {
        debug_assert!(self.in_flight.is_none());
        self.in_flight = Some(InFlight {
            bitrate_idx,
            elapsed_s: 0.0,
            progress_bits: 0.0,
        });
        self.stalled_during_segment = false;
    }

    /// Advances wall-clock time by `dt_s` during which `delivered_bits`
    /// arrived for the in-flight segment (bits with nothing in flight, or
    /// beyond the segment's size, are dropped).
    pub fn advance(
        &mut self,
        dt_s: f64,
        delivered_bits: f64,
        ladder: &BitrateLadder,
    ) -> SessionEvents {
        debug_assert!(dt_s >= 0.0 && delivered_bits >= 0.0);
        let mut events = SessionEvents::default();

        if self.buffer_s > 0.0 {
            self.buffer_s = (self.buffer_s - dt_s).max(0.0);
            if self.buffer_s == 0.0 && self.playing {
                self.playing = false;
                self.underflows += 1;
                self.stalled_during_segment = true;
                events.underflow = true;
            }
        }

        let Some(flight) = self.in_flight.as_mut() else {
            return events;
        };
        flight.elapsed_s += dt_s;
        flight.progress_bits += delivered_bits;
        let needed = ladder.segment_bits(flight.bitrate_idx);
        let deadline = ladder.segment_s * (1.0 + self.loss_slack);
        let late = flight.elapsed_s > deadline + DEADLINE_EPS;
        let done = flight.progress_bits >= needed;
        if !done && !late {
            return events;
        }

        let idx = flight.bitrate_idx;
        self.in_flight = None;
        let seq = self.next_seq;
        self.next_seq += 1;
        let outcome = if late {
            self.losses += 1;
            SegmentOutcome {
                seq,
                bitrate_idx: idx,
                lost: true,
                switched: false,
                underflow: self.stalled_during_segment,
            }
        } else {
            let switched = self.last_bitrate_idx.is_some_and(|last| last != idx);
            if switched {
                self.switches += 1;
            }
            self.last_bitrate_idx = Some(idx);
            self.segments_played += 1;
            self.played_rate_sum_mbps += ladder.rates_mbps[idx];
            self.credited_bits += needed;
            self.buffer_s = (self.buffer_s + ladder.segment_s).min(self.buffer_cap_s);
            self.playing = self.buffer_s > 0.0;
            SegmentOutcome {
                seq,
                bitrate_idx: idx,
                lost: false,
                switched,
                underflow: self.stalled_during_segment,
            }
        };
        self.stalled_during_segment = false;
        events.segment = Some(outcome);
        events
    }
}

/// Drift-plus-penalty bitrate choice for the next segment.
pub fn choose_bitrate(
    session: &VideoSession,
    queues: &VirtualQueues,
    targets: &QoeTargets,
    ladder: &BitrateLadder,
) -> usize {
    let goodput = match session.goodput_ewma_mbps {
        Some(g) if g > 0.0 => g,
        _ => return 0,
    };
    let tau = ladder.segment_s;
    let deadline = tau * (1.0 + session.loss_slack);
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let score = |j: usize| {
        let rate = ladder.rates_mbps[j];
        let download_s = tau * rate / goodput;
        let switch = session.last_bitrate_idx.is_some_and(|last| last != j);
        targets.v * rate.ln()
            - queues.z_sw * indicator(switch)
            - queues.z_und * indicator(download_s > session.buffer_s)
            - queues.z_loss * indicator(download_s > deadline)
    };
    let mut best = 0;
    let mut best_score = score(0);
    for j in 1..ladder.len() {
        let s = score(j);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

/// One virtual-queue step per ended segment.
pub fn update_virtual_queues(
    queues: &mut VirtualQueues,
    segment: &SegmentOutcome,
    targets: &QoeTargets,
) {
    let step = |z: f64, event: bool, rho: f64| (z + if event { 1.0 } else { 0.0 } - rho).max(0.0);
    queues.z_loss = step(queues.z_loss, segment.lost, targets.rho_loss);
    queues.z_und = step(queues.z_und, segment.underflow, targets.rho_und);
    queues.z_sw = step(queues.z_sw, segment.switched, targets.rho_sw);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeSummary {
    pub user_id: UserId,
    pub segments_played: u64,
    pub segments_lost: u64,
    pub loss_rate: f64,
    pub underflow_rate: f64,
    pub switch_rate: f64,
    pub mean_bitrate_mbps: f64,
    /// Set when no segment ended, in which case every rate is 0.
    pub no_segments: bool,
}

/// Per-user QoE rates, each normalised by segments completed or lost.
pub fn qoe_summary(session: &VideoSession) -> QoeSummary {
    let ended = session.segments_ended();
    let rate = |count: u64| {
        if ended == 0 {
            0.0
        } else {
            count as f64 / ended as f64
        }
    };
    QoeSummary {
        user_id: session.user_id,
        segments_played: session.segments_played,
        segments_lost: session.losses,
        loss_rate: rate(session.losses),
        underflow_rate: rate(session.underflows),
        switch_rate: rate(session.switches),
        mean_bitrate_mbps: if session.segments_played == 0 {
            0.0
        } else {
            session.played_rate_sum_mbps / session.segments_played as f64
        },
        no_segments: ended == 0,
    }
}

/// A session driven tick by tick with its controller state and segment log.
#[derive(Debug, Clone)]
pub struct StreamingClient {
    pub session: VideoSession,
    pub queues: VirtualQueues,
    pub log: Vec<SegmentOutcome>,
}

impl StreamingClient {
    pub fn new(user_id: UserId, params: &AbrParams) -> Self {
        Self {
            session: VideoSession::new(user_id, params),
            queues: VirtualQueues::default(),
            log: Vec::new(),
        }
    }

    /// Starts a segment if the player wants one, then advances by `dt_s`
    /// with `delivered_bits` arriving.
    pub fn tick(
        &mut self,
        dt_s: f64,
        delivered_bits: f64,
        ladder: &BitrateLadder,
        targets: &QoeTargets,
    ) -> SessionEvents {
        if self.session.wants_segment(ladder) {
            let idx = choose_bitrate(&self.session, &self.queues, targets, ladder);
            self.session.start_segment(idx);
        }
        let events = self.session.advance(dt_s, delivered_bits, ladder);
        if let Some(segment) = events.segment {
            update_virtual_queues(&mut self.queues, &segment, targets);
            self.log.push(segment);
        }
        events
    }
}

/// Number of consecutive completed-segment pairs whose bitrates differ.
pub fn count_switches(log: &[SegmentOutcome]) -> u64 {
    let completed: Vec<usize> = log
        .iter()
        .filter(|s| !s.lost)
        .map(|s| s.bitrate_idx)
        .collect();
    completed.windows(2).filter(|w| w[0] != w[1]).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn session() -> VideoSession {
        VideoSession::new(UserId(0), &AbrParams::default())
    }

    #[test]
    fn ewma_rules() {
        let mut s = session();
        s.estimate_goodput(10.0, Mode::Su).unwrap();
        assert_eq!(s.goodput_ewma_mbps, Some(10.0));
        s.estimate_goodput(20.0, Mode::Su).unwrap();
        assert_relative_eq!(s.goodput_ewma_mbps.unwrap(), 13.0, epsilon = 1e-12);

        let mut s = session();
        s.estimate_goodput(10.0, Mode::Su).unwrap();
        s.estimate_goodput(20.0, Mode::Mu).unwrap();
        assert_eq!(s.goodput_ewma_mbps, Some(20.0));
        assert_eq!(
            s.estimate_goodput(-1.0, Mode::Mu),
            Err(AbrError::InvalidObservation(-1.0))
        );
    }

    #[test]
    fn pure_utility_picks_top() {
        let mut s = session();
        s.estimate_goodput(1e6, Mode::Su).unwrap();
        let ladder = BitrateLadder::default();
        assert_eq!(
            choose_bitrate(
                &s,
                &VirtualQueues::default(),
                &QoeTargets::default(),
                &ladder
            ),
            4
        );
    }

    #[test]
    fn dominant_switch_penalty_holds_rate() {
        let mut s = session();
        s.estimate_goodput(1e6, Mode::Su).unwrap();
        s.last_bitrate_idx = Some(1);
        let q = VirtualQueues {
            z_sw: 1e9,
            ..Default::default()
        };
        assert_eq!(
            choose_bitrate(&s, &q, &QoeTargets::default(), &BitrateLadder::default()),
            1
        );
    }

    #[test]
    fn underflow_penalty_example() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.estimate_goodput(6.0, Mode::Su).unwrap();
        s.buffer_s = 4.0;
        let q = VirtualQueues {
            z_und: 50.0,
            ..Default::default()
        };
        let targets = QoeTargets::default();
        // independent evaluation of the score table
        let scores: Vec<f64> = ladder
            .rates_mbps
            .iter()
            .map(|&r| 10.0 * r.ln() - if 2.0 * r / 6.0 > 4.0 { 50.0 } else { 0.0 })
            .collect();
        assert_relative_eq!(scores[3], 20.794, epsilon = 1e-3);
        assert_relative_eq!(scores[4], -22.274, epsilon = 1e-3);
        assert_eq!(choose_bitrate(&s, &q, &targets, &ladder), 3);
    }

    #[test]
    fn dead_link_picks_lowest() {
        let mut s = session();
        assert_eq!(
            choose_bitrate(
                &s,
                &VirtualQueues::default(),
                &QoeTargets::default(),
                &BitrateLadder::default()
            ),
            0
        );
        s.estimate_goodput(0.0, Mode::Mu).unwrap();
        assert_eq!(
            choose_bitrate(
                &s,
                &VirtualQueues::default(),
                &QoeTargets::default(),
                &BitrateLadder::default()
            ),
            0
        );
    }

    #[test]
    fn pure_drain() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.buffer_s = 5.0;
        let ev = s.advance(2.0, 0.0, &ladder);
        assert_eq!(s.buffer_s, 3.0);
        assert_eq!(ev, SessionEvents::default());
    }

    #[test]
    fn underflow_is_edge_triggered() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.start_segment(2);
        s.advance(0.0, ladder.segment_bits(2), &ladder);
        assert_eq!(s.buffer_s, 2.0);
        s.buffer_s = 0.5;
        let ev = s.advance(1.0, 0.0, &ladder);
        assert!(ev.underflow);
        assert_eq!(s.buffer_s, 0.0);
        for _ in 0..5 {
            assert!(!s.advance(0.1, 0.0, &ladder).underflow);
        }
        assert_eq!(s.underflows, 1);
    }

    #[test]
    fn startup_is_not_an_underflow() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        assert!(!s.advance(1.0, 0.0, &ladder).underflow);
        assert_eq!(s.underflows, 0);
    }

    #[test]
    fn completion_credits_one_segment() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.start_segment(2);
        let ev = s.advance(0.0, 1e7, &ladder);
        assert_eq!(s.buffer_s, 2.0);
        let seg = ev.segment.unwrap();
        assert!(!seg.lost && !seg.switched);
        assert_eq!(s.segments_played, 1);
    }

    #[test]
    fn late_segment_is_lost() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.start_segment(4);
        for _ in 0..30 {
            assert!(s.advance(0.1, 1e5, &ladder).segment.is_none());
        }
        let ev = s.advance(0.1, 1e5, &ladder);
        assert!(ev.segment.unwrap().lost);
        assert_eq!(s.losses, 1);
        assert!(s.in_flight.is_none());
    }

    #[test]
    fn buffer_cap_discards_excess() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        s.buffer_s = 29.0;
        s.start_segment(0);
        s.advance(0.0, ladder.segment_bits(0), &ladder);
        assert_eq!(s.buffer_s, 30.0);
        assert!(!s.wants_segment(&ladder));
    }

    #[test]
    fn virtual_queue_recursion() {
        let t = QoeTargets::default();
        let clean = SegmentOutcome {
            seq: 0,
            bitrate_idx: 0,
            lost: false,
            switched: false,
            underflow: false,
        };
        let mut q = VirtualQueues::default();
        update_virtual_queues(&mut q, &clean, &t);
        assert_eq!(q, VirtualQueues::default());
        update_virtual_queues(
            &mut q,
            &SegmentOutcome {
                underflow: true,
                ..clean
            },
            &t,
        );
        assert_relative_eq!(q.z_und, 0.98, epsilon = 1e-12);
        // linear drain oracle: 0.98 - k * 0.02 reaches 0 at k = 49
        for k in 1..=50 {
            update_virtual_queues(&mut q, &clean, &t);
            if k < 49 {
                assert!(q.z_und > 0.0, "k={k}");
            } else {
                assert!(q.z_und.abs() < 1e-12, "k={k} z={}", q.z_und);
            }
        }
    }

    #[test]
    fn summary_rates() {
        let mut s = session();
        s.segments_played = 100;
        s.underflows = 2;
        s.played_rate_sum_mbps = 500.0;
        let q = qoe_summary(&s);
        assert_relative_eq!(q.underflow_rate, 0.02);
        assert_eq!(q.switch_rate, 0.0);
        assert_eq!(q.mean_bitrate_mbps, 5.0);
        let empty = qoe_summary(&session());
        assert!(empty.no_segments);
        assert_eq!(empty.loss_rate, 0.0);
    }

    #[test]
    fn alternating_rates_switch_every_segment() {
        let ladder = BitrateLadder::default();
        let mut s = session();
        let n = 10;
        for i in 0..n {
            let idx = if i % 2 == 0 { 1 } else { 3 };
            s.start_segment(idx);
            s.advance(0.0, ladder.segment_bits(idx), &ladder);
            s.buffer_s = 0.0;
        }
        assert_relative_eq!(qoe_summary(&s).switch_rate, (n as f64 - 1.0) / n as f64);
    }

    proptest! {
        #[test]
        fn session_invariants(
            goodputs in proptest::collection::vec(0.0f64..40.0, 1..60),
            ticks_per_step in 5usize..50,
        ) {
            let ladder = BitrateLadder::default();
            let targets = QoeTargets::default();
            let mut c = StreamingClient::new(UserId(0), &AbrParams::default());
            let mut delivered = 0.0;
            let mut prev = (0, 0, 0, 0);
            for (i, &g) in goodputs.iter().enumerate() {
                c.session.estimate_goodput(g, if i % 7 == 0 { Mode::Mu } else { Mode::Su }).unwrap();
                for _ in 0..ticks_per_step {
                    c.tick(0.1, g * 1e6 * 0.1, &ladder, &targets);
                    delivered += g * 1e6 * 0.1;
                    let s = &c.session;
                    prop_assert!(s.buffer_s >= 0.0 && s.buffer_s <= s.buffer_cap_s);
                    prop_assert!(c.queues.z_loss >= 0.0 && c.queues.z_und >= 0.0 && c.queues.z_sw >= 0.0);
                    let now = (s.losses, s.underflows, s.switches, s.segments_played);
                    prop_assert!(now.0 >= prev.0 && now.1 >= prev.1 && now.2 >= prev.2 && now.3 >= prev.3);
                    prev = now;
                }
            }
            prop_assert!(c.session.credited_bits() <= delivered * (1.0 + 1e-12));
            prop_assert_eq!(count_switches(&c.log), c.session.switches);
            prop_assert!(c.log.iter().all(|s| s.bitrate_idx < ladder.len()));
        }
    }
}
