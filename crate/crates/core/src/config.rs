//! Scenario configuration: the JSON schema, defaults and validation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abr::{AbrParams, BitrateLadder, QoeTargets};
use crate::error::InvalidField;
use crate::grouping::{RlHyperParams, MAX_ENUMERATED_USERS, MAX_ORACLE_USERS};
use crate::mac::TimingParams;
use crate::phy::{ApConfig, LossModel, McsTable, UserProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(InvalidField),
}

impl From<InvalidField> for ConfigError {
    fn from(e: InvalidField) -> Self {
        Self::Invalid(e)
    }
}

/// How each epoch's grouping is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Greedy policy of a Q-table (trained in-process when none is supplied).
    #[default]
    RlTrained,
    Oracle,
    AllSu,
    GreedySnr,
    Random,
    /// Forced MU grouping that ignores mobility; a comparison arm for sweeps.
    FullMu,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RlTrained => "rl_trained",
            Self::Oracle => "oracle",
            Self::AllSu => "all_su",
            Self::GreedySnr => "greedy_snr",
            Self::Random => "random",
            Self::FullMu => "full_mu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsiParams {
    pub dimension: usize,
    pub mobility_threshold: f64,
}

impl Default for CsiParams {
    fn default() -> Self {
        Self {
            dimension: 16,
            mobility_threshold: crate::grouping::DEFAULT_MOBILITY_THRESHOLD,
        }
    }
}

impl CsiParams {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.dimension == 0 {
            return Err(InvalidField::new("dimension", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mobility_threshold) {
            return Err(InvalidField::new("mobility_threshold", "out of [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub ap: ApConfig,
    pub users: Vec<UserProfile>,
    #[serde(default)]
    pub timing: TimingParams,
    #[serde(default)]
    pub mcs_table: McsTable,
    #[serde(default)]
    pub loss_model: LossModel,
    #[serde(default)]
    pub csi: CsiParams,
    #[serde(default)]
    pub rl: RlHyperParams,
    #[serde(default)]
    pub ladder: BitrateLadder,
    #[serde(default)]
    pub targets: QoeTargets,
    #[serde(default)]
    pub abr: AbrParams,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default = "default_duration_epochs")]
    pub duration_epochs: usize,
    #[serde(default = "default_abr_tick_ms")]
    pub abr_tick_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_duration_epochs() -> usize {
    100
}

fn default_abr_tick_ms() -> f64 {
    10.0
}

impl SimConfig {
    /// A scenario with every optional section at its default.
    pub fn new(ap: ApConfig, users: Vec<UserProfile>) -> Self {
        Self {
            ap,
            users,
            timing: TimingParams::default(),
            mcs_table: McsTable::default(),
            loss_model: LossModel::default(),
            csi: CsiParams::default(),
            rl: RlHyperParams::default(),
            ladder: BitrateLadder::default(),
            targets: QoeTargets::default(),
            abr: AbrParams::default(),
            policy: Policy::default(),
            duration_epochs: default_duration_epochs(),
            abr_tick_ms: default_abr_tick_ms(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ap.validate().map_err(|e| e.within("ap"))?;
        if self.users.is_empty() {
            return Err(InvalidField::new("users", "must list at least one user").into());
        }
        if self.users.len() > MAX_ENUMERATED_USERS {
            return Err(InvalidField::new(
                "users",
                format!("at most {MAX_ENUMERATED_USERS} users are supported"),
            )
            .into());
        }
        let mut ids = BTreeSet::new();
        for (i, u) in self.users.iter().enumerate() {
            let at = format!("users[{i}]");
            u.validate().map_err(|e| e.within(&at))?;
            if !ids.insert(u.id) {
                return Err(InvalidField::new(format!("{at}.id"), "duplicate user id").into());
            }
            if u.n_streams > self.ap.n_tx_antennas {
                return Err(InvalidField::new(
                    format!("{at}.n_streams"),
                    "exceeds ap.n_tx_antennas",
                )
                .into());
            }
        }
        self.timing.validate().map_err(|e| e.within("timing"))?;
        self.mcs_table
            .validate()
            .map_err(|e| e.within("mcs_table"))?;
        self.loss_model
            .validate()
            .map_err(|e| e.within("loss_model"))?;
        self.csi.validate().map_err(|e| e.within("csi"))?;
        self.rl.validate().map_err(|e| e.within("rl"))?;
        self.ladder.validate().map_err(|e| e.within("ladder"))?;
        self.targets.validate().map_err(|e| e.within("targets"))?;
        self.abr
            .validate(&self.ladder)
            .map_err(|e| e.within("abr"))?;
        if self.duration_epochs < 1 {
            return Err(InvalidField::new("duration_epochs", "must be >= 1").into());
        }
        if !(self.abr_tick_ms > 0.0 && self.abr_tick_ms.is_finite()) {
            return Err(InvalidField::new("abr_tick_ms", "must be > 0").into());
        }
        let ticks = self.ap.sounding_period_ms / self.abr_tick_ms;
        if (ticks - ticks.round()).abs() > 1e-9 || ticks.round() < 1.0 {
            return Err(
                InvalidField::new("abr_tick_ms", "must divide ap.sounding_period_ms").into(),
            );
        }
        if self.policy == Policy::Oracle && self.users.len() > MAX_ORACLE_USERS {
            return Err(InvalidField::new(
                "policy",
                format!("oracle supports at most {MAX_ORACLE_USERS} users"),
            )
            .into());
        }
        Ok(())
    }

    /// ABR ticks per sounding epoch.
    pub fn ticks_per_epoch(&self) -> usize {
        (self.ap.sounding_period_ms / self.abr_tick_ms).round() as usize
    }

    /// Canonical JSON form; parses back to an equal value.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Hex SHA-256 of the compact canonical JSON.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(compact.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses and validates a scenario document. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}]}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        let expected = SimConfig::new(ApConfig::new(4), vec![UserProfile::new(0, 30.0)]);
        assert_eq!(c, expected);
        assert_eq!(c.ticks_per_epoch(), 10);
        assert_eq!(c.rl.episodes, 5000);
    }

    #[test]
    fn alpha_out_of_range() {
        let text = r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "rl": {"alpha": 1.5}}"#;
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.to_string(), "rl.alpha out of (0,1]");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "loss_model": {"etaa_db": 1}}"#;
        match parse_config(text).unwrap_err() {
            ConfigError::Parse { path, message } => {
                assert_eq!(path, "loss_model.etaa_db");
                assert!(message.contains("etaa_db"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": "high"}]}"#;
        match parse_config(text).unwrap_err() {
            ConfigError::Parse { path, .. } => assert_eq!(path, "users[0].base_snr_db"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("{"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn invariant_violations_name_the_field() {
        let cases = [
            (
                r#"{"ap": {"n_tx_antennas": 9}, "users": [{"id": 0, "base_snr_db": 30}]}"#,
                "ap.n_tx_antennas",
            ),
            (r#"{"ap": {"n_tx_antennas": 4}, "users": []}"#, "users"),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}, {"id": 0, "base_snr_db": 20}]}"#,
                "users[1].id",
            ),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30, "n_streams": 2}]}"#,
                "users[0].n_streams",
            ),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "duration_epochs": 0}"#,
                "duration_epochs",
            ),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "abr_tick_ms": 30}"#,
                "abr_tick_ms",
            ),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "ladder": {"rates_mbps": [2, 1]}}"#,
                "ladder.rates_mbps",
            ),
            (
                r#"{"ap": {"n_tx_antennas": 4}, "users": [{"id": 0, "base_snr_db": 30}], "mcs_table": [{"index": 0, "bits_per_subcarrier": 1, "coding_rate": "1/2", "snr_req_db": 5}, {"index": 1, "bits_per_subcarrier": 2, "coding_rate": "1/2", "snr_req_db": 4}]}"#,
                "mcs_table[1].snr_req_db",
            ),
        ];
        for (text, field) in cases {
            match parse_config(text) {
                Err(ConfigError::Invalid(e)) => assert_eq!(e.field, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_round_trip() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.seed = Some(7);
        c.users
            .push(UserProfile::new(5, 12.5).with_speed(1.0).with_streams(2));
        c.loss_model.eta_db = 0.1 + 0.2;
        let text = c.to_canonical_json();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_canonical_json(), text);
        assert_eq!(back.digest(), c.digest());
        assert_eq!(c.digest().len(), 64);
    }
}
