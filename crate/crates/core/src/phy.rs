//! Per-user link model for an 802.11ac downlink.
//!
//! Channel state is a flat complex vector that evolves as a first-order
//! Gauss-Markov process whose correlation decays over the coherence distance
//! (half a carrier wavelength). Multi-user transmissions pay a zero-forcing
//! power split, a linear inter-user penalty and, when the user moves, a
//! staleness loss that grows with the time since the last sounding.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::InvalidField;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("CSI dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("CSI snapshot has zero norm")]
    ZeroNorm,
    #[error("group size must be at least 1, got {0}")]
    EmptyGroup(usize),
    #[error("group streams {total} smaller than user streams {own}")]
    StreamCount { total: u32, own: u32 },
    #[error("unknown MCS index {0}")]
    UnknownMcs(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Bandwidth {
    Mhz20,
    Mhz40,
    Mhz80,
    Mhz160,
}

impl Bandwidth {
    pub const ALL: [Bandwidth; 4] = [Self::Mhz20, Self::Mhz40, Self::Mhz80, Self::Mhz160];

    /// Number of data subcarriers.
    pub fn data_subcarriers(self) -> u64 {
        match self {
            Self::Mhz20 => 52,
            Self::Mhz40 => 108,
            Self::Mhz80 => 234,
            Self::Mhz160 => 468,
        }
    }

    pub fn mhz(self) -> u32 {
        match self {
            Self::Mhz20 => 20,
            Self::Mhz40 => 40,
            Self::Mhz80 => 80,
            Self::Mhz160 => 160,
        }
    }
}

impl TryFrom<u32> for Bandwidth {
    type Error = String;

    fn try_from(mhz: u32) -> Result<Self, Self::Error> {
        match mhz {
            20 => Ok(Self::Mhz20),
            40 => Ok(Self::Mhz40),
            80 => Ok(Self::Mhz80),
            160 => Ok(Self::Mhz160),
            other => Err(format!(
                "bandwidth must be one of 20, 40, 80, 160 MHz, got {other}"
            )),
        }
    }
}

impl From<Bandwidth> for u32 {
    fn from(bw: Bandwidth) -> u32 {
        bw.mhz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardInterval {
    #[default]
    Long,
    Short,
}

impl GuardInterval {
    /// OFDM symbol duration in microseconds.
    pub fn symbol_us(self) -> f64 {
        match self {
            Self::Long => 4.0,
            Self::Short => 3.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub n_tx_antennas: u32,
    #[serde(default = "ApConfig::default_bandwidth")]
    pub bandwidth_mhz: Bandwidth,
    #[serde(default = "ApConfig::default_max_group_size")]
    pub max_group_size: usize,
    #[serde(default = "ApConfig::default_sounding_period_ms")]
    pub sounding_period_ms: f64,
    #[serde(default = "ApConfig::default_carrier_ghz")]
    pub carrier_ghz: f64,
    #[serde(default)]
    pub guard_interval: GuardInterval,
}

impl ApConfig {
    /// Hard 802.11ac limit on users per MU group.
    pub const MAX_MU_USERS: usize = 4;

    fn default_bandwidth() -> Bandwidth {
        Bandwidth::Mhz80
    }
    fn default_max_group_size() -> usize {
        4
    }
    fn default_sounding_period_ms() -> f64 {
        100.0
    }
    fn default_carrier_ghz() -> f64 {
        5.18
    }

    pub fn new(n_tx_antennas: u32) -> Self {
        Self {
            n_tx_antennas,
            bandwidth_mhz: Self::default_bandwidth(),
            max_group_size: Self::default_max_group_size(),
            sounding_period_ms: Self::default_sounding_period_ms(),
            carrier_ghz: Self::default_carrier_ghz(),
            guard_interval: GuardInterval::Long,
        }
    }

    /// Largest group the scheduler may form.
    pub fn group_cap(&self) -> usize {
        self.max_group_size.min(Self::MAX_MU_USERS)
    }

    pub fn validate(&self) -> Result<(), InvalidField> {
        if !(1..=8).contains(&self.n_tx_antennas) {
            return Err(InvalidField::new("n_tx_antennas", "out of 1..=8"));
        }
        if self.max_group_size < 1 {
            return Err(InvalidField::new("max_group_size", "must be >= 1"));
        }
        if !(self.sounding_period_ms > 0.0 && self.sounding_period_ms.is_finite()) {
            return Err(InvalidField::new("sounding_period_ms", "must be > 0"));
        }
        if !(self.carrier_ghz > 0.0 && self.carrier_ghz.is_finite()) {
            return Err(InvalidField::new("carrier_ghz", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub id: UserId,
    pub base_snr_db: f64,
    #[serde(default)]
    pub speed_mps: f64,
    #[serde(default = "one")]
    pub n_rx_antennas: u32,
    #[serde(default = "one")]
    pub n_streams: u32,
}

fn one() -> u32 {
    1
}

impl UserProfile {
    pub fn new(id: u32, base_snr_db: f64) -> Self {
        Self {
            id: UserId(id),
            base_snr_db,
            speed_mps: 0.0,
            n_rx_antennas: 1,
            n_streams: 1,
        }
    }

    pub fn with_streams(mut self, n: u32) -> Self {
        self.n_streams = n;
        self.n_rx_antennas = self.n_rx_antennas.max(n);
        self
    }

    pub fn with_speed(mut self, speed_mps: f64) -> Self {
        self.speed_mps = speed_mps;
        self
    }

    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.n_streams < 1 || self.n_streams > self.n_rx_antennas {
            return Err(InvalidField::new(
                "n_streams",
                "must satisfy 1 <= n_streams <= n_rx_antennas",
            ));
        }
        if !(-10.0..=60.0).contains(&self.base_snr_db) {
            return Err(InvalidField::new("base_snr_db", "out of [-10, 60]"));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(InvalidField::new("speed_mps", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSnapshot {
    pub coeffs: Vec<Complex64>,
    pub timestamp_ms: f64,
}

impl CsiSnapshot {
    /// Draws an i.i.d. unit-variance complex Gaussian channel.
    pub fn random<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Self {
        Self {
            coeffs: (0..dimension).map(|_| complex_noise(rng)).collect(),
            timestamp_ms: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Coherence distance in metres: half a wavelength at the carrier.
pub fn coherence_distance_m(carrier_ghz: f64) -> f64 {
    SPEED_OF_LIGHT / (carrier_ghz * 1e9) / 2.0
}

/// Correlation between two CSI samples taken `dt_ms` apart by a user moving at `speed_mps`.
pub fn temporal_correlation(speed_mps: f64, dt_ms: f64, carrier_ghz: f64) -> f64 {
    let displacement = speed_mps * dt_ms / 1000.0;
    (-displacement / coherence_distance_m(carrier_ghz)).exp()
}

/// Advances a CSI snapshot by `dt_ms` under Gauss-Markov evolution.
///
/// Noise is always drawn, so the RNG stream consumed per call does not depend
/// on the user's speed.
pub fn synthesize_csi<R: Rng + ?Sized>(
    prev: &CsiSnapshot,
    speed_mps: f64,
    dt_ms: f64,
    carrier_ghz: f64,
    rng: &mut R,
) -> CsiSnapshot {
    debug_assert!(dt_ms >= 0.0);
    let rho = temporal_correlation(speed_mps, dt_ms, carrier_ghz);
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let coeffs = prev
        .coeffs
        .iter()
        .map(|&h| {
            let w = complex_noise(rng);
            h * rho + w * innovation
        })
        .collect();
    CsiSnapshot {
        coeffs,
        timestamp_ms: prev.timestamp_ms + dt_ms,
    }
}

/// Normalised inner-product magnitude, in `[0, 1]`.
pub fn csi_correlation(a: &CsiSnapshot, b: &CsiSnapshot) -> Result<f64, PhyError> {
    if a.coeffs.len() != b.coeffs.len() {
        return Err(PhyError::DimensionMismatch(a.coeffs.len(), b.coeffs.len()));
    }
    let energy = |s: &CsiSnapshot| s.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let (ea, eb) = (energy(a), energy(b));
    if ea == 0.0 || eb == 0.0 {
        return Err(PhyError::ZeroNorm);
    }
    let inner: Complex64 = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| x * y.conj())
        .sum();
    // sqrt(e * e) == e exactly, so identical snapshots correlate to exactly 1
    Ok((inner.norm() / (ea * eb).sqrt()).clamp(0.0, 1.0))
}

/// Constants of the MU loss, staleness, PER and rate-selection models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossModel {
    /// Inter-user penalty per additional group member (dB).
    pub eta_db: f64,
    /// Staleness slope in dB per (m/s · s).
    pub c_stale: f64,
    pub cap_db: f64,
    /// Logistic PER slope per dB.
    pub k_per: f64,
    /// SNR gap at which PER is one half.
    pub g50_db: f64,
    pub margin_db: f64,
}

impl Default for LossModel {
    fn default() -> Self {
        Self {
            eta_db: 1.0,
            c_stale: 200.0,
            cap_db: 30.0,
            k_per: 2.0,
            g50_db: -1.0,
            margin_db: 1.0,
        }
    }
}

impl LossModel {
    pub fn validate(&self) -> Result<(), InvalidField> {
        let fields = [
            ("eta_db", self.eta_db),
            ("c_stale", self.c_stale),
            ("cap_db", self.cap_db),
            ("margin_db", self.margin_db),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(InvalidField::new(name, "must be finite and >= 0"));
            }
        }
        if !(self.k_per > 0.0 && self.k_per.is_finite()) {
            return Err(InvalidField::new("k_per", "must be > 0"));
        }
        if !self.g50_db.is_finite() {
            return Err(InvalidField::new("g50_db", "must be finite"));
        }
        Ok(())
    }
}

/// Effective post-precoding SNR (dB) of `user` inside a group of `group_size`
/// users carrying `group_streams` streams in total.
///
/// A singleton group transmits without precoding, so neither the power split
/// nor the CSI staleness term applies to it.
pub fn effective_snr(
    user: &UserProfile,
    group_size: usize,
    group_streams: u32,
    t_since_sound_ms: f64,
    model: &LossModel,
) -> Result<f64, PhyError> {
    if group_size < 1 {
        return Err(PhyError::EmptyGroup(group_size));
    }
    if group_streams < user.n_streams {
        return Err(PhyError::StreamCount {
            total: group_streams,
            own: user.n_streams,
        });
    }
    if group_size == 1 {
        return Ok(user.base_snr_db);
    }
    let power_split = 10.0 * (group_streams as f64 / user.n_streams as f64).log10();
    let interference = model.eta_db * (group_size - 1) as f64;
    let staleness = (model.c_stale * user.speed_mps * t_since_sound_ms / 1000.0).min(model.cap_db);
    Ok(user.base_snr_db - power_split - interference - staleness)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CodingRate {
    pub num: u32,
    pub den: u32,
}

impl CodingRate {
    pub const fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for CodingRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl TryFrom<String> for CodingRate {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| format!("coding rate must look like \"5/6\", got {s:?}"))?;
        let num: u32 = n
            .trim()
            .parse()
            .map_err(|_| format!("bad coding rate numerator in {s:?}"))?;
        let den: u32 = d
            .trim()
            .parse()
            .map_err(|_| format!("bad coding rate denominator in {s:?}"))?;
        if num == 0 || den == 0 || num > den {
            return Err(format!("coding rate {s:?} must lie in (0, 1]"));
        }
        Ok(Self { num, den })
    }
}

impl From<CodingRate> for String {
    fn from(r: CodingRate) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub index: u8,
    pub bits_per_subcarrier: u32,
    pub coding_rate: CodingRate,
    pub snr_req_db: f64,
}

impl McsEntry {
    fn efficiency(&self) -> f64 {
        self.bits_per_subcarrier as f64 * self.coding_rate.value()
    }
}

/// Ordered modulation-and-coding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
}

impl Default for McsTable {
    fn default() -> Self {
        const MODS: [(u32, u32, u32); 10] = [
            (1, 1, 2),
            (2, 1, 2),
            (2, 3, 4),
            (4, 1, 2),
            (4, 3, 4),
            (6, 2, 3),
            (6, 3, 4),
            (6, 5, 6),
            (8, 3, 4),
            (8, 5, 6),
        ];
        const SNR_REQ: [f64; 10] = [2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0, 31.0];
        let entries = MODS
            .iter()
            .zip(SNR_REQ)
            .enumerate()
            .map(|(i, (&(bits, num, den), snr))| McsEntry {
                index: i as u8,
                bits_per_subcarrier: bits,
                coding_rate: CodingRate::new(num, den),
                snr_req_db: snr,
            })
            .collect();
        Self { entries }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.entries.is_empty() {
            return Err(InvalidField::new("", "table must not be empty"));
        }
        for (pos, e) in self.entries.iter().enumerate() {
            if e.index as usize != pos {
                return Err(InvalidField::new(
                    format!("[{pos}].index"),
                    "indices must be 0,1,2,... in order",
                ));
            }
            if e.bits_per_subcarrier == 0 || !e.snr_req_db.is_finite() {
                return Err(InvalidField::new(format!("[{pos}]"), "invalid entry"));
            }
        }
        for (pos, w) in self.entries.windows(2).enumerate() {
            if w[1].snr_req_db <= w[0].snr_req_db {
                return Err(InvalidField::new(
                    format!("[{}].snr_req_db", pos + 1),
                    "must be strictly increasing",
                ));
            }
            if w[1].efficiency() <= w[0].efficiency() {
                return Err(InvalidField::new(
                    format!("[{}]", pos + 1),
                    "bits x coding rate must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, index: u8) -> Result<&McsEntry, PhyError> {
        self.entries
            .get(index as usize)
            .ok_or(PhyError::UnknownMcs(index))
    }

    pub fn highest(&self) -> u8 {
        (self.entries.len() - 1) as u8
    }
}

/// Highest MCS whose requirement is met with `margin_db` to spare; `None` means no transmission.
pub fn select_mcs(eff_snr_db: f64, table: &McsTable, margin_db: f64) -> Option<u8> {
    let budget = eff_snr_db - margin_db;
    table
        .entries
        .iter()
        .rev()
        .find(|e| e.snr_req_db <= budget)
        .map(|e| e.index)
}

/// PHY data rate in Mbps; zero for no transmission.
pub fn phy_rate(
    table: &McsTable,
    mcs: Option<u8>,
    bandwidth: Bandwidth,
    n_streams: u32,
    guard: GuardInterval,
) -> Result<f64, PhyError> {
    let Some(index) = mcs else {
        return Ok(0.0);
    };
    let e = table.get(index)?;
    let numer = n_streams as u64
        * bandwidth.data_subcarriers()
        * e.bits_per_subcarrier as u64
        * e.coding_rate.num as u64;
    let den = e.coding_rate.den as u64;
    // data bits per OFDM symbol, integral for every standard table entry
    let bits_per_symbol = if numer.is_multiple_of(den) {
        (numer / den) as f64
    } else {
        numer as f64 / den as f64
    };
    Ok(bits_per_symbol / guard.symbol_us())
}

/// Logistic packet error rate at the given SNR for the chosen MCS.
pub fn packet_error_rate(
    eff_snr_db: f64,
    mcs: Option<u8>,
    table: &McsTable,
    model: &LossModel,
) -> Result<f64, PhyError> {
    let Some(index) = mcs else {
        return Ok(1.0);
    };
    let gap = eff_snr_db - table.get(index)?.snr_req_db;
    Ok(1.0 / (1.0 + (model.k_per * (gap - model.g50_db)).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "SU")]
    Su,
    #[serde(rename = "MU")]
    Mu,
}

impl Mode {
    pub fn for_group_size(k: usize) -> Self {
        if k >= 2 {
            Self::Mu
        } else {
            Self::Su
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Su => "SU",
            Self::Mu => "MU",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub user_id: UserId,
    pub mode: Mode,
    pub eff_snr_db: f64,
    pub mcs: Option<u8>,
    pub phy_rate_mbps: f64,
    pub per: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_speed_keeps_csi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = CsiSnapshot::random(16, &mut rng);
        let h2 = synthesize_csi(&h, 0.0, 100.0, 5.18, &mut rng);
        assert_eq!(h.coeffs, h2.coeffs);
        assert_eq!(h2.timestamp_ms, 100.0);
    }

    #[test]
    fn coherence_distance_and_rho() {
        let dc = coherence_distance_m(5.18);
        assert_relative_eq!(dc, 0.028938, epsilon = 1e-5);
        let rho = temporal_correlation(1.0, 100.0, 5.18);
        assert_relative_eq!(rho, (-0.1f64 / dc).exp(), epsilon = 1e-15);
        assert!((rho - 0.0316).abs() < 5e-4, "rho = {rho}");
    }

    #[test]
    fn correlation_edge_cases() {
        let a = CsiSnapshot {
            coeffs: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            timestamp_ms: 0.0,
        };
        let b = CsiSnapshot {
            coeffs: vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 2.0)],
            timestamp_ms: 0.0,
        };
        assert_eq!(csi_correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(csi_correlation(&a, &b).unwrap(), 0.0);
        let short = CsiSnapshot {
            coeffs: vec![Complex64::new(1.0, 0.0)],
            timestamp_ms: 0.0,
        };
        assert_eq!(
            csi_correlation(&a, &short),
            Err(PhyError::DimensionMismatch(2, 1))
        );
        let zero = CsiSnapshot {
            coeffs: vec![Complex64::new(0.0, 0.0); 2],
            timestamp_ms: 0.0,
        };
        assert_eq!(csi_correlation(&a, &zero), Err(PhyError::ZeroNorm));
    }

    #[test]
    fn correlation_tracks_rho_on_average() {
        // Monte-Carlo over seeds; independent of the evolution code path beyond
        // the public functions.
        let rho = temporal_correlation(1.0, 100.0, 5.18);
        let (mut signed, mut magnitude) = (0.0, 0.0);
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CsiSnapshot::random(16, &mut rng);
            let b = synthesize_csi(&a, 1.0, 100.0, 5.18, &mut rng);
            let inner: Complex64 = a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(x, y)| x.conj() * y)
                .sum();
            signed += inner.re / (a.norm() * b.norm());
            magnitude += csi_correlation(&a, &b).unwrap();
        }
        assert!(
            (signed / 1000.0 - rho).abs() < 0.05,
            "signed mean = {}",
            signed / 1000.0
        );

        // The magnitude has a noise floor: for independent D-dim complex vectors
        // E|cos| = Gamma(D) Gamma(3/2) / Gamma(D + 1/2) = (D-1)! / (2 prod_{k<D} (k + 1/2)).
        let d = 16;
        let mut floor = 0.5;
        for k in 0..d {
            floor *= if k == 0 { 1.0 } else { k as f64 } / (k as f64 + 0.5);
        }
        let mean = magnitude / 1000.0;
        assert!(
            (mean - floor).abs() < 0.05,
            "mean = {mean}, floor = {floor}"
        );
        assert!(mean < 0.9);
    }

    #[test]
    fn effective_snr_examples() {
        let m = LossModel::default();
        let u = UserProfile::new(0, 30.0);
        assert_eq!(effective_snr(&u, 1, 1, 0.0, &m).unwrap(), 30.0);
        assert_relative_eq!(
            effective_snr(&u, 2, 2, 0.0, &m).unwrap(),
            30.0 - 10.0 * 2f64.log10() - 1.0,
            epsilon = 1e-12
        );
        assert!((effective_snr(&u, 2, 2, 0.0, &m).unwrap() - 25.99).abs() < 0.01);
        let walker = u.clone().with_speed(1.0);
        let v = effective_snr(&walker, 2, 2, 50.0, &m).unwrap();
        assert!((v - 15.99).abs() < 0.01, "{v}");
        // the cap bounds staleness
        let runner = u.with_speed(100.0);
        let capped = effective_snr(&runner, 2, 2, 100.0, &m).unwrap();
        assert_relative_eq!(
            capped,
            30.0 - 10.0 * 2f64.log10() - 1.0 - 30.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn effective_snr_errors() {
        let m = LossModel::default();
        let u = UserProfile::new(0, 30.0).with_streams(2);
        assert_eq!(
            effective_snr(&u, 0, 2, 0.0, &m),
            Err(PhyError::EmptyGroup(0))
        );
        assert!(matches!(
            effective_snr(&u, 2, 1, 0.0, &m),
            Err(PhyError::StreamCount { .. })
        ));
    }

    #[test]
    fn mcs_selection_boundaries() {
        let t = McsTable::default();
        assert_eq!(select_mcs(1000.0, &t, 1.0), Some(9));
        assert_eq!(select_mcs(2.5, &t, 1.0), None);
        assert_eq!(select_mcs(15.0 + 1.0, &t, 1.0), Some(4));
        assert_eq!(select_mcs(15.0 + 1.0 - 1e-9, &t, 1.0), Some(3));
    }

    #[test]
    fn phy_rate_examples() {
        let t = McsTable::default();
        let bw = Bandwidth::Mhz20;
        assert_eq!(
            phy_rate(&t, Some(7), bw, 1, GuardInterval::Long).unwrap(),
            65.0
        );
        let r9 = phy_rate(&t, Some(9), Bandwidth::Mhz80, 4, GuardInterval::Short).unwrap();
        assert!((r9 - 1733.3).abs() < 0.05, "{r9}");
        let one = phy_rate(&t, Some(3), bw, 1, GuardInterval::Long).unwrap();
        let two = phy_rate(&t, Some(3), bw, 2, GuardInterval::Long).unwrap();
        assert_eq!(two, 2.0 * one);
        assert_eq!(
            phy_rate(&t, None, bw, 4, GuardInterval::Short).unwrap(),
            0.0
        );
        assert_eq!(
            phy_rate(&t, Some(10), bw, 1, GuardInterval::Long),
            Err(PhyError::UnknownMcs(10))
        );
    }

    #[test]
    fn per_examples() {
        let t = McsTable::default();
        let m = LossModel::default();
        let req = t.get(4).unwrap().snr_req_db;
        assert_relative_eq!(
            packet_error_rate(req - 1.0, Some(4), &t, &m).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let at_zero_gap = packet_error_rate(req, Some(4), &t, &m).unwrap();
        assert_relative_eq!(at_zero_gap, 1.0 / (1.0 + 2f64.exp()), epsilon = 1e-15);
        assert!((at_zero_gap - 0.1192).abs() < 1e-4);
        assert!(packet_error_rate(req + 100.0, Some(4), &t, &m).unwrap() < 1e-80);
        assert_eq!(packet_error_rate(40.0, None, &t, &m).unwrap(), 1.0);
    }

    #[test]
    fn table_validation() {
        assert!(McsTable::default().validate().is_ok());
        let mut t = McsTable::default();
        t.entries[3].snr_req_db = 1.0;
        assert!(t.validate().is_err());
        let mut t = McsTable::default();
        t.entries[5].bits_per_subcarrier = 1;
        assert!(t.validate().is_err());
    }

    #[test]
    fn coding_rate_parsing() {
        let r: CodingRate = serde_json::from_str("\"5/6\"").unwrap();
        assert_eq!(r, CodingRate::new(5, 6));
        assert!(serde_json::from_str::<CodingRate>("\"7/6\"").is_err());
        assert!(serde_json::from_str::<Bandwidth>("30").is_err());
        assert_eq!(serde_json::to_string(&Bandwidth::Mhz160).unwrap(), "160");
    }
}
