//! Link budget, the fitted LoRa bit-error-rate model and airtime.
//!
//! The BER model is the exponential fit
//! `log10(BER(snr_db)) = alpha * exp(beta * snr_db)` with one `(alpha, beta)`
//! pair per spreading factor and code rate, plus an SNR cut-off below which a
//! receiver refuses to lock onto a transmission. The default table is compiled
//! in; a refitted table can be loaded from CSV.

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uplink channel used by every experiment.
pub const UPLINK_CHANNEL_HZ: u32 = 868_100_000;
/// High-power second receive window channel.
pub const RW2_CHANNEL_HZ: u32 = 869_525_000;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 125_000.0;
pub const DEFAULT_TX_POWER_DBM: f64 = 14.0;
/// MAC header + frame header + MIC.
pub const MIN_PHY_PAYLOAD_BYTES: usize = 13;
pub const PREAMBLE_SYMBOLS: f64 = 8.0;

/// Thermal noise over `bandwidth_hz` with a 0 dB noise figure.
pub fn thermal_noise_dbm(bandwidth_hz: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub const SF7: Self = Self(7);
    pub const SF8: Self = Self(8);
    pub const SF9: Self = Self(9);
    pub const SF10: Self = Self(10);
    pub const SF11: Self = Self(11);
    pub const SF12: Self = Self(12);
    pub const ALL: [Self; 6] = [
        Self::SF7,
        Self::SF8,
        Self::SF9,
        Self::SF10,
        Self::SF11,
        Self::SF12,
    ];

    pub fn new(sf: u8) -> Result<Self> {
        if (7..=12).contains(&sf) {
            Ok(Self(sf))
        } else {
            Err(Error::InvalidSpreadingFactor(sf))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Chips (and baseband samples) per symbol.
    pub fn chips(self) -> usize {
        1 << self.0
    }
}

impl TryFrom<u8> for SpreadingFactor {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SpreadingFactor> for u8 {
    fn from(sf: SpreadingFactor) -> u8 {
        sf.0
    }
}

impl fmt::Display for SpreadingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{}", self.0)
    }
}

/// Forward error correction rate. The index is the one used by the error
/// model table: 1 is the 4/5 parity code, 3 the 4/8 extended Hamming code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CodeRate {
    /// Single even-parity bit.
    Cr4_5,
    /// Systematic Hamming(7,4).
    Cr4_7,
    /// Hamming(7,4) plus overall parity.
    Cr4_8,
}

impl CodeRate {
    pub fn from_index(index: u8) -> Result<Self> {
        match index {
            1 => Ok(Self::Cr4_5),
            2 => Ok(Self::Cr4_7),
            3 => Ok(Self::Cr4_8),
            other => Err(Error::InvalidCodeRate(other)),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Cr4_5 => 1,
            Self::Cr4_7 => 2,
            Self::Cr4_8 => 3,
        }
    }

    /// Code bits per 4 information bits.
    pub fn codeword_len(self) -> usize {
        match self {
            Self::Cr4_5 => 5,
            Self::Cr4_7 => 7,
            Self::Cr4_8 => 8,
        }
    }
}

impl TryFrom<u8> for CodeRate {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::from_index(v)
    }
}

impl From<CodeRate> for u8 {
    fn from(cr: CodeRate) -> u8 {
        cr.index()
    }
}

/// Radio configuration of a single transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoRaTxParams {
    pub sf: SpreadingFactor,
    pub cr: CodeRate,
    pub bandwidth_hz: f64,
    pub channel_hz: u32,
    pub tx_power_dbm: f64,
}

impl LoRaTxParams {
    pub fn uplink(sf: SpreadingFactor) -> Self {
        Self {
            sf,
            cr: CodeRate::Cr4_5,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            channel_hz: UPLINK_CHANNEL_HZ,
            tx_power_dbm: DEFAULT_TX_POWER_DBM,
        }
    }

    /// Second receive window: fixed channel at SF12.
    pub fn rw2() -> Self {
        Self {
            channel_hz: RW2_CHANNEL_HZ,
            ..Self::uplink(SpreadingFactor::SF12)
        }
    }

    pub fn with_power(mut self, tx_power_dbm: f64) -> Self {
        self.tx_power_dbm = tx_power_dbm;
        self
    }

    pub fn symbol_duration(&self) -> f64 {
        symbol_duration(self.sf, self.bandwidth_hz)
    }
}

pub fn symbol_rate(sf: SpreadingFactor, bandwidth_hz: f64) -> f64 {
    bandwidth_hz / sf.chips() as f64
}

pub fn symbol_duration(sf: SpreadingFactor, bandwidth_hz: f64) -> f64 {
    1.0 / symbol_rate(sf, bandwidth_hz)
}

/// Raw PHY bit rate, `SF` bits per symbol.
pub fn bit_rate(sf: SpreadingFactor, bandwidth_hz: f64) -> f64 {
    sf.value() as f64 * symbol_rate(sf, bandwidth_hz)
}

/// Low data rate optimisation is mandatory once symbols exceed 16 ms.
pub fn low_data_rate_optimize(sf: SpreadingFactor, bandwidth_hz: f64) -> bool {
    symbol_duration(sf, bandwidth_hz) > 16e-3
}

/// Number of payload symbols for an explicit-header frame with CRC.
pub fn payload_symbols(params: &LoRaTxParams, phy_payload_bytes: usize) -> f64 {
    let sf = params.sf.value() as f64;
    let de = if low_data_rate_optimize(params.sf, params.bandwidth_hz) {
        1.0
    } else {
        0.0
    };
    let numerator = 8.0 * phy_payload_bytes as f64 - 4.0 * sf + 28.0 + 16.0;
    let blocks = (numerator / (4.0 * (sf - 2.0 * de))).ceil();
    8.0 + (blocks * params.cr.codeword_len() as f64).max(0.0)
}

/// Airtime of a frame: preamble, sync word and payload symbols.
pub fn time_on_air(params: &LoRaTxParams, phy_payload_bytes: usize) -> Result<f64> {
    if phy_payload_bytes < MIN_PHY_PAYLOAD_BYTES {
        return Err(Error::PayloadTooShort(phy_payload_bytes));
    }
    let symbols = PREAMBLE_SYMBOLS + 4.25 + payload_symbols(params, phy_payload_bytes);
    Ok(symbols * params.symbol_duration())
}

/// Log-distance propagation with a fixed noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Loss at the 1 m reference distance.
    pub ref_loss_db: f64,
    pub path_exponent: f64,
    pub noise_floor_dbm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            ref_loss_db: 46.6777,
            path_exponent: 3.0,
            noise_floor_dbm: thermal_noise_dbm(DEFAULT_BANDWIDTH_HZ),
        }
    }
}

impl LinkBudget {
    pub fn path_loss_db(&self, distance_m: f64) -> Result<f64> {
        if distance_m.is_nan() || distance_m <= 0.0 {
            return Err(Error::InvalidDistance(distance_m));
        }
        Ok(self.path_loss_clamped(distance_m))
    }

    /// Path loss without validation; distances under 1 m (including zero)
    /// clamp to the reference loss.
    pub fn path_loss_clamped(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(1.0);
        self.ref_loss_db + 10.0 * self.path_exponent * d.log10()
    }

    pub fn snr_db(&self, tx_power_dbm: f64, distance_m: f64) -> Result<f64> {
        Ok(tx_power_dbm - self.path_loss_db(distance_m)? - self.noise_floor_dbm)
    }

    pub fn rx_power_dbm(&self, tx_power_dbm: f64, distance_m: f64) -> f64 {
        tx_power_dbm - self.path_loss_clamped(distance_m)
    }
}

/// One row of the error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelEntry {
    pub sf: SpreadingFactor,
    pub cr: CodeRate,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "cutoff")]
    pub snr_cutoff_db: f64,
}

impl ErrorModelEntry {
    pub fn ber(&self, snr_db: f64) -> f64 {
        ber_from_fit(self.alpha, self.beta, snr_db)
    }
}

/// `10^(alpha * exp(beta * snr))`, clamped to `[0, 0.5]`.
pub fn ber_from_fit(alpha: f64, beta: f64, snr_db: f64) -> f64 {
    let log10_ber = alpha * (beta * snr_db).exp();
    10f64.powf(log10_ber).clamp(0.0, 0.5)
}

/// `(1 - ber)^n_bits`, evaluated in log space so fractional bit counts work.
pub fn success_from_ber(ber: f64, n_bits: f64) -> f64 {
    if n_bits == 0.0 {
        return 1.0;
    }
    (n_bits * (-ber).ln_1p()).exp()
}

const TABLE: [(u8, u8, f64, f64, f64); 12] = [
    (7, 1, -30.2580, 0.2857, -12.2833),
    (7, 3, -105.1966, 0.3746, -12.6962),
    (8, 1, -77.1002, 0.2993, -14.8485),
    (8, 3, -289.8133, 0.3756, -15.3588),
    (9, 1, -244.6424, 0.3223, -17.3749),
    (9, 3, -1114.3312, 0.3969, -17.9260),
    (10, 1, -725.9556, 0.3340, -20.0254),
    (10, 3, -4285.4440, 0.4116, -20.5581),
    (11, 1, -2109.8064, 0.3407, -22.7568),
    (11, 3, -20771.6945, 0.4332, -23.1791),
    (12, 1, -4452.3653, 0.3317, -25.6243),
    (12, 3, -98658.1166, 0.4485, -25.8602),
];

/// Lookup table of fitted BER curves.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    entries: Vec<ErrorModelEntry>,
}

impl Default for ErrorModel {
    fn default() -> Self {
        let entries = TABLE
            .iter()
            .map(|&(sf, cr, alpha, beta, cutoff)| ErrorModelEntry {
                sf: SpreadingFactor(sf),
                cr: CodeRate::from_index(cr).expect("table code rate"),
                alpha,
                beta,
                snr_cutoff_db: cutoff,
            })
            .collect();
        Self { entries }
    }
}

impl ErrorModel {
    pub fn from_entries(entries: Vec<ErrorModelEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.alpha < 0.0 && e.beta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{} CR{}: alpha must be negative and beta positive",
                    e.sf,
                    e.cr.index()
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Reads `sf,cr,alpha,beta,cutoff` rows (with header).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ErrorModelEntry>, _>>()?;
        Self::from_entries(entries)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entries(&self) -> &[ErrorModelEntry] {
        &self.entries
    }

    pub fn entry(&self, sf: SpreadingFactor, cr: CodeRate) -> Result<&ErrorModelEntry> {
        self.entries
            .iter()
            .find(|e| e.sf == sf && e.cr == cr)
            .ok_or(Error::UnknownErrorModel {
                sf: sf.value(),
                cr: cr.index(),
            })
    }

    pub fn ber(&self, sf: SpreadingFactor, cr: CodeRate, snr_db: f64) -> Result<f64> {
        Ok(self.entry(sf, cr)?.ber(snr_db))
    }

    pub fn snr_cutoff(&self, sf: SpreadingFactor, cr: CodeRate) -> Result<f64> {
        Ok(self.entry(sf, cr)?.snr_cutoff_db)
    }

    pub fn chunk_success_probability(
        &self,
        sf: SpreadingFactor,
        cr: CodeRate,
        snr_db: f64,
        n_bits: f64,
    ) -> Result<f64> {
        if n_bits.is_nan() || n_bits < 0.0 {
            return Err(Error::NegativeBitCount(n_bits));
        }
        Ok(success_from_ber(self.ber(sf, cr, snr_db)?, n_bits))
    }
}
