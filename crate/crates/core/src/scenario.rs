//! Network geometry, spreading-factor assignment and traffic generation.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::engine::{RngFactory, Time};
use crate::linkmodel::{CodeRate, ErrorModel, LinkBudget, SpreadingFactor};
use crate::mac::FRAME_OVERHEAD_BYTES;
use crate::{Error, Result};

pub const DEFAULT_RADIUS_M: f64 = 6100.0;
pub const DEFAULT_PAYLOAD_BYTES: usize = 8;

/// Static node positions in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub radius_m: f64,
    pub devices: Vec<(f64, f64)>,
    pub gateways: Vec<(f64, f64)>,
}

impl Topology {
    pub fn new(radius_m: f64, devices: Vec<(f64, f64)>, gateways: Vec<(f64, f64)>) -> Self {
        Self {
            radius_m,
            devices,
            gateways,
        }
    }

    /// Index of and distance to the closest gateway.
    pub fn nearest_gateway(&self, device: usize) -> (usize, f64) {
        let (x, y) = self.devices[device];
        self.gateways
            .iter()
            .enumerate()
            .map(|(g, &(gx, gy))| (g, (x - gx).hypot(y - gy)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one gateway")
    }
}

/// Area-uniform positions on a disc. Device `i` draws from its own stream, so
/// the first `n` devices of a larger network sit at the same places.
pub fn place_devices(n: usize, radius_m: f64, rngs: &RngFactory) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut rng = rngs.stream(format!("dev{i}/position"));
            let r = radius_m * rng.random::<f64>().sqrt();
            let phi = TAU * rng.random::<f64>();
            (r * phi.cos(), r * phi.sin())
        })
        .collect()
}

/// Positions at a fixed distance from the origin with uniform bearing.
pub fn place_devices_on_ring(n: usize, distance_m: f64, rngs: &RngFactory) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let phi = TAU * rngs.stream(format!("dev{i}/position")).random::<f64>();
            (distance_m * phi.cos(), distance_m * phi.sin())
        })
        .collect()
}

/// One gateway at the origin, two on a diameter one radius apart, or four
/// on a square centred on the origin whose diagonal equals the radius.
pub fn gateway_positions(n_gateways: usize, radius_m: f64) -> Result<Vec<(f64, f64)>> {
    match n_gateways {
        1 => Ok(vec![(0.0, 0.0)]),
        2 => Ok(vec![(-radius_m / 2.0, 0.0), (radius_m / 2.0, 0.0)]),
        4 => {
            let a = radius_m / 2.0 * FRAC_1_SQRT_2;
            Ok(vec![(a, a), (-a, a), (-a, -a), (a, -a)])
        }
        n => Err(Error::UnsupportedGatewayCount(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SfStrategy {
    Random,
    Fixed(SpreadingFactor),
    /// Lowest SF whose packet error ratio to the closest gateway is below
    /// the threshold.
    PerThreshold(f64),
}

impl Default for SfStrategy {
    fn default() -> Self {
        SfStrategy::PerThreshold(0.01)
    }
}

/// Link quantities needed to estimate packet error ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkContext {
    pub budget: LinkBudget,
    pub model: ErrorModel,
    pub tx_power_dbm: f64,
    pub cr: CodeRate,
}

impl Default for LinkContext {
    fn default() -> Self {
        Self {
            budget: LinkBudget::default(),
            model: ErrorModel::default(),
            tx_power_dbm: crate::linkmodel::DEFAULT_TX_POWER_DBM,
            cr: CodeRate::Cr4_5,
        }
    }
}

impl LinkContext {
    /// Packet error ratio of a `phy_payload_bytes` frame over `distance_m`.
    /// Links below the SNR cut-off never lock and count as lost.
    pub fn per_estimate(
        &self,
        distance_m: f64,
        sf: SpreadingFactor,
        phy_payload_bytes: usize,
    ) -> Result<f64> {
        let snr = self.budget.snr_db(self.tx_power_dbm, distance_m)?;
        if snr < self.model.snr_cutoff(sf, self.cr)? {
            return Ok(1.0);
        }
        let bits = 8.0 * phy_payload_bytes as f64;
        Ok(1.0
            - self
                .model
                .chunk_success_probability(sf, self.cr, snr, bits)?)
    }
}

/// Spreading factor per device.
pub fn assign_sf(
    strategy: SfStrategy,
    topology: &Topology,
    link: &LinkContext,
    payload_bytes: usize,
    rngs: &RngFactory,
) -> Result<Vec<SpreadingFactor>> {
    let frame = payload_bytes + FRAME_OVERHEAD_BYTES;
    (0..topology.devices.len())
        .map(|i| match strategy {
            SfStrategy::Fixed(sf) => Ok(sf),
            SfStrategy::Random => {
                let k = rngs
                    .stream(format!("dev{i}/sf"))
                    .random_range(0..SpreadingFactor::ALL.len());
                Ok(SpreadingFactor::ALL[k])
            }
            SfStrategy::PerThreshold(theta) => {
                let (_, d) = topology.nearest_gateway(i);
                let d = d.max(1.0);
                for sf in SpreadingFactor::ALL {
                    if link.per_estimate(d, sf, frame)? < theta {
                        return Ok(sf);
                    }
                }
                Ok(SpreadingFactor::SF12)
            }
        })
        .collect()
}

/// Percentage of devices per SF, SF7 first.
pub fn sf_shares(sfs: &[SpreadingFactor]) -> [f64; 6] {
    let mut shares = [0.0; 6];
    for sf in sfs {
        shares[(sf.value() - 7) as usize] += 1.0;
    }
    if !sfs.is_empty() {
        shares
            .iter_mut()
            .for_each(|s| *s *= 100.0 / sfs.len() as f64);
    }
    shares
}

/// Per-device traffic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub us_period_s: f64,
    pub us_payload_bytes: usize,
    pub us_confirmed: bool,
    /// Mean time between downlink messages per device; `None` disables them.
    pub ds_mean_iat_s: Option<f64>,
    pub ds_payload_bytes: usize,
    pub ds_confirmed: bool,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        Self {
            us_period_s: 600.0,
            us_payload_bytes: DEFAULT_PAYLOAD_BYTES,
            us_confirmed: false,
            ds_mean_iat_s: None,
            ds_payload_bytes: DEFAULT_PAYLOAD_BYTES,
            ds_confirmed: false,
        }
    }
}

impl TrafficProfile {
    /// Offset of the first uplink, uniform in `[0, period]`.
    pub fn first_uplink<R: Rng + ?Sized>(&self, rng: &mut R) -> Time {
        self.us_period_s * rng.random::<f64>()
    }

    /// Uplink generation instants strictly before `horizon`.
    pub fn uplink_times(&self, t0: Time, horizon: Time) -> impl Iterator<Item = Time> + '_ {
        let period = self.us_period_s;
        (0u64..)
            .map(move |k| t0 + k as f64 * period)
            .take_while(move |&t| t < horizon)
    }

    /// Exponential gap to the next downlink message.
    pub fn next_downlink_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Time> {
        let mean = self.ds_mean_iat_s?;
        let exp = Exp::new(1.0 / mean).ok()?;
        Some(exp.sample(rng))
    }
}

/// Writes `device,x,y,sf` rows followed by `gateway` rows with an empty SF.
pub fn write_topology_csv<W: Write>(
    topology: &Topology,
    sfs: &[SpreadingFactor],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "node", "x", "y", "sf"])?;
    for (i, (&(x, y), sf)) in topology.devices.iter().zip(sfs).enumerate() {
        w.write_record([
            "device",
            &i.to_string(),
            &format!("{x:.3}"),
            &format!("{y:.3}"),
            &sf.value().to_string(),
        ])?;
    }
    for (g, &(x, y)) in topology.gateways.iter().enumerate() {
        w.write_record([
            "gateway",
            &g.to_string(),
            &format!("{x:.3}"),
            &format!("{y:.3}"),
            "",
        ])?;
    }
    w.flush()?;
    Ok(())
}
