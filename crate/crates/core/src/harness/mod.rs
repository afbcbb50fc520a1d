//! Experiment configuration, runs, sweeps and CSV output.

mod metrics;
mod output;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::RngFactory;
use crate::linkmodel::{CodeRate, ErrorModel, LinkBudget, SpreadingFactor, DEFAULT_TX_POWER_DBM};
use crate::network::{AirtimeRecord, Network, NetworkSetup};
use crate::scenario::{
    assign_sf, gateway_positions, place_devices, place_devices_on_ring, sf_shares, LinkContext,
    SfStrategy, Topology, TrafficProfile, DEFAULT_PAYLOAD_BYTES, DEFAULT_RADIUS_M,
};
use crate::{Error, Result};

pub use metrics::{DropCause, MetricsLedger, PacketTrace, TrafficClass, TrafficCounts};
pub use output::{
    check_writable, emit_traces, summary_record, write_packets_csv, write_summary_csv,
    write_sweep_csv, OutputPaths,
};

/// Largest application payload accepted for a frame.
pub const MAX_PAYLOAD_BYTES: usize = 242;

/// One experiment. Every field has a default, so a TOML file only needs the
/// values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_devices: usize,
    pub n_gateways: usize,
    pub radius_m: f64,
    /// Place every device at this distance from the origin instead of
    /// uniformly on the disc.
    pub device_distance_m: Option<f64>,
    pub us_period_s: f64,
    pub us_payload_bytes: usize,
    pub us_confirmed: bool,
    /// Mean time between downlink messages per device; unset disables them.
    pub ds_mean_iat_s: Option<f64>,
    pub ds_payload_bytes: usize,
    pub ds_confirmed: bool,
    pub sf_strategy: SfStrategy,
    /// 1 = 4/5, 2 = 4/7, 3 = 4/8.
    pub code_rate: u8,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    /// CSV with fitted BER curves; the built-in table when unset.
    pub error_model: Option<PathBuf>,
    /// Simulated time in uplink periods.
    pub sim_periods: f64,
    pub max_queue: usize,
    pub ack_timeout_min_s: f64,
    pub ack_timeout_max_s: f64,
    pub seed: u64,
    pub run_index: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_devices: 100,
            n_gateways: 1,
            radius_m: DEFAULT_RADIUS_M,
            device_distance_m: None,
            us_period_s: 600.0,
            us_payload_bytes: DEFAULT_PAYLOAD_BYTES,
            us_confirmed: false,
            ds_mean_iat_s: None,
            ds_payload_bytes: DEFAULT_PAYLOAD_BYTES,
            ds_confirmed: false,
            sf_strategy: SfStrategy::default(),
            code_rate: 1,
            tx_power_dbm: DEFAULT_TX_POWER_DBM,
            noise_floor_dbm: LinkBudget::default().noise_floor_dbm,
            error_model: None,
            sim_periods: 100.0,
            max_queue: 32,
            ack_timeout_min_s: 1.0,
            ack_timeout_max_s: 3.0,
            seed: 1,
            run_index: 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 {
            return Err(Error::InvalidConfig("n_devices must be at least 1".into()));
        }
        if !matches!(self.n_gateways, 1 | 2 | 4) {
            return Err(Error::UnsupportedGatewayCount(self.n_gateways));
        }
        positive("radius_m", self.radius_m)?;
        if let Some(d) = self.device_distance_m {
            positive("device_distance_m", d)?;
        }
        positive("us_period_s", self.us_period_s)?;
        positive("sim_periods", self.sim_periods)?;
        if let Some(m) = self.ds_mean_iat_s {
            positive("ds_mean_iat_s", m)?;
        }
        for (name, bytes) in [
            ("us_payload_bytes", self.us_payload_bytes),
            ("ds_payload_bytes", self.ds_payload_bytes),
        ] {
            if bytes == 0 || bytes > MAX_PAYLOAD_BYTES {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in 1..={MAX_PAYLOAD_BYTES}, got {bytes}"
                )));
            }
        }
        if let SfStrategy::PerThreshold(t) = self.sf_strategy {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "PER threshold must be in (0, 1), got {t}"
                )));
            }
        }
        CodeRate::from_index(self.code_rate)?;
        if !self.tx_power_dbm.is_finite() || !self.noise_floor_dbm.is_finite() {
            return Err(Error::InvalidConfig("powers must be finite".into()));
        }
        if self.max_queue == 0 {
            return Err(Error::InvalidConfig("max_queue must be at least 1".into()));
        }
        if !(self.ack_timeout_min_s >= 0.0 && self.ack_timeout_min_s <= self.ack_timeout_max_s) {
            return Err(Error::InvalidConfig(format!(
                "ack timeout bounds [{}, {}] are not ordered",
                self.ack_timeout_min_s, self.ack_timeout_max_s
            )));
        }
        Ok(())
    }

    pub fn sim_time_s(&self) -> f64 {
        self.us_period_s * self.sim_periods
    }

    pub fn traffic(&self) -> TrafficProfile {
        TrafficProfile {
            us_period_s: self.us_period_s,
            us_payload_bytes: self.us_payload_bytes,
            us_confirmed: self.us_confirmed,
            ds_mean_iat_s: self.ds_mean_iat_s,
            ds_payload_bytes: self.ds_payload_bytes,
            ds_confirmed: self.ds_confirmed,
        }
    }

    pub fn link_context(&self) -> Result<LinkContext> {
        let model = match &self.error_model {
            Some(p) => ErrorModel::from_csv_path(p)?,
            None => ErrorModel::default(),
        };
        Ok(LinkContext {
            budget: LinkBudget {
                noise_floor_dbm: self.noise_floor_dbm,
                ..LinkBudget::default()
            },
            model,
            tx_power_dbm: self.tx_power_dbm,
            cr: CodeRate::from_index(self.code_rate)?,
        })
    }

    /// Short digest of every setting except the seed and run index, so
    /// replicates of one configuration share it.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = 0;
        canonical.run_index = 0;
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_replicate(&self, run_index: u32) -> Self {
        Self {
            run_index,
            ..self.clone()
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub topology: Topology,
    pub sfs: Vec<SpreadingFactor>,
    pub ledger: MetricsLedger,
    pub airtime: Vec<AirtimeRecord>,
    pub sim_time_s: f64,
    pub max_frame_airtime_s: f64,
    pub trace: Vec<PacketTrace>,
}

impl RunResult {
    pub fn sf_shares(&self) -> [f64; 6] {
        sf_shares(&self.sfs)
    }

    /// Conservation of messages and the per-node duty-cycle bound. The
    /// airtime over the run may exceed the duty-cycle share of the run by
    /// at most one frame, the one that started just before the end.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.ledger.check_conservation() {
            out.push(e.to_string());
        }
        for a in &self.airtime {
            let bound = a.limit * self.sim_time_s + self.max_frame_airtime_s;
            if a.airtime_s > bound + 1e-9 {
                out.push(format!(
                    "{} {} used {:.3} s in sub-band {}, bound {:.3} s",
                    if a.gateway { "gateway node" } else { "device" },
                    a.node,
                    a.airtime_s,
                    a.sub_band,
                    bound
                ));
            }
        }
        out
    }

    pub fn check_invariants(&self) -> Result<()> {
        match self.invariant_violations().first() {
            None => Ok(()),
            Some(v) => Err(Error::InvariantViolation(v.clone())),
        }
    }
}

/// Builds the topology for a configuration.
pub fn build_topology(cfg: &ExperimentConfig, rngs: &RngFactory) -> Result<Topology> {
    let gateways = gateway_positions(cfg.n_gateways, cfg.radius_m)?;
    let devices = match cfg.device_distance_m {
        Some(d) => place_devices_on_ring(cfg.n_devices, d, rngs),
        None => place_devices(cfg.n_devices, cfg.radius_m, rngs),
    };
    Ok(Topology::new(cfg.radius_m, devices, gateways))
}

/// Runs one experiment to completion.
pub fn run_experiment(cfg: &ExperimentConfig, collect_trace: bool) -> Result<RunResult> {
    cfg.validate()?;
    let rngs = RngFactory::new(cfg.seed, cfg.run_index);
    let topology = build_topology(cfg, &rngs)?;
    let link = cfg.link_context()?;
    let sfs = assign_sf(
        cfg.sf_strategy,
        &topology,
        &link,
        cfg.us_payload_bytes,
        &rngs,
    )?;
    let mut net = Network::new(NetworkSetup {
        topology: topology.clone(),
        sfs: sfs.clone(),
        traffic: cfg.traffic(),
        link,
        max_queue: cfg.max_queue,
        ack_timeout_s: (cfg.ack_timeout_min_s, cfg.ack_timeout_max_s),
        horizon_s: cfg.sim_time_s(),
        rngs,
        collect_trace,
    })?;
    net.run()?;
    Ok(RunResult {
        config: cfg.clone(),
        topology,
        sfs,
        ledger: net.ledger(),
        airtime: net.airtime_records(),
        sim_time_s: cfg.sim_time_s(),
        max_frame_airtime_s: net.max_frame_airtime(),
        trace: net.take_trace(),
    })
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, stderr, n })
    }
}

/// Replicates of one configuration.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub config: ExperimentConfig,
    pub runs: Vec<MetricsLedger>,
}

impl SweepPoint {
    /// PDR of a traffic class across replicates that generated any.
    pub fn pdr(&self, class: TrafficClass) -> Option<Estimate> {
        let xs: Vec<f64> = self.runs.iter().filter_map(|l| l.pdr(class)).collect();
        Estimate::from_samples(&xs)
    }

    pub fn uplink_pdr(&self) -> Option<Estimate> {
        let xs: Vec<f64> = self.runs.iter().filter_map(|l| l.uplink().pdr()).collect();
        Estimate::from_samples(&xs)
    }

    pub fn downlink_pdr(&self) -> Option<Estimate> {
        let xs: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|l| l.downlink().pdr())
            .collect();
        Estimate::from_samples(&xs)
    }
}

/// Runs `replicates` seeds of every configuration in parallel. Replicate `k`
/// uses run index `k`; invariant violations abort the sweep.
pub fn sweep(configs: &[ExperimentConfig], replicates: u32) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(usize, ExperimentConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..replicates).map(move |k| (i, c.with_replicate(k))))
        .collect();
    let results: Vec<(usize, MetricsLedger)> = jobs
        .par_iter()
        .map(|(i, c)| {
            let r = run_experiment(c, false)?;
            r.check_invariants()?;
            Ok((*i, r.ledger))
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<SweepPoint> = configs
        .iter()
        .map(|c| SweepPoint {
            config: c.clone(),
            runs: Vec::new(),
        })
        .collect();
    for (i, l) in results {
        points[i].runs.push(l);
    }
    Ok(points)
}
