use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DropCause, PacketTrace, RunResult, TrafficClass};
use crate::scenario::write_topology_csv;
use crate::Result;

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub packets: PathBuf,
    pub summary: PathBuf,
    pub topology: PathBuf,
}

impl OutputPaths {
    /// `<dir>/<stem>_packets.csv` and friends.
    pub fn in_dir(dir: impl AsRef<Path>, stem: &str) -> Self {
        let dir = dir.as_ref();
        Self {
            packets: dir.join(format!("{stem}_packets.csv")),
            summary: dir.join(format!("{stem}_summary.csv")),
            topology: dir.join(format!("{stem}_topology.csv")),
        }
    }

    fn all(&self) -> [&Path; 3] {
        [&self.packets, &self.summary, &self.topology]
    }
}

/// Creates the output files up front so a bad path fails before a long run.
pub fn check_writable(paths: &OutputPaths) -> Result<()> {
    for p in paths.all() {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        File::create(p)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Column names and values of the one-row run summary.
pub fn summary_record(r: &RunResult) -> Vec<(String, String)> {
    let c = &r.config;
    let l = &r.ledger;
    let mut row: Vec<(String, String)> = vec![
        ("config_hash".into(), c.config_hash()),
        ("seed".into(), c.seed.to_string()),
        ("run_index".into(), c.run_index.to_string()),
        ("n_devices".into(), c.n_devices.to_string()),
        ("n_gateways".into(), c.n_gateways.to_string()),
        ("us_period_s".into(), c.us_period_s.to_string()),
        ("us_confirmed".into(), c.us_confirmed.to_string()),
        ("sim_time_s".into(), r.sim_time_s.to_string()),
    ];
    for class in TrafficClass::ALL {
        let counts = l.class(class);
        let name = class.as_str();
        row.push((format!("{name}_generated"), counts.generated.to_string()));
        row.push((format!("{name}_delivered"), counts.delivered.to_string()));
        row.push((format!("{name}_queued"), counts.queued.to_string()));
        for cause in DropCause::ALL {
            row.push((format!("{name}_{cause}"), counts.dropped(cause).to_string()));
        }
        row.push((format!("{name}_pdr"), opt(counts.pdr())));
    }
    row.push(("us_pdr".into(), opt(l.uplink().pdr())));
    row.push(("ds_pdr".into(), opt(l.downlink().pdr())));
    row.push(("ack_rw1".into(), l.ack_rw1.to_string()));
    row.push(("ack_rw2".into(), l.ack_rw2.to_string()));
    row.push(("missed_rws".into(), l.missed_rws.to_string()));
    row.push(("us_transmissions".into(), l.us_transmissions.to_string()));
    row.push((
        "tx_per_confirmed".into(),
        opt(l.transmissions_per_confirmed()),
    ));
    for (i, share) in r.sf_shares().iter().enumerate() {
        row.push((format!("sf{}_share", i + 7), format!("{share:.3}")));
    }
    for (i, n) in l.undelivered_by_sf.iter().enumerate() {
        row.push((format!("sf{}_undelivered", i + 7), n.to_string()));
    }
    row
}

pub fn write_summary_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in results.iter().enumerate() {
        let rec = summary_record(r);
        if i == 0 {
            w.write_record(rec.iter().map(|(k, _)| k.as_str()))?;
        }
        w.write_record(rec.iter().map(|(_, v)| v.as_str()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_packets_csv<W: Write>(trace: &[PacketTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time",
        "node",
        "direction",
        "kind",
        "sf",
        "bytes",
        "message",
        "delivered",
        "drop_cause",
        "gateway",
    ])?;
    for p in trace {
        w.write_record([
            format!("{:.6}", p.time),
            p.node.to_string(),
            p.direction.to_string(),
            p.kind.to_string(),
            p.sf.to_string(),
            p.bytes.to_string(),
            p.message.map(|m| m.to_string()).unwrap_or_default(),
            p.delivered.to_string(),
            p.drop_cause.map(|c| c.to_string()).unwrap_or_default(),
            p.gateway.map(|g| g.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes packet trace, summary and topology of one run.
pub fn emit_traces(result: &RunResult, paths: &OutputPaths) -> Result<()> {
    write_packets_csv(&result.trace, File::create(&paths.packets)?)?;
    write_summary_csv(std::slice::from_ref(result), File::create(&paths.summary)?)?;
    write_topology_csv(
        &result.topology,
        &result.sfs,
        File::create(&paths.topology)?,
    )?;
    Ok(())
}

fn estimate_cols(e: Option<super::Estimate>) -> [String; 2] {
    match e {
        Some(e) => [format!("{:.6}", e.mean), format!("{:.6}", e.stderr)],
        None => [String::new(), String::new()],
    }
}

/// One row per sweep point with means and standard errors over replicates.
pub fn write_sweep_csv<W: Write>(points: &[super::SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "config_hash",
        "n_devices",
        "n_gateways",
        "us_period_s",
        "us_confirmed",
        "ds_mean_iat_s",
        "ds_confirmed",
        "replicates",
        "us_pdr",
        "us_pdr_stderr",
        "ds_pdr",
        "ds_pdr_stderr",
        "missed_rws",
        "ack_rw1",
        "ack_rw2",
        "tx_per_confirmed",
    ])?;
    for p in points {
        let c = &p.config;
        let n = p.runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&super::MetricsLedger) -> f64| p.runs.iter().map(f).sum::<f64>() / n;
        let tpc: Vec<f64> = p
            .runs
            .iter()
            .filter_map(|l| l.transmissions_per_confirmed())
            .collect();
        let [us, us_se] = estimate_cols(p.uplink_pdr());
        let [ds, ds_se] = estimate_cols(p.downlink_pdr());
        w.write_record([
            c.config_hash(),
            c.n_devices.to_string(),
            c.n_gateways.to_string(),
            c.us_period_s.to_string(),
            c.us_confirmed.to_string(),
            c.ds_mean_iat_s.map(|m| m.to_string()).unwrap_or_default(),
            c.ds_confirmed.to_string(),
            p.runs.len().to_string(),
            us,
            us_se,
            ds,
            ds_se,
            format!("{:.1}", mean(&|l| l.missed_rws as f64)),
            format!("{:.1}", mean(&|l| l.ack_rw1 as f64)),
            format!("{:.1}", mean(&|l| l.ack_rw2 as f64)),
            estimate_cols(super::Estimate::from_samples(&tpc))[0].clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
