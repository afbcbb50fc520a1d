//! Event-driven LoRaWAN network: end devices, gateways and the network
//! server on one shared medium.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::engine::{EventHandle, RngFactory, RngStream, Scheduler, Time};
use crate::harness::{DropCause, MetricsLedger, PacketTrace, TrafficClass};
use crate::linkmodel::{time_on_air, ErrorModel, LoRaTxParams, SpreadingFactor, RW2_CHANNEL_HZ};
use crate::mac::{
    AfterWindow, BandPlan, EdMacState, EndDeviceMac, Frame, GatewayMac, MessageId, ReceiveWindow,
    SendCheck, TxDecision,
};
use crate::netserver::{GatewayHeard, JobKind, NetworkServer, NsCounters, RwAction};
use crate::phy::{
    ArrivalDecision, Medium, NodeId, Phy, PhyState, RxTuning, SignalId, SignalRecord,
};
use crate::scenario::{LinkContext, Topology, TrafficProfile};
use crate::{Error, Result};

/// Everything needed to build a network.
#[derive(Debug, Clone)]
pub struct NetworkSetup {
    pub topology: Topology,
    pub sfs: Vec<SpreadingFactor>,
    pub traffic: TrafficProfile,
    pub link: LinkContext,
    pub max_queue: usize,
    /// Bounds of the uniform acknowledgment timeout.
    pub ack_timeout_s: (f64, f64),
    pub horizon_s: Time,
    pub rngs: RngFactory,
    pub collect_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Uplink(usize),
    Downlink(usize),
    TryTx(usize),
    SignalEnd(SignalId),
    OpenRw(usize, ReceiveWindow),
    PreambleCheck(usize, ReceiveWindow),
    AckTimeoutEnd(usize),
    NsTimer(usize, ReceiveWindow),
    NsTransmit(usize, ReceiveWindow),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pending,
    Delivered,
    Dropped(DropCause),
}

#[derive(Debug, Clone)]
struct Message {
    class: TrafficClass,
    sf: SpreadingFactor,
    status: Status,
    transmissions: u32,
    /// The network server decoded at least one copy.
    data_received: bool,
    last_cause: Option<DropCause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Device(usize),
    Gateway(usize),
}

#[derive(Debug, Clone)]
struct SignalInfo {
    frame: Frame,
    source: Source,
    /// Transmission number of the source node, used to key reception draws.
    source_seq: u64,
    /// Most severe reason an intended receiver failed.
    cause: Option<DropCause>,
}

impl SignalInfo {
    fn note(&mut self, cause: DropCause) {
        if self.cause.is_none_or(|c| cause.severity() > c.severity()) {
            self.cause = Some(cause);
        }
    }
}

struct Device {
    node: NodeId,
    mac: EndDeviceMac,
    phy: Phy,
    wakeup: Option<EventHandle>,
    traffic_rng: RngStream,
    mac_rng: RngStream,
    ds_rng: RngStream,
    tx_seq: u64,
    tx_signal: Option<SignalId>,
}

struct Gateway {
    node: NodeId,
    mac: GatewayMac,
    /// SF7..SF12 on the uplink channel, then the RW2 transmitter.
    phys: Vec<Phy>,
    tx_phy: Option<usize>,
    tx_seq: u64,
}

const RW2_PHY: usize = 6;

fn phy_index(params: &LoRaTxParams) -> usize {
    if params.channel_hz == RW2_CHANNEL_HZ {
        RW2_PHY
    } else {
        (params.sf.value() - 7) as usize
    }
}

/// Per-node airtime in one sub-band, for duty-cycle auditing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirtimeRecord {
    pub node: NodeId,
    pub gateway: bool,
    pub sub_band: usize,
    pub airtime_s: f64,
    pub limit: f64,
}

pub struct Network {
    sched: Scheduler<Action>,
    medium: Medium,
    model: ErrorModel,
    plan: BandPlan,
    devices: Vec<Device>,
    gateways: Vec<Gateway>,
    ns: NetworkServer,
    traffic: TrafficProfile,
    horizon: Time,
    ack_timeout: (f64, f64),
    rngs: RngFactory,
    messages: Vec<Message>,
    signals: BTreeMap<SignalId, SignalInfo>,
    listening: BTreeSet<usize>,
    trace: Option<Vec<PacketTrace>>,
    max_toa: f64,
}

impl Network {
    pub fn new(setup: NetworkSetup) -> Result<Self> {
        let NetworkSetup {
            topology,
            sfs,
            traffic,
            link,
            max_queue,
            ack_timeout_s,
            horizon_s,
            rngs,
            collect_trace,
        } = setup;
        if sfs.len() != topology.devices.len() {
            return Err(Error::LengthMismatch {
                expected: topology.devices.len(),
                got: sfs.len(),
            });
        }
        let plan = BandPlan::default();
        let n_dev = topology.devices.len();
        let mut positions = topology.devices.clone();
        positions.extend(topology.gateways.iter().copied());
        let medium = Medium::new(link.budget, positions);
        let mut ns = NetworkServer::new(link.tx_power_dbm);
        let devices = sfs
            .iter()
            .enumerate()
            .map(|(i, &sf)| {
                let mut params = LoRaTxParams::uplink(sf).with_power(link.tx_power_dbm);
                params.cr = link.cr;
                ns.register_device(i, params);
                Device {
                    node: i,
                    mac: EndDeviceMac::new(i, params, plan.clone(), max_queue),
                    phy: Phy::new(
                        i,
                        RxTuning {
                            params,
                            downlink: true,
                        },
                    ),
                    wakeup: None,
                    traffic_rng: rngs.stream(format!("dev{i}/traffic")),
                    mac_rng: rngs.stream(format!("dev{i}/mac")),
                    ds_rng: rngs.stream(format!("dev{i}/downlink")),
                    tx_seq: 0,
                    tx_signal: None,
                }
            })
            .collect();
        let gateways = (0..topology.gateways.len())
            .map(|g| {
                let node = n_dev + g;
                let mut phys: Vec<Phy> = SpreadingFactor::ALL
                    .iter()
                    .map(|&sf| {
                        let mut params = LoRaTxParams::uplink(sf).with_power(link.tx_power_dbm);
                        params.cr = link.cr;
                        Phy::new(
                            node,
                            RxTuning {
                                params,
                                downlink: false,
                            },
                        )
                    })
                    .collect();
                phys.push(Phy::new(
                    node,
                    RxTuning {
                        params: LoRaTxParams::rw2().with_power(link.tx_power_dbm),
                        downlink: false,
                    },
                ));
                for p in &mut phys {
                    p.switch_to(PhyState::RxOn)?;
                }
                Ok(Gateway {
                    node,
                    mac: GatewayMac::new(phys.len(), plan.clone()),
                    phys,
                    tx_phy: None,
                    tx_seq: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let max_toa = SpreadingFactor::ALL
            .iter()
            .map(|&sf| {
                time_on_air(
                    &LoRaTxParams::uplink(sf),
                    traffic.us_payload_bytes.max(traffic.ds_payload_bytes)
                        + crate::mac::FRAME_OVERHEAD_BYTES,
                )
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let mut net = Self {
            sched: Scheduler::new(),
            medium,
            model: link.model.clone(),
            plan,
            devices,
            gateways,
            ns,
            traffic,
            horizon: horizon_s,
            ack_timeout: ack_timeout_s,
            rngs,
            messages: Vec::new(),
            signals: BTreeMap::new(),
            listening: BTreeSet::new(),
            trace: collect_trace.then(Vec::new),
            max_toa,
        };
        for i in 0..n_dev {
            let t0 = net.traffic.first_uplink(&mut net.devices[i].traffic_rng);
            if t0 < net.horizon {
                net.sched.schedule_at(t0, Action::Uplink(i))?;
            }
            if let Some(gap) = net.traffic.next_downlink_gap(&mut net.devices[i].ds_rng) {
                if gap < net.horizon {
                    net.sched.schedule_at(gap, Action::Downlink(i))?;
                }
            }
        }
        Ok(net)
    }

    pub fn now(&self) -> Time {
        self.sched.now()
    }

    pub fn ns_counters(&self) -> NsCounters {
        self.ns.counters()
    }

    /// Runs until the horizon.
    pub fn run(&mut self) -> Result<()> {
        while let Some((_, action)) = self.sched.next_until(self.horizon) {
            self.handle(action)?;
        }
        self.sched.advance_to(self.horizon);
        Ok(())
    }

    /// Longest frame airtime in the run; the duty-cycle audit slack.
    pub fn max_frame_airtime(&self) -> f64 {
        self.max_toa
    }

    pub fn airtime_records(&self) -> Vec<AirtimeRecord> {
        let mut out = Vec::new();
        for (b, band) in self.plan.bands().iter().enumerate() {
            for d in &self.devices {
                out.push(AirtimeRecord {
                    node: d.node,
                    gateway: false,
                    sub_band: b,
                    airtime_s: d.mac.ledger().airtime(b),
                    limit: band.duty_cycle,
                });
            }
            for g in &self.gateways {
                out.push(AirtimeRecord {
                    node: g.node,
                    gateway: true,
                    sub_band: b,
                    airtime_s: g.mac.ledger().airtime(b),
                    limit: band.duty_cycle,
                });
            }
        }
        out
    }

    pub fn take_trace(&mut self) -> Vec<PacketTrace> {
        self.trace.take().unwrap_or_default()
    }

    /// Tallies every message generated so far.
    pub fn ledger(&self) -> MetricsLedger {
        let mut ledger = MetricsLedger::default();
        for m in &self.messages {
            let counts = ledger.class_mut(m.class);
            counts.generated += 1;
            match m.status {
                Status::Delivered => counts.delivered += 1,
                Status::Dropped(c) => counts.add_drop(c),
                Status::Pending => counts.queued += 1,
            }
            if m.class.is_uplink() {
                ledger.us_transmissions += u64::from(m.transmissions);
                if m.status != Status::Delivered {
                    ledger.undelivered_by_sf[(m.sf.value() - 7) as usize] += 1;
                }
                if m.class == TrafficClass::UpConfirmed && m.status != Status::Pending {
                    ledger.confirmed_finished += 1;
                    ledger.confirmed_transmissions += u64::from(m.transmissions);
                }
            }
        }
        for d in &self.devices {
            ledger.devices_by_sf[(d.mac.uplink_params().sf.value() - 7) as usize] += 1;
        }
        let c = self.ns.counters();
        ledger.ack_rw1 = c.ack_rw1;
        ledger.ack_rw2 = c.ack_rw2;
        ledger.missed_rws = c.missed_rws;
        ledger
    }

    fn handle(&mut self, action: Action) -> Result<()> {
        match action {
            Action::Uplink(d) => self.on_uplink_generated(d),
            Action::Downlink(d) => self.on_downlink_generated(d),
            Action::TryTx(d) => {
                self.devices[d].wakeup = None;
                self.try_tx(d)
            }
            Action::SignalEnd(id) => self.on_signal_end(id),
            Action::OpenRw(d, w) => self.open_window(d, w),
            Action::PreambleCheck(d, w) => self.preamble_check(d, w),
            Action::AckTimeoutEnd(d) => self.ack_timeout_end(d),
            // Yield once so that a device opening its window at the same
            // instant is listening before the downlink starts.
            Action::NsTimer(d, w) => self
                .sched
                .schedule(0.0, Action::NsTransmit(d, w))
                .map(|_| ()),
            Action::NsTransmit(d, w) => self.ns_timer(d, w),
        }
    }

    fn new_message(&mut self, class: TrafficClass, device: usize) -> MessageId {
        self.messages.push(Message {
            class,
            sf: self.devices[device].mac.uplink_params().sf,
            status: Status::Pending,
            transmissions: 0,
            data_received: false,
            last_cause: None,
        });
        (self.messages.len() - 1) as MessageId
    }

    fn finish(&mut self, message: MessageId, status: Status) {
        let m = &mut self.messages[message as usize];
        if m.status == Status::Pending {
            m.status = status;
        }
    }

    fn on_uplink_generated(&mut self, d: usize) -> Result<()> {
        let class = if self.traffic.us_confirmed {
            TrafficClass::UpConfirmed
        } else {
            TrafficClass::UpUnconfirmed
        };
        let id = self.new_message(class, d);
        let evicted = self.devices[d].mac.enqueue(
            id,
            self.traffic.us_payload_bytes,
            self.traffic.us_confirmed,
        );
        if let Some(old) = evicted {
            self.finish(old.message, Status::Dropped(DropCause::QueueExpired));
        }
        let next = self.now() + self.traffic.us_period_s;
        if next < self.horizon {
            self.sched.schedule_at(next, Action::Uplink(d))?;
        }
        self.try_tx(d)
    }

    fn on_downlink_generated(&mut self, d: usize) -> Result<()> {
        let class = if self.traffic.ds_confirmed {
            TrafficClass::DownConfirmed
        } else {
            TrafficClass::DownUnconfirmed
        };
        let id = self.new_message(class, d);
        let params = *self.devices[d].mac.uplink_params();
        let now = self.now();
        self.ns.enqueue_downstream(
            d,
            params,
            id,
            self.traffic.ds_payload_bytes,
            self.traffic.ds_confirmed,
            now,
        );
        if let Some(gap) = self.traffic.next_downlink_gap(&mut self.devices[d].ds_rng) {
            if now + gap < self.horizon {
                self.sched.schedule_at(now + gap, Action::Downlink(d))?;
            }
        }
        Ok(())
    }

    fn try_tx(&mut self, d: usize) -> Result<()> {
        if self.devices[d].wakeup.is_some() || self.devices[d].mac.state() != EdMacState::Idle {
            return Ok(());
        }
        let now = self.now();
        let params = *self.devices[d].mac.uplink_params();
        let decision = self.devices[d]
            .mac
            .next_transmission(now, |bytes| time_on_air(&params, bytes))?;
        match decision {
            TxDecision::Send(frame) => self.device_transmit(d, frame),
            TxDecision::BlockedUntil(t) => {
                let h = self.sched.schedule_at(t, Action::TryTx(d))?;
                self.devices[d].wakeup = Some(h);
                Ok(())
            }
            TxDecision::Nothing => Ok(()),
        }
    }

    fn device_transmit(&mut self, d: usize, frame: Frame) -> Result<()> {
        let now = self.now();
        let dev = &mut self.devices[d];
        let params = *dev.mac.uplink_params();
        dev.phy.switch_to(PhyState::TxOn)?;
        let rec = dev.phy.start_tx(
            &mut self.medium,
            params,
            now,
            frame.phy_payload_bytes(),
            false,
        )?;
        dev.tx_seq += 1;
        dev.tx_signal = Some(rec.id);
        let seq = dev.tx_seq;
        if let Some(m) = frame.message {
            self.messages[m as usize].transmissions += 1;
        }
        self.signals.insert(
            rec.id,
            SignalInfo {
                frame,
                source: Source::Device(d),
                source_seq: seq,
                cause: None,
            },
        );
        self.signal_started(&rec)
    }

    /// Chunk updates for ongoing receptions, then lock decisions.
    fn signal_started(&mut self, rec: &SignalRecord) -> Result<()> {
        let now = self.now();
        self.interference_changed(rec.params.channel_hz, now);
        let mut causes = Vec::new();
        if rec.downlink {
            let target = self.signals[&rec.id].frame.device;
            let listening: Vec<usize> = self.listening.iter().copied().collect();
            let mut target_decided = false;
            for d in listening {
                let decision =
                    self.devices[d]
                        .phy
                        .on_signal_arrival(&self.medium, rec, now, &self.model)?;
                if d == target {
                    target_decided = true;
                    if let Some(c) = arrival_cause(decision) {
                        causes.push(c);
                    }
                }
            }
            if !target_decided {
                causes.push(DropCause::NotListening);
            }
        } else {
            for g in 0..self.gateways.len() {
                let idx = phy_index(&rec.params);
                let decision = self.gateways[g].phys[idx].on_signal_arrival(
                    &self.medium,
                    rec,
                    now,
                    &self.model,
                )?;
                if let Some(c) = arrival_cause(decision) {
                    causes.push(c);
                }
            }
        }
        let info = self.signals.get_mut(&rec.id).expect("registered signal");
        for c in causes {
            info.note(c);
        }
        self.sched
            .schedule_at(rec.end_time, Action::SignalEnd(rec.id))?;
        Ok(())
    }

    fn interference_changed(&mut self, channel_hz: u32, now: Time) {
        for g in &mut self.gateways {
            for p in &mut g.phys {
                if p.reception()
                    .is_some_and(|r| r.params.channel_hz == channel_hz)
                {
                    p.on_interference_change(&self.medium, now);
                }
            }
        }
        for &d in &self.listening {
            let p = &mut self.devices[d].phy;
            if p.reception()
                .is_some_and(|r| r.params.channel_hz == channel_hz)
            {
                p.on_interference_change(&self.medium, now);
            }
        }
    }

    fn reception_draw(&self, receiver: NodeId, info: &SignalInfo) -> f64 {
        let source = match info.source {
            Source::Device(d) => self.devices[d].node,
            Source::Gateway(g) => self.gateways[g].node,
        };
        let mut h = Sha256::new();
        h.update(self.rngs.master_seed().to_le_bytes());
        h.update(self.rngs.run_index().to_le_bytes());
        h.update(b"reception");
        h.update((receiver as u64).to_le_bytes());
        h.update((source as u64).to_le_bytes());
        h.update(info.source_seq.to_le_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn on_signal_end(&mut self, id: SignalId) -> Result<()> {
        let now = self.now();
        let rec = self
            .medium
            .remove_signal(id)
            .ok_or_else(|| Error::InvalidConfig(format!("signal {id} ended twice")))?;
        let mut info = self.signals.remove(&id).expect("tracked signal");

        // The source first, so that its receive window opens before the
        // network server reacts to the same uplink.
        match info.source {
            Source::Device(d) => {
                let dev = &mut self.devices[d];
                dev.phy.end_tx()?;
                dev.phy.switch_to(PhyState::TrxOff)?;
                dev.tx_signal = None;
                let rw1 = dev.mac.tx_complete(now)?;
                self.sched
                    .schedule_at(rw1, Action::OpenRw(d, ReceiveWindow::Rw1))?;
            }
            Source::Gateway(g) => {
                let gw = &mut self.gateways[g];
                let idx = gw.tx_phy.take().expect("gateway was transmitting");
                gw.phys[idx].end_tx()?;
                for p in &mut gw.phys {
                    p.switch_to(PhyState::RxOn)?;
                }
                gw.mac.tx_complete();
            }
        }

        if rec.downlink {
            self.finish_downlink(&rec, &mut info)?;
        } else {
            self.finish_uplink(&rec, &mut info)?;
        }
        self.interference_changed(rec.params.channel_hz, now);
        Ok(())
    }

    fn finish_uplink(&mut self, rec: &SignalRecord, info: &mut SignalInfo) -> Result<()> {
        let now = self.now();
        let idx = phy_index(&rec.params);
        let mut heard = Vec::new();
        for g in 0..self.gateways.len() {
            let locked = self.gateways[g].phys[idx]
                .reception()
                .is_some_and(|r| r.signal == rec.id);
            if !locked {
                continue;
            }
            let u = self.reception_draw(self.gateways[g].node, info);
            let out = self.gateways[g].phys[idx].finalize_reception(now, &self.model, u)?;
            if out.success {
                let snr = self.medium.rx_power_dbm(
                    rec.source,
                    self.gateways[g].node,
                    rec.params.tx_power_dbm,
                ) - self.medium.budget().noise_floor_dbm;
                heard.push((g, snr));
            } else {
                info.note(DropCause::Interference);
            }
        }
        let Source::Device(d) = info.source else {
            unreachable!("uplinks come from devices")
        };
        let frame = info.frame.clone();
        let msg = frame.message.expect("uplinks carry a message");
        let success = !heard.is_empty();
        for &(g, snr) in &heard {
            let r = self.ns.on_upstream(
                &frame,
                rec.id,
                rec.params,
                GatewayHeard {
                    gateway: g,
                    time: now,
                    snr_db: snr,
                },
                now,
            );
            if let Some((t1, t2)) = r.timers {
                self.sched
                    .schedule_at(t1, Action::NsTimer(d, ReceiveWindow::Rw1))?;
                self.sched
                    .schedule_at(t2, Action::NsTimer(d, ReceiveWindow::Rw2))?;
            }
            if let Some(m) = r.ds_acked {
                self.finish(m, Status::Delivered);
            }
            if let Some(m) = r.ds_dropped {
                let cause = self.messages[m as usize]
                    .last_cause
                    .unwrap_or(DropCause::NoAck);
                self.finish(m, Status::Dropped(cause));
            }
        }
        let cause = info.cause.unwrap_or(DropCause::BelowCutoff);
        let m = &mut self.messages[msg as usize];
        if success {
            m.data_received = true;
            if !frame.confirmed {
                self.finish(msg, Status::Delivered);
            }
        } else {
            m.last_cause = Some(cause);
            if !frame.confirmed {
                self.finish(msg, Status::Dropped(cause));
            }
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(PacketTrace {
                time: rec.start_time,
                node: d,
                direction: "up",
                kind: if frame.confirmed {
                    "confirmed"
                } else {
                    "unconfirmed"
                },
                sf: rec.params.sf.value(),
                bytes: rec.phy_payload_bytes,
                message: Some(msg),
                delivered: success,
                drop_cause: (!success).then_some(cause),
                gateway: heard.first().map(|h| h.0),
            });
        }
        Ok(())
    }

    fn finish_downlink(&mut self, rec: &SignalRecord, info: &mut SignalInfo) -> Result<()> {
        let now = self.now();
        let target = info.frame.device;
        let mut delivered = false;
        let locked: Vec<usize> = self
            .listening
            .iter()
            .copied()
            .filter(|&d| {
                self.devices[d]
                    .phy
                    .reception()
                    .is_some_and(|r| r.signal == rec.id)
            })
            .collect();
        for d in locked {
            let u = self.reception_draw(self.devices[d].node, info);
            let out = self.devices[d]
                .phy
                .finalize_reception(now, &self.model, u)?;
            let for_us = out.success && d == target;
            if d == target && !out.success {
                info.note(DropCause::Interference);
            }
            self.devices[d].phy.switch_to(PhyState::TrxOff)?;
            self.listening.remove(&d);
            if for_us {
                delivered = true;
                let effect = self.devices[d].mac.downlink_received(&info.frame)?;
                if let Some(entry) = effect.acked {
                    self.finish(entry.message, Status::Delivered);
                }
                self.after_window(d, effect.next)?;
            } else if matches!(
                self.devices[d].mac.state(),
                EdMacState::Rw1 | EdMacState::Rw2
            ) {
                let next = self.devices[d].mac.close_window(now)?;
                self.after_window(d, next)?;
            }
        }
        let cause = info.cause.unwrap_or(DropCause::NotListening);
        if let Some(m) = info.frame.message {
            if delivered {
                if !info.frame.confirmed {
                    self.finish(m, Status::Delivered);
                }
            } else {
                self.messages[m as usize].last_cause = Some(cause);
                if !info.frame.confirmed {
                    self.finish(m, Status::Dropped(cause));
                }
            }
        }
        if let Some(trace) = self.trace.as_mut() {
            let Source::Gateway(g) = info.source else {
                unreachable!("downlinks come from gateways")
            };
            trace.push(PacketTrace {
                time: rec.start_time,
                node: target,
                direction: "down",
                kind: match (info.frame.message, info.frame.confirmed) {
                    (None, _) => "ack",
                    (Some(_), true) => "confirmed",
                    (Some(_), false) => "unconfirmed",
                },
                sf: rec.params.sf.value(),
                bytes: rec.phy_payload_bytes,
                message: info.frame.message,
                delivered,
                drop_cause: (!delivered).then_some(cause),
                gateway: Some(g),
            });
        }
        Ok(())
    }

    fn open_window(&mut self, d: usize, w: ReceiveWindow) -> Result<()> {
        let now = self.now();
        let dev = &mut self.devices[d];
        dev.mac.open_window(w)?;
        dev.phy.retune(RxTuning {
            params: dev.mac.window_params(w),
            downlink: true,
        })?;
        dev.phy.switch_to(PhyState::RxOn)?;
        let check = now + dev.mac.preamble_check_delay(w);
        self.listening.insert(d);
        self.sched.schedule_at(check, Action::PreambleCheck(d, w))?;
        Ok(())
    }

    fn preamble_check(&mut self, d: usize, w: ReceiveWindow) -> Result<()> {
        let expected = match w {
            ReceiveWindow::Rw1 => EdMacState::Rw1,
            ReceiveWindow::Rw2 => EdMacState::Rw2,
        };
        let dev = &mut self.devices[d];
        if dev.mac.state() != expected || dev.phy.state() == PhyState::BusyRx {
            return Ok(());
        }
        dev.phy.switch_to(PhyState::TrxOff)?;
        self.listening.remove(&d);
        let next = self.devices[d].mac.close_window(self.sched.now())?;
        self.after_window(d, next)
    }

    fn after_window(&mut self, d: usize, next: AfterWindow) -> Result<()> {
        match next {
            AfterWindow::OpenRw2At(t) => {
                self.sched
                    .schedule_at(t, Action::OpenRw(d, ReceiveWindow::Rw2))?;
            }
            AfterWindow::AckTimeout => {
                let (lo, hi) = self.ack_timeout;
                let wait = if hi > lo {
                    self.devices[d].mac_rng.random_range(lo..=hi)
                } else {
                    lo
                };
                self.sched.schedule(wait, Action::AckTimeoutEnd(d))?;
            }
            AfterWindow::Idle => self.try_tx(d)?,
        }
        Ok(())
    }

    fn ack_timeout_end(&mut self, d: usize) -> Result<()> {
        if let Some(entry) = self.devices[d].mac.ack_timeout_end()? {
            let m = &self.messages[entry.message as usize];
            let cause = if m.data_received {
                DropCause::NoAck
            } else {
                m.last_cause.unwrap_or(DropCause::NoAck)
            };
            self.finish(entry.message, Status::Dropped(cause));
        }
        self.try_tx(d)
    }

    fn ns_timer(&mut self, d: usize, w: ReceiveWindow) -> Result<()> {
        let now = self.now();
        let gateways = &self.gateways;
        let action = self
            .ns
            .on_rw_timer(d, w, |g, params| gateways[g].mac.can_send(params, now))?;
        if let RwAction::Send {
            gateway,
            frame,
            params,
            job,
        } = action
        {
            if let JobKind::Data { message, .. } = job {
                self.messages[message as usize].transmissions += 1;
            }
            self.gateway_transmit(gateway, frame, params)?;
        }
        Ok(())
    }

    fn gateway_transmit(&mut self, g: usize, frame: Frame, params: LoRaTxParams) -> Result<()> {
        let now = self.now();
        // Transmitting aborts every reception in progress at this gateway.
        let mut aborted = Vec::new();
        for p in &mut self.gateways[g].phys {
            if p.state() == PhyState::BusyRx {
                aborted.push(p.cancel_rx(now)?.signal);
            }
            p.switch_to(PhyState::TrxOff)?;
        }
        for id in aborted {
            if let Some(info) = self.signals.get_mut(&id) {
                info.note(DropCause::Aborted);
            }
        }
        let bytes = frame.phy_payload_bytes();
        let toa = time_on_air(&params, bytes)?;
        let idx = phy_index(&params);
        let gw = &mut self.gateways[g];
        if gw.mac.send(idx, &params, now, toa)? != SendCheck::Sent {
            return Err(Error::InvalidConfig(
                "gateway selected but cannot send".into(),
            ));
        }
        gw.phys[idx].switch_to(PhyState::TxOn)?;
        let rec = gw.phys[idx].start_tx(&mut self.medium, params, now, bytes, true)?;
        gw.tx_phy = Some(idx);
        gw.tx_seq += 1;
        let seq = gw.tx_seq;
        self.signals.insert(
            rec.id,
            SignalInfo {
                frame,
                source: Source::Gateway(g),
                source_seq: seq,
                cause: None,
            },
        );
        self.signal_started(&rec)
    }
}

fn arrival_cause(decision: ArrivalDecision) -> Option<DropCause> {
    match decision {
        ArrivalDecision::Lock | ArrivalDecision::IgnoreOtherParams => None,
        ArrivalDecision::IgnoreBelowCutoff => Some(DropCause::BelowCutoff),
        ArrivalDecision::IgnoreBusy => Some(DropCause::Collision),
        ArrivalDecision::IgnoreNotListening => Some(DropCause::NotListening),
    }
}
