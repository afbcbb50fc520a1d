//! Network server: upstream deduplication, per-device downlink queues and
//! receive-window scheduling.

use std::collections::{BTreeMap, VecDeque};

use crate::engine::Time;
use crate::linkmodel::LoRaTxParams;
use crate::mac::{
    Frame, MessageId, ReceiveWindow, SendCheck, DEFAULT_TRANSMISSIONS, RW1_DELAY, RW2_DELAY,
};
use crate::Result;

/// A gateway that heard the device's last uplink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayHeard {
    pub gateway: usize,
    pub time: Time,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    /// Acknowledges the uplink with this frame counter.
    Ack { frame_counter: u32 },
    Data {
        message: MessageId,
        payload_bytes: usize,
        confirmed: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkJob {
    pub kind: JobKind,
    pub remaining_attempts: u32,
    pub attempts: u32,
    pub created: Time,
}

/// One receive-window pair following an uplink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwPair {
    pub uplink_end: Time,
    pub served: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceContext {
    pub address: usize,
    pub last_frame_counter: Option<u32>,
    pub last_transmission: Option<u64>,
    pub last_params: LoRaTxParams,
    /// Gateways that heard the last uplink, best first.
    pub gateways: Vec<GatewayHeard>,
    pub last_seen: Time,
    pub queue: VecDeque<DownlinkJob>,
    pub rw: Option<RwPair>,
    downlink_counter: u32,
}

impl DeviceContext {
    fn new(address: usize, params: LoRaTxParams) -> Self {
        Self {
            address,
            last_frame_counter: None,
            last_transmission: None,
            last_params: params,
            gateways: Vec::new(),
            last_seen: 0.0,
            queue: VecDeque::new(),
            rw: None,
            downlink_counter: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpstreamKind {
    /// First reception of a new message.
    New,
    /// A retransmission of a message already received.
    Retransmission,
    /// The same transmission heard by another gateway.
    GatewayDuplicate,
}

/// What the caller must do after an uplink was processed.
#[derive(Debug, Clone, PartialEq)]
pub struct UpstreamResult {
    pub kind: UpstreamKind,
    /// RW1 and RW2 timer instants, for a transmission seen the first time.
    pub timers: Option<(Time, Time)>,
    /// Confirmed downlink message acknowledged by this uplink.
    pub ds_acked: Option<MessageId>,
    /// Confirmed downlink message given up after its last attempt.
    pub ds_dropped: Option<MessageId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RwAction {
    Send {
        gateway: usize,
        frame: Frame,
        params: LoRaTxParams,
        job: JobKind,
    },
    /// No gateway could serve RW1; try again at RW2.
    Deferred,
    /// Neither window could be served.
    Missed {
        dropped_ack: bool,
    },
    Nothing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NsCounters {
    pub ack_rw1: u64,
    pub ack_rw2: u64,
    pub missed_rws: u64,
}

/// Singleton network server.
#[derive(Debug, Clone)]
pub struct NetworkServer {
    devices: BTreeMap<usize, DeviceContext>,
    counters: NsCounters,
    gateway_tx_power_dbm: f64,
}

impl NetworkServer {
    pub fn new(gateway_tx_power_dbm: f64) -> Self {
        Self {
            devices: BTreeMap::new(),
            counters: NsCounters::default(),
            gateway_tx_power_dbm,
        }
    }

    pub fn counters(&self) -> NsCounters {
        self.counters
    }

    pub fn device(&self, address: usize) -> Option<&DeviceContext> {
        self.devices.get(&address)
    }

    fn context(&mut self, address: usize, params: LoRaTxParams) -> &mut DeviceContext {
        self.devices
            .entry(address)
            .or_insert_with(|| DeviceContext::new(address, params))
    }

    /// Registers a device ahead of its first uplink.
    pub fn register_device(&mut self, address: usize, params: LoRaTxParams) {
        self.context(address, params);
    }

    /// Processes an uplink decoded by `gateway`. `transmission` identifies
    /// the radio transmission, so copies heard by several gateways merge.
    pub fn on_upstream(
        &mut self,
        frame: &Frame,
        transmission: u64,
        params: LoRaTxParams,
        heard: GatewayHeard,
        uplink_end: Time,
    ) -> UpstreamResult {
        let ctx = self.context(frame.device, params);
        if ctx.last_transmission == Some(transmission) {
            ctx.gateways.push(heard);
            ctx.gateways.sort_by(|a, b| {
                b.time
                    .total_cmp(&a.time)
                    .then(b.snr_db.total_cmp(&a.snr_db))
                    .then(a.gateway.cmp(&b.gateway))
            });
            return UpstreamResult {
                kind: UpstreamKind::GatewayDuplicate,
                timers: None,
                ds_acked: None,
                ds_dropped: None,
            };
        }
        let kind = if ctx.last_frame_counter == Some(frame.frame_counter) {
            UpstreamKind::Retransmission
        } else {
            UpstreamKind::New
        };
        ctx.last_transmission = Some(transmission);
        ctx.last_frame_counter = Some(frame.frame_counter);
        ctx.last_params = params;
        ctx.gateways = vec![heard];
        ctx.last_seen = heard.time;
        ctx.rw = Some(RwPair {
            uplink_end,
            served: false,
        });

        // A confirmed downlink that went out at least once is either
        // acknowledged by this uplink or needs another attempt.
        let mut ds_acked = None;
        let mut ds_dropped = None;
        if let Some(pos) = ctx.queue.iter().position(|j| {
            matches!(
                j.kind,
                JobKind::Data {
                    confirmed: true,
                    ..
                }
            ) && j.attempts > 0
        }) {
            let job = &ctx.queue[pos];
            let JobKind::Data { message, .. } = job.kind else {
                unreachable!()
            };
            if frame.ack {
                ctx.queue.remove(pos);
                ds_acked = Some(message);
            } else if job.remaining_attempts == 0 {
                ctx.queue.remove(pos);
                ds_dropped = Some(message);
            }
        }
        if frame.confirmed {
            ctx.queue.retain(|j| !matches!(j.kind, JobKind::Ack { .. }));
            ctx.queue.push_front(DownlinkJob {
                kind: JobKind::Ack {
                    frame_counter: frame.frame_counter,
                },
                remaining_attempts: 1,
                attempts: 0,
                created: heard.time,
            });
        }
        UpstreamResult {
            kind,
            timers: Some((uplink_end + RW1_DELAY, uplink_end + RW2_DELAY)),
            ds_acked,
            ds_dropped,
        }
    }

    /// Queues application data for a device; it can only go out in the
    /// device's next receive windows.
    pub fn enqueue_downstream(
        &mut self,
        device: usize,
        params: LoRaTxParams,
        message: MessageId,
        payload_bytes: usize,
        confirmed: bool,
        now: Time,
    ) {
        let ctx = self.context(device, params);
        ctx.queue.push_back(DownlinkJob {
            kind: JobKind::Data {
                message,
                payload_bytes,
                confirmed,
            },
            remaining_attempts: if confirmed { DEFAULT_TRANSMISSIONS } else { 1 },
            attempts: 0,
            created: now,
        });
    }

    /// Pending confirmed downlink acknowledged by the device, if any.
    pub fn on_downlink_ack(&mut self, device: usize) -> Option<MessageId> {
        let ctx = self.devices.get_mut(&device)?;
        let pos = ctx.queue.iter().position(|j| {
            matches!(
                j.kind,
                JobKind::Data {
                    confirmed: true,
                    ..
                }
            ) && j.attempts > 0
        })?;
        match ctx.queue.remove(pos)?.kind {
            JobKind::Data { message, .. } => Some(message),
            JobKind::Ack { .. } => None,
        }
    }

    /// Serves a receive window: picks the queue head and the first gateway,
    /// in order of the last uplink, that can transmit right now.
    pub fn on_rw_timer(
        &mut self,
        device: usize,
        window: ReceiveWindow,
        mut can_send: impl FnMut(usize, &LoRaTxParams) -> Result<SendCheck>,
    ) -> Result<RwAction> {
        let tx_power = self.gateway_tx_power_dbm;
        let Some(ctx) = self.devices.get_mut(&device) else {
            return Ok(RwAction::Nothing);
        };
        let Some(pair) = ctx.rw else {
            return Ok(RwAction::Nothing);
        };
        if pair.served || ctx.queue.is_empty() {
            return Ok(RwAction::Nothing);
        }
        let params = match window {
            ReceiveWindow::Rw1 => ctx.last_params,
            ReceiveWindow::Rw2 => LoRaTxParams::rw2(),
        }
        .with_power(tx_power);
        let mut chosen = None;
        for g in &ctx.gateways {
            if can_send(g.gateway, &params)? == SendCheck::Sent {
                chosen = Some(g.gateway);
                break;
            }
        }
        let Some(gateway) = chosen else {
            return Ok(match window {
                ReceiveWindow::Rw1 => RwAction::Deferred,
                ReceiveWindow::Rw2 => {
                    self.counters.missed_rws += 1;
                    ctx.rw = None;
                    let dropped_ack =
                        matches!(ctx.queue.front().map(|j| j.kind), Some(JobKind::Ack { .. }));
                    if dropped_ack {
                        ctx.queue.pop_front();
                    }
                    RwAction::Missed { dropped_ack }
                }
            });
        };
        ctx.rw = Some(RwPair {
            served: true,
            ..pair
        });
        // A pending acknowledgment rides on queued data when there is any.
        let acked_fcnt = match ctx.queue.front().map(|j| j.kind) {
            Some(JobKind::Ack { frame_counter }) => Some(frame_counter),
            _ => None,
        };
        let ack = acked_fcnt.is_some();
        if ack {
            ctx.queue.pop_front();
            match window {
                ReceiveWindow::Rw1 => self.counters.ack_rw1 += 1,
                ReceiveWindow::Rw2 => self.counters.ack_rw2 += 1,
            }
        }
        let counter = ctx.downlink_counter;
        ctx.downlink_counter = ctx.downlink_counter.wrapping_add(1);
        let data = ctx
            .queue
            .iter()
            .position(|j| matches!(j.kind, JobKind::Data { .. }));
        let (kind, frame) = match data {
            Some(pos) => {
                let job = &mut ctx.queue[pos];
                job.attempts += 1;
                job.remaining_attempts = job.remaining_attempts.saturating_sub(1);
                let kind = job.kind;
                let JobKind::Data {
                    message,
                    payload_bytes,
                    confirmed,
                } = kind
                else {
                    unreachable!()
                };
                if !confirmed {
                    ctx.queue.remove(pos);
                }
                let frame = Frame {
                    device,
                    frame_counter: counter,
                    message: Some(message),
                    payload_bytes,
                    confirmed,
                    ack,
                    downlink: true,
                };
                (kind, frame)
            }
            None => {
                let frame = Frame {
                    device,
                    frame_counter: counter,
                    message: None,
                    payload_bytes: 0,
                    confirmed: false,
                    ack: true,
                    downlink: true,
                };
                let frame_counter = acked_fcnt.expect("queue held only an ack");
                (JobKind::Ack { frame_counter }, frame)
            }
        };
        Ok(RwAction::Send {
            gateway,
            frame,
            params,
            job: kind,
        })
    }
}
