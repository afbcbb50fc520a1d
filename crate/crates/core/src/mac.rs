//! Class-A end-device MAC, gateway MAC and radio duty-cycle accounting.
//!
//! The MAC objects are plain state machines: they decide what happens next
//! and report it to the caller, which owns the clock and the radios.

use std::collections::VecDeque;
use std::fmt;

use crate::engine::Time;
use crate::linkmodel::{LoRaTxParams, MIN_PHY_PAYLOAD_BYTES, PREAMBLE_SYMBOLS};
use crate::{Error, Result};

/// Header, frame header and MIC bytes added to every application payload.
pub const FRAME_OVERHEAD_BYTES: usize = MIN_PHY_PAYLOAD_BYTES;
/// An acknowledgment without payload is a minimum-size frame.
pub const ACK_FRAME_BYTES: usize = MIN_PHY_PAYLOAD_BYTES;
/// Transmissions allowed for a confirmed message.
pub const DEFAULT_TRANSMISSIONS: u32 = 4;
/// Receive windows open this long after the end of an uplink.
pub const RW1_DELAY: Time = 1.0;
pub const RW2_DELAY: Time = 2.0;
/// A window closes unless a preamble is being received this many symbols
/// after it opened.
pub const PREAMBLE_CHECK_SYMBOLS: f64 = PREAMBLE_SYMBOLS + 4.25;

/// A regulatory sub-band with its duty-cycle limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubBand {
    pub name: &'static str,
    pub low_hz: u32,
    pub high_hz: u32,
    pub duty_cycle: f64,
}

/// Sub-bands of the 868 MHz plan used by the simulated network.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    bands: Vec<SubBand>,
}

impl Default for BandPlan {
    fn default() -> Self {
        Self {
            bands: vec![
                SubBand {
                    name: "g1",
                    low_hz: 868_000_000,
                    high_hz: 868_600_000,
                    duty_cycle: 0.01,
                },
                SubBand {
                    name: "g3",
                    low_hz: 869_400_000,
                    high_hz: 869_650_000,
                    duty_cycle: 0.10,
                },
            ],
        }
    }
}

impl BandPlan {
    pub fn bands(&self) -> &[SubBand] {
        &self.bands
    }

    /// Index of the sub-band containing `channel_hz`.
    pub fn sub_band(&self, channel_hz: u32) -> Result<usize> {
        self.bands
            .iter()
            .position(|b| b.low_hz <= channel_hz && channel_hz < b.high_hz)
            .ok_or(Error::UnknownSubBand(channel_hz))
    }

    pub fn duty_cycle(&self, sub_band: usize) -> f64 {
        self.bands[sub_band].duty_cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RdcDecision {
    Allowed,
    BlockedUntil(Time),
}

/// Per-node, per-sub-band transmit budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DutyCycleLedger {
    limits: Vec<f64>,
    earliest_next: Vec<Time>,
    airtime: Vec<f64>,
}

impl DutyCycleLedger {
    pub fn new(plan: &BandPlan) -> Self {
        let n = plan.bands().len();
        Self {
            limits: plan.bands().iter().map(|b| b.duty_cycle).collect(),
            earliest_next: vec![0.0; n],
            airtime: vec![0.0; n],
        }
    }

    pub fn check(&self, sub_band: usize, now: Time) -> RdcDecision {
        let t = self.earliest_next[sub_band];
        if now >= t {
            RdcDecision::Allowed
        } else {
            RdcDecision::BlockedUntil(t)
        }
    }

    /// Books a transmission of `toa` seconds starting at `start`. The band
    /// stays closed for `toa * (1/limit - 1)` after the transmission ends.
    pub fn register(&mut self, sub_band: usize, start: Time, toa: f64) {
        let off = toa * (1.0 / self.limits[sub_band] - 1.0);
        self.earliest_next[sub_band] = start + toa + off;
        self.airtime[sub_band] += toa;
    }

    /// Checks and, when allowed, books the transmission.
    pub fn check_and_register(&mut self, sub_band: usize, now: Time, toa: f64) -> RdcDecision {
        let d = self.check(sub_band, now);
        if d == RdcDecision::Allowed {
            self.register(sub_band, now, toa);
        }
        d
    }

    pub fn earliest_next(&self, sub_band: usize) -> Time {
        self.earliest_next[sub_band]
    }

    /// Total airtime booked in `sub_band`.
    pub fn airtime(&self, sub_band: usize) -> f64 {
        self.airtime[sub_band]
    }
}

/// Identifier of an application message, unique within a run.
pub type MessageId = u64;

/// One queued uplink message.
#[derive(Debug, Clone, PartialEq)]
pub struct TxQueueEntry {
    pub message: MessageId,
    pub payload_bytes: usize,
    pub confirmed: bool,
    pub remaining_transmissions: u32,
    pub transmissions: u32,
    pub frame_counter: u32,
}

impl TxQueueEntry {
    pub fn frame_bytes(&self) -> usize {
        self.payload_bytes + FRAME_OVERHEAD_BYTES
    }
}

/// A frame on the air, as seen by the MAC layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub device: usize,
    pub frame_counter: u32,
    pub message: Option<MessageId>,
    pub payload_bytes: usize,
    pub confirmed: bool,
    /// Acknowledges the peer's last confirmed frame.
    pub ack: bool,
    pub downlink: bool,
}

impl Frame {
    pub fn phy_payload_bytes(&self) -> usize {
        if self.payload_bytes == 0 {
            ACK_FRAME_BYTES
        } else {
            self.payload_bytes + FRAME_OVERHEAD_BYTES
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdMacState {
    Idle,
    Tx,
    Wrw1,
    Rw1,
    Wrw2,
    Rw2,
    AckTimeout,
}

impl fmt::Display for EdMacState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EdMacState::Idle => "IDLE",
            EdMacState::Tx => "TX",
            EdMacState::Wrw1 => "WRW1",
            EdMacState::Rw1 => "RW1",
            EdMacState::Wrw2 => "WRW2",
            EdMacState::Rw2 => "RW2",
            EdMacState::AckTimeout => "ACK_TO",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiveWindow {
    Rw1,
    Rw2,
}

/// Outcome of asking the end-device MAC to transmit.
#[derive(Debug, Clone, PartialEq)]
pub enum TxDecision {
    Send(Frame),
    BlockedUntil(Time),
    /// Busy with another exchange or nothing queued.
    Nothing,
}

/// What follows a receive window that closed without a frame for us.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AfterWindow {
    /// Wait for RW2, which opens at the given time.
    OpenRw2At(Time),
    AckTimeout,
    Idle,
}

/// Effect of a downlink frame addressed to the device.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkEffect {
    /// Confirmed uplink acknowledged by this frame.
    pub acked: Option<TxQueueEntry>,
    pub next: AfterWindow,
}

/// Class-A end-device MAC.
#[derive(Debug, Clone)]
pub struct EndDeviceMac {
    device: usize,
    state: EdMacState,
    uplink: LoRaTxParams,
    rw2: LoRaTxParams,
    queue: VecDeque<TxQueueEntry>,
    max_queue: usize,
    awaiting_ack: Option<TxQueueEntry>,
    ack_pending: bool,
    frame_counter: u32,
    last_tx_end: Time,
    ledger: DutyCycleLedger,
    plan: BandPlan,
}

impl EndDeviceMac {
    pub fn new(device: usize, uplink: LoRaTxParams, plan: BandPlan, max_queue: usize) -> Self {
        Self {
            device,
            state: EdMacState::Idle,
            uplink,
            rw2: LoRaTxParams::rw2(),
            queue: VecDeque::new(),
            max_queue: max_queue.max(1),
            awaiting_ack: None,
            ack_pending: false,
            frame_counter: 0,
            last_tx_end: 0.0,
            ledger: DutyCycleLedger::new(&plan),
            plan,
        }
    }

    pub fn state(&self) -> EdMacState {
        self.state
    }

    pub fn uplink_params(&self) -> &LoRaTxParams {
        &self.uplink
    }

    pub fn ledger(&self) -> &DutyCycleLedger {
        &self.ledger
    }

    pub fn queue(&self) -> &VecDeque<TxQueueEntry> {
        &self.queue
    }

    pub fn awaiting_ack(&self) -> Option<&TxQueueEntry> {
        self.awaiting_ack.as_ref()
    }

    pub fn last_tx_end(&self) -> Time {
        self.last_tx_end
    }

    /// Queues a new message. Returns the oldest queued message if the queue
    /// overflowed and it had to be discarded.
    pub fn enqueue(
        &mut self,
        message: MessageId,
        payload_bytes: usize,
        confirmed: bool,
    ) -> Option<TxQueueEntry> {
        let entry = TxQueueEntry {
            message,
            payload_bytes,
            confirmed,
            remaining_transmissions: if confirmed { DEFAULT_TRANSMISSIONS } else { 1 },
            transmissions: 0,
            frame_counter: self.frame_counter,
        };
        self.frame_counter = self.frame_counter.wrapping_add(1);
        self.queue.push_back(entry);
        if self.queue.len() > self.max_queue {
            self.queue.pop_front()
        } else {
            None
        }
    }

    pub fn window_params(&self, window: ReceiveWindow) -> LoRaTxParams {
        match window {
            ReceiveWindow::Rw1 => self.uplink,
            ReceiveWindow::Rw2 => self.rw2,
        }
    }

    /// Preamble check instant relative to the window opening.
    pub fn preamble_check_delay(&self, window: ReceiveWindow) -> Time {
        PREAMBLE_CHECK_SYMBOLS * self.window_params(window).symbol_duration()
    }

    /// Starts the next transmission if the MAC is idle, something is queued
    /// and the duty cycle allows it. `toa` maps a PHY payload size to airtime.
    pub fn next_transmission(
        &mut self,
        now: Time,
        toa: impl Fn(usize) -> Result<f64>,
    ) -> Result<TxDecision> {
        if self.state != EdMacState::Idle {
            return Ok(TxDecision::Nothing);
        }
        let Some(head) = self.queue.front() else {
            return Ok(TxDecision::Nothing);
        };
        let band = self.plan.sub_band(self.uplink.channel_hz)?;
        let airtime = toa(head.frame_bytes())?;
        if let RdcDecision::BlockedUntil(t) = self.ledger.check_and_register(band, now, airtime) {
            return Ok(TxDecision::BlockedUntil(t));
        }
        let mut entry = self.queue.pop_front().expect("head exists");
        entry.transmissions += 1;
        entry.remaining_transmissions -= 1;
        let frame = Frame {
            device: self.device,
            frame_counter: entry.frame_counter,
            message: Some(entry.message),
            payload_bytes: entry.payload_bytes,
            confirmed: entry.confirmed,
            ack: std::mem::take(&mut self.ack_pending),
            downlink: false,
        };
        if entry.confirmed {
            self.awaiting_ack = Some(entry);
        }
        self.state = EdMacState::Tx;
        Ok(TxDecision::Send(frame))
    }

    fn expect_state(&self, expected: EdMacState, to: EdMacState) -> Result<()> {
        if self.state != expected {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: to.to_string(),
            });
        }
        Ok(())
    }

    /// The uplink finished at `tx_end`; RW1 opens `RW1_DELAY` later.
    pub fn tx_complete(&mut self, tx_end: Time) -> Result<Time> {
        self.expect_state(EdMacState::Tx, EdMacState::Wrw1)?;
        self.state = EdMacState::Wrw1;
        self.last_tx_end = tx_end;
        Ok(tx_end + RW1_DELAY)
    }

    pub fn open_window(&mut self, window: ReceiveWindow) -> Result<()> {
        match window {
            ReceiveWindow::Rw1 => {
                self.expect_state(EdMacState::Wrw1, EdMacState::Rw1)?;
                self.state = EdMacState::Rw1;
            }
            ReceiveWindow::Rw2 => {
                self.expect_state(EdMacState::Wrw2, EdMacState::Rw2)?;
                self.state = EdMacState::Rw2;
            }
        }
        Ok(())
    }

    fn after_last_window(&mut self) -> AfterWindow {
        if self.awaiting_ack.is_some() {
            self.state = EdMacState::AckTimeout;
            AfterWindow::AckTimeout
        } else {
            self.state = EdMacState::Idle;
            AfterWindow::Idle
        }
    }

    /// A receive window ends without a frame for this device, either at the
    /// preamble check or after a failed or foreign reception.
    pub fn close_window(&mut self, now: Time) -> Result<AfterWindow> {
        match self.state {
            EdMacState::Rw1 => {
                let rw2 = self.last_tx_end + RW2_DELAY;
                if now < rw2 {
                    self.state = EdMacState::Wrw2;
                    Ok(AfterWindow::OpenRw2At(rw2))
                } else {
                    Ok(self.after_last_window())
                }
            }
            EdMacState::Rw2 => Ok(self.after_last_window()),
            _ => Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: "close window".into(),
            }),
        }
    }

    /// Handles a downlink frame addressed to this device, received in an
    /// open window. RW2 is skipped after a successful RW1 reception.
    pub fn downlink_received(&mut self, frame: &Frame) -> Result<DownlinkEffect> {
        if !matches!(self.state, EdMacState::Rw1 | EdMacState::Rw2) {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: "downlink".into(),
            });
        }
        if frame.payload_bytes > 0 && frame.confirmed {
            self.ack_pending = true;
        }
        let acked = if frame.ack {
            self.awaiting_ack.take()
        } else {
            None
        };
        let next = self.after_last_window();
        Ok(DownlinkEffect { acked, next })
    }

    /// The acknowledgment timeout expired. Returns the message if it has
    /// used all its transmissions; otherwise it goes back to the queue head.
    pub fn ack_timeout_end(&mut self) -> Result<Option<TxQueueEntry>> {
        self.expect_state(EdMacState::AckTimeout, EdMacState::Idle)?;
        self.state = EdMacState::Idle;
        let entry = self
            .awaiting_ack
            .take()
            .expect("ACK_TO implies a pending entry");
        if entry.remaining_transmissions == 0 {
            Ok(Some(entry))
        } else {
            self.queue.push_front(entry);
            Ok(None)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GwMacState {
    Idle,
    Tx,
    Unavail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendCheck {
    Sent,
    Busy,
    RdcBlocked,
}

/// Gateway MAC layer: one MAC per PHY, at most one transmitting at a time.
#[derive(Debug, Clone)]
pub struct GatewayMac {
    macs: Vec<GwMacState>,
    ledger: DutyCycleLedger,
    plan: BandPlan,
    tx_until: Time,
}

impl GatewayMac {
    pub fn new(n_macs: usize, plan: BandPlan) -> Self {
        Self {
            macs: vec![GwMacState::Idle; n_macs],
            ledger: DutyCycleLedger::new(&plan),
            plan,
            tx_until: f64::NEG_INFINITY,
        }
    }

    pub fn states(&self) -> &[GwMacState] {
        &self.macs
    }

    pub fn ledger(&self) -> &DutyCycleLedger {
        &self.ledger
    }

    pub fn is_transmitting(&self) -> bool {
        self.macs.iter().any(|m| *m != GwMacState::Idle)
    }

    /// Whether a frame of airtime `toa` could go out on `params` right now.
    pub fn can_send(&self, params: &LoRaTxParams, now: Time) -> Result<SendCheck> {
        if self.is_transmitting() {
            return Ok(SendCheck::Busy);
        }
        let band = self.plan.sub_band(params.channel_hz)?;
        Ok(match self.ledger.check(band, now) {
            RdcDecision::Allowed => SendCheck::Sent,
            RdcDecision::BlockedUntil(_) => SendCheck::RdcBlocked,
        })
    }

    /// Starts a transmission on MAC `mac`; siblings become unavailable.
    pub fn send(
        &mut self,
        mac: usize,
        params: &LoRaTxParams,
        now: Time,
        toa: f64,
    ) -> Result<SendCheck> {
        let check = self.can_send(params, now)?;
        if check == SendCheck::Sent {
            let band = self.plan.sub_band(params.channel_hz)?;
            self.ledger.register(band, now, toa);
            for (i, m) in self.macs.iter_mut().enumerate() {
                *m = if i == mac {
                    GwMacState::Tx
                } else {
                    GwMacState::Unavail
                };
            }
            self.tx_until = now + toa;
        }
        Ok(check)
    }

    pub fn tx_complete(&mut self) {
        self.macs.iter_mut().for_each(|m| *m = GwMacState::Idle);
    }

    pub fn tx_until(&self) -> Time {
        self.tx_until
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkmodel::{time_on_air, SpreadingFactor, RW2_CHANNEL_HZ, UPLINK_CHANNEL_HZ};

    fn device(sf: SpreadingFactor) -> EndDeviceMac {
        EndDeviceMac::new(0, LoRaTxParams::uplink(sf), BandPlan::default(), 8)
    }

    fn toa_fn(params: LoRaTxParams) -> impl Fn(usize) -> Result<f64> {
        move |bytes| time_on_air(&params, bytes)
    }

    #[test]
    fn band_plan_lookup() {
        let plan = BandPlan::default();
        let g1 = plan.sub_band(UPLINK_CHANNEL_HZ).unwrap();
        let g3 = plan.sub_band(RW2_CHANNEL_HZ).unwrap();
        assert_eq!(plan.duty_cycle(g1), 0.01);
        assert_eq!(plan.duty_cycle(g3), 0.10);
        assert!(plan.sub_band(915_000_000).is_err());
    }

    #[test]
    fn duty_cycle_off_times() {
        let plan = BandPlan::default();
        let toa = time_on_air(&LoRaTxParams::uplink(SpreadingFactor::SF12), 21).unwrap();
        let mut ledger = DutyCycleLedger::new(&plan);
        assert_eq!(
            ledger.check_and_register(0, 10.0, toa),
            RdcDecision::Allowed
        );
        let off = ledger.earliest_next(0) - (10.0 + toa);
        assert!((off - 146.792).abs() < 1e-3, "{off}");
        assert_eq!(
            ledger.check(0, 100.0),
            RdcDecision::BlockedUntil(ledger.earliest_next(0))
        );
        ledger.register(1, 0.0, toa);
        assert!((ledger.earliest_next(1) - toa - 13.3448).abs() < 1e-3);
        assert_eq!(ledger.airtime(0), toa);
    }

    #[test]
    fn frame_sizes() {
        let mut mac = device(SpreadingFactor::SF7);
        mac.enqueue(1, 8, false);
        assert_eq!(mac.queue()[0].frame_bytes(), 21);
        let ack = Frame {
            device: 0,
            frame_counter: 0,
            message: None,
            payload_bytes: 0,
            confirmed: false,
            ack: true,
            downlink: true,
        };
        assert_eq!(ack.phy_payload_bytes(), 13);
    }

    #[test]
    fn unconfirmed_exchange() {
        let mut mac = device(SpreadingFactor::SF7);
        assert!(mac.enqueue(1, 8, false).is_none());
        let toa = toa_fn(*mac.uplink_params());
        let TxDecision::Send(frame) = mac.next_transmission(0.0, &toa).unwrap() else {
            panic!("expected a transmission");
        };
        assert_eq!(frame.message, Some(1));
        assert_eq!(mac.state(), EdMacState::Tx);
        // Queued during TX: deferred until the windows are over.
        mac.enqueue(2, 8, false);
        assert_eq!(
            mac.next_transmission(0.01, &toa).unwrap(),
            TxDecision::Nothing
        );
        let rw1 = mac.tx_complete(0.056576).unwrap();
        assert!((rw1 - 1.056576).abs() < 1e-12);
        assert_eq!(mac.state(), EdMacState::Wrw1);
        mac.open_window(ReceiveWindow::Rw1).unwrap();
        assert!((mac.preamble_check_delay(ReceiveWindow::Rw1) - 0.012544).abs() < 1e-9);
        assert_eq!(
            mac.close_window(rw1 + 0.0125).unwrap(),
            AfterWindow::OpenRw2At(2.056576)
        );
        assert_eq!(mac.state(), EdMacState::Wrw2);
        mac.open_window(ReceiveWindow::Rw2).unwrap();
        assert!((mac.preamble_check_delay(ReceiveWindow::Rw2) - 0.401408).abs() < 1e-9);
        assert_eq!(mac.close_window(2.5).unwrap(), AfterWindow::Idle);
        // Duty cycle blocks the second message for 99 airtimes.
        match mac.next_transmission(2.5, &toa).unwrap() {
            TxDecision::BlockedUntil(t) => assert!((t - 100.0 * 0.056576).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn confirmed_retransmissions_then_drop() {
        let mut mac = device(SpreadingFactor::SF7);
        mac.enqueue(7, 8, true);
        assert_eq!(mac.queue()[0].remaining_transmissions, 4);
        let toa = toa_fn(*mac.uplink_params());
        let mut now = 0.0;
        for attempt in 1..=4 {
            let TxDecision::Send(_) = mac.next_transmission(now, &toa).unwrap() else {
                panic!("attempt {attempt} blocked");
            };
            mac.tx_complete(now + 0.06).unwrap();
            mac.open_window(ReceiveWindow::Rw1).unwrap();
            mac.close_window(now + 1.07).unwrap();
            mac.open_window(ReceiveWindow::Rw2).unwrap();
            assert_eq!(
                mac.close_window(now + 2.5).unwrap(),
                AfterWindow::AckTimeout
            );
            let dropped = mac.ack_timeout_end().unwrap();
            if attempt < 4 {
                assert!(dropped.is_none());
                assert_eq!(mac.queue()[0].transmissions, attempt);
            } else {
                assert_eq!(dropped.unwrap().transmissions, 4);
                assert!(mac.queue().is_empty());
            }
            now += 1000.0;
        }
    }

    #[test]
    fn ack_in_rw1_skips_rw2() {
        let mut mac = device(SpreadingFactor::SF9);
        mac.enqueue(3, 8, true);
        let toa = toa_fn(*mac.uplink_params());
        mac.next_transmission(0.0, &toa).unwrap();
        mac.tx_complete(0.2).unwrap();
        mac.open_window(ReceiveWindow::Rw1).unwrap();
        let ack = Frame {
            device: 0,
            frame_counter: 0,
            message: None,
            payload_bytes: 0,
            confirmed: false,
            ack: true,
            downlink: true,
        };
        let effect = mac.downlink_received(&ack).unwrap();
        assert_eq!(effect.acked.unwrap().message, 3);
        assert_eq!(effect.next, AfterWindow::Idle);
        assert_eq!(mac.state(), EdMacState::Idle);
        assert!(mac.open_window(ReceiveWindow::Rw2).is_err());
    }

    #[test]
    fn confirmed_downlink_sets_ack_bit_on_next_uplink() {
        let mut mac = device(SpreadingFactor::SF7);
        mac.enqueue(1, 8, false);
        let toa = toa_fn(*mac.uplink_params());
        mac.next_transmission(0.0, &toa).unwrap();
        mac.tx_complete(0.06).unwrap();
        mac.open_window(ReceiveWindow::Rw1).unwrap();
        let data = Frame {
            device: 0,
            frame_counter: 0,
            message: Some(99),
            payload_bytes: 8,
            confirmed: true,
            ack: false,
            downlink: true,
        };
        mac.downlink_received(&data).unwrap();
        mac.enqueue(2, 8, false);
        let TxDecision::Send(frame) = mac.next_transmission(1000.0, &toa).unwrap() else {
            panic!()
        };
        assert!(frame.ack);
    }

    #[test]
    fn late_rw1_reception_skips_to_after_rw2() {
        let mut mac = device(SpreadingFactor::SF12);
        mac.enqueue(1, 8, false);
        let toa = toa_fn(*mac.uplink_params());
        mac.next_transmission(0.0, &toa).unwrap();
        mac.tx_complete(1.5).unwrap();
        mac.open_window(ReceiveWindow::Rw1).unwrap();
        assert_eq!(mac.close_window(3.6).unwrap(), AfterWindow::Idle);
    }

    #[test]
    fn queue_overflow_discards_oldest() {
        let mut mac = EndDeviceMac::new(
            0,
            LoRaTxParams::uplink(SpreadingFactor::SF7),
            BandPlan::default(),
            2,
        );
        assert!(mac.enqueue(1, 8, false).is_none());
        assert!(mac.enqueue(2, 8, false).is_none());
        assert_eq!(mac.enqueue(3, 8, false).unwrap().message, 1);
    }

    #[test]
    fn gateway_single_transmitter() {
        let mut gw = GatewayMac::new(7, BandPlan::default());
        let rw1 = LoRaTxParams::uplink(SpreadingFactor::SF7);
        let rw2 = LoRaTxParams::rw2();
        assert_eq!(gw.send(0, &rw1, 0.0, 0.05).unwrap(), SendCheck::Sent);
        assert_eq!(gw.states()[0], GwMacState::Tx);
        assert!(gw.states()[1..].iter().all(|s| *s == GwMacState::Unavail));
        assert_eq!(gw.can_send(&rw2, 0.01).unwrap(), SendCheck::Busy);
        gw.tx_complete();
        assert_eq!(gw.can_send(&rw1, 1.0).unwrap(), SendCheck::RdcBlocked);
        assert_eq!(gw.can_send(&rw2, 1.0).unwrap(), SendCheck::Sent);
    }
}
