//! Transceiver state machine, shared medium and chunk-based reception.
//!
//! Every node owns one or more [`Phy`] objects. Transmissions are registered
//! on the [`Medium`] as [`SignalRecord`]s. A locked reception is split into
//! chunks of constant SINR, delimited by the start or end of any other signal
//! on the same channel; the packet survives with the product of the per-chunk
//! success probabilities.

use std::collections::BTreeMap;
use std::fmt;

use crate::engine::Time;
use crate::linkmodel::{time_on_air, ErrorModel, LinkBudget, LoRaTxParams};
use crate::{Error, Result};

/// Index of a node on the medium (end devices and gateways share one space).
pub type NodeId = usize;

/// Identifier of one transmission on the medium.
pub type SignalId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhyState {
    TrxOff,
    Idle,
    RxOn,
    TxOn,
    BusyRx,
    BusyTx,
}

impl fmt::Display for PhyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PhyState::TrxOff => "TRX_OFF",
            PhyState::Idle => "IDLE",
            PhyState::RxOn => "RX_ON",
            PhyState::TxOn => "TX_ON",
            PhyState::BusyRx => "BUSY_RX",
            PhyState::BusyTx => "BUSY_TX",
        };
        f.write_str(s)
    }
}

impl PhyState {
    pub fn can_transition(self, to: PhyState) -> bool {
        use PhyState::*;
        matches!(
            (self, to),
            (TrxOff, RxOn | TxOn | Idle)
                | (RxOn | TxOn | Idle, TrxOff)
                | (RxOn, BusyRx)
                | (BusyRx, RxOn)
                | (TxOn, BusyTx)
                | (BusyTx, TxOn)
                | (BusyRx | BusyTx, TrxOff)
        )
    }
}

/// One transmission in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub id: SignalId,
    pub source: NodeId,
    pub params: LoRaTxParams,
    pub start_time: Time,
    pub end_time: Time,
    pub phy_payload_bytes: usize,
    /// Downlinks use inverted chirps: gateways only lock onto uplinks and end
    /// devices only onto downlinks. Both still interfere with everything on
    /// the channel.
    pub downlink: bool,
}

impl SignalRecord {
    pub fn is_active(&self, t: Time) -> bool {
        self.start_time <= t && t < self.end_time
    }

    pub fn bits(&self) -> f64 {
        8.0 * self.phy_payload_bytes as f64
    }
}

/// Registry of active signals plus the geometry needed for received power.
#[derive(Debug, Clone)]
pub struct Medium {
    budget: LinkBudget,
    positions: Vec<(f64, f64)>,
    active: BTreeMap<SignalId, SignalRecord>,
    next_id: SignalId,
}

impl Medium {
    pub fn new(budget: LinkBudget, positions: Vec<(f64, f64)>) -> Self {
        Self {
            budget,
            positions,
            active: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn budget(&self) -> &LinkBudget {
        &self.budget
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        self.positions[node]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (pa, pb) = (self.positions[a], self.positions[b]);
        (pa.0 - pb.0).hypot(pa.1 - pb.1)
    }

    /// Received power at `receiver` of a signal from `source` at `tx_power_dbm`.
    pub fn rx_power_dbm(&self, source: NodeId, receiver: NodeId, tx_power_dbm: f64) -> f64 {
        self.budget
            .rx_power_dbm(tx_power_dbm, self.distance(source, receiver))
    }

    pub fn signal(&self, id: SignalId) -> Option<&SignalRecord> {
        self.active.get(&id)
    }

    pub fn active_signals(&self) -> impl Iterator<Item = &SignalRecord> {
        self.active.values()
    }

    /// Registers a transmission starting at `start` and returns its record.
    pub fn add_signal(
        &mut self,
        source: NodeId,
        params: LoRaTxParams,
        start: Time,
        phy_payload_bytes: usize,
        downlink: bool,
    ) -> Result<SignalRecord> {
        let toa = time_on_air(&params, phy_payload_bytes)?;
        let record = SignalRecord {
            id: self.next_id,
            source,
            params,
            start_time: start,
            end_time: start + toa,
            phy_payload_bytes,
            downlink,
        };
        self.next_id += 1;
        self.active.insert(record.id, record.clone());
        Ok(record)
    }

    /// Removes a signal whose transmission ended or was cut short.
    pub fn remove_signal(&mut self, id: SignalId) -> Option<SignalRecord> {
        self.active.remove(&id)
    }

    /// Cuts a transmission short at `now`.
    pub fn truncate_signal(&mut self, id: SignalId, now: Time) -> Option<SignalRecord> {
        let mut rec = self.active.remove(&id)?;
        rec.end_time = rec.end_time.min(now);
        Some(rec)
    }

    /// SINR of `target` at `receiver`: all other active signals on the same
    /// channel count as interference whatever their spreading factor.
    pub fn sinr_db(&self, receiver: NodeId, target: &SignalRecord) -> f64 {
        let signal_mw =
            dbm_to_mw(self.rx_power_dbm(target.source, receiver, target.params.tx_power_dbm));
        let interference_mw: f64 = self
            .active
            .values()
            .filter(|s| {
                s.id != target.id
                    && s.params.channel_hz == target.params.channel_hz
                    && s.source != receiver
            })
            .map(|s| dbm_to_mw(self.rx_power_dbm(s.source, receiver, s.params.tx_power_dbm)))
            .sum();
        let noise_mw = dbm_to_mw(self.budget.noise_floor_dbm);
        10.0 * (signal_mw / (noise_mw + interference_mw)).log10()
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Constant-SINR slice of a reception.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionChunk {
    pub t_begin: Time,
    pub t_end: Time,
    pub sinr_db: f64,
    pub n_bits: f64,
}

/// A locked, ongoing reception.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub signal: SignalId,
    pub source: NodeId,
    pub params: LoRaTxParams,
    pub start: Time,
    pub end: Time,
    pub total_bits: f64,
    pub chunks: Vec<ReceptionChunk>,
    open_begin: Time,
    open_sinr_db: f64,
}

impl Reception {
    fn close_chunk(&mut self, now: Time) {
        let t_end = now.min(self.end);
        if t_end > self.open_begin {
            let n_bits = self.total_bits * (t_end - self.open_begin) / (self.end - self.start);
            self.chunks.push(ReceptionChunk {
                t_begin: self.open_begin,
                t_end,
                sinr_db: self.open_sinr_db,
                n_bits,
            });
        }
        self.open_begin = t_end;
    }

    /// Probability that every chunk decodes.
    pub fn success_probability(&self, model: &ErrorModel) -> Result<f64> {
        let mut log_p = 0.0;
        for c in &self.chunks {
            let p = model.chunk_success_probability(
                self.params.sf,
                self.params.cr,
                c.sinr_db,
                c.n_bits,
            )?;
            log_p += p.ln();
        }
        Ok(log_p.exp())
    }
}

/// What a receiver did with a newly arriving signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalDecision {
    Lock,
    IgnoreBelowCutoff,
    /// Already receiving a signal with the same parameters.
    IgnoreBusy,
    /// Not listening: transmitting, switched off, or in the other polarity.
    IgnoreNotListening,
    IgnoreOtherParams,
}

/// Result of a completed reception.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionOutcome {
    pub reception: Reception,
    pub success_probability: f64,
    pub success: bool,
}

/// What the receiver is tuned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxTuning {
    pub params: LoRaTxParams,
    /// `true` for end devices, which listen for downlinks.
    pub downlink: bool,
}

/// One transceiver.
#[derive(Debug, Clone)]
pub struct Phy {
    owner: NodeId,
    state: PhyState,
    tuning: RxTuning,
    reception: Option<Reception>,
    tx_signal: Option<SignalId>,
}

impl Phy {
    pub fn new(owner: NodeId, tuning: RxTuning) -> Self {
        Self {
            owner,
            state: PhyState::TrxOff,
            tuning,
            reception: None,
            tx_signal: None,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn state(&self) -> PhyState {
        self.state
    }

    pub fn tuning(&self) -> &RxTuning {
        &self.tuning
    }

    pub fn reception(&self) -> Option<&Reception> {
        self.reception.as_ref()
    }

    pub fn tx_signal(&self) -> Option<SignalId> {
        self.tx_signal
    }

    pub fn transition(&mut self, to: PhyState) -> Result<()> {
        if !self.state.can_transition(to) {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: to.to_string(),
            });
        }
        self.state = to;
        Ok(())
    }

    /// Moves to an idle state (`RX_ON`, `TX_ON`, `IDLE` or `TRX_OFF`) via
    /// `TRX_OFF`. Busy states must be left through their own operations.
    pub fn switch_to(&mut self, to: PhyState) -> Result<()> {
        if self.state == to {
            return Ok(());
        }
        if matches!(self.state, PhyState::BusyRx | PhyState::BusyTx) {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: to.to_string(),
            });
        }
        if self.state != PhyState::TrxOff {
            self.transition(PhyState::TrxOff)?;
        }
        if to != PhyState::TrxOff {
            self.transition(to)?;
        }
        Ok(())
    }

    /// Retunes the receiver; allowed whenever no reception is in progress.
    pub fn retune(&mut self, tuning: RxTuning) -> Result<()> {
        if self.state == PhyState::BusyRx {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: "retune".into(),
            });
        }
        self.tuning = tuning;
        Ok(())
    }

    /// Starts a transmission; the PHY must be in `TX_ON`.
    pub fn start_tx(
        &mut self,
        medium: &mut Medium,
        params: LoRaTxParams,
        now: Time,
        phy_payload_bytes: usize,
        downlink: bool,
    ) -> Result<SignalRecord> {
        if self.state != PhyState::TxOn {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: PhyState::BusyTx.to_string(),
            });
        }
        let rec = medium.add_signal(self.owner, params, now, phy_payload_bytes, downlink)?;
        self.transition(PhyState::BusyTx)?;
        self.tx_signal = Some(rec.id);
        Ok(rec)
    }

    /// Ends a transmission at its scheduled end; back to `TX_ON`.
    pub fn end_tx(&mut self) -> Result<()> {
        self.transition(PhyState::TxOn)?;
        self.tx_signal = None;
        Ok(())
    }

    /// Cuts the ongoing transmission short; the PHY goes to `TRX_OFF`.
    pub fn cancel_tx(&mut self, medium: &mut Medium, now: Time) -> Result<SignalRecord> {
        if self.state != PhyState::BusyTx {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: PhyState::TrxOff.to_string(),
            });
        }
        let id = self.tx_signal.take().expect("BUSY_TX has a signal");
        self.transition(PhyState::TrxOff)?;
        medium
            .truncate_signal(id, now)
            .ok_or_else(|| Error::InvalidConfig(format!("signal {id} not on the medium")))
    }

    /// Decides whether to lock onto a signal that just started. The signal
    /// must already be registered on the medium.
    pub fn on_signal_arrival(
        &mut self,
        medium: &Medium,
        signal: &SignalRecord,
        now: Time,
        model: &ErrorModel,
    ) -> Result<ArrivalDecision> {
        let same_params = signal.params.channel_hz == self.tuning.params.channel_hz
            && signal.params.sf == self.tuning.params.sf
            && signal.downlink == self.tuning.downlink;
        let decision = match self.state {
            PhyState::RxOn if !same_params => ArrivalDecision::IgnoreOtherParams,
            PhyState::RxOn => {
                let sinr = medium.sinr_db(self.owner, signal);
                if sinr < model.snr_cutoff(signal.params.sf, signal.params.cr)? {
                    ArrivalDecision::IgnoreBelowCutoff
                } else {
                    self.transition(PhyState::BusyRx)?;
                    self.reception = Some(Reception {
                        signal: signal.id,
                        source: signal.source,
                        params: signal.params,
                        start: signal.start_time,
                        end: signal.end_time,
                        total_bits: signal.bits(),
                        chunks: Vec::new(),
                        open_begin: now,
                        open_sinr_db: sinr,
                    });
                    ArrivalDecision::Lock
                }
            }
            PhyState::BusyRx if same_params => ArrivalDecision::IgnoreBusy,
            PhyState::BusyRx => ArrivalDecision::IgnoreOtherParams,
            _ => ArrivalDecision::IgnoreNotListening,
        };
        Ok(decision)
    }

    /// Starts a new chunk because the set of signals on the channel changed.
    /// Call after the medium has been updated.
    pub fn on_interference_change(&mut self, medium: &Medium, now: Time) {
        let Some(rx) = self.reception.as_mut() else {
            return;
        };
        let Some(target) = medium.signal(rx.signal) else {
            return;
        };
        rx.close_chunk(now);
        rx.open_sinr_db = medium.sinr_db(self.owner, target);
    }

    /// Completes the locked reception at its end time. `uniform` is a draw in
    /// `[0, 1)`; the packet survives when it falls below the success
    /// probability. The PHY returns to `RX_ON`.
    pub fn finalize_reception(
        &mut self,
        now: Time,
        model: &ErrorModel,
        uniform: f64,
    ) -> Result<ReceptionOutcome> {
        let mut rx = self
            .reception
            .take()
            .ok_or_else(|| Error::InvalidTransition {
                from: self.state.to_string(),
                to: "finalize".into(),
            })?;
        rx.close_chunk(now);
        self.transition(PhyState::RxOn)?;
        let p = rx.success_probability(model)?;
        Ok(ReceptionOutcome {
            reception: rx,
            success_probability: p,
            success: uniform < p,
        })
    }

    /// Abandons the locked reception; the PHY goes to `TRX_OFF`.
    pub fn cancel_rx(&mut self, now: Time) -> Result<Reception> {
        if self.state != PhyState::BusyRx {
            return Err(Error::InvalidTransition {
                from: self.state.to_string(),
                to: PhyState::TrxOff.to_string(),
            });
        }
        self.transition(PhyState::TrxOff)?;
        let mut rx = self.reception.take().expect("BUSY_RX has a reception");
        rx.close_chunk(now);
        Ok(rx)
    }
}
