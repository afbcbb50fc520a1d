use std::fmt;

use serde::Serialize;

use crate::engine::Time;
use crate::mac::MessageId;
use crate::{Error, Result};

/// Why a message or transmission did not make it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    /// The receiver was already locked onto another signal with the same
    /// parameters.
    Collision,
    /// Locked, but the SINR over the reception was too poor.
    Interference,
    BelowCutoff,
    /// The gateway started transmitting during the reception.
    Aborted,
    /// Evicted from a full transmit queue.
    QueueExpired,
    /// The receiver was not in receive mode.
    NotListening,
    /// All transmissions of a confirmed message went unacknowledged.
    NoAck,
}

impl DropCause {
    pub const ALL: [DropCause; 7] = [
        DropCause::Collision,
        DropCause::Interference,
        DropCause::BelowCutoff,
        DropCause::Aborted,
        DropCause::QueueExpired,
        DropCause::NotListening,
        DropCause::NoAck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::Collision => "collision",
            DropCause::Interference => "interference",
            DropCause::BelowCutoff => "below_cutoff",
            DropCause::Aborted => "aborted",
            DropCause::QueueExpired => "queue_expired",
            DropCause::NotListening => "not_listening",
            DropCause::NoAck => "no_ack",
        }
    }

    /// When several receivers fail for different reasons, the most severe
    /// one is reported.
    pub fn severity(self) -> u8 {
        match self {
            DropCause::Interference => 5,
            DropCause::Aborted => 4,
            DropCause::Collision => 3,
            DropCause::NotListening => 2,
            DropCause::BelowCutoff => 1,
            DropCause::QueueExpired | DropCause::NoAck => 0,
        }
    }

    fn index(self) -> usize {
        DropCause::ALL
            .iter()
            .position(|&c| c == self)
            .expect("listed")
    }
}

impl fmt::Display for DropCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficClass {
    UpUnconfirmed,
    UpConfirmed,
    DownUnconfirmed,
    DownConfirmed,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 4] = [
        TrafficClass::UpUnconfirmed,
        TrafficClass::UpConfirmed,
        TrafficClass::DownUnconfirmed,
        TrafficClass::DownConfirmed,
    ];

    pub fn is_uplink(self) -> bool {
        matches!(
            self,
            TrafficClass::UpUnconfirmed | TrafficClass::UpConfirmed
        )
    }

    pub fn is_downlink(self) -> bool {
        !self.is_uplink()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::UpUnconfirmed => "us_unconfirmed",
            TrafficClass::UpConfirmed => "us_confirmed",
            TrafficClass::DownUnconfirmed => "ds_unconfirmed",
            TrafficClass::DownConfirmed => "ds_confirmed",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Message fates for one traffic class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCounts {
    pub generated: u64,
    pub delivered: u64,
    /// Still queued or in flight when the run ended.
    pub queued: u64,
    drops: [u64; 7],
}

impl TrafficCounts {
    pub fn add_drop(&mut self, cause: DropCause) {
        self.drops[cause.index()] += 1;
    }

    pub fn dropped(&self, cause: DropCause) -> u64 {
        self.drops[cause.index()]
    }

    pub fn dropped_total(&self) -> u64 {
        self.drops.iter().sum()
    }

    /// Delivered over generated; `None` when nothing was generated.
    pub fn pdr(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.delivered as f64 / self.generated as f64)
    }

    fn merge(&mut self, other: &TrafficCounts) {
        self.generated += other.generated;
        self.delivered += other.delivered;
        self.queued += other.queued;
        for (a, b) in self.drops.iter_mut().zip(other.drops) {
            *a += b;
        }
    }
}

/// Counters collected over one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLedger {
    classes: [TrafficCounts; 4],
    pub ack_rw1: u64,
    pub ack_rw2: u64,
    pub missed_rws: u64,
    pub us_transmissions: u64,
    /// Confirmed uplink messages that were acknowledged or given up.
    pub confirmed_finished: u64,
    pub confirmed_transmissions: u64,
    /// Undelivered uplink messages by the sender's SF, SF7 first.
    pub undelivered_by_sf: [u64; 6],
    pub devices_by_sf: [u64; 6],
}

impl MetricsLedger {
    pub fn class(&self, class: TrafficClass) -> &TrafficCounts {
        &self.classes[class.index()]
    }

    pub fn class_mut(&mut self, class: TrafficClass) -> &mut TrafficCounts {
        &mut self.classes[class.index()]
    }

    pub fn pdr(&self, class: TrafficClass) -> Option<f64> {
        self.class(class).pdr()
    }

    /// Uplink counts with both confirmation modes combined.
    pub fn uplink(&self) -> TrafficCounts {
        let mut c = *self.class(TrafficClass::UpUnconfirmed);
        c.merge(self.class(TrafficClass::UpConfirmed));
        c
    }

    pub fn downlink(&self) -> TrafficCounts {
        let mut c = *self.class(TrafficClass::DownUnconfirmed);
        c.merge(self.class(TrafficClass::DownConfirmed));
        c
    }

    /// Mean number of transmissions per finished confirmed uplink message.
    pub fn transmissions_per_confirmed(&self) -> Option<f64> {
        (self.confirmed_finished > 0)
            .then(|| self.confirmed_transmissions as f64 / self.confirmed_finished as f64)
    }

    /// Share of undelivered uplink messages sent on each SF, in percent.
    pub fn undelivered_share_by_sf(&self) -> [f64; 6] {
        let total: u64 = self.undelivered_by_sf.iter().sum();
        let mut out = [0.0; 6];
        if total > 0 {
            for (o, &n) in out.iter_mut().zip(&self.undelivered_by_sf) {
                *o = 100.0 * n as f64 / total as f64;
            }
        }
        out
    }

    /// Every generated message is delivered, dropped for exactly one
    /// reason, or still queued.
    pub fn check_conservation(&self) -> Result<()> {
        for class in TrafficClass::ALL {
            let c = self.class(class);
            let accounted = c.delivered + c.dropped_total() + c.queued;
            if accounted != c.generated {
                return Err(Error::InvariantViolation(format!(
                    "{}: generated {} but delivered + dropped + queued = {}",
                    class.as_str(),
                    c.generated,
                    accounted
                )));
            }
        }
        Ok(())
    }
}

/// One radio transmission as seen by its intended receiver(s).
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTrace {
    pub time: Time,
    /// The end device sending or addressed.
    pub node: usize,
    pub direction: &'static str,
    /// `unconfirmed`, `confirmed` or `ack`.
    pub kind: &'static str,
    pub sf: u8,
    pub bytes: usize,
    pub message: Option<MessageId>,
    pub delivered: bool,
    pub drop_cause: Option<DropCause>,
    /// Receiving gateway for uplinks, sending gateway for downlinks.
    pub gateway: Option<usize>,
}
