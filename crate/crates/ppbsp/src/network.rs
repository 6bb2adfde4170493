//! In-process message passing with byte-accurate accounting.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;

use ppbsp_core::market::{SupplierId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Meter(UserId),
    Platform,
    GridOp,
    Supplier(SupplierId),
    Regulator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Meter(u) => write!(f, "SM({u})"),
            Role::Platform => f.write_str("TrPlat"),
            Role::GridOp => f.write_str("GridOp"),
            Role::Supplier(s) => write!(f, "{s}"),
            Role::Regulator => f.write_str("Regulator"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Payload,
    EncAggregates,
    Ack,
    PlainAggregates,
    SupplierBalance,
    FinalBills,
    ResidueReport,
    AuditRequest,
    AuditBackup,
    AuditResidues,
    AuditFindings,
}

/// A directed link between entity classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Segment {
    SmToTrPlat,
    TrPlatToGridOp,
    GridOpToTrPlat,
    TrPlatToSup,
    /// GridOp's acknowledgement, kept apart from the table rows.
    GridOpAck,
    SupToReg,
    RegToTrPlat,
    RegToGridOp,
    GridOpToReg,
}

impl Segment {
    /// The four links of the communication cost table.
    pub const TABLE: [Segment; 4] =
        [Segment::SmToTrPlat, Segment::TrPlatToGridOp, Segment::GridOpToTrPlat, Segment::TrPlatToSup];

    pub fn name(self) -> &'static str {
        match self {
            Segment::SmToTrPlat => "SM-to-TrPlat",
            Segment::TrPlatToGridOp => "TrPlat-to-GridOp",
            Segment::GridOpToTrPlat => "GridOp-to-TrPlat",
            Segment::TrPlatToSup => "TrPlat-to-Sup",
            Segment::GridOpAck => "GridOp-ack",
            Segment::SupToReg => "Sup-to-Reg",
            Segment::RegToTrPlat => "Reg-to-TrPlat",
            Segment::RegToGridOp => "Reg-to-GridOp",
            Segment::GridOpToReg => "GridOp-to-Reg",
        }
    }

    pub fn in_table(self) -> bool {
        Self::TABLE.contains(&self)
    }

    pub fn of(from: Role, to: Role, kind: Kind) -> Option<Segment> {
        use Role::*;
        Some(match (from, to) {
            (Meter(_), Platform) => Segment::SmToTrPlat,
            (Platform, GridOp) => Segment::TrPlatToGridOp,
            (GridOp, Platform) if kind == Kind::Ack => Segment::GridOpAck,
            (GridOp, Platform) => Segment::GridOpToTrPlat,
            (Platform, Supplier(_)) => Segment::TrPlatToSup,
            (Supplier(_), Regulator) => Segment::SupToReg,
            (Regulator, Platform) => Segment::RegToTrPlat,
            (Regulator, GridOp) => Segment::RegToGridOp,
            (GridOp, Regulator) => Segment::GridOpToReg,
            _ => return None,
        })
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub from: Role,
    pub to: Role,
    pub kind: Kind,
    /// Trading period index; `None` during the billing period.
    pub slot: Option<u32>,
    pub bytes: Vec<u8>,
    /// Size under the cost table's accounting: ciphertext bodies, 8-bit
    /// flags and 64-bit floats, without headers or length prefixes.
    pub table_bits: u64,
}

/// Per-segment totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub messages: u64,
    pub table_bits: u64,
    pub wire_bytes: u64,
}

impl Traffic {
    pub fn since(&self, earlier: &Traffic) -> Traffic {
        Traffic {
            messages: self.messages - earlier.messages,
            table_bits: self.table_bits - earlier.table_bits,
            wire_bytes: self.wire_bytes - earlier.wire_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("no route from {from} to {to}")]
    NoRoute { from: Role, to: Role },
    #[error("{at} expected {expected:?}, queue is empty")]
    Empty { at: Role, expected: Kind },
    #[error("{at} expected {expected:?}, got {got:?} from {from}")]
    Unexpected { at: Role, expected: Kind, got: Kind, from: Role },
}

/// FIFO inbox per receiver.
#[derive(Debug, Default)]
pub struct Network {
    inboxes: BTreeMap<Role, VecDeque<Message>>,
    traffic: BTreeMap<Segment, Traffic>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, m: Message) -> Result<(), NetError> {
        let seg = Segment::of(m.from, m.to, m.kind).ok_or(NetError::NoRoute { from: m.from, to: m.to })?;
        let t = self.traffic.entry(seg).or_default();
        t.messages += 1;
        t.table_bits += m.table_bits;
        t.wire_bytes += m.bytes.len() as u64;
        self.inboxes.entry(m.to).or_default().push_back(m);
        Ok(())
    }

    /// Pop the head of `at`'s inbox, which must be of `kind`.
    pub fn recv(&mut self, at: Role, kind: Kind) -> Result<Message, NetError> {
        let q = self.inboxes.entry(at).or_default();
        match q.front() {
            None => Err(NetError::Empty { at, expected: kind }),
            Some(m) if m.kind != kind => Err(NetError::Unexpected { at, expected: kind, got: m.kind, from: m.from }),
            Some(_) => Ok(q.pop_front().expect("non-empty")),
        }
    }

    /// Drain every queued message of `kind` at the head of `at`'s inbox.
    pub fn recv_all(&mut self, at: Role, kind: Kind) -> Vec<Message> {
        let q = self.inboxes.entry(at).or_default();
        let mut out = Vec::new();
        while q.front().is_some_and(|m| m.kind == kind) {
            out.push(q.pop_front().expect("non-empty"));
        }
        out
    }

    pub fn pending(&self, at: Role) -> usize {
        self.inboxes.get(&at).map_or(0, VecDeque::len)
    }

    pub fn pending_kind(&self, at: Role, kind: Kind) -> usize {
        self.inboxes.get(&at).map_or(0, |q| q.iter().filter(|m| m.kind == kind).count())
    }

    pub fn is_idle(&self) -> bool {
        self.inboxes.values().all(VecDeque::is_empty)
    }

    pub fn traffic(&self) -> &BTreeMap<Segment, Traffic> {
        &self.traffic
    }
}
