//! Operation tallies for the cost model.

use core::sync::atomic::{AtomicU64, Ordering};

/// The expensive primitives tracked per entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Op {
    KeyGen,
    HomoEnc,
    HomoDec,
    BillCalc,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::KeyGen, Op::HomoEnc, Op::HomoDec, Op::BillCalc];

    pub fn name(self) -> &'static str {
        match self {
            Op::KeyGen => "KeyGen",
            Op::HomoEnc => "HomoEnc",
            Op::HomoDec => "HomoDec",
            Op::BillCalc => "BillCalc",
        }
    }
}

/// Monotone, thread-safe counters. Shared by reference between workers.
#[derive(Debug, Default)]
pub struct OpCounts {
    keygen: AtomicU64,
    homo_enc: AtomicU64,
    homo_dec: AtomicU64,
    bill_calc: AtomicU64,
}

/// Plain copy of an [`OpCounts`] at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpSnapshot {
    pub keygen: u64,
    pub homo_enc: u64,
    pub homo_dec: u64,
    pub bill_calc: u64,
}

impl OpCounts {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, op: Op) -> &AtomicU64 {
        match op {
            Op::KeyGen => &self.keygen,
            Op::HomoEnc => &self.homo_enc,
            Op::HomoDec => &self.homo_dec,
            Op::BillCalc => &self.bill_calc,
        }
    }

    pub fn record(&self, op: Op) {
        self.record_n(op, 1);
    }

    pub fn record_n(&self, op: Op, n: u64) {
        self.slot(op).fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self, op: Op) -> u64 {
        self.slot(op).load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> OpSnapshot {
        OpSnapshot {
            keygen: self.get(Op::KeyGen),
            homo_enc: self.get(Op::HomoEnc),
            homo_dec: self.get(Op::HomoDec),
            bill_calc: self.get(Op::BillCalc),
        }
    }
}

impl OpSnapshot {
    pub fn get(&self, op: Op) -> u64 {
        match op {
            Op::KeyGen => self.keygen,
            Op::HomoEnc => self.homo_enc,
            Op::HomoDec => self.homo_dec,
            Op::BillCalc => self.bill_calc,
        }
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &OpSnapshot) -> OpSnapshot {
        OpSnapshot {
            keygen: self.keygen - earlier.keygen,
            homo_enc: self.homo_enc - earlier.homo_enc,
            homo_dec: self.homo_dec - earlier.homo_dec,
            bill_calc: self.bill_calc - earlier.bill_calc,
        }
    }
}
