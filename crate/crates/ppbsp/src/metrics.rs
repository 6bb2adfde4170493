//! Operation and traffic accounting per entity, segment and period, plus
//! the closed-form cost table the counters are checked against.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use ppbsp_core::counters::{Op, OpSnapshot};
use ppbsp_core::market::SupplierId;

use crate::network::{Segment, Traffic};

pub const BOOLEAN_BITS: u64 = 8;
pub const FLOAT_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Entity {
    /// All smart meters together.
    SmartMeters,
    Platform,
    GridOp,
    Supplier(SupplierId),
    Regulator,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::SmartMeters => f.write_str("SM"),
            Entity::Platform => f.write_str("TrPlat"),
            Entity::GridOp => f.write_str("GridOp"),
            Entity::Supplier(s) => write!(f, "{s}"),
            Entity::Regulator => f.write_str("Regulator"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Setup,
    Trading,
    Billing,
}

impl PeriodKind {
    pub fn name(self) -> &'static str {
        match self {
            PeriodKind::Setup => "setup",
            PeriodKind::Trading => "trading",
            PeriodKind::Billing => "billing",
        }
    }
}

/// What happened during one period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodMetrics {
    pub kind: PeriodKind,
    pub slot: Option<u32>,
    pub ops: BTreeMap<Entity, OpSnapshot>,
    pub traffic: BTreeMap<Segment, Traffic>,
}

impl PeriodMetrics {
    pub fn ops(&self, e: Entity) -> OpSnapshot {
        self.ops.get(&e).copied().unwrap_or_default()
    }

    pub fn op(&self, e: Entity, op: Op) -> u64 {
        self.ops(e).get(op)
    }

    pub fn traffic(&self, seg: Segment) -> Traffic {
        self.traffic.get(&seg).copied().unwrap_or_default()
    }

    pub fn table_bits(&self, seg: Segment) -> u64 {
        self.traffic(seg).table_bits
    }
}

/// Every period of one run, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MetricsLedger {
    pub periods: Vec<PeriodMetrics>,
}

impl MetricsLedger {
    pub fn push(&mut self, p: PeriodMetrics) {
        self.periods.push(p);
    }

    pub fn of_kind(&self, kind: PeriodKind) -> impl Iterator<Item = &PeriodMetrics> {
        self.periods.iter().filter(move |p| p.kind == kind)
    }

    pub fn total_op(&self, e: Entity, op: Op) -> u64 {
        self.periods.iter().map(|p| p.op(e, op)).sum()
    }

    pub fn total_table_bits(&self, seg: Segment, kind: PeriodKind) -> u64 {
        self.of_kind(kind).map(|p| p.table_bits(seg)).sum()
    }
}

/// Table size of a meter payload: four ciphertexts and four flags.
pub fn payload_table_bits(supplier_ct_bits: u64, gridop_ct_bits: u64) -> u64 {
    2 * supplier_ct_bits + 2 * gridop_ct_bits + 4 * BOOLEAN_BITS
}

/// The cost tables as closed forms of `N_u`, `N_s` and `|ciphertext|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostTable {
    pub n_users: u64,
    pub n_suppliers: u64,
    pub ciphertext_bits: u64,
}

impl CostTable {
    /// Operations one instance of `e` performs per trading period. For the
    /// meters this is the whole fleet.
    pub fn trading_ops(&self, e: Entity, op: Op) -> u64 {
        match (e, op) {
            (Entity::SmartMeters, Op::HomoEnc) => 4 * self.n_users,
            (Entity::Platform, Op::BillCalc) => 2 * self.n_users,
            (Entity::GridOp, Op::HomoDec) => 4,
            (Entity::Supplier(_), Op::HomoDec) => 1,
            _ => 0,
        }
    }

    /// Operations per billing period; `customers` is `N_{u,s}` for a supplier.
    pub fn billing_ops(&self, e: Entity, op: Op, customers: u64, inspected: bool) -> u64 {
        match (e, op) {
            (Entity::GridOp, Op::HomoDec) if inspected => 2 * self.n_suppliers,
            (Entity::Supplier(_), Op::HomoDec) => customers,
            _ => 0,
        }
    }

    pub fn trading_bits(&self, seg: Segment) -> u64 {
        let ct = self.ciphertext_bits;
        match seg {
            Segment::SmToTrPlat => 4 * self.n_users * (ct + BOOLEAN_BITS),
            Segment::TrPlatToGridOp => 4 * ct,
            Segment::GridOpToTrPlat => 4 * FLOAT_BITS,
            Segment::TrPlatToSup => self.n_suppliers * ct,
            _ => 0,
        }
    }

    pub fn billing_bits(&self, seg: Segment, inspected: bool) -> u64 {
        let ct = self.ciphertext_bits;
        match seg {
            Segment::TrPlatToGridOp if inspected => 2 * self.n_suppliers * ct,
            Segment::TrPlatToSup => self.n_users * ct,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples_at_2048_bits() {
        let t = CostTable { n_users: 10, n_suppliers: 2, ciphertext_bits: 4096 };
        assert_eq!(t.trading_bits(Segment::SmToTrPlat), 10 * 4 * (4096 + 8));
        assert_eq!(t.trading_bits(Segment::GridOpToTrPlat), 256);
        assert_eq!(t.trading_bits(Segment::TrPlatToSup), 2 * 4096);
        assert_eq!(t.billing_bits(Segment::TrPlatToGridOp, false), 0);
        assert_eq!(t.billing_bits(Segment::TrPlatToGridOp, true), 4 * 4096);
        assert_eq!(t.billing_bits(Segment::TrPlatToSup, false), 10 * 4096);
        assert_eq!(payload_table_bits(4096, 4096) * 10, t.trading_bits(Segment::SmToTrPlat));
    }

    #[test]
    fn ops_table() {
        let t = CostTable { n_users: 7, n_suppliers: 3, ciphertext_bits: 512 };
        assert_eq!(t.trading_ops(Entity::Platform, Op::BillCalc), 14);
        assert_eq!(t.trading_ops(Entity::Supplier(SupplierId(1)), Op::HomoDec), 1);
        assert_eq!(t.billing_ops(Entity::GridOp, Op::HomoDec, 0, true), 6);
        assert_eq!(t.billing_ops(Entity::GridOp, Op::HomoDec, 0, false), 0);
        assert_eq!(t.billing_ops(Entity::Supplier(SupplierId(1)), Op::HomoDec, 3, false), 3);
    }
}
