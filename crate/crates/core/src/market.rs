//! Local energy market domain model: users, suppliers, prices and the
//! per-slot ground truth that smart meters observe.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decimal::Fixed;

/// Smart-meter owner `U^x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct UserId(pub u32);

/// Energy supplier `S_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SupplierId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U_{}", self.0)
    }
}

impl fmt::Display for SupplierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S_{}", self.0)
    }
}

impl core::str::FromStr for SupplierId {
    type Err = core::num::ParseIntError;

    /// Accepts `S_2`, `S2` or `2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix("S_")
            .or_else(|| s.strip_prefix('S'))
            .unwrap_or(s);
        digits.parse().map(SupplierId)
    }
}

/// Direction of a user's auction bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BidType {
    /// Consumer, `bid_type = +1`.
    Buy,
    /// Prosumer, `bid_type = -1`.
    Sell,
}

impl BidType {
    pub fn sign(self) -> i8 {
        match self {
            BidType::Buy => 1,
            BidType::Sell => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(BidType::Buy),
            -1 => Some(BidType::Sell),
            _ => None,
        }
    }
}

/// Feed-in tariff, P2P trading price and retail price, in currency/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriceSchedule {
    pub fit: Fixed,
    pub tp: Fixed,
    pub rp: Fixed,
}

impl PriceSchedule {
    /// Checked constructor enforcing `0 < fit ≤ tp ≤ rp`.
    pub fn new(fit: Fixed, tp: Fixed, rp: Fixed) -> Result<Self, Violation> {
        let s = PriceSchedule { fit, tp, rp };
        if s.is_ordered() {
            Ok(s)
        } else {
            Err(Violation::PriceOrdering { fit, tp, rp })
        }
    }

    pub fn is_ordered(&self) -> bool {
        Fixed::ZERO < self.fit && self.fit <= self.tp && self.tp <= self.rp
    }
}

impl Default for PriceSchedule {
    /// 0.05 / 0.10 / 0.20.
    fn default() -> Self {
        PriceSchedule {
            fit: Fixed::from_micros(50_000),
            tp: Fixed::from_micros(100_000),
            rp: Fixed::from_micros(200_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserRecord {
    pub id: UserId,
    pub supplier: SupplierId,
    pub p2p: bool,
}

/// What the meter of one user sees in one trading slot.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlotTruth {
    pub user: UserId,
    /// `U^x_P2P`, kWh committed at the auction. Zero for non-P2P users.
    pub committed: Fixed,
    /// `U^x_val`, signed kWh; positive is net import.
    pub reading: Fixed,
    pub bid_accepted: bool,
    pub bid_type: BidType,
}

impl SlotTruth {
    /// `InDev_x = bid_type · U^x_val − U^x_P2P`.
    pub fn deviation(&self) -> Fixed {
        crate::meter::individual_deviation(self.bid_type, self.reading, self.committed)
    }
}

/// One billing period of a market.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub users: Vec<UserRecord>,
    pub suppliers: Vec<SupplierId>,
    pub schedule: PriceSchedule,
    pub slots: Vec<Vec<SlotTruth>>,
    pub slots_per_billing_period: u32,
}

/// A broken scenario invariant. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    PriceOrdering { fit: Fixed, tp: Fixed, rp: Fixed },
    NoUsers,
    NoSuppliers,
    DuplicateUser { user: UserId },
    DuplicateSupplier { supplier: SupplierId },
    UnknownSupplier { user: UserId, supplier: SupplierId },
    SlotCountMismatch { declared: u32, actual: usize },
    MissingUser { slot: usize, user: UserId },
    DuplicateTruth { slot: usize, user: UserId },
    UnknownUser { slot: usize, user: UserId },
    NegativeCommitment { slot: usize, user: UserId },
    NonP2pBid { slot: usize, user: UserId },
    /// Accepted buy and sell volumes differ, so the P2P market did not clear.
    UnclearedMarket { slot: usize, bought: Fixed, sold: Fixed },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PriceOrdering { fit, tp, rp } => write!(
                f,
                "price schedule must satisfy 0 < FiT <= TP <= RP (FiT={fit}, TP={tp}, RP={rp})"
            ),
            Self::NoUsers => f.write_str("scenario has no users"),
            Self::NoSuppliers => f.write_str("scenario has no suppliers"),
            Self::DuplicateUser { user } => write!(f, "user {user} listed twice"),
            Self::DuplicateSupplier { supplier } => write!(f, "supplier {supplier} listed twice"),
            Self::UnknownSupplier { user, supplier } => {
                write!(f, "user {user} refers to unregistered supplier {supplier}")
            }
            Self::SlotCountMismatch { declared, actual } => write!(
                f,
                "slots_per_billing_period is {declared} but {actual} slots are present"
            ),
            Self::MissingUser { slot, user } => write!(f, "slot {slot} has no reading for {user}"),
            Self::DuplicateTruth { slot, user } => {
                write!(f, "slot {slot} has more than one reading for {user}")
            }
            Self::UnknownUser { slot, user } => write!(f, "slot {slot} mentions unknown {user}"),
            Self::NegativeCommitment { slot, user } => {
                write!(f, "slot {slot}: {user} committed a negative volume")
            }
            Self::NonP2pBid { slot, user } => write!(
                f,
                "slot {slot}: non-P2P user {user} must have no accepted bid, zero commitment and bid type buy"
            ),
            Self::UnclearedMarket { slot, bought, sold } => write!(
                f,
                "slot {slot}: accepted bids buy {bought} kWh but offers sell {sold} kWh"
            ),
        }
    }
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_suppliers(&self) -> usize {
        self.suppliers.len()
    }

    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.users.iter().find(|u| u.id == id)
    }

    /// Position of `id` in `suppliers`.
    pub fn supplier_index(&self, id: SupplierId) -> Option<usize> {
        self.suppliers.iter().position(|s| *s == id)
    }

    /// Users contracted to each supplier, in supplier order (`N_{u,s}`).
    pub fn users_per_supplier(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.suppliers.len()];
        for u in &self.users {
            if let Some(k) = self.supplier_index(u.supplier) {
                counts[k] += 1;
            }
        }
        counts
    }

    /// Every invariant violation in the scenario; empty when well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let s = &self.schedule;
        if !s.is_ordered() {
            out.push(Violation::PriceOrdering { fit: s.fit, tp: s.tp, rp: s.rp });
        }
        if self.users.is_empty() {
            out.push(Violation::NoUsers);
        }
        if self.suppliers.is_empty() {
            out.push(Violation::NoSuppliers);
        }
        let mut suppliers = BTreeSet::new();
        for sup in &self.suppliers {
            if !suppliers.insert(*sup) {
                out.push(Violation::DuplicateSupplier { supplier: *sup });
            }
        }
        let mut users = BTreeMap::new();
        for u in &self.users {
            if users.insert(u.id, u).is_some() {
                out.push(Violation::DuplicateUser { user: u.id });
            }
            if !suppliers.contains(&u.supplier) {
                out.push(Violation::UnknownSupplier { user: u.id, supplier: u.supplier });
            }
        }
        if self.slots.len() != self.slots_per_billing_period as usize {
            out.push(Violation::SlotCountMismatch {
                declared: self.slots_per_billing_period,
                actual: self.slots.len(),
            });
        }
        for (slot, truths) in self.slots.iter().enumerate() {
            let mut seen = BTreeSet::new();
            let mut bought = Fixed::ZERO;
            let mut sold = Fixed::ZERO;
            for t in truths {
                let Some(record) = users.get(&t.user) else {
                    out.push(Violation::UnknownUser { slot, user: t.user });
                    continue;
                };
                if !seen.insert(t.user) {
                    out.push(Violation::DuplicateTruth { slot, user: t.user });
                }
                if t.committed.is_negative() {
                    out.push(Violation::NegativeCommitment { slot, user: t.user });
                }
                if !record.p2p
                    && (t.bid_accepted || !t.committed.is_zero() || t.bid_type != BidType::Buy)
                {
                    out.push(Violation::NonP2pBid { slot, user: t.user });
                }
                if record.p2p && t.bid_accepted {
                    match t.bid_type {
                        BidType::Buy => bought += t.committed,
                        BidType::Sell => sold += t.committed,
                    }
                }
            }
            for u in &self.users {
                if !seen.contains(&u.id) {
                    out.push(Violation::MissingUser { slot, user: u.id });
                }
            }
            if bought != sold {
                out.push(Violation::UnclearedMarket { slot, bought, sold });
            }
        }
        out
    }
}

/// Knobs for [`generate_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_suppliers: usize,
    pub n_slots: usize,
    /// Deviations are drawn uniformly from `[-spread, +spread]`.
    pub deviation_spread: Fixed,
    /// Share of users that never trade P2P.
    pub non_p2p_fraction: f64,
    /// Share of P2P bids rejected at the auction.
    pub rejection_fraction: f64,
    /// Share of P2P bids that are offers to sell.
    pub sell_fraction: f64,
    pub schedule: PriceSchedule,
}

impl GeneratorConfig {
    pub fn new(seed: u64, n_users: usize, n_suppliers: usize, n_slots: usize, deviation_spread: Fixed) -> Self {
        GeneratorConfig {
            seed,
            n_users,
            n_suppliers,
            n_slots,
            deviation_spread,
            non_p2p_fraction: 0.1,
            rejection_fraction: 0.2,
            sell_fraction: 0.4,
            schedule: PriceSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenerateError {
    NoUsers,
    NoSuppliers,
    MoreSuppliersThanUsers { users: usize, suppliers: usize },
}

impl fmt::Display for GenerateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoUsers => f.write_str("at least one user is required"),
            Self::NoSuppliers => f.write_str("at least one supplier is required"),
            Self::MoreSuppliersThanUsers { users, suppliers } => {
                write!(f, "{suppliers} suppliers exceed {users} users")
            }
        }
    }
}

/// Deterministic synthetic scenario with default fractions.
pub fn generate(
    seed: u64,
    n_users: usize,
    n_suppliers: usize,
    n_slots: usize,
    deviation_spread: Fixed,
) -> Result<Scenario, GenerateError> {
    generate_with(&GeneratorConfig::new(seed, n_users, n_suppliers, n_slots, deviation_spread))
}

/// Deterministic synthetic scenario.
///
/// Buyers commit volumes in `[0, 10]` kWh on a 1 Wh grid. Accepted sellers
/// split the total accepted buy volume between them, so every slot's P2P
/// market clears. Users are assigned to suppliers round-robin.
pub fn generate_with(cfg: &GeneratorConfig) -> Result<Scenario, GenerateError> {
    if cfg.n_users == 0 {
        return Err(GenerateError::NoUsers);
    }
    if cfg.n_suppliers == 0 {
        return Err(GenerateError::NoSuppliers);
    }
    if cfg.n_suppliers > cfg.n_users {
        return Err(GenerateError::MoreSuppliersThanUsers {
            users: cfg.n_users,
            suppliers: cfg.n_suppliers,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let suppliers: Vec<SupplierId> = (1..=cfg.n_suppliers as u32).map(SupplierId).collect();
    let users: Vec<UserRecord> = (0..cfg.n_users)
        .map(|x| UserRecord {
            id: UserId(x as u32 + 1),
            supplier: suppliers[x % cfg.n_suppliers],
            p2p: !rng.gen_bool(cfg.non_p2p_fraction),
        })
        .collect();

    let spread = cfg.deviation_spread.abs().micros();
    let mut slots = Vec::with_capacity(cfg.n_slots);
    for _ in 0..cfg.n_slots {
        let mut truths: Vec<SlotTruth> = users
            .iter()
            .map(|u| {
                if !u.p2p {
                    // Mostly importing households, some net exporters.
                    let reading = Fixed::from_micros(rng.gen_range(-3_000..=10_000) * 1_000);
                    return SlotTruth {
                        user: u.id,
                        committed: Fixed::ZERO,
                        reading,
                        bid_accepted: false,
                        bid_type: BidType::Buy,
                    };
                }
                let bid_type = if rng.gen_bool(cfg.sell_fraction) { BidType::Sell } else { BidType::Buy };
                SlotTruth {
                    user: u.id,
                    committed: Fixed::from_micros(rng.gen_range(0..=10_000) * 1_000),
                    reading: Fixed::ZERO,
                    bid_accepted: !rng.gen_bool(cfg.rejection_fraction),
                    bid_type,
                }
            })
            .collect();

        clear_market(&users, &mut truths, &mut rng);

        for (t, u) in truths.iter_mut().zip(&users) {
            if !u.p2p {
                continue;
            }
            let deviation = if spread == 0 {
                0
            } else {
                rng.gen_range(-spread..=spread)
            };
            // U_val = bid_type · (U_P2P + InDev)
            let magnitude = t.committed.micros() + deviation;
            t.reading = Fixed::from_micros(i64::from(t.bid_type.sign()) * magnitude);
        }
        slots.push(truths);
    }

    Ok(Scenario {
        users,
        suppliers,
        schedule: cfg.schedule,
        slots,
        slots_per_billing_period: cfg.n_slots as u32,
    })
}

/// Rescale accepted offers so they sum to the accepted bids. With only one
/// side present nothing can clear and every bid is rejected.
fn clear_market(users: &[UserRecord], truths: &mut [SlotTruth], rng: &mut ChaCha8Rng) {
    let accepted = |t: &SlotTruth, u: &UserRecord, side: BidType| u.p2p && t.bid_accepted && t.bid_type == side;
    let buyers: Vec<usize> = (0..truths.len()).filter(|&i| accepted(&truths[i], &users[i], BidType::Buy)).collect();
    let sellers: Vec<usize> = (0..truths.len()).filter(|&i| accepted(&truths[i], &users[i], BidType::Sell)).collect();
    let demand: i64 = buyers.iter().map(|&i| truths[i].committed.micros()).sum();
    if buyers.is_empty() || sellers.is_empty() || demand == 0 {
        for &i in buyers.iter().chain(&sellers) {
            truths[i].bid_accepted = false;
        }
        return;
    }
    let weights: Vec<i64> = sellers.iter().map(|_| rng.gen_range(1..=1_000)).collect();
    let total: i64 = weights.iter().sum();
    let mut assigned = 0i64;
    for (&i, &w) in sellers.iter().zip(&weights) {
        // Whole watt-hours, remainder goes to the first seller.
        let share = (i128::from(demand) * i128::from(w) / i128::from(total)) as i64 / 1_000 * 1_000;
        truths[i].committed = Fixed::from_micros(share);
        assigned += share;
    }
    let first = sellers[0];
    truths[first].committed = Fixed::from_micros(truths[first].committed.micros() + demand - assigned);
}
