//! Grid-operator aggregate decryption, supplier settlement and the
//! regulator's zero-sum check with its audit path.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::billing::PlainAggregates;
use crate::counters::{Op, OpCounts};
use crate::decimal::{Decimal, Fixed, FIXED_EXPONENT};
use crate::market::{BidType, SupplierId, UserId};
use crate::meter::{MeterPayload, Ternary};
use crate::phe::{Ciphertext, PheError, PrivateKey, PublicKey};

/// Residues whose sum stays within this bound count as zero: 10^-6.
pub fn residue_tolerance() -> Decimal {
    Decimal::new(1.into(), -6)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SettlementError {
    Phe(PheError),
    /// A decrypted aggregate was negative or off the kWh grid.
    MalformedAggregate,
    BillCountMismatch { supplier: SupplierId, expected: usize, got: usize },
    UnexpectedCustomer { supplier: SupplierId, user: UserId },
    MissingReport(SupplierId),
    MissingBackup(SupplierId),
}

impl fmt::Display for SettlementError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettlementError::Phe(e) => write!(f, "{e}"),
            SettlementError::MalformedAggregate => f.write_str("decrypted aggregate is not a non-negative kWh amount"),
            SettlementError::BillCountMismatch { supplier, expected, got } => {
                write!(f, "{supplier}: expected {expected} final bills, got {got}")
            }
            SettlementError::UnexpectedCustomer { supplier, user } => write!(f, "{supplier}: {user} is not a customer"),
            SettlementError::MissingReport(s) => write!(f, "no residue report from {s}"),
            SettlementError::MissingBackup(s) => write!(f, "no audit backup for {s}"),
        }
    }
}

impl From<PheError> for SettlementError {
    fn from(e: PheError) -> Self {
        SettlementError::Phe(e)
    }
}

/// Market-wide deviation sums under the grid operator's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedAggregates {
    pub t_c_under: Ciphertext,
    pub t_c_over: Ciphertext,
    pub t_p_under: Ciphertext,
    pub t_p_over: Ciphertext,
}

impl EncryptedAggregates {
    pub fn as_array(&self) -> [&Ciphertext; 4] {
        [&self.t_c_under, &self.t_c_over, &self.t_p_under, &self.t_p_over]
    }
}

/// Fold the gridop-keyed deviations of accepted bids into the four sums.
/// Under-sums are negated once at the end so every aggregate is a magnitude.
pub fn aggregate_deviations<'a, I>(gridop_pk: &PublicKey, payloads: I) -> Result<EncryptedAggregates, PheError>
where
    I: IntoIterator<Item = &'a MeterPayload>,
{
    let zero = gridop_pk.zero(FIXED_EXPONENT);
    let (mut cu, mut co, mut pu, mut po) = (zero.clone(), zero.clone(), zero.clone(), zero);
    for p in payloads.into_iter().filter(|p| p.is_bid_accepted) {
        let acc = match (p.bid_type, p.indev_sign) {
            (_, Ternary::Zero) => continue,
            (BidType::Buy, Ternary::Negative) => &mut cu,
            (BidType::Buy, Ternary::Positive) => &mut co,
            (BidType::Sell, Ternary::Negative) => &mut pu,
            (BidType::Sell, Ternary::Positive) => &mut po,
        };
        *acc = gridop_pk.add(acc, &p.indev_for_gridop)?;
    }
    Ok(EncryptedAggregates {
        t_c_under: gridop_pk.neg(&cu)?,
        t_c_over: co,
        t_p_under: gridop_pk.neg(&pu)?,
        t_p_over: po,
    })
}

fn to_kwh(d: &Decimal) -> Result<Fixed, SettlementError> {
    match d.rescale(FIXED_EXPONENT).and_then(|d| d.to_fixed()) {
        Some(f) if !f.is_negative() => Ok(f),
        _ => Err(SettlementError::MalformedAggregate),
    }
}

/// The grid operator's per-slot step: exactly four decryptions.
pub fn gridop_decrypt_aggregates(
    aggs: &EncryptedAggregates,
    sk: &PrivateKey,
    counts: &OpCounts,
) -> Result<PlainAggregates, SettlementError> {
    let mut out = [Fixed::ZERO; 4];
    for (slot, ct) in out.iter_mut().zip(aggs.as_array()) {
        let d = sk.decrypt_decimal(ct)?;
        counts.record(Op::HomoDec);
        *slot = to_kwh(&d)?;
    }
    Ok(PlainAggregates::new(out[0], out[1], out[2], out[3]))
}

/// A supplier's per-slot step: one decryption of its balance.
pub fn supplier_decrypt_balance(sk: &PrivateKey, balance: &Ciphertext, counts: &OpCounts) -> Result<Decimal, PheError> {
    let d = sk.decrypt_decimal(balance)?;
    counts.record(Op::HomoDec);
    Ok(d)
}

/// What a supplier knows at the end of a billing period.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupplierLedger {
    pub supplier: SupplierId,
    pub slot_balances: Vec<Decimal>,
    /// `S^bal_k`, the period's retail-market profit.
    pub balance: Decimal,
    /// Monthly account delta per customer; negative values are rewards.
    pub bills: Vec<(UserId, Decimal)>,
    /// `S^P2P_k`: capital held on behalf of P2P trades.
    pub residue: Decimal,
}

impl SupplierLedger {
    pub fn bills_total(&self) -> Decimal {
        self.bills.iter().fold(Decimal::zero(), |acc, (_, b)| &acc + b)
    }
}

/// Settle one supplier: sum slot balances, decrypt one final bill per
/// customer and derive the residue `Σ bills − Σ rewards − S^bal_k`.
pub fn supplier_settle(
    supplier: SupplierId,
    slot_balances: Vec<Decimal>,
    final_bills: &[(UserId, Ciphertext)],
    roster: &[UserId],
    sk: &PrivateKey,
    counts: &OpCounts,
) -> Result<SupplierLedger, SettlementError> {
    if final_bills.len() != roster.len() {
        return Err(SettlementError::BillCountMismatch { supplier, expected: roster.len(), got: final_bills.len() });
    }
    let customers: BTreeSet<UserId> = roster.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for (user, _) in final_bills {
        if !customers.contains(user) || !seen.insert(*user) {
            return Err(SettlementError::UnexpectedCustomer { supplier, user: *user });
        }
    }
    let balance = slot_balances.iter().fold(Decimal::zero(), |a, b| &a + b);
    let mut bills = Vec::with_capacity(final_bills.len());
    for (user, ct) in final_bills {
        let d = sk.decrypt_decimal(ct)?;
        counts.record(Op::HomoDec);
        bills.push((*user, d));
    }
    let total = bills.iter().fold(Decimal::zero(), |acc, (_, b)| &acc + b);
    let residue = &total - &balance;
    Ok(SupplierLedger { supplier, slot_balances, balance, bills, residue })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Settled,
    AuditRequired,
}

/// A supplier whose reported residue disagrees with the audit.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuditFinding {
    pub supplier: SupplierId,
    pub reported: Decimal,
    pub recomputed: Decimal,
}

/// One leg of the redistribution plan.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transfer {
    pub from: SupplierId,
    pub to: SupplierId,
    pub amount: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegulatorReport {
    pub residues: Vec<(SupplierId, Decimal)>,
    pub sum: Decimal,
    pub verdict: Verdict,
    pub findings: Vec<AuditFinding>,
    /// Transfers that zero every residue; empty unless settled.
    pub transfers: Vec<Transfer>,
}

impl RegulatorReport {
    pub fn flagged(&self) -> Vec<SupplierId> {
        self.findings.iter().map(|f| f.supplier).collect()
    }
}

/// Check that residues from every supplier sum to zero within `tolerance`.
pub fn regulator_check(
    suppliers: &[SupplierId],
    residues: &[(SupplierId, Decimal)],
    tolerance: &Decimal,
) -> Result<RegulatorReport, SettlementError> {
    let reported: BTreeMap<SupplierId, &Decimal> = residues.iter().map(|(s, r)| (*s, r)).collect();
    let mut ordered = Vec::with_capacity(suppliers.len());
    for s in suppliers {
        let r = reported.get(s).ok_or(SettlementError::MissingReport(*s))?;
        ordered.push((*s, (*r).clone()));
    }
    let sum = ordered.iter().fold(Decimal::zero(), |acc, (_, r)| &acc + r);
    let verdict = if sum.abs() <= *tolerance { Verdict::Settled } else { Verdict::AuditRequired };
    let transfers = if verdict == Verdict::Settled { redistribution_plan(&ordered) } else { Vec::new() };
    Ok(RegulatorReport { residues: ordered, sum, verdict, findings: Vec::new(), transfers })
}

/// Greedy plan: repeatedly move money from the supplier holding the most
/// P2P capital to the one owed the most.
pub fn redistribution_plan(residues: &[(SupplierId, Decimal)]) -> Vec<Transfer> {
    let mut holders: Vec<(SupplierId, Decimal)> =
        residues.iter().filter(|(_, r)| r.signum() > 0).cloned().collect();
    let mut owed: Vec<(SupplierId, Decimal)> =
        residues.iter().filter(|(_, r)| r.signum() < 0).map(|(s, r)| (*s, r.abs())).collect();
    let mut plan = Vec::new();
    loop {
        let hi = holders.iter().enumerate().max_by(|a, b| a.1 .1.cmp(&b.1 .1).then(b.1 .0.cmp(&a.1 .0)));
        let lo = owed.iter().enumerate().max_by(|a, b| a.1 .1.cmp(&b.1 .1).then(b.1 .0.cmp(&a.1 .0)));
        let (Some((hi, _)), Some((lo, _))) = (hi, lo) else { break };
        let amount = core::cmp::min(holders[hi].1.clone(), owed[lo].1.clone());
        if amount.is_zero() {
            break;
        }
        plan.push(Transfer { from: holders[hi].0, to: owed[lo].0, amount: amount.normalized() });
        holders[hi].1 = &holders[hi].1 - &amount;
        owed[lo].1 = &owed[lo].1 - &amount;
        holders.retain(|(_, r)| !r.is_zero());
        owed.retain(|(_, r)| !r.is_zero());
    }
    plan
}

/// What the platform keeps under the grid operator's key for one supplier:
/// the period's summed customer deltas and summed slot balances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditBackup {
    pub supplier: SupplierId,
    pub bills_total: Ciphertext,
    pub balance_total: Ciphertext,
}

/// Recompute every supplier's residue from the backup (two decryptions per
/// supplier) and flag those whose report disagrees beyond `tolerance`.
pub fn audit(
    backups: &[AuditBackup],
    reported: &[(SupplierId, Decimal)],
    gridop_sk: &PrivateKey,
    tolerance: &Decimal,
    counts: &OpCounts,
) -> Result<Vec<AuditFinding>, SettlementError> {
    let by_supplier: BTreeMap<SupplierId, &AuditBackup> = backups.iter().map(|b| (b.supplier, b)).collect();
    let mut findings = Vec::new();
    for (supplier, claim) in reported {
        let b = by_supplier.get(supplier).ok_or(SettlementError::MissingBackup(*supplier))?;
        let bills = gridop_sk.decrypt_decimal(&b.bills_total)?;
        let balance = gridop_sk.decrypt_decimal(&b.balance_total)?;
        counts.record_n(Op::HomoDec, 2);
        let recomputed = &bills - &balance;
        if (&recomputed - claim).abs() > *tolerance {
            findings.push(AuditFinding { supplier: *supplier, reported: claim.clone(), recomputed });
        }
    }
    Ok(findings)
}
