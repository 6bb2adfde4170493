//! The five protocol parties. Each owns its counters; only the grid
//! operator and the suppliers are ever handed a private key.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use ppbsp_core::billing::{
    bill_user, plan, BillFlags, BillingInput, BillingModel, DomainKeys, KeyDomain, PlainAggregates, SlotBillOutput,
    UserBill, BILL_EXPONENT,
};
use ppbsp_core::counters::OpCounts;
use ppbsp_core::decimal::Decimal;
use ppbsp_core::market::{PriceSchedule, Scenario, SupplierId, UserId};
use ppbsp_core::meter::{build_payload, MeterPayload};
use ppbsp_core::phe::{Ciphertext, PrivateKey, PublicKey};
use ppbsp_core::settlement::{
    aggregate_deviations, audit, gridop_decrypt_aggregates, regulator_check, supplier_decrypt_balance,
    supplier_settle, AuditBackup, AuditFinding, EncryptedAggregates, RegulatorReport, SupplierLedger,
};
use ppbsp_core::wire;

use crate::metrics::payload_table_bits;
use crate::network::{Kind, Message, Role};
use crate::simnet::SimError;

/// Implemented by every party so the privacy posture can be asserted.
pub trait KeyHolder {
    fn private_keys_held(&self) -> usize;
}

/// Map `f` over `items`, on the pool when there is one. Output order is
/// input order either way.
pub fn par_map<T, R, F>(pool: Option<&ThreadPool>, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match pool {
        Some(p) => p.install(|| items.par_iter().map(&f).collect()),
        None => items.iter().map(f).collect(),
    }
}

/// Every household meter. Randomness is a pure function of
/// `(seed, slot, user)`, so payload bytes do not depend on scheduling.
#[derive(Debug)]
pub struct MeterFleet {
    seed: u64,
    counts: OpCounts,
}

impl MeterFleet {
    pub fn new(seed: u64) -> Self {
        MeterFleet { seed, counts: OpCounts::new() }
    }

    pub fn rng(seed: u64, slot: usize, user: UserId) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(((slot as u64) << 32) | u64::from(user.0));
        rng
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    /// Encrypt one slot's readings and address the payloads to the platform.
    pub fn read_slot(
        &self,
        scenario: &Scenario,
        slot: usize,
        supplier_pks: &[PublicKey],
        gridop_pk: &PublicKey,
        pool: Option<&ThreadPool>,
    ) -> Result<Vec<Message>, SimError> {
        let truths = scenario.slots.get(slot).ok_or(SimError::NoSuchSlot(slot))?;
        let gw = gridop_pk.ciphertext_bytes();
        let out = par_map(pool, truths, |t| -> Result<Message, SimError> {
            let k = scenario
                .user(t.user)
                .and_then(|u| scenario.supplier_index(u.supplier))
                .ok_or(SimError::UnknownUser(t.user))?;
            let spk = &supplier_pks[k];
            let mut rng = Self::rng(self.seed, slot, t.user);
            let p = build_payload(t, spk, gridop_pk, &mut rng, &self.counts)?;
            Ok(Message {
                from: Role::Meter(t.user),
                to: Role::Platform,
                kind: Kind::Payload,
                slot: Some(slot as u32),
                bytes: wire::encode_payload(&p, spk.ciphertext_bytes(), gw),
                table_bits: payload_table_bits(8 * spk.ciphertext_bytes() as u64, 8 * gw as u64),
            })
        });
        out.into_iter().collect()
    }
}

impl KeyHolder for MeterFleet {
    fn private_keys_held(&self) -> usize {
        0
    }
}

/// Counts of what the platform is holding right now.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateInventory {
    pub payloads: usize,
    pub payload_ciphertexts: usize,
    /// Per-user slot bills; the platform never keeps these past `bill`.
    pub partial_bill_ciphertexts: usize,
    /// One running monthly bill per user, under the supplier's key.
    pub monthly_accumulators: usize,
    /// Two per supplier, under the grid operator's key.
    pub backup_ciphertexts: usize,
    pub public_keys: usize,
    pub private_keys: usize,
}

/// The trading platform's billing result for one slot.
#[derive(Debug, Clone)]
pub struct SlotBilling {
    /// Supplier-keyed balance change per supplier position.
    pub balances: Vec<Ciphertext>,
    /// Supplier-keyed partial bills, handed back to the caller and not
    /// retained by the platform.
    pub partial_bills: Vec<(UserId, Ciphertext)>,
}

/// `TrPlat`: bills users over ciphertexts and keeps the monthly folds.
///
/// Built from public keys only; there is no field that could hold a
/// private key.
#[derive(Debug)]
pub struct TradingPlatform {
    model: BillingModel,
    schedule: PriceSchedule,
    supplier_ids: Vec<SupplierId>,
    supplier_pks: Vec<PublicKey>,
    gridop_pk: PublicKey,
    roster: Vec<(UserId, usize)>,
    position: BTreeMap<UserId, usize>,
    inbox: Vec<Option<MeterPayload>>,
    monthly: Vec<Ciphertext>,
    folded: Vec<u32>,
    backup_bills: Vec<Ciphertext>,
    backup_balance: Vec<Ciphertext>,
    counts: OpCounts,
}

impl TradingPlatform {
    pub fn new(
        model: BillingModel,
        scenario: &Scenario,
        supplier_pks: Vec<PublicKey>,
        gridop_pk: PublicKey,
    ) -> Result<Self, SimError> {
        if supplier_pks.len() != scenario.suppliers.len() {
            return Err(SimError::KeyCount { expected: scenario.suppliers.len(), got: supplier_pks.len() });
        }
        let mut roster = Vec::with_capacity(scenario.users.len());
        for u in &scenario.users {
            let k = scenario.supplier_index(u.supplier).ok_or(SimError::UnknownUser(u.id))?;
            roster.push((u.id, k));
        }
        let position = roster.iter().enumerate().map(|(i, (u, _))| (*u, i)).collect();
        let mut p = TradingPlatform {
            model,
            schedule: scenario.schedule,
            supplier_ids: scenario.suppliers.clone(),
            supplier_pks,
            gridop_pk,
            inbox: vec![None; roster.len()],
            monthly: Vec::new(),
            folded: Vec::new(),
            backup_bills: Vec::new(),
            backup_balance: Vec::new(),
            roster,
            position,
            counts: OpCounts::new(),
        };
        p.reset_period();
        Ok(p)
    }

    pub fn model(&self) -> BillingModel {
        self.model
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    /// Start a fresh billing period.
    pub fn reset_period(&mut self) {
        self.monthly = self.roster.iter().map(|(_, k)| self.supplier_pks[*k].zero(BILL_EXPONENT)).collect();
        self.folded = vec![0; self.roster.len()];
        self.backup_bills = (0..self.supplier_pks.len()).map(|_| self.gridop_pk.zero(BILL_EXPONENT)).collect();
        self.backup_balance = self.backup_bills.clone();
    }

    pub fn receive_payload(&mut self, m: &Message) -> Result<(), SimError> {
        let Role::Meter(user) = m.from else {
            return Err(SimError::Protocol(format!("payload from {}", m.from)));
        };
        let &i = self.position.get(&user).ok_or(SimError::UnknownUser(user))?;
        if self.inbox[i].is_some() {
            return Err(SimError::Protocol(format!("second payload from {user} in one slot")));
        }
        self.inbox[i] = Some(wire::decode_payload(&m.bytes)?);
        Ok(())
    }

    fn complete_inbox(&self) -> Result<Vec<&MeterPayload>, SimError> {
        self.inbox
            .iter()
            .zip(&self.roster)
            .map(|(p, (u, _))| p.as_ref().ok_or(SimError::MissingPayload(*u)))
            .collect()
    }

    pub fn encrypted_aggregates(&self) -> Result<EncryptedAggregates, SimError> {
        let payloads = self.complete_inbox()?;
        Ok(aggregate_deviations(&self.gridop_pk, payloads)?)
    }

    fn bill_domain(
        &self,
        inputs: &[BillingInput<'_>],
        keys: DomainKeys<'_>,
        aggregates: Option<&PlainAggregates>,
        pool: Option<&ThreadPool>,
    ) -> Result<SlotBillOutput, SimError> {
        let domain = keys.domain();
        let bills = par_map(pool, inputs, |input| -> Result<UserBill, SimError> {
            let pk = keys.key_for(input.supplier).ok_or(SimError::UnknownUser(input.user))?;
            let p = plan(self.model, &BillFlags::from(input.payload), &self.schedule, aggregates)?;
            let (c, d) = domain.select(input.payload);
            Ok(bill_user(pk, &p, c, d, &self.counts)?)
        });
        let bills = bills.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(SlotBillOutput::assemble(keys, self.supplier_pks.len(), inputs, bills)?)
    }

    /// Compute both partial bills per user, fold them into the monthly and
    /// audit accumulators, and return the supplier-keyed balances.
    pub fn bill(&mut self, aggregates: Option<&PlainAggregates>, pool: Option<&ThreadPool>) -> Result<SlotBilling, SimError> {
        let payloads = self.complete_inbox()?;
        let inputs: Vec<BillingInput<'_>> = payloads
            .iter()
            .zip(&self.roster)
            .map(|(p, (user, k))| BillingInput { user: *user, supplier: *k, payload: p })
            .collect();
        let mut outs = Vec::with_capacity(2);
        for domain in KeyDomain::BOTH {
            let keys = match domain {
                KeyDomain::Supplier => DomainKeys::Supplier(&self.supplier_pks),
                KeyDomain::GridOp => DomainKeys::GridOp(&self.gridop_pk),
            };
            outs.push(self.bill_domain(&inputs, keys, aggregates, pool)?);
        }
        drop(inputs);
        let g_out = outs.pop().expect("gridop domain");
        let s_out = outs.pop().expect("supplier domain");

        for (i, ((_, ct), (_, k))) in s_out.bills.iter().zip(&self.roster).enumerate() {
            self.monthly[i] = self.supplier_pks[*k].add(&self.monthly[i], ct)?;
            self.folded[i] += 1;
        }
        for ((_, ct), (_, k)) in g_out.bills.iter().zip(&self.roster) {
            self.backup_bills[*k] = self.gridop_pk.add(&self.backup_bills[*k], ct)?;
        }
        for (k, ct) in g_out.balance.iter().enumerate() {
            self.backup_balance[k] = self.gridop_pk.add(&self.backup_balance[k], ct)?;
        }
        Ok(SlotBilling { balances: s_out.balance, partial_bills: s_out.bills })
    }

    /// Drop every per-user ciphertext of the slot.
    pub fn end_slot(&mut self) {
        self.inbox.iter_mut().for_each(|p| *p = None);
    }

    pub fn supplier_position(&self, s: SupplierId) -> Option<usize> {
        self.supplier_ids.iter().position(|x| *x == s)
    }

    /// Users in roster order.
    pub fn users(&self) -> Vec<UserId> {
        self.roster.iter().map(|(u, _)| *u).collect()
    }

    pub fn roster_of(&self, k: usize) -> Vec<UserId> {
        self.roster.iter().filter(|(_, s)| *s == k).map(|(u, _)| *u).collect()
    }

    pub fn final_bills(&self, k: usize) -> Vec<(UserId, Ciphertext)> {
        self.roster
            .iter()
            .zip(&self.monthly)
            .filter(|((_, s), _)| *s == k)
            .map(|((u, _), ct)| (*u, ct.clone()))
            .collect()
    }

    /// Number of partial bills folded into each user's monthly bill.
    pub fn folded_counts(&self) -> &[u32] {
        &self.folded
    }

    pub fn audit_backup(&self) -> Vec<AuditBackup> {
        self.supplier_ids
            .iter()
            .zip(self.backup_bills.iter().zip(&self.backup_balance))
            .map(|(s, (b, bal))| AuditBackup { supplier: *s, bills_total: b.clone(), balance_total: bal.clone() })
            .collect()
    }

    pub fn inventory(&self) -> StateInventory {
        let payloads = self.inbox.iter().flatten().count();
        StateInventory {
            payloads,
            payload_ciphertexts: payloads * MeterPayload::CIPHERTEXT_COUNT,
            partial_bill_ciphertexts: 0,
            monthly_accumulators: self.monthly.len(),
            backup_ciphertexts: self.backup_bills.len() + self.backup_balance.len(),
            public_keys: self.supplier_pks.len() + 1,
            private_keys: self.private_keys_held(),
        }
    }

    /// Every big integer in the platform's state: key moduli and generators
    /// and all ciphertext values. Used to scan for leaked key material.
    pub fn held_integers(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        for pk in self.supplier_pks.iter().chain(std::iter::once(&self.gridop_pk)) {
            out.push(pk.n().clone());
            out.push(pk.g().clone());
        }
        for p in self.inbox.iter().flatten() {
            out.extend(p.ciphertexts().iter().map(|c| c.value().clone()));
        }
        for c in self.monthly.iter().chain(&self.backup_bills).chain(&self.backup_balance) {
            out.push(c.value().clone());
        }
        out
    }
}

impl KeyHolder for TradingPlatform {
    fn private_keys_held(&self) -> usize {
        0
    }
}

/// `GridOp`: decrypts market aggregates and, on request, audits.
#[derive(Debug)]
pub struct GridOperator {
    sk: PrivateKey,
    counts: OpCounts,
}

impl GridOperator {
    pub fn new(sk: PrivateKey) -> Self {
        GridOperator { sk, counts: OpCounts::new() }
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    pub fn public_key(&self) -> &PublicKey {
        self.sk.public_key()
    }

    pub fn decrypt_aggregates(&self, enc: &EncryptedAggregates) -> Result<PlainAggregates, SimError> {
        Ok(gridop_decrypt_aggregates(enc, &self.sk, &self.counts)?)
    }

    pub fn audit(
        &self,
        backups: &[AuditBackup],
        reported: &[(SupplierId, Decimal)],
        tolerance: &Decimal,
    ) -> Result<Vec<AuditFinding>, SimError> {
        Ok(audit(backups, reported, &self.sk, tolerance, &self.counts)?)
    }
}

impl KeyHolder for GridOperator {
    fn private_keys_held(&self) -> usize {
        1
    }
}

/// `S_k`.
#[derive(Debug)]
pub struct Supplier {
    pub id: SupplierId,
    sk: PrivateKey,
    counts: OpCounts,
    slot_balances: Vec<Decimal>,
    /// Added to the true residue before reporting; `None` when honest.
    misreport: Option<Decimal>,
}

impl Supplier {
    pub fn new(id: SupplierId, sk: PrivateKey, misreport: Option<Decimal>) -> Self {
        Supplier { id, sk, counts: OpCounts::new(), slot_balances: Vec::new(), misreport }
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    pub fn receive_balance(&mut self, ct: &Ciphertext) -> Result<Decimal, SimError> {
        let d = supplier_decrypt_balance(&self.sk, ct, &self.counts)?;
        self.slot_balances.push(d.clone());
        Ok(d)
    }

    pub fn settle(&mut self, final_bills: &[(UserId, Ciphertext)], roster: &[UserId]) -> Result<SupplierLedger, SimError> {
        let balances = std::mem::take(&mut self.slot_balances);
        Ok(supplier_settle(self.id, balances, final_bills, roster, &self.sk, &self.counts)?)
    }

    /// The residue this supplier tells the regulator.
    pub fn reported_residue(&self, ledger: &SupplierLedger) -> Decimal {
        match &self.misreport {
            Some(off) => &ledger.residue + off,
            None => ledger.residue.clone(),
        }
    }
}

impl KeyHolder for Supplier {
    fn private_keys_held(&self) -> usize {
        1
    }
}

#[derive(Debug)]
pub struct Regulator {
    suppliers: Vec<SupplierId>,
    tolerance: Decimal,
}

impl Regulator {
    pub fn new(suppliers: Vec<SupplierId>, tolerance: Decimal) -> Self {
        Regulator { suppliers, tolerance }
    }

    pub fn tolerance(&self) -> &Decimal {
        &self.tolerance
    }

    pub fn check(&self, residues: &[(SupplierId, Decimal)]) -> Result<RegulatorReport, SimError> {
        Ok(regulator_check(&self.suppliers, residues, &self.tolerance)?)
    }
}

impl KeyHolder for Regulator {
    fn private_keys_held(&self) -> usize {
        0
    }
}
