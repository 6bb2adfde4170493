//! Phase 2 and phase 3 over the in-process network.
//!
//! One meter fleet feeds one independent market per billing model: each
//! market has its own platform, grid operator, suppliers, regulator and
//! network, and receives its own copy of every payload. A single-model run
//! is the one-market case.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::ThreadPool;

use ppbsp_core::billing::{rm_volume, BillingError, BillingModel, PlainAggregates};
use ppbsp_core::counters::{OpCounts, OpSnapshot};
use ppbsp_core::decimal::{Decimal, Fixed};
use ppbsp_core::market::{Scenario, SupplierId, UserId};
use ppbsp_core::phe::{Ciphertext, PheError, PublicKey};
use ppbsp_core::settlement::{residue_tolerance, RegulatorReport, SettlementError, SupplierLedger, Verdict};
use ppbsp_core::wire::{self, WireError};

use crate::entities::{GridOperator, MeterFleet, Regulator, Supplier, TradingPlatform};
use crate::keys::KeyRing;
use crate::metrics::{Entity, MetricsLedger, PeriodKind, PeriodMetrics, FLOAT_BITS};
use crate::network::{Kind, Message, NetError, Network, Role, Segment, Traffic};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("encryption: {0}")]
    Phe(PheError),
    #[error("billing: {0}")]
    Billing(BillingError),
    #[error("settlement: {0}")]
    Settlement(SettlementError),
    #[error("wire: {0}")]
    Wire(WireError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("scenario has {expected} suppliers but {got} supplier keys were given")]
    KeyCount { expected: usize, got: usize },
    #[error("slot {0} does not exist")]
    NoSuchSlot(usize),
    #[error("{0} is not in the scenario")]
    UnknownUser(UserId),
    #[error("no payload from {0} this slot")]
    MissingPayload(UserId),
    #[error("{0} is not in the scenario")]
    UnknownSupplier(SupplierId),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

macro_rules! from_core {
    ($($t:ty => $v:ident),*) => {$(
        impl From<$t> for SimError {
            fn from(e: $t) -> Self {
                SimError::$v(e)
            }
        }
    )*};
}
from_core!(PheError => Phe, BillingError => Billing, SettlementError => Settlement, WireError => Wire);

/// A supplier that lies about its residue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Misreport {
    pub supplier: SupplierId,
    pub offset: Decimal,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Seeds the meters' encryption randomness.
    pub seed: u64,
    /// 0 or 1 runs everything on the calling thread.
    pub workers: usize,
    pub misreport: Option<Misreport>,
    /// Have the regulator request inspection even when residues balance.
    pub force_audit: bool,
    /// Keep each slot's supplier-keyed partial bills in the results. This
    /// is a test tap outside the platform; the platform itself drops them.
    pub capture_partial_bills: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 0, workers: 1, misreport: None, force_audit: false, capture_partial_bills: false }
    }
}

/// The outcome of one trading period in one market.
#[derive(Debug, Clone)]
pub struct SlotResult {
    pub slot: u32,
    pub aggregates: PlainAggregates,
    /// As decrypted by each supplier, by supplier position.
    pub supplier_balances: Vec<Decimal>,
    /// Whether the platform billed while the decrypted aggregates were
    /// still in flight.
    pub billed_before_aggregates: bool,
    pub partial_bills: Option<Vec<(UserId, Ciphertext)>>,
    /// Wall time of the platform's billing step.
    pub platform_billing: Duration,
    pub rm_volume: Fixed,
    pub metrics: PeriodMetrics,
}

#[derive(Debug, Clone)]
pub struct BillingOutcome {
    pub report: RegulatorReport,
    pub ledgers: Vec<SupplierLedger>,
    /// What each supplier told the regulator.
    pub reported: Vec<(SupplierId, Decimal)>,
    pub inspected: bool,
    /// Partial bills folded into each monthly bill, per user.
    pub folded: Vec<(UserId, u32)>,
    pub metrics: PeriodMetrics,
}

impl BillingOutcome {
    pub fn monthly_bills(&self) -> impl Iterator<Item = (SupplierId, UserId, &Decimal)> {
        self.ledgers.iter().flat_map(|l| l.bills.iter().map(move |(u, b)| (l.supplier, *u, b)))
    }
}

/// A full run of one model.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: BillingModel,
    pub slots: Vec<SlotResult>,
    pub billing: BillingOutcome,
    pub metrics: MetricsLedger,
}

impl RunOutcome {
    pub fn rm_volume(&self) -> Fixed {
        self.slots.iter().map(|s| s.rm_volume).sum()
    }

    pub fn settled(&self) -> bool {
        self.billing.report.verdict == Verdict::Settled
    }
}

/// Volume bought from or sold to suppliers because of P2P deviations, from
/// the decrypted aggregates alone. Status quo has no P2P part.
pub fn rm_volume_from_aggregates(model: BillingModel, a: &PlainAggregates) -> Option<Fixed> {
    match model {
        BillingModel::StatusQuo => None,
        BillingModel::Individual => Some(a.t_c_under + a.t_c_over + a.t_p_under + a.t_p_over),
        BillingModel::Social => Some(a.tdd().abs() + a.tsd().abs()),
        BillingModel::Universal => Some(a.td().abs()),
    }
}

struct Market {
    model: BillingModel,
    platform: TradingPlatform,
    gridop: GridOperator,
    suppliers: Vec<Supplier>,
    regulator: Regulator,
    net: Network,
    metrics: MetricsLedger,
    slots: Vec<SlotResult>,
    supplier_widths: Vec<usize>,
}

struct Marks {
    ops: BTreeMap<Entity, OpSnapshot>,
    traffic: BTreeMap<Segment, Traffic>,
}

impl Market {
    fn counters(&self) -> Vec<(Entity, &OpCounts)> {
        let mut v = vec![(Entity::Platform, self.platform.counts()), (Entity::GridOp, self.gridop.counts())];
        v.extend(self.suppliers.iter().map(|s| (Entity::Supplier(s.id), s.counts())));
        v
    }

    fn mark(&self) -> Marks {
        Marks {
            ops: self.counters().into_iter().map(|(e, c)| (e, c.snapshot())).collect(),
            traffic: self.net.traffic().clone(),
        }
    }

    fn period(&self, kind: PeriodKind, slot: Option<u32>, before: &Marks, meters: Option<OpSnapshot>) -> PeriodMetrics {
        let mut ops: BTreeMap<Entity, OpSnapshot> = self
            .counters()
            .into_iter()
            .map(|(e, c)| (e, c.snapshot().since(&before.ops[&e])))
            .collect();
        ops.insert(Entity::SmartMeters, meters.unwrap_or_default());
        ops.insert(Entity::Regulator, OpSnapshot::default());
        let traffic = self
            .net
            .traffic()
            .iter()
            .map(|(s, t)| (*s, t.since(&before.traffic.get(s).copied().unwrap_or_default())))
            .filter(|(_, t)| t.messages > 0)
            .collect();
        PeriodMetrics { kind, slot, ops, traffic }
    }

    fn supplier_role(&self, k: usize) -> Role {
        Role::Supplier(self.suppliers[k].id)
    }

    #[allow(clippy::too_many_arguments)]
    fn trading_period(
        &mut self,
        scenario: &Scenario,
        slot: usize,
        payloads: &[Message],
        meter_ops: OpSnapshot,
        gridop_pk: &PublicKey,
        supplier_pks: &[PublicKey],
        pool: Option<&ThreadPool>,
        capture: bool,
    ) -> Result<SlotResult, SimError> {
        let before = self.mark();
        let tag = Some(slot as u32);
        for m in payloads {
            self.net.send(m.clone())?;
        }

        // TrPlat: collect payloads, forward the encrypted aggregates.
        for m in self.net.recv_all(Role::Platform, Kind::Payload) {
            self.platform.receive_payload(&m)?;
        }
        let enc = self.platform.encrypted_aggregates()?;
        let gw = gridop_pk.ciphertext_bytes();
        self.net.send(Message {
            from: Role::Platform,
            to: Role::GridOp,
            kind: Kind::EncAggregates,
            slot: tag,
            bytes: wire::encode_enc_aggregates(&enc, gw),
            table_bits: 4 * 8 * gw as u64,
        })?;

        // GridOp: acknowledge at once when billing does not wait, then decrypt.
        let m = self.net.recv(Role::GridOp, Kind::EncAggregates)?;
        let enc = wire::decode_enc_aggregates(&m.bytes)?;
        let waits = self.model.needs_aggregates();
        if !waits {
            self.net.send(Message {
                from: Role::GridOp,
                to: Role::Platform,
                kind: Kind::Ack,
                slot: tag,
                bytes: wire::ACK.to_vec(),
                table_bits: 0,
            })?;
        }
        let plain = self.gridop.decrypt_aggregates(&enc)?;
        self.net.send(Message {
            from: Role::GridOp,
            to: Role::Platform,
            kind: Kind::PlainAggregates,
            slot: tag,
            bytes: wire::encode_plain_aggregates(&plain),
            table_bits: 4 * FLOAT_BITS,
        })?;

        // TrPlat: bill, blocking on the aggregates only when the model needs them.
        let aggregates = if waits {
            let m = self.net.recv(Role::Platform, Kind::PlainAggregates)?;
            Some(wire::decode_plain_aggregates(&m.bytes)?)
        } else {
            self.net.recv(Role::Platform, Kind::Ack)?;
            None
        };
        let billed_before_aggregates = self.net.pending_kind(Role::Platform, Kind::PlainAggregates) > 0;
        let t0 = Instant::now();
        let billing = self.platform.bill(aggregates.as_ref(), pool)?;
        let platform_billing = t0.elapsed();
        let aggregates = match aggregates {
            Some(a) => a,
            None => wire::decode_plain_aggregates(&self.net.recv(Role::Platform, Kind::PlainAggregates)?.bytes)?,
        };
        for (k, ct) in billing.balances.iter().enumerate() {
            let w = supplier_pks[k].ciphertext_bytes();
            self.net.send(Message {
                from: Role::Platform,
                to: self.supplier_role(k),
                kind: Kind::SupplierBalance,
                slot: tag,
                bytes: wire::encode_balance(ct, w),
                table_bits: 8 * w as u64,
            })?;
        }
        self.platform.end_slot();

        let mut supplier_balances = Vec::with_capacity(self.suppliers.len());
        for k in 0..self.suppliers.len() {
            let m = self.net.recv(self.supplier_role(k), Kind::SupplierBalance)?;
            supplier_balances.push(self.suppliers[k].receive_balance(&wire::decode_balance(&m.bytes)?)?);
        }
        if !self.net.is_idle() {
            return Err(SimError::Protocol(format!("slot {slot} left undelivered messages")));
        }

        let truths = &scenario.slots[slot];
        let rm = rm_volume_from_aggregates(self.model, &aggregates).unwrap_or_else(|| rm_volume(self.model, truths));
        let metrics = self.period(PeriodKind::Trading, tag, &before, Some(meter_ops));
        self.metrics.push(metrics.clone());
        let result = SlotResult {
            slot: slot as u32,
            aggregates,
            supplier_balances,
            billed_before_aggregates,
            partial_bills: capture.then_some(billing.partial_bills),
            platform_billing,
            rm_volume: rm,
            metrics,
        };
        self.slots.push(result.clone());
        Ok(result)
    }

    fn billing_period(&mut self, force_audit: bool) -> Result<BillingOutcome, SimError> {
        let before = self.mark();

        for k in 0..self.suppliers.len() {
            let bills = self.platform.final_bills(k);
            let w = self.supplier_widths[k];
            self.net.send(Message {
                from: Role::Platform,
                to: self.supplier_role(k),
                kind: Kind::FinalBills,
                slot: None,
                bytes: wire::encode_final_bills(&bills, w),
                table_bits: (bills.len() * 8 * w) as u64,
            })?;
        }

        let mut ledgers = Vec::with_capacity(self.suppliers.len());
        let mut reported = Vec::with_capacity(self.suppliers.len());
        for k in 0..self.suppliers.len() {
            let m = self.net.recv(self.supplier_role(k), Kind::FinalBills)?;
            let bills = wire::decode_final_bills(&m.bytes)?;
            let ledger = self.suppliers[k].settle(&bills, &self.platform.roster_of(k))?;
            let claim = self.suppliers[k].reported_residue(&ledger);
            self.net.send(Message {
                from: self.supplier_role(k),
                to: Role::Regulator,
                kind: Kind::ResidueReport,
                slot: None,
                bytes: wire::encode_residue(ledger.supplier, &claim),
                table_bits: 0,
            })?;
            reported.push((ledger.supplier, claim));
            ledgers.push(ledger);
        }

        let mut residues = Vec::new();
        for m in self.net.recv_all(Role::Regulator, Kind::ResidueReport) {
            residues.push(wire::decode_residue(&m.bytes)?);
        }
        let mut report = self.regulator.check(&residues)?;
        let inspected = force_audit || report.verdict == Verdict::AuditRequired;
        if inspected {
            self.net.send(Message {
                from: Role::Regulator,
                to: Role::Platform,
                kind: Kind::AuditRequest,
                slot: None,
                bytes: vec![1],
                table_bits: 0,
            })?;
            self.net.recv(Role::Platform, Kind::AuditRequest)?;
            let backup = self.platform.audit_backup();
            let gw = self.gridop.public_key().ciphertext_bytes();
            self.net.send(Message {
                from: Role::Platform,
                to: Role::GridOp,
                kind: Kind::AuditBackup,
                slot: None,
                bytes: wire::encode_backup(&backup, gw),
                table_bits: (2 * backup.len() * 8 * gw) as u64,
            })?;
            self.net.send(Message {
                from: Role::Regulator,
                to: Role::GridOp,
                kind: Kind::AuditResidues,
                slot: None,
                bytes: wire::encode_residues(&report.residues),
                table_bits: 0,
            })?;
            let backup = wire::decode_backup(&self.net.recv(Role::GridOp, Kind::AuditBackup)?.bytes)?;
            let claims = wire::decode_residues(&self.net.recv(Role::GridOp, Kind::AuditResidues)?.bytes)?;
            let findings = self.gridop.audit(&backup, &claims, self.regulator.tolerance())?;
            self.net.send(Message {
                from: Role::GridOp,
                to: Role::Regulator,
                kind: Kind::AuditFindings,
                slot: None,
                bytes: wire::encode_findings(&findings),
                table_bits: 0,
            })?;
            report.findings = wire::decode_findings(&self.net.recv(Role::Regulator, Kind::AuditFindings)?.bytes)?;
        }
        if !self.net.is_idle() {
            return Err(SimError::Protocol("billing period left undelivered messages".into()));
        }

        let folded = self
            .platform
            .folded_counts()
            .iter()
            .zip(self.platform.users())
            .map(|(n, u)| (u, *n))
            .collect();
        self.platform.reset_period();
        let metrics = self.period(PeriodKind::Billing, None, &before, None);
        self.metrics.push(metrics.clone());
        Ok(BillingOutcome { report, ledgers, reported, inspected, folded, metrics })
    }

}

/// All markets of one run plus the shared meter fleet.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    keys: &'a KeyRing,
    cfg: SimConfig,
    pool: Option<ThreadPool>,
    fleet: MeterFleet,
    supplier_pks: Vec<PublicKey>,
    markets: Vec<Market>,
}

impl fmt::Debug for Simulation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("models", &self.models())
            .field("workers", &self.cfg.workers)
            .finish()
    }
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, keys: &'a KeyRing, models: &[BillingModel], cfg: SimConfig) -> Result<Self, SimError> {
        if keys.suppliers.len() != scenario.suppliers.len() {
            return Err(SimError::KeyCount { expected: scenario.suppliers.len(), got: keys.suppliers.len() });
        }
        if let Some(m) = &cfg.misreport {
            if scenario.supplier_index(m.supplier).is_none() {
                return Err(SimError::UnknownSupplier(m.supplier));
            }
        }
        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| SimError::Pool(e.to_string()))?,
            )
        } else {
            None
        };
        let supplier_pks = keys.supplier_public();
        let gridop_pk = keys.gridop.0.clone();
        let mut markets = Vec::with_capacity(models.len());
        for &model in models {
            let suppliers = scenario
                .suppliers
                .iter()
                .zip(&keys.suppliers)
                .map(|(id, (_, sk))| {
                    let lie = cfg.misreport.as_ref().filter(|m| m.supplier == *id).map(|m| m.offset.clone());
                    Supplier::new(*id, sk.clone(), lie)
                })
                .collect();
            markets.push(Market {
                model,
                platform: TradingPlatform::new(model, scenario, supplier_pks.clone(), gridop_pk.clone())?,
                gridop: GridOperator::new(keys.gridop.1.clone()),
                suppliers,
                regulator: Regulator::new(scenario.suppliers.clone(), residue_tolerance()),
                net: Network::new(),
                metrics: MetricsLedger::default(),
                slots: Vec::new(),
                supplier_widths: supplier_pks.iter().map(PublicKey::ciphertext_bytes).collect(),
            });
        }
        let fleet = MeterFleet::new(cfg.seed);
        Ok(Simulation { scenario, keys, cfg, pool, fleet, supplier_pks, markets })
    }

    pub fn models(&self) -> Vec<BillingModel> {
        self.markets.iter().map(|m| m.model).collect()
    }

    pub fn platform(&self, model: BillingModel) -> Option<&TradingPlatform> {
        self.markets.iter().find(|m| m.model == model).map(|m| &m.platform)
    }

    pub fn fleet(&self) -> &MeterFleet {
        &self.fleet
    }

    /// Run one trading period in every market; results in model order.
    pub fn run_trading_period(&mut self, slot: usize) -> Result<Vec<SlotResult>, SimError> {
        let pool = self.pool.as_ref();
        let before = self.fleet.counts().snapshot();
        let payloads = self.fleet.read_slot(self.scenario, slot, &self.supplier_pks, &self.keys.gridop.0, pool)?;
        let meter_ops = self.fleet.counts().snapshot().since(&before);
        let mut out = Vec::with_capacity(self.markets.len());
        for m in &mut self.markets {
            out.push(m.trading_period(
                self.scenario,
                slot,
                &payloads,
                meter_ops,
                &self.keys.gridop.0,
                &self.supplier_pks,
                pool,
                self.cfg.capture_partial_bills,
            )?);
        }
        Ok(out)
    }

    /// Close the billing period in every market.
    pub fn run_billing_period(&mut self) -> Result<Vec<BillingOutcome>, SimError> {
        let force = self.cfg.force_audit;
        self.markets.iter_mut().map(|m| m.billing_period(force)).collect()
    }

    /// Every slot of the scenario, then the billing period.
    pub fn run(mut self) -> Result<Vec<RunOutcome>, SimError> {
        for slot in 0..self.scenario.slots.len() {
            self.run_trading_period(slot)?;
        }
        let billing = self.run_billing_period()?;
        Ok(self
            .markets
            .into_iter()
            .zip(billing)
            .map(|(m, billing)| RunOutcome { model: m.model, slots: m.slots, billing, metrics: m.metrics })
            .collect())
    }
}

/// Convenience wrapper for a single model.
pub fn run_model(scenario: &Scenario, keys: &KeyRing, model: BillingModel, cfg: SimConfig) -> Result<RunOutcome, SimError> {
    let mut out = Simulation::new(scenario, keys, &[model], cfg)?.run()?;
    Ok(out.pop().expect("one market"))
}

/// Generate fresh keys, recording one KeyGen per holder in a setup period.
pub fn setup(scenario: &Scenario, bits: u32, seed: u64) -> Result<(KeyRing, PeriodMetrics), SimError> {
    let gridop = OpCounts::new();
    let suppliers: Vec<OpCounts> = scenario.suppliers.iter().map(|_| OpCounts::new()).collect();
    let refs: Vec<&OpCounts> = suppliers.iter().collect();
    let ring = KeyRing::generate_counted(bits, scenario.suppliers.len(), seed, Some(&gridop), &refs)?;
    let mut ops = BTreeMap::new();
    ops.insert(Entity::SmartMeters, OpSnapshot::default());
    ops.insert(Entity::Platform, OpSnapshot::default());
    ops.insert(Entity::GridOp, gridop.snapshot());
    for (id, c) in scenario.suppliers.iter().zip(&suppliers) {
        ops.insert(Entity::Supplier(*id), c.snapshot());
    }
    ops.insert(Entity::Regulator, OpSnapshot::default());
    Ok((ring, PeriodMetrics { kind: PeriodKind::Setup, slot: None, ops, traffic: BTreeMap::new() }))
}
