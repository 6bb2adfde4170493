//! Partial-bill calculation for the four billing models.
//!
//! The platform only sees plaintext flags, decrypted market aggregates and
//! ciphertexts. For every user it derives a [`BillPlan`]: three linear forms
//! `a·U_P2P + b·InDev` giving the account delta and the supplier's income and
//! expenditure contributions. The plan is then evaluated homomorphically.
//!
//! Account deltas are signed: positive means the user owes its supplier,
//! negative means the user is owed (a reward).
//!
//! [`oracle_slot`] recomputes the same quantities from the unencrypted slot
//! truths in exact rational arithmetic, phrased as volumes traded at TP, RP
//! and FiT, and serves as ground truth for the encrypted path.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::counters::{Op, OpCounts};
use crate::decimal::{Decimal, Fixed, FIXED_EXPONENT};
use crate::market::{BidType, PriceSchedule, Scenario, SlotTruth, UserId};
use crate::meter::{MeterPayload, NetConsumption, Ternary};
use crate::phe::{Ciphertext, EncodedNumber, PheError, PublicKey};

/// Grid on which cost-split ratios are quantized before use.
pub const RATIO_EXPONENT: i32 = -12;
/// Grid of every plaintext bill coefficient (price times ratio).
pub const COEFF_EXPONENT: i32 = RATIO_EXPONENT + FIXED_EXPONENT;
/// Exponent of every bill, income, expenditure and balance ciphertext.
pub const BILL_EXPONENT: i32 = COEFF_EXPONENT + FIXED_EXPONENT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BillingModel {
    StatusQuo,
    Individual,
    Social,
    Universal,
}

impl BillingModel {
    pub const ALL: [BillingModel; 4] = [
        BillingModel::StatusQuo,
        BillingModel::Individual,
        BillingModel::Social,
        BillingModel::Universal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BillingModel::StatusQuo => "status_quo",
            BillingModel::Individual => "individual",
            BillingModel::Social => "social",
            BillingModel::Universal => "universal",
        }
    }

    /// Whether bills depend on the decrypted market aggregates, so the
    /// platform must wait for the grid operator before billing.
    pub fn needs_aggregates(self) -> bool {
        matches!(self, BillingModel::Social | BillingModel::Universal)
    }
}

impl fmt::Display for BillingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownModel;

impl fmt::Display for UnknownModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of status_quo, individual, social, universal")
    }
}

impl FromStr for BillingModel {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "status_quo" | "sq" => Ok(BillingModel::StatusQuo),
            "individual" | "ind" => Ok(BillingModel::Individual),
            "social" | "soc" => Ok(BillingModel::Social),
            "universal" | "univ" => Ok(BillingModel::Universal),
            _ => Err(UnknownModel),
        }
    }
}

/// Which key a billing run operates under. Every slot is billed once per
/// domain: the supplier-keyed run feeds the suppliers, the gridop-keyed run
/// is kept as the audit backup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KeyDomain {
    Supplier,
    GridOp,
}

impl KeyDomain {
    pub const BOTH: [KeyDomain; 2] = [KeyDomain::Supplier, KeyDomain::GridOp];

    /// The (committed, deviation) ciphertext pair this domain reads.
    pub fn select(self, p: &MeterPayload) -> (&Ciphertext, &Ciphertext) {
        match self {
            KeyDomain::Supplier => (&p.committed_for_supplier, &p.indev_for_supplier),
            KeyDomain::GridOp => (&p.committed_for_gridop, &p.indev_for_gridop),
        }
    }
}

/// Public keys for one billing domain.
#[derive(Debug, Clone, Copy)]
pub enum DomainKeys<'a> {
    /// Indexed by supplier position in the scenario.
    Supplier(&'a [PublicKey]),
    GridOp(&'a PublicKey),
}

impl<'a> DomainKeys<'a> {
    pub fn domain(&self) -> KeyDomain {
        match self {
            DomainKeys::Supplier(_) => KeyDomain::Supplier,
            DomainKeys::GridOp(_) => KeyDomain::GridOp,
        }
    }

    pub fn key_for(&self, supplier: usize) -> Option<&'a PublicKey> {
        match *self {
            DomainKeys::Supplier(keys) => keys.get(supplier),
            DomainKeys::GridOp(key) => Some(key),
        }
    }
}

/// Decrypted market statistics, all magnitudes in kWh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlainAggregates {
    pub t_c_under: Fixed,
    pub t_c_over: Fixed,
    pub t_p_under: Fixed,
    pub t_p_over: Fixed,
}

impl PlainAggregates {
    pub fn new(t_c_under: Fixed, t_c_over: Fixed, t_p_under: Fixed, t_p_over: Fixed) -> Self {
        PlainAggregates { t_c_under, t_c_over, t_p_under, t_p_over }
    }

    /// Plaintext reference: sum the deviations of accepted P2P bids.
    pub fn from_deviations<I: IntoIterator<Item = (BidType, Fixed)>>(devs: I) -> Self {
        let mut a = PlainAggregates::default();
        for (bid, dev) in devs {
            match (bid, dev.signum()) {
                (BidType::Buy, -1) => a.t_c_under += -dev,
                (BidType::Buy, 1) => a.t_c_over += dev,
                (BidType::Sell, -1) => a.t_p_under += -dev,
                (BidType::Sell, 1) => a.t_p_over += dev,
                _ => {}
            }
        }
        a
    }

    pub fn from_truths(truths: &[SlotTruth]) -> Self {
        Self::from_deviations(
            truths
                .iter()
                .filter(|t| t.bid_accepted)
                .map(|t| (t.bid_type, t.deviation())),
        )
    }

    /// Total demand deviation.
    pub fn tdd(&self) -> Fixed {
        self.t_c_over - self.t_c_under
    }

    /// Total supply deviation.
    pub fn tsd(&self) -> Fixed {
        self.t_p_over - self.t_p_under
    }

    /// Total deviation, `TSD − TDD = T_up − T_down`.
    pub fn td(&self) -> Fixed {
        self.tsd() - self.tdd()
    }

    /// Volume pushing the grid into surplus: under-consumption plus over-supply.
    pub fn t_up(&self) -> Fixed {
        self.t_c_under + self.t_p_over
    }

    /// Volume pushing the grid into deficit: over-consumption plus under-supply.
    pub fn t_down(&self) -> Fixed {
        self.t_c_over + self.t_p_under
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BillingError {
    Phe(PheError),
    /// Social and universal billing need the decrypted aggregates.
    MissingAggregates(BillingModel),
    /// A branch was reached whose ratio denominator is zero; only possible
    /// if the aggregates do not belong to the payloads.
    InconsistentAggregates,
    UnknownSupplier(usize),
}

impl fmt::Display for BillingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BillingError::Phe(e) => write!(f, "{e}"),
            BillingError::MissingAggregates(m) => write!(f, "{m} billing needs decrypted market aggregates"),
            BillingError::InconsistentAggregates => f.write_str("aggregates inconsistent with payload flags"),
            BillingError::UnknownSupplier(k) => write!(f, "no key for supplier index {k}"),
        }
    }
}

impl From<PheError> for BillingError {
    fn from(e: PheError) -> Self {
        BillingError::Phe(e)
    }
}

/// `committed · U_P2P + deviation · InDev`, coefficients on [`COEFF_EXPONENT`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub committed: Decimal,
    pub deviation: Decimal,
}

impl Linear {
    pub fn zero() -> Self {
        Linear { committed: Decimal::zero(), deviation: Decimal::zero() }
    }

    fn new(committed: Decimal, deviation: Decimal) -> Self {
        Linear { committed: on_grid(&committed), deviation: on_grid(&deviation) }
    }

    fn deviation_only(deviation: Decimal) -> Self {
        Linear::new(Decimal::zero(), deviation)
    }

    pub fn is_zero(&self) -> bool {
        self.committed.is_zero() && self.deviation.is_zero()
    }

    fn negated(&self) -> Linear {
        Linear {
            committed: -self.committed.clone(),
            deviation: -self.deviation.clone(),
        }
    }

    /// Exact plaintext evaluation.
    pub fn eval(&self, committed: Fixed, deviation: Fixed) -> Decimal {
        &(&self.committed * &committed.to_decimal()) + &(&self.deviation * &deviation.to_decimal())
    }
}

fn on_grid(d: &Decimal) -> Decimal {
    d.rescale(COEFF_EXPONENT).expect("bill coefficients are never finer than the coefficient grid")
}

/// Per-user bill recipe for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BillPlan {
    pub delta: Linear,
    pub income: Linear,
    pub expenditure: Linear,
}

/// The plaintext fields of a payload that billing may branch on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BillFlags {
    pub is_bid_accepted: bool,
    pub bid_type: BidType,
    pub net_consumption_type: NetConsumption,
    pub indev_sign: Ternary,
}

impl From<&MeterPayload> for BillFlags {
    fn from(p: &MeterPayload) -> Self {
        BillFlags {
            is_bid_accepted: p.is_bid_accepted,
            bid_type: p.bid_type,
            net_consumption_type: p.net_consumption_type,
            indev_sign: p.indev_sign,
        }
    }
}

fn price(p: Fixed) -> Decimal {
    p.to_decimal()
}

fn one() -> Decimal {
    Decimal::from_int(1)
}

fn ratio(num: Fixed, den: Fixed) -> Result<Decimal, BillingError> {
    if den.is_zero() {
        return Err(BillingError::InconsistentAggregates);
    }
    Ok(Decimal::quantized_ratio(&num.to_decimal(), &den.to_decimal(), RATIO_EXPONENT))
}

/// `r·TP + (1 − r)·other`, and `(1 − r)·other`.
fn blended(r: &Decimal, tp: Fixed, other: Fixed) -> (Decimal, Decimal) {
    let rest = &(&one() - r) * &price(other);
    (&(r * &price(tp)) + &rest, rest)
}

/// Retail fallback: rejected bids, non-P2P users and the status quo model.
fn plan_status_quo(f: &BillFlags, s: &PriceSchedule) -> BillPlan {
    // U_val = U_P2P + InDev, negated when the meter ran against the bid.
    let flip = if f.net_consumption_type.sign() == f.bid_type.sign() { one() } else { -one() };
    match f.net_consumption_type {
        NetConsumption::Buyer => {
            let k = &flip * &price(s.rp);
            let bill = Linear::new(k.clone(), k);
            BillPlan { income: bill.clone(), expenditure: Linear::zero(), delta: bill }
        }
        NetConsumption::Seller => {
            let k = &flip * &price(s.fit);
            let reward = Linear::new(k.clone(), k);
            BillPlan { delta: reward.negated(), income: Linear::zero(), expenditure: reward }
        }
    }
}

fn plan_individual(f: &BillFlags, s: &PriceSchedule) -> BillPlan {
    let tp = price(s.tp);
    match (f.bid_type, f.indev_sign) {
        (BidType::Buy, Ternary::Zero) => BillPlan::trade(Linear::new(tp, Decimal::zero())),
        (BidType::Buy, Ternary::Positive) => BillPlan {
            delta: Linear::new(tp, price(s.rp)),
            income: Linear::deviation_only(price(s.rp)),
            expenditure: Linear::zero(),
        },
        (BidType::Buy, Ternary::Negative) => BillPlan {
            delta: Linear::new(tp, price(s.fit)),
            income: Linear::zero(),
            expenditure: Linear::deviation_only(-price(s.fit)),
        },
        (BidType::Sell, Ternary::Zero) => BillPlan::trade(Linear::new(-tp, Decimal::zero())),
        (BidType::Sell, Ternary::Negative) => BillPlan {
            delta: Linear::new(-tp, -price(s.rp)),
            income: Linear::deviation_only(-price(s.rp)),
            expenditure: Linear::zero(),
        },
        (BidType::Sell, Ternary::Positive) => BillPlan {
            delta: Linear::new(-tp, -price(s.fit)),
            income: Linear::zero(),
            expenditure: Linear::deviation_only(price(s.fit)),
        },
    }
}

impl BillPlan {
    /// Pure P2P trade at TP, no supplier involvement.
    fn trade(delta: Linear) -> Self {
        BillPlan { delta, income: Linear::zero(), expenditure: Linear::zero() }
    }

    /// Actual reading traded at TP.
    fn actual_at_tp(bid: BidType, s: &PriceSchedule) -> Self {
        let k = match bid {
            BidType::Buy => price(s.tp),
            BidType::Sell => -price(s.tp),
        };
        BillPlan::trade(Linear::new(k.clone(), k))
    }

    /// Deficit side: a fraction `r` of the deviation is covered at TP, the
    /// rest is bought from the supplier at RP.
    fn deficit_share(bid: BidType, r: &Decimal, s: &PriceSchedule) -> Self {
        let (coef, rm) = blended(r, s.tp, s.rp);
        match bid {
            BidType::Buy => BillPlan {
                delta: Linear::new(price(s.tp), coef),
                income: Linear::deviation_only(rm),
                expenditure: Linear::zero(),
            },
            BidType::Sell => BillPlan {
                delta: Linear::new(-price(s.tp), -coef),
                income: Linear::deviation_only(-rm),
                expenditure: Linear::zero(),
            },
        }
    }

    /// Surplus side: a fraction `r` of the deviation is absorbed at TP, the
    /// rest is sold to the supplier at FiT.
    fn surplus_share(bid: BidType, r: &Decimal, s: &PriceSchedule) -> Self {
        let (coef, rm) = blended(r, s.tp, s.fit);
        match bid {
            BidType::Buy => BillPlan {
                delta: Linear::new(price(s.tp), coef),
                income: Linear::zero(),
                expenditure: Linear::deviation_only(-rm),
            },
            BidType::Sell => BillPlan {
                delta: Linear::new(-price(s.tp), -coef),
                income: Linear::zero(),
                expenditure: Linear::deviation_only(rm),
            },
        }
    }
}

fn plan_social(f: &BillFlags, s: &PriceSchedule, a: &PlainAggregates) -> Result<BillPlan, BillingError> {
    let (under, over, total) = match f.bid_type {
        BidType::Buy => (a.t_c_under, a.t_c_over, a.tdd()),
        BidType::Sell => (a.t_p_under, a.t_p_over, a.tsd()),
    };
    let dev = f.indev_sign;
    Ok(match (f.bid_type, total.signum()) {
        // Consumers over-consumed as a group: over-consumers split the deficit.
        (BidType::Buy, 1) if dev == Ternary::Positive => BillPlan::deficit_share(BidType::Buy, &ratio(under, over)?, s),
        // Consumers under-consumed as a group: under-consumers split the surplus.
        (BidType::Buy, -1) if dev == Ternary::Negative => BillPlan::surplus_share(BidType::Buy, &ratio(over, under)?, s),
        (BidType::Sell, -1) if dev == Ternary::Negative => BillPlan::deficit_share(BidType::Sell, &ratio(over, under)?, s),
        (BidType::Sell, 1) if dev == Ternary::Positive => BillPlan::surplus_share(BidType::Sell, &ratio(under, over)?, s),
        _ => BillPlan::actual_at_tp(f.bid_type, s),
    })
}

fn plan_universal(f: &BillFlags, s: &PriceSchedule, a: &PlainAggregates) -> Result<BillPlan, BillingError> {
    let (up, down) = (a.t_up(), a.t_down());
    let downtrender = matches!(
        (f.bid_type, f.indev_sign),
        (BidType::Buy, Ternary::Positive) | (BidType::Sell, Ternary::Negative)
    );
    let uptrender = matches!(
        (f.bid_type, f.indev_sign),
        (BidType::Buy, Ternary::Negative) | (BidType::Sell, Ternary::Positive)
    );
    Ok(match a.td().signum() {
        -1 if downtrender => BillPlan::deficit_share(f.bid_type, &ratio(up, down)?, s),
        1 if uptrender => BillPlan::surplus_share(f.bid_type, &ratio(down, up)?, s),
        _ => BillPlan::actual_at_tp(f.bid_type, s),
    })
}

/// Derive a user's bill recipe from plaintext flags only.
pub fn plan(
    model: BillingModel,
    flags: &BillFlags,
    schedule: &PriceSchedule,
    aggregates: Option<&PlainAggregates>,
) -> Result<BillPlan, BillingError> {
    if model == BillingModel::StatusQuo || !flags.is_bid_accepted {
        return Ok(plan_status_quo(flags, schedule));
    }
    match model {
        BillingModel::StatusQuo => unreachable!(),
        BillingModel::Individual => Ok(plan_individual(flags, schedule)),
        BillingModel::Social => {
            let a = aggregates.ok_or(BillingError::MissingAggregates(model))?;
            plan_social(flags, schedule, a)
        }
        BillingModel::Universal => {
            let a = aggregates.ok_or(BillingError::MissingAggregates(model))?;
            plan_universal(flags, schedule, a)
        }
    }
}

/// One user's encrypted partial bill and its supplier-side contributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserBill {
    pub delta: Ciphertext,
    pub income: Option<Ciphertext>,
    pub expenditure: Option<Ciphertext>,
}

fn eval_linear(
    pk: &PublicKey,
    lin: &Linear,
    committed: &Ciphertext,
    deviation: &Ciphertext,
) -> Result<Option<Ciphertext>, PheError> {
    let mut scalars = Vec::with_capacity(2);
    for (coef, ct) in [(&lin.committed, committed), (&lin.deviation, deviation)] {
        if !coef.is_zero() {
            scalars.push((ct, pk.encode(coef, COEFF_EXPONENT)?));
        }
    }
    let terms: Vec<(&Ciphertext, &EncodedNumber)> = scalars.iter().map(|(c, k)| (*c, k)).collect();
    pk.dot_plain(&terms)
}

/// Evaluate a plan over one user's ciphertexts. Counts as one BillCalc.
pub fn bill_user(
    pk: &PublicKey,
    plan: &BillPlan,
    committed: &Ciphertext,
    deviation: &Ciphertext,
    counts: &OpCounts,
) -> Result<UserBill, PheError> {
    let delta = eval_linear(pk, &plan.delta, committed, deviation)?.unwrap_or_else(|| pk.zero(BILL_EXPONENT));
    let side = |lin: &Linear| -> Result<Option<Ciphertext>, PheError> {
        if lin.is_zero() {
            Ok(None)
        } else if *lin == plan.delta {
            Ok(Some(delta.clone()))
        } else if lin.negated() == plan.delta {
            Ok(Some(pk.neg(&delta)?))
        } else {
            eval_linear(pk, lin, committed, deviation)
        }
    };
    let income = side(&plan.income)?;
    let expenditure = side(&plan.expenditure)?;
    counts.record(Op::BillCalc);
    Ok(UserBill { delta, income, expenditure })
}

/// One user's slot input to the platform.
#[derive(Debug, Clone, Copy)]
pub struct BillingInput<'a> {
    pub user: UserId,
    /// Supplier position in the scenario.
    pub supplier: usize,
    pub payload: &'a MeterPayload,
}

/// Everything one billing run produces for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotBillOutput {
    pub domain: KeyDomain,
    /// Per user, in input order.
    pub bills: Vec<(UserId, Ciphertext)>,
    /// Per supplier, indexed by supplier position.
    pub income: Vec<Ciphertext>,
    pub expenditure: Vec<Ciphertext>,
    pub balance: Vec<Ciphertext>,
}

impl SlotBillOutput {
    /// Fold per-user bills into per-supplier income, expenditure and balance.
    pub fn assemble(
        keys: DomainKeys<'_>,
        n_suppliers: usize,
        inputs: &[BillingInput<'_>],
        user_bills: Vec<UserBill>,
    ) -> Result<Self, BillingError> {
        let mut income = Vec::with_capacity(n_suppliers);
        let mut expenditure = Vec::with_capacity(n_suppliers);
        for k in 0..n_suppliers {
            let pk = keys.key_for(k).ok_or(BillingError::UnknownSupplier(k))?;
            income.push(pk.zero(BILL_EXPONENT));
            expenditure.push(pk.zero(BILL_EXPONENT));
        }
        let mut bills = Vec::with_capacity(inputs.len());
        for (input, ub) in inputs.iter().zip(user_bills) {
            let k = input.supplier;
            let pk = keys.key_for(k).ok_or(BillingError::UnknownSupplier(k))?;
            if k >= n_suppliers {
                return Err(BillingError::UnknownSupplier(k));
            }
            if let Some(c) = &ub.income {
                income[k] = pk.add(&income[k], c)?;
            }
            if let Some(c) = &ub.expenditure {
                expenditure[k] = pk.add(&expenditure[k], c)?;
            }
            bills.push((input.user, ub.delta));
        }
        let mut balance = Vec::with_capacity(n_suppliers);
        for k in 0..n_suppliers {
            let pk = keys.key_for(k).ok_or(BillingError::UnknownSupplier(k))?;
            balance.push(pk.sub(&income[k], &expenditure[k])?);
        }
        Ok(SlotBillOutput { domain: keys.domain(), bills, income, expenditure, balance })
    }
}

/// Bill every user of a slot under one key domain, sequentially.
pub fn bill_slot(
    model: BillingModel,
    inputs: &[BillingInput<'_>],
    schedule: &PriceSchedule,
    aggregates: Option<&PlainAggregates>,
    keys: DomainKeys<'_>,
    n_suppliers: usize,
    counts: &OpCounts,
) -> Result<SlotBillOutput, BillingError> {
    let domain = keys.domain();
    let mut user_bills = Vec::with_capacity(inputs.len());
    for input in inputs {
        let pk = keys.key_for(input.supplier).ok_or(BillingError::UnknownSupplier(input.supplier))?;
        let p = plan(model, &BillFlags::from(input.payload), schedule, aggregates)?;
        let (c, d) = domain.select(input.payload);
        user_bills.push(bill_user(pk, &p, c, d, counts)?);
    }
    SlotBillOutput::assemble(keys, n_suppliers, inputs, user_bills)
}

/// Volume traded with suppliers in one slot, per the model's closed form.
///
/// Status quo counts every reading. The P2P models count accepted bids only;
/// rejected and non-P2P users fall back to retail and are not included.
pub fn rm_volume(model: BillingModel, truths: &[SlotTruth]) -> Fixed {
    if model == BillingModel::StatusQuo {
        return truths.iter().map(|t| t.reading.abs()).sum();
    }
    p2p_rm_volume(
        model,
        truths.iter().filter(|t| t.bid_accepted).map(|t| (t.bid_type, t.deviation())),
    )
}

/// RM volume of the P2P models over `(bid type, deviation)` pairs.
pub fn p2p_rm_volume<I: IntoIterator<Item = (BidType, Fixed)>>(model: BillingModel, devs: I) -> Fixed {
    let devs: Vec<(BidType, Fixed)> = devs.into_iter().collect();
    match model {
        BillingModel::StatusQuo | BillingModel::Individual => devs.iter().map(|(_, d)| d.abs()).sum(),
        BillingModel::Social => {
            let a = PlainAggregates::from_deviations(devs);
            a.tdd().abs() + a.tsd().abs()
        }
        BillingModel::Universal => PlainAggregates::from_deviations(devs).td().abs(),
    }
}

/// Exact plaintext outcome of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSlot {
    pub deltas: BTreeMap<UserId, BigRational>,
    /// Per supplier position.
    pub balances: Vec<BigRational>,
    /// Energy bought from plus sold to suppliers, all users.
    pub rm_volume: BigRational,
    /// The part of `rm_volume` caused by accepted P2P bids.
    pub p2p_rm_volume: BigRational,
    /// Net value of trades at TP across all users; zero on a cleared market.
    pub p2p_net: BigRational,
}

/// Volumes one user trades in a slot. Positive `tp` means bought at TP.
struct Trades {
    tp: BigRational,
    rm_buy: BigRational,
    rm_sell: BigRational,
}

fn q(f: Fixed) -> BigRational {
    f.to_rational()
}

fn retail(reading: &BigRational) -> Trades {
    let zero = BigRational::zero();
    if reading.is_negative() {
        Trades { tp: zero.clone(), rm_buy: zero, rm_sell: -reading }
    } else {
        Trades { tp: zero.clone(), rm_buy: reading.clone(), rm_sell: zero }
    }
}

/// Trades of an accepted bid. `committed` and `dev` point in the bid's
/// direction: volume bought for a consumer, volume sold for a prosumer.
fn p2p_trades(model: BillingModel, bid: BidType, committed: &BigRational, dev: &BigRational, agg: &ExactAggregates) -> Trades {
    // A consumer over-consuming or a prosumer under-supplying pulls the grid
    // towards deficit.
    let deficit_side = match bid {
        BidType::Buy => dev.is_positive(),
        BidType::Sell => dev.is_negative(),
    };
    let (in_market, rm_buy, rm_sell) = match model {
        BillingModel::StatusQuo => unreachable!("status quo bills every user at retail"),
        BillingModel::Individual => {
            let zero = BigRational::zero();
            if deficit_side {
                (zero.clone(), dev.abs(), zero)
            } else {
                (zero.clone(), zero, dev.abs())
            }
        }
        BillingModel::Social => {
            let (surplus, deficit) = match bid {
                BidType::Buy => (&agg.c_under, &agg.c_over),
                BidType::Sell => (&agg.p_over, &agg.p_under),
            };
            weighted_split(dev, deficit_side, surplus, deficit)
        }
        BillingModel::Universal => weighted_split(dev, deficit_side, &agg.t_up(), &agg.t_down()),
    };
    let market = committed + &in_market;
    let tp = match bid {
        BidType::Buy => market,
        BidType::Sell => -market,
    };
    Trades { tp, rm_buy, rm_sell }
}

/// Proportional split shared by the social and universal models. Returns
/// `(deviation settled in-market, bought at RP, sold at FiT)`.
///
/// `surplus` and `deficit` are the pooled magnitudes on either side. When
/// the pool leans one way, users on that side get their deviation matched
/// in-market in proportion `other side / own side` and trade the remainder
/// with their supplier. Everyone else settles their whole deviation at TP.
fn weighted_split(
    dev: &BigRational,
    deficit_side: bool,
    surplus: &BigRational,
    deficit: &BigRational,
) -> (BigRational, BigRational, BigRational) {
    let zero = BigRational::zero();
    if dev.is_zero() || surplus == deficit {
        return (dev.clone(), zero.clone(), zero);
    }
    let leaning_deficit = deficit > surplus;
    if leaning_deficit && deficit_side {
        let matched = dev * (surplus / deficit);
        let rest = (dev - &matched).abs();
        (matched, rest, zero)
    } else if !leaning_deficit && !deficit_side {
        let matched = dev * (deficit / surplus);
        let rest = (dev - &matched).abs();
        (matched, zero, rest)
    } else {
        (dev.clone(), zero.clone(), zero)
    }
}

struct ExactAggregates {
    c_under: BigRational,
    c_over: BigRational,
    p_under: BigRational,
    p_over: BigRational,
}

impl ExactAggregates {
    fn t_up(&self) -> BigRational {
        &self.c_under + &self.p_over
    }

    fn t_down(&self) -> BigRational {
        &self.c_over + &self.p_under
    }
}

/// Exact plaintext billing of one slot from the unencrypted truths.
pub fn oracle_slot(model: BillingModel, scenario: &Scenario, truths: &[SlotTruth]) -> OracleSlot {
    let s = &scenario.schedule;
    let (tp, rp, fit) = (q(s.tp), q(s.rp), q(s.fit));
    let zero = BigRational::zero();

    let mut agg = ExactAggregates { c_under: zero.clone(), c_over: zero.clone(), p_under: zero.clone(), p_over: zero.clone() };
    for t in truths.iter().filter(|t| t.bid_accepted) {
        let dev = match t.bid_type {
            BidType::Buy => q(t.reading) - q(t.committed),
            BidType::Sell => -q(t.reading) - q(t.committed),
        };
        let slot = match (t.bid_type, dev.is_positive()) {
            (BidType::Buy, true) => &mut agg.c_over,
            (BidType::Buy, false) => &mut agg.c_under,
            (BidType::Sell, true) => &mut agg.p_over,
            (BidType::Sell, false) => &mut agg.p_under,
        };
        *slot += dev.abs();
    }

    let mut deltas = BTreeMap::new();
    let mut balances = alloc::vec![zero.clone(); scenario.suppliers.len()];
    let mut rm_volume = zero.clone();
    let mut p2p_rm_volume = zero.clone();
    let mut p2p_net = zero.clone();
    for t in truths {
        let reading = q(t.reading);
        let p2p = model != BillingModel::StatusQuo && t.bid_accepted;
        let trades = if p2p {
            let dev = match t.bid_type {
                BidType::Buy => &reading - q(t.committed),
                BidType::Sell => -&reading - q(t.committed),
            };
            p2p_trades(model, t.bid_type, &q(t.committed), &dev, &agg)
        } else {
            retail(&reading)
        };
        let supplier_take = &(&trades.rm_buy * &rp) - &(&trades.rm_sell * &fit);
        let delta = &(&trades.tp * &tp) + &supplier_take;
        let volume = &trades.rm_buy + &trades.rm_sell;
        if p2p {
            p2p_rm_volume += &volume;
        }
        rm_volume += volume;
        p2p_net += &trades.tp * &tp;
        if let Some(k) = scenario.user(t.user).and_then(|u| scenario.supplier_index(u.supplier)) {
            balances[k] += supplier_take;
        }
        deltas.insert(t.user, delta);
    }
    OracleSlot { deltas, balances, rm_volume, p2p_rm_volume, p2p_net }
}

/// Rational value of a decimal, for comparisons against the oracle.
pub fn rational(d: &Decimal) -> BigRational {
    d.to_rational()
}

/// `|a − b| ≤ 10^-6`.
pub fn within_micro(a: &BigRational, b: &BigRational) -> bool {
    (a - b).abs() <= BigRational::new(BigInt::from(1), BigInt::from(1_000_000))
}
