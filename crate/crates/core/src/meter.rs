//! Smart-meter side of a trading slot: split the reading into committed
//! volume and individual deviation, derive the plaintext flags, and encrypt
//! both volumes under the supplier's and the grid operator's keys.

use rand::{CryptoRng, RngCore};

use crate::counters::{Op, OpCounts};
use crate::decimal::Fixed;
use crate::market::{BidType, SlotTruth};
use crate::phe::{Ciphertext, PheError, PublicKey};

/// Sign of a value with zero kept distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ternary {
    Negative,
    Zero,
    Positive,
}

impl Ternary {
    pub fn of(value: Fixed) -> Self {
        match value.signum() {
            -1 => Ternary::Negative,
            0 => Ternary::Zero,
            _ => Ternary::Positive,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Ternary::Negative => -1,
            Ternary::Zero => 0,
            Ternary::Positive => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Ternary::Negative),
            0 => Some(Ternary::Zero),
            1 => Some(Ternary::Positive),
            _ => None,
        }
    }
}

/// Whether the household ended the slot importing (+1) or exporting (-1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetConsumption {
    Buyer,
    Seller,
}

impl NetConsumption {
    /// A reading of exactly zero counts as a net buyer.
    pub fn of(reading: Fixed) -> Self {
        if reading.is_negative() {
            NetConsumption::Seller
        } else {
            NetConsumption::Buyer
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            NetConsumption::Buyer => 1,
            NetConsumption::Seller => -1,
        }
    }

    pub fn from_sign(v: i8) -> Option<Self> {
        match v {
            1 => Some(NetConsumption::Buyer),
            -1 => Some(NetConsumption::Seller),
            _ => None,
        }
    }
}

/// The eight-field message a meter sends each slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeterPayload {
    pub is_bid_accepted: bool,
    pub bid_type: BidType,
    pub net_consumption_type: NetConsumption,
    pub indev_sign: Ternary,
    /// `{U^x_P2P}` under the supplier key.
    pub committed_for_supplier: Ciphertext,
    /// `{InDev_x}` under the supplier key.
    pub indev_for_supplier: Ciphertext,
    /// `{U^x_P2P}` under the grid operator key.
    pub committed_for_gridop: Ciphertext,
    /// `{InDev_x}` under the grid operator key.
    pub indev_for_gridop: Ciphertext,
}

impl MeterPayload {
    pub const FLAG_COUNT: usize = 4;
    pub const CIPHERTEXT_COUNT: usize = 4;

    pub fn ciphertexts(&self) -> [&Ciphertext; 4] {
        [
            &self.committed_for_supplier,
            &self.indev_for_supplier,
            &self.committed_for_gridop,
            &self.indev_for_gridop,
        ]
    }
}

/// `bid_type · reading − committed`.
pub fn individual_deviation(bid_type: BidType, reading: Fixed, committed: Fixed) -> Fixed {
    let oriented = match bid_type {
        BidType::Buy => reading,
        BidType::Sell => -reading,
    };
    oriented - committed
}

/// Build the slot payload. Performs exactly four encryptions.
pub fn build_payload<R: RngCore + CryptoRng + ?Sized>(
    truth: &SlotTruth,
    supplier_pk: &PublicKey,
    gridop_pk: &PublicKey,
    rng: &mut R,
    counts: &OpCounts,
) -> Result<MeterPayload, PheError> {
    let deviation = individual_deviation(truth.bid_type, truth.reading, truth.committed);

    let committed_s = supplier_pk.encode_fixed(truth.committed)?;
    let deviation_s = supplier_pk.encode_fixed(deviation)?;
    let committed_g = gridop_pk.encode_fixed(truth.committed)?;
    let deviation_g = gridop_pk.encode_fixed(deviation)?;

    let payload = MeterPayload {
        is_bid_accepted: truth.bid_accepted,
        bid_type: truth.bid_type,
        net_consumption_type: NetConsumption::of(truth.reading),
        indev_sign: Ternary::of(deviation),
        committed_for_supplier: supplier_pk.encrypt(&committed_s, rng),
        indev_for_supplier: supplier_pk.encrypt(&deviation_s, rng),
        committed_for_gridop: gridop_pk.encrypt(&committed_g, rng),
        indev_for_gridop: gridop_pk.encrypt(&deviation_g, rng),
    };
    counts.record_n(Op::HomoEnc, 4);
    Ok(payload)
}
