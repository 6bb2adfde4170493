//! Byte layouts of every protocol message. All integers are big-endian.
//!
//! ```text
//! ciphertext      = exponent:i32 | fingerprint:[u8;8] | value:[u8; 2·bits/8]
//! ct_field        = len:u32 | ciphertext
//! payload         = accepted:u8 | bid_type:i8 | net_type:i8 | indev_sign:i8 | 4 × ct_field
//! enc_aggregates  = 4 × ct_field              (c_under, c_over, p_under, p_over)
//! plain_aggregates= 4 × micro_kwh:i64
//! balance         = ct_field
//! final_bills     = count:u32 | count × (user:u32 | ct_field)
//! residue_report  = supplier:u32 | decimal
//! backup          = count:u32 | count × (supplier:u32 | ct_field | ct_field)
//! residues        = count:u32 | count × (supplier:u32 | decimal)
//! findings        = count:u32 | count × (supplier:u32 | reported:decimal | recomputed:decimal)
//! decimal         = exponent:i32 | len:u32 | mantissa:[u8; len] (two's complement)
//! ack             = 0x01
//! ```

use alloc::vec::Vec;
use core::fmt;

use num_bigint::{BigInt, BigUint};

use crate::billing::PlainAggregates;
use crate::decimal::{Decimal, Fixed};
use crate::market::{BidType, SupplierId, UserId};
use crate::meter::{MeterPayload, NetConsumption, Ternary};
use crate::phe::{value_bytes, Ciphertext, KeyFingerprint, PublicKey};
use crate::settlement::{AuditBackup, AuditFinding, EncryptedAggregates};

/// Exponent plus key fingerprint.
pub const CIPHERTEXT_HEADER_BYTES: usize = 12;
pub const LEN_PREFIX_BYTES: usize = 4;
pub const FLAG_BYTES: usize = 1;
pub const FLOAT_BYTES: usize = 8;
pub const ACK: [u8; 1] = [1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireError {
    Truncated,
    TrailingBytes,
    BadFlag,
    BadLength,
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WireError::Truncated => "message truncated",
            WireError::TrailingBytes => "trailing bytes after message",
            WireError::BadFlag => "invalid flag byte",
            WireError::BadLength => "invalid length field",
        })
    }
}

/// Serialized size of one ciphertext under `pk`, without a length prefix.
pub fn ciphertext_len(pk: &PublicKey) -> usize {
    CIPHERTEXT_HEADER_BYTES + pk.ciphertext_bytes()
}

/// Serialized size of a payload whose supplier and gridop ciphertext values
/// take `supplier_width` and `gridop_width` bytes.
pub fn payload_len(supplier_width: usize, gridop_width: usize) -> usize {
    let field = |width: usize| LEN_PREFIX_BYTES + CIPHERTEXT_HEADER_BYTES + width;
    4 * FLAG_BYTES + 2 * field(supplier_width) + 2 * field(gridop_width)
}

struct Writer(Vec<u8>);

impl Writer {
    fn new() -> Self {
        Writer(Vec::new())
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn ct(&mut self, c: &Ciphertext, width: usize) {
        let value = value_bytes(c, width);
        self.u32((CIPHERTEXT_HEADER_BYTES + value.len()) as u32);
        self.i32(c.exponent());
        self.0.extend_from_slice(&c.key().0);
        self.0.extend_from_slice(&value);
    }

    fn decimal(&mut self, d: &Decimal) {
        let m = d.mantissa().to_signed_bytes_be();
        self.i32(d.exponent());
        self.u32(m.len() as u32);
        self.0.extend_from_slice(&m);
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn i8(&mut self) -> Result<i8, WireError> {
        Ok(self.u8()? as i8)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32, WireError> {
        Ok(i32::from_be_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_be_bytes(self.array()?))
    }

    fn ct(&mut self) -> Result<Ciphertext, WireError> {
        let len = self.u32()? as usize;
        if len < CIPHERTEXT_HEADER_BYTES {
            return Err(WireError::BadLength);
        }
        let exponent = self.i32()?;
        let key = KeyFingerprint(self.array()?);
        let value = BigUint::from_bytes_be(self.take(len - CIPHERTEXT_HEADER_BYTES)?);
        Ok(Ciphertext::from_parts(value, exponent, key))
    }

    fn decimal(&mut self) -> Result<Decimal, WireError> {
        let exponent = self.i32()?;
        let len = self.u32()? as usize;
        let m = BigInt::from_signed_bytes_be(self.take(len)?);
        Ok(Decimal::new(m, exponent))
    }

    fn finish<T>(self, v: T) -> Result<T, WireError> {
        if self.0.is_empty() {
            Ok(v)
        } else {
            Err(WireError::TrailingBytes)
        }
    }
}

pub fn encode_payload(p: &MeterPayload, supplier_width: usize, gridop_width: usize) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(p.is_bid_accepted as u8);
    w.u8(p.bid_type.sign() as u8);
    w.u8(p.net_consumption_type.sign() as u8);
    w.u8(p.indev_sign.as_i8() as u8);
    w.ct(&p.committed_for_supplier, supplier_width);
    w.ct(&p.indev_for_supplier, supplier_width);
    w.ct(&p.committed_for_gridop, gridop_width);
    w.ct(&p.indev_for_gridop, gridop_width);
    w.0
}

pub fn decode_payload(bytes: &[u8]) -> Result<MeterPayload, WireError> {
    let mut r = Reader(bytes);
    let is_bid_accepted = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(WireError::BadFlag),
    };
    let bid_type = BidType::from_sign(r.i8()?).ok_or(WireError::BadFlag)?;
    let net_consumption_type = NetConsumption::from_sign(r.i8()?).ok_or(WireError::BadFlag)?;
    let indev_sign = Ternary::from_i8(r.i8()?).ok_or(WireError::BadFlag)?;
    let p = MeterPayload {
        is_bid_accepted,
        bid_type,
        net_consumption_type,
        indev_sign,
        committed_for_supplier: r.ct()?,
        indev_for_supplier: r.ct()?,
        committed_for_gridop: r.ct()?,
        indev_for_gridop: r.ct()?,
    };
    r.finish(p)
}

pub fn encode_enc_aggregates(a: &EncryptedAggregates, width: usize) -> Vec<u8> {
    let mut w = Writer::new();
    for c in a.as_array() {
        w.ct(c, width);
    }
    w.0
}

pub fn decode_enc_aggregates(bytes: &[u8]) -> Result<EncryptedAggregates, WireError> {
    let mut r = Reader(bytes);
    let a = EncryptedAggregates { t_c_under: r.ct()?, t_c_over: r.ct()?, t_p_under: r.ct()?, t_p_over: r.ct()? };
    r.finish(a)
}

pub fn encode_plain_aggregates(a: &PlainAggregates) -> Vec<u8> {
    let mut w = Writer::new();
    for v in [a.t_c_under, a.t_c_over, a.t_p_under, a.t_p_over] {
        w.i64(v.micros());
    }
    w.0
}

pub fn decode_plain_aggregates(bytes: &[u8]) -> Result<PlainAggregates, WireError> {
    let mut r = Reader(bytes);
    let mut v = [Fixed::ZERO; 4];
    for slot in &mut v {
        *slot = Fixed::from_micros(r.i64()?);
    }
    r.finish(PlainAggregates::new(v[0], v[1], v[2], v[3]))
}

pub fn encode_balance(c: &Ciphertext, width: usize) -> Vec<u8> {
    let mut w = Writer::new();
    w.ct(c, width);
    w.0
}

pub fn decode_balance(bytes: &[u8]) -> Result<Ciphertext, WireError> {
    let mut r = Reader(bytes);
    let c = r.ct()?;
    r.finish(c)
}

pub fn encode_final_bills(bills: &[(UserId, Ciphertext)], width: usize) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(bills.len() as u32);
    for (user, c) in bills {
        w.u32(user.0);
        w.ct(c, width);
    }
    w.0
}

pub fn decode_final_bills(bytes: &[u8]) -> Result<Vec<(UserId, Ciphertext)>, WireError> {
    let mut r = Reader(bytes);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let user = UserId(r.u32()?);
        out.push((user, r.ct()?));
    }
    r.finish(out)
}

pub fn encode_residue(supplier: SupplierId, residue: &Decimal) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(supplier.0);
    w.decimal(residue);
    w.0
}

pub fn decode_residue(bytes: &[u8]) -> Result<(SupplierId, Decimal), WireError> {
    let mut r = Reader(bytes);
    let s = SupplierId(r.u32()?);
    let d = r.decimal()?;
    r.finish((s, d))
}

pub fn encode_backup(backups: &[AuditBackup], width: usize) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(backups.len() as u32);
    for b in backups {
        w.u32(b.supplier.0);
        w.ct(&b.bills_total, width);
        w.ct(&b.balance_total, width);
    }
    w.0
}

pub fn decode_backup(bytes: &[u8]) -> Result<Vec<AuditBackup>, WireError> {
    let mut r = Reader(bytes);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let supplier = SupplierId(r.u32()?);
        out.push(AuditBackup { supplier, bills_total: r.ct()?, balance_total: r.ct()? });
    }
    r.finish(out)
}

pub fn encode_residues(residues: &[(SupplierId, Decimal)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(residues.len() as u32);
    for (s, d) in residues {
        w.u32(s.0);
        w.decimal(d);
    }
    w.0
}

pub fn decode_residues(bytes: &[u8]) -> Result<Vec<(SupplierId, Decimal)>, WireError> {
    let mut r = Reader(bytes);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let s = SupplierId(r.u32()?);
        out.push((s, r.decimal()?));
    }
    r.finish(out)
}

pub fn encode_findings(findings: &[AuditFinding]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(findings.len() as u32);
    for f in findings {
        w.u32(f.supplier.0);
        w.decimal(&f.reported);
        w.decimal(&f.recomputed);
    }
    w.0
}

pub fn decode_findings(bytes: &[u8]) -> Result<Vec<AuditFinding>, WireError> {
    let mut r = Reader(bytes);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let supplier = SupplierId(r.u32()?);
        out.push(AuditFinding { supplier, reported: r.decimal()?, recomputed: r.decimal()? });
    }
    r.finish(out)
}
