//! Paillier additively homomorphic encryption over signed base-10
//! fixed-point plaintexts.
//!
//! Plaintexts live in `Z_n`. A signed value `v` at exponent `e` is stored as
//! the mantissa `round(v · 10^-e)` reduced mod `n`: non-negative mantissas sit
//! in the lower third of `Z_n`, negative ones in the upper third, and the
//! middle third is reserved so that arithmetic which outgrows the key
//! decodes to an error rather than to a wrong number.
//!
//! The generator is fixed to `g = n + 1`, so `g^m mod n² = 1 + m·n`.

use alloc::vec::Vec;
use core::fmt;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::decimal::{pow10, Decimal, Fixed, FIXED_EXPONENT};

/// Base of the fixed-point plaintext encoding.
pub const ENCODING_BASE: u32 = 10;
/// Default precision exponent for encoded inputs (one millionth).
pub const DEFAULT_EXPONENT: i32 = FIXED_EXPONENT;
/// Smallest modulus size accepted by [`keygen`].
pub const MIN_KEY_BITS: u32 = 256;
/// Production key size.
pub const DEFAULT_KEY_BITS: u32 = 2048;

const MILLER_RABIN_ROUNDS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PheError {
    /// Requested modulus smaller than [`MIN_KEY_BITS`].
    KeyTooSmall { bits: u32 },
    /// Requested modulus size not divisible by two.
    OddKeySize { bits: u32 },
    /// Injected primes unusable (equal, too small, or `gcd(n, φ(n)) ≠ 1`).
    InvalidPrimes,
    /// A value or scalar does not fit the signed plaintext band.
    Overflow,
    /// Blinding factor not in `Z*_n`.
    InvalidBlinding,
    /// Ciphertext produced under a different key.
    KeyMismatch,
    /// Ciphertext value outside `Z*_{n²}`.
    InvalidCiphertext,
}

impl fmt::Display for PheError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KeyTooSmall { bits } => {
                write!(f, "key size {bits} below minimum of {MIN_KEY_BITS} bits")
            }
            Self::OddKeySize { bits } => write!(f, "key size {bits} is not even"),
            Self::InvalidPrimes => f.write_str("primes do not form a valid Paillier modulus"),
            Self::Overflow => f.write_str("plaintext exceeds encoding capacity"),
            Self::InvalidBlinding => f.write_str("blinding factor is not coprime to n"),
            Self::KeyMismatch => f.write_str("ciphertext belongs to a different key"),
            Self::InvalidCiphertext => f.write_str("ciphertext value outside Z*_{n^2}"),
        }
    }
}

/// First eight bytes of SHA-256 over the big-endian modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyFingerprint(pub [u8; 8]);

impl KeyFingerprint {
    fn of(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        KeyFingerprint(out)
    }
}

impl fmt::Debug for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyFingerprint(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    g: BigUint,
    /// Largest mantissa magnitude accepted by the signed encoding (`⌊n/3⌋`).
    max_int: BigUint,
    /// Decimal digits that always fit below `max_int`.
    capacity_digits: u32,
    fingerprint: KeyFingerprint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bits())
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

/// Paillier decryption key. Holds the factorisation so decryption can run
/// modulo `p²` and `q²` separately.
#[derive(Clone)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    public: PublicKey,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Plaintext in `Z_n` with its base-10 exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedNumber {
    mantissa: BigUint,
    exponent: i32,
}

impl EncodedNumber {
    pub fn from_parts(mantissa: BigUint, exponent: i32) -> Self {
        EncodedNumber { mantissa, exponent }
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    exponent: i32,
    key: KeyFingerprint,
}

impl Ciphertext {
    pub fn from_parts(value: BigUint, exponent: i32, key: KeyFingerprint) -> Self {
        Ciphertext { value, exponent, key }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    pub fn key(&self) -> KeyFingerprint {
        self.key
    }
}

/// Generate a key pair whose modulus has exactly `bits` bits.
pub fn keygen<R: RngCore + CryptoRng + ?Sized>(
    bits: u32,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PheError> {
    if bits < MIN_KEY_BITS {
        return Err(PheError::KeyTooSmall { bits });
    }
    if bits % 2 != 0 {
        return Err(PheError::OddKeySize { bits });
    }
    loop {
        let p = random_prime(bits / 2, rng);
        let q = random_prime(bits / 2, rng);
        if let Ok(pair) = keypair_from_primes(&p, &q) {
            debug_assert_eq!(pair.0.bits(), bits);
            return Ok(pair);
        }
    }
}

/// Build a key pair from explicit primes. Used for fixed test vectors; the
/// primes are not checked for primality.
pub fn keypair_from_primes(
    p: &BigUint,
    q: &BigUint,
) -> Result<(PublicKey, PrivateKey), PheError> {
    let one = BigUint::one();
    if p == q || *p < BigUint::from(3u32) || *q < BigUint::from(3u32) {
        return Err(PheError::InvalidPrimes);
    }
    let n = p * q;
    let p1 = p - &one;
    let q1 = q - &one;
    if !n.gcd(&(&p1 * &q1)).is_one() {
        return Err(PheError::InvalidPrimes);
    }
    let public = PublicKey::from_modulus(n);
    let lambda = p1.lcm(&q1);
    let u = public.g.modpow(&lambda, &public.n_squared);
    let mu = mod_inverse(&l_function(&u, &public.n), &public.n).ok_or(PheError::InvalidPrimes)?;

    let p_squared = p * p;
    let q_squared = q * q;
    let hp = mod_inverse(&l_function(&public.g.modpow(&p1, &p_squared), p), p)
        .ok_or(PheError::InvalidPrimes)?;
    let hq = mod_inverse(&l_function(&public.g.modpow(&q1, &q_squared), q), q)
        .ok_or(PheError::InvalidPrimes)?;
    let q_inv_p = mod_inverse(q, p).ok_or(PheError::InvalidPrimes)?;

    let sk = PrivateKey {
        lambda,
        mu,
        p: p.clone(),
        q: q.clone(),
        p_squared,
        q_squared,
        hp,
        hq,
        q_inv_p,
        public: public.clone(),
    };
    Ok((public, sk))
}

fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - BigUint::one()) / n
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    a.modinv(m)
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Self {
        let n_squared = &n * &n;
        let g = &n + BigUint::one();
        let max_int = &n / 3u32;
        let capacity_digits = max_int.to_string_digits().saturating_sub(1);
        let fingerprint = KeyFingerprint::of(&n);
        PublicKey {
            n,
            n_squared,
            g,
            max_int,
            capacity_digits,
            fingerprint,
        }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn max_int(&self) -> &BigUint {
        &self.max_int
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    /// Bit length of `n`.
    pub fn bits(&self) -> u32 {
        self.n.bits() as u32
    }

    /// Fixed serialized width of a ciphertext value: `2 · bits` rounded up
    /// to whole bytes.
    pub fn ciphertext_bytes(&self) -> usize {
        (2 * self.bits() as usize).div_ceil(8)
    }

    /// Encode `value` at `exponent`, rounding half away from zero onto the
    /// grid `10^exponent`.
    pub fn encode(&self, value: &Decimal, exponent: i32) -> Result<EncodedNumber, PheError> {
        let scaled = value.round_to(exponent);
        self.encode_signed(scaled.mantissa(), exponent)
    }

    pub fn encode_fixed(&self, value: Fixed) -> Result<EncodedNumber, PheError> {
        self.encode_signed(&BigInt::from(value.micros()), FIXED_EXPONENT)
    }

    pub fn encode_int(&self, value: i64) -> Result<EncodedNumber, PheError> {
        self.encode_signed(&BigInt::from(value), 0)
    }

    /// Place a signed mantissa into the signed bands of `Z_n`.
    pub fn encode_signed(&self, mantissa: &BigInt, exponent: i32) -> Result<EncodedNumber, PheError> {
        let magnitude = mantissa.magnitude();
        if magnitude > &self.max_int {
            return Err(PheError::Overflow);
        }
        let m = match mantissa.sign() {
            Sign::Minus => &self.n - magnitude,
            _ => magnitude.clone(),
        };
        Ok(EncodedNumber { mantissa: m, exponent })
    }

    /// Signed mantissa of an encoded number, or [`PheError::Overflow`] if it
    /// sits in the middle third of `Z_n`.
    pub fn signed_mantissa(&self, e: &EncodedNumber) -> Result<BigInt, PheError> {
        if e.mantissa >= self.n {
            return Err(PheError::Overflow);
        }
        if e.mantissa <= self.max_int {
            Ok(BigInt::from_biguint(Sign::Plus, e.mantissa.clone()))
        } else if e.mantissa >= &self.n - &self.max_int {
            Ok(-BigInt::from_biguint(Sign::Plus, &self.n - &e.mantissa))
        } else {
            Err(PheError::Overflow)
        }
    }

    pub fn decode(&self, e: &EncodedNumber) -> Result<Decimal, PheError> {
        Ok(Decimal::new(self.signed_mantissa(e)?, e.exponent))
    }

    /// Encrypt with a fresh blinding factor drawn uniformly from `Z*_n`.
    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: &EncodedNumber, rng: &mut R) -> Ciphertext {
        let one = BigUint::one();
        let r = loop {
            let r = rng.gen_biguint_range(&one, &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_unchecked(m, &r)
    }

    /// Encrypt with a caller-supplied blinding factor.
    pub fn encrypt_with_blinding(&self, m: &EncodedNumber, r: &BigUint) -> Result<Ciphertext, PheError> {
        if r.is_zero() || !r.gcd(&self.n).is_one() {
            return Err(PheError::InvalidBlinding);
        }
        Ok(self.encrypt_unchecked(m, r))
    }

    fn encrypt_unchecked(&self, m: &EncodedNumber, r: &BigUint) -> Ciphertext {
        // g^m = (1 + n)^m = 1 + m·n (mod n²)
        let gm = (&self.n * (&m.mantissa % &self.n) + BigUint::one()) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ciphertext {
            value: gm * rn % &self.n_squared,
            exponent: m.exponent,
            key: self.fingerprint,
        }
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PheError> {
        if c.key != self.fingerprint {
            return Err(PheError::KeyMismatch);
        }
        if c.value.is_zero() || c.value >= self.n_squared {
            return Err(PheError::InvalidCiphertext);
        }
        Ok(())
    }

    fn check_exponent(&self, exponent: i32) -> Result<(), PheError> {
        // At least one whole unit must stay representable.
        if exponent < 0 && exponent.unsigned_abs() > self.capacity_digits {
            return Err(PheError::Overflow);
        }
        Ok(())
    }

    /// Homomorphic addition. Operands at different exponents are brought to
    /// the finer one first.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PheError> {
        self.check(a)?;
        self.check(b)?;
        let exponent = a.exponent.min(b.exponent);
        let a = self.rescale(a, exponent)?;
        let b = self.rescale(b, exponent)?;
        Ok(Ciphertext {
            value: &a.value * &b.value % &self.n_squared,
            exponent,
            key: self.fingerprint,
        })
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PheError> {
        self.add(a, &self.neg(b)?)
    }

    pub fn neg(&self, a: &Ciphertext) -> Result<Ciphertext, PheError> {
        self.check(a)?;
        let value = mod_inverse(&a.value, &self.n_squared).ok_or(PheError::InvalidCiphertext)?;
        Ok(Ciphertext {
            value,
            exponent: a.exponent,
            key: self.fingerprint,
        })
    }

    /// Re-express a ciphertext at a finer exponent by scaling its plaintext
    /// with a power of ten.
    pub fn rescale(&self, a: &Ciphertext, exponent: i32) -> Result<Ciphertext, PheError> {
        self.check(a)?;
        if exponent == a.exponent {
            return Ok(a.clone());
        }
        if exponent > a.exponent {
            // Coarsening would drop digits.
            return Err(PheError::Overflow);
        }
        self.check_exponent(exponent)?;
        let shift = (a.exponent - exponent) as u32;
        let factor = pow10(shift).magnitude().clone();
        if factor > self.max_int {
            return Err(PheError::Overflow);
        }
        Ok(Ciphertext {
            value: a.value.modpow(&factor, &self.n_squared),
            exponent,
            key: self.fingerprint,
        })
    }

    /// Multiply the plaintext under `a` by the signed scalar `k`.
    pub fn mul_plain(&self, a: &Ciphertext, k: &EncodedNumber) -> Result<Ciphertext, PheError> {
        self.check(a)?;
        let exponent = a.exponent.checked_add(k.exponent).ok_or(PheError::Overflow)?;
        self.check_exponent(exponent)?;
        let scalar = self.signed_mantissa(k)?;
        let base = match scalar.sign() {
            Sign::Minus => mod_inverse(&a.value, &self.n_squared).ok_or(PheError::InvalidCiphertext)?,
            _ => a.value.clone(),
        };
        Ok(Ciphertext {
            value: base.modpow(scalar.magnitude(), &self.n_squared),
            exponent,
            key: self.fingerprint,
        })
    }

    /// `Σ k_i · m_i` over `(a_i, k_i)` pairs. Negative scalars share a single
    /// modular inversion. `None` for an empty sum.
    pub fn dot_plain(&self, terms: &[(&Ciphertext, &EncodedNumber)]) -> Result<Option<Ciphertext>, PheError> {
        let mut exponent = None;
        for (a, k) in terms {
            self.check(a)?;
            let e = a.exponent.checked_add(k.exponent).ok_or(PheError::Overflow)?;
            if *exponent.get_or_insert(e) != e {
                // Mixed exponents: fall back to rescaling additions.
                return terms.iter().try_fold(None, |acc: Option<Ciphertext>, (a, k)| {
                    let t = self.mul_plain(a, k)?;
                    Ok(Some(match acc {
                        None => t,
                        Some(s) => self.add(&s, &t)?,
                    }))
                });
            }
        }
        let Some(exponent) = exponent else {
            return Ok(None);
        };
        self.check_exponent(exponent)?;
        let (mut pos, mut neg) = (BigUint::one(), BigUint::one());
        for (a, k) in terms {
            let scalar = self.signed_mantissa(k)?;
            let p = a.value.modpow(scalar.magnitude(), &self.n_squared);
            match scalar.sign() {
                Sign::Minus => neg = neg * p % &self.n_squared,
                _ => pos = pos * p % &self.n_squared,
            }
        }
        if !neg.is_one() {
            pos = pos * mod_inverse(&neg, &self.n_squared).ok_or(PheError::InvalidCiphertext)? % &self.n_squared;
        }
        Ok(Some(Ciphertext { value: pos, exponent, key: self.fingerprint }))
    }

    /// Encrypt-free zero: the trivial ciphertext `1 = Enc(0; r = 1)`.
    /// Only used as the identity of homomorphic folds inside the platform.
    pub fn zero(&self, exponent: i32) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            exponent,
            key: self.fingerprint,
        }
    }
}

impl PrivateKey {
    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn primes(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    /// Recover the encoded plaintext. Runs modulo `p²` and `q²` and
    /// recombines; equivalent to `L(c^λ mod n²) · μ mod n`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<EncodedNumber, PheError> {
        self.public.check(c)?;
        let one = BigUint::one();
        let cp = (&c.value % &self.p_squared).modpow(&(&self.p - &one), &self.p_squared);
        let mp = l_function(&cp, &self.p) * &self.hp % &self.p;
        let cq = (&c.value % &self.q_squared).modpow(&(&self.q - &one), &self.q_squared);
        let mq = l_function(&cq, &self.q) * &self.hq % &self.q;
        // m = mq + q · ((mp − mq) · q⁻¹ mod p)
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let m = &mq + &self.q * (diff * &self.q_inv_p % &self.p);
        Ok(EncodedNumber {
            mantissa: m,
            exponent: c.exponent,
        })
    }

    pub fn decrypt_decimal(&self, c: &Ciphertext) -> Result<Decimal, PheError> {
        self.public.decode(&self.decrypt(c)?)
    }
}

trait DecimalDigits {
    fn to_string_digits(&self) -> u32;
}

impl DecimalDigits for BigUint {
    fn to_string_digits(&self) -> u32 {
        let mut digits = 0;
        let mut bound = BigUint::one();
        let ten = BigUint::from(10u32);
        while &bound <= self {
            bound *= &ten;
            digits += 1;
        }
        digits
    }
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Random prime with exactly `bits` bits and its top two bits set, so a
/// product of two such primes has exactly `2 · bits` bits.
fn random_prime<R: RngCore + CryptoRng + ?Sized>(bits: u32, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits as u64);
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(bits as u64 - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

/// Trial division by small primes followed by Miller-Rabin.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    if n.is_even() {
        return *n == two;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Value bytes of a ciphertext, left-padded to `width`.
pub fn value_bytes(c: &Ciphertext, width: usize) -> Vec<u8> {
    let raw = c.value.to_bytes_be();
    let mut out = Vec::with_capacity(width.max(raw.len()));
    out.resize(width.saturating_sub(raw.len()), 0);
    out.extend_from_slice(&raw);
    out
}

impl EncodedNumber {
    /// Mantissa as `u64` when it fits; handy in tests over tiny keys.
    pub fn mantissa_u64(&self) -> Option<u64> {
        self.mantissa.to_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0x5eed)
    }

    fn tiny() -> (PublicKey, PrivateKey) {
        keypair_from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap()
    }

    fn dec(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    #[test]
    fn small_prime_key_parameters() {
        let (pk, sk) = tiny();
        assert_eq!(pk.n(), &BigUint::from(35u32));
        assert_eq!(pk.g(), &BigUint::from(36u32));
        assert_eq!(sk.lambda(), &BigUint::from(12u32));
        // mu · L(g^lambda mod n²) ≡ 1 (mod n)
        let u = pk.g().modpow(sk.lambda(), pk.n_squared());
        assert!((l_function(&u, pk.n()) * sk.mu() % pk.n()).is_one());
    }

    #[test]
    fn small_prime_vector() {
        let (pk, sk) = tiny();
        let m = EncodedNumber::from_parts(BigUint::from(4u32), 0);
        let c = pk.encrypt_with_blinding(&m, &BigUint::from(2u32)).unwrap();
        // Independent route: 36^4 · 2^35 mod 1225 with schoolbook arithmetic.
        let mut expected: u64 = 1;
        for _ in 0..4 {
            expected = expected * 36 % 1225;
        }
        for _ in 0..35 {
            expected = expected * 2 % 1225;
        }
        assert_eq!(c.value(), &BigUint::from(expected));
        assert_eq!(sk.decrypt(&c).unwrap().mantissa_u64(), Some(4));
    }

    #[test]
    fn rejects_bad_sizes_and_blinding() {
        let mut rng = rng();
        assert_eq!(keygen(128, &mut rng).unwrap_err(), PheError::KeyTooSmall { bits: 128 });
        assert_eq!(keygen(258 + 1, &mut rng).unwrap_err(), PheError::OddKeySize { bits: 259 });
        let (pk, _) = tiny();
        let m = EncodedNumber::from_parts(BigUint::from(1u32), 0);
        assert_eq!(
            pk.encrypt_with_blinding(&m, &BigUint::from(7u32)).unwrap_err(),
            PheError::InvalidBlinding
        );
        assert_eq!(keypair_from_primes(&BigUint::from(7u32), &BigUint::from(7u32)).unwrap_err(), PheError::InvalidPrimes);
    }

    #[test]
    fn keygen_produces_exact_size_and_distinct_moduli() {
        let mut rng = rng();
        let (a, sk) = keygen(256, &mut rng).unwrap();
        let (b, _) = keygen(256, &mut rng).unwrap();
        assert_eq!(a.bits(), 256);
        assert_ne!(a.n(), b.n());
        assert_eq!(a.ciphertext_bytes(), 64);
        let m = a.encode_int(42).unwrap();
        let c = a.encrypt(&m, &mut rng);
        assert_eq!(a.decode(&sk.decrypt(&c).unwrap()).unwrap(), Decimal::from_int(42));
    }

    #[test]
    fn crt_decryption_matches_textbook_formula() {
        let mut rng = rng();
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        for v in ["0", "7.25", "-1.5", "123456.789"] {
            let c = pk.encrypt(&pk.encode(&dec(v), -6).unwrap(), &mut rng);
            let u = c.value().modpow(sk.lambda(), pk.n_squared());
            let textbook = l_function(&u, pk.n()) * sk.mu() % pk.n();
            assert_eq!(&textbook, sk.decrypt(&c).unwrap().mantissa());
        }
    }

    #[test]
    fn encode_examples() {
        let mut rng = rng();
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let zero = pk.encode(&Decimal::zero(), -3).unwrap();
        assert!(zero.mantissa().is_zero());
        let e = pk.encode(&dec("-1.5"), -4).unwrap();
        assert_eq!(e.mantissa(), &(pk.n() - BigUint::from(15000u32)));
        assert_eq!(pk.decode(&e).unwrap(), dec("-1.5"));
        let pi = pk.encode(&dec("3.1415"), -4).unwrap();
        assert_eq!(pk.decode(&pi).unwrap(), dec("3.1415"));
    }

    #[test]
    fn decode_middle_third_overflows() {
        let mut rng = rng();
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let half = EncodedNumber::from_parts(pk.n() / 2u32, 0);
        assert_eq!(pk.decode(&half).unwrap_err(), PheError::Overflow);
        let too_big = BigInt::from_biguint(Sign::Plus, pk.max_int() + 1u32);
        assert_eq!(pk.encode_signed(&too_big, 0).unwrap_err(), PheError::Overflow);
        assert!(pk.encode_signed(&BigInt::from_biguint(Sign::Plus, pk.max_int().clone()), 0).is_ok());
    }

    #[test]
    fn encryption_is_randomized() {
        let mut rng = rng();
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let m = pk.encode_int(5).unwrap();
        assert_ne!(pk.encrypt(&m, &mut rng).value(), pk.encrypt(&m, &mut rng).value());
    }

    #[test]
    fn homomorphic_examples() {
        let mut rng = rng();
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        let enc = |s: &str, rng: &mut ChaCha20Rng| pk.encrypt(&pk.encode(&dec(s), -6).unwrap(), rng);
        let a = enc("2.5", &mut rng);
        let b = enc("-2.5", &mut rng);
        assert!(sk.decrypt_decimal(&pk.add(&a, &b).unwrap()).unwrap().is_zero());

        let x = pk.encrypt(&pk.encode(&dec("1.1"), -1).unwrap(), &mut rng);
        let y = pk.encrypt(&pk.encode(&dec("2.2"), -1).unwrap(), &mut rng);
        let s = pk.add(&x, &y).unwrap();
        assert_eq!(s.exponent(), -1);
        assert_eq!(sk.decrypt(&s).unwrap().mantissa_u64(), Some(33));

        let three = enc("3", &mut rng);
        let neg = pk.mul_plain(&three, &pk.encode_int(-1).unwrap()).unwrap();
        assert_eq!(sk.decrypt_decimal(&neg).unwrap(), dec("-3"));
        let id = pk.mul_plain(&three, &pk.encode_int(1).unwrap()).unwrap();
        assert_eq!(sk.decrypt_decimal(&id).unwrap(), dec("3"));
        let ratio = pk.encode(&dec("0.6667"), -4).unwrap();
        let scaled = pk.mul_plain(&three, &ratio).unwrap();
        assert_eq!(scaled.exponent(), -10);
        assert_eq!(sk.decrypt_decimal(&scaled).unwrap(), dec("2.0001"));
    }

    #[test]
    fn add_rescales_coarser_operand() {
        let mut rng = rng();
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        let a = pk.encrypt(&pk.encode(&dec("1.5"), -1).unwrap(), &mut rng);
        let b = pk.encrypt(&pk.encode(&dec("0.000003"), -6).unwrap(), &mut rng);
        let s = pk.add(&a, &b).unwrap();
        assert_eq!(s.exponent(), -6);
        assert_eq!(sk.decrypt_decimal(&s).unwrap(), dec("1.500003"));
        assert_eq!(pk.rescale(&b, -1).unwrap_err(), PheError::Overflow);
    }

    #[test]
    fn dot_plain_matches_term_by_term() {
        let mut rng = rng();
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        let a = pk.encrypt(&pk.encode(&dec("2.5"), -1).unwrap(), &mut rng);
        let b = pk.encrypt(&pk.encode(&dec("-4"), -1).unwrap(), &mut rng);
        for (x, y) in [("3", "-0.5"), ("-3", "-0.5"), ("-1", "2"), ("0", "0")] {
            let (kx, ky) = (pk.encode(&dec(x), -2).unwrap(), pk.encode(&dec(y), -2).unwrap());
            let want = &(&dec("2.5") * &dec(x)) + &(&dec("-4") * &dec(y));
            let got = pk.dot_plain(&[(&a, &kx), (&b, &ky)]).unwrap().unwrap();
            assert_eq!(got.exponent(), -3);
            assert_eq!(sk.decrypt_decimal(&got).unwrap(), want);
        }
        // Mixed exponents go through rescaling.
        let c = pk.encrypt(&pk.encode(&dec("1"), 0).unwrap(), &mut rng);
        let k = pk.encode_int(-2).unwrap();
        let got = pk.dot_plain(&[(&a, &k), (&c, &k)]).unwrap().unwrap();
        assert_eq!(sk.decrypt_decimal(&got).unwrap(), dec("-7"));
        assert!(pk.dot_plain(&[]).unwrap().is_none());
    }

    #[test]
    fn thousand_millis_fold_to_one() {
        let mut rng = rng();
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        let m = pk.encode(&dec("0.001"), -6).unwrap();
        let mut acc = pk.zero(-6);
        for _ in 0..1000 {
            acc = pk.add(&acc, &pk.encrypt(&m, &mut rng)).unwrap();
        }
        assert_eq!(sk.decrypt_decimal(&acc).unwrap(), Decimal::from_int(1));
    }

    #[test]
    fn wrong_key_is_rejected() {
        let mut rng = rng();
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let (other, other_sk) = keygen(256, &mut rng).unwrap();
        let c = pk.encrypt(&pk.encode_int(1).unwrap(), &mut rng);
        assert_eq!(other_sk.decrypt(&c).unwrap_err(), PheError::KeyMismatch);
        let d = other.encrypt(&other.encode_int(1).unwrap(), &mut rng);
        assert_eq!(pk.add(&c, &d).unwrap_err(), PheError::KeyMismatch);
    }

    #[test]
    fn capacity_guard_on_fine_exponents() {
        let mut rng = rng();
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let c = pk.encrypt(&pk.encode_int(1).unwrap(), &mut rng);
        let fine = EncodedNumber::from_parts(BigUint::one(), -80);
        assert_eq!(pk.mul_plain(&c, &fine).unwrap_err(), PheError::Overflow);
    }

    #[test]
    fn miller_rabin_small_cases() {
        let mut rng = rng();
        let primes = [2u32, 3, 5, 7, 257, 65537, 1_000_003];
        for p in primes {
            assert!(is_probable_prime(&BigUint::from(p), &mut rng), "{p}");
        }
        for c in [1u32, 4, 9, 561, 1105, 65535, 1_000_001] {
            assert!(!is_probable_prime(&BigUint::from(c), &mut rng), "{c}");
        }
    }
}
