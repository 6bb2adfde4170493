//! Phase-1 key material.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ppbsp_core::counters::{Op, OpCounts};
use ppbsp_core::phe::{keygen, PheError, PrivateKey, PublicKey};

/// One key pair per supplier plus the grid operator's.
///
/// Each holder's pair is drawn from its own ChaCha20 stream of `seed`, so
/// the first `k` supplier keys do not depend on how many suppliers exist.
#[derive(Debug, Clone)]
pub struct KeyRing {
    pub bits: u32,
    pub seed: u64,
    pub suppliers: Vec<(PublicKey, PrivateKey)>,
    pub gridop: (PublicKey, PrivateKey),
}

/// Keeps key streams apart from the meters' streams of the same seed.
const KEY_DOMAIN: u64 = 0x6b65_7973_0000_0000;

fn pair(bits: u32, seed: u64, stream: u64) -> Result<(PublicKey, PrivateKey), PheError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ KEY_DOMAIN);
    rng.set_stream(stream);
    keygen(bits, &mut rng)
}

impl KeyRing {
    pub fn generate(bits: u32, n_suppliers: usize, seed: u64) -> Result<Self, PheError> {
        Self::generate_counted(bits, n_suppliers, seed, None, &[])
    }

    /// As [`KeyRing::generate`], recording one KeyGen on each holder's counter.
    pub fn generate_counted(
        bits: u32,
        n_suppliers: usize,
        seed: u64,
        gridop_counts: Option<&OpCounts>,
        supplier_counts: &[&OpCounts],
    ) -> Result<Self, PheError> {
        let gridop = pair(bits, seed, 0)?;
        if let Some(c) = gridop_counts {
            c.record(Op::KeyGen);
        }
        let mut suppliers = Vec::with_capacity(n_suppliers);
        for k in 0..n_suppliers {
            suppliers.push(pair(bits, seed, k as u64 + 1)?);
            if let Some(c) = supplier_counts.get(k) {
                c.record(Op::KeyGen);
            }
        }
        Ok(KeyRing { bits, seed, suppliers, gridop })
    }

    /// The first `n` supplier keys and the same grid operator key.
    pub fn subset(&self, n: usize) -> Option<KeyRing> {
        (n <= self.suppliers.len()).then(|| KeyRing {
            bits: self.bits,
            seed: self.seed,
            suppliers: self.suppliers[..n].to_vec(),
            gridop: self.gridop.clone(),
        })
    }

    pub fn supplier_public(&self) -> Vec<PublicKey> {
        self.suppliers.iter().map(|(pk, _)| pk.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_prefix_stable() {
        let big = KeyRing::generate(256, 3, 9).unwrap();
        let small = KeyRing::generate(256, 2, 9).unwrap();
        let sub = big.subset(2).unwrap();
        assert_eq!(sub.supplier_public(), small.supplier_public());
        assert_eq!(sub.gridop.0, small.gridop.0);
        assert!(big.subset(4).is_none());
        assert_ne!(big.suppliers[0].0, big.suppliers[1].0);
    }

    #[test]
    fn counted_generation_records_one_keygen_per_holder() {
        let g = OpCounts::new();
        let s = [OpCounts::new(), OpCounts::new()];
        KeyRing::generate_counted(256, 2, 1, Some(&g), &[&s[0], &s[1]]).unwrap();
        assert_eq!(g.get(Op::KeyGen), 1);
        assert!(s.iter().all(|c| c.get(Op::KeyGen) == 1));
    }
}
