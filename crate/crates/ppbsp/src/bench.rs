//! Timing of the four expensive primitives and of the platform's billing
//! step as the market grows.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use ppbsp_core::billing::{bill_user, plan, BillFlags, BillingModel, PlainAggregates};
use ppbsp_core::counters::{Op, OpCounts};
use ppbsp_core::decimal::Fixed;
use ppbsp_core::market::{generate, BidType, PriceSchedule, Scenario};
use ppbsp_core::meter::{NetConsumption, Ternary};
use ppbsp_core::phe::{keygen, PheError};

use crate::entities::{MeterFleet, TradingPlatform};
use crate::keys::KeyRing;
use crate::simnet::SimError;

pub const MIN_REPS: usize = 100;

/// Means measured with python-paillier at 2048 bits on an i7-8565U.
pub fn reference_ms(op: Op) -> f64 {
    match op {
        Op::KeyGen => 339.53,
        Op::HomoEnc => 28.48,
        Op::HomoDec => 8.14,
        Op::BillCalc => 3.22,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitiveTiming {
    pub op: Op,
    pub reps: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub reference_ms: f64,
}

impl PrimitiveTiming {
    /// `mean / reference`.
    pub fn ratio(&self) -> f64 {
        self.mean_ms / self.reference_ms
    }

    pub fn within_order_of_magnitude(&self) -> bool {
        (0.1..=10.0).contains(&self.ratio())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub key_bits: u32,
    pub rows: Vec<PrimitiveTiming>,
}

impl BenchReport {
    pub fn row(&self, op: Op) -> &PrimitiveTiming {
        self.rows.iter().find(|r| r.op == op).expect("all four primitives are timed")
    }

    /// HomoEnc > HomoDec > BillCalc.
    pub fn ordering_holds(&self) -> bool {
        let m = |op| self.row(op).mean_ms;
        m(Op::HomoEnc) > m(Op::HomoDec) && m(Op::HomoDec) > m(Op::BillCalc)
    }

    pub fn keygen_dominates(&self) -> bool {
        let kg = self.row(Op::KeyGen).mean_ms;
        self.rows.iter().filter(|r| r.op != Op::KeyGen).all(|r| kg > r.mean_ms)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("at least {MIN_REPS} repetitions are required, got {0}")]
    TooFewReps(usize),
    #[error("{0}")]
    Phe(PheError),
    #[error("{0}")]
    Sim(#[from] SimError),
}

impl From<PheError> for BenchError {
    fn from(e: PheError) -> Self {
        BenchError::Phe(e)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn summarize(op: Op, samples: &[f64]) -> PrimitiveTiming {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    PrimitiveTiming { op, reps: samples.len(), mean_ms: mean, stddev_ms: var.sqrt(), reference_ms: reference_ms(op) }
}

fn time_each<F: FnMut() -> Result<(), PheError>>(reps: usize, mut f: F) -> Result<Vec<f64>, PheError> {
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        out.push(ms(t.elapsed()));
    }
    Ok(out)
}

/// Time KeyGen, HomoEnc, HomoDec and BillCalc `reps` times each.
/// `keygen_reps` overrides the count for key generation alone.
pub fn benchmark_primitives(bits: u32, reps: usize, keygen_reps: Option<usize>, seed: u64) -> Result<BenchReport, BenchError> {
    let kg_reps = keygen_reps.unwrap_or(reps);
    if reps < MIN_REPS || kg_reps < MIN_REPS {
        return Err(BenchError::TooFewReps(reps.min(kg_reps)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let counts = OpCounts::new();

    let keygen_ms = time_each(kg_reps, || keygen(bits, &mut rng).map(drop))?;
    let (pk, sk) = keygen(bits, &mut rng)?;

    let values: Vec<Fixed> = (0..reps).map(|_| Fixed::from_micros(rng.gen_range(-10_000_000..10_000_000))).collect();
    let mut it = values.iter();
    let enc_ms = time_each(reps, || {
        let v = *it.next().expect("one value per rep");
        pk.encrypt(&pk.encode_fixed(v)?, &mut rng);
        Ok(())
    })?;

    let c = pk.encrypt(&pk.encode_fixed(Fixed::from_int(3))?, &mut rng);
    let d = pk.encrypt(&pk.encode_fixed(Fixed::from_micros(1_250_000))?, &mut rng);
    let dec_ms = time_each(reps, || sk.decrypt(&d).map(drop))?;

    // An over-consuming buyer in a deficit market under the social model:
    // both coefficients non-zero plus a supplier income term.
    let flags = BillFlags {
        is_bid_accepted: true,
        bid_type: BidType::Buy,
        net_consumption_type: NetConsumption::Buyer,
        indev_sign: Ternary::Positive,
    };
    let aggs = PlainAggregates::new(Fixed::from_int(1), Fixed::from_int(3), Fixed::ZERO, Fixed::ZERO);
    let bp = plan(BillingModel::Social, &flags, &PriceSchedule::default(), Some(&aggs))
        .expect("aggregates are supplied");
    let bill_ms = time_each(reps, || bill_user(&pk, &bp, &c, &d, &counts).map(drop))?;

    Ok(BenchReport {
        key_bits: bits,
        rows: vec![
            summarize(Op::KeyGen, &keygen_ms),
            summarize(Op::HomoEnc, &enc_ms),
            summarize(Op::HomoDec, &dec_ms),
            summarize(Op::BillCalc, &bill_ms),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n_users: usize,
    /// Fastest of the repetitions.
    pub billing_ms: f64,
    pub bill_calcs: u64,
}

/// Least-squares line with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept, r_squared }
}

/// The first `n` users of a one-slot scenario.
fn prefix(s: &Scenario, n: usize) -> Scenario {
    let users = s.users[..n].to_vec();
    let slots = s.slots.iter().map(|t| t[..n].to_vec()).collect();
    Scenario { users, slots, ..s.clone() }
}

/// Time the platform's billing step (both key domains, social model) for
/// each market size. Payloads are encrypted once for the largest market
/// and reused as prefixes.
pub fn billing_scaling(bits: u32, sizes: &[usize], n_suppliers: usize, reps: usize, seed: u64) -> Result<Vec<ScalingPoint>, BenchError> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    let full = generate(seed, max, n_suppliers, 1, Fixed::from_int(2)).map_err(|e| SimError::Protocol(e.to_string()))?;
    let keys = KeyRing::generate(bits, n_suppliers, seed)?;
    let spks = keys.supplier_public();
    let fleet = MeterFleet::new(seed);
    let payloads = fleet.read_slot(&full, 0, &spks, &keys.gridop.0, None)?;

    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let sc = prefix(&full, n);
        let aggs = PlainAggregates::from_truths(&sc.slots[0]);
        let mut platform = TradingPlatform::new(BillingModel::Social, &sc, spks.clone(), keys.gridop.0.clone())?;
        for m in &payloads[..n] {
            platform.receive_payload(m)?;
        }
        let mut best = Duration::MAX;
        let before = platform.counts().get(Op::BillCalc);
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            platform.bill(Some(&aggs), None)?;
            best = best.min(t.elapsed());
        }
        let calcs = (platform.counts().get(Op::BillCalc) - before) / reps.max(1) as u64;
        out.push(ScalingPoint { n_users: n, billing_ms: ms(best), bill_calcs: calcs });
    }
    Ok(out)
}
