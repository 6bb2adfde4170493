//! End-to-end comparison of a run against the exact plaintext oracle.
//!
//! The verifier is an omniscient observer: it reads the scenario truths and
//! uses every private key. None of the protocol parties run this.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use ppbsp_core::billing::{oracle_slot, rm_volume, within_micro, BillingModel, PlainAggregates};
use ppbsp_core::market::{Scenario, UserId};

use crate::keys::KeyRing;
use crate::simnet::RunOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub model: BillingModel,
    pub checks: u64,
    pub failures: Vec<String>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

/// Check per-slot aggregates, supplier balances, captured partial bills,
/// RM volume, monthly bills and conservation of the honest residues.
pub fn verify_run(scenario: &Scenario, keys: &KeyRing, run: &RunOutcome) -> Verification {
    let model = run.model;
    let mut v = Verification { model, checks: 0, failures: Vec::new() };
    let mut monthly: BTreeMap<UserId, BigRational> = BTreeMap::new();

    v.check(run.slots.len() == scenario.slots.len(), || {
        format!("{} slot results for {} slots", run.slots.len(), scenario.slots.len())
    });
    for (res, truths) in run.slots.iter().zip(&scenario.slots) {
        let slot = res.slot;
        let oracle = oracle_slot(model, scenario, truths);
        for (u, d) in &oracle.deltas {
            *monthly.entry(*u).or_insert_with(BigRational::zero) += d;
        }

        let expected = PlainAggregates::from_truths(truths);
        v.check(res.aggregates == expected, || format!("slot {slot}: aggregates {:?} != {expected:?}", res.aggregates));

        for (k, (got, want)) in res.supplier_balances.iter().zip(&oracle.balances).enumerate() {
            v.check(within_micro(&got.to_rational(), want), || {
                format!("slot {slot}: {} balance {got} != {want}", scenario.suppliers[k])
            });
        }

        if let Some(bills) = &res.partial_bills {
            for (u, ct) in bills {
                let k = scenario.user(*u).and_then(|r| scenario.supplier_index(r.supplier));
                let got = k.and_then(|k| keys.suppliers[k].1.decrypt_decimal(ct).ok());
                let ok = match (&got, oracle.deltas.get(u)) {
                    (Some(g), Some(w)) => within_micro(&g.to_rational(), w),
                    _ => false,
                };
                v.check(ok, || format!("slot {slot}: {u} partial bill {got:?} != {:?}", oracle.deltas.get(u)));
            }
        }

        let closed = rm_volume(model, truths).to_rational();
        let exact = if model == BillingModel::StatusQuo { &oracle.rm_volume } else { &oracle.p2p_rm_volume };
        v.check(&closed == exact, || format!("slot {slot}: closed-form RM volume {closed} != oracle {exact}"));
        v.check(res.rm_volume.to_rational() == closed, || {
            format!("slot {slot}: pipeline RM volume {} != {closed}", res.rm_volume)
        });
    }

    let mut billed = 0usize;
    for (_, user, bill) in run.billing.monthly_bills() {
        billed += 1;
        let want = monthly.get(&user).cloned().unwrap_or_else(BigRational::zero);
        v.check(within_micro(&bill.to_rational(), &want), || format!("{user}: monthly bill {bill} != {want}"));
    }
    v.check(billed == scenario.users.len(), || format!("{billed} monthly bills for {} users", scenario.users.len()));

    let net = run.billing.ledgers.iter().fold(BigRational::zero(), |acc, l| acc + l.residue.to_rational());
    v.check(within_micro(&net, &BigRational::zero()), || format!("true residues sum to {net}"));
    v
}
