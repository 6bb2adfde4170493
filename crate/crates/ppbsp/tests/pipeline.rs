use ppbsp::keys::KeyRing;
use ppbsp::simnet::{SimConfig, Simulation};
use ppbsp::verify::verify_run;
use ppbsp_core::billing::BillingModel;
use ppbsp_core::market::generate;

#[test]
fn all_models_match_oracle() {
    let sc = generate(5, 12, 3, 4, "2".parse().unwrap()).unwrap();
    let keys = KeyRing::generate(256, 3, 1).unwrap();
    let cfg = SimConfig { capture_partial_bills: true, ..SimConfig::default() };
    let runs = Simulation::new(&sc, &keys, &BillingModel::ALL, cfg).unwrap().run().unwrap();
    for r in &runs {
        let v = verify_run(&sc, &keys, r);
        assert!(v.passed(), "{:?}", v.failures);
        assert!(r.settled());
    }
}
