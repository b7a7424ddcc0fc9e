mod common;

use common::{planted_pencil, random_lambda, rng};
use nds_core::kcf::{compute_kcf, reconstruct_residual};
use nds_core::ToleranceConfig;

#[test]
fn planted_structures_are_recovered() {
    let cfg = ToleranceConfig::default();
    let mut failures = Vec::new();
    for seed in 0..400u64 {
        let (p, planted) = planted_pencil(seed, 8);
        let mut r = rng(seed ^ 0xfeed);
        let samples: Vec<_> = (0..5).map(|_| random_lambda(&mut r)).collect();
        match compute_kcf(&p, &cfg) {
            Ok(ks) => {
                let res = reconstruct_residual(&ks, &p, &samples);
                if ks.invariants() != planted || res > 1e-8 {
                    failures.push(format!(
                        "seed {seed}: got {:?} want {:?} res {res:.2e}",
                        ks.invariants(),
                        planted
                    ));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e} (planted {planted:?})")),
        }
    }
    assert!(
        failures.is_empty(),
        "{} failures:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
