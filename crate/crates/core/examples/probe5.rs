// timing probe for the heavy acceptance criterion
use ba_sim::attacks::{pr_halting_attack, AttackGeometry, AttackStage, Regime, VectorSel};
use ba_sim::protocols;
use ba_sim::stats::measure;

fn main() {
    let spec = protocols::micali_lite(60, 16, 1).unwrap().truncated(2);
    let geom = AttackGeometry::custom(60, 16, Regime::Quarter, AttackStage::SecondRoundPr, 10, 5, 1.0 / 60.0)
        .unwrap()
        .oriented(VectorSel::VStar, VectorSel::V0)
        .unwrap();
    let strategy = pr_halting_attack(&spec, &geom, 1.0 / 62.0, 0.2, 0.5).unwrap();
    let t0 = std::time::Instant::now();
    let trials = 500;
    let m = measure(&spec, &geom.from, Some(&strategy), trials, 99, 0.99).unwrap();
    let dt = t0.elapsed();
    println!("halting={:.4} agreement_viol={:.4} trials={} elapsed={:?} per-trial={:?}",
        m.halting_by_q.point, m.agreement_violation.point, trials, dt, dt / trials as u32);
}
