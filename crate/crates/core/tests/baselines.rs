use circulon::atom::QuantumDefectTable;
use circulon::propagator::{fidelity, propagate, QuantumState, RecordSpec};
use circulon::pulse::{make_flat_top, make_two_step, TwoStep};
use circulon::stark::{assemble_model, BasisModel, ModelConfig};

fn model() -> BasisModel {
    assemble_model(&ModelConfig::default(), &QuantumDefectTable::rubidium85()).unwrap()
}

#[test]
fn pi_pulse_at_18_mv() {
    let model = model();
    let psi0 = QuantumState::pivotal(&model, 2).unwrap();
    let target = QuantumState::pivotal(&model, 50).unwrap();
    let w = make_flat_top(18.0, 230.0, 138.0, 10.0, 0.02).unwrap();
    let (psi, rec) = propagate(&model, &psi0, &w, &RecordSpec::default()).unwrap();
    let f = fidelity(&psi, &target).unwrap();
    let mean_m = *rec.mean_m.last().unwrap();
    let p1 = rec.pivotal_populations.last().unwrap()[1];
    println!("F = {f:.4}, <m> = {mean_m:.2}, P1 = {p1:.4}");
    assert!((f - 0.81).abs() <= 0.02);
    assert!((mean_m - 46.0).abs() <= 1.0);
    assert!((p1 - 0.06).abs() <= 0.01);
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-9);
}

#[test]
fn amplified_pulse_duration_scan() {
    let model = model();
    let psi0 = QuantumState::pivotal(&model, 2).unwrap();
    let target = QuantumState::pivotal(&model, 50).unwrap();
    let mut best = (0.0, 0.0);
    for k in 0..=30 {
        let t = 58.0 + 0.2 * k as f64;
        let w = make_flat_top(45.0, 230.0, t, 10.0, 0.02).unwrap();
        let (psi, _) = propagate(&model, &psi0, &w, &RecordSpec { stride: usize::MAX, ..Default::default() }).unwrap();
        let f = fidelity(&psi, &target).unwrap();
        if f > best.1 {
            best = (t, f);
        }
    }
    println!("optimum {:.2} ns, F = {:.4}", best.0, best.1);
    assert!((best.0 - 61.2).abs() <= 1.5);
    assert!((best.1 - 0.63).abs() <= 0.03);
}

#[test]
fn two_step_guess() {
    let model = model();
    let psi0 = QuantumState::pivotal(&model, 2).unwrap();
    let target = QuantumState::pivotal(&model, 50).unwrap();
    let p = TwoStep {
        a_low_mv: 30.0,
        a_high_mv: 45.0,
        t_step_ns: 10.0,
        ramp_ns: 10.0,
        carrier_mhz: 230.0,
        t_stop_ns: 65.0,
        edge_ns: 10.0,
    };
    let w = make_two_step(&p, 0.02).unwrap();
    let (psi, rec) = propagate(&model, &psi0, &w, &RecordSpec::default()).unwrap();
    let f = fidelity(&psi, &target).unwrap();
    let p1 = rec.pivotal_populations.last().unwrap()[1];
    println!("F = {f:.4}, P1 = {p1:.2e}");
    assert!((f - 0.74).abs() <= 0.03);
    assert!(p1 < 1e-4);
}
