use circulon_web::{limits, Demo};

#[test]
fn small_manifold_frequencies_and_flat_top() {
    let demo = Demo::build(25, 10.0).unwrap();
    let f = demo.frequencies();
    assert_eq!(f.len(), 25);
    assert!(f.iter().all(|x| x.is_finite() && *x > 0.0));

    let tr = demo.flat_top(0.0, 230.0, 4.0, 1.0, 3).unwrap_or_else(|_| panic!("propagate"));
    let last = tr.final_populations();
    assert!((last[3] - 1.0).abs() < 1e-9);
    assert_eq!(tr.times_ns().len(), tr.mean_m().len());
    assert!(tr.circular().iter().all(|p| *p < 1e-12));
}

#[test]
fn limits_flags_follow_the_peak() {
    let low = limits(51, 2.346, 40.0, 60.0);
    assert!(low.valid && low.below_crossing && low.below_ionization);
    assert!(low.critical_v_per_cm < low.ionization_v_per_cm);
    let high = limits(51, 2.346, 3000.0, 60.0);
    assert!(!high.below_crossing && !high.valid);
    assert!(!limits(51, 2.346, 40.0, 3.0).valid);
}
