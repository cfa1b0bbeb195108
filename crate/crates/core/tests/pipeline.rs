use std::f64::consts::PI;

use curveflow_core::associated::associated_curve;
use curveflow_core::functionals::energy;
use curveflow_core::su2::C;
use curveflow_core::{darboux_transform, evolve, make_helix, make_perturbed_circle, Curve, FlowField, FlowSpec, Sheet};

#[test]
fn json_round_trip_preserves_energies() {
    let c = make_perturbed_circle(1.0, 0.05, 3, 128).unwrap();
    let back = Curve::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back.samples(), c.samples());
    for k in 1..=4 {
        assert_eq!(energy(k, &back, None).unwrap(), energy(k, &c, None).unwrap());
    }
}

#[test]
fn flowed_curve_has_same_darboux_energies() {
    let c = make_perturbed_circle(1.0, 0.05, 1, 128).unwrap();
    let spec = FlowSpec::new(FlowField::single(1).unwrap(), 1e-3, 100).unwrap();
    let later = evolve(&c, &spec).unwrap().last().clone();
    let d = darboux_transform(&later, C::new(0.7, 1.2), Sheet::Plus).unwrap();
    for (k, delta) in d.energy_deltas(&later).unwrap() {
        assert!(delta.abs() < 1e-4, "E{k} {delta:e}");
    }
    let e3 = energy(3, &c, None).unwrap();
    assert!((energy(3, &d.curve, None).unwrap() - e3).abs() < 1e-4 * e3);
}

#[test]
fn associated_curve_shifts_torsion() {
    let h = make_helix(1.0, 1.0, 1.0, 256).unwrap();
    let l = 1.0;
    let a = associated_curve(&h, l).unwrap();
    assert!(a.check_invariants().holds());
    let e1 = energy(1, &h, None).unwrap();
    assert!((energy(1, &a, None).unwrap() - e1).abs() < 1e-8);
    let shift = energy(2, &a, None).unwrap() - energy(2, &h, None).unwrap() - l * e1;
    let wrapped = shift - 2.0 * PI * (shift / (2.0 * PI)).round();
    assert!(wrapped.abs() < 1e-4, "{wrapped:e}");
}
