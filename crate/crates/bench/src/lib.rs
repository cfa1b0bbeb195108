//! Shared fixtures for the benchmarks.

use curveflow_core::{make_circle, make_helix, make_perturbed_circle, Curve};

/// Unit-speed helix `a = b = 1`, one turn.
pub fn helix(n: usize) -> Curve {
    make_helix(1.0, 1.0, 1.0, n).expect("valid helix")
}

/// Unit circle.
pub fn circle(n: usize) -> Curve {
    make_circle(1.0, n).expect("valid circle")
}

/// Unit circle with a 5% seeded perturbation.
pub fn perturbed(n: usize) -> Curve {
    make_perturbed_circle(1.0, 0.05, 0, n).expect("valid perturbation")
}
