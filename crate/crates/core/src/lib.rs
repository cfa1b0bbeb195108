//! Commuting Hamiltonian flows on space curves with monodromy.
//!
//! The crate covers the curve representation and its differentiation,
//! the hierarchy of symplectic gradients `Y_k` and their Hamiltonians, time
//! integration of the flows, Lax flows on truncated loop algebras, the
//! associated family with its monodromy angle, and Darboux transforms.

pub mod associated;
pub mod curve;
pub mod darboux;
pub mod error;
pub mod flow;
pub mod frame;
pub mod functionals;
pub mod hierarchy;
pub mod loops;
pub mod su2;

pub use curve::{
    ddx, make_circle, make_helix, make_line, make_perturbed_circle, resample_arclength, Curve, CurveField, Monodromy,
    Vec3,
};
pub use error::{Error, Result};
pub use frame::{complex_curvature, parallel_normal_frame, total_torsion, NormalFrame, TotalTorsion};
pub use flow::{commutator_defect, evolve, step, FlowField, FlowSpec, Integrator, Trajectory};
pub use loops::{from_curve, lax_evolve, loop_cross, spectral_polynomial, v_k, LoopElement, SpectralPolynomial};
pub use associated::{
    family_monodromy, hamiltonians_from_angle, hamiltonians_from_contour, integrate_frame, monodromy_angle, monodromy_angle_scan, sym_curve,
    FrameTrajectory, MonodromyAngle,
};
pub use darboux::{
    darboux_transform, fixed_points, hyperbolic_family, poincare_embed, spectral_image_scan, DarbouxTransform,
    IdealFixedPoints, Sheet,
};
