//! The identification ℝ³ ≅ su₂ and 2×2 complex matrix utilities.
//!
//! `û = −(i/2) u·σ`, so `[û, v̂] = (u×v)^`, `exp(θû)` covers the rotation by
//! θ about a unit `u`, and `Tr exp(θû) = 2cos(θ/2)`. The same linear map
//! extends to `ℂ³ ≅ sl₂(ℂ)`.

use nalgebra::{Matrix2, UnitQuaternion, Vector3};
use num_complex::Complex64;

use crate::curve::Vec3;

pub type C = Complex64;
pub type M2 = Matrix2<C>;
pub type CVec3 = Vector3<C>;

const I: C = C::new(0.0, 1.0);

pub fn identity() -> M2 {
    M2::identity()
}

/// `û = −(i/2)(u_x σ_x + u_y σ_y + u_z σ_z)`.
pub fn hat(u: &Vec3) -> M2 {
    hat_c(&complexify(u))
}

/// Complex-linear extension of [`hat`].
pub fn hat_c(u: &CVec3) -> M2 {
    let h = C::new(0.0, -0.5);
    M2::new(h * u.z, h * (u.x - I * u.y), h * (u.x + I * u.y), -h * u.z)
}

/// Inverse of [`hat_c`] on trace-free matrices.
pub fn vee(m: &M2) -> CVec3 {
    CVec3::new(I * (m[(0, 1)] + m[(1, 0)]), m[(1, 0)] - m[(0, 1)], 2.0 * I * m[(0, 0)])
}

/// Real part of [`vee`].
pub fn vee_real(m: &M2) -> Vec3 {
    real(&vee(m))
}

pub fn complexify(u: &Vec3) -> CVec3 {
    CVec3::new(C::from(u.x), C::from(u.y), C::from(u.z))
}

pub fn real(u: &CVec3) -> Vec3 {
    Vec3::new(u.x.re, u.y.re, u.z.re)
}

pub fn imag(u: &CVec3) -> Vec3 {
    Vec3::new(u.x.im, u.y.im, u.z.im)
}

pub fn det(m: &M2) -> C {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

pub fn trace(m: &M2) -> C {
    m[(0, 0)] + m[(1, 1)]
}

/// Inverse of an invertible 2×2 matrix.
pub fn inverse(m: &M2) -> M2 {
    let d = det(m);
    M2::new(m[(1, 1)] / d, -m[(0, 1)] / d, -m[(1, 0)] / d, m[(0, 0)] / d)
}

/// Conjugate transpose.
pub fn adjoint(m: &M2) -> M2 {
    m.adjoint()
}

/// `Ad_g v = vee(g v̂ g⁻¹)`.
pub fn ad(g: &M2, v: &CVec3) -> CVec3 {
    vee(&(g * hat_c(v) * inverse(g)))
}

/// SU(2) element of a unit quaternion `(w, x, y, z) ↦ w − i(xσ_x + yσ_y + zσ_z)`.
pub fn from_quaternion(q: &UnitQuaternion<f64>) -> M2 {
    let q = q.quaternion();
    M2::new(
        C::new(q.w, -q.k),
        C::new(-q.j, -q.i),
        C::new(q.j, -q.i),
        C::new(q.w, q.k),
    )
}

/// `cosh(√q)` and `sinh(√q)/√q`, even in `√q`.
/// Inverse of [`from_quaternion`] for (numerically) unitary `m`.
pub fn to_quaternion(m: &M2) -> UnitQuaternion<f64> {
    let q = nalgebra::Quaternion::new(m[(0, 0)].re, -m[(1, 0)].im, m[(1, 0)].re, -m[(0, 0)].im);
    UnitQuaternion::from_quaternion(q)
}

fn ch_sh(q: C) -> (C, C) {
    if q.norm() < 1e-2 {
        // Series: Σ q^k/(2k)!, Σ q^k/(2k+1)!
        let (mut c, mut s) = (C::from(0.0), C::from(0.0));
        let mut term = C::from(1.0);
        for k in 0..12 {
            c += term;
            let t1 = term / (2 * k + 1) as f64;
            s += t1;
            term = t1 * q / (2 * k + 2) as f64;
        }
        (c, s)
    } else {
        let r = q.sqrt();
        (r.cosh(), r.sinh() / r)
    }
}

/// Derivative of `sinh(√q)/√q` in `q`.
fn sh_prime(q: C) -> C {
    if q.norm() < 0.5 {
        // Σ k q^{k−1}/(2k+1)!
        let mut out = C::from(0.0);
        let mut fact = 6.0;
        let mut qp = C::from(1.0);
        for k in 1..20 {
            out += qp * (k as f64 / fact);
            qp *= q;
            fact *= ((2 * k + 2) * (2 * k + 3)) as f64;
        }
        out
    } else {
        let (c, s) = ch_sh(q);
        (c - s) / (2.0 * q)
    }
}

/// Exponential of a trace-free 2×2 matrix: `cosh(s)·1 + sinh(s)/s·P`, `s² = −det P`.
pub fn exp_sl2(p: &M2) -> M2 {
    let q = -det(p);
    let (c, s) = ch_sh(q);
    M2::identity() * c + p * s
}

/// Exponential of the block matrix `[[P, Q], [0, P]]` for trace-free `P, Q`:
/// returns `(exp P, D)` with `D = ∫₀¹ e^{sP} Q e^{(1−s)P} ds`.
pub fn exp_block(p: &M2, q: &M2) -> (M2, M2) {
    let qq = -det(p);
    let (c, s) = ch_sh(qq);
    // d(−det P)[Q] = Tr(PQ) for trace-free P, Q.
    let dq = trace(&(p * q));
    let dc = s * 0.5 * dq;
    let ds = sh_prime(qq) * dq;
    (M2::identity() * c + p * s, M2::identity() * dc + p * ds + q * s)
}

/// Nearest SU(2) element of a matrix close to SU(2).
pub fn unitarize(m: &M2) -> M2 {
    let a = (m[(0, 0)] + m[(1, 1)].conj()) * 0.5;
    let b = (m[(0, 1)] - m[(1, 0)].conj()) * 0.5;
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let (a, b) = (a / r, b / r);
    M2::new(a, b, -b.conj(), a.conj())
}

/// Rescale to determinant one (principal square root).
pub fn det_normalize(m: &M2) -> M2 {
    m / det(m).sqrt()
}

/// Frobenius distance to the identity.
pub fn dist_identity(m: &M2) -> f64 {
    (m - M2::identity()).norm()
}

/// Group-invariant defects `(|det − 1|, ‖F*F − 1‖)`.
pub fn group_defects(m: &M2) -> (f64, f64) {
    ((det(m) - 1.0).norm(), (m.adjoint() * m - M2::identity()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v3() -> impl Strategy<Value = Vec3> {
        (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn hat_vee_round_trip(u in v3()) {
            let back = vee_real(&hat(&u));
            prop_assert!((back - u).norm() < 1e-14);
            prop_assert!(imag(&vee(&hat(&u))).norm() < 1e-14);
        }

        #[test]
        fn bracket_is_cross(u in v3(), v in v3()) {
            let (a, b) = (hat(&u), hat(&v));
            let br = a * b - b * a;
            prop_assert!((br - hat(&u.cross(&v))).norm() < 1e-12);
        }

        #[test]
        fn exp_matches_taylor(u in v3(), w in v3()) {
            let p = hat_c(&(complexify(&u) + complexify(&w) * C::new(0.0, 0.3)));
            let mut taylor = M2::identity();
            let mut term = M2::identity();
            for k in 1..40 {
                term = term * p * C::from(1.0 / k as f64);
                taylor += term;
            }
            prop_assert!((exp_sl2(&p) - taylor).norm() < 1e-12 * taylor.norm());
        }

        #[test]
        fn block_exp_matches_taylor(u in v3(), w in v3(), s in 0.001f64..1.0) {
            let p = hat(&(u * s));
            let q = hat(&w);
            // Taylor of [[P,Q],[0,P]] accumulated blockwise.
            let (mut e, mut d) = (M2::identity(), M2::zeros());
            let (mut tp, mut tq) = (M2::identity(), M2::zeros());
            for k in 1..50 {
                let np = tp * p * C::from(1.0 / k as f64);
                let nq = (tp * q + tq * p) * C::from(1.0 / k as f64);
                tp = np;
                tq = nq;
                e += tp;
                d += tq;
            }
            let (e2, d2) = exp_block(&p, &q);
            prop_assert!((e - e2).norm() < 1e-12);
            prop_assert!((d - d2).norm() < 1e-12 * (1.0 + d.norm()));
        }

        #[test]
        fn ad_is_rotation(u in v3(), v in v3(), th in -6.0f64..6.0) {
            prop_assume!(u.norm() > 0.1);
            let axis = u.normalize();
            let g = exp_sl2(&hat(&(axis * th)));
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), th);
            prop_assert!((real(&ad(&g, &complexify(&v))) - rot * v).norm() < 1e-12);
            prop_assert!((trace(&g).re - 2.0 * (0.5 * th).cos()).abs() < 1e-12);
        }

        #[test]
        fn quaternion_matches_exp(u in v3(), th in -6.0f64..6.0) {
            prop_assume!(u.norm() > 0.1);
            let axis = nalgebra::Unit::new_normalize(u);
            let q = UnitQuaternion::from_axis_angle(&axis, th);
            let g = exp_sl2(&hat(&(axis.into_inner() * th)));
            prop_assert!((from_quaternion(&q) - g).norm() < 1e-12);
            prop_assert!((to_quaternion(&g).coords - q.coords).norm() < 1e-12);
        }
    }

    #[test]
    fn full_turn_is_minus_one() {
        let g = exp_sl2(&hat(&(Vec3::z() * 2.0 * PI)));
        assert!((g + M2::identity()).norm() < 1e-14);
    }

    #[test]
    fn unitarize_projects() {
        let g = exp_sl2(&hat(&Vec3::new(0.3, -1.0, 0.5)));
        let noisy = g + M2::new(C::new(1e-9, 0.0), C::new(0.0, 2e-9), C::new(-1e-9, 0.0), C::new(0.0, 0.0));
        let u = unitarize(&noisy);
        let (d, un) = group_defects(&u);
        assert!(d < 1e-14 && un < 1e-14);
        assert!((u - g).norm() < 1e-8);
    }
}
