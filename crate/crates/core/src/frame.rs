//! Rotation-minimizing normal frames, total torsion and complex curvature.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::curve::{ddx, Curve, CurveField, Vec3};

/// Parallel unit normal field and its holonomy against the monodromy.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalFrame {
    pub nu: CurveField,
    /// Holonomy angle α in (−π, π].
    pub holonomy_angle: f64,
    /// Winding hint: `holonomy_angle + 2π·winding` is the cumulative angle.
    pub winding: i64,
}

impl NormalFrame {
    /// Continuous representative `α + 2π·winding`.
    pub fn unwrapped(&self) -> f64 {
        self.holonomy_angle + 2.0 * PI * self.winding as f64
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Reflect `v` in the plane orthogonal to `n` (`c = |n|²`).
fn reflect(v: &Vec3, n: &Vec3, c: f64) -> Vec3 {
    v - n * (2.0 * n.dot(v) / c)
}

/// Transport `nu0` (normal at sample 0) through samples 0..=n with the
/// double-reflection rule. Returns n + 1 normals; the last one lives at
/// `h(p_0)` with tangent `A T_0`.
fn transport(curve: &Curve, t: &CurveField, nu0: Vec3) -> Vec<Vec3> {
    let n = curve.n();
    let m = curve.monodromy();
    let mut out = Vec::with_capacity(n + 1);
    let mut r = nu0;
    out.push(r);
    for i in 0..n {
        let x0 = curve.point(i as isize);
        let x1 = curve.point(i as isize + 1);
        let t0 = t.values[i];
        let t1 = t.at(i as isize + 1, m);
        let v1 = x1 - x0;
        let c1 = v1.norm_squared();
        let r_l = reflect(&r, &v1, c1);
        let t_l = reflect(&t0, &v1, c1);
        let v2 = t1 - t_l;
        let c2 = v2.norm_squared();
        r = if c2 > 1e-300 { reflect(&r_l, &v2, c2) } else { r_l };
        // Remove drift off the normal plane and renormalize.
        r = (r - t1 * t1.dot(&r)).normalize();
        out.push(r);
    }
    out
}

/// Direction used to build the equivariant reference normals: the
/// monodromy axis when the rotation is nontrivial, then the translation
/// direction, else the candidate direction staying farthest from the
/// tangent image.
fn reference_direction(curve: &Curve, t: &CurveField) -> Vec3 {
    if let Some(axis) = curve.monodromy().axis() {
        return axis;
    }
    let clearance = |e: &Vec3| t.values.iter().map(|v| v.cross(e).norm()).fold(f64::INFINITY, f64::min);
    let a = curve.monodromy().translation;
    if a.norm() > 0.0 {
        let e = a.normalize();
        if clearance(&e) > 0.1 {
            return e;
        }
    }
    let mut best = (Vec3::z(), -1.0);
    let s = 1.0 / 3f64.sqrt();
    let candidates = [
        Vec3::x(),
        Vec3::y(),
        Vec3::z(),
        Vec3::new(s, s, s),
        Vec3::new(-s, s, s),
        Vec3::new(s, -s, s),
        Vec3::new(s, s, -s),
    ];
    for e in candidates {
        let worst = clearance(&e);
        if worst > best.1 {
            best = (e, worst);
        }
    }
    best.0
}

fn phase(nu: &Vec3, t: &Vec3, e: &Vec3) -> Option<f64> {
    let r = e - t * t.dot(e);
    let nr = r.norm();
    if nr < 1e-6 {
        return None;
    }
    let r = r / nr;
    Some(nu.dot(&t.cross(&r)).atan2(nu.dot(&r)))
}

/// Parallel normal frame with initial normal `nu0` (projected to T_0^⊥).
pub fn parallel_normal_frame_from(curve: &Curve, nu0: Vec3) -> NormalFrame {
    let t = curve.tangent();
    let t0 = t.values[0];
    let mut nu0 = nu0 - t0 * t0.dot(&nu0);
    if nu0.norm() < 1e-8 {
        nu0 = t0.cross(&Vec3::x());
        if nu0.norm() < 1e-8 {
            nu0 = t0.cross(&Vec3::y());
        }
    }
    let nu0 = nu0.normalize();
    let path = transport(curve, &t, nu0);
    let n = curve.n();
    let m = curve.monodromy();
    let t_end = m.rotate(&t0);
    let a_nu0 = m.rotate(&nu0);
    // α: angle of A ν_0 measured from ν_n in the complex structure T×.
    let alpha = a_nu0.dot(&t_end.cross(&path[n])).atan2(a_nu0.dot(&path[n]));
    let e = reference_direction(curve, &t);
    let mut cum: Option<f64> = Some(0.0);
    let mut prev = phase(&path[0], &t0, &e);
    for i in 1..=n {
        let ti = if i < n { t.values[i] } else { t_end };
        let cur = phase(&path[i], &ti, &e);
        cum = match (cum, prev, cur) {
            (Some(c), Some(p), Some(q)) => Some(c + wrap_angle(q - p)),
            _ => None,
        };
        prev = cur;
    }
    let wrapped = wrap_angle(alpha);
    let winding = cum.map_or(0, |c| ((-c - wrapped) / (2.0 * PI)).round() as i64);
    NormalFrame { nu: CurveField::new(path[..n].to_vec()), holonomy_angle: wrapped, winding }
}

/// Parallel normal frame started from a default normal at sample 0.
pub fn parallel_normal_frame(curve: &Curve) -> NormalFrame {
    let t = curve.tangent();
    let e = reference_direction(curve, &t);
    parallel_normal_frame_from(curve, e)
}

/// Total torsion E₂ as (wrapped angle, winding hint).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TotalTorsion {
    pub wrapped: f64,
    pub winding: i64,
}

impl TotalTorsion {
    pub fn value(&self) -> f64 {
        self.wrapped + 2.0 * PI * self.winding as f64
    }
}

pub fn total_torsion(curve: &Curve) -> TotalTorsion {
    let f = parallel_normal_frame(curve);
    TotalTorsion { wrapped: f.holonomy_angle, winding: f.winding }
}

/// Complex curvature `ψ = (γ'', ν) + i (γ'', T×ν)` in the parallel frame.
pub fn complex_curvature(curve: &Curve) -> Vec<Complex64> {
    let t = curve.tangent();
    let k = ddx(&t, curve);
    let frame = parallel_normal_frame(curve);
    k.values
        .iter()
        .zip(&frame.nu.values)
        .zip(&t.values)
        .map(|((k, nu), t)| Complex64::new(k.dot(nu), k.dot(&t.cross(nu))))
        .collect()
}
