//! Complex spectral parameter: the hyperbolic family `F F*`, the ideal fixed
//! points `S_±` of `Ã_λ`, the spectral-curve image and Darboux transforms.
//!
//! With `û = −(i/2)u·σ` the eigenline field solves
//! `S′ = −Re(λ) T×S − Im(λ) S×(T×S)`, and the transforms are
//! `η_± = γ + (2 Im λ/|λ|²) S_±`.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::associated::{family_monodromy, integrate_frame, FamilyMonodromy, FrameTrajectory};
use crate::curve::{resample_arclength, Curve, Monodromy, SegmentPoly, Vec3, D8, HALF_WIDTH};
use crate::error::{Error, Result};
use crate::functionals::energy;
use crate::su2::{det, from_quaternion, inverse, real, trace, vee, C, M2};

/// Eigenline gap below which the monodromy counts as parabolic.
pub const BRANCH_GAP: f64 = 1e-8;

fn require_nonreal(lambda: C) -> Result<()> {
    if lambda.im == 0.0 {
        return Err(Error::Domain("real λ: use the associated family (Sym curve) instead".into()));
    }
    if !(lambda.re.is_finite() && lambda.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite λ".into()));
    }
    Ok(())
}

/// Point of `H³ = {p hermitian, det p = 1, Tr p > 0}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperbolicPoint {
    pub p: M2,
}

impl HyperbolicPoint {
    /// `(‖p − p*‖, |det p − 1|, Tr p)`.
    pub fn defects(&self) -> (f64, f64, f64) {
        ((self.p - self.p.adjoint()).norm(), (det(&self.p) - 1.0).norm(), trace(&self.p).re)
    }

    /// Hyperboloid coordinates `(t, x)` with `p = t + x·σ`.
    pub fn hyperboloid(&self) -> (f64, Vec3) {
        let p = &self.p;
        let t = 0.5 * (p[(0, 0)].re + p[(1, 1)].re);
        let x = Vec3::new(p[(0, 1)].re, -p[(0, 1)].im, 0.5 * (p[(0, 0)].re - p[(1, 1)].re));
        (t, x)
    }

    /// `vee(i(Tr p − 2p)/(2 + Tr p)) = 2x/(1 + t)`, in the ball of radius 2.
    pub fn stereographic(&self) -> Vec3 {
        let tr = trace(&self.p);
        let m = (M2::identity() * tr - self.p * C::from(2.0)) * C::new(0.0, 1.0) / (tr + 2.0);
        real(&vee(&m))
    }
}

/// `γ_λ = F F*` over one fundamental domain with its monodromy.
#[derive(Clone, Debug)]
pub struct HyperbolicFamily {
    pub lambda: C,
    /// `n + 1` points from the basepoint.
    pub points: Vec<HyperbolicPoint>,
    pub monodromy: FamilyMonodromy,
    pub seg_len: f64,
}

impl HyperbolicFamily {
    /// Speed at every sample from the 8th-order stencil. The `H³` metric is
    /// the one induced by `ℝ³ ≅ i·su₂` (`|i û| = |u|`), four times `−det`,
    /// in which the speed is `2 Im λ`.
    pub fn speeds(&self) -> Vec<f64> {
        let n = self.points.len() - 1;
        let a = self.monodromy.rotation;
        let ai = inverse(&a);
        let at = |i: isize| -> M2 {
            // p(x + kL) = Ã^k p(x) Ã^{k*}.
            let (base, k) = (i.rem_euclid(n as isize) as usize, i.div_euclid(n as isize));
            let mut p = self.points[base].p;
            for _ in 0..k.abs() {
                p = if k > 0 { a * p * a.adjoint() } else { ai * p * ai.adjoint() };
            }
            p
        };
        (0..n)
            .map(|i| {
                let i = i as isize;
                let mut d = M2::zeros();
                for (k, w) in D8.iter().enumerate() {
                    let o = k as isize + 1;
                    d += (at(i + o) - at(i - o)) * C::from(*w);
                }
                d /= C::from(self.seg_len);
                2.0 * (-det(&d)).re.max(0.0).sqrt()
            })
            .collect()
    }
}

pub fn hyperbolic_family(curve: &Curve, lambda: C) -> Result<HyperbolicFamily> {
    require_nonreal(lambda)?;
    let frame = integrate_frame(curve, lambda);
    let monodromy = family_monodromy(&frame, curve);
    let points = frame.f.iter().map(|f| HyperbolicPoint { p: f * f.adjoint() }).collect();
    Ok(HyperbolicFamily { lambda, points, monodromy, seg_len: curve.seg_len() })
}

/// `γ̂_λ = γ(x₀) + (1/Im λ) π∘γ_λ`; touches `γ` to first order at `x₀` and
/// lies in the ball of radius `2/Im λ` about `γ(x₀)`.
pub fn poincare_embed(family: &HyperbolicFamily, curve: &Curve) -> Vec<Vec3> {
    let basepoint = curve.samples()[curve.basepoint_index()];
    let s = 1.0 / family.lambda.im;
    family.points.iter().map(|p| basepoint + p.stereographic() * s).collect()
}

/// Bloch vector of a spinor: `(2 Re v̄₀v₁, 2 Im v̄₀v₁, |v₀|² − |v₁|²)/|v|²`.
pub fn bloch(v: &Vector2<C>) -> Vec3 {
    let (a, b) = (v[0], v[1]);
    let z = a.conj() * b;
    let n = a.norm_sqr() + b.norm_sqr();
    Vec3::new(2.0 * z.re, 2.0 * z.im, a.norm_sqr() - b.norm_sqr()) / n
}

/// Eigenvector of `m` for eigenvalue `mu`, from the better-conditioned row.
fn eigenvector(m: &M2, mu: C) -> Vector2<C> {
    let r0 = Vector2::new(m[(0, 1)], mu - m[(0, 0)]);
    let r1 = Vector2::new(mu - m[(1, 1)], m[(1, 0)]);
    let v = if r0.norm() >= r1.norm() { r0 } else { r1 };
    if v.norm() == 0.0 {
        // m is a multiple of the identity; every line is fixed.
        Vector2::new(C::from(1.0), C::from(0.0))
    } else {
        v
    }
}

/// Fixed points of `Ã_λ` on the sphere at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdealFixedPoints {
    pub lambda: C,
    pub s_plus: Vec3,
    pub s_minus: Vec3,
    /// Eigenvalues with `|μ₊| ≥ |μ₋|`.
    pub mu_plus: C,
    pub mu_minus: C,
    /// `Tr² Ã − 4`.
    pub discriminant: C,
    /// `|S₊ − S₋|`.
    pub gap: f64,
    pub branch_point: bool,
}

/// Ordered eigen-directions of an `SL₂ℂ` element.
fn fixed_points_of(m: &M2, lambda: C) -> IdealFixedPoints {
    let tr = trace(m);
    let disc = tr * tr - 4.0;
    let root = disc.sqrt();
    let (mut mu_p, mut mu_m) = ((tr + root) * 0.5, (tr - root) * 0.5);
    // Recover the smaller root from det = 1 to avoid cancellation.
    if mu_p.norm() < mu_m.norm() {
        std::mem::swap(&mut mu_p, &mut mu_m);
    }
    if mu_p.norm() > 0.0 {
        mu_m = C::from(1.0) / mu_p;
    }
    let mut sp = bloch(&eigenvector(m, mu_p));
    let mut sm = bloch(&eigenvector(m, mu_m));
    let tie = (mu_p.norm() - mu_m.norm()).abs() <= 1e-12 * mu_p.norm();
    let lex = |a: &Vec3, b: &Vec3| a.iter().zip(b.iter()).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y);
    if tie && lex(&sp, &sm) {
        std::mem::swap(&mut sp, &mut sm);
        std::mem::swap(&mut mu_p, &mut mu_m);
    }
    let gap = (sp - sm).norm();
    let branch_point = gap < BRANCH_GAP;
    if branch_point {
        sm = sp;
    }
    IdealFixedPoints { lambda, s_plus: sp, s_minus: sm, mu_plus: mu_p, mu_minus: mu_m, discriminant: disc, gap, branch_point }
}

/// Fixed points of the family monodromy at the basepoint. Real λ is
/// accepted for continuity checks; `S_±` are then `±` the rotation axis.
pub fn fixed_points(curve: &Curve, lambda: C) -> IdealFixedPoints {
    let frame = integrate_frame(curve, lambda);
    fixed_points_of(&family_monodromy(&frame, curve).rotation, lambda)
}

/// Real structure covering `λ ↦ λ̄`: `S_±(λ̄) = −S_±(λ)`.
pub fn real_structure(p: &IdealFixedPoints) -> (Vec3, Vec3) {
    (-p.s_plus, -p.s_minus)
}

/// One grid sample of the spectral-curve image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSample {
    pub lambda: C,
    pub s_plus: Vec3,
    pub s_minus: Vec3,
    pub discriminant: C,
    pub branch_point: bool,
}

/// `S_±` over `re × im`. Sheets are labelled by eigenvalue modulus and then
/// matched for continuity with the previous sample (left neighbour, or the
/// sample above at the start of a row).
pub fn spectral_image_scan(curve: &Curve, re: &[f64], im: &[f64]) -> Vec<SpectralSample> {
    let grid: Vec<C> = im.iter().flat_map(|&y| re.iter().map(move |&x| C::new(x, y))).collect();
    let mut out: Vec<SpectralSample> = grid
        .par_iter()
        .map(|&l| {
            let p = fixed_points(curve, l);
            SpectralSample { lambda: l, s_plus: p.s_plus, s_minus: p.s_minus, discriminant: p.discriminant, branch_point: p.branch_point }
        })
        .collect();
    let w = re.len();
    for i in 1..out.len() {
        let prev = if i % w == 0 { out[i - w] } else { out[i - 1] };
        let cur = &mut out[i];
        let keep = (cur.s_plus - prev.s_plus).norm() + (cur.s_minus - prev.s_minus).norm();
        let swap = (cur.s_plus - prev.s_minus).norm() + (cur.s_minus - prev.s_plus).norm();
        if swap < keep {
            std::mem::swap(&mut cur.s_plus, &mut cur.s_minus);
        }
    }
    out
}

/// CSV `re_lambda,im_lambda,sheet,Sx,Sy,Sz,discriminant,flag`.
pub fn spectral_scan_csv(samples: &[SpectralSample]) -> String {
    let mut s = String::from("re_lambda,im_lambda,sheet,Sx,Sy,Sz,discriminant,flag\n");
    for p in samples {
        for (sheet, v) in [("+", p.s_plus), ("-", p.s_minus)] {
            s.push_str(&format!(
                "{:.17e},{:.17e},{sheet},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                p.lambda.re,
                p.lambda.im,
                v.x,
                v.y,
                v.z,
                p.discriminant.norm(),
                if p.branch_point { "branch" } else { "ok" }
            ));
        }
    }
    s
}

/// Right-hand side `S′ = −Re(λ) T×S − Im(λ) S×(T×S)`.
pub fn s_ode(lambda: C, t: &Vec3, s: &Vec3) -> Vec3 {
    -t.cross(s) * lambda.re - s.cross(&t.cross(s)) * lambda.im
}

/// `S_±` at the frame samples from `F(x)⁻¹ Ã F(x)`.
fn conjugated_fields(frame: &FrameTrajectory, mono: &FamilyMonodromy) -> (Vec<Vec3>, Vec<Vec3>) {
    frame
        .f
        .iter()
        .map(|f| {
            let p = fixed_points_of(&(inverse(f) * mono.rotation * f), frame.lambda);
            (p.s_plus, p.s_minus)
        })
        .unzip()
}

/// `S_±` at the frame samples from the eigen-spinors of `Ã`, carried by the
/// segment propagators in their non-contracting directions: `v₋` forwards
/// from `x₀` (`v ↦ E_j⁻¹v`), `v₊` backwards from `x₀ + L` where it is `A v₊`.
fn propagated_fields(frame: &FrameTrajectory, mono: &FamilyMonodromy, curve: &Curve) -> (Vec<Vec3>, Vec<Vec3>) {
    let n = frame.steps.len();
    let p = fixed_points_of(&mono.rotation, frame.lambda);
    let a = from_quaternion(&curve.monodromy().rotation);
    let mut minus = Vec::with_capacity(n + 1);
    let mut v = eigenvector(&mono.rotation, p.mu_minus).normalize();
    minus.push(bloch(&v));
    for e in &frame.steps {
        v = (inverse(e) * v).normalize();
        minus.push(bloch(&v));
    }
    let mut plus = vec![Vec3::zeros(); n + 1];
    let mut v = (a * eigenvector(&mono.rotation, p.mu_plus)).normalize();
    plus[n] = bloch(&v);
    for j in (0..n).rev() {
        v = (frame.steps[j] * v).normalize();
        plus[j] = bloch(&v);
    }
    (plus, minus)
}

/// RK4 transport of `s0` along the S ODE over one domain from the
/// basepoint (`forward`) or backwards from its end.
pub fn transport_fixed_point(curve: &Curve, lambda: C, s0: Vec3, forward: bool) -> Vec<Vec3> {
    let n = curve.n();
    let b = curve.basepoint_index();
    let lo = b as isize - HALF_WIDTH as isize;
    let ext: Vec<Vec3> = (lo..(b + n + HALF_WIDTH + 1) as isize).map(|i| curve.point(i)).collect();
    let m = ((lambda.norm() * curve.seg_len() / 0.05).ceil() as usize).max(4);
    let h = curve.seg_len() / m as f64 * if forward { 1.0 } else { -1.0 };
    let mut out = vec![Vec3::zeros(); n + 1];
    let mut s = s0.normalize();
    let order: Vec<usize> = if forward { (0..n).collect() } else { (0..n).rev().collect() };
    out[if forward { 0 } else { n }] = s;
    for j in order {
        let poly = SegmentPoly::new(&ext, j + HALF_WIDTH);
        let tan = |u: f64| poly.eval(u).1.normalize();
        for k in 0..m {
            let (u0, u1) = if forward {
                (k as f64 / m as f64, (k + 1) as f64 / m as f64)
            } else {
                (1.0 - k as f64 / m as f64, 1.0 - (k + 1) as f64 / m as f64)
            };
            let um = 0.5 * (u0 + u1);
            let (t0, tm, t1) = (tan(u0), tan(um), tan(u1));
            let k1 = s_ode(lambda, &t0, &s);
            let k2 = s_ode(lambda, &tm, &(s + k1 * (0.5 * h)));
            let k3 = s_ode(lambda, &tm, &(s + k2 * (0.5 * h)));
            let k4 = s_ode(lambda, &t1, &(s + k3 * h));
            s = (s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)).normalize();
        }
        out[if forward { j + 1 } else { j }] = s;
    }
    out
}

/// Which fixed point generates the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sheet {
    Plus,
    Minus,
}

impl std::str::FromStr for Sheet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sheet::Plus),
            "-" | "minus" => Ok(Sheet::Minus),
            other => Err(Error::InvalidInput(format!("sheet must be + or -, got {other:?}"))),
        }
    }
}

/// Darboux transform with its verification metrics.
#[derive(Clone, Debug)]
pub struct DarbouxTransform {
    pub lambda: C,
    pub sheet: Sheet,
    /// `2 Im λ / |λ|²`.
    pub offset: f64,
    /// Arclength-resampled `η` with the monodromy of `γ`.
    pub curve: Curve,
    /// `η` at the input samples before resampling.
    pub raw: Vec<Vec3>,
    /// Largest `| |η − γ| − offset |` at the input samples.
    pub distance_defect: f64,
    /// Relative segment-length deviation of `raw` from `Δx`.
    pub arclength_defect: f64,
    /// `|η(x₀ + L) − h(η(x₀))| / Δx`.
    pub wrap_defect: f64,
    /// Largest `|S_ODE − S|` along the domain.
    pub transport_defect: f64,
    /// Largest `|S_conj − S|`, with `S_conj` the eigenline of `F⁻¹ÃF`.
    pub conjugation_defect: f64,
}

impl DarbouxTransform {
    /// `(k, E_k(η) − E_k(γ))` for `k = 1, 2, 3`.
    pub fn energy_deltas(&self, original: &Curve) -> Result<Vec<(i32, f64)>> {
        [1, 2, 3]
            .iter()
            .map(|&k| {
                let d = energy(k, &self.curve, None)? - energy(k, original, None)?;
                let d = if k == 2 { d - 2.0 * std::f64::consts::PI * (d / (2.0 * std::f64::consts::PI)).round() } else { d };
                Ok((k, d))
            })
            .collect()
    }
}

/// `η_± = γ + (2 Im λ/|λ|²) S_±` with `S_±` the propagated eigen-spinors;
/// the S ODE transport and the eigenlines of `F⁻¹ÃF` are compared as checks.
pub fn darboux_transform(curve: &Curve, lambda: C, sheet: Sheet) -> Result<DarbouxTransform> {
    require_nonreal(lambda)?;
    let frame = integrate_frame(curve, lambda);
    let mono = family_monodromy(&frame, curve);
    let fp = fixed_points_of(&mono.rotation, lambda);
    if fp.branch_point {
        return Err(Error::BranchPoint { gap: fp.gap });
    }
    let (plus, minus) = propagated_fields(&frame, &mono, curve);
    let field = if sheet == Sheet::Plus { plus } else { minus };
    let (cplus, cminus) = conjugated_fields(&frame, &mono);
    let conj = if sheet == Sheet::Plus { cplus } else { cminus };
    let conjugation_defect = field.iter().zip(&conj).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let ode = match sheet {
        Sheet::Minus => transport_fixed_point(curve, lambda, field[0], true),
        Sheet::Plus => transport_fixed_point(curve, lambda, field[curve.n()], false),
    };
    let transport_defect = field.iter().zip(&ode).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let n = curve.n();
    let b = frame.basepoint;
    let m: &Monodromy = curve.monodromy();
    let offset = 2.0 * lambda.im / lambda.norm_sqr();
    // Frame sample j sits at curve index b + j.
    let along: Vec<Vec3> = (0..=n).map(|j| curve.point((b + j) as isize) + field[j] * offset).collect();
    let wrap_defect = (m.apply(&along[0]) - along[n]).norm() / curve.seg_len();
    let raw: Vec<Vec3> = (0..n).map(|i| if i >= b { along[i - b] } else { m.apply_inverse(&along[i + n - b]) }).collect();
    let distance_defect =
        raw.iter().zip(curve.samples()).map(|(e, g)| ((e - g).norm() - offset).abs()).fold(0.0, f64::max);
    let raw_curve = Curve::new(raw.clone(), curve.seg_len(), *m, curve.basepoint_index())?;
    let arclength_defect = raw_curve.check_invariants().segment_deviation;
    let resampled = resample_arclength(&raw, m, n)?;
    Ok(DarbouxTransform {
        lambda,
        sheet,
        offset,
        curve: resampled,
        raw,
        distance_defect,
        arclength_defect,
        wrap_defect,
        transport_defect,
        conjugation_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::associated::monodromy_angle;
    use crate::curve::{make_circle, make_helix, make_line};
    use std::f64::consts::PI;

    #[test]
    fn hyperbolic_points_and_speed() {
        let c = make_circle(1.0, 256).unwrap();
        let fam = hyperbolic_family(&c, C::new(1.0, 1.0)).unwrap();
        assert_eq!(fam.points[0].p, M2::identity());
        for p in &fam.points {
            let (h, d, t) = p.defects();
            assert!(h < 1e-10 * t && d < 1e-10 && t > 0.0);
        }
        let worst = fam.speeds().iter().map(|s| (s - 2.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        let line = make_line(2.0, 64).unwrap();
        let fam = hyperbolic_family(&line, C::new(0.0, 1.0)).unwrap();
        assert!(fam.speeds().iter().all(|s| (s - 2.0).abs() < 1e-8));
        assert!(matches!(hyperbolic_family(&c, C::from(1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn poincare_ball_and_tangency() {
        let c = make_helix(1.0, 1.0, 1.0, 256).unwrap();
        let lambda = C::new(0.5, 2.0);
        let fam = hyperbolic_family(&c, lambda).unwrap();
        let pts = poincare_embed(&fam, &c);
        assert_eq!(pts[0], c.samples()[0]);
        assert!(pts.iter().all(|p| (p - c.samples()[0]).norm() < 2.0 / lambda.im + 1e-10));
        let tan = (pts[1] - pts[0]).normalize();
        let t0 = c.tangent().values[0];
        assert!(tan.dot(&t0).min(1.0).acos() < 2e-2);
        // One-sided difference is first order; the image is tangent to T(x₀).
        let fine = make_helix(1.0, 1.0, 1.0, 4096).unwrap();
        let p = poincare_embed(&hyperbolic_family(&fine, lambda).unwrap(), &fine);
        let d = (p[1] - p[0]) / fine.seg_len();
        assert!((d - fine.tangent().values[0]).norm() < 1e-2, "{:?}", d);
    }

    #[test]
    fn line_fixed_points() {
        let l = make_line(1.0, 64).unwrap();
        let p = fixed_points(&l, C::new(1.0, 1.0));
        assert!((p.s_plus - Vec3::x()).norm() < 1e-10, "{:?}", p.s_plus);
        assert!((p.s_minus + Vec3::x()).norm() < 1e-10);
        assert!(p.mu_plus.norm() >= p.mu_minus.norm());
        let scan = spectral_image_scan(&l, &[0.5, 1.0, 1.5], &[0.2, 0.6]);
        assert!(scan.iter().all(|s| (s.s_plus - Vec3::x()).norm() < 1e-10 && (s.s_minus + Vec3::x()).norm() < 1e-10));
    }

    #[test]
    fn real_lambda_matches_axis() {
        let c = make_circle(1.0, 256).unwrap();
        let axis = monodromy_angle(&c, 1.3).unwrap().axis;
        let p = fixed_points(&c, C::from(1.3));
        let d = (p.s_plus - axis).norm().min((p.s_plus + axis).norm());
        assert!(d < 1e-6 && (p.s_plus + p.s_minus).norm() < 1e-6, "{p:?}");
    }

    #[test]
    fn conjugation_symmetry() {
        let c = make_helix(1.0, 1.0, 1.0, 256).unwrap();
        for l in [C::new(0.7, 0.4), C::new(1.0, 1.0), C::new(-0.3, 1.5)] {
            let p = fixed_points(&c, l);
            let q = fixed_points(&c, l.conj());
            let (sp, sm) = real_structure(&p);
            assert!((q.s_plus - sp).norm() < 1e-8 && (q.s_minus - sm).norm() < 1e-8, "{l}");
        }
    }

    #[test]
    fn circle_discriminant_closed_form() {
        let c = make_circle(1.0, 256).unwrap();
        let re: Vec<f64> = (0..8).map(|i| 0.5 + 1.5 * i as f64 / 7.0).collect();
        let im: Vec<f64> = (0..8).map(|i| 0.1 + 0.9 * i as f64 / 7.0).collect();
        let scan = spectral_image_scan(&c, &re, &im);
        for s in &scan {
            let half = PI * (C::from(1.0) + s.lambda * s.lambda).sqrt();
            let want = -(half.sin() * half.sin()) * 4.0;
            assert!((s.discriminant - want).norm() < 1e-6 * want.norm().max(1.0), "{}", s.lambda);
            assert!(!s.branch_point && s.discriminant.norm() > 1e-2);
        }
    }

    #[test]
    fn helix_sheets_are_continuous() {
        let c = make_helix(1.0, 1.0, 1.0, 256).unwrap();
        let re: Vec<f64> = (0..8).map(|i| 0.5 + 1.5 * i as f64 / 7.0).collect();
        let im: Vec<f64> = (0..8).map(|i| 0.1 + 0.9 * i as f64 / 7.0).collect();
        let scan = spectral_image_scan(&c, &re, &im);
        for i in 1..scan.len() {
            if i % 8 == 0 {
                continue;
            }
            let (a, b) = (&scan[i - 1], &scan[i]);
            assert!((a.s_plus - b.s_plus).norm() < 0.2 && (a.s_minus - b.s_minus).norm() < 0.2, "{}", b.lambda);
        }
    }

    #[test]
    fn ode_preserves_sphere() {
        let t = Vec3::new(0.3, -0.2, 0.9).normalize();
        let s = Vec3::new(0.1, 0.8, -0.3).normalize();
        assert!(s_ode(C::new(0.7, 1.3), &t, &s).dot(&s).abs() < 1e-15);
    }

    #[test]
    fn line_transform() {
        let l = make_line(2.0, 64).unwrap();
        let d = darboux_transform(&l, C::new(0.0, 1.0), Sheet::Minus).unwrap();
        assert!((d.offset - 2.0).abs() < 1e-15);
        for (e, g) in d.raw.iter().zip(l.samples()) {
            assert!((e - (g - Vec3::x() * 2.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn helix_transform_invariants() {
        let c = make_helix(1.0, 1.0, 1.0, 256).unwrap();
        for sheet in [Sheet::Plus, Sheet::Minus] {
            let d = darboux_transform(&c, C::new(0.5, 2.0), sheet).unwrap();
            assert!(d.distance_defect < 1e-8);
            assert!(d.arclength_defect < 1e-6, "{sheet:?} {:e}", d.arclength_defect);
            assert!(d.wrap_defect < 1e-8, "{:e}", d.wrap_defect);
            assert!(d.transport_defect < 1e-6, "{:e}", d.transport_defect);
            assert!(d.conjugation_defect < 1e-6, "{:e}", d.conjugation_defect);
            for (k, delta) in d.energy_deltas(&c).unwrap() {
                assert!(delta.abs() < 1e-4, "{sheet:?} E{k} {delta:e}");
            }
        }
    }

    #[test]
    fn degenerate_limit() {
        let c = make_circle(1.0, 128).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let d = darboux_transform(&c, C::new(1.0, eps), Sheet::Minus).unwrap();
            let dist = d.raw.iter().zip(c.samples()).map(|(e, g)| (e - g).norm()).fold(0.0, f64::max);
            assert!(dist < last && (dist - d.offset).abs() < 1e-8);
            last = dist;
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn ode_is_tangent(t in proptest::array::uniform3(-1.0f64..1.0), v in proptest::array::uniform3(-1.0f64..1.0), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let (t, v) = (Vec3::from(t), Vec3::from(v));
            proptest::prop_assume!(t.norm() > 0.1 && v.norm() > 0.1);
            let (t, v) = (t.normalize(), v.normalize());
            proptest::prop_assert!(s_ode(C::new(re, im), &t, &v).dot(&v).abs() < 1e-14);
        }

        #[test]
        fn spectral_reality(re in -2.0f64..2.0, im in 0.2f64..1.5, seed in 0u64..50) {
            let c = crate::curve::make_perturbed_circle(1.0, 0.05, seed, 64).unwrap();
            let p = fixed_points(&c, C::new(re, im));
            let q = fixed_points(&c, C::new(re, -im));
            proptest::prop_assume!(!p.branch_point);
            let (sp, sm) = real_structure(&p);
            proptest::prop_assert!((q.s_plus - sp).norm() < 1e-8 && (q.s_minus - sm).norm() < 1e-8);
        }

        #[test]
        fn transforms_keep_distance_and_arclength(re in -1.5f64..1.5, im in 0.3f64..1.5, seed in 0u64..50) {
            let c = crate::curve::make_perturbed_circle(1.0, 0.05, seed, 128).unwrap();
            let d = darboux_transform(&c, C::new(re, im), Sheet::Minus).unwrap();
            proptest::prop_assert!(d.distance_defect < 1e-8);
            proptest::prop_assert!(d.arclength_defect < 1e-6, "{:e}", d.arclength_defect);
            proptest::prop_assert!(d.transport_defect < 1e-6, "{:e}", d.transport_defect);
        }
    }
}
