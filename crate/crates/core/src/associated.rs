//! Associated family: the frame `F′ = F λT̂`, the Sym curves `γ_λ`, the
//! family monodromy `Ã_λ` and its rotation angle `θ_λ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::curve::{resample_arclength, Curve, CurveField, Monodromy, SegmentPoly, Stencil, Vec3, HALF_WIDTH};
use crate::error::{Error, Result};
use crate::functionals::energy_with;
use crate::hierarchy::Calculus;
use crate::su2::{
    ad, complexify, det, det_normalize, exp_block, from_quaternion, group_defects, hat, inverse, real, to_quaternion,
    trace, unitarize, vee, CVec3, C, M2,
};

/// Largest `|λ| h` per Magnus substep.
const MAX_STEP_PHASE: f64 = 0.05;

/// Relative roundoff floor of `det F` in units of `‖F‖²`.
const DET_ROUNDOFF: f64 = 1e-14;

/// Element `[[p, q], [0, p]]` of the augmented algebra carrying `∂/∂λ`.
#[derive(Clone, Copy, Debug)]
struct Block {
    p: M2,
    q: M2,
}

impl Block {
    fn mul(&self, o: &Block) -> Block {
        Block { p: self.p * o.p, q: self.p * o.q + self.q * o.p }
    }

    fn add(&self, o: &Block) -> Block {
        Block { p: self.p + o.p, q: self.q + o.q }
    }

    fn scale(&self, s: f64) -> Block {
        Block { p: self.p * C::from(s), q: self.q * C::from(s) }
    }
}

/// Bracket for the right action `Y′ = Y A`: `yx − xy`.
fn br(x: &Block, y: &Block) -> Block {
    let a = y.mul(x);
    let b = x.mul(y);
    Block { p: a.p - b.p, q: a.q - b.q }
}

/// Frame and its λ-derivative at samples `x₀, x₀ + Δx, …, x₀ + L`.
#[derive(Clone, Debug)]
pub struct FrameTrajectory {
    pub lambda: C,
    pub f: Vec<M2>,
    pub df_dlambda: Vec<M2>,
    /// Per-segment propagators `F_j⁻¹F_{j+1}`, formed without `F`.
    pub steps: Vec<M2>,
    pub basepoint: usize,
    /// Largest group defect removed by the per-sample projection.
    pub projection_defect: f64,
}

impl FrameTrajectory {
    pub fn is_real(&self) -> bool {
        self.lambda.im == 0.0
    }

    /// `F` at the end of the fundamental domain.
    pub fn end(&self) -> &M2 {
        self.f.last().expect("non-empty frame")
    }

    /// Largest `(|det − 1|, ‖F*F − 1‖)` over all samples.
    pub fn group_defects(&self) -> (f64, f64) {
        self.f.iter().map(group_defects).fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    }
}

/// Samples `b − 4 … b + n + 4` around a basepoint `b`.
fn extended_points(curve: &Curve, b: usize) -> Vec<Vec3> {
    let lo = b as isize - HALF_WIDTH as isize;
    let hi = (b + curve.n() + HALF_WIDTH + 1) as isize;
    (lo..hi).map(|i| curve.point(i)).collect()
}

/// 6th-order Magnus integration of `F′ = F λT̂`, `∂_λF′ = ∂_λF λT̂ + F T̂`
/// from the curve's basepoint over one fundamental domain. `T` comes from
/// the degree-7 interpolant. After each sample the frame is projected to
/// `SU₂` (real λ) or `SL₂ℂ`.
pub fn integrate_frame(curve: &Curve, lambda: C) -> FrameTrajectory {
    let n = curve.n();
    let b = curve.basepoint_index();
    let ext = extended_points(curve, b);
    let m = ((lambda.norm() * curve.seg_len() / MAX_STEP_PHASE).ceil() as usize).max(1);
    let h = curve.seg_len() / m as f64;
    let r = 15f64.sqrt();
    let nodes = [0.5 - r / 10.0, 0.5, 0.5 + r / 10.0];
    let real = lambda.im == 0.0;
    let mut f = Vec::with_capacity(n + 1);
    let mut g = Vec::with_capacity(n + 1);
    let (mut fc, mut gc) = (M2::identity(), M2::zeros());
    f.push(fc);
    g.push(gc);
    let mut steps = Vec::with_capacity(n);
    let mut defect: f64 = 0.0;
    for j in 0..n {
        let poly = SegmentPoly::new(&ext, j + HALF_WIDTH);
        let mut seg = M2::identity();
        for s in 0..m {
            let a: Vec<Block> = nodes
                .iter()
                .map(|c| {
                    let t = poly.eval((s as f64 + c) / m as f64).1.normalize();
                    let th = hat(&t);
                    Block { p: th * lambda, q: th }
                })
                .collect();
            let a1 = a[1].scale(h);
            let a2 = a[2].add(&a[0].scale(-1.0)).scale(r * h / 3.0);
            let a3 = a[2].add(&a[1].scale(-2.0)).add(&a[0]).scale(10.0 * h / 3.0);
            let c1 = br(&a1, &a2);
            let c2 = br(&a1, &a3.scale(2.0).add(&c1)).scale(-1.0 / 60.0);
            let inner = br(&a1.scale(-20.0).add(&a3.scale(-1.0)).add(&c1), &a2.add(&c2));
            let omega = a1.add(&a3.scale(1.0 / 12.0)).add(&inner.scale(1.0 / 240.0));
            let (e, d) = exp_block(&omega.p, &omega.q);
            gc = fc * d + gc * e;
            fc *= e;
            seg *= e;
        }
        steps.push(seg);
        let proj = if real {
            unitarize(&fc)
        } else if (det(&fc) - 1.0).norm() > DET_ROUNDOFF * fc.norm_squared() {
            det_normalize(&fc)
        } else {
            // det F is evaluated with error ~ ε‖F‖²; smaller drifts are noise.
            fc
        };
        defect = defect.max((proj - fc).norm());
        fc = proj;
        f.push(fc);
        g.push(gc);
    }
    FrameTrajectory { lambda, f, df_dlambda: g, steps, basepoint: b, projection_defect: defect }
}

/// `γ_λ(x) = γ(x₀) + vee(∂_λF F⁻¹)` at the `n + 1` frame samples.
pub fn sym_curve(frame: &FrameTrajectory, curve: &Curve) -> Result<Vec<Vec3>> {
    if !frame.is_real() {
        return Err(Error::Domain("the Sym formula needs real λ; use the hyperbolic family for complex λ".into()));
    }
    let g0 = curve.samples()[frame.basepoint];
    Ok(frame.f.iter().zip(&frame.df_dlambda).map(|(f, g)| g0 + real(&vee(&(g * inverse(f))))).collect())
}

/// `h_λ(p) = Ã p Ã⁻¹ + a_λ` with `Ã = F(x₀ + L) A`.
#[derive(Clone, Copy, Debug)]
pub struct FamilyMonodromy {
    pub lambda: C,
    pub rotation: M2,
    pub d_rotation: M2,
    /// `a_λ = vee(∂_λÃ Ã⁻¹) + γ(x₀) − Ad_Ã γ(x₀)`.
    pub translation: CVec3,
}

impl FamilyMonodromy {
    /// Euclidean motion for real λ.
    pub fn to_monodromy(&self) -> Result<Monodromy> {
        if self.lambda.im != 0.0 {
            return Err(Error::Domain("Euclidean monodromy needs real λ".into()));
        }
        Ok(Monodromy::new(to_quaternion(&self.rotation), real(&self.translation)))
    }

    /// `(θ, u)` with `Ã = cos(θ/2) − i sin(θ/2) u·σ`, `θ ∈ [0, 2π]`; `u` is
    /// `None` when `Ã = ±1`.
    pub fn rotation_angle(&self) -> (f64, Option<Vec3>) {
        let c = 0.5 * trace(&self.rotation).re;
        let s = real(&vee(&(self.rotation - M2::identity() * C::from(c)))) * 0.5;
        let sn = s.norm();
        (2.0 * sn.atan2(c), (sn > 1e-12).then(|| s / sn))
    }
}

pub fn family_monodromy(frame: &FrameTrajectory, curve: &Curve) -> FamilyMonodromy {
    let a = from_quaternion(&curve.monodromy().rotation);
    let rot = frame.end() * a;
    let drot = frame.df_dlambda.last().expect("non-empty frame") * a;
    let g0 = complexify(&curve.samples()[frame.basepoint]);
    let translation = vee(&(drot * inverse(&rot))) + g0 - ad(&rot, &g0);
    FamilyMonodromy { lambda: frame.lambda, rotation: rot, d_rotation: drot, translation }
}

/// The associated curve `γ_λ` as a [`Curve`] with the family monodromy,
/// resampled to arclength with the input resolution.
pub fn associated_curve(curve: &Curve, lambda: f64) -> Result<Curve> {
    let frame = integrate_frame(curve, C::from(lambda));
    let pts = sym_curve(&frame, curve)?;
    let mono = family_monodromy(&frame, curve).to_monodromy()?;
    let n = curve.n();
    let out = resample_arclength(&pts[..n], &mono, n)?;
    out.with_basepoint(0)
}

/// Rotation angle of `Ã_λ` on a continuous branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonodromyAngle {
    pub lambda: f64,
    pub theta: f64,
    /// Unit rotation axis, oriented so that `(axis, T(x₀)) ≥ 0`.
    pub axis: Vec3,
    /// False where `Ã = ±1`; `axis` is then `T(x₀)`.
    pub axis_defined: bool,
    /// Spherical sector area; `None` where `1 + (Y, T)` vanishes.
    pub area: Option<f64>,
    /// `θ − λE₁ − E₂ − Area` reduced to `(−π, π]`.
    pub gauss_bonnet_residual: Option<f64>,
}

/// Scan rows `lambda,theta,axis_x,axis_y,axis_z,area,residual`.
pub fn angle_scan_csv(scan: &[MonodromyAngle]) -> String {
    let mut s = String::from("lambda,theta,axis_x,axis_y,axis_z,area,residual\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.17e}"));
    for a in scan {
        s.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}\n",
            a.lambda,
            a.theta,
            a.axis.x,
            a.axis.y,
            a.axis.z,
            opt(a.area),
            opt(a.gauss_bonnet_residual)
        ));
    }
    s
}

fn wrap_pi(a: f64) -> f64 {
    a - 2.0 * PI * (a / (2.0 * PI)).round()
}

/// `x + 2πk` closest to `target`.
fn lift(x: f64, target: f64) -> f64 {
    x + 2.0 * PI * ((target - x) / (2.0 * PI)).round()
}

/// Raw per-λ data before branch selection.
struct RawAngle {
    lambda: f64,
    theta: f64,
    slope: Option<f64>,
    axis: Vec3,
    axis_defined: bool,
    area: Result<f64>,
}

/// Curve quantities shared by all λ.
struct AngleContext<'a> {
    curve: &'a Curve,
    tangent: CurveField,
    dtangent: CurveField,
    e1: f64,
    e2: f64,
}

impl<'a> AngleContext<'a> {
    fn new(curve: &'a Curve) -> Result<Self> {
        let calc = Calculus::with_stencil(curve, Stencil::Eighth);
        let tangent = calc.tangent();
        let dtangent = calc.d(&tangent);
        let e1 = energy_with(1, &calc, None)?;
        let e2 = energy_with(2, &calc, None)?;
        Ok(Self { curve, tangent, dtangent, e1, e2 })
    }

    fn t_at(&self, i: usize) -> (Vec3, Vec3) {
        let m = self.curve.monodromy();
        (self.tangent.at(i as isize, m), self.dtangent.at(i as isize, m))
    }

    fn raw(&self, lambda: f64) -> RawAngle {
        let frame = integrate_frame(self.curve, C::from(lambda));
        let mono = family_monodromy(&frame, self.curve);
        let (theta, axis) = mono.rotation_angle();
        let b = frame.basepoint;
        let t0 = self.t_at(b).0;
        let (axis, axis_defined, theta) = match axis {
            Some(u) if u.dot(&t0) < 0.0 => (-u, true, -theta),
            Some(u) => (u, true, theta),
            None => (t0, false, theta),
        };
        // dθ/dλ = −2 ∂_λc / sin(θ/2) with c = Tr Ã / 2.
        let dc = 0.5 * trace(&mono.d_rotation).re;
        let sin_half = (0.5 * theta).sin();
        let slope = (sin_half.abs() > 1e-6).then(|| -2.0 * dc / sin_half);
        let area = self.sector_area(&frame, &axis);
        RawAngle { lambda, theta, slope, axis, axis_defined, area }
    }

    /// `∫ det(Y, T, T′)/(1 + (Y, T)) dx` with `Y(x) = F(x)⁻¹ Y(x₀) F(x)`.
    fn sector_area(&self, frame: &FrameTrajectory, axis: &Vec3) -> Result<f64> {
        let y0 = complexify(axis);
        let n = self.curve.n();
        let mut sum = 0.0;
        for j in 0..n {
            let y = real(&ad(&inverse(&frame.f[j]), &y0));
            let (t, dt) = self.t_at(frame.basepoint + j);
            let den = 1.0 + y.dot(&t);
            if den < 1e-8 {
                return Err(Error::SingularSector { index: j, value: den });
            }
            sum += y.dot(&t.cross(&dt)) / den;
        }
        Ok(sum * self.curve.seg_len())
    }

    fn finish(&self, r: &RawAngle, theta: f64) -> MonodromyAngle {
        let area = r.area.as_ref().ok().copied();
        let residual = area.map(|a| wrap_pi(theta - r.lambda * self.e1 - self.e2 - a));
        MonodromyAngle { lambda: r.lambda, theta, axis: r.axis, axis_defined: r.axis_defined, area, gauss_bonnet_residual: residual }
    }

    fn anchor(&self, r: &RawAngle) -> f64 {
        r.lambda * self.e1 + self.e2 + r.area.as_ref().copied().unwrap_or(0.0)
    }
}

/// `θ_λ` at one λ, on the branch of `λE₁ + E₂ + Area_λ`.
pub fn monodromy_angle(curve: &Curve, lambda: f64) -> Result<MonodromyAngle> {
    let ctx = AngleContext::new(curve)?;
    let r = ctx.raw(lambda);
    Ok(ctx.finish(&r, lift(r.theta, ctx.anchor(&r))))
}

/// `θ_λ` over sorted real λ. The branch is anchored at the largest λ and
/// continued downward with the trapezoidal prediction from `dθ/dλ`.
pub fn monodromy_angle_scan(curve: &Curve, lambdas: &[f64]) -> Result<Vec<MonodromyAngle>> {
    if lambdas.is_empty() {
        return Ok(Vec::new());
    }
    if lambdas.iter().any(|l| !l.is_finite()) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("λ grid must be finite and strictly increasing".into()));
    }
    let ctx = AngleContext::new(curve)?;
    let raw: Vec<RawAngle> = lambdas.par_iter().map(|&l| ctx.raw(l)).collect();
    let mut theta = vec![0.0; raw.len()];
    let last = raw.len() - 1;
    theta[last] = lift(raw[last].theta, ctx.anchor(&raw[last]));
    for i in (0..last).rev() {
        let (hi, lo) = (&raw[i + 1], &raw[i]);
        let slope = match (hi.slope, lo.slope) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => ctx.e1,
        };
        theta[i] = lift(lo.theta, theta[i + 1] + slope * (lo.lambda - hi.lambda));
    }
    Ok(raw.iter().zip(theta).map(|(r, t)| ctx.finish(r, t)).collect())
}

/// Logarithmic grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Fitted coefficients of `θ_λ = Σ_k E_k λ^{2−k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianFit {
    /// `E_0 … E_kmax`.
    pub energies: Vec<f64>,
    /// Condition number of the column-normalized weighted design matrix.
    pub condition: f64,
    /// Weighted RMS residual of the fit.
    pub rms_residual: f64,
    pub scan: Vec<MonodromyAngle>,
}

impl HamiltonianFit {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.energies.get(k).copied()
    }
}

/// Condition numbers beyond this are reported as ill-conditioned.
pub const MAX_FIT_CONDITION: f64 = 1e13;

/// Default contour for [`hamiltonians_from_contour`].
pub const CONTOUR_RADIUS: f64 = 16.0;
pub const CONTOUR_POINTS: usize = 256;

/// Least-squares fit of `θ_λ` on `λ^{2−k}`, `k = 0 … kmax + 3` (the extra
/// columns absorb the truncated tail), rows weighted by `λ^{kmax}`.
pub fn hamiltonians_from_angle(curve: &Curve, lambda_grid: &[f64], kmax: usize) -> Result<HamiltonianFit> {
    if kmax > 6 {
        return Err(Error::OutOfRange { k: kmax as i32, min: 0, max: 6 });
    }
    if lambda_grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput("λ grid must be positive".into()));
    }
    let scan = monodromy_angle_scan(curve, lambda_grid)?;
    let cols = kmax + 4;
    if lambda_grid.len() < cols {
        return Err(Error::InvalidInput(format!("need at least {cols} λ values for kmax = {kmax}")));
    }
    let rows = scan.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DVector::<f64>::zeros(rows);
    for (i, s) in scan.iter().enumerate() {
        let w = s.lambda.powi(kmax as i32);
        for k in 0..cols {
            a[(i, k)] = w * s.lambda.powi(2 - k as i32);
        }
        y[i] = w * s.theta;
    }
    let norms: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    for k in 0..cols {
        a.column_mut(k).scale_mut(1.0 / norms[k]);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > MAX_FIT_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let x = svd.solve(&y, 0.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let rms_residual = ((&a * &x - &y).norm_squared() / rows as f64).sqrt();
    let energies = (0..=kmax).map(|k| x[k] / norms[k]).collect();
    Ok(HamiltonianFit { energies, condition, rms_residual, scan })
}

/// Laurent coefficients of `θ_λ` read off a circle `|λ| = R` in the complex plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourFit {
    /// `E_0 … E_kmax` (real parts).
    pub energies: Vec<f64>,
    /// Largest imaginary part among the returned coefficients.
    pub max_imag: f64,
    /// Mismatch of the predicted branch on returning to the real axis;
    /// values near `2π` signal a branch error.
    pub closure_defect: f64,
}

impl ContourFit {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.energies.get(k).copied()
    }
}

/// `θ` and `dθ/dλ` from the `SL₂ℂ` monodromy at complex λ, with
/// `cos(θ/2) = Tr Ã/2`. `e^{iθ/2} = c + √(c² − 1)` takes the root of larger
/// modulus, which avoids cancellation when `|c|` is large.
fn complex_angle(curve: &Curve, lambda: C) -> (C, C) {
    let frame = integrate_frame(curve, lambda);
    let m = family_monodromy(&frame, curve);
    let c = trace(&m.rotation) * 0.5;
    let dc = trace(&m.d_rotation) * 0.5;
    let mut r = (c * c - 1.0).sqrt();
    if (c + r).norm() < (c - r).norm() {
        r = -r;
    }
    let half = (c + r).ln() * C::new(0.0, -1.0);
    // sin(θ/2) = −i r.
    let slope = dc * C::new(0.0, -2.0) / r;
    (half * 2.0, slope)
}

/// `E_k = (1/2πi) ∮ θ_λ λ^{k−3} dλ` by the trapezoidal rule on `points`
/// nodes of `|λ| = radius`. The branch of `θ` starts from the real-axis
/// value at `λ = radius` and is continued with trapezoidal predictions
/// from `dθ/dλ`, choosing among `±θ + 2πk`. The radius must exceed the
/// singularities of `θ_λ`; the error then decays geometrically in `points`.
/// Unlike the real-axis fit this stays well conditioned for every `k`.
pub fn hamiltonians_from_contour(curve: &Curve, radius: f64, points: usize, kmax: usize) -> Result<ContourFit> {
    if !(radius.is_finite() && radius > 0.0) || points < 2 * (kmax + 1) {
        return Err(Error::InvalidInput(format!("need radius > 0 and at least {} points", 2 * (kmax + 1))));
    }
    // Half-step offset keeps the nodes off the real axis, where θ can cross 2πℤ.
    let nodes: Vec<C> =
        (0..points).map(|j| C::from_polar(radius, 2.0 * PI * (j as f64 + 0.5) / points as f64)).collect();
    let raw: Vec<(C, C)> = nodes.par_iter().map(|&l| complex_angle(curve, l)).collect();
    let real_axis = monodromy_angle(curve, radius)?;
    let (_, d_r) = complex_angle(curve, C::from(radius));
    // On the real axis θ increases like λE₁; that fixes the sign of the slope.
    let d_r = if d_r.is_finite() { C::from(d_r.re.abs()) } else { C::from(AngleContext::new(curve)?.e1) };
    // Candidate σθ₀ + 2πk has slope σθ₀′.
    let pick = |(t0, d0): (C, C), pred: C| -> (C, C) {
        [(t0, d0), (-t0, -d0)]
            .iter()
            .map(|(t, d)| (t + 2.0 * PI * ((pred - t).re / (2.0 * PI)).round(), *d))
            .min_by(|a, b| (a.0 - pred).norm().total_cmp(&(b.0 - pred).norm()))
            .expect("two candidates")
    };
    let step = |from: (C, C), l0: C, l1: C, to: (C, C)| {
        let dl = l1 - l0;
        let euler = pick(to, from.0 + from.1 * dl);
        pick(to, from.0 + (from.1 + euler.1) * 0.5 * dl)
    };
    let start = (C::from(real_axis.theta), d_r);
    let mut theta = Vec::with_capacity(points);
    let mut cur = step(start, C::from(radius), nodes[0], raw[0]);
    theta.push(cur.0);
    for j in 1..points {
        cur = step(cur, nodes[j - 1], nodes[j], raw[j]);
        theta.push(cur.0);
    }
    let back = cur.0 + (cur.1 + start.1) * 0.5 * (C::from(radius) - nodes[points - 1]);
    let closure_defect = (back - start.0).norm();
    let coeffs: Vec<C> = (0..=kmax)
        .map(|k| {
            let sum: C = (0..points).map(|j| theta[j] * nodes[j].powi(k as i32 - 2)).sum();
            sum / points as f64
        })
        .collect();
    Ok(ContourFit {
        energies: coeffs.iter().map(|c| c.re).collect(),
        max_imag: coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max),
        closure_defect,
    })
}

/// `(E₂(γ_λ), E₂(γ) + λE₁(γ))`; the first value is taken on the branch
/// nearest the second, since `E₂` of a curve with rotation monodromy is an
/// angle.
pub fn torsion_shift_check(curve: &Curve, lambda: f64) -> Result<(f64, f64)> {
    let calc = Calculus::new(curve);
    let target = energy_with(2, &calc, None)? + lambda * energy_with(1, &calc, None)?;
    let assoc = associated_curve(curve, lambda)?;
    let e2 = energy_with(2, &Calculus::new(&assoc), None)?;
    Ok((lift(e2, target), target))
}

/// `Area_λ` with the monodromy axis transported along the frame.
pub fn spherical_sector_area(curve: &Curve, lambda: f64) -> Result<f64> {
    AngleContext::new(curve)?.raw(lambda).area
}
